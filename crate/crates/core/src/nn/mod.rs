//! Minimal layer stack with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`; a
//! `backward` call must follow the matching `forward` on the same batch.

mod conv;
mod linear;
mod norm;
mod pool;

pub use conv::Conv2d;
pub use linear::Linear;
pub use norm::BatchNorm2d;
pub use pool::{GlobalAvgPool, MaxPool2d};

use rand::Rng;

use crate::tensor::Tensor;

/// Batch-norm behaviour for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running averages are updated.
    Train,
    /// Running averages; nothing is updated.
    Eval,
}

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            value: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    /// Uniform He-style initialisation: `U(−√(6/fan_in), √(6/fan_in))`.
    pub fn he_uniform(name: impl Into<String>, shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(name, shape);
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in &mut p.value {
            *v = rng.gen_range(-bound..bound);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Named non-trainable state (batch-norm running statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    pub name: String,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    BatchNorm(BatchNorm2d),
    Relu(Relu),
    MaxPool(MaxPool2d),
    GlobalAvgPool(GlobalAvgPool),
    Flatten(Flatten),
    Linear(Linear),
}

impl Layer {
    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Tensor {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Relu(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::GlobalAvgPool(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Linear(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        match self {
            Layer::Conv(l) => l.backward(dy),
            Layer::BatchNorm(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::MaxPool(l) => l.backward(dy),
            Layer::GlobalAvgPool(l) => l.backward(dy),
            Layer::Flatten(l) => l.backward(dy),
            Layer::Linear(l) => l.backward(dy),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn buffers(&self) -> Vec<&Buffer> {
        match self {
            Layer::BatchNorm(l) => vec![&l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        match self {
            Layer::BatchNorm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward(&mut self, mut x: Tensor) -> Tensor {
        self.mask.clear();
        self.mask.reserve(x.data.len());
        for v in &mut x.data {
            let on = *v > 0.0;
            self.mask.push(on);
            if !on {
                *v = 0.0;
            }
        }
        x
    }

    pub fn backward(&mut self, mut dy: Tensor) -> Tensor {
        for (g, &on) in dy.data.iter_mut().zip(&self.mask) {
            if !on {
                *g = 0.0;
            }
        }
        dy
    }
}

#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: [usize; 4],
}

impl Flatten {
    pub fn forward(&mut self, x: Tensor) -> Tensor {
        self.input_shape = x.shape;
        let [n, c, h, w] = x.shape;
        x.reshape([n, c * h * w, 1, 1])
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        dy.reshape(self.input_shape)
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        for layer in &mut self.layers {
            x = layer.forward(x, mode);
        }
        x
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, mut dy: Tensor) -> Tensor {
        for layer in self.layers.iter_mut().rev() {
            dy = layer.backward(dy);
        }
        dy
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn buffers(&self) -> Vec<&Buffer> {
        self.layers.iter().flat_map(Layer::buffers).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        self.layers.iter_mut().flat_map(Layer::buffers_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Order-sensitive FNV-1a digest over every parameter and buffer bit.
    pub fn state_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let values = self
            .params()
            .into_iter()
            .map(|p| &p.value)
            .chain(self.buffers().into_iter().map(|b| &b.value));
        for vals in values {
            for v in vals {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}
