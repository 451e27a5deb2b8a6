use rand::Rng;

use super::Param;
use crate::tensor::Tensor;

/// Fully connected layer on `[n, in, 1, 1]` inputs.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]`
    pub weight: Param,
    pub bias: Param,
    input: Vec<f64>,
    batch: usize,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::he_uniform("weight", vec![out_features, in_features], in_features, rng),
            bias: Param::zeros("bias", vec![out_features]),
            input: Vec::new(),
            batch: 0,
        }
    }

    /// All-zero weights and bias.
    pub fn zeroed(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::zeros("weight", vec![out_features, in_features]),
            bias: Param::zeros("bias", vec![out_features]),
            input: Vec::new(),
            batch: 0,
        }
    }

    pub fn forward(&mut self, x: Tensor) -> Tensor {
        let n = x.batch();
        assert_eq!(x.item_len(), self.in_features, "linear input width");
        let (i, o) = (self.in_features, self.out_features);
        self.batch = n;
        self.input = x.data;
        let mut y = Tensor::zeros([n, o, 1, 1]);
        for out in y.data.chunks_mut(o) {
            out.copy_from_slice(&self.bias.value);
        }
        unsafe {
            // y (n × o) += x (n × i) · Wᵀ (i × o)
            matrixmultiply::dgemm(
                n,
                i,
                o,
                1.0,
                self.input.as_ptr(),
                i as isize,
                1,
                self.weight.value.as_ptr(),
                1,
                i as isize,
                1.0,
                y.data.as_mut_ptr(),
                o as isize,
                1,
            );
        }
        y
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        let (n, i, o) = (self.batch, self.in_features, self.out_features);
        assert_eq!(dy.data.len(), n * o, "linear upstream shape");
        for row in dy.data.chunks(o) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros([n, i, 1, 1]);
        unsafe {
            // dW (o × i) += dyᵀ (o × n) · x (n × i)
            matrixmultiply::dgemm(
                o,
                n,
                i,
                1.0,
                dy.data.as_ptr(),
                1,
                o as isize,
                self.input.as_ptr(),
                i as isize,
                1,
                1.0,
                self.weight.grad.as_mut_ptr(),
                i as isize,
                1,
            );
            // dx (n × i) = dy (n × o) · W (o × i)
            matrixmultiply::dgemm(
                n,
                o,
                i,
                1.0,
                dy.data.as_ptr(),
                o as isize,
                1,
                self.weight.value.as_ptr(),
                i as isize,
                1,
                0.0,
                dx.data.as_mut_ptr(),
                i as isize,
                1,
            );
        }
        dx
    }
}
