//! The augmentation adversary: a small conv net that maps each support image
//! to a bounded rotation / scale / translation, turned into an affine warp.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{identity_reg_loss, AffineMatrix};
use crate::nn::{Conv2d, GlobalAvgPool, Layer, Linear, MaxPool2d, Mode, Relu, Sequential};
use crate::sampler::Image;
use crate::tensor::Tensor;

/// Rotation (radians), scale, and translations in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub theta: f64,
    pub s: f64,
    pub px: f64,
    pub py: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        theta: 0.0,
        s: 1.0,
        px: 0.0,
        py: 0.0,
    };

    pub fn within(&self, bounds: &AdversaryBounds) -> bool {
        self.theta.abs() <= bounds.theta0
            && self.s >= 1.0 - bounds.eps_s
            && self.s <= 1.0 + bounds.eps_s
            && self.px.abs() <= bounds.translate
            && self.py.abs() <= bounds.translate
    }

    /// Independent uniform draws over the bounded box.
    pub fn sample_uniform(bounds: &AdversaryBounds, rng: &mut impl Rng) -> Self {
        let mut draw = |half: f64| {
            let u: f64 = rng.gen();
            (2.0 * u - 1.0) * half
        };
        AugmentParams {
            theta: draw(bounds.theta0),
            s: 1.0 + draw(bounds.eps_s),
            px: draw(bounds.translate),
            py: draw(bounds.translate),
        }
    }
}

/// Half-ranges of the augmentation box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryBounds {
    pub theta0: f64,
    pub eps_s: f64,
    /// Pixels.
    pub translate: f64,
}

impl AdversaryBounds {
    /// `θ₀ = π`, `ε_s = 0.1`, `T = 0.1·max(H, W)`.
    pub fn for_image(height: usize, width: usize) -> Self {
        Self {
            theta0: std::f64::consts::PI,
            eps_s: 0.1,
            translate: 0.1 * height.max(width) as f64,
        }
    }

    pub fn zero() -> Self {
        Self {
            theta0: 0.0,
            eps_s: 0.0,
            translate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("theta0", self.theta0),
            ("eps_s", self.eps_s),
            ("translate", self.translate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    key,
                    format!("bound must be finite and non-negative, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Maps raw network outputs through scaled `tanh` into the bounded box.
pub fn bound_params(raw: [f64; 4], bounds: &AdversaryBounds) -> AugmentParams {
    AugmentParams {
        theta: bounds.theta0 * raw[0].tanh(),
        s: 1.0 + bounds.eps_s * raw[1].tanh(),
        px: bounds.translate * raw[2].tanh(),
        py: bounds.translate * raw[3].tanh(),
    }
}

/// Chain rule through [`bound_params`].
pub fn bound_params_backward(raw: [f64; 4], bounds: &AdversaryBounds, grad: [f64; 4]) -> [f64; 4] {
    let scale = [bounds.theta0, bounds.eps_s, bounds.translate, bounds.translate];
    std::array::from_fn(|k| {
        let t = raw[k].tanh();
        grad[k] * scale[k] * (1.0 - t * t)
    })
}

/// `[[s cos θ, −s sin θ, pₓ], [s sin θ, s cos θ, p_y]]` with the
/// translations converted from pixels to normalized units.
pub fn params_to_affine(p: &AugmentParams, height: usize, width: usize) -> AffineMatrix {
    let (sin, cos) = p.theta.sin_cos();
    AffineMatrix([
        [p.s * cos, -p.s * sin, p.px / half_extent(width)],
        [p.s * sin, p.s * cos, p.py / half_extent(height)],
    ])
}

/// Gradient with respect to `(θ, s, pₓ, p_y)` given `d/d(a1..a6)`.
pub fn params_to_affine_backward(p: &AugmentParams, height: usize, width: usize, grad: [f64; 6]) -> [f64; 4] {
    let (sin, cos) = p.theta.sin_cos();
    let d_theta = grad[0] * (-p.s * sin) + grad[1] * (-p.s * cos) + grad[3] * (p.s * cos) + grad[4] * (-p.s * sin);
    let d_s = grad[0] * cos - grad[1] * sin + grad[3] * sin + grad[4] * cos;
    [
        d_theta,
        d_s,
        grad[2] / half_extent(width),
        grad[5] / half_extent(height),
    ]
}

fn half_extent(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

/// What the adversary predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdversaryOutput {
    /// Bounded rotation, scale and translation.
    Similarity,
    /// Six unconstrained entries added to the identity (experimental).
    FullAffine,
}

impl AdversaryOutput {
    pub fn raw_len(&self) -> usize {
        match self {
            AdversaryOutput::Similarity => 4,
            AdversaryOutput::FullAffine => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub output: AdversaryOutput,
    pub bounds: AdversaryBounds,
}

impl AdversaryConfig {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            in_channels: 1,
            height,
            width,
            filters: 16,
            output: AdversaryOutput::Similarity,
            bounds: AdversaryBounds::for_image(height, width),
        }
    }
}

/// One support image's prediction, kept for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub raw: [f64; 6],
    pub params: Option<AugmentParams>,
    pub affine: AffineMatrix,
}

/// `2 × [conv3×3 → ReLU → maxpool2×2] → global average pool → linear`.
#[derive(Debug, Clone)]
pub struct AdversaryNet {
    pub config: AdversaryConfig,
    pub net: Sequential,
}

impl AdversaryNet {
    /// Output layer starts at zero, so the initial prediction is the
    /// identity warp for every image.
    pub fn new(config: AdversaryConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::with_random_head(config, rng)?;
        if let Some(Layer::Linear(head)) = net.net.layers.last_mut() {
            *head = Linear::zeroed(config.filters, config.output.raw_len());
        }
        Ok(net)
    }

    /// All layers randomly initialised.
    pub fn with_random_head(config: AdversaryConfig, rng: &mut impl Rng) -> Result<Self> {
        config.bounds.validate()?;
        if config.height < 4 || config.width < 4 {
            return Err(Error::config("image_size", "adversary needs at least 4x4 inputs"));
        }
        let f = config.filters;
        let layers = vec![
            Layer::Conv(Conv2d::new(config.in_channels, f, rng)),
            Layer::Relu(Relu::default()),
            Layer::MaxPool(MaxPool2d::default()),
            Layer::Conv(Conv2d::new(f, f, rng)),
            Layer::Relu(Relu::default()),
            Layer::MaxPool(MaxPool2d::default()),
            Layer::GlobalAvgPool(GlobalAvgPool::default()),
            Layer::Linear(Linear::new(f, config.output.raw_len(), rng)),
        ];
        Ok(Self {
            config,
            net: Sequential::new(layers),
        })
    }

    pub fn raw_outputs(&mut self, images: &[&Image]) -> Vec<Vec<f64>> {
        self.net
            .forward(Tensor::from_images(images.iter().copied()), Mode::Train)
            .rows()
    }

    /// Forward pass for a batch of support images.
    pub fn predict(&mut self, images: &[&Image]) -> Vec<Prediction> {
        let (h, w) = (self.config.height, self.config.width);
        self.raw_outputs(images)
            .into_iter()
            .map(|r| match self.config.output {
                AdversaryOutput::Similarity => {
                    let params = bound_params([r[0], r[1], r[2], r[3]], &self.config.bounds);
                    Prediction {
                        raw: [r[0], r[1], r[2], r[3], 0.0, 0.0],
                        params: Some(params),
                        affine: params_to_affine(&params, h, w),
                    }
                }
                AdversaryOutput::FullAffine => {
                    let raw: [f64; 6] = std::array::from_fn(|k| r[k]);
                    let id = AffineMatrix::IDENTITY.entries();
                    Prediction {
                        raw,
                        params: None,
                        affine: AffineMatrix::from_entries(std::array::from_fn(|k| id[k] + raw[k])),
                    }
                }
            })
            .collect()
    }

    /// Backpropagates `d objective / d affine` for each prediction of the
    /// last [`predict`](Self::predict) call into the parameter gradients.
    pub fn backward(&mut self, predictions: &[Prediction], affine_grads: &[[f64; 6]]) {
        let (h, w) = (self.config.height, self.config.width);
        let k = self.config.output.raw_len();
        let mut d_raw = Vec::with_capacity(predictions.len() * k);
        for (pred, g) in predictions.iter().zip(affine_grads) {
            match (self.config.output, pred.params) {
                (AdversaryOutput::Similarity, Some(params)) => {
                    let dp = params_to_affine_backward(&params, h, w, *g);
                    let raw = [pred.raw[0], pred.raw[1], pred.raw[2], pred.raw[3]];
                    d_raw.extend(bound_params_backward(raw, &self.config.bounds, dp));
                }
                _ => d_raw.extend_from_slice(&g[..k]),
            }
        }
        self.net.backward(Tensor::from_vec([predictions.len(), k, 1, 1], d_raw));
    }

    pub fn zero_grad(&mut self) {
        self.net.zero_grad();
    }
}

/// Bounded parameters for one image.
pub fn predict_params(net: &mut AdversaryNet, img: &Image) -> AugmentParams {
    let r = &net.raw_outputs(&[img])[0];
    bound_params([r[0], r[1], r[2], r[3]], &net.config.bounds)
}

/// Replaces each matrix by the identity with probability `rate`, one uniform
/// draw per matrix in batch order. Returns the matrices and the drop mask.
pub fn stn_dropout(matrices: &[AffineMatrix], rate: f64, rng: &mut impl Rng) -> (Vec<AffineMatrix>, Vec<bool>) {
    let draws: Vec<f64> = matrices.iter().map(|_| rng.gen::<f64>()).collect();
    apply_dropout(matrices, rate, &draws)
}

/// [`stn_dropout`] with explicit uniforms in `[0, 1)`.
pub fn apply_dropout(matrices: &[AffineMatrix], rate: f64, uniforms: &[f64]) -> (Vec<AffineMatrix>, Vec<bool>) {
    assert!((0.0..=1.0).contains(&rate), "dropout rate {rate} outside [0, 1]");
    matrices
        .iter()
        .zip(uniforms)
        .map(|(m, &u)| {
            if u < rate {
                (AffineMatrix::IDENTITY, true)
            } else {
                (*m, false)
            }
        })
        .unzip()
}

/// `L − λ·Σ‖Aⱼ − I‖²`: what the adversary ascends.
pub fn adversary_objective(cls_loss: f64, matrices: &[AffineMatrix], lambda: f64) -> f64 {
    cls_loss - lambda * regularizer_sum(matrices)
}

pub fn regularizer_sum(matrices: &[AffineMatrix]) -> f64 {
    matrices.iter().map(identity_reg_loss).sum()
}
