use super::{Buffer, Mode, Param};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization with running averages.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Buffer,
    pub running_var: Buffer,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: [usize; 4],
    mode: Option<Mode>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        let mut gamma = Param::zeros("gamma", vec![channels]);
        gamma.value.fill(1.0);
        Self {
            channels,
            gamma,
            beta: Param::zeros("beta", vec![channels]),
            running_mean: Buffer {
                name: "running_mean".into(),
                value: vec![0.0; channels],
            },
            running_var: Buffer {
                name: "running_var".into(),
                value: vec![1.0; channels],
            },
            xhat: Vec::new(),
            inv_std: Vec::new(),
            shape: [0; 4],
            mode: None,
        }
    }

    pub fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        let [n, c, h, w] = x.shape;
        assert_eq!(c, self.channels, "batch-norm channels");
        let hw = h * w;
        let count = (n * hw) as f64;
        self.shape = x.shape;
        self.mode = Some(mode);
        self.inv_std.resize(c, 0.0);
        self.xhat.resize(x.data.len(), 0.0);

        for ch in 0..c {
            let (mean, inv_std) = match mode {
                Mode::Train => {
                    let mut sum = 0.0;
                    for b in 0..n {
                        sum += x.data[(b * c + ch) * hw..][..hw].iter().sum::<f64>();
                    }
                    let mean = sum / count;
                    let mut sq = 0.0;
                    for b in 0..n {
                        sq += x.data[(b * c + ch) * hw..][..hw]
                            .iter()
                            .map(|v| (v - mean) * (v - mean))
                            .sum::<f64>();
                    }
                    let var = sq / count;
                    let unbiased = if count > 1.0 { sq / (count - 1.0) } else { var };
                    self.running_mean.value[ch] =
                        (1.0 - BN_MOMENTUM) * self.running_mean.value[ch] + BN_MOMENTUM * mean;
                    self.running_var.value[ch] =
                        (1.0 - BN_MOMENTUM) * self.running_var.value[ch] + BN_MOMENTUM * unbiased;
                    (mean, 1.0 / (var + BN_EPS).sqrt())
                }
                Mode::Eval => (
                    self.running_mean.value[ch],
                    1.0 / (self.running_var.value[ch] + BN_EPS).sqrt(),
                ),
            };
            self.inv_std[ch] = inv_std;
            let (g, bta) = (self.gamma.value[ch], self.beta.value[ch]);
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for k in off..off + hw {
                    let xh = (x.data[k] - mean) * inv_std;
                    self.xhat[k] = xh;
                    x.data[k] = g * xh + bta;
                }
            }
        }
        x
    }

    pub fn backward(&mut self, mut dy: Tensor) -> Tensor {
        let [n, c, h, w] = self.shape;
        assert_eq!(dy.shape, self.shape, "batch-norm upstream shape");
        let hw = h * w;
        let count = (n * hw) as f64;
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for k in off..off + hw {
                    sum_dy += dy.data[k];
                    sum_dy_xhat += dy.data[k] * self.xhat[k];
                }
            }
            self.beta.grad[ch] += sum_dy;
            self.gamma.grad[ch] += sum_dy_xhat;
            let scale = self.gamma.value[ch] * self.inv_std[ch];
            match self.mode {
                Some(Mode::Train) => {
                    let mean_dy = sum_dy / count;
                    let mean_dy_xhat = sum_dy_xhat / count;
                    for b in 0..n {
                        let off = (b * c + ch) * hw;
                        for k in off..off + hw {
                            dy.data[k] = scale * (dy.data[k] - mean_dy - self.xhat[k] * mean_dy_xhat);
                        }
                    }
                }
                Some(Mode::Eval) => {
                    for b in 0..n {
                        let off = (b * c + ch) * hw;
                        dy.data[off..off + hw].iter_mut().for_each(|g| *g *= scale);
                    }
                }
                None => panic!("batch-norm backward before forward"),
            }
        }
        dy
    }
}
