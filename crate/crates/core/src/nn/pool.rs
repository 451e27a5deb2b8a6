use crate::tensor::Tensor;

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Ties route the gradient to the first maximum in scan order.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2d {
    argmax: Vec<usize>,
    input_shape: [usize; 4],
}

impl MaxPool2d {
    pub fn forward(&mut self, x: Tensor) -> Tensor {
        let [n, c, h, w] = x.shape;
        let (oh, ow) = (h / 2, w / 2);
        self.input_shape = x.shape;
        let mut y = Tensor::zeros([n, c, oh, ow]);
        self.argmax.clear();
        self.argmax.reserve(y.data.len());
        let mut out = 0;
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let k = base + (2 * i + di) * w + 2 * j + dj;
                        if x.data[k] > x.data[best] {
                            best = k;
                        }
                    }
                    y.data[out] = x.data[best];
                    self.argmax.push(best);
                    out += 1;
                }
            }
        }
        y
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        let mut dx = Tensor::zeros(self.input_shape);
        for (g, &k) in dy.data.iter().zip(&self.argmax) {
            dx.data[k] += g;
        }
        dx
    }
}

/// Spatial mean per channel: `[n, c, h, w] → [n, c, 1, 1]`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: [usize; 4],
}

impl GlobalAvgPool {
    pub fn forward(&mut self, x: Tensor) -> Tensor {
        let [n, c, h, w] = x.shape;
        self.input_shape = x.shape;
        let hw = h * w;
        let data = x.data.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
        Tensor::from_vec([n, c, 1, 1], data)
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        let [_, _, h, w] = self.input_shape;
        let hw = h * w;
        let mut dx = Tensor::zeros(self.input_shape);
        for (plane, g) in dx.data.chunks_mut(hw).zip(&dy.data) {
            plane.fill(g / hw as f64);
        }
        dx
    }
}
