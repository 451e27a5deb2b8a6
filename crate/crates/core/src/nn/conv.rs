use rand::Rng;

use super::Param;
use crate::tensor::Tensor;

const K: usize = 3;

/// 3×3 convolution, stride 1, zero padding 1, lowered to GEMM via im2col.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in·9]`
    pub weight: Param,
    pub bias: Param,
    cols: Vec<f64>,
    input_shape: [usize; 4],
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_channels * K * K;
        Self {
            in_channels,
            out_channels,
            weight: Param::he_uniform("weight", vec![out_channels, in_channels, K, K], fan_in, rng),
            bias: Param::zeros("bias", vec![out_channels]),
            cols: Vec::new(),
            input_shape: [0; 4],
        }
    }

    pub fn forward(&mut self, x: Tensor) -> Tensor {
        let [n, c, h, w] = x.shape;
        assert_eq!(c, self.in_channels, "conv input channels");
        let hw = h * w;
        let kdim = c * K * K;
        self.input_shape = x.shape;
        self.cols.resize(n * kdim * hw, 0.0);
        for b in 0..n {
            im2col(x.item(b), c, h, w, &mut self.cols[b * kdim * hw..(b + 1) * kdim * hw]);
        }

        let o = self.out_channels;
        let mut y = Tensor::zeros([n, o, h, w]);
        for b in 0..n {
            let out = &mut y.data[b * o * hw..(b + 1) * o * hw];
            for (oc, row) in out.chunks_mut(hw).enumerate() {
                row.fill(self.bias.value[oc]);
            }
            let cols = &self.cols[b * kdim * hw..(b + 1) * kdim * hw];
            // out (o × hw) += W (o × kdim) · cols (kdim × hw)
            unsafe {
                matrixmultiply::dgemm(
                    o,
                    kdim,
                    hw,
                    1.0,
                    self.weight.value.as_ptr(),
                    kdim as isize,
                    1,
                    cols.as_ptr(),
                    hw as isize,
                    1,
                    1.0,
                    out.as_mut_ptr(),
                    hw as isize,
                    1,
                );
            }
        }
        y
    }

    pub fn backward(&mut self, dy: Tensor) -> Tensor {
        let [n, c, h, w] = self.input_shape;
        let hw = h * w;
        let kdim = c * K * K;
        let o = self.out_channels;
        assert_eq!(dy.shape, [n, o, h, w], "conv upstream shape");

        let mut dx = Tensor::zeros(self.input_shape);
        let mut dcols = vec![0.0; kdim * hw];
        for b in 0..n {
            let g = &dy.data[b * o * hw..(b + 1) * o * hw];
            for (oc, row) in g.chunks(hw).enumerate() {
                self.bias.grad[oc] += row.iter().sum::<f64>();
            }
            let cols = &self.cols[b * kdim * hw..(b + 1) * kdim * hw];
            // dW (o × kdim) += dY (o × hw) · colsᵀ (hw × kdim)
            unsafe {
                matrixmultiply::dgemm(
                    o,
                    hw,
                    kdim,
                    1.0,
                    g.as_ptr(),
                    hw as isize,
                    1,
                    cols.as_ptr(),
                    1,
                    hw as isize,
                    1.0,
                    self.weight.grad.as_mut_ptr(),
                    kdim as isize,
                    1,
                );
                // dcols (kdim × hw) = Wᵀ (kdim × o) · dY (o × hw)
                matrixmultiply::dgemm(
                    kdim,
                    o,
                    hw,
                    1.0,
                    self.weight.value.as_ptr(),
                    1,
                    kdim as isize,
                    g.as_ptr(),
                    hw as isize,
                    1,
                    0.0,
                    dcols.as_mut_ptr(),
                    hw as isize,
                    1,
                );
            }
            col2im(&dcols, c, h, w, &mut dx.data[b * c * hw..(b + 1) * c * hw]);
        }
        dx
    }
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut cols[((ch * K + ky) * K + kx) * hw..][..hw];
                for y in 0..h {
                    let iy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, dx: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut dx[ch * hw..(ch + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &cols[((ch * K + ky) * K + kx) * hw..][..hw];
                for y in 0..h {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct 7-loop convolution.
    fn naive(x: &Tensor, conv: &Conv2d) -> Tensor {
        let [n, c, h, w] = x.shape;
        let o = conv.out_channels;
        let mut y = Tensor::zeros([n, o, h, w]);
        for b in 0..n {
            for oc in 0..o {
                for i in 0..h {
                    for j in 0..w {
                        let mut acc = conv.bias.value[oc];
                        for ic in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let (iy, ix) = (i as isize + ky as isize - 1, j as isize + kx as isize - 1);
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let wv = conv.weight.value[((oc * c + ic) * 3 + ky) * 3 + kx];
                                    acc += wv * x.data[((b * c + ic) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        y.data[((b * o + oc) * h + i) * w + j] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new(3, 4, &mut rng);
        conv.bias.value = vec![0.1, -0.2, 0.3, 0.0];
        let x = Tensor::from_vec([2, 3, 5, 6], (0..180).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let fast = conv.forward(x.clone());
        let slow = naive(&x, &conv);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new(1, 2, &mut rng);
        conv.weight.value.fill(0.0);
        let y = conv.forward(Tensor::from_vec([1, 1, 3, 3], vec![1.0; 9]));
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    use rand::Rng;
}
