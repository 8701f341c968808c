//! Convolution and linear layers over batched buffers.
//!
//! Convolution activations use a channel-major batch layout `[C][B][H][W]`
//! so that one GEMM covers the whole batch. Linear activations are
//! `[B][features]`.

use rand::Rng;

use super::gemm::gemm;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Test mode: every nonlinearity becomes the identity.
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, x: &mut [f64]) {
        if self == Activation::Relu {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    /// Zeroes the gradient where the (post-activation) output was clipped.
    pub(crate) fn backprop(self, grad: &mut [f64], out: &[f64]) {
        if self == Activation::Relu {
            for (g, &o) in grad.iter_mut().zip(out) {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

fn uniform_fill(t: &mut Tensor, bound: f64, rng: &mut impl Rng) {
    t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    /// `[out, in, k, k]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
    stride: usize,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Conv2d {
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
            stride,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels() * self.kernel() * self.kernel()
    }

    pub fn init_uniform(&mut self, rng: &mut impl Rng) {
        let bound = 1.0 / (self.fan_in() as f64).sqrt();
        uniform_fill(&mut self.weight, bound, rng);
        uniform_fill(&mut self.bias, bound, rng);
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.kernel();
        if h < k || w < k {
            return None;
        }
        Some(((h - k) / self.stride + 1, (w - k) / self.stride + 1))
    }

    /// Unfolds `[C][B][H][W]` into a `(C*k*k) x (B*Ho*Wo)` patch matrix.
    pub(crate) fn im2col(&self, input: &[f64], batch: usize, h: usize, w: usize) -> Vec<f64> {
        let (c_in, k, s) = (self.in_channels(), self.kernel(), self.stride);
        let (ho, wo) = self.output_dims(h, w).expect("checked by caller");
        let p = ho * wo;
        let n = batch * p;
        let mut cols = vec![0.0; c_in * k * k * n];
        for c in 0..c_in {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for b in 0..batch {
                        let src = &input[(c * batch + b) * h * w..][..h * w];
                        for oy in 0..ho {
                            let line = &src[(oy * s + ky) * w + kx..];
                            let out = &mut dst[b * p + oy * wo..][..wo];
                            for (ox, o) in out.iter_mut().enumerate() {
                                *o = line[ox * s];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Folds a patch-matrix gradient back into `[C][B][H][W]`.
    fn col2im(&self, dcols: &[f64], batch: usize, h: usize, w: usize) -> Vec<f64> {
        let (c_in, k, s) = (self.in_channels(), self.kernel(), self.stride);
        let (ho, wo) = self.output_dims(h, w).expect("checked by caller");
        let p = ho * wo;
        let n = batch * p;
        let mut dx = vec![0.0; c_in * batch * h * w];
        for c in 0..c_in {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &dcols[row * n..(row + 1) * n];
                    for b in 0..batch {
                        let dst = &mut dx[(c * batch + b) * h * w..][..h * w];
                        for oy in 0..ho {
                            let base = (oy * s + ky) * w + kx;
                            for ox in 0..wo {
                                dst[base + ox * s] += src[b * p + oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// `[O][n]` pre-activation from a patch matrix.
    pub(crate) fn forward_cols(&self, cols: &[f64], n: usize) -> Vec<f64> {
        let o = self.out_channels();
        let mut out = vec![0.0; o * n];
        gemm(o, self.fan_in(), n, self.weight.data(), false, cols, false, &mut out, 0.0);
        for (row, &b) in out.chunks_mut(n).zip(self.bias.data()) {
            row.iter_mut().for_each(|v| *v += b);
        }
        out
    }

    /// First-layer forward straight from tile codes `[B][H][W]`: the one-hot
    /// product reduces to summing one weight column per kernel offset.
    pub(crate) fn forward_codes(&self, codes: &[u8], batch: usize, h: usize, w: usize) -> Vec<f64> {
        let (o, k, s) = (self.out_channels(), self.kernel(), self.stride);
        let (ho, wo) = self.output_dims(h, w).expect("checked by caller");
        let n = batch * ho * wo;
        let wt = transpose(self.weight.data(), o, self.fan_in());
        let mut out = vec![0.0; o * n];
        let mut acc = vec![0.0; o];
        for b in 0..batch {
            let img = &codes[b * h * w..][..h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    acc.copy_from_slice(self.bias.data());
                    for ky in 0..k {
                        for kx in 0..k {
                            let code = img[(oy * s + ky) * w + ox * s + kx] as usize;
                            let col = &wt[((code * k + ky) * k + kx) * o..][..o];
                            acc.iter_mut().zip(col).for_each(|(a, c)| *a += c);
                        }
                    }
                    let j = (b * ho + oy) * wo + ox;
                    for (ch, &a) in acc.iter().enumerate() {
                        out[ch * n + j] = a;
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients from a patch matrix; returns the
    /// input gradient when `input_dims` is given.
    pub(crate) fn backward_cols(
        &self,
        cols: &[f64],
        dout: &[f64],
        batch: usize,
        input_dims: Option<(usize, usize)>,
        gw: &mut Tensor,
        gb: &mut Tensor,
    ) -> Option<Vec<f64>> {
        let (o, f) = (self.out_channels(), self.fan_in());
        let n = dout.len() / o;
        gemm(o, n, f, dout, false, cols, true, gw.data_mut(), 1.0);
        add_row_sums(dout, n, gb);
        input_dims.map(|(h, w)| {
            let mut dcols = vec![0.0; f * n];
            gemm(f, o, n, self.weight.data(), true, dout, false, &mut dcols, 0.0);
            self.col2im(&dcols, batch, h, w)
        })
    }

    /// Parameter gradients for the code-input path.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_codes(
        &self,
        codes: &[u8],
        dout: &[f64],
        batch: usize,
        h: usize,
        w: usize,
        gw: &mut Tensor,
        gb: &mut Tensor,
    ) {
        let (o, k, s, f) = (self.out_channels(), self.kernel(), self.stride, self.fan_in());
        let (ho, wo) = self.output_dims(h, w).expect("checked by caller");
        let n = batch * ho * wo;
        let dt = transpose(dout, o, n);
        let mut gwt = vec![0.0; f * o];
        for b in 0..batch {
            let img = &codes[b * h * w..][..h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let j = (b * ho + oy) * wo + ox;
                    let d = &dt[j * o..][..o];
                    for ky in 0..k {
                        for kx in 0..k {
                            let code = img[(oy * s + ky) * w + ox * s + kx] as usize;
                            let col = &mut gwt[((code * k + ky) * k + kx) * o..][..o];
                            col.iter_mut().zip(d).for_each(|(g, v)| *g += v);
                        }
                    }
                }
            }
        }
        let gwd = gw.data_mut();
        for ch in 0..o {
            for r in 0..f {
                gwd[ch * f + r] += gwt[r * o + ch];
            }
        }
        add_row_sums(dout, n, gb);
    }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

fn add_row_sums(m: &[f64], n: usize, into: &mut Tensor) {
    for (g, row) in into.data_mut().iter_mut().zip(m.chunks(n)) {
        *g += row.iter().sum::<f64>();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Linear { weight: Tensor::zeros(&[out_features, in_features]), bias: Tensor::zeros(&[out_features]) }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn init_uniform(&mut self, rng: &mut impl Rng) {
        let bound = 1.0 / (self.in_features() as f64).sqrt();
        uniform_fill(&mut self.weight, bound, rng);
        uniform_fill(&mut self.bias, bound, rng);
    }

    /// `[B][in] -> [B][out]`
    pub(crate) fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let (i, o) = (self.in_features(), self.out_features());
        let mut y = vec![0.0; batch * o];
        gemm(batch, i, o, x, false, self.weight.data(), true, &mut y, 0.0);
        for row in y.chunks_mut(o) {
            row.iter_mut().zip(self.bias.data()).for_each(|(v, b)| *v += b);
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(&self, x: &[f64], dy: &[f64], batch: usize, gw: &mut Tensor, gb: &mut Tensor) -> Vec<f64> {
        let (i, o) = (self.in_features(), self.out_features());
        gemm(o, batch, i, dy, true, x, false, gw.data_mut(), 1.0);
        for row in dy.chunks(o) {
            gb.data_mut().iter_mut().zip(row).for_each(|(g, v)| *g += v);
        }
        let mut dx = vec![0.0; batch * i];
        gemm(batch, o, i, dy, false, self.weight.data(), false, &mut dx, 0.0);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_conv() {
        // 5x5 input with values r*5+c, kernel picking the centre plus the
        // right neighbour: out(y,x) = in(y+1,x+1) + in(y+1,x+2).
        let mut conv = Conv2d::new(1, 1, 3, 1);
        conv.weight.data_mut()[4] = 1.0;
        conv.weight.data_mut()[5] = 1.0;
        conv.bias.data_mut()[0] = 0.5;
        let input: Vec<f64> = (0..25).map(f64::from).collect();
        let cols = conv.im2col(&input, 1, 5, 5);
        let out = conv.forward_cols(&cols, 9);
        let want = [13.5, 15.5, 17.5, 23.5, 25.5, 27.5, 33.5, 35.5, 37.5];
        assert_eq!(out, want);
    }

    #[test]
    fn strided_output_dims() {
        let conv = Conv2d::new(1, 1, 3, 2);
        assert_eq!(conv.output_dims(7, 9), Some((3, 4)));
        assert_eq!(conv.output_dims(2, 9), None);
    }

    #[test]
    fn codes_path_matches_dense_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        let (c, b, h, w) = (4, 2, 5, 6);
        let mut conv = Conv2d::new(c, 3, 3, 1);
        conv.init_uniform(&mut rng);
        let codes: Vec<u8> = (0..b * h * w).map(|_| rng.gen_range(0..c as u8)).collect();
        let mut dense = vec![0.0; c * b * h * w];
        for bi in 0..b {
            for p in 0..h * w {
                dense[(codes[bi * h * w + p] as usize * b + bi) * h * w + p] = 1.0;
            }
        }
        let cols = conv.im2col(&dense, b, h, w);
        let n = b * 3 * 4;
        let a = conv.forward_cols(&cols, n);
        let z = conv.forward_codes(&codes, b, h, w);
        for (x, y) in a.iter().zip(&z) {
            assert!((x - y).abs() < 1e-12);
        }
        let dout: Vec<f64> = (0..3 * n).map(|i| (i as f64).sin()).collect();
        let (mut gw1, mut gb1) = (Tensor::zeros(conv.weight.shape()), Tensor::zeros(&[3]));
        let (mut gw2, mut gb2) = (gw1.clone(), gb1.clone());
        conv.backward_cols(&cols, &dout, b, None, &mut gw1, &mut gb1);
        conv.backward_codes(&codes, &dout, b, h, w, &mut gw2, &mut gb2);
        for (x, y) in gw1.data().iter().zip(gw2.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(gb1, gb2);
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let mut lin = Linear::new(3, 2);
        lin.weight.data_mut().copy_from_slice(&[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let x = [2.0, 1.0, -1.0];
        let y = lin.forward(&x, 1);
        assert_eq!(y, vec![-0.5, 2.0]);
        let dy = [1.5, -1.0];
        let (mut gw, mut gb) = (Tensor::zeros(&[2, 3]), Tensor::zeros(&[2]));
        let dx = lin.backward(&x, &dy, 1, &mut gw, &mut gb);
        assert_eq!(gw.data(), &[3.0, 1.5, -1.5, -2.0, -1.0, 1.0]);
        assert_eq!(gb.data(), &dy);
        assert_eq!(dx, vec![1.5, -6.0, -0.25]);
    }
}
