//! Layer kernels. Convolutions are valid (unpadded) and lowered to a matrix
//! product over im2col rows; kernels are laid out `[out][kh][kw][in]`.

use super::{NetError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub out_c: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(
        (h, w, c): (usize, usize, usize),
        (kh, kw): (usize, usize),
        out_c: usize,
        stride: usize,
    ) -> Result<Self, NetError> {
        if stride == 0 {
            return Err(NetError::ShapeMismatch("conv stride must be >= 1".into()));
        }
        if kh == 0 || kw == 0 || h < kh || w < kw {
            return Err(NetError::ShapeUnderflow(format!(
                "{kh}x{kw} kernel does not fit a {h}x{w} input"
            )));
        }
        Ok(Self { h, w, c, kh, kw, out_c, stride })
    }

    pub fn out_h(&self) -> usize {
        (self.h - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - self.kw) / self.stride + 1
    }

    /// Length of one im2col row.
    pub fn k(&self) -> usize {
        self.kh * self.kw * self.c
    }

    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

pub(crate) fn im2col(x: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (ow, k) = (g.out_w(), g.k());
    let mut cols = vec![0.0; g.positions() * k];
    let run = g.kw * g.c;
    for oy in 0..g.out_h() {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * k..][..k];
            for dy in 0..g.kh {
                let src = ((oy * g.stride + dy) * g.w + ox * g.stride) * g.c;
                // kw * c consecutive values are contiguous in HWC order
                row[dy * run..(dy + 1) * run].copy_from_slice(&x[src..src + run]);
            }
        }
    }
    cols
}

fn col2im_add(dcols: &[f64], g: &ConvGeometry, dx: &mut [f64]) {
    let (ow, k) = (g.out_w(), g.k());
    let run = g.kw * g.c;
    for oy in 0..g.out_h() {
        for ox in 0..ow {
            let row = &dcols[(oy * ow + ox) * k..][..k];
            for dy in 0..g.kh {
                let dst = ((oy * g.stride + dy) * g.w + ox * g.stride) * g.c;
                for (d, s) in dx[dst..dst + run].iter_mut().zip(&row[dy * run..(dy + 1) * run]) {
                    *d += s;
                }
            }
        }
    }
}

/// `c = a · b (+ c if accumulate)` for row-major operands with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward convolution over precomputed im2col rows. Output is `(P, out_c)`.
pub(crate) fn conv_forward_cols(
    cols: &[f64],
    g: &ConvGeometry,
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (p, k, o) = (g.positions(), g.k(), g.out_c);
    let mut out = vec![0.0; p * o];
    gemm(p, k, o, cols, (k, 1), weights, (1, k), &mut out, false);
    for row in out.chunks_exact_mut(o) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    out
}

/// Accumulates weight and bias gradients and optionally returns the input gradient.
pub(crate) fn conv_backward(
    cols: &[f64],
    g: &ConvGeometry,
    weights: &[f64],
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let (p, k, o) = (g.positions(), g.k(), g.out_c);
    gemm(o, p, k, dout, (1, o), cols, (k, 1), dweights, true);
    for row in dout.chunks_exact(o) {
        for (db, d) in dbias.iter_mut().zip(row) {
            *db += d;
        }
    }
    if !want_dx {
        return None;
    }
    let mut dcols = vec![0.0; p * k];
    gemm(p, o, k, dout, (o, 1), weights, (k, 1), &mut dcols, false);
    let mut dx = vec![0.0; g.h * g.w * g.c];
    col2im_add(&dcols, g, &mut dx);
    Some(dx)
}

/// Valid convolution of an `(h, w, c)` input with kernels shaped
/// `(out, kh, kw, c)`.
pub fn conv_forward(
    x: &Tensor,
    kernels: &Tensor,
    biases: &[f64],
    stride: usize,
) -> Result<Tensor, NetError> {
    let (h, w, c) = x.hwc()?;
    let [out_c, kh, kw, kc] = kernels.shape()[..] else {
        return Err(NetError::ShapeMismatch(format!(
            "kernels must be (out, kh, kw, c), got {:?}",
            kernels.shape()
        )));
    };
    if kc != c {
        return Err(NetError::ShapeMismatch(format!("kernel depth {kc} vs input channels {c}")));
    }
    if biases.len() != out_c {
        return Err(NetError::ShapeMismatch(format!("{} biases for {out_c} kernels", biases.len())));
    }
    let g = ConvGeometry::new((h, w, c), (kh, kw), out_c, stride)?;
    let cols = im2col(x.values(), &g);
    let out = conv_forward_cols(&cols, &g, kernels.values(), biases);
    Ok(Tensor::from_parts(vec![g.out_h(), g.out_w(), out_c], out))
}

/// 2×2 non-overlapping max pooling. Returns the pooled tensor and, per output
/// element, the flat input index that won.
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>), NetError> {
    let (h, w, c) = x.hwc()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NetError::OddSpatialDim(h, w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xv = x.values();
    let mut out = vec![0.0; oh * ow * c];
    let mut argmax = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = usize::MAX;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let i = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if best == usize::MAX || xv[i] > xv[best] {
                        best = i;
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out[o] = xv[best];
                argmax[o] = best;
            }
        }
    }
    Ok((Tensor::from_parts(vec![oh, ow, c], out), argmax))
}

/// Routes each output gradient to the input position that produced the max.
pub fn maxpool_backward(dout: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&g, &i) in dout.iter().zip(argmax) {
        dx[i] += g;
    }
    dx
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.values().iter().map(|&v| v.max(0.0)).collect())
}

pub(crate) fn relu_backward(input: &[f64], dout: &[f64]) -> Vec<f64> {
    input.iter().zip(dout).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect()
}

/// `W x + b` on the flattened input; `weights` is `(out, in)` row-major.
pub fn fc_forward(x: &Tensor, weights: &[f64], bias: &[f64]) -> Result<Tensor, NetError> {
    let n_in = x.len();
    let n_out = bias.len();
    if weights.len() != n_in * n_out {
        return Err(NetError::ShapeMismatch(format!(
            "{} weights for a {n_in} -> {n_out} layer",
            weights.len()
        )));
    }
    let xv = x.values();
    let out = weights
        .chunks_exact(n_in.max(1))
        .zip(bias)
        .map(|(row, b)| row.iter().zip(xv).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    Ok(Tensor::from_parts(vec![n_out], out))
}

pub(crate) fn fc_backward(
    x: &[f64],
    weights: &[f64],
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let n_in = x.len();
    for (o, &g) in dout.iter().enumerate() {
        dbias[o] += g;
        for (dw, &v) in dweights[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
            *dw += g * v;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; n_in];
        for (o, &g) in dout.iter().enumerate() {
            for (d, &w) in dx.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                *d += g * w;
            }
        }
        dx
    })
}

/// Max-shifted softmax over the flattened input.
pub fn softmax(x: &Tensor) -> Tensor {
    let m = x.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.values().iter().map(|&v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::from_parts(vec![x.len()], exps.into_iter().map(|e| e / total).collect())
}

/// Vector-Jacobian product of softmax given its output `p`.
pub(crate) fn softmax_backward(p: &[f64], dout: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(dout).map(|(a, b)| a * b).sum();
    p.iter().zip(dout).map(|(&pi, &gi)| pi * (gi - dot)).collect()
}

/// Negative log-likelihood of `target` under probabilities `p`.
pub fn cross_entropy(p: &[f64], target: usize) -> f64 {
    -p[target].max(f64::MIN_POSITIVE).ln()
}
