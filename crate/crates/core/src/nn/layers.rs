//! Layer primitives. The slice-level kernels are shared with the batched
//! model code; the `Tensor` wrappers are the standalone single-sample API.

use super::{NnError, Scalar, Tensor};

/// Output extent of a valid window sweep, `floor((n - window) / stride) + 1`,
/// or `None` when the window does not fit.
pub fn pool_extent(n: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || window > n {
        None
    } else {
        Some((n - window) / stride + 1)
    }
}

/// Output columns `[lo, hi)` whose tap `kx` lands inside a row of width `w`.
#[inline]
fn valid_cols(wo: usize, w: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).min(wo);
    let hi = (w + pad).saturating_sub(kx).min(wo).max(lo);
    (lo, hi)
}

/// Unfold `input` (`c x h x w`) into `cols` (`c*k*k x ho*wo`) for a stride-1
/// convolution with zero padding `pad`.
pub(super) fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut [T]) {
    let ho = h + 2 * pad - k + 1;
    let wo = w + 2 * pad - k + 1;
    let plane = ho * wo;
    debug_assert_eq!(cols.len(), c * k * k * plane);
    for ch in 0..c {
        let src = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * plane;
                let dst = &mut cols[row..row + plane];
                for oy in 0..ho {
                    let iy = oy as isize + ky as isize - pad as isize;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    let (lo, hi) = valid_cols(wo, w, kx, pad);
                    drow[..lo].fill(T::zero());
                    drow[hi..].fill(T::zero());
                    drow[lo..hi].copy_from_slice(&srow[lo + kx - pad..hi + kx - pad]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate `cols` back into `grad_in`.
pub(super) fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, grad_in: &mut [T]) {
    let ho = h + 2 * pad - k + 1;
    let wo = w + 2 * pad - k + 1;
    let plane = ho * wo;
    for ch in 0..c {
        let dst = &mut grad_in[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * plane;
                let src = &cols[row..row + plane];
                for oy in 0..ho {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    let (lo, hi) = valid_cols(wo, w, kx, pad);
                    let srow = &src[oy * wo + lo..oy * wo + hi];
                    for (d, &g) in drow[lo + kx - pad..hi + kx - pad].iter_mut().zip(srow) {
                        *d += g;
                    }
                }
            }
        }
    }
}

/// Geometry of one convolution.
#[derive(Debug, Clone, Copy)]
pub(super) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub filters: usize,
    pub k: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        (self.h + 2 * self.pad - self.k + 1, self.w + 2 * self.pad - self.k + 1)
    }

    pub fn patch_len(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.k == 0 || self.k > self.h + 2 * self.pad || self.k > self.w + 2 * self.pad {
            return Err(NnError::KernelTooLarge { kernel: self.k, h: self.h, w: self.w });
        }
        Ok(())
    }
}

/// `out = W * cols + b`; `cols` must hold the unfolded input.
pub(super) fn conv_forward_cols<T: Scalar>(g: &ConvGeom, cols: &[T], weights: &[T], bias: &[T], out: &mut [T]) {
    let (ho, wo) = g.out_hw();
    let plane = ho * wo;
    T::gemm(g.filters, g.patch_len(), plane, T::one(), weights, false, cols, false, T::zero(), out);
    for (f, &b) in bias.iter().enumerate() {
        out[f * plane..(f + 1) * plane].iter_mut().for_each(|v| *v += b);
    }
}

/// Accumulate kernel and bias gradients, and optionally produce the input
/// gradient (`grad_in` is overwritten).
#[allow(clippy::too_many_arguments)]
pub(super) fn conv_backward_cols<T: Scalar>(
    g: &ConvGeom,
    cols: &[T],
    weights: &[T],
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    grad_in: Option<&mut [T]>,
    scratch: &mut Vec<T>,
) {
    let (ho, wo) = g.out_hw();
    let plane = ho * wo;
    let pl = g.patch_len();
    T::gemm(g.filters, plane, pl, T::one(), grad_out, false, cols, true, T::one(), grad_w);
    for (f, gb) in grad_b.iter_mut().enumerate() {
        let mut s = T::zero();
        for &v in &grad_out[f * plane..(f + 1) * plane] {
            s += v;
        }
        *gb += s;
    }
    if let Some(grad_in) = grad_in {
        scratch.resize(pl * plane, T::zero());
        T::gemm(pl, g.filters, plane, T::one(), weights, true, grad_out, false, T::zero(), scratch);
        grad_in.fill(T::zero());
        col2im(scratch, g.c, g.h, g.w, g.k, g.pad, grad_in);
    }
}

fn conv_geom<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>, padding: usize) -> Result<ConvGeom, NnError> {
    let (c, h, w) = input.chw()?;
    let (filters, kc, kh, kw) = match kernels.shape()[..] {
        [f, c, kh, kw] => (f, c, kh, kw),
        _ => return Err(NnError::Shape(format!("kernels must be rank 4, got {:?}", kernels.shape()))),
    };
    if kc != c || kh != kw {
        return Err(NnError::Shape(format!("kernels {:?} incompatible with input {:?}", kernels.shape(), input.shape())));
    }
    let g = ConvGeom { c, h, w, filters, k: kh, pad: padding };
    g.validate()?;
    Ok(g)
}

/// Stride-1 cross-correlation of a `C x H x W` input with `F x C x k x k`
/// kernels plus per-filter biases. `padding` zeros are added on each side
/// (0 = valid).
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    biases: &[T],
    padding: usize,
) -> Result<Tensor<T>, NnError> {
    let g = conv_geom(input, kernels, padding)?;
    if biases.len() != g.filters {
        return Err(NnError::Shape(format!("{} biases for {} filters", biases.len(), g.filters)));
    }
    let (ho, wo) = g.out_hw();
    let mut cols = vec![T::zero(); g.patch_len() * ho * wo];
    im2col(input.data(), g.c, g.h, g.w, g.k, g.pad, &mut cols);
    let mut out = vec![T::zero(); g.filters * ho * wo];
    conv_forward_cols(&g, &cols, kernels.data(), biases, &mut out);
    Tensor::new(vec![g.filters, ho, wo], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGradients<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub biases: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    padding: usize,
) -> Result<ConvGradients<T>, NnError> {
    let g = conv_geom(input, kernels, padding)?;
    let (ho, wo) = g.out_hw();
    if grad_out.shape() != [g.filters, ho, wo] {
        return Err(NnError::Shape(format!("grad_out {:?}, expected {:?}", grad_out.shape(), [g.filters, ho, wo])));
    }
    let mut cols = vec![T::zero(); g.patch_len() * ho * wo];
    im2col(input.data(), g.c, g.h, g.w, g.k, g.pad, &mut cols);
    let mut gw = vec![T::zero(); kernels.len()];
    let mut gb = vec![T::zero(); g.filters];
    let mut gi = vec![T::zero(); input.len()];
    let mut scratch = Vec::new();
    conv_backward_cols(&g, &cols, kernels.data(), grad_out.data(), &mut gw, &mut gb, Some(&mut gi), &mut scratch);
    Ok(ConvGradients {
        input: Tensor::new(input.shape().to_vec(), gi)?,
        kernels: Tensor::new(kernels.shape().to_vec(), gw)?,
        biases: gb,
    })
}

/// Max pooling of one `c x h x w` sample; `argmax` receives the flat input
/// index of each output's maximum (first occurrence in row-major order on
/// ties).
#[allow(clippy::too_many_arguments)]
pub(super) fn maxpool_slice<T: Scalar>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    window: usize,
    stride: usize,
    out: &mut [T],
    argmax: &mut [usize],
) {
    let ho = (h - window) / stride + 1;
    let wo = (w - window) / stride + 1;
    // column maxima over the window rows (keeping the first row on ties),
    // then maxima across window columns (lowest flat index on ties)
    let mut col_v = vec![T::zero(); w];
    let mut col_dy = vec![0u32; w];
    for ch in 0..c {
        let base = ch * h * w;
        let plane = &input[base..base + h * w];
        for oy in 0..ho {
            let top = oy * stride;
            col_v.copy_from_slice(&plane[top * w..(top + 1) * w]);
            col_dy.fill(0);
            for dy in 1..window {
                let row = &plane[(top + dy) * w..(top + dy + 1) * w];
                for ((&v, cv), cd) in row.iter().zip(col_v.iter_mut()).zip(col_dy.iter_mut()) {
                    let gt = v > *cv;
                    *cv = if gt { v } else { *cv };
                    *cd = if gt { dy as u32 } else { *cd };
                }
            }
            let o_row = (ch * ho + oy) * wo;
            for ox in 0..wo {
                let x0 = ox * stride;
                let (mut best, mut bx, mut bdy) = (col_v[x0], x0, col_dy[x0]);
                for x in x0 + 1..x0 + window {
                    let (v, dy) = (col_v[x], col_dy[x]);
                    if v > best || (v == best && dy < bdy) {
                        best = v;
                        bx = x;
                        bdy = dy;
                    }
                }
                out[o_row + ox] = best;
                argmax[o_row + ox] = base + (top + bdy as usize) * w + bx;
            }
        }
    }
}

pub fn maxpool_forward<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    let (c, h, w) = input.chw()?;
    if stride == 0 || window == 0 {
        return Err(NnError::InvalidConfig("pool window and stride must be >= 1".into()));
    }
    let ho = pool_extent(h, window, stride).ok_or(NnError::WindowTooLarge { window, extent: h })?;
    let wo = pool_extent(w, window, stride).ok_or(NnError::WindowTooLarge { window, extent: w })?;
    let mut out = vec![T::zero(); c * ho * wo];
    let mut argmax = vec![0; c * ho * wo];
    maxpool_slice(input.data(), c, h, w, window, stride, &mut out, &mut argmax);
    Ok((Tensor::new(vec![c, ho, wo], out)?, argmax))
}

/// Route each output gradient to its recorded argmax position.
pub fn maxpool_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if argmax.len() != grad_out.len() {
        return Err(NnError::Shape("argmax and grad_out lengths differ".into()));
    }
    let mut gi = Tensor::zeros(input_shape.to_vec());
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        gi.data_mut()[i] += g;
    }
    Ok(gi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradients<T> {
    pub input: Vec<T>,
    pub weights: Tensor<T>,
    pub biases: Vec<T>,
}

fn dense_dims<T: Scalar>(input: &[T], weights: &Tensor<T>) -> Result<(usize, usize), NnError> {
    match weights.shape()[..] {
        [out, inp] if inp == input.len() => Ok((out, inp)),
        _ => Err(NnError::Shape(format!("weights {:?} vs input length {}", weights.shape(), input.len()))),
    }
}

/// `W x + b` with `W` of shape `out x in`.
pub fn dense_forward<T: Scalar>(input: &[T], weights: &Tensor<T>, biases: &[T]) -> Result<Vec<T>, NnError> {
    let (n_out, n_in) = dense_dims(input, weights)?;
    if biases.len() != n_out {
        return Err(NnError::Shape(format!("{} biases for {n_out} units", biases.len())));
    }
    let mut out = biases.to_vec();
    T::gemm(n_out, n_in, 1, T::one(), weights.data(), false, input, false, T::one(), &mut out);
    Ok(out)
}

pub fn dense_backward<T: Scalar>(input: &[T], weights: &Tensor<T>, grad_out: &[T]) -> Result<DenseGradients<T>, NnError> {
    let (n_out, n_in) = dense_dims(input, weights)?;
    if grad_out.len() != n_out {
        return Err(NnError::Shape(format!("grad_out length {} for {n_out} units", grad_out.len())));
    }
    let mut gw = vec![T::zero(); n_out * n_in];
    T::gemm(n_out, 1, n_in, T::one(), grad_out, false, input, false, T::zero(), &mut gw);
    let mut gi = vec![T::zero(); n_in];
    T::gemm(n_in, n_out, 1, T::one(), weights.data(), true, grad_out, false, T::zero(), &mut gi);
    Ok(DenseGradients {
        input: gi,
        weights: Tensor::new(vec![n_out, n_in], gw)?,
        biases: grad_out.to_vec(),
    })
}

pub fn relu_forward<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Gradient through relu given the layer's output (zero where output is 0).
pub fn relu_backward<T: Scalar>(out: &[T], grad: &[T]) -> Vec<T> {
    out.iter().zip(grad).map(|(&o, &g)| if o > T::zero() { g } else { T::zero() }).collect()
}

#[inline]
pub(super) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_forward<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| sigmoid(v)).collect()
}

/// Gradient through sigmoid given the layer's output `y`: `g * y * (1 - y)`.
pub fn sigmoid_backward<T: Scalar>(out: &[T], grad: &[T]) -> Vec<T> {
    out.iter().zip(grad).map(|(&y, &g)| g * y * (T::one() - y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn one_by_one_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_tensor(&mut rng, vec![1, 4, 5]);
        let k = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, &[0.0], 0).unwrap(), x);
    }

    #[test]
    fn full_kernel_is_dot_product() {
        let x = Tensor::new(vec![1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let k = Tensor::new(vec![1, 1, 3, 3], vec![0.5, -1.0, 2.0, 0.0, 1.0, 1.0, -2.0, 0.25, 3.0]).unwrap();
        let out = conv2d_forward(&x, &k, &[0.5], 0).unwrap();
        let dot: f64 = x.data().iter().zip(k.data()).map(|(a, b)| a * b).sum();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert!((out.data()[0] - (dot + 0.5)).abs() < 1e-12);
    }

    fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64]) -> Vec<f64> {
        let (c, h, w) = x.chw().unwrap();
        let (f, ks) = (k.shape()[0], k.shape()[2]);
        let (ho, wo) = (h - ks + 1, w - ks + 1);
        let mut out = vec![0.0; f * ho * wo];
        for fi in 0..f {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[fi];
                    for ci in 0..c {
                        for ky in 0..ks {
                            for kx in 0..ks {
                                acc += x.data()[(ci * h + oy + ky) * w + ox + kx]
                                    * k.data()[((fi * c + ci) * ks + ky) * ks + kx];
                            }
                        }
                    }
                    out[(fi * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for case in 0..20 {
            let c = 1 + case % 3;
            let x = rand_tensor(&mut rng, vec![c, 8, 8]);
            let k = rand_tensor(&mut rng, vec![3, c, 3, 3]);
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = conv2d_forward(&x, &k, &b, 0).unwrap();
            assert_eq!(out.shape(), &[3, 6, 6]);
            for (a, e) in out.data().iter().zip(naive_conv(&x, &k, &b)) {
                assert!((a - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn conv_backward_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for pad in [0, 1] {
            let x = rand_tensor(&mut rng, vec![2, 5, 6]);
            let k = rand_tensor(&mut rng, vec![3, 2, 3, 3]);
            let b = vec![0.1, -0.2, 0.3];
            let out = conv2d_forward(&x, &k, &b, pad).unwrap();
            let weights = rand_tensor(&mut rng, out.shape().to_vec());
            // scalar objective sum(weights * conv(x)) has gradient `weights`
            let f = |x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64]| -> f64 {
                let o = conv2d_forward(x, k, b, pad).unwrap();
                o.data().iter().zip(weights.data()).map(|(a, w)| a * w).sum()
            };
            let g = conv2d_backward(&x, &k, &weights, pad).unwrap();
            let eps = 1e-6;
            for i in 0..x.len() {
                let (mut up, mut dn) = (x.clone(), x.clone());
                up.data_mut()[i] += eps;
                dn.data_mut()[i] -= eps;
                let num = (f(&up, &k, &b) - f(&dn, &k, &b)) / (2.0 * eps);
                assert!((num - g.input.data()[i]).abs() < 1e-6);
            }
            for i in 0..k.len() {
                let (mut up, mut dn) = (k.clone(), k.clone());
                up.data_mut()[i] += eps;
                dn.data_mut()[i] -= eps;
                let num = (f(&x, &up, &b) - f(&x, &dn, &b)) / (2.0 * eps);
                assert!((num - g.kernels.data()[i]).abs() < 1e-6);
            }
            for (fi, gb) in g.biases.iter().enumerate() {
                let sum: f64 = weights.data()[fi * out.shape()[1] * out.shape()[2]..][..out.shape()[1] * out.shape()[2]].iter().sum();
                assert!((gb - sum).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kernel_larger_than_input() {
        let x = Tensor::<f64>::zeros(vec![1, 2, 5]);
        let k = Tensor::<f64>::zeros(vec![1, 1, 3, 3]);
        assert!(matches!(conv2d_forward(&x, &k, &[0.0], 0), Err(NnError::KernelTooLarge { .. })));
        assert!(conv2d_forward(&x, &k, &[0.0], 1).is_ok());
    }

    #[test]
    fn maxpool_examples() {
        let x = Tensor::new(vec![1, 3, 4], vec![1.0, 3.0, 2.0, 0.0, 0.0, 0.0, 9.0, 0.0, 2.0, 0.0, 0.0, 8.0]).unwrap();
        let (o, am) = maxpool_forward(&x, 3, 2).unwrap();
        assert_eq!((o.shape(), o.data()), (&[1, 1, 1][..], &[9.0][..]));
        assert_eq!(am, vec![6]);
        assert!(maxpool_forward(&Tensor::<f64>::zeros(vec![1, 1, 4]), 3, 2).is_err());
        let x = Tensor::new(vec![1, 3, 4], (0..12).map(f64::from).collect()).unwrap();
        let (o, _) = maxpool_forward(&x, 1, 1).unwrap();
        assert_eq!(o, x);
        let c = Tensor::new(vec![2, 5, 7], vec![0.25; 70]).unwrap();
        let (o, am) = maxpool_forward(&c, 2, 2).unwrap();
        assert_eq!(o.shape(), &[2, 2, 3]);
        assert!(o.data().iter().all(|&v| v == 0.25));
        // ties route to the first position of each window
        assert_eq!(am[0], 0);
        assert!(maxpool_forward(&c, 6, 1).is_err());
    }

    #[test]
    fn maxpool_matches_scan_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (window, stride) in [(3, 2), (2, 2), (1, 1), (3, 1), (2, 3)] {
            let (c, h, w) = (3, 9, 11);
            let data: Vec<f64> = (0..c * h * w).map(|_| f64::from(rng.random_range(0..3))).collect();
            let x = Tensor::new(vec![c, h, w], data.clone()).unwrap();
            let (o, am) = maxpool_forward(&x, window, stride).unwrap();
            let (ho, wo) = ((h - window) / stride + 1, (w - window) / stride + 1);
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = 0;
                        for dy in 0..window {
                            for dx in 0..window {
                                let i = (ch * h + oy * stride + dy) * w + ox * stride + dx;
                                if data[i] > best {
                                    best = data[i];
                                    best_i = i;
                                }
                            }
                        }
                        let k = (ch * ho + oy) * wo + ox;
                        assert_eq!((o.data()[k], am[k]), (best, best_i));
                    }
                }
            }
        }
    }

    #[test]
    fn maxpool_backward_routes_to_argmax() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 4.0, 4.0, 2.0]).unwrap();
        let (_, am) = maxpool_forward(&x, 2, 1).unwrap();
        let g = maxpool_backward(x.shape(), &am, &Tensor::new(vec![1, 1, 1], vec![5.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid_forward(&[0.0f64]), vec![0.5]);
        assert_eq!(relu_forward(&[-3.0f64, 2.0]), vec![0.0, 2.0]);
        assert_eq!(relu_backward(&relu_forward(&[-3.0f64]), &[7.0]), vec![0.0]);
        let y = sigmoid_forward(&[50.0f64, -50.0]);
        assert!(y[0] <= 1.0 && y[1] >= 0.0 && y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dense_identity() {
        let eye = Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(dense_forward(&[1.5, -2.0, 0.25], &eye, &[0.0; 3]).unwrap(), vec![1.5, -2.0, 0.25]);
        assert!(dense_forward(&[1.0, 2.0], &eye, &[0.0; 3]).is_err());
    }

    #[test]
    fn dense_backward_matches_formula() {
        let w = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let g = dense_backward(&[1.0, -1.0, 2.0], &w, &[0.5, 2.0]).unwrap();
        assert_eq!(g.weights.data(), &[0.5, -0.5, 1.0, 2.0, -2.0, 4.0]);
        assert_eq!(g.input, vec![0.5 - 2.0, 1.0 + 1.0, 1.5]);
        assert_eq!(g.biases, vec![0.5, 2.0]);
    }

    proptest! {
        #[test]
        fn pool_extent_formula(n in 1usize..200, window in 1usize..8, stride in 1usize..5) {
            let x = Tensor::<f32>::zeros(vec![1, n, 1.max(window)]);
            match maxpool_forward(&x, window, stride) {
                Ok((o, _)) => {
                    prop_assert!(window <= n);
                    prop_assert_eq!(o.shape()[1], (n - window) / stride + 1);
                    prop_assert_eq!(o.shape()[2], 1);
                }
                Err(_) => prop_assert!(window > n),
            }
        }
    }
}
