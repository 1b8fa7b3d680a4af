//! Numeric kernels over [`Tensor`]: convolution, batch norm, activations,
//! pooling, upsampling and channel concat/split.
//!
//! Every kernel is a pure function of its inputs. Convolution lowers to an
//! im2col buffer followed by a single-threaded SGEMM, so results are
//! bitwise reproducible for identical inputs.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Silu,
    Gelu,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Silu => silu(x),
            Activation::Gelu => gelu(x),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// `x / (1 + e^-x)`, evaluated as `x * sigmoid(x)`.
#[inline]
pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

/// Exact GELU, `x * Φ(x)` with the Gaussian CDF written through `erf`.
#[inline]
pub fn gelu(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))) as f32
}

fn out_dim(input: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if k == 0 || k > padded {
        return Err(Error::shape(format!(
            "window {k} does not fit padded extent {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// 2-D cross-correlation with zero padding.
///
/// `weight` has shape `(c_out, c_in, k, k)`.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let [n, c_in, h, w] = input.shape();
    let [c_out, wc_in, kh, kw] = weight.shape();
    if wc_in != c_in {
        return Err(Error::shape(format!(
            "conv2d: input has {c_in} channels, weight expects {wc_in}"
        )));
    }
    if kh != kw {
        return Err(Error::shape(format!("conv2d: non-square kernel {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(Error::shape("conv2d: stride must be at least 1"));
    }
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::shape(format!(
                "conv2d: bias has {} entries, expected {c_out}",
                b.len()
            )));
        }
    }
    let k = kh;
    let oh = out_dim(h, k, stride, padding)?;
    let ow = out_dim(w, k, stride, padding)?;
    let ohw = oh * ow;
    let depth = c_in * k * k;

    let mut out = Tensor::zeros([n, c_out, oh, ow]);
    let pointwise = k == 1 && stride == 1 && padding == 0;
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![0.0f32; depth * ohw]
    };

    for b in 0..n {
        let src = input.item(b);
        let rhs: &[f32] = if pointwise {
            src
        } else {
            im2col(src, [c_in, h, w], k, stride, padding, [oh, ow], &mut cols);
            &cols
        };
        let dst = &mut out.data_mut()[b * c_out * ohw..(b + 1) * c_out * ohw];
        if let Some(bias) = bias {
            for (row, &bv) in dst.chunks_exact_mut(ohw).zip(bias) {
                row.fill(bv);
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        // SAFETY: all three buffers are dense row-major with the strides
        // given, and their lengths were checked above.
        unsafe {
            matrixmultiply::sgemm(
                c_out,
                depth,
                ohw,
                1.0,
                weight.data().as_ptr(),
                depth as isize,
                1,
                rhs.as_ptr(),
                ohw as isize,
                1,
                beta,
                dst.as_mut_ptr(),
                ohw as isize,
                1,
            );
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    src: &[f32],
    [c, h, w]: [usize; 3],
    k: usize,
    stride: usize,
    padding: usize,
    [oh, ow]: [usize; 2],
    cols: &mut [f32],
) {
    let ohw = oh * ow;
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * ohw;
                let dst = &mut cols[row..row + ohw];
                for oy in 0..oh {
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let srow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            srow[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Inference-mode batch normalization parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

/// Default epsilon of the YOLOv8 BatchNorm layers.
pub const BN_EPS: f32 = 1e-3;

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

pub fn batch_norm(input: &Tensor, bn: &BatchNorm) -> Result<Tensor> {
    let c = input.c();
    let lens = [
        bn.gamma.len(),
        bn.beta.len(),
        bn.running_mean.len(),
        bn.running_var.len(),
    ];
    if lens.iter().any(|&l| l != c) {
        return Err(Error::shape(format!(
            "batch_norm: parameter lengths {lens:?} do not match {c} channels"
        )));
    }
    if let Some(v) = bn.running_var.iter().find(|v| **v < 0.0) {
        return Err(Error::shape(format!("batch_norm: negative running variance {v}")));
    }
    let mut out = input.clone();
    let hw = input.h() * input.w();
    for (i, plane) in out.data_mut().chunks_exact_mut(hw.max(1)).enumerate() {
        if hw == 0 {
            break;
        }
        let ch = i % c;
        let scale = bn.gamma[ch] / (bn.running_var[ch] + bn.eps).sqrt();
        let mean = bn.running_mean[ch];
        let shift = bn.beta[ch];
        for v in plane {
            *v = (*v - mean) * scale + shift;
        }
    }
    Ok(out)
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    let mut out = input.clone();
    activation_inplace(&mut out, kind);
    out
}

pub fn activation_inplace(t: &mut Tensor, kind: Activation) {
    if kind == Activation::Identity {
        return;
    }
    for v in t.data_mut() {
        *v = kind.apply(*v);
    }
}

/// Sliding-window max; padded positions never win.
pub fn max_pool2d(input: &Tensor, k: usize, stride: usize, padding: usize) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::shape("max_pool2d: stride must be at least 1"));
    }
    let [n, c, h, w] = input.shape();
    let oh = out_dim(h, k, stride, padding)?;
    let ow = out_dim(w, k, stride, padding)?;
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let ohw = oh * ow;
    for (idx, dst) in out.data_mut().chunks_exact_mut(ohw.max(1)).enumerate() {
        if ohw == 0 {
            break;
        }
        let plane = input.plane(idx / c, idx % c);
        for oy in 0..oh {
            let y0 = (oy * stride) as isize - padding as isize;
            let ys = y0.max(0) as usize..((y0 + k as isize).min(h as isize)).max(0) as usize;
            for ox in 0..ow {
                let x0 = (ox * stride) as isize - padding as isize;
                let xs = x0.max(0) as usize..((x0 + k as isize).min(w as isize)).max(0) as usize;
                let mut m = f32::NEG_INFINITY;
                for y in ys.clone() {
                    for &v in &plane[y * w + xs.start..y * w + xs.end] {
                        m = m.max(v);
                    }
                }
                dst[oy * ow + ox] = m;
            }
        }
    }
    Ok(out)
}

pub fn upsample_nearest2x(input: &Tensor) -> Tensor {
    let [n, c, h, w] = input.shape();
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    let (oh, ow) = (2 * h, 2 * w);
    for idx in 0..n * c {
        let src = &input.data()[idx * h * w..(idx + 1) * h * w];
        let dst = &mut out.data_mut()[idx * oh * ow..(idx + 1) * oh * ow];
        for y in 0..h {
            let srow = &src[y * w..(y + 1) * w];
            let (top, bottom) = dst[2 * y * ow..(2 * y + 2) * ow].split_at_mut(ow);
            for (x, &v) in srow.iter().enumerate() {
                top[2 * x] = v;
                top[2 * x + 1] = v;
            }
            bottom.copy_from_slice(top);
        }
    }
    out
}

pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat_channels: no inputs"))?;
    let [n, _, h, w] = first.shape();
    for p in parts {
        let [pn, _, ph, pw] = p.shape();
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::shape(format!(
                "concat_channels: part {:?} does not match (n,h,w)=({n},{h},{w})",
                p.shape()
            )));
        }
    }
    let c: usize = parts.iter().map(|p| p.c()).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for b in 0..n {
        for p in parts {
            data.extend_from_slice(p.item(b));
        }
    }
    Tensor::from_vec([n, c, h, w], data)
}

pub fn split_channels(input: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let [n, c, h, w] = input.shape();
    if sizes.iter().sum::<usize>() != c {
        return Err(Error::shape(format!(
            "split_channels: sizes {sizes:?} do not sum to {c}"
        )));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        let mut data = Vec::with_capacity(n * s * hw);
        for b in 0..n {
            let item = input.item(b);
            data.extend_from_slice(&item[start * hw..(start + s) * hw]);
        }
        out.push(Tensor::from_vec([n, s, h, w], data)?);
        start += s;
    }
    Ok(out)
}

/// Elementwise sum of two same-shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "add: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    /// Straight six-loop convolution with f64 accumulation.
    fn naive_conv(
        input: &Tensor,
        weight: &Tensor,
        bias: Option<&[f32]>,
        s: usize,
        p: usize,
    ) -> Tensor {
        let [n, ci, h, w] = input.shape();
        let [co, _, k, _] = weight.shape();
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (w + 2 * p - k) / s + 1;
        Tensor::from_fn([n, co, oh, ow], |b, o, y, x| {
            let mut acc = bias.map_or(0.0, |bs| bs[o] as f64);
            for c in 0..ci {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (y * s + ky) as isize - p as isize;
                        let ix = (x * s + kx) as isize - p as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            acc += input.at(b, c, iy as usize, ix as usize) as f64
                                * weight.at(o, c, ky, kx) as f64;
                        }
                    }
                }
            }
            acc as f32
        })
    }

    fn naive_pool(input: &Tensor, k: usize, s: usize, p: usize) -> Tensor {
        let [n, c, h, w] = input.shape();
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (w + 2 * p - k) / s + 1;
        Tensor::from_fn([n, c, oh, ow], |b, ch, y, x| {
            let mut m = f32::NEG_INFINITY;
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (y * s + ky) as isize - p as isize;
                    let ix = (x * s + kx) as isize - p as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                        m = m.max(input.at(b, ch, iy as usize, ix as usize));
                    }
                }
            }
            m
        })
    }

    #[test]
    fn conv_pointwise_scaling() {
        let x = Tensor::full([1, 1, 3, 3], 1.0);
        let wt = Tensor::full([1, 1, 1, 1], 2.0);
        let y = conv2d(&x, &wt, None, 1, 0).unwrap();
        assert_eq!(y, Tensor::full([1, 1, 3, 3], 2.0));
    }

    #[test]
    fn conv_sums_window() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let wt = Tensor::full([1, 1, 2, 2], 1.0);
        let y = conv2d(&x, &wt, None, 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn conv_strided_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random([1, 3, 8, 8], &mut rng);
        let wt = random([5, 3, 3, 3], &mut rng);
        let y = conv2d(&x, &wt, None, 2, 1).unwrap();
        assert_eq!(y.shape(), [1, 5, 4, 4]);
        let expected = naive_conv(&x, &wt, None, 2, 1);
        assert!(y.max_abs_diff(&expected).unwrap() < 1e-6);
    }

    #[test]
    fn conv_matches_naive_on_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = [1, 3][rng.random_range(0..2)];
            let s = rng.random_range(1..=2);
            let p = if k == 3 { rng.random_range(0..=1) } else { 0 };
            let n = rng.random_range(1..=2);
            let ci = rng.random_range(1..=6);
            let co = rng.random_range(1..=6);
            let h = rng.random_range(3..=10);
            let w = rng.random_range(3..=10);
            let x = random([n, ci, h, w], &mut rng);
            let wt = random([co, ci, k, k], &mut rng);
            let bias: Vec<f32> = (0..co).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = conv2d(&x, &wt, Some(&bias), s, p).unwrap();
            let expected = naive_conv(&x, &wt, Some(&bias), s, p);
            for (a, b) in got.data().iter().zip(expected.data()) {
                let rel = (a - b).abs() / b.abs().max(1.0);
                assert!(rel < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn pointwise_conv_is_matrix_vector_per_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random([1, 4, 5, 6], &mut rng);
        let wt = random([3, 4, 1, 1], &mut rng);
        let y = conv2d(&x, &wt, None, 1, 0).unwrap();
        for py in 0..5 {
            for px in 0..6 {
                for o in 0..3 {
                    let dot: f64 = (0..4)
                        .map(|c| wt.at(o, c, 0, 0) as f64 * x.at(0, c, py, px) as f64)
                        .sum();
                    assert!((y.at(0, o, py, px) as f64 - dot).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Tensor::zeros([1, 2, 4, 4]);
        let wt = Tensor::zeros([1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &wt, None, 1, 1), Err(Error::Shape(_))));
        let wt = Tensor::zeros([1, 2, 7, 7]);
        assert!(matches!(conv2d(&x, &wt, None, 1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_norm_cases() {
        let x = Tensor::from_vec([1, 1, 1, 2], vec![2.0, -5.0]).unwrap();
        let mut bn = BatchNorm::identity(1);
        bn.eps = 0.0;
        assert_eq!(batch_norm(&x, &bn).unwrap(), x);

        let bn = BatchNorm {
            gamma: vec![3.0],
            beta: vec![1.0],
            running_mean: vec![0.0],
            running_var: vec![4.0],
            eps: 0.0,
        };
        assert_eq!(batch_norm(&x, &bn).unwrap().data()[0], 4.0);

        let bn = BatchNorm {
            gamma: vec![2.5],
            beta: vec![0.75],
            running_mean: vec![3.0],
            running_var: vec![0.5],
            eps: 1e-3,
        };
        let constant = Tensor::full([1, 1, 3, 3], 3.0);
        assert!(batch_norm(&constant, &bn)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.75));
    }

    #[test]
    fn batch_norm_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random([2, 3, 4, 4], &mut rng);
        let bn = BatchNorm {
            gamma: vec![0.5, 2.0, -1.5],
            beta: vec![0.1, -0.3, 2.0],
            running_mean: vec![0.2, -0.1, 0.0],
            running_var: vec![0.8, 1.7, 0.3],
            eps: 1e-5,
        };
        let y = batch_norm(&x, &bn).unwrap();
        let back = Tensor::from_fn(x.shape(), |n, c, yy, xx| {
            let sd = (bn.running_var[c] + bn.eps).sqrt();
            (y.at(n, c, yy, xx) - bn.beta[c]) / bn.gamma[c] * sd + bn.running_mean[c]
        });
        assert!(back.max_abs_diff(&x).unwrap() < 1e-5);
    }

    #[test]
    fn batch_norm_rejects_length_mismatch() {
        let x = Tensor::zeros([1, 2, 2, 2]);
        assert!(matches!(
            batch_norm(&x, &BatchNorm::identity(3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn activation_definitions() {
        assert_eq!(silu(0.0), 0.0);
        // 1 / (1 + e^-1) evaluated in f64
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((silu(1.0) as f64 - expected).abs() < 1e-6);
        assert!((silu(1.0) - 0.731059).abs() < 1e-6);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(gelu(0.0), 0.0);
        // Φ(1) = 0.841344746...
        assert!((gelu(1.0) - 0.841_344_7).abs() < 1e-6);
        assert!((gelu(-1.0) + 0.158_655_25).abs() < 1e-6);
        for x in [-200.0f32, -50.0, 50.0, 200.0] {
            assert!(silu(x).is_finite() && gelu(x).is_finite() && sigmoid(x).is_finite());
        }
    }

    proptest! {
        #[test]
        fn silu_is_x_times_sigmoid(x in -100.0f32..100.0) {
            prop_assert_eq!(silu(x) - x * sigmoid(x), 0.0);
        }

        #[test]
        fn upsample_then_stride_is_identity(h in 1usize..6, w in 1usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random([1, 2, h, w], &mut rng);
            let up = upsample_nearest2x(&x);
            prop_assert_eq!(up.shape(), [1, 2, 2 * h, 2 * w]);
            let down = Tensor::from_fn(x.shape(), |n, c, y, xx| up.at(n, c, 2 * y, 2 * xx));
            prop_assert_eq!(down, x);
        }

        #[test]
        fn split_concat_round_trip(a in 1usize..4, b in 1usize..4, n in 1usize..3, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random([n, a + b, 3, 2], &mut rng);
            let parts = split_channels(&x, &[a, b]).unwrap();
            let back = concat_channels(&parts.iter().collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(back, x);
        }
    }

    #[test]
    fn max_pool_cases() {
        let x = Tensor::full([1, 1, 4, 4], 3.5);
        assert_eq!(max_pool2d(&x, 5, 1, 2).unwrap(), x);

        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(max_pool2d(&x, 2, 1, 0).unwrap().data(), &[4.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random([1, 2, 6, 6], &mut rng);
        let y = max_pool2d(&x, 5, 1, 2).unwrap();
        assert_eq!(y.shape(), [1, 2, 6, 6]);
        assert_eq!(y, naive_pool(&x, 5, 1, 2));

        // negative inputs: padding must not leak in as zero
        let x = Tensor::full([1, 1, 3, 3], -2.0);
        assert!(max_pool2d(&x, 5, 1, 2).unwrap().data().iter().all(|&v| v == -2.0));

        assert!(max_pool2d(&Tensor::zeros([1, 1, 2, 2]), 5, 1, 0).is_err());
    }

    #[test]
    fn upsample_blocks() {
        let x = Tensor::full([1, 1, 1, 1], 5.0);
        assert_eq!(upsample_nearest2x(&x), Tensor::full([1, 1, 2, 2], 5.0));
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample_nearest2x(&x);
        #[rustfmt::skip]
        let expected = vec![
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(y.data(), expected.as_slice());
    }

    #[test]
    fn concat_orders_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random([2, 2, 3, 4], &mut rng);
        let b = random([2, 3, 3, 4], &mut rng);
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), [2, 5, 3, 4]);
        for n in 0..2 {
            for c in 0..5 {
                for yy in 0..3 {
                    for xx in 0..4 {
                        let expected = if c < 2 { a.at(n, c, yy, xx) } else { b.at(n, c - 2, yy, xx) };
                        assert_eq!(y.at(n, c, yy, xx), expected);
                    }
                }
            }
        }
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let bad = Tensor::zeros([2, 1, 3, 5]);
        assert!(concat_channels(&[&a, &bad]).is_err());
        assert!(split_channels(&a, &[1, 2]).is_err());
    }
}
