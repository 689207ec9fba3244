//! Dense row-major tensors and the forward kernels built on them.
//!
//! Tensors are immutable values: every kernel allocates its output, so a
//! tensor handed to another thread or saved on the autodiff tape can never
//! change underneath it. All reductions run in a fixed order, which makes
//! every kernel bit-deterministic for identical inputs.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense N-dimensional array with row-major contiguous storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E> {
    shape: Vec<usize>,
    data: Arc<[E]>,
}

impl<E: Scalar> Tensor<E> {
    /// Build a tensor from a shape and matching flat buffer.
    pub fn from_vec(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data: data.into(),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![E::zero(); numel].into(),
        }
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel].into(),
        }
    }

    /// Rank-0 scalar tensor.
    pub fn scalar(value: E) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value].into(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    /// The value of a rank-0 or single-element tensor.
    pub fn item(&self) -> E {
        debug_assert_eq!(self.numel(), 1, "item() on tensor with numel != 1");
        self.data[0]
    }

    /// Rows/cols of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        if self.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "dims2",
                lhs: self.shape.clone(),
                rhs: vec![0, 0],
            });
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// Element of a rank-2 tensor.
    pub fn at2(&self, i: usize, j: usize) -> E {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Row slice of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[E] {
        debug_assert_eq!(self.rank(), 2);
        let n = self.shape[1];
        &self.data[i * n..(i + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect::<Vec<_>>().into(),
        }
    }

    /// Elementwise combine with an identically shaped tensor.
    pub fn zip(&self, other: &Self, op: &'static str, f: impl Fn(E, E) -> E) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let data: Vec<E> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data: data.into(),
        })
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub fn from_f64_slice(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Tensor::from_vec(shape, data.iter().map(|&v| E::from_f64(v)).collect())
    }

    /// Convert between element types (f32 <-> f64).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| T::from_f64(v.to_f64()))
                .collect::<Vec<_>>()
                .into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Forward kernels
// ---------------------------------------------------------------------------

/// `a[m,k] . b[k,n] -> [m,n]`.
pub fn matmul<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![E::zero(); m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o = *o + av * bv;
            }
        }
    }
    Tensor::from_vec(vec![m, n], out)
}

pub fn transpose<E: Scalar>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (m, n) = x.dims2()?;
    let xd = x.data();
    let mut out = vec![E::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = xd[i * n + j];
        }
    }
    Tensor::from_vec(vec![n, m], out)
}

pub fn add<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    a.zip(b, "add", |x, y| x + y)
}

pub fn sub<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    a.zip(b, "sub", |x, y| x - y)
}

pub fn mul<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    a.zip(b, "mul", |x, y| x * y)
}

pub fn scale<E: Scalar>(x: &Tensor<E>, c: E) -> Tensor<E> {
    x.map(|v| v * c)
}

/// `x[n,c] + bias[c]`, the bias broadcast over rows.
pub fn add_row_broadcast<E: Scalar>(x: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c) = x.dims2()?;
    if bias.shape() != [c] {
        return Err(Error::ShapeMismatch {
            op: "add_row_broadcast",
            lhs: x.shape().to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    let bd = bias.data();
    let mut out = Vec::with_capacity(n * c);
    for row in x.data().chunks_exact(c) {
        for (v, b) in row.iter().zip(bd.iter()) {
            out.push(*v + *b);
        }
    }
    Tensor::from_vec(vec![n, c], out)
}

/// `x[n,c] * col[n,1]`, the column broadcast across channels.
pub fn mul_col_broadcast<E: Scalar>(x: &Tensor<E>, col: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c) = x.dims2()?;
    if col.shape() != [n, 1] {
        return Err(Error::ShapeMismatch {
            op: "mul_col_broadcast",
            lhs: x.shape().to_vec(),
            rhs: col.shape().to_vec(),
        });
    }
    let cd = col.data();
    let mut out = Vec::with_capacity(n * c);
    for (i, row) in x.data().chunks_exact(c).enumerate() {
        let g = cd[i];
        for v in row {
            out.push(*v * g);
        }
    }
    Tensor::from_vec(vec![n, c], out)
}

/// Per-row sum of a rank-2 tensor: `[n,c] -> [n,1]`.
pub fn row_sum<E: Scalar>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c) = x.dims2()?;
    let mut out = Vec::with_capacity(n);
    for row in x.data().chunks_exact(c.max(1)) {
        let mut s = E::zero();
        for v in row {
            s = s + *v;
        }
        out.push(s);
    }
    if c == 0 {
        out = vec![E::zero(); n];
    }
    Tensor::from_vec(vec![n, 1], out)
}

/// Elementwise `1 / (x + eps)`.
pub fn recip_eps<E: Scalar>(x: &Tensor<E>, eps: E) -> Tensor<E> {
    x.map(|v| E::one() / (v + eps))
}

/// Elementwise `1 / max(x, floor)`; exact for healthy denominators, guarded
/// for empty ones.
pub fn recip_guarded<E: Scalar>(x: &Tensor<E>, floor: E) -> Tensor<E> {
    x.map(|v| E::one() / if v > floor { v } else { floor })
}

/// Numerically stable per-row softmax of a rank-2 tensor.
pub fn softmax_rows<E: Scalar>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c) = x.dims2()?;
    if !x.is_finite() {
        return Err(Error::NonFinite {
            stage: "softmax_rows input".into(),
        });
    }
    if c == 0 {
        return Tensor::from_vec(vec![n, 0], Vec::new());
    }
    let mut out = Vec::with_capacity(n * c);
    for row in x.data().chunks_exact(c) {
        let mut mx = row[0];
        for v in &row[1..] {
            if *v > mx {
                mx = *v;
            }
        }
        let start = out.len();
        let mut sum = E::zero();
        for v in row {
            let e = (*v - mx).exp();
            out.push(e);
            sum = sum + e;
        }
        let inv = E::one() / sum;
        for v in &mut out[start..] {
            *v = *v * inv;
        }
    }
    Tensor::from_vec(vec![n, c], out)
}

/// Per-row layer normalization with affine gain/bias, eps guarding
/// zero-variance rows.
pub fn layernorm<E: Scalar>(
    x: &Tensor<E>,
    gain: &Tensor<E>,
    bias: &Tensor<E>,
    eps: E,
) -> Result<Tensor<E>> {
    let (n, c) = x.dims2()?;
    if gain.shape() != [c] || bias.shape() != [c] {
        return Err(Error::ShapeMismatch {
            op: "layernorm",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    let gd = gain.data();
    let bd = bias.data();
    let inv_c = E::one() / E::from_f64(c as f64);
    let mut out = Vec::with_capacity(n * c);
    for row in x.data().chunks_exact(c) {
        let mut mean = E::zero();
        for v in row {
            mean = mean + *v;
        }
        mean = mean * inv_c;
        let mut var = E::zero();
        for v in row {
            let d = *v - mean;
            var = var + d * d;
        }
        var = var * inv_c;
        let inv_std = E::one() / (var + eps).sqrt();
        for (j, v) in row.iter().enumerate() {
            out.push((*v - mean) * inv_std * gd[j] + bd[j]);
        }
    }
    Tensor::from_vec(vec![n, c], out)
}

/// GELU with the tanh approximation used throughout the model.
pub fn gelu_scalar<E: Scalar>(x: E) -> E {
    let k = E::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let c = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    let inner = k * (x + c * x * x * x);
    half * x * (E::one() + inner.tanh())
}

/// Derivative of the tanh-approximation GELU.
pub fn gelu_grad_scalar<E: Scalar>(x: E) -> E {
    let k = E::from_f64(0.797_884_560_802_865_4);
    let c = E::from_f64(0.044715);
    let half = E::from_f64(0.5);
    let three = E::from_f64(3.0);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    let sech2 = E::one() - t * t;
    half * (E::one() + t) + half * x * sech2 * k * (E::one() + three * c * x * x)
}

pub fn gelu<E: Scalar>(x: &Tensor<E>) -> Tensor<E> {
    x.map(gelu_scalar)
}

pub fn sigmoid_scalar<E: Scalar>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

pub fn sigmoid<E: Scalar>(x: &Tensor<E>) -> Tensor<E> {
    x.map(sigmoid_scalar)
}

/// Sum of all entries, as a rank-0 tensor.
pub fn sum_all<E: Scalar>(x: &Tensor<E>) -> Tensor<E> {
    let mut s = E::zero();
    for v in x.data() {
        s = s + *v;
    }
    Tensor::scalar(s)
}

pub fn sqrt_elem<E: Scalar>(x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| v.sqrt())
}

/// Mean of each contiguous row segment: `[n,c] -> [segments,c]`.
/// Segment bounds are half-open `[start, end)` and must tile `0..n`.
pub fn segment_mean_rows<E: Scalar>(x: &Tensor<E>, segs: &[(usize, usize)]) -> Result<Tensor<E>> {
    let (n, c) = x.dims2()?;
    let xd = x.data();
    let mut out = vec![E::zero(); segs.len() * c];
    for (s, &(start, end)) in segs.iter().enumerate() {
        if start >= end || end > n {
            return Err(Error::Numeric {
                msg: "segment_mean_rows: invalid segment bounds".into(),
            });
        }
        let orow = &mut out[s * c..(s + 1) * c];
        for r in start..end {
            let row = &xd[r * c..(r + 1) * c];
            for (o, v) in orow.iter_mut().zip(row.iter()) {
                *o = *o + *v;
            }
        }
        let inv = E::one() / E::from_f64((end - start) as f64);
        for o in orow.iter_mut() {
            *o = *o * inv;
        }
    }
    Tensor::from_vec(vec![segs.len(), c], out)
}

/// Contiguous segments splitting `n` rows into `parts` nearly equal runs.
pub fn segment_bounds(n: usize, parts: usize) -> Vec<(usize, usize)> {
    debug_assert!(parts >= 1 && parts <= n);
    (0..parts)
        .map(|i| (i * n / parts, (i + 1) * n / parts))
        .collect()
}

/// 3x3 same-padding convolution over a square-ish grid stored row-major as
/// `[h*w, c_in]`. Weights are `[c_out, c_in*9]` with kernel offsets flattened
/// row-major, bias `[c_out]`.
pub fn conv3x3<E: Scalar>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    bias: &Tensor<E>,
    h: usize,
    w: usize,
) -> Result<Tensor<E>> {
    let (n, c_in) = x.dims2()?;
    let (c_out, wk) = weight.dims2()?;
    if n != h * w || wk != c_in * 9 || bias.shape() != [c_out] {
        return Err(Error::ShapeMismatch {
            op: "conv3x3",
            lhs: x.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    let xd = x.data();
    let wd = weight.data();
    let bd = bias.data();
    let mut out = vec![E::zero(); n * c_out];
    for r in 0..h {
        for c in 0..w {
            let orow = &mut out[(r * w + c) * c_out..(r * w + c + 1) * c_out];
            for (o, val) in orow.iter_mut().enumerate() {
                let mut acc = bd[o];
                let wrow = &wd[o * wk..(o + 1) * wk];
                for dr in 0..3usize {
                    let rr = r as isize + dr as isize - 1;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for dc in 0..3usize {
                        let cc = c as isize + dc as isize - 1;
                        if cc < 0 || cc >= w as isize {
                            continue;
                        }
                        let xrow = &xd[(rr as usize * w + cc as usize) * c_in..][..c_in];
                        for ci in 0..c_in {
                            acc = acc + wrow[ci * 9 + dr * 3 + dc] * xrow[ci];
                        }
                    }
                }
                *val = acc;
            }
        }
    }
    Tensor::from_vec(vec![n, c_out], out)
}

/// Axis along which a grid derivative is taken; the grid is stored row-major
/// with index `r * w + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAxis {
    /// Across rows (index r), spacing 1/(h-1).
    Row,
    /// Across columns (index c), spacing 1/(w-1).
    Col,
}

/// Second-order finite-difference derivative of each channel of `x[h*w, c]`
/// along a grid axis: central stencils inside, one-sided at boundaries.
pub fn grid_diff<E: Scalar>(
    x: &Tensor<E>,
    h: usize,
    w: usize,
    axis: GridAxis,
) -> Result<Tensor<E>> {
    let (n, c) = x.dims2()?;
    let len = match axis {
        GridAxis::Row => h,
        GridAxis::Col => w,
    };
    if n != h * w || len < 3 {
        return Err(Error::ShapeMismatch {
            op: "grid_diff",
            lhs: x.shape().to_vec(),
            rhs: vec![h, w],
        });
    }
    let spacing = 1.0 / (len as f64 - 1.0);
    let inv2h = E::from_f64(0.5 / spacing);
    let xd = x.data();
    let idx = |r: usize, cc: usize| (r * w + cc) * c;
    let mut out = vec![E::zero(); n * c];
    let four = E::from_f64(4.0);
    let three = E::from_f64(3.0);
    for r in 0..h {
        for cc in 0..w {
            let pos = match axis {
                GridAxis::Row => r,
                GridAxis::Col => cc,
            };
            // Neighboring grid indices along the differencing axis.
            let at = |p: usize| match axis {
                GridAxis::Row => idx(p, cc),
                GridAxis::Col => idx(r, p),
            };
            let o = idx(r, cc);
            for ch in 0..c {
                let d = if pos == 0 {
                    (-three * xd[at(0) + ch] + four * xd[at(1) + ch] - xd[at(2) + ch]) * inv2h
                } else if pos == len - 1 {
                    (three * xd[at(len - 1) + ch] - four * xd[at(len - 2) + ch]
                        + xd[at(len - 3) + ch])
                        * inv2h
                } else {
                    (xd[at(pos + 1) + ch] - xd[at(pos - 1) + ch]) * inv2h
                };
                out[o + ch] = d;
            }
        }
    }
    Tensor::from_vec(vec![n, c], out)
}

/// Column-wise concatenation `[n,a] ++ [n,b] -> [n,a+b]`.
pub fn concat_cols<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, ca) = a.dims2()?;
    let (n2, cb) = b.dims2()?;
    if n != n2 {
        return Err(Error::ShapeMismatch {
            op: "concat_cols",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = Vec::with_capacity(n * (ca + cb));
    for i in 0..n {
        out.extend_from_slice(a.row(i));
        out.extend_from_slice(b.row(i));
    }
    Tensor::from_vec(vec![n, ca + cb], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, vals: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(vec![rows, cols], vals.to_vec()).unwrap()
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::<f64>::from_vec(vec![2, 2], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn matmul_identity() {
        let eye = t2(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let b = t2(3, 2, &[1., 2., 3., 4., 5., 6.]);
        let out = matmul(&eye, &b).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn matmul_scalar_case() {
        let a = t2(1, 1, &[2.0]);
        let b = t2(1, 1, &[3.0]);
        assert_eq!(matmul(&a, &b).unwrap().item(), 6.0);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = t2(2, 3, &[0.0; 6]);
        let b = t2(2, 2, &[0.0; 4]);
        assert!(matches!(
            matmul(&a, &b),
            Err(Error::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = crate::rng::Rng::new(5);
        let a = Tensor::<f64>::from_vec(vec![4, 5], (0..20).map(|_| rng.normal()).collect())
            .unwrap();
        let b = Tensor::<f64>::from_vec(vec![5, 3], (0..15).map(|_| rng.normal()).collect())
            .unwrap();
        let got = matmul(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..5 {
                    s += a.at2(i, p) * b.at2(p, j);
                }
                assert!((got.at2(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let x = t2(1, 2, &[0.0, 0.0]);
        let s = softmax_rows(&x).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);

        for c in [-7.5, 0.0, 123.0] {
            let x = t2(1, 3, &[c, c, c]);
            let s = softmax_rows(&x).unwrap();
            for v in s.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_matches_exp_normalize_oracle() {
        let x = t2(1, 3, &[1.0, 2.0, 3.0]);
        let s = softmax_rows(&x).unwrap();
        let z: f64 = (1f64).exp() + (2f64).exp() + (3f64).exp();
        for (j, v) in s.data().iter().enumerate() {
            let expect = ((j + 1) as f64).exp() / z;
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let x = t2(1, 2, &[f64::NAN, 0.0]);
        assert!(matches!(softmax_rows(&x), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn softmax_stable_for_large_logits() {
        let x = t2(1, 2, &[1000.0, 999.0]);
        let s = softmax_rows(&x).unwrap();
        assert!(s.is_finite());
        assert!((s.data()[0] + s.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layernorm_constant_row_is_zero() {
        let x = t2(1, 4, &[3.0; 4]);
        let gain = Tensor::from_vec(vec![4], vec![1.0; 4]).unwrap();
        let bias = Tensor::zeros(&[4]);
        let y = layernorm(&x, &gain, &bias, 1e-5).unwrap();
        for v in y.data() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn layernorm_unit_row_passthrough() {
        // [1,-1] already has mean 0 and variance 1.
        let x = t2(1, 2, &[1.0, -1.0]);
        let gain = Tensor::from_vec(vec![2], vec![1.0; 2]).unwrap();
        let bias = Tensor::zeros(&[2]);
        let y = layernorm(&x, &gain, &bias, 0.0).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!((y.data()[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn layernorm_matches_scalar_oracle() {
        let mut rng = crate::rng::Rng::new(9);
        let vals: Vec<f64> = (0..6).map(|_| rng.range(-2.0, 2.0)).collect();
        let x = t2(1, 6, &vals);
        let gain = Tensor::from_vec(vec![6], vec![1.0; 6]).unwrap();
        let bias = Tensor::zeros(&[6]);
        let eps = 1e-5;
        let y = layernorm(&x, &gain, &bias, eps).unwrap();
        let mean: f64 = vals.iter().sum::<f64>() / 6.0;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        for (j, v) in vals.iter().enumerate() {
            let expect = (v - mean) / (var + eps).sqrt();
            assert!((y.data()[j] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn segment_means_single_rows_are_identity() {
        let x = t2(3, 2, &[1., 2., 3., 4., 5., 6.]);
        let segs = segment_bounds(3, 3);
        let m = segment_mean_rows(&x, &segs).unwrap();
        assert_eq!(m, x);
    }

    #[test]
    fn segment_bounds_tile_rows() {
        for n in 1..40usize {
            for parts in 1..=n {
                let segs = segment_bounds(n, parts);
                assert_eq!(segs[0].0, 0);
                assert_eq!(segs.last().unwrap().1, n);
                for win in segs.windows(2) {
                    assert_eq!(win[0].1, win[1].0);
                    assert!(win[0].0 < win[0].1);
                }
            }
        }
    }

    #[test]
    fn grid_diff_exact_on_linear_field() {
        // u(x, y) = 2x + 3y on a 5x4 grid; row axis is y, col axis is x.
        let (h, w) = (5usize, 4usize);
        let mut vals = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let y = r as f64 / (h - 1) as f64;
                let x = c as f64 / (w - 1) as f64;
                vals.push(2.0 * x + 3.0 * y);
            }
        }
        let u = t2(h * w, 1, &vals);
        let dy = grid_diff(&u, h, w, GridAxis::Row).unwrap();
        let dx = grid_diff(&u, h, w, GridAxis::Col).unwrap();
        for v in dy.data() {
            assert!((v - 3.0).abs() < 1e-10);
        }
        for v in dx.data() {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn concat_cols_layout() {
        let a = t2(2, 1, &[1.0, 2.0]);
        let b = t2(2, 2, &[10.0, 11.0, 20.0, 21.0]);
        let c = concat_cols(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1.0, 10.0, 11.0, 2.0, 20.0, 21.0]);
    }
}
