//! Reverse-mode automatic differentiation over a dynamically recorded tape.
//!
//! Every differentiable operation pushes one node holding its inputs and the
//! produced value; `backward` replays the nodes in exact reverse order and
//! accumulates vector-Jacobian products into the gradient slots. Variable
//! indices only ever point backwards, so reverse index order is reverse
//! topological order by construction.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::tensor::{self, GridAxis, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<E> {
    Leaf,
    Matmul { a: Var, b: Var },
    Transpose { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: E },
    AddRowBroadcast { x: Var, bias: Var },
    MulColBroadcast { x: Var, col: Var },
    RowSum { x: Var },
    RecipGuarded { x: Var, floor: E },
    SoftmaxRows { x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, eps: E },
    Gelu { x: Var },
    Sigmoid { x: Var },
    Pinv { a: Var },
    SegmentMeanRows { x: Var, segs: Vec<(usize, usize)> },
    Conv3x3 { x: Var, weight: Var, bias: Var, h: usize, w: usize },
    GridDiff { x: Var, h: usize, w: usize, axis: GridAxis },
    SumAll { x: Var },
    Sqrt { x: Var },
}

/// Wengert list: forward values plus the operations that produced them.
pub struct Tape<E: Scalar> {
    vals: Vec<Tensor<E>>,
    ops: Vec<Op<E>>,
    grads: Vec<Option<Tensor<E>>>,
}

impl<E: Scalar> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> Tape<E> {
    pub fn new() -> Self {
        Tape {
            vals: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, val: Tensor<E>, op: Op<E>) -> Var {
        let id = self.vals.len();
        self.vals.push(val);
        self.ops.push(op);
        self.grads.push(None);
        Var(id)
    }

    /// Record an input value that gradients may flow into.
    pub fn leaf(&mut self, val: Tensor<E>) -> Var {
        self.push(val, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.vals[v.0]
    }

    /// Gradient accumulated for `v` by the last `backward` call.
    pub fn grad(&self, v: Var) -> Option<&Tensor<E>> {
        self.grads[v.0].as_ref()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    // -- recorded forward ops ------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let val = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(val, Op::Matmul { a, b }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let val = tensor::transpose(self.value(x))?;
        Ok(self.push(val, Op::Transpose { x }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let val = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(val, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let val = tensor::sub(self.value(a), self.value(b))?;
        Ok(self.push(val, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let val = tensor::mul(self.value(a), self.value(b))?;
        Ok(self.push(val, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: E) -> Var {
        let val = tensor::scale(self.value(x), c);
        self.push(val, Op::Scale { x, c })
    }

    pub fn add_row_broadcast(&mut self, x: Var, bias: Var) -> Result<Var> {
        let val = tensor::add_row_broadcast(self.value(x), self.value(bias))?;
        Ok(self.push(val, Op::AddRowBroadcast { x, bias }))
    }

    pub fn mul_col_broadcast(&mut self, x: Var, col: Var) -> Result<Var> {
        let val = tensor::mul_col_broadcast(self.value(x), self.value(col))?;
        Ok(self.push(val, Op::MulColBroadcast { x, col }))
    }

    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let val = tensor::row_sum(self.value(x))?;
        Ok(self.push(val, Op::RowSum { x }))
    }

    /// Elementwise `1 / max(x, floor)`.
    pub fn recip_guarded(&mut self, x: Var, floor: E) -> Var {
        let val = tensor::recip_guarded(self.value(x), floor);
        self.push(val, Op::RecipGuarded { x, floor })
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let val = tensor::softmax_rows(self.value(x))?;
        Ok(self.push(val, Op::SoftmaxRows { x }))
    }

    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var, eps: E) -> Result<Var> {
        let val = tensor::layernorm(self.value(x), self.value(gain), self.value(bias), eps)?;
        Ok(self.push(val, Op::LayerNorm { x, gain, bias, eps }))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let val = tensor::gelu(self.value(x));
        self.push(val, Op::Gelu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let val = tensor::sigmoid(self.value(x));
        self.push(val, Op::Sigmoid { x })
    }

    pub fn pinv(&mut self, a: Var) -> Result<Var> {
        let val = linalg::pinv(self.value(a))?;
        Ok(self.push(val, Op::Pinv { a }))
    }

    pub fn segment_mean_rows(&mut self, x: Var, segs: Vec<(usize, usize)>) -> Result<Var> {
        let val = tensor::segment_mean_rows(self.value(x), &segs)?;
        Ok(self.push(val, Op::SegmentMeanRows { x, segs }))
    }

    pub fn conv3x3(&mut self, x: Var, weight: Var, bias: Var, h: usize, w: usize) -> Result<Var> {
        let val = tensor::conv3x3(self.value(x), self.value(weight), self.value(bias), h, w)?;
        Ok(self.push(val, Op::Conv3x3 { x, weight, bias, h, w }))
    }

    pub fn grid_diff(&mut self, x: Var, h: usize, w: usize, axis: GridAxis) -> Result<Var> {
        let val = tensor::grid_diff(self.value(x), h, w, axis)?;
        Ok(self.push(val, Op::GridDiff { x, h, w, axis }))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let val = tensor::sum_all(self.value(x));
        self.push(val, Op::SumAll { x })
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let val = tensor::sqrt_elem(self.value(x));
        self.push(val, Op::Sqrt { x })
    }

    // -- backward ------------------------------------------------------------

    fn accumulate(&mut self, v: Var, delta: Tensor<E>) -> Result<()> {
        self.grads[v.0] = Some(match self.grads[v.0].take() {
            Some(existing) => tensor::add(&existing, &delta)?,
            None => delta,
        });
        Ok(())
    }

    /// Reverse pass from a scalar loss; gradients land in per-variable slots
    /// readable through [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.vals[loss.0].numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward (loss must be scalar)",
                lhs: self.vals[loss.0].shape().to_vec(),
                rhs: vec![],
            });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        let seed_shape = self.vals[loss.0].shape().to_vec();
        self.grads[loss.0] = Some(Tensor::full(&seed_shape, E::one()));
        for idx in (0..self.ops.len()).rev() {
            let Some(dy) = self.grads[idx].clone() else {
                continue;
            };
            let op = self.ops[idx].clone();
            self.backward_op(&op, Var(idx), &dy)?;
        }
        Ok(())
    }

    fn backward_op(&mut self, op: &Op<E>, out: Var, dy: &Tensor<E>) -> Result<()> {
        match *op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let bt = tensor::transpose(self.value(b))?;
                let da = tensor::matmul(dy, &bt)?;
                let at = tensor::transpose(self.value(a))?;
                let db = tensor::matmul(&at, dy)?;
                self.accumulate(a, da)?;
                self.accumulate(b, db)?;
            }
            Op::Transpose { x } => {
                self.accumulate(x, tensor::transpose(dy)?)?;
            }
            Op::Add { a, b } => {
                self.accumulate(a, dy.clone())?;
                self.accumulate(b, dy.clone())?;
            }
            Op::Sub { a, b } => {
                self.accumulate(a, dy.clone())?;
                self.accumulate(b, tensor::scale(dy, -E::one()))?;
            }
            Op::Mul { a, b } => {
                let da = tensor::mul(dy, self.value(b))?;
                let db = tensor::mul(dy, self.value(a))?;
                self.accumulate(a, da)?;
                self.accumulate(b, db)?;
            }
            Op::Scale { x, c } => {
                self.accumulate(x, tensor::scale(dy, c))?;
            }
            Op::AddRowBroadcast { x, bias } => {
                let (_, c) = dy.dims2()?;
                let mut db = vec![E::zero(); c];
                for row in dy.data().chunks_exact(c) {
                    for (acc, v) in db.iter_mut().zip(row.iter()) {
                        *acc = *acc + *v;
                    }
                }
                self.accumulate(x, dy.clone())?;
                self.accumulate(bias, Tensor::from_vec(vec![c], db)?)?;
            }
            Op::MulColBroadcast { x, col } => {
                let (n, c) = dy.dims2()?;
                let xv = self.value(x).clone();
                let colv = self.value(col).clone();
                let mut dx = Vec::with_capacity(n * c);
                let mut dcol = Vec::with_capacity(n);
                for i in 0..n {
                    let g = colv.data()[i];
                    let dyrow = &dy.data()[i * c..(i + 1) * c];
                    let xrow = &xv.data()[i * c..(i + 1) * c];
                    let mut dot = E::zero();
                    for (dv, xv) in dyrow.iter().zip(xrow.iter()) {
                        dx.push(*dv * g);
                        dot = dot + *dv * *xv;
                    }
                    dcol.push(dot);
                }
                self.accumulate(x, Tensor::from_vec(vec![n, c], dx)?)?;
                self.accumulate(col, Tensor::from_vec(vec![n, 1], dcol)?)?;
            }
            Op::RowSum { x } => {
                let (n, c) = self.value(x).dims2()?;
                let mut dx = Vec::with_capacity(n * c);
                for i in 0..n {
                    let g = dy.data()[i];
                    for _ in 0..c {
                        dx.push(g);
                    }
                }
                self.accumulate(x, Tensor::from_vec(vec![n, c], dx)?)?;
            }
            Op::RecipGuarded { x, floor } => {
                let xv = self.value(x).clone();
                let yv = self.value(out).clone();
                let dx: Vec<E> = dy
                    .data()
                    .iter()
                    .zip(xv.data().iter().zip(yv.data().iter()))
                    .map(|(&d, (&xi, &yi))| {
                        if xi > floor {
                            -d * yi * yi
                        } else {
                            E::zero()
                        }
                    })
                    .collect();
                self.accumulate(x, Tensor::from_vec(xv.shape().to_vec(), dx)?)?;
            }
            Op::SoftmaxRows { x } => {
                let s = self.value(out).clone();
                let (n, c) = s.dims2()?;
                let mut dx = Vec::with_capacity(n * c);
                for i in 0..n {
                    let srow = &s.data()[i * c..(i + 1) * c];
                    let dyrow = &dy.data()[i * c..(i + 1) * c];
                    let mut dot = E::zero();
                    for (sv, dv) in srow.iter().zip(dyrow.iter()) {
                        dot = dot + *sv * *dv;
                    }
                    for (sv, dv) in srow.iter().zip(dyrow.iter()) {
                        dx.push(*sv * (*dv - dot));
                    }
                }
                self.accumulate(x, Tensor::from_vec(vec![n, c], dx)?)?;
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let xv = self.value(x).clone();
                let gv = self.value(gain).clone();
                let (n, c) = xv.dims2()?;
                let inv_c = E::one() / E::from_f64(c as f64);
                let mut dx = Vec::with_capacity(n * c);
                let mut dgain = vec![E::zero(); c];
                let mut dbias = vec![E::zero(); c];
                for i in 0..n {
                    let row = &xv.data()[i * c..(i + 1) * c];
                    let dyrow = &dy.data()[i * c..(i + 1) * c];
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
                    // xhat, and the two row means the layernorm VJP needs.
                    let mut m1 = E::zero();
                    let mut m2 = E::zero();
                    let gd = gv.data();
                    for j in 0..c {
                        let xh = (row[j] - mean) * inv_std;
                        let dxh = dyrow[j] * gd[j];
                        m1 = m1 + dxh;
                        m2 = m2 + dxh * xh;
                        dgain[j] = dgain[j] + dyrow[j] * xh;
                        dbias[j] = dbias[j] + dyrow[j];
                    }
                    m1 = m1 * inv_c;
                    m2 = m2 * inv_c;
                    for j in 0..c {
                        let xh = (row[j] - mean) * inv_std;
                        let dxh = dyrow[j] * gd[j];
                        dx.push((dxh - m1 - xh * m2) * inv_std);
                    }
                }
                self.accumulate(x, Tensor::from_vec(vec![n, c], dx)?)?;
                self.accumulate(gain, Tensor::from_vec(vec![c], dgain)?)?;
                self.accumulate(bias, Tensor::from_vec(vec![c], dbias)?)?;
            }
            Op::Gelu { x } => {
                let xv = self.value(x).clone();
                let dx: Vec<E> = dy
                    .data()
                    .iter()
                    .zip(xv.data().iter())
                    .map(|(&d, &xi)| d * tensor::gelu_grad_scalar(xi))
                    .collect();
                self.accumulate(x, Tensor::from_vec(xv.shape().to_vec(), dx)?)?;
            }
            Op::Sigmoid { x } => {
                let yv = self.value(out).clone();
                let dx: Vec<E> = dy
                    .data()
                    .iter()
                    .zip(yv.data().iter())
                    .map(|(&d, &yi)| d * yi * (E::one() - yi))
                    .collect();
                self.accumulate(x, Tensor::from_vec(yv.shape().to_vec(), dx)?)?;
            }
            Op::Pinv { a } => {
                // Constant-rank differential of the pseudoinverse
                // (Golub & Pereyra), expressed with only A and Y = pinv(A):
                //   dA = -Y^T G Y^T + (I - A Y) G^T (Y Y^T) + (Y^T Y) G^T (I - Y A)
                let av = self.value(a).clone();
                let yv = self.value(out).clone();
                let (p, _) = av.dims2()?;
                let eye = identity::<E>(p);
                let yt = tensor::transpose(&yv)?;
                let gt = tensor::transpose(dy)?;
                let t1 = tensor::scale(
                    &tensor::matmul(&tensor::matmul(&yt, dy)?, &yt)?,
                    -E::one(),
                );
                let i_ay = tensor::sub(&eye, &tensor::matmul(&av, &yv)?)?;
                let yyt = tensor::matmul(&yv, &yt)?;
                let t2 = tensor::matmul(&tensor::matmul(&i_ay, &gt)?, &yyt)?;
                let i_ya = tensor::sub(&eye, &tensor::matmul(&yv, &av)?)?;
                let yty = tensor::matmul(&yt, &yv)?;
                let t3 = tensor::matmul(&tensor::matmul(&yty, &gt)?, &i_ya)?;
                let da = tensor::add(&tensor::add(&t1, &t2)?, &t3)?;
                self.accumulate(a, da)?;
            }
            Op::SegmentMeanRows { x, ref segs } => {
                let (n, c) = self.value(x).dims2()?;
                let mut dx = vec![E::zero(); n * c];
                for (s, &(start, end)) in segs.iter().enumerate() {
                    let inv = E::one() / E::from_f64((end - start) as f64);
                    let dyrow = &dy.data()[s * c..(s + 1) * c];
                    for r in start..end {
                        for j in 0..c {
                            dx[r * c + j] = dx[r * c + j] + dyrow[j] * inv;
                        }
                    }
                }
                self.accumulate(x, Tensor::from_vec(vec![n, c], dx)?)?;
            }
            Op::Conv3x3 { x, weight, bias, h, w } => {
                let xv = self.value(x).clone();
                let wv = self.value(weight).clone();
                let (_, c_in) = xv.dims2()?;
                let (c_out, wk) = wv.dims2()?;
                let mut dx = vec![E::zero(); h * w * c_in];
                let mut dw = vec![E::zero(); c_out * wk];
                let mut db = vec![E::zero(); c_out];
                for r in 0..h {
                    for cc in 0..w {
                        let dyrow = &dy.data()[(r * w + cc) * c_out..(r * w + cc + 1) * c_out];
                        for (o, &g) in dyrow.iter().enumerate() {
                            db[o] = db[o] + g;
                            let wrow = &wv.data()[o * wk..(o + 1) * wk];
                            for dr in 0..3usize {
                                let rr = r as isize + dr as isize - 1;
                                if rr < 0 || rr >= h as isize {
                                    continue;
                                }
                                for dc in 0..3usize {
                                    let ccc = cc as isize + dc as isize - 1;
                                    if ccc < 0 || ccc >= w as isize {
                                        continue;
                                    }
                                    let xbase = (rr as usize * w + ccc as usize) * c_in;
                                    for ci in 0..c_in {
                                        let widx = o * wk + ci * 9 + dr * 3 + dc;
                                        dw[widx] = dw[widx] + g * xv.data()[xbase + ci];
                                        dx[xbase + ci] =
                                            dx[xbase + ci] + g * wrow[ci * 9 + dr * 3 + dc];
                                    }
                                }
                            }
                        }
                    }
                }
                self.accumulate(x, Tensor::from_vec(vec![h * w, c_in], dx)?)?;
                self.accumulate(weight, Tensor::from_vec(vec![c_out, wk], dw)?)?;
                self.accumulate(bias, Tensor::from_vec(vec![c_out], db)?)?;
            }
            Op::GridDiff { x, h, w, axis } => {
                let (n, c) = self.value(x).dims2()?;
                let len = match axis {
                    GridAxis::Row => h,
                    GridAxis::Col => w,
                };
                let spacing = 1.0 / (len as f64 - 1.0);
                let inv2h = E::from_f64(0.5 / spacing);
                let four = E::from_f64(4.0);
                let three = E::from_f64(3.0);
                let idx = |r: usize, cc: usize| (r * w + cc) * c;
                let mut dx = vec![E::zero(); n * c];
                for r in 0..h {
                    for cc in 0..w {
                        let pos = match axis {
                            GridAxis::Row => r,
                            GridAxis::Col => cc,
                        };
                        let at = |p: usize| match axis {
                            GridAxis::Row => idx(p, cc),
                            GridAxis::Col => idx(r, p),
                        };
                        let o = idx(r, cc);
                        for ch in 0..c {
                            let g = dy.data()[o + ch] * inv2h;
                            if pos == 0 {
                                dx[at(0) + ch] = dx[at(0) + ch] - three * g;
                                dx[at(1) + ch] = dx[at(1) + ch] + four * g;
                                dx[at(2) + ch] = dx[at(2) + ch] - g;
                            } else if pos == len - 1 {
                                dx[at(len - 1) + ch] = dx[at(len - 1) + ch] + three * g;
                                dx[at(len - 2) + ch] = dx[at(len - 2) + ch] - four * g;
                                dx[at(len - 3) + ch] = dx[at(len - 3) + ch] + g;
                            } else {
                                dx[at(pos + 1) + ch] = dx[at(pos + 1) + ch] + g;
                                dx[at(pos - 1) + ch] = dx[at(pos - 1) + ch] - g;
                            }
                        }
                    }
                }
                self.accumulate(x, Tensor::from_vec(vec![n, c], dx)?)?;
            }
            Op::SumAll { x } => {
                let shape = self.value(x).shape().to_vec();
                let g = dy.item();
                self.accumulate(x, Tensor::full(&shape, g))?;
            }
            Op::Sqrt { x } => {
                let yv = self.value(out).clone();
                let half = E::from_f64(0.5);
                let dx: Vec<E> = dy
                    .data()
                    .iter()
                    .zip(yv.data().iter())
                    .map(|(&d, &yi)| d * half / yi)
                    .collect();
                self.accumulate(x, Tensor::from_vec(yv.shape().to_vec(), dx)?)?;
            }
        }
        Ok(())
    }
}

fn identity<E: Scalar>(p: usize) -> Tensor<E> {
    let mut data = vec![E::zero(); p * p];
    for i in 0..p {
        data[i * p + i] = E::one();
    }
    Tensor::from_vec(vec![p, p], data).expect("identity shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_linear_map_grad_is_input_broadcast() {
        // loss = sum(W x) with fixed x: dL/dW = x^T broadcast over rows of W.
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::from_vec(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let x = tape.leaf(Tensor::from_vec(vec![3, 1], vec![7., 8., 9.]).unwrap());
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        let gw = tape.grad(w).unwrap();
        assert_eq!(gw.data(), &[7., 8., 9., 7., 8., 9.]);
    }

    #[test]
    fn unreachable_leaf_has_no_grad() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::scalar(1.0));
        let b = tape.leaf(Tensor::scalar(2.0));
        let loss = tape.scale(a, 3.0);
        tape.backward(loss).unwrap();
        assert!(tape.grad(b).is_none());
        assert_eq!(tape.grad(a).unwrap().item(), 3.0);
    }

    #[test]
    fn non_scalar_loss_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![2, 1], vec![1.0, 2.0]).unwrap());
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn grad_accumulates_across_multiple_uses() {
        // loss = sum(a * a) => grad = 2a through the two Mul branches.
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![1, 2], vec![3.0, -4.0]).unwrap());
        let sq = tape.mul(a, a).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap().data(), &[6.0, -8.0]);
    }
}
