//! Small layer primitives shared by all blocks: linear maps, layer norm
//! affine pairs, two-layer MLPs, and the 3x3 grid convolution.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Result;
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LAYERNORM_EPS: f64 = 1e-5;

/// `y = x W + b` with `W: [in, out]`, `b: [out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn init<E: Scalar>(
        store: &mut ParamStore<E>,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let w = store.create_weight(format!("{prefix}.w"), in_dim, out_dim, rng);
        let b = store.create(format!("{prefix}.b"), Tensor::zeros(&[out_dim]));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward<E: Scalar>(
        &self,
        tape: &mut Tape<E>,
        bound: &BoundParams,
        x: Var,
    ) -> Result<Var> {
        let y = tape.matmul(x, bound.var(self.w))?;
        tape.add_row_broadcast(y, bound.var(self.b))
    }

    pub fn param_count(in_dim: usize, out_dim: usize) -> usize {
        in_dim * out_dim + out_dim
    }
}

/// Gain/bias affine pair for layer normalization; gain starts at one.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn init<E: Scalar>(store: &mut ParamStore<E>, prefix: &str, dim: usize) -> Self {
        let gain = store.create(format!("{prefix}.gain"), Tensor::full(&[dim], E::one()));
        let bias = store.create(format!("{prefix}.bias"), Tensor::zeros(&[dim]));
        LayerNorm { gain, bias }
    }

    pub fn forward<E: Scalar>(
        &self,
        tape: &mut Tape<E>,
        bound: &BoundParams,
        x: Var,
    ) -> Result<Var> {
        tape.layernorm(
            x,
            bound.var(self.gain),
            bound.var(self.bias),
            E::from_f64(LAYERNORM_EPS),
        )
    }

    pub fn param_count(dim: usize) -> usize {
        2 * dim
    }
}

/// Two-layer MLP with a GELU in between.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    pub fn init<E: Scalar>(
        store: &mut ParamStore<E>,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let l1 = Linear::init(store, &format!("{prefix}.l1"), in_dim, hidden, rng);
        let l2 = Linear::init(store, &format!("{prefix}.l2"), hidden, out_dim, rng);
        Mlp { l1, l2 }
    }

    pub fn forward<E: Scalar>(
        &self,
        tape: &mut Tape<E>,
        bound: &BoundParams,
        x: Var,
    ) -> Result<Var> {
        let h = self.l1.forward(tape, bound, x)?;
        let h = tape.gelu(h);
        self.l2.forward(tape, bound, h)
    }

    pub fn param_count(in_dim: usize, hidden: usize, out_dim: usize) -> usize {
        Linear::param_count(in_dim, hidden) + Linear::param_count(hidden, out_dim)
    }
}

/// 3x3 same-padding convolution for square-grid geometries.
#[derive(Debug, Clone)]
pub struct Conv3 {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv3 {
    pub fn init<E: Scalar>(
        store: &mut ParamStore<E>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = c_in * 9;
        let w = store.create_uniform(format!("{prefix}.w"), &[c_out, c_in * 9], fan_in, rng);
        let b = store.create(format!("{prefix}.b"), Tensor::zeros(&[c_out]));
        Conv3 { w, b, c_in, c_out }
    }

    pub fn forward<E: Scalar>(
        &self,
        tape: &mut Tape<E>,
        bound: &BoundParams,
        x: Var,
        h: usize,
        w: usize,
    ) -> Result<Var> {
        tape.conv3x3(x, bound.var(self.w), bound.var(self.b), h, w)
    }

    pub fn param_count(c_in: usize, c_out: usize) -> usize {
        c_out * c_in * 9 + c_out
    }
}

/// Collect the ids of a set of layers, for grouped reporting.
pub fn linear_ids(l: &Linear) -> Vec<ParamId> {
    [l.w, l.b].to_vec()
}
