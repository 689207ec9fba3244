//! Focal block: soft-assign points to slices, aggregate slices into
//! physics-aware tokens, run exact attention over the tokens, and deslice
//! back to points.

use alloc::format;

use crate::error::{Error, Result};
use crate::nn::{Conv3, Linear, Mlp};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

use super::global::AttentionProj;

/// Floor for token denominators so empty slices cannot divide by zero.
/// Healthy slices (denominator above the floor) divide exactly.
pub const EMPTY_SLICE_EPS: f64 = 1e-8;

/// Projection from point features to slice logits. Square grids use a local
/// 3x3 convolution, everything else a linear layer.
#[derive(Debug, Clone)]
pub enum MapLayer {
    Linear(Linear),
    Conv(Conv3),
}

impl MapLayer {
    fn forward<E: Scalar>(
        &self,
        tape: &mut Tape<E>,
        bound: &BoundParams,
        x: Var,
        grid_dims: Option<(usize, usize)>,
    ) -> Result<Var> {
        match self {
            MapLayer::Linear(l) => l.forward(tape, bound, x),
            MapLayer::Conv(c) => {
                let (h, w) = grid_dims.ok_or(Error::InvalidConfig {
                    field: "geometry_kind",
                    msg: "grid slice map requires grid dimensions".into(),
                })?;
                c.forward(tape, bound, x, h, w)
            }
        }
    }
}

/// Per-point slice assignment weights: `softmax(map(f))`, rows over the
/// slice dimension so every row sums to one.
pub fn slice_weights<E: Scalar>(
    tape: &mut Tape<E>,
    bound: &BoundParams,
    f: Var,
    map: &MapLayer,
    grid_dims: Option<(usize, usize)>,
) -> Result<Var> {
    let logits = map.forward(tape, bound, f, grid_dims)?;
    tape.softmax_rows(logits)
}

/// Weighted-mean aggregation of point features into per-slice tokens:
/// `t_j = sum_i w_ij f_i / sum_i w_ij`, denominators floored at
/// [`EMPTY_SLICE_EPS`].
pub fn aggregate_tokens<E: Scalar>(tape: &mut Tape<E>, f: Var, w: Var) -> Result<Var> {
    let wt = tape.transpose(w)?; // [l, n]
    let num = tape.matmul(wt, f)?; // [l, c]
    let den = tape.row_sum(wt)?; // [l, 1]
    let inv = tape.recip_guarded(den, E::from_f64(EMPTY_SLICE_EPS));
    tape.mul_col_broadcast(num, inv)
}

/// Exact softmax attention over the token set; no approximation since the
/// slice count is small.
pub fn physics_attention_tokens<E: Scalar>(
    tape: &mut Tape<E>,
    bound: &BoundParams,
    tokens: Var,
    proj: &AttentionProj,
) -> Result<Var> {
    let q = proj.wq.forward(tape, bound, tokens)?;
    let k = proj.wk.forward(tape, bound, tokens)?;
    let v = proj.wv.forward(tape, bound, tokens)?;
    let c = tape.value(q).dims2()?.1;
    let scale = E::from_f64(1.0 / (c as f64).sqrt());
    let kt = tape.transpose(k)?;
    let logits = tape.matmul(q, kt)?;
    let logits = tape.scale(logits, scale);
    let attn = tape.softmax_rows(logits)?;
    tape.matmul(attn, v)
}

/// Broadcast transformed tokens back to points: `f'_i = sum_j w_ij t'_j`.
pub fn deslice<E: Scalar>(tape: &mut Tape<E>, w: Var, t_prime: Var) -> Result<Var> {
    tape.matmul(w, t_prime)
}

/// One focal layer, same pre-norm residual scheme as the global layer with
/// the slice -> token -> attend -> deslice pipeline in place of the
/// Nystrom attention.
#[derive(Debug, Clone)]
pub struct FocalLayer {
    pub ln1: crate::nn::LayerNorm,
    pub map: MapLayer,
    pub attn: AttentionProj,
    pub ln2: crate::nn::LayerNorm,
    pub ffn: Mlp,
    pub slices: usize,
}

impl FocalLayer {
    pub fn init<E: Scalar>(
        store: &mut ParamStore<E>,
        prefix: &str,
        channels: usize,
        slices: usize,
        grid: bool,
        rng: &mut Rng,
    ) -> Self {
        let ln1 = crate::nn::LayerNorm::init(store, &format!("{prefix}.ln1"), channels);
        let map = if grid {
            MapLayer::Conv(Conv3::init(store, &format!("{prefix}.map"), channels, slices, rng))
        } else {
            MapLayer::Linear(Linear::init(
                store,
                &format!("{prefix}.map"),
                channels,
                slices,
                rng,
            ))
        };
        let attn = AttentionProj::init(store, &format!("{prefix}.attn"), channels, rng);
        let ln2 = crate::nn::LayerNorm::init(store, &format!("{prefix}.ln2"), channels);
        let ffn = Mlp::init(
            store,
            &format!("{prefix}.ffn"),
            channels,
            2 * channels,
            channels,
            rng,
        );
        FocalLayer {
            ln1,
            map,
            attn,
            ln2,
            ffn,
            slices,
        }
    }

    pub fn param_count(channels: usize, slices: usize, grid: bool) -> usize {
        let map = if grid {
            Conv3::param_count(channels, slices)
        } else {
            Linear::param_count(channels, slices)
        };
        2 * crate::nn::LayerNorm::param_count(channels)
            + map
            + AttentionProj::param_count(channels)
            + Mlp::param_count(channels, 2 * channels, channels)
    }
}

pub fn focal_layer<E: Scalar>(
    tape: &mut Tape<E>,
    bound: &BoundParams,
    f_prev: Var,
    layer: &FocalLayer,
    grid_dims: Option<(usize, usize)>,
) -> Result<Var> {
    let x1 = layer.ln1.forward(tape, bound, f_prev)?;
    let w = slice_weights(tape, bound, x1, &layer.map, grid_dims)?;
    let tokens = aggregate_tokens(tape, x1, w)?;
    let t_prime = physics_attention_tokens(tape, bound, tokens, &layer.attn)?;
    let f_points = deslice(tape, w, t_prime)?;
    let f_hat = tape.add(f_points, f_prev)?;
    let x2 = layer.ln2.forward(tape, bound, f_hat)?;
    let ff = layer.ffn.forward(tape, bound, x2)?;
    tape.add(ff, f_hat)
}
