//! Global block: softmax attention approximated with the Nystrom method.
//!
//! Landmarks are contiguous segment means of the query/key rows, the
//! standard Nystromformer recipe. That makes the block order-dependent for
//! point clouds, so dataset point order is part of the data contract.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::segment_bounds;

/// Query/key/value projections of one attention block.
#[derive(Debug, Clone)]
pub struct AttentionProj {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
}

impl AttentionProj {
    pub fn init<E: Scalar>(
        store: &mut ParamStore<E>,
        prefix: &str,
        channels: usize,
        rng: &mut Rng,
    ) -> Self {
        AttentionProj {
            wq: Linear::init(store, &format!("{prefix}.wq"), channels, channels, rng),
            wk: Linear::init(store, &format!("{prefix}.wk"), channels, channels, rng),
            wv: Linear::init(store, &format!("{prefix}.wv"), channels, channels, rng),
        }
    }

    pub fn param_count(channels: usize) -> usize {
        3 * Linear::param_count(channels, channels)
    }
}

/// Nystrom-approximated softmax attention over `f: [n, c]`.
///
/// With landmark sets `q~`, `k~` built as segment means of `q`, `k`, the
/// attention matrix is approximated by
/// `softmax(q k~^T / sqrt(c)) . pinv(softmax(q~ k~^T / sqrt(c))) . softmax(q~ k^T / sqrt(c))`
/// and applied to `v`. When the landmark count reaches `n`, the landmarks
/// are exactly the full query/key sets and the product collapses to exact
/// attention through the Moore-Penrose identity.
pub fn nystrom_attention<E: Scalar>(
    tape: &mut Tape<E>,
    bound: &BoundParams,
    f: Var,
    proj: &AttentionProj,
    landmarks: usize,
) -> Result<Var> {
    if landmarks < 1 {
        return Err(Error::InvalidConfig {
            field: "landmark_num",
            msg: "must be at least 1".into(),
        });
    }
    let (n, _) = tape.value(f).dims2()?;
    let l_eff = landmarks.min(n);

    let q = proj.wq.forward(tape, bound, f)?;
    let k = proj.wk.forward(tape, bound, f)?;
    let v = proj.wv.forward(tape, bound, f)?;
    let c = tape.value(q).dims2()?.1;
    let scale = E::from_f64(1.0 / (c as f64).sqrt());

    let segs: Vec<(usize, usize)> = segment_bounds(n, l_eff);
    let q_lm = tape.segment_mean_rows(q, segs.clone())?;
    let k_lm = tape.segment_mean_rows(k, segs)?;

    let k_lm_t = tape.transpose(k_lm)?;
    let logits_left = tape.matmul(q, k_lm_t)?;
    let logits_left = tape.scale(logits_left, scale);
    let left = tape.softmax_rows(logits_left)?; // [n, l]

    let logits_core = tape.matmul(q_lm, k_lm_t)?;
    let logits_core = tape.scale(logits_core, scale);
    let core = tape.softmax_rows(logits_core)?; // [l, l]

    let k_t = tape.transpose(k)?;
    let logits_right = tape.matmul(q_lm, k_t)?;
    let logits_right = tape.scale(logits_right, scale);
    let right = tape.softmax_rows(logits_right)?; // [l, n]

    let core_pinv = tape.pinv(core)?;

    // (left . core_pinv . right) . v, evaluated right-to-left so nothing
    // n-by-n is ever materialized.
    let rv = tape.matmul(right, v)?;
    let crv = tape.matmul(core_pinv, rv)?;
    tape.matmul(left, crv)
}

/// One global layer: pre-norm residual attention followed by a pre-norm
/// residual feed-forward.
#[derive(Debug, Clone)]
pub struct GlobalLayer {
    pub ln1: crate::nn::LayerNorm,
    pub attn: AttentionProj,
    pub ln2: crate::nn::LayerNorm,
    pub ffn: Mlp,
    pub landmarks: usize,
}

impl GlobalLayer {
    pub fn init<E: Scalar>(
        store: &mut ParamStore<E>,
        prefix: &str,
        channels: usize,
        landmarks: usize,
        rng: &mut Rng,
    ) -> Self {
        GlobalLayer {
            ln1: crate::nn::LayerNorm::init(store, &format!("{prefix}.ln1"), channels),
            attn: AttentionProj::init(store, &format!("{prefix}.attn"), channels, rng),
            ln2: crate::nn::LayerNorm::init(store, &format!("{prefix}.ln2"), channels),
            ffn: Mlp::init(
                store,
                &format!("{prefix}.ffn"),
                channels,
                2 * channels,
                channels,
                rng,
            ),
            landmarks,
        }
    }

    pub fn param_count(channels: usize) -> usize {
        2 * crate::nn::LayerNorm::param_count(channels)
            + AttentionProj::param_count(channels)
            + Mlp::param_count(channels, 2 * channels, channels)
    }
}

pub fn global_layer<E: Scalar>(
    tape: &mut Tape<E>,
    bound: &BoundParams,
    f_prev: Var,
    layer: &GlobalLayer,
) -> Result<Var> {
    let x1 = layer.ln1.forward(tape, bound, f_prev)?;
    let attn = nystrom_attention(tape, bound, x1, &layer.attn, layer.landmarks)?;
    let f_hat = tape.add(attn, f_prev)?;
    let x2 = layer.ln2.forward(tape, bound, f_hat)?;
    let ff = layer.ffn.forward(tape, bound, x2)?;
    tape.add(ff, f_hat)
}
