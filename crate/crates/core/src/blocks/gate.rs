//! Gated mechanism: a single-channel sigmoid map modulates the global
//! features over three gated layers, with the position term re-added at
//! every layer.

use alloc::format;

use crate::error::{Error, Result};
use crate::nn::{Conv3, Linear};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

/// Number of gated layers; fixed by the architecture.
pub const GATED_LAYERS: usize = 3;

/// The single-channel gating map producer. Point clouds use a per-point
/// linear map; square grids a 3x3 convolution.
#[derive(Debug, Clone)]
pub enum GateConv {
    Pointwise(Linear),
    Grid(Conv3),
}

#[derive(Debug, Clone)]
pub struct GateParams {
    pub conv: GateConv,
}

impl GateParams {
    pub fn init_pointwise<E: Scalar>(
        store: &mut ParamStore<E>,
        prefix: &str,
        channels: usize,
        rng: &mut Rng,
    ) -> Self {
        GateParams {
            conv: GateConv::Pointwise(Linear::init(
                store,
                &format!("{prefix}.conv"),
                channels,
                1,
                rng,
            )),
        }
    }

    pub fn init_grid<E: Scalar>(
        store: &mut ParamStore<E>,
        prefix: &str,
        channels: usize,
        rng: &mut Rng,
    ) -> Self {
        GateParams {
            conv: GateConv::Grid(Conv3::init(store, &format!("{prefix}.conv"), channels, 1, rng)),
        }
    }

    pub fn param_count(channels: usize, grid: bool) -> usize {
        if grid {
            Conv3::param_count(channels, 1)
        } else {
            Linear::param_count(channels, 1)
        }
    }
}

/// Gated fusion of the global features with the position term:
/// the gating map `g = sigmoid(conv(f_global))` is computed once, then
/// `f <- g * f + pos_term` is applied [`GATED_LAYERS`] times starting from
/// `f = f_global`. The map is broadcast across channels.
pub fn gated_fuse<E: Scalar>(
    tape: &mut Tape<E>,
    bound: &BoundParams,
    f_global: Var,
    pos_term: Var,
    gate: &GateParams,
    grid_dims: Option<(usize, usize)>,
) -> Result<Var> {
    let pre = match &gate.conv {
        GateConv::Pointwise(l) => l.forward(tape, bound, f_global)?,
        GateConv::Grid(c) => {
            let (h, w) = grid_dims.ok_or(Error::InvalidConfig {
                field: "geometry_kind",
                msg: "grid gating requires grid dimensions".into(),
            })?;
            c.forward(tape, bound, f_global, h, w)?
        }
    };
    let g = tape.sigmoid(pre);
    let mut f = f_global;
    for _ in 0..GATED_LAYERS {
        let gated = tape.mul_col_broadcast(f, g)?;
        f = tape.add(gated, pos_term)?;
    }
    Ok(f)
}
