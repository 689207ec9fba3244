//! The assembled model: encoder, global layers, gated fusion with position
//! encoding, focal layers, decoder.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::blocks::{
    build_reference_grid, encode_position, focal_layer, gated_fuse, global_layer, FocalLayer,
    GateParams, GlobalLayer, ReferenceGrid,
};
use crate::error::{Error, Result};
use crate::nn::{LayerNorm, Linear, Mlp};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::scalar::{Dtype, Scalar};
use crate::tape::{Tape, Var};
use crate::tensor::{self, GridAxis, Tensor};

/// How the point set is laid out; decides the slice-map and gating-conv
/// realizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    PointCloud,
    StructuredGrid,
}

impl GeometryKind {
    pub fn code(self) -> u8 {
        match self {
            GeometryKind::PointCloud => 0,
            GeometryKind::StructuredGrid => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(GeometryKind::PointCloud),
            1 => Some(GeometryKind::StructuredGrid),
            _ => None,
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GFocalConfig {
    /// Global (Nystrom) layer count M.
    pub global_depth: usize,
    /// Focal (physics attention) layer count K.
    pub focal_depth: usize,
    /// Channel width C.
    pub channels: usize,
    /// Slice count L of the focal block.
    pub slice_num: usize,
    /// Landmark cap for the global block; the effective count is
    /// `min(landmark_num, n)` per forward.
    pub landmark_num: usize,
    /// Reference grid resolution R per axis.
    pub grid_resolution: usize,
    /// Coordinate dimension D.
    pub coord_dim: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    pub geometry: GeometryKind,
    pub dtype: Dtype,
}

impl GFocalConfig {
    /// Preset matching the paper's Darcy configuration.
    pub fn darcy() -> Self {
        GFocalConfig {
            global_depth: 6,
            focal_depth: 3,
            channels: 128,
            slice_num: 64,
            geometry: GeometryKind::StructuredGrid,
            ..GFocalConfig::base()
        }
    }

    /// Preset matching the paper's Elasticity configuration.
    pub fn elasticity() -> Self {
        GFocalConfig {
            global_depth: 5,
            focal_depth: 5,
            channels: 128,
            slice_num: 32,
            geometry: GeometryKind::PointCloud,
            ..GFocalConfig::base()
        }
    }

    /// Small default used when no preset is requested.
    pub fn base() -> Self {
        GFocalConfig {
            global_depth: 2,
            focal_depth: 1,
            channels: 32,
            slice_num: 8,
            landmark_num: 64,
            grid_resolution: 8,
            coord_dim: 2,
            input_channels: 1,
            output_channels: 1,
            geometry: GeometryKind::PointCloud,
            dtype: Dtype::F32,
        }
    }

    /// The f64 configuration the gradient-integrity suite runs on.
    pub fn tiny() -> Self {
        GFocalConfig {
            global_depth: 1,
            focal_depth: 1,
            channels: 8,
            slice_num: 4,
            landmark_num: 4,
            grid_resolution: 4,
            dtype: Dtype::F64,
            ..GFocalConfig::base()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn at_least(field: &'static str, value: usize, min: usize) -> Result<()> {
            if value < min {
                return Err(Error::InvalidConfig {
                    field,
                    msg: format!("must be at least {min}, got {value}"),
                });
            }
            Ok(())
        }
        at_least("global_depth", self.global_depth, 1)?;
        at_least("focal_depth", self.focal_depth, 1)?;
        at_least("channels", self.channels, 1)?;
        at_least("slice_num", self.slice_num, 1)?;
        at_least("landmark_num", self.landmark_num, 1)?;
        at_least("grid_resolution", self.grid_resolution, 2)?;
        at_least("input_channels", self.input_channels, 1)?;
        at_least("output_channels", self.output_channels, 1)?;
        if !(1..=3).contains(&self.coord_dim) {
            return Err(Error::InvalidConfig {
                field: "coord_dim",
                msg: format!("must be 1, 2, or 3, got {}", self.coord_dim),
            });
        }
        Ok(())
    }

    /// Golden parameter count: a pure function of the configuration.
    pub fn parameter_count(&self) -> usize {
        let c = self.channels;
        let grid = self.geometry == GeometryKind::StructuredGrid;
        let dist_features = self.grid_resolution.pow(self.coord_dim as u32);
        let encoder = Mlp::param_count(self.coord_dim + self.input_channels, c, c);
        let global = self.global_depth * GlobalLayer::param_count(c);
        let pos = Mlp::param_count(dist_features, c, c);
        let gate = GateParams::param_count(c, grid);
        let focal = self.focal_depth * FocalLayer::param_count(c, self.slice_num, grid);
        let decoder = Mlp::param_count(c, c, self.output_channels);
        encoder + global + pos + gate + focal + decoder
    }
}

/// A built model: parameter store plus the layer wiring.
pub struct GFocalModel<E: Scalar> {
    pub config: GFocalConfig,
    pub store: ParamStore<E>,
    pub encoder: Mlp,
    pub global: Vec<GlobalLayer>,
    pub grid: ReferenceGrid,
    pub pos_mlp: Mlp,
    pub gate: GateParams,
    pub focal: Vec<FocalLayer>,
    pub decoder: Mlp,
}

/// Deterministically initialize a model from a config and seed.
pub fn build_model<E: Scalar>(config: GFocalConfig, seed: u64) -> Result<GFocalModel<E>> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    let c = config.channels;
    let grid_geometry = config.geometry == GeometryKind::StructuredGrid;

    let encoder = Mlp::init(
        &mut store,
        "encoder",
        config.coord_dim + config.input_channels,
        c,
        c,
        &mut rng,
    );
    let global = (0..config.global_depth)
        .map(|m| {
            GlobalLayer::init(
                &mut store,
                &format!("global.{m}"),
                c,
                config.landmark_num,
                &mut rng,
            )
        })
        .collect();
    let grid = build_reference_grid(config.grid_resolution, config.coord_dim)?;
    let pos_mlp = Mlp::init(&mut store, "posenc", grid.len(), c, c, &mut rng);
    let gate = if grid_geometry {
        GateParams::init_grid(&mut store, "gate", c, &mut rng)
    } else {
        GateParams::init_pointwise(&mut store, "gate", c, &mut rng)
    };
    let focal = (0..config.focal_depth)
        .map(|k| {
            FocalLayer::init(
                &mut store,
                &format!("focal.{k}"),
                c,
                config.slice_num,
                grid_geometry,
                &mut rng,
            )
        })
        .collect();
    let decoder = Mlp::init(&mut store, "decoder", c, c, config.output_channels, &mut rng);

    Ok(GFocalModel {
        config,
        store,
        encoder,
        global,
        grid,
        pos_mlp,
        gate,
        focal,
        decoder,
    })
}

impl<E: Scalar> GFocalModel<E> {
    /// Square grid side when the geometry is a structured grid.
    fn grid_dims(&self, n: usize) -> Result<Option<(usize, usize)>> {
        match self.config.geometry {
            GeometryKind::PointCloud => Ok(None),
            GeometryKind::StructuredGrid => {
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(Error::InvalidConfig {
                        field: "geometry_kind",
                        msg: format!("structured grid needs a square point count, got {n}"),
                    });
                }
                Ok(Some((side, side)))
            }
        }
    }

    /// Full taped forward pass; returns the output variable `[n, out]`.
    /// A non-finite value after any stage is an error naming that stage.
    pub fn forward(
        &self,
        tape: &mut Tape<E>,
        bound: &BoundParams,
        coords: &Tensor<E>,
        input: &Tensor<E>,
    ) -> Result<Var> {
        let (n, d) = coords.dims2()?;
        let (n2, _) = input.dims2()?;
        if d != self.config.coord_dim || n2 != n || n == 0 {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: coords.shape().to_vec(),
                rhs: input.shape().to_vec(),
            });
        }
        let grid_dims = self.grid_dims(n)?;

        let enc_in = tensor::concat_cols(coords, input)?;
        let enc_in = tape.leaf(enc_in);
        let mut x = self.encoder.forward(tape, bound, enc_in)?;
        check_finite(tape, x, "encoder")?;

        for (m, layer) in self.global.iter().enumerate() {
            x = global_layer(tape, bound, x, layer)?;
            check_finite(tape, x, &format!("global_layer[{m}]"))?;
        }

        let pos = encode_position(tape, bound, coords, &self.grid, &self.pos_mlp)?;
        check_finite(tape, pos, "position_encoder")?;

        x = gated_fuse(tape, bound, x, pos, &self.gate, grid_dims)?;
        check_finite(tape, x, "gated_fuse")?;

        for (k, layer) in self.focal.iter().enumerate() {
            x = focal_layer(tape, bound, x, layer, grid_dims)?;
            check_finite(tape, x, &format!("focal_layer[{k}]"))?;
        }

        let out = self.decoder.forward(tape, bound, x)?;
        check_finite(tape, out, "decoder")?;
        Ok(out)
    }

    /// Inference-only forward on a throwaway tape.
    pub fn predict(&self, coords: &Tensor<E>, input: &Tensor<E>) -> Result<Tensor<E>> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, coords, input)?;
        Ok(tape.value(out).clone())
    }
}

fn check_finite<E: Scalar>(tape: &Tape<E>, v: Var, stage: &str) -> Result<()> {
    if !tape.value(v).is_finite() {
        return Err(Error::NonFinite {
            stage: String::from(stage),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Taped training losses
// ---------------------------------------------------------------------------

/// Relative L2 loss `||pred - truth||_2 / ||truth||_2` as a tape scalar.
/// The denominator is constant with respect to the parameters.
pub fn rl2_loss<E: Scalar>(tape: &mut Tape<E>, pred: Var, truth: &Tensor<E>) -> Result<Var> {
    let denom = l2_norm(truth);
    if denom == 0.0 {
        return Err(Error::Numeric {
            msg: "relative L2 undefined for zero truth field".into(),
        });
    }
    let t = tape.leaf(truth.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.mul(diff, diff)?;
    let s = tape.sum_all(sq);
    let norm = tape.sqrt(s);
    Ok(tape.scale(norm, E::from_f64(1.0 / denom)))
}

/// Spatial-gradient regularization: relative L2 between the grid
/// finite-difference gradients of prediction and truth, both axes stacked.
pub fn grad_reg_loss<E: Scalar>(
    tape: &mut Tape<E>,
    pred: Var,
    truth: &Tensor<E>,
    h: usize,
    w: usize,
) -> Result<Var> {
    let gx_t = tensor::grid_diff(truth, h, w, GridAxis::Col)?;
    let gy_t = tensor::grid_diff(truth, h, w, GridAxis::Row)?;
    let denom = (l2_norm(&gx_t).powi(2) + l2_norm(&gy_t).powi(2)).sqrt();
    if denom == 0.0 {
        return Err(Error::Numeric {
            msg: "gradient loss undefined for constant truth field".into(),
        });
    }
    let gx_p = tape.grid_diff(pred, h, w, GridAxis::Col)?;
    let gy_p = tape.grid_diff(pred, h, w, GridAxis::Row)?;
    let gx_t = tape.leaf(gx_t);
    let gy_t = tape.leaf(gy_t);
    let dx = tape.sub(gx_p, gx_t)?;
    let dy = tape.sub(gy_p, gy_t)?;
    let sx = tape.mul(dx, dx)?;
    let sy = tape.mul(dy, dy)?;
    let sx = tape.sum_all(sx);
    let sy = tape.sum_all(sy);
    let s = tape.add(sx, sy)?;
    let norm = tape.sqrt(s);
    Ok(tape.scale(norm, E::from_f64(1.0 / denom)))
}

fn l2_norm<E: Scalar>(t: &Tensor<E>) -> f64 {
    t.data()
        .iter()
        .map(|v| {
            let x = v.to_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}
