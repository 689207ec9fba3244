//! Position encoder: Euclidean distances from each input point to a fixed
//! uniform reference grid in the unit box, fed through an MLP.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::params::BoundParams;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Uniform lattice over `[0,1]^dim` with `resolution` samples per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGrid {
    pub resolution: usize,
    pub dim: usize,
    /// Flattened grid points, row-major over axes: `[resolution^dim, dim]`.
    points: Vec<f64>,
}

/// Axis samples are exactly `k / (resolution - 1)`, so `resolution >= 2`.
pub fn build_reference_grid(resolution: usize, dim: usize) -> Result<ReferenceGrid> {
    if resolution < 2 {
        return Err(Error::InvalidConfig {
            field: "grid_resolution",
            msg: format!("must be at least 2, got {resolution}"),
        });
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidConfig {
            field: "coord_dim",
            msg: format!("must be 1, 2, or 3, got {dim}"),
        });
    }
    let axis: Vec<f64> = (0..resolution)
        .map(|k| k as f64 / (resolution - 1) as f64)
        .collect();
    let count = resolution.pow(dim as u32);
    let mut points = Vec::with_capacity(count * dim);
    for flat in 0..count {
        // Decode flat index with axis 0 as the slowest-varying coordinate.
        let mut rem = flat;
        let mut coord = [0.0f64; 3];
        for d in (0..dim).rev() {
            coord[d] = axis[rem % resolution];
            rem /= resolution;
        }
        points.extend_from_slice(&coord[..dim]);
    }
    Ok(ReferenceGrid {
        resolution,
        dim,
        points,
    })
}

#[allow(clippy::len_without_is_empty)] // resolution >= 2 means never empty
impl ReferenceGrid {
    /// Number of grid points, `resolution^dim`.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    /// Coordinates of grid point `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// Distance vector from each input point to every grid point:
/// `coords [n, dim] -> [n, resolution^dim]`.
pub fn distance_features<E: Scalar>(
    coords: &Tensor<E>,
    grid: &ReferenceGrid,
) -> Result<Tensor<E>> {
    let (n, d) = coords.dims2()?;
    if d != grid.dim {
        return Err(Error::ShapeMismatch {
            op: "distance_features",
            lhs: coords.shape().to_vec(),
            rhs: alloc::vec![grid.len(), grid.dim],
        });
    }
    let g = grid.len();
    let mut out = Vec::with_capacity(n * g);
    for i in 0..n {
        let p = coords.row(i);
        for j in 0..g {
            let gp = grid.point(j);
            let mut acc = E::zero();
            for k in 0..d {
                let diff = p[k] - E::from_f64(gp[k]);
                acc = acc + diff * diff;
            }
            out.push(acc.sqrt());
        }
    }
    Tensor::from_vec(alloc::vec![n, g], out)
}

/// Full position encoding: distances against the grid, then the MLP up to
/// the model channel width. Distances are constants with respect to the
/// parameters, so they enter the tape as a leaf.
pub fn encode_position<E: Scalar>(
    tape: &mut Tape<E>,
    bound: &BoundParams,
    coords: &Tensor<E>,
    grid: &ReferenceGrid,
    mlp: &Mlp,
) -> Result<Var> {
    let dist = distance_features(coords, grid)?;
    let dist = tape.leaf(dist);
    mlp.forward(tape, bound, dist)
}
