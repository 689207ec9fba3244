//! Steady Darcy flow on the unit square: 5-point finite-volume
//! discretization with harmonic-mean face coefficients, solved by conjugate
//! gradient. Homogeneous Dirichlet boundary.
//!
//! The grid is node-centered: `n x n` nodes at spacing `1/(n-1)` including
//! the boundary, so the solution is exactly zero on boundary nodes and the
//! unknowns are the `(n-2)^2` interior nodes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative CG tolerance on the 2-norm of the residual.
pub const CG_REL_TOL: f64 = 1e-10;

/// Harmonic mean of two cell coefficients, the flux-preserving choice
/// across discontinuous media interfaces.
#[inline]
fn face(a1: f64, a2: f64) -> f64 {
    2.0 * a1 * a2 / (a1 + a2)
}

struct Stencil<'a> {
    a: &'a [f64],
    n: usize,
    inv_h2: f64,
}

impl Stencil<'_> {
    /// Apply the operator to an interior-node vector (boundary values zero).
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let m = n - 2;
        let at = |i: usize, j: usize| self.a[i * n + j];
        let get = |u: &[f64], i: usize, j: usize| -> f64 {
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                0.0
            } else {
                u[(i - 1) * m + (j - 1)]
            }
        };
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let c = at(i, j);
                let aw = face(c, at(i, j - 1));
                let ae = face(c, at(i, j + 1));
                let an = face(c, at(i - 1, j));
                let as_ = face(c, at(i + 1, j));
                let uc = u[(i - 1) * m + (j - 1)];
                let v = aw * (uc - get(u, i, j - 1))
                    + ae * (uc - get(u, i, j + 1))
                    + an * (uc - get(u, i - 1, j))
                    + as_ * (uc - get(u, i + 1, j));
                out[(i - 1) * m + (j - 1)] = v * self.inv_h2;
            }
        }
    }
}

fn validate(a: &Tensor<f64>, f: &Tensor<f64>) -> Result<usize> {
    let (n, n2) = a.dims2()?;
    if n != n2 || f.shape() != a.shape() {
        return Err(Error::ShapeMismatch {
            op: "darcy_solve",
            lhs: a.shape().to_vec(),
            rhs: f.shape().to_vec(),
        });
    }
    if n < 4 {
        return Err(Error::InvalidConfig {
            field: "grid_size",
            msg: format!("darcy grid needs n >= 4, got {n}"),
        });
    }
    if a.data().iter().any(|&v| v <= 0.0) {
        return Err(Error::Numeric {
            msg: "darcy coefficient must be strictly positive".into(),
        });
    }
    Ok(n)
}

/// Solve `-div(a grad u) = f` with `u = 0` on the boundary, to a relative
/// residual below [`CG_REL_TOL`] within `10 n^2` iterations.
pub fn darcy_solve(a: &Tensor<f64>, f: &Tensor<f64>) -> Result<Tensor<f64>> {
    let n = validate(a, f)?;
    darcy_solve_capped(a, f, 10 * n * n)
}

/// Same as [`darcy_solve`] with an explicit iteration cap.
pub fn darcy_solve_capped(
    a: &Tensor<f64>,
    f: &Tensor<f64>,
    max_iters: usize,
) -> Result<Tensor<f64>> {
    let n = validate(a, f)?;
    let m = n - 2;
    let h = 1.0 / (n as f64 - 1.0);
    let stencil = Stencil {
        a: a.data(),
        n,
        inv_h2: 1.0 / (h * h),
    };

    let mut b = vec![0.0f64; m * m];
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            b[(i - 1) * m + (j - 1)] = f.data()[i * n + j];
        }
    }
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0f64; m * m];
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0f64; m * m];
        let mut rs = dot(&r, &r);
        let mut history = Vec::new();
        let mut converged = false;
        for _iter in 0..max_iters {
            stencil.apply(&p, &mut ap);
            let alpha = rs / dot(&p, &ap);
            for k in 0..x.len() {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rs_new = dot(&r, &r);
            let rel = rs_new.sqrt() / b_norm;
            history.push(rel);
            if rel < CG_REL_TOL {
                converged = true;
                break;
            }
            let beta = rs_new / rs;
            for k in 0..p.len() {
                p[k] = r[k] + beta * p[k];
            }
            rs = rs_new;
        }
        if !converged {
            let tail = history.len().saturating_sub(32);
            return Err(Error::SolverDiverged {
                iterations: history.len(),
                residual: *history.last().unwrap_or(&f64::NAN),
                history: history[tail..].to_vec(),
            });
        }
    }

    // Scatter interior solution back onto the full grid; boundary stays 0.
    let mut u = vec![0.0f64; n * n];
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            u[i * n + j] = x[(i - 1) * m + (j - 1)];
        }
    }
    Tensor::from_vec(vec![n, n], u)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += x * y;
    }
    s
}

/// Independent residual assembly: builds the per-face flux arrays first and
/// takes their discrete divergence, deliberately not sharing code with the
/// solver's stencil application. Returns `max |div(flux) - f|` over the
/// interior nodes.
pub fn residual_inf(a: &Tensor<f64>, f: &Tensor<f64>, u: &Tensor<f64>) -> Result<f64> {
    let n = validate(a, f)?;
    if u.shape() != a.shape() {
        return Err(Error::ShapeMismatch {
            op: "residual_inf",
            lhs: u.shape().to_vec(),
            rhs: a.shape().to_vec(),
        });
    }
    let h = 1.0 / (n as f64 - 1.0);
    let ad = a.data();
    let ud = u.data();

    // Horizontal fluxes between (i, j) and (i, j+1); flux = -a_face du/dx.
    let mut fx = vec![0.0f64; n * (n - 1)];
    for i in 0..n {
        for j in 0..n - 1 {
            let af = face(ad[i * n + j], ad[i * n + j + 1]);
            fx[i * (n - 1) + j] = -af * (ud[i * n + j + 1] - ud[i * n + j]) / h;
        }
    }
    // Vertical fluxes between (i, j) and (i+1, j).
    let mut fy = vec![0.0f64; (n - 1) * n];
    for i in 0..n - 1 {
        for j in 0..n {
            let af = face(ad[i * n + j], ad[(i + 1) * n + j]);
            fy[i * n + j] = -af * (ud[(i + 1) * n + j] - ud[i * n + j]) / h;
        }
    }

    let mut worst = 0.0f64;
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let div = (fx[i * (n - 1) + j] - fx[i * (n - 1) + j - 1]) / h
                + (fy[i * n + j] - fy[(i - 1) * n + j]) / h;
            let r = (div - f.data()[i * n + j]).abs();
            if r > worst {
                worst = r;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize, v: f64) -> Tensor<f64> {
        Tensor::full(&[n, n], v)
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let a = constant(8, 1.0);
        let f = constant(8, 0.0);
        let u = darcy_solve(&a, &f).unwrap();
        assert!(u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_small_grids_and_nonpositive_coefficients() {
        let a = constant(3, 1.0);
        let f = constant(3, 1.0);
        assert!(darcy_solve(&a, &f).is_err());

        let mut bad = alloc::vec![1.0; 36];
        bad[7] = 0.0;
        let a = Tensor::from_vec(alloc::vec![6, 6], bad).unwrap();
        let f = constant(6, 1.0);
        assert!(darcy_solve(&a, &f).is_err());
    }

    #[test]
    fn iteration_cap_produces_diverged_error_with_history() {
        let a = constant(16, 1.0);
        let f = constant(16, 1.0);
        match darcy_solve_capped(&a, &f, 2) {
            Err(Error::SolverDiverged {
                iterations,
                history,
                ..
            }) => {
                assert_eq!(iterations, 2);
                assert_eq!(history.len(), 2);
            }
            other => panic!("expected SolverDiverged, got {other:?}"),
        }
    }

    #[test]
    fn symmetric_inputs_give_symmetric_solution() {
        // a and f symmetric under x <-> y swap; u must be too.
        let n = 12;
        let mut a = alloc::vec![0.0; n * n];
        let mut f = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let x = j as f64 / (n - 1) as f64;
                let y = i as f64 / (n - 1) as f64;
                a[i * n + j] = 1.0 + x * y;
                f[i * n + j] = x + y;
            }
        }
        let a = Tensor::from_vec(alloc::vec![n, n], a).unwrap();
        let f = Tensor::from_vec(alloc::vec![n, n], f).unwrap();
        let u = darcy_solve(&a, &f).unwrap();
        for i in 0..n {
            for j in 0..n {
                let diff = (u.at2(i, j) - u.at2(j, i)).abs();
                assert!(diff < 1e-10, "asymmetry {diff} at ({i},{j})");
            }
        }
    }

    #[test]
    fn boundary_is_exactly_zero() {
        let a = constant(10, 2.0);
        let f = constant(10, 1.0);
        let u = darcy_solve(&a, &f).unwrap();
        for k in 0..10 {
            assert_eq!(u.at2(0, k), 0.0);
            assert_eq!(u.at2(9, k), 0.0);
            assert_eq!(u.at2(k, 0), 0.0);
            assert_eq!(u.at2(k, 9), 0.0);
        }
    }
}
