//! Evaluation metrics: relative L2, spatial-gradient loss, aerodynamic
//! force coefficient by surface quadrature, and Spearman's rank correlation.
//!
//! All metrics are pure functions and accumulate in f64 regardless of the
//! field dtype, so repeated evaluations are bit-identical.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{grid_diff, GridAxis, Tensor};

/// Ground truth and prediction over the same point set, with optional
/// quadrature weights (cell areas/lengths). Without weights the domain is
/// assumed to carry a uniform measure, under which the weight cancels out
/// of every ratio below.
pub struct FieldPair<'a, E: Scalar> {
    pub truth: &'a Tensor<E>,
    pub prediction: &'a Tensor<E>,
    pub weights: Option<&'a Tensor<E>>,
}

impl<'a, E: Scalar> FieldPair<'a, E> {
    pub fn new(truth: &'a Tensor<E>, prediction: &'a Tensor<E>) -> Self {
        FieldPair {
            truth,
            prediction,
            weights: None,
        }
    }

    fn validate(&self) -> Result<(usize, usize)> {
        let (n, f) = self.truth.dims2()?;
        if self.prediction.shape() != self.truth.shape() {
            return Err(Error::ShapeMismatch {
                op: "field_pair",
                lhs: self.truth.shape().to_vec(),
                rhs: self.prediction.shape().to_vec(),
            });
        }
        if let Some(w) = self.weights {
            if w.shape() != [n] {
                return Err(Error::ShapeMismatch {
                    op: "field_pair weights",
                    lhs: alloc::vec![n],
                    rhs: w.shape().to_vec(),
                });
            }
            if w.data().iter().any(|v| v.to_f64() <= 0.0) {
                return Err(Error::Numeric {
                    msg: String::from("quadrature weights must be positive"),
                });
            }
        }
        Ok((n, f))
    }
}

/// `||u - u_hat||_2 / ||u||_2` with the quadrature weights approximating
/// the underlying integrals. Errors when the truth norm is zero.
pub fn relative_l2<E: Scalar>(pair: &FieldPair<'_, E>) -> Result<f64> {
    let (n, f) = pair.validate()?;
    let u = pair.truth.data();
    let p = pair.prediction.data();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..n {
        let w = match pair.weights {
            Some(wt) => wt.data()[i].to_f64(),
            None => 1.0,
        };
        for j in 0..f {
            let uv = u[i * f + j].to_f64();
            let pv = p[i * f + j].to_f64();
            let d = uv - pv;
            num += w * d * d;
            den += w * uv * uv;
        }
    }
    if den == 0.0 {
        return Err(Error::Numeric {
            msg: String::from("relative L2 undefined: zero truth field"),
        });
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Relative L2 between the grid finite-difference gradients of prediction
/// and truth, both axes stacked. Errors when the fields do not tile an
/// `h x w` grid.
pub fn grad_loss<E: Scalar>(pair: &FieldPair<'_, E>, h: usize, w: usize) -> Result<f64> {
    let (n, _) = pair.validate()?;
    if n != h * w {
        return Err(Error::InvalidConfig {
            field: "geometry_kind",
            msg: alloc::format!("gradient loss needs an {h}x{w} grid, got {n} points"),
        });
    }
    let truth = pair.truth.cast::<f64>();
    let pred = pair.prediction.cast::<f64>();
    let gx_t = grid_diff(&truth, h, w, GridAxis::Col)?;
    let gy_t = grid_diff(&truth, h, w, GridAxis::Row)?;
    let gx_p = grid_diff(&pred, h, w, GridAxis::Col)?;
    let gy_p = grid_diff(&pred, h, w, GridAxis::Row)?;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (t, p) in gx_t
        .data()
        .iter()
        .chain(gy_t.data().iter())
        .zip(gx_p.data().iter().chain(gy_p.data().iter()))
    {
        let d = t - p;
        num += d * d;
        den += t * t;
    }
    if den == 0.0 {
        return Err(Error::Numeric {
            msg: String::from("gradient loss undefined: constant truth field"),
        });
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Boundary samples of a surface plus the flow constants entering the
/// force-coefficient quadrature.
pub struct SurfaceSample<'a, E: Scalar> {
    /// Boundary points `[b, d]`.
    pub points: &'a Tensor<E>,
    /// Pressure at each boundary point `[b]`.
    pub pressure: &'a Tensor<E>,
    /// Outward unit normals `[b, d]`.
    pub normals: &'a Tensor<E>,
    /// Wall shear stress vectors `[b, d]`.
    pub shear: &'a Tensor<E>,
    /// Segment measures (arc lengths / areas) `[b]`, all positive.
    pub measures: &'a Tensor<E>,
    /// Inlet flow speed, positive.
    pub inlet_speed: f64,
    /// Reference area, positive.
    pub ref_area: f64,
    /// Unit direction the force is projected on, length `d`.
    pub direction: &'a [f64],
}

/// Force coefficient `C = 2/(v^2 A) (sum p (n.i) ds + sum (tau.i) ds)`.
pub fn force_coefficient<E: Scalar>(s: &SurfaceSample<'_, E>) -> Result<f64> {
    let (b, d) = s.points.dims2()?;
    if s.normals.shape() != [b, d]
        || s.shear.shape() != [b, d]
        || s.pressure.shape() != [b]
        || s.measures.shape() != [b]
        || s.direction.len() != d
    {
        return Err(Error::ShapeMismatch {
            op: "force_coefficient",
            lhs: s.points.shape().to_vec(),
            rhs: s.normals.shape().to_vec(),
        });
    }
    if s.inlet_speed <= 0.0 || s.ref_area <= 0.0 {
        return Err(Error::Numeric {
            msg: String::from("force coefficient needs positive inlet speed and reference area"),
        });
    }
    let dir_norm: f64 = s.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (dir_norm - 1.0).abs() > 1e-6 {
        return Err(Error::Numeric {
            msg: String::from("direction must be a unit vector"),
        });
    }
    let mut pressure_term = 0.0f64;
    let mut shear_term = 0.0f64;
    for i in 0..b {
        let ds = s.measures.data()[i].to_f64();
        if ds <= 0.0 {
            return Err(Error::Numeric {
                msg: String::from("segment measures must be positive"),
            });
        }
        let mut n_dot_i = 0.0f64;
        let mut n_norm = 0.0f64;
        let mut tau_dot_i = 0.0f64;
        for k in 0..d {
            let nk = s.normals.at2(i, k).to_f64();
            n_dot_i += nk * s.direction[k];
            n_norm += nk * nk;
            tau_dot_i += s.shear.at2(i, k).to_f64() * s.direction[k];
        }
        if (n_norm.sqrt() - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric {
                msg: String::from("normals must be unit vectors"),
            });
        }
        pressure_term += s.pressure.data()[i].to_f64() * n_dot_i * ds;
        shear_term += tau_dot_i * ds;
    }
    let v = s.inlet_speed;
    Ok(2.0 / (v * v * s.ref_area) * (pressure_term + shear_term))
}

/// Average ranks (1-based), ties receiving the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            stage: String::from("spearman input"),
        });
    }
    let k = values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0f64; k];
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// Spearman's rank correlation: Pearson correlation of the rank vectors.
/// Errors for fewer than two values or zero rank variance on either side.
pub fn spearman_rho(c: &[f64], c_hat: &[f64]) -> Result<f64> {
    if c.len() != c_hat.len() || c.len() < 2 {
        return Err(Error::Numeric {
            msg: String::from("spearman needs two equal-length lists of at least 2 values"),
        });
    }
    let ra = average_ranks(c)?;
    let rb = average_ranks(c_hat)?;
    let k = c.len() as f64;
    let mean = |r: &[f64]| r.iter().sum::<f64>() / k;
    let (ma, mb) = (mean(&ra), mean(&rb));
    let mut cov = 0.0f64;
    let mut va = 0.0f64;
    let mut vb = 0.0f64;
    for (a, b) in ra.iter().zip(rb.iter()) {
        let da = a - ma;
        let db = b - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Numeric {
            msg: String::from("spearman undefined: zero rank variance"),
        });
    }
    let rho = cov / (va * vb).sqrt();
    Ok(rho.clamp(-1.0, 1.0))
}

/// Metrics of one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub relative_l2: f64,
    pub grad_loss: Option<f64>,
    pub coefficient: Option<f64>,
    pub spearman_rho: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(vals: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(alloc::vec![vals.len(), 1], vals.to_vec()).unwrap()
    }

    #[test]
    fn relative_l2_trivial_cases() {
        let u = field(&[1.0, -2.0, 3.0]);
        assert_eq!(relative_l2(&FieldPair::new(&u, &u)).unwrap(), 0.0);

        let zero = field(&[0.0, 0.0, 0.0]);
        assert_eq!(relative_l2(&FieldPair::new(&u, &zero)).unwrap(), 1.0);

        let double = field(&[2.0, -4.0, 6.0]);
        assert_eq!(relative_l2(&FieldPair::new(&u, &double)).unwrap(), 1.0);
    }

    #[test]
    fn relative_l2_zero_truth_is_domain_error() {
        let zero = field(&[0.0, 0.0]);
        let p = field(&[1.0, 1.0]);
        assert!(relative_l2(&FieldPair::new(&zero, &p)).is_err());
    }

    #[test]
    fn relative_l2_scale_reporting() {
        let mut rng = crate::rng::Rng::new(1);
        let u: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let p: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let (tu, tp) = (field(&u), field(&p));
        let base = relative_l2(&FieldPair::new(&tu, &tp)).unwrap();
        for alpha in [-3.0, 0.25, 17.0] {
            let su = field(&u.iter().map(|v| alpha * v).collect::<Vec<_>>());
            let sp = field(&p.iter().map(|v| alpha * v).collect::<Vec<_>>());
            let scaled = relative_l2(&FieldPair::new(&su, &sp)).unwrap();
            assert!((scaled - base).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_loss_trivial_cases() {
        let mut rng = crate::rng::Rng::new(2);
        let u: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
        let tu = field(&u);
        assert_eq!(grad_loss(&FieldPair::new(&tu, &tu), 4, 4).unwrap(), 0.0);

        // A constant shift leaves all gradients identical.
        let shifted = field(&u.iter().map(|v| v + 5.0).collect::<Vec<_>>());
        let loss = grad_loss(&FieldPair::new(&tu, &shifted), 4, 4).unwrap();
        assert!(loss < 1e-12, "constant shift changed gradients: {loss}");
    }

    #[test]
    fn grad_loss_rejects_non_grid() {
        let u = field(&[1.0, 2.0, 3.0]);
        assert!(grad_loss(&FieldPair::new(&u, &u), 2, 2).is_err());
    }

    #[test]
    fn spearman_identity_and_reversal_are_exact() {
        let c = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman_rho(&c, &c).unwrap(), 1.0);
        let rev = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman_rho(&c, &rev).unwrap(), -1.0);
    }

    #[test]
    fn spearman_matches_rank_pearson_oracle() {
        let c = [1.0, 2.0, 3.0, 4.0];
        let c_hat = [1.0, 3.0, 2.0, 4.0];
        // Values are their own ranks here; Pearson over them directly.
        let got = spearman_rho(&c, &c_hat).unwrap();
        let oracle = {
            let mean = 2.5;
            let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
            for i in 0..4 {
                cov += (c[i] - mean) * (c_hat[i] - mean);
                va += (c[i] - mean) * (c[i] - mean);
                vb += (c_hat[i] - mean) * (c_hat[i] - mean);
            }
            cov / (va * vb).sqrt()
        };
        assert_eq!(got, oracle);
    }

    #[test]
    fn spearman_average_ranks_for_ties() {
        let ranks = average_ranks(&[2.0, 1.0, 2.0, 5.0]).unwrap();
        assert_eq!(ranks, alloc::vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn spearman_domain_errors() {
        assert!(spearman_rho(&[1.0], &[1.0]).is_err());
        assert!(spearman_rho(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_monotone_transform_invariance() {
        let c = [0.3, -1.2, 2.5, 0.9, 0.0];
        let c_hat = [1.0, 0.5, 2.0, 1.5, 0.7];
        let base = spearman_rho(&c, &c_hat).unwrap();
        let exp_c: Vec<f64> = c.iter().map(|v| v.exp()).collect();
        let cubed_hat: Vec<f64> = c_hat.iter().map(|v| v * v * v).collect();
        assert_eq!(spearman_rho(&exp_c, &c_hat).unwrap(), base);
        assert_eq!(spearman_rho(&c, &cubed_hat).unwrap(), base);
    }
}
