//! Small dense decompositions: one-sided Jacobi SVD and the Moore-Penrose
//! pseudoinverse built on it.
//!
//! The landmark matrices this crate inverts are at most 64x64, so the very
//! accurate (if cubic-per-sweep) Jacobi iteration is the right tool; no
//! large-scale iterative scheme is needed.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Singular value decomposition `a = u . diag(s) . v^T` of a square matrix.
pub struct Svd<E> {
    /// Left singular vectors, `p x p`, column-major semantics in a flat
    /// row-major buffer (element `[i, k]` at `i * p + k`).
    pub u: Vec<E>,
    /// Singular values, descending order not guaranteed.
    pub s: Vec<E>,
    /// Right singular vectors (not transposed), same layout as `u`.
    pub v: Vec<E>,
    pub p: usize,
}

/// One-sided Jacobi (Hestenes) SVD of a square `p x p` matrix.
pub fn svd_square<E: Scalar>(a: &Tensor<E>) -> Result<Svd<E>> {
    let (p, q) = a.dims2()?;
    if p != q {
        return Err(Error::ShapeMismatch {
            op: "svd_square",
            lhs: a.shape().to_vec(),
            rhs: vec![p, p],
        });
    }
    // Work on columns: cols[j][i] = a[i, j].
    let ad = a.data();
    let mut cols: Vec<Vec<E>> = (0..p)
        .map(|j| (0..p).map(|i| ad[i * p + j]).collect())
        .collect();
    let mut v: Vec<Vec<E>> = (0..p)
        .map(|j| {
            let mut col = vec![E::zero(); p];
            col[j] = E::one();
            col
        })
        .collect();

    let tol = E::epsilon() * E::from_f64(8.0);
    let max_sweeps = 60;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let (mut alpha, mut beta, mut gamma) = (E::zero(), E::zero(), E::zero());
                for k in 0..p {
                    let (x, y) = (cols[i][k], cols[j][k]);
                    alpha = alpha + x * x;
                    beta = beta + y * y;
                    gamma = gamma + x * y;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma == E::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (E::from_f64(2.0) * gamma);
                let t = {
                    let sign = if zeta >= E::zero() { E::one() } else { -E::one() };
                    sign / (zeta.abs() + (E::one() + zeta * zeta).sqrt())
                };
                let c = E::one() / (E::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..p {
                    let x = cols[i][k];
                    let y = cols[j][k];
                    cols[i][k] = c * x - s * y;
                    cols[j][k] = s * x + c * y;
                }
                for k in 0..p {
                    let x = v[i][k];
                    let y = v[j][k];
                    v[i][k] = c * x - s * y;
                    v[j][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        // Measure how far from column-orthogonal we ended up, for diagnostics.
        let mut worst = E::zero();
        for i in 0..p {
            for j in (i + 1)..p {
                let mut gamma = E::zero();
                for k in 0..p {
                    gamma = gamma + cols[i][k] * cols[j][k];
                }
                if gamma.abs() > worst {
                    worst = gamma.abs();
                }
            }
        }
        return Err(Error::Numeric {
            msg: format!("jacobi svd did not converge ({p}x{p}, off-diagonal {worst:e})"),
        });
    }

    let mut u = vec![E::zero(); p * p];
    let mut s = vec![E::zero(); p];
    let mut vt = vec![E::zero(); p * p];
    for j in 0..p {
        let mut norm = E::zero();
        for k in 0..p {
            norm = norm + cols[j][k] * cols[j][k];
        }
        let norm = norm.sqrt();
        s[j] = norm;
        if norm > E::zero() {
            let inv = E::one() / norm;
            for k in 0..p {
                u[k * p + j] = cols[j][k] * inv;
            }
        }
        for k in 0..p {
            vt[k * p + j] = v[j][k];
        }
    }
    Ok(Svd { u, s, v: vt, p })
}

/// Moore-Penrose pseudoinverse of a square matrix via full SVD, truncating
/// singular values below `1e-10 * sigma_max`.
pub fn pinv<E: Scalar>(a: &Tensor<E>) -> Result<Tensor<E>> {
    let Svd { u, s, v, p } = svd_square(a)?;
    let mut smax = E::zero();
    for &sv in &s {
        if sv > smax {
            smax = sv;
        }
    }
    let cutoff = E::from_f64(1e-10) * smax;
    let sinv: Vec<E> = s
        .iter()
        .map(|&sv| {
            if sv > cutoff && sv > E::zero() {
                E::one() / sv
            } else {
                E::zero()
            }
        })
        .collect();
    // pinv = V . diag(sinv) . U^T
    let mut out = vec![E::zero(); p * p];
    for i in 0..p {
        for j in 0..p {
            let mut acc = E::zero();
            for k in 0..p {
                acc = acc + v[i * p + k] * sinv[k] * u[j * p + k];
            }
            out[i * p + j] = acc;
        }
    }
    Tensor::from_vec(vec![p, p], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::matmul;

    fn random_square(p: usize, seed: u64) -> Tensor<f64> {
        let mut rng = Rng::new(seed);
        Tensor::from_vec(vec![p, p], (0..p * p).map(|_| rng.normal()).collect()).unwrap()
    }

    fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn pinv_identity() {
        let eye = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let inv = pinv(&eye).unwrap();
        assert!(max_abs_diff(&inv, &eye) < 1e-14);
    }

    #[test]
    fn pinv_rank_deficient_diagonal() {
        let a = Tensor::from_vec(vec![2, 2], vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let inv = pinv(&a).unwrap();
        let expect = Tensor::from_vec(vec![2, 2], vec![0.5, 0.0, 0.0, 0.0]).unwrap();
        assert!(max_abs_diff(&inv, &expect) < 1e-14);
    }

    #[test]
    fn pinv_defining_property_random_6x6() {
        let a = random_square(6, 17);
        let y = pinv(&a).unwrap();
        let aya = matmul(&matmul(&a, &y).unwrap(), &a).unwrap();
        assert!(max_abs_diff(&aya, &a) < 1e-8);
    }

    #[test]
    fn moore_penrose_identities_up_to_16x16() {
        for (p, seed) in [(1usize, 1u64), (2, 2), (5, 3), (9, 4), (16, 5)] {
            let a = random_square(p, seed);
            let y = pinv(&a).unwrap();
            let ay = matmul(&a, &y).unwrap();
            let ya = matmul(&y, &a).unwrap();
            // 1. A Y A = A     2. Y A Y = Y
            assert!(max_abs_diff(&matmul(&ay, &a).unwrap(), &a) < 1e-8, "p={p}");
            assert!(max_abs_diff(&matmul(&ya, &y).unwrap(), &y) < 1e-8, "p={p}");
            // 3. (A Y)^T = A Y  4. (Y A)^T = Y A
            let ayt = crate::tensor::transpose(&ay).unwrap();
            let yat = crate::tensor::transpose(&ya).unwrap();
            assert!(max_abs_diff(&ayt, &ay) < 1e-8, "p={p}");
            assert!(max_abs_diff(&yat, &ya) < 1e-8, "p={p}");
        }
    }

    #[test]
    fn svd_reconstructs_input() {
        let a = random_square(8, 23);
        let Svd { u, s, v, p } = svd_square(&a).unwrap();
        for i in 0..p {
            for j in 0..p {
                let mut acc = 0.0;
                for k in 0..p {
                    acc += u[i * p + k] * s[k] * v[j * p + k];
                }
                assert!((acc - a.at2(i, j)).abs() < 1e-10);
            }
        }
    }
}
