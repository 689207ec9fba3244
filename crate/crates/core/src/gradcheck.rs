//! Central finite-difference verification of analytic gradients.
//!
//! The comparison metric for a parameter group is the worst absolute
//! discrepancy normalized by the group's gradient magnitude:
//! `max_i |a_i - n_i| / (max(||a||_inf, ||n||_inf) + floor)`. The additive
//! floor keeps groups whose true gradient is zero from dividing noise by
//! noise.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::model::{rl2_loss, GFocalModel};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Floor added to the normalization denominator.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Worst normalized error of one named parameter group.
#[derive(Debug, Clone)]
pub struct GroupError {
    pub name: String,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_err).fold(0.0, f64::max)
    }

    /// Groups at or above the tolerance, worst first.
    pub fn offenders(&self, tol: f64) -> Vec<&GroupError> {
        let mut out: Vec<&GroupError> = self.groups.iter().filter(|g| g.rel_err >= tol).collect();
        out.sort_by(|a, b| b.rel_err.partial_cmp(&a.rel_err).unwrap_or(core::cmp::Ordering::Equal));
        out
    }
}

/// Normalized worst-case discrepancy between two same-shaped gradients.
pub fn normalized_max_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let mut max_diff = 0.0f64;
    let mut max_mag = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        max_diff = max_diff.max((a - n).abs());
        max_mag = max_mag.max(a.abs()).max(n.abs());
    }
    max_diff / (max_mag + REL_ERR_FLOOR)
}

/// Check the analytic gradients of an arbitrary scalar-valued tape program
/// against central finite differences on its leaf inputs.
///
/// `build` must construct the loss from the leaves it is handed; it runs
/// once per perturbed evaluation, so it must be a pure function of them.
/// Returns the normalized error per input.
pub fn fd_check<E: Scalar, F>(inputs: &[Tensor<E>], h: f64, build: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape<E>, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor<E>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item().to_f64())
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs.iter())
        .map(|(v, t)| match tape.grad(*v) {
            Some(g) => g.to_f64_vec(),
            None => alloc::vec![0.0; t.numel()],
        })
        .collect();

    // Numeric pass, one central difference per scalar entry.
    let mut errs = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<E>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let base = input.to_f64_vec();
        let mut numeric = Vec::with_capacity(base.len());
        for j in 0..base.len() {
            let mut plus = base.clone();
            plus[j] += h;
            work[i] = Tensor::from_f64_slice(input.shape().to_vec(), &plus)?;
            let lp = eval(&work)?;
            let mut minus = base.clone();
            minus[j] -= h;
            work[i] = Tensor::from_f64_slice(input.shape().to_vec(), &minus)?;
            let lm = eval(&work)?;
            numeric.push((lp - lm) / (2.0 * h));
        }
        work[i] = input.clone();
        errs.push(normalized_max_err(&analytic[i], &numeric));
    }
    Ok(errs)
}

/// End-to-end gradient check of every model parameter against central
/// finite differences, using the relative-L2 loss on the given batch.
pub fn check_model_gradients<E: Scalar>(
    model: &mut GFocalModel<E>,
    coords: &Tensor<E>,
    input: &Tensor<E>,
    target: &Tensor<E>,
    h: f64,
) -> Result<GradCheckReport> {
    let eval = |model: &GFocalModel<E>| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let pred = model.forward(&mut tape, &bound, coords, input)?;
        let loss = rl2_loss(&mut tape, pred, target)?;
        Ok(tape.value(loss).item().to_f64())
    };

    // Analytic gradients.
    model.store.zero_grad();
    {
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let pred = model.forward(&mut tape, &bound, coords, input)?;
        let loss = rl2_loss(&mut tape, pred, target)?;
        tape.backward(loss)?;
        model.store.accumulate_grads(&tape, &bound)?;
    }

    let param_count = model.store.len();
    let mut groups = Vec::with_capacity(param_count);
    for idx in 0..param_count {
        let id = crate::params::ParamId(idx);
        let name = model.store.get(id).name.clone();
        let analytic = model.store.get(id).grad.to_f64_vec();
        let base = model.store.get(id).value.to_f64_vec();
        let shape = model.store.get(id).value.shape().to_vec();
        let mut numeric = Vec::with_capacity(base.len());
        for j in 0..base.len() {
            let mut plus = base.clone();
            plus[j] += h;
            model
                .store
                .set_value(id, Tensor::from_f64_slice(shape.clone(), &plus)?)?;
            let lp = eval(model)?;
            let mut minus = base.clone();
            minus[j] -= h;
            model
                .store
                .set_value(id, Tensor::from_f64_slice(shape.clone(), &minus)?)?;
            let lm = eval(model)?;
            numeric.push((lp - lm) / (2.0 * h));
        }
        model
            .store
            .set_value(id, Tensor::from_f64_slice(shape, &base)?)?;
        groups.push(GroupError {
            name,
            rel_err: normalized_max_err(&analytic, &numeric),
        });
    }
    Ok(GradCheckReport { groups })
}
