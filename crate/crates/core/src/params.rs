//! Named learnable parameters and their gradient slots.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Parameter<E> {
    pub name: String,
    pub value: Tensor<E>,
    pub grad: Tensor<E>,
}

/// Flat, ordered collection of all model parameters. Creation order is the
/// canonical order used for initialization, optimizer state, and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<E> {
    params: Vec<Parameter<E>>,
}

impl<E: Scalar> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn create(&mut self, name: String, value: Tensor<E>) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        let id = ParamId(self.params.len());
        self.params.push(Parameter { name, value, grad });
        id
    }

    /// Weight matrix `[fan_in, fan_out]` drawn uniformly from
    /// `[-sqrt(1/fan_in), sqrt(1/fan_in)]`.
    pub fn create_weight(
        &mut self,
        name: String,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> ParamId {
        let bound = (1.0 / fan_in as f64).sqrt();
        let data: Vec<E> = (0..fan_in * fan_out)
            .map(|_| E::from_f64(rng.range(-bound, bound)))
            .collect();
        let value = Tensor::from_vec([fan_in, fan_out].to_vec(), data).expect("weight shape");
        self.create(name, value)
    }

    /// Generic uniform init with an explicit fan-in, for non-matrix shapes.
    pub fn create_uniform(
        &mut self,
        name: String,
        shape: &[usize],
        fan_in: usize,
        rng: &mut Rng,
    ) -> ParamId {
        let bound = (1.0 / fan_in as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data: Vec<E> = (0..numel)
            .map(|_| E::from_f64(rng.range(-bound, bound)))
            .collect();
        let value = Tensor::from_vec(shape.to_vec(), data).expect("param shape");
        self.create(name, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<E> {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<E>> {
        self.params.iter()
    }

    /// Total number of scalar entries across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.iter_mut() {
            p.grad = Tensor::zeros(p.value.shape());
        }
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<E>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                lhs: p.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn set_grad(&mut self, id: ParamId, grad: Tensor<E>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != grad.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_grad",
                lhs: p.value.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        p.grad = grad;
        Ok(())
    }

    /// Overwrite a parameter's value looked up by name (checkpoint loading).
    pub fn set_value_by_name(&mut self, name: &str, value: Tensor<E>) -> Result<()> {
        let idx = self
            .params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::InvalidConfig {
                field: "parameter",
                msg: alloc::format!("no parameter named `{name}`"),
            })?;
        self.set_value(ParamId(idx), value)
    }

    /// Register every parameter as a tape leaf, in canonical order.
    pub fn bind(&self, tape: &mut Tape<E>) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect();
        BoundParams { vars }
    }

    /// Add the tape's gradients (from the last backward) into each
    /// parameter's grad slot.
    pub fn accumulate_grads(&mut self, tape: &Tape<E>, bound: &BoundParams) -> Result<()> {
        for (p, var) in self.params.iter_mut().zip(bound.vars.iter()) {
            if let Some(g) = tape.grad(*var) {
                p.grad = crate::tensor::add(&p.grad, g)?;
            }
        }
        Ok(())
    }
}

/// Tape variables for one forward pass, parallel to the store's parameters.
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}
