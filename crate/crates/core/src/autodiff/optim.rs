//! Named parameter storage and plain SGD / Adam updates.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::{AutodiffError, Result};

/// Stable handle to a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

/// A trainable tensor plus its gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }
}

/// All parameters of a model, keyed by name. Iteration order is the sorted
/// name order, so update sweeps are deterministic.
#[derive(Debug, Default, Clone)]
pub struct ParamSet {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, ParamId>,
    grads_populated: bool,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Register a tensor under a unique name.
    pub fn register(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name: {name}"
        );
        let id = ParamId(self.params.len());
        let n = value.len();
        self.params.push(Parameter {
            name: name.to_string(),
            value: value.with_grad(),
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    /// Overwrite a parameter's values, e.g. when restoring a checkpoint.
    pub fn set_value(&mut self, id: ParamId, values: &[f64]) -> Result<()> {
        let p = &mut self.params[id.0];
        if values.len() != p.value.len() {
            return Err(AutodiffError::BadValueCount {
                shape: p.value.shape().to_vec(),
                expected: p.value.len(),
                got: values.len(),
            });
        }
        p.value.values_mut().copy_from_slice(values);
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) {
        let acc = &mut self.params[id.0].grad;
        debug_assert_eq!(acc.len(), grad.len());
        for (a, g) in acc.iter_mut().zip(grad) {
            *a += g;
        }
    }

    pub(crate) fn mark_grads_populated(&mut self) {
        self.grads_populated = true;
    }

    pub fn grads_populated(&self) -> bool {
        self.grads_populated
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.grads_populated = false;
    }

    /// Parameters in sorted-name order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.by_name.values().map(|&id| (id, &self.params[id.0]))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer over a [`ParamSet`].
///
/// A step consumes the accumulated gradients: it applies the update, zeroes
/// the gradient buffers, and refuses to run if no backward pass has filled
/// them since the last step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: u64,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            steps: 0,
        }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if !params.grads_populated() {
            return Err(AutodiffError::MissingGradients);
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in &mut params.params {
                    for (w, g) in p.value.values_mut().iter_mut().zip(&p.grad) {
                        *w -= self.lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for p in &mut params.params {
                    for i in 0..p.grad.len() {
                        let g = p.grad[i];
                        p.m[i] = self.beta1 * p.m[i] + (1.0 - self.beta1) * g;
                        p.v[i] = self.beta2 * p.v[i] + (1.0 - self.beta2) * g * g;
                        let m_hat = p.m[i] / bc1;
                        let v_hat = p.v[i] / bc2;
                        p.value.values_mut()[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
        params.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> (ParamSet, ParamId) {
        let mut set = ParamSet::new();
        let id = set.register("w", Tensor::vector(vec![value]));
        (set, id)
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let (mut set, id) = single_param(1.0);
        set.accumulate_grad(id, &[0.5]);
        set.mark_grads_populated();
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut set).unwrap();
        assert!((set.value(id).values()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn step_without_backward_is_rejected() {
        let (mut set, _) = single_param(1.0);
        let mut opt = Optimizer::sgd(0.1);
        assert!(matches!(
            opt.step(&mut set),
            Err(AutodiffError::MissingGradients)
        ));
    }

    #[test]
    fn step_consumes_gradients() {
        let (mut set, id) = single_param(1.0);
        set.accumulate_grad(id, &[1.0]);
        set.mark_grads_populated();
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut set).unwrap();
        assert_eq!(set.grad(id), &[0.0]);
        assert!(!set.grads_populated());
        assert!(opt.step(&mut set).is_err());
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        let (g, lr) = (0.3, 0.01);
        let (mut set, id) = single_param(2.0);
        set.accumulate_grad(id, &[g]);
        set.mark_grads_populated();
        let mut opt = Optimizer::adam(lr);
        opt.step(&mut set).unwrap();
        // After bias correction the first step reduces to g / (|g| + eps).
        let m_hat = (0.1 * g) / (1.0 - 0.9f64);
        let v_hat = (0.001 * g * g) / (1.0 - 0.999f64);
        let expect = 2.0 - lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((set.value(id).values()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn adam_two_steps_match_recurrence_oracle() {
        let lr = 0.05;
        let grads = [0.4, -0.2];
        let (mut set, id) = single_param(1.0);
        let mut opt = Optimizer::adam(lr);

        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.0f64);
        for (t, &g) in grads.iter().enumerate() {
            set.accumulate_grad(id, &[g]);
            set.mark_grads_populated();
            opt.step(&mut set).unwrap();

            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((set.value(id).values()[0] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_accumulation_sums_contributions() {
        let (mut set, id) = single_param(0.0);
        set.accumulate_grad(id, &[0.25]);
        set.accumulate_grad(id, &[0.75]);
        assert_eq!(set.grad(id), &[1.0]);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut set = ParamSet::new();
        set.register("w", Tensor::vector(vec![0.0]));
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            set.register("w", Tensor::vector(vec![0.0]))
        }));
        assert!(result.is_err());
    }

    #[test]
    fn iteration_is_name_sorted() {
        let mut set = ParamSet::new();
        set.register("zeta", Tensor::vector(vec![0.0]));
        set.register("alpha", Tensor::vector(vec![0.0]));
        set.register("mid", Tensor::vector(vec![0.0]));
        let names: Vec<_> = set.iter().map(|(_, p)| p.name().to_string()).collect();
        assert_eq!(names, ["alpha", "mid", "zeta"]);
    }
}
