use rand::Rng;

use super::tape::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A trainable array together with its gradient buffer and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub has_grad: bool,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        let n = value.len();
        debug_assert_eq!(n, shape.iter().product::<usize>());
        Self {
            name: name.into(),
            shape,
            value,
            grad: vec![0.0; n],
            has_grad: false,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Glorot-uniform sample for a weight with the given fan-in/fan-out.
pub fn glorot_uniform<R: Rng>(rng: &mut R, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
}

/// Ordered collection of parameters; order is insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

/// Which tape leaf holds which parameter during one forward pass.
pub type Bindings = Vec<(ParamId, Var)>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, p: Parameter) -> ParamId {
        self.params.push(p);
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    /// Places a parameter on the tape, as a differentiable leaf when
    /// `trainable` and as a constant otherwise.
    pub fn bind(&self, tape: &mut Tape, id: ParamId, trainable: bool, bindings: &mut Bindings) -> Var {
        let p = &self.params[id.0];
        let t = Tensor {
            shape: p.shape.clone(),
            data: p.value.clone(),
        };
        if trainable {
            let v = tape.variable(t);
            bindings.push((id, v));
            v
        } else {
            tape.constant(t)
        }
    }

    /// Adds the tape's leaf gradients into the matching parameter buffers.
    pub fn accumulate(&mut self, tape: &Tape, bindings: &Bindings) {
        for &(id, var) in bindings {
            let p = &mut self.params[id.0];
            if let Some(g) = tape.grad(var) {
                for (acc, gi) in p.grad.iter_mut().zip(g) {
                    *acc += gi;
                }
                p.has_grad = true;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
            p.has_grad = false;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// One bias-corrected Adam update of every parameter in `store`.
    pub fn step(&self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if let Some(p) = store.iter().find(|p| !p.has_grad) {
            return Err(Error::MissingGradient(p.name.clone()));
        }
        for p in store.iter_mut() {
            p.step += 1;
            let t = p.step as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            for i in 0..p.value.len() {
                let g = p.grad[i];
                let m = self.beta1 * p.first_moment[i] + (1.0 - self.beta1) * g;
                let v = self.beta2 * p.second_moment[i] + (1.0 - self.beta2) * g * g;
                p.first_moment[i] = m;
                p.second_moment[i] = v;
                p.value[i] -= lr * (m / c1) / ((v / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.push(Parameter::new("w", vec![1], vec![v]));
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut s = scalar_store(0.25);
        s.get_mut(ParamId(0)).has_grad = true;
        for _ in 0..5 {
            Adam::default().step(&mut s, 1e-3).unwrap();
        }
        assert_eq!(s.get(ParamId(0)).value[0], 0.25);
        assert_eq!(s.get(ParamId(0)).step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = scalar_store(0.0);
        let p = s.get_mut(ParamId(0));
        p.grad[0] = 1.0;
        p.has_grad = true;
        Adam::default().step(&mut s, 1e-3).unwrap();
        // m_hat = 1, v_hat = 1  ->  delta = -lr / (1 + eps)
        let delta = s.get(ParamId(0)).value[0];
        assert!((delta + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn repeated_gradient_moves_monotonically() {
        let mut s = scalar_store(1.0);
        let mut last = 1.0;
        for _ in 0..20 {
            let p = s.get_mut(ParamId(0));
            p.grad[0] = 0.5;
            p.has_grad = true;
            Adam::default().step(&mut s, 1e-2).unwrap();
            let now = s.get(ParamId(0)).value[0];
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = scalar_store(1.0);
        assert!(matches!(
            Adam::default().step(&mut s, 1e-3),
            Err(Error::MissingGradient(name)) if name == "w"
        ));
    }
}
