//! Parameter storage and the RMSProp optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{MdnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, values: Vec<f64>) -> ParamId {
        self.names.push(name.into());
        self.grads.push(vec![0.0; values.len()]);
        self.values.push(values);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &[f64]) {
        for (a, b) in self.grads[id.0].iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Total number of scalars across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, v) in self.values.iter().enumerate() {
            if flat < v.len() {
                return (i, flat);
            }
            flat -= v.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn get_flat(&self, flat: usize) -> f64 {
        let (i, j) = self.locate(flat);
        self.values[i][j]
    }

    pub fn set_flat(&mut self, flat: usize, v: f64) {
        let (i, j) = self.locate(flat);
        self.values[i][j] = v;
    }

    pub fn grad_flat(&self, flat: usize) -> f64 {
        let (i, j) = self.locate(flat);
        self.grads[i][j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 0.0025,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite())
            || !(0.0..1.0).contains(&self.decay)
            || !(self.eps > 0.0)
        {
            return Err(MdnError::Config(format!(
                "invalid optimizer settings {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    mean_square: Vec<Vec<f64>>,
}

impl RmsPropState {
    pub fn new(config: RmsPropConfig, params: &ParamStore) -> Self {
        Self {
            config,
            mean_square: params.values.iter().map(|v| vec![0.0; v.len()]).collect(),
        }
    }

    pub fn mean_square(&self, id: ParamId) -> &[f64] {
        &self.mean_square[id.0]
    }

    /// `acc <- decay acc + (1 - decay) g^2; p <- p - lr g / (sqrt(acc) + eps)`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if self.mean_square.len() != params.len() {
            return Err(MdnError::Shape(
                "optimizer state does not match parameters".into(),
            ));
        }
        let RmsPropConfig { lr, decay, eps } = self.config;
        for ((acc, p), g) in self
            .mean_square
            .iter_mut()
            .zip(&mut params.values)
            .zip(&params.grads)
        {
            for ((a, p), &g) in acc.iter_mut().zip(p.iter_mut()).zip(g) {
                *a = decay * *a + (1.0 - decay) * g * g;
                *p -= lr * g / (a.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(g: f64) -> (ParamStore, ParamId) {
        let mut p = ParamStore::new();
        let id = p.add("w", vec![1.0]);
        p.accumulate(id, &[g]);
        (p, id)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, id) = single(0.0);
        let mut opt = RmsPropState::new(RmsPropConfig::default(), &p);
        opt.step(&mut p).unwrap();
        assert_eq!(p.value(id), &[1.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let (mut p, id) = single(1.0);
        let mut opt = RmsPropState::new(RmsPropConfig::default(), &p);
        opt.step(&mut p).unwrap();
        let expected = -0.0025 / (0.01f64.sqrt() + 1e-8);
        assert!((p.value(id)[0] - 1.0 - expected).abs() < 1e-15);
        assert!((expected + 0.025).abs() < 1e-8);
    }

    #[test]
    fn constant_gradient_saturates_to_lr() {
        let (mut p, id) = single(1.0);
        let mut opt = RmsPropState::new(RmsPropConfig::default(), &p);
        let mut prev = p.value(id)[0];
        let mut delta = 0.0;
        for _ in 0..5000 {
            opt.step(&mut p).unwrap();
            delta = prev - p.value(id)[0];
            prev = p.value(id)[0];
        }
        assert!((delta - 0.0025).abs() < 1e-6, "{delta}");
        assert!(opt.mean_square(id)[0] >= 0.0);
    }

    #[test]
    fn flat_indexing_spans_params() {
        let mut p = ParamStore::new();
        p.add("a", vec![1.0, 2.0]);
        p.add("b", vec![3.0]);
        assert_eq!(p.num_scalars(), 3);
        assert_eq!(p.get_flat(2), 3.0);
        p.set_flat(1, 5.0);
        assert_eq!(p.value(ParamId(0)), &[1.0, 5.0]);
    }
}
