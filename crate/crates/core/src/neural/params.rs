use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, Real};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named learnable tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let m = Matrix::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-bound..bound)));
        self.add(name, m)
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(Matrix::cast).collect(),
        }
    }

    /// Copies all values from a set with identical layout.
    pub fn copy_from(&mut self, other: &ParamSet<T>) {
        assert_eq!(self.names, other.names, "parameter layout mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.data_mut().copy_from_slice(b.data());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Matrix::is_finite)
    }
}

/// Gradients aligned with a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub grads: Vec<Matrix<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        Self {
            grads: params
                .values()
                .iter()
                .map(|m| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.grads[id.0]
    }

    pub fn norm(&self) -> T {
        self.grads
            .iter()
            .flat_map(|m| m.data().iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for m in &mut self.grads {
            for v in m.data_mut() {
                *v = *v * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }

    pub fn max_abs(&self) -> T {
        self.grads
            .iter()
            .flat_map(|m| m.data().iter())
            .fold(T::zero(), |a, &v| a.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParamSet<T>) -> Self {
        let z = Gradients::zeros_like(params).grads;
        Self {
            cfg,
            t: 0,
            m: z.clone(),
            v: z,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &Gradients<T>) {
        assert_eq!(grads.grads.len(), params.len(), "gradient layout");
        let mut scale = T::one();
        if let Some(c) = self.cfg.clip_norm {
            let n = grads.norm();
            if n > T::of(c) {
                scale = T::of(c) / n;
            }
        }
        self.t += 1;
        let (b1, b2) = (T::of(self.cfg.beta1), T::of(self.cfg.beta2));
        let bc1 = T::one() - b1.powi(self.t as i32);
        let bc2 = T::one() - b2.powi(self.t as i32);
        let lr = T::of(self.cfg.lr);
        let eps = T::of(self.cfg.eps);
        for (i, p) in params.values_mut().iter_mut().enumerate() {
            let g = grads.grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g[j] * scale;
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *w = *w - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = ParamSet::<f64>::new();
        let id = p.add("w", Matrix::from_vec(1, 2, vec![1.0, -1.0]));
        let mut opt = Adam::new(AdamConfig::with_lr(0.1), &p);
        let g = Gradients {
            grads: vec![Matrix::from_vec(1, 2, vec![3.0, -0.5])],
        };
        opt.step(&mut p, &g);
        // bias-corrected first step is lr * sign(g)
        let w = p.get(id);
        assert!((w.get(0, 0) - 0.9).abs() < 1e-6);
        assert!((w.get(0, 1) + 0.9).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = ParamSet::<f64>::new();
        let id = p.add("w", Matrix::from_vec(1, 1, vec![5.0]));
        let mut opt = Adam::new(AdamConfig::with_lr(0.05), &p);
        for _ in 0..2000 {
            let w = p.get(id).get(0, 0);
            let g = Gradients {
                grads: vec![Matrix::from_vec(1, 1, vec![2.0 * (w - 2.0)])],
            };
            opt.step(&mut p, &g);
        }
        assert!((p.get(id).get(0, 0) - 2.0).abs() < 1e-3);
    }
}
