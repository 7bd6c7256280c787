//! Named parameter storage with gradient accumulators and Adam state.

use std::sync::Arc;

use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;

use super::Real;

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

/// One trainable tensor: value, gradient accumulator, and Adam moments.
pub struct Parameter<F: Real> {
    pub value: Arc<Array2<F>>,
    pub grad: Array2<F>,
    pub m: Array2<F>,
    pub v: Array2<F>,
}

/// Ordered, name-indexed parameter collection. Registration order is the
/// serialization order, so a fixed seed yields identical initialization.
pub struct ParamStore<F: Real> {
    entries: IndexMap<String, Parameter<F>>,
    step: u64,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
            step: 0,
        }
    }

    pub fn register(&mut self, name: &str, value: Array2<F>) -> ParamId {
        assert!(
            !self.entries.contains_key(name),
            "duplicate parameter {name}"
        );
        let dim = value.dim();
        let p = Parameter {
            value: Arc::new(value),
            grad: Array2::zeros(dim),
            m: Array2::zeros(dim),
            v: Array2::zeros(dim),
        };
        self.entries.insert(name.to_string(), p);
        ParamId(self.entries.len() - 1)
    }

    /// Glorot-uniform initialization with fan-in/fan-out taken from the
    /// matrix shape. Sampling is done in f64 so f32 and f64 stores draw
    /// identical sequences.
    pub fn register_glorot(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let value = Array2::from_shape_simple_fn((rows, cols), || {
            F::from_f64(rng.gen_range(-limit..limit))
        });
        self.register(name, value)
    }

    pub fn register_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.register(name, Array2::zeros((rows, cols)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn value_arc(&self, id: ParamId) -> Arc<Array2<F>> {
        Arc::clone(&self.entries[id.0].value)
    }

    pub fn value(&self, id: ParamId) -> &Array2<F> {
        &self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array2<F> {
        &self.entries[id.0].grad
    }

    pub fn name_of(&self, id: ParamId) -> &str {
        self.entries.get_index(id.0).expect("valid param id").0
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.get_index_of(name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<F>)> {
        self.entries.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub(crate) fn entry_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.entries[id.0]
    }

    /// Add `g` to the parameter's gradient accumulator.
    pub fn accumulate_grad(&mut self, id: ParamId, g: &Array2<F>) {
        self.entries[id.0].grad += g;
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.entries.iter_mut() {
            p.grad.fill(F::zero());
        }
    }

    /// Sum of squared gradient entries for one parameter.
    pub fn grad_norm_sq(&self, id: ParamId) -> f64 {
        self.entries[id.0]
            .grad
            .iter()
            .map(|&g| g.as_f64() * g.as_f64())
            .sum()
    }

    /// Overwrite a parameter value (checkpoint loading, tests).
    pub fn set_value(&mut self, id: ParamId, value: Array2<F>) {
        let p = &mut self.entries[id.0];
        assert_eq!(p.value.dim(), value.dim(), "set_value: shape mismatch");
        p.value = Arc::new(value);
    }
}

/// Adam hyperparameters; beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Piecewise learning-rate schedule: 0.002 before step 50000, 1e-4 from
/// step 50000 on.
pub fn learning_rate(step: u64) -> f64 {
    if step < 50_000 {
        0.002
    } else {
        1e-4
    }
}

/// One bias-corrected Adam update over every parameter, then zero the
/// gradient accumulators. Increments the store's step counter.
pub fn adam_step<F: Real>(store: &mut ParamStore<F>, lr: F, cfg: &AdamConfig) {
    store.step += 1;
    let t = store.step as i32;
    let b1 = F::from_f64(cfg.beta1);
    let b2 = F::from_f64(cfg.beta2);
    let eps = F::from_f64(cfg.eps);
    let one = F::one();
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);

    for (_, p) in store.entries.iter_mut() {
        let value = Arc::make_mut(&mut p.value);
        ndarray::Zip::from(value)
            .and(&mut p.m)
            .and(&mut p.v)
            .and(&p.grad)
            .for_each(|w, m, v, &g| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            });
        p.grad.fill(F::zero());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store: ParamStore<f32> = ParamStore::new();
        let id = store.register("w", ndarray::array![[1.5, -2.0], [0.5, 3.0]]);
        let before = store.value(id).clone();
        adam_step(&mut store, 0.002, &AdamConfig::default());
        assert_eq!(store.value(id), &before);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let id = store.register("w", ndarray::array![[1.0]]);
        store.accumulate_grad(id, &ndarray::array![[1.0]]);
        adam_step(&mut store, 0.002, &AdamConfig::default());
        // bias-corrected first step: lr * g / (|g| + eps)
        let delta = 1.0 - store.value(id)[[0, 0]];
        assert!((delta - 0.002).abs() < 1e-9, "delta {delta}");
    }

    #[test]
    fn lr_schedule_boundary() {
        assert_eq!(learning_rate(0), 0.002);
        assert_eq!(learning_rate(49_999), 0.002);
        assert_eq!(learning_rate(50_000), 1e-4);
        assert_eq!(learning_rate(50_001), 1e-4);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let draw = || {
            let mut store: ParamStore<f32> = ParamStore::new();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            let id = store.register_glorot("w", 4, 3, &mut rng);
            store.value(id).clone()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn f32_and_f64_draw_identical_init_sequences() {
        let mut s32: ParamStore<f32> = ParamStore::new();
        let mut s64: ParamStore<f64> = ParamStore::new();
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = s32.register_glorot("w", 3, 5, &mut r1);
        let b = s64.register_glorot("w", 3, 5, &mut r2);
        for (x, y) in s32.value(a).iter().zip(s64.value(b).iter()) {
            assert_eq!(*x, *y as f32);
        }
    }
}
