//! Named, shaped parameter tensors with gradient accumulators.

use rand::Rng;

/// Handle to one parameter tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

/// One learnable tensor: row-major values plus an accumulated gradient of
/// the same shape.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    /// (rows, cols); vectors use cols = 1.
    pub shape: (usize, usize),
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat collection of all parameters of one model.
///
/// Construction happens once up front; training mutates `values`/`grad` in
/// place, and after training the store is treated as immutable and may be
/// shared read-only across threads.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor with explicit initial values.
    pub fn add(&mut self, name: &str, shape: (usize, usize), values: Vec<f64>) -> ParamId {
        assert_eq!(
            values.len(),
            shape.0 * shape.1,
            "param {name}: value count does not match shape {shape:?}"
        );
        let grad = vec![0.0; values.len()];
        self.params.push(Param {
            name: name.to_string(),
            shape,
            values,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    /// Weight matrix initialized uniformly in [-a, a] with
    /// a = sqrt(6 / (fan_in + fan_out)).
    pub fn add_uniform(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> ParamId {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
        self.add(name, (rows, cols), values)
    }

    /// Zero-initialized tensor (biases, distribution heads).
    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, (rows, cols), vec![0.0; rows * cols])
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].values
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        self.params[id.0].shape
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Add `delta` into the gradient accumulator of `id`.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &[f64]) {
        let g = &mut self.params[id.0].grad;
        assert_eq!(g.len(), delta.len(), "gradient shape mismatch");
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_grad_accumulation() {
        let mut store = ParamStore::new();
        let id = store.add("w", (2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(store.shape(id), (2, 2));
        store.accumulate_grad(id, &[1.0, 1.0, 1.0, 1.0]);
        store.accumulate_grad(id, &[0.5, 0.0, 0.0, 0.0]);
        assert_eq!(store.get(id).grad, vec![1.5, 1.0, 1.0, 1.0]);
        store.zero_grads();
        assert!(store.get(id).grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn uniform_init_respects_fan_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let id = store.add_uniform("w", 16, 8, &mut rng);
        let a = (6.0 / 24.0f64).sqrt();
        assert!(store.values(id).iter().all(|v| v.abs() <= a));
        // Not degenerate.
        assert!(store.values(id).iter().any(|v| v.abs() > 1e-3));
    }
}
