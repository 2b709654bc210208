//! Dense feedforward networks built on the computation graph.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, NodeId};
use crate::numerics::params::{ParamId, ParamStore};

/// Nonlinearity applied after every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Shape of a dense feedforward network. Zero hidden layers gives a plain
/// affine map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input: usize,
    pub output: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input: usize, output: usize, hidden: &[usize]) -> Self {
        MlpSpec {
            input,
            output,
            hidden: hidden.to_vec(),
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config(format!(
                "all MLP dimensions must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Layer sizes including input and output.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output);
        dims
    }
}

/// A dense network instantiated inside a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    /// Per layer: (weight, bias).
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Create with uniform fan-in/fan-out weight init and zero biases.
    pub fn new(name: &str, spec: MlpSpec, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        Self::build(name, spec, store, rng, false)
    }

    /// Same, but the final layer starts at exactly zero. Used for
    /// distribution heads so an untrained model emits mean 0 / unit
    /// variance.
    pub fn new_zero_head(
        name: &str,
        spec: MlpSpec,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::build(name, spec, store, rng, true)
    }

    fn build(
        name: &str,
        spec: MlpSpec,
        store: &mut ParamStore,
        rng: &mut impl Rng,
        zero_head: bool,
    ) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (rows, cols) = (dims[l + 1], dims[l]);
            let last = l == dims.len() - 2;
            let w = if zero_head && last {
                store.add_zeros(&format!("{name}.w{l}"), rows, cols)
            } else {
                store.add_uniform(&format!("{name}.w{l}"), rows, cols, rng)
            };
            let b = store.add_zeros(&format!("{name}.b{l}"), rows, 1);
            layers.push((w, b));
        }
        Ok(Mlp { spec, layers })
    }

    /// Build the forward pass into `graph`. The final layer is always
    /// linear; hidden layers use the spec's activation.
    pub fn forward(&self, graph: &mut Graph, input: NodeId) -> Result<NodeId> {
        if graph.len(input) != self.spec.input {
            return Err(Error::config(format!(
                "MLP input dim mismatch: spec expects {}, got {}",
                self.spec.input,
                graph.len(input)
            )));
        }
        let dims = self.spec.layer_dims();
        let mut h = input;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let wn = graph.param(*w);
            let bn = graph.param(*b);
            let lin = graph.matvec(wn, h, dims[l + 1], dims[l]);
            h = graph.add(lin, bn);
            let last = l == self.layers.len() - 1;
            if !last {
                h = match self.spec.activation {
                    Activation::Tanh => graph.tanh(h),
                    Activation::Identity => h,
                };
            }
        }
        Ok(h)
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|(w, b)| [*w, *b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_affine_map_passes_input_through() {
        // Zero hidden layers, weights = identity, bias = 0: [1,2] -> [1,2].
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new("id", MlpSpec::new(2, 2, &[]), &mut store, &mut rng).unwrap();
        let (w, _) = mlp.layers[0];
        store.get_mut(w).values.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);

        let mut g = Graph::new(&store);
        let x = g.input(&[1.0, 2.0]);
        let y = mlp.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y), &[1.0, 2.0]);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        // One hidden layer, all weights/biases zero: tanh(0) = 0 maps through.
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new("z", MlpSpec::new(3, 2, &[4]), &mut store, &mut rng).unwrap();
        for (w, b) in &mlp.layers {
            store.get_mut(*w).values.fill(0.0);
            store.get_mut(*b).values.fill(0.0);
        }
        let mut g = Graph::new(&store);
        let x = g.input(&[5.0, -3.0, 0.25]);
        let y = mlp.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y), &[0.0, 0.0]);
    }

    #[test]
    fn hand_computed_two_by_two_chain() {
        // One hidden tanh layer on a 2x2 instance, checked against an
        // explicitly written out matrix chain.
        let w1: [f64; 4] = [0.5, -0.25, 1.0, 0.75];
        let b1 = [0.1, -0.2];
        let w2 = [1.5, 0.5, -1.0, 2.0];
        let b2 = [0.0, 0.3];
        let x = [0.4, -0.8];

        let h0 = (w1[0] * x[0] + w1[1] * x[1] + b1[0]).tanh();
        let h1 = (w1[2] * x[0] + w1[3] * x[1] + b1[1]).tanh();
        let expect = [
            w2[0] * h0 + w2[1] * h1 + b2[0],
            w2[2] * h0 + w2[3] * h1 + b2[1],
        ];

        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new("c", MlpSpec::new(2, 2, &[2]), &mut store, &mut rng).unwrap();
        store.get_mut(mlp.layers[0].0).values.copy_from_slice(&w1);
        store.get_mut(mlp.layers[0].1).values.copy_from_slice(&b1);
        store.get_mut(mlp.layers[1].0).values.copy_from_slice(&w2);
        store.get_mut(mlp.layers[1].1).values.copy_from_slice(&b2);

        let mut g = Graph::new(&store);
        let xn = g.input(&x);
        let y = mlp.forward(&mut g, xn).unwrap();
        for (a, e) in g.value(y).iter().zip(expect.iter()) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn input_dim_mismatch_is_config_error() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new("m", MlpSpec::new(3, 1, &[]), &mut store, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(&[1.0, 2.0]);
        assert!(matches!(mlp.forward(&mut g, x), Err(Error::Config(_))));
    }

    #[test]
    fn zero_dim_spec_rejected() {
        assert!(MlpSpec::new(0, 2, &[]).validate().is_err());
        assert!(MlpSpec::new(2, 2, &[0]).validate().is_err());
    }

    #[test]
    fn zero_head_starts_at_zero_output_for_any_input() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::new_zero_head("h", MlpSpec::new(4, 6, &[8]), &mut store, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(&[0.3, -2.0, 1.0, 0.9]);
        let y = mlp.forward(&mut g, x).unwrap();
        assert!(g.value(y).iter().all(|&v| v == 0.0));
    }
}
