//! Causal sequence encoders: a gated recurrent aggregator and a one-layer
//! two-head attention variant behind the same interface. Both map a step
//! sequence of input vectors to one diagonal-Gaussian latent per step.

use rand::Rng;

use crate::distributions::graph::{gaussian_from_head, GaussianNode};
use crate::error::Result;
use crate::numerics::{Graph, Mlp, MlpSpec, NodeId, ParamId, ParamStore};

/// Which sequence aggregator a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Gru,
    Attention,
}

impl EncoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            EncoderKind::Gru => "gru",
            EncoderKind::Attention => "attention",
        }
    }

    pub fn parse(s: &str) -> Option<EncoderKind> {
        match s {
            "gru" => Some(EncoderKind::Gru),
            "attention" => Some(EncoderKind::Attention),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum SeqEncoder {
    Gru(GruEncoder),
    Attention(AttnEncoder),
}

impl SeqEncoder {
    pub fn new(
        kind: EncoderKind,
        name: &str,
        input_dim: usize,
        hidden: usize,
        latent_dim: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(match kind {
            EncoderKind::Gru => {
                SeqEncoder::Gru(GruEncoder::new(name, input_dim, hidden, latent_dim, store, rng)?)
            }
            EncoderKind::Attention => SeqEncoder::Attention(AttnEncoder::new(
                name, input_dim, hidden, latent_dim, store, rng,
            )?),
        })
    }

    /// Causally encode the inputs: the distribution at step t depends on
    /// steps 1..=t only.
    pub fn forward(&self, g: &mut Graph, inputs: &[NodeId]) -> Result<Vec<GaussianNode>> {
        match self {
            SeqEncoder::Gru(e) => e.forward(g, inputs),
            SeqEncoder::Attention(e) => e.forward(g, inputs),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            SeqEncoder::Gru(e) => e.latent_dim,
            SeqEncoder::Attention(e) => e.latent_dim,
        }
    }
}

/// Gated recurrent cell over the sequence, with a zero-initialized
/// Gaussian head per step.
#[derive(Debug, Clone)]
pub struct GruEncoder {
    pub input_dim: usize,
    pub hidden: usize,
    pub latent_dim: usize,
    w_ir: ParamId,
    w_iz: ParamId,
    w_in: ParamId,
    w_hr: ParamId,
    w_hz: ParamId,
    w_hn: ParamId,
    b_r: ParamId,
    b_z: ParamId,
    b_in: ParamId,
    b_hn: ParamId,
    head: Mlp,
}

impl GruEncoder {
    pub fn new(
        name: &str,
        input_dim: usize,
        hidden: usize,
        latent_dim: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let head = Mlp::new_zero_head(
            &format!("{name}.head"),
            MlpSpec::new(hidden, 2 * latent_dim, &[]),
            store,
            rng,
        )?;
        Ok(GruEncoder {
            input_dim,
            hidden,
            latent_dim,
            w_ir: store.add_uniform(&format!("{name}.w_ir"), hidden, input_dim, rng),
            w_iz: store.add_uniform(&format!("{name}.w_iz"), hidden, input_dim, rng),
            w_in: store.add_uniform(&format!("{name}.w_in"), hidden, input_dim, rng),
            w_hr: store.add_uniform(&format!("{name}.w_hr"), hidden, hidden, rng),
            w_hz: store.add_uniform(&format!("{name}.w_hz"), hidden, hidden, rng),
            w_hn: store.add_uniform(&format!("{name}.w_hn"), hidden, hidden, rng),
            b_r: store.add_zeros(&format!("{name}.b_r"), hidden, 1),
            b_z: store.add_zeros(&format!("{name}.b_z"), hidden, 1),
            b_in: store.add_zeros(&format!("{name}.b_in"), hidden, 1),
            b_hn: store.add_zeros(&format!("{name}.b_hn"), hidden, 1),
            head,
        })
    }

    fn cell(&self, g: &mut Graph, x: NodeId, h: NodeId) -> NodeId {
        let (n_h, n_in) = (self.hidden, self.input_dim);
        let w_ir = g.param(self.w_ir);
        let w_iz = g.param(self.w_iz);
        let w_in = g.param(self.w_in);
        let w_hr = g.param(self.w_hr);
        let w_hz = g.param(self.w_hz);
        let w_hn = g.param(self.w_hn);
        let b_r = g.param(self.b_r);
        let b_z = g.param(self.b_z);
        let b_in = g.param(self.b_in);
        let b_hn = g.param(self.b_hn);

        let rx = g.matvec(w_ir, x, n_h, n_in);
        let rh = g.matvec(w_hr, h, n_h, n_h);
        let r_pre = g.add(rx, rh);
        let r_pre = g.add(r_pre, b_r);
        let r = g.sigmoid(r_pre);

        let zx = g.matvec(w_iz, x, n_h, n_in);
        let zh = g.matvec(w_hz, h, n_h, n_h);
        let z_pre = g.add(zx, zh);
        let z_pre = g.add(z_pre, b_z);
        let z = g.sigmoid(z_pre);

        let nx = g.matvec(w_in, x, n_h, n_in);
        let nx = g.add(nx, b_in);
        let nh = g.matvec(w_hn, h, n_h, n_h);
        let nh = g.add(nh, b_hn);
        let gated = g.mul(r, nh);
        let n_pre = g.add(nx, gated);
        let n = g.tanh(n_pre);

        // h' = (1 - z) * n + z * h
        let zn = g.mul(z, n);
        let n_minus_zn = g.sub(n, zn);
        let zh_keep = g.mul(z, h);
        g.add(n_minus_zn, zh_keep)
    }

    pub fn forward(&self, g: &mut Graph, inputs: &[NodeId]) -> Result<Vec<GaussianNode>> {
        let mut h = g.input_owned(vec![0.0; self.hidden]);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            h = self.cell(g, x, h);
            let head_out = self.head.forward(g, h)?;
            out.push(gaussian_from_head(g, head_out, self.latent_dim));
        }
        Ok(out)
    }
}

/// One-layer, two-head causal self-attention encoder with a feedforward
/// sublayer and sinusoidal positions.
#[derive(Debug, Clone)]
pub struct AttnEncoder {
    pub input_dim: usize,
    pub d_model: usize,
    pub latent_dim: usize,
    heads: usize,
    d_head: usize,
    embed: Mlp,
    w_q: Vec<ParamId>,
    w_k: Vec<ParamId>,
    w_v: Vec<ParamId>,
    w_o: ParamId,
    b_o: ParamId,
    ffn: Mlp,
    head: Mlp,
}

impl AttnEncoder {
    pub fn new(
        name: &str,
        input_dim: usize,
        d_model: usize,
        latent_dim: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let heads = 2;
        assert!(d_model % heads == 0, "d_model must split across heads");
        let d_head = d_model / heads;
        let embed = Mlp::new(
            &format!("{name}.embed"),
            MlpSpec::new(input_dim, d_model, &[]),
            store,
            rng,
        )?;
        let mut w_q = Vec::new();
        let mut w_k = Vec::new();
        let mut w_v = Vec::new();
        for hh in 0..heads {
            w_q.push(store.add_uniform(&format!("{name}.h{hh}.w_q"), d_head, d_model, rng));
            w_k.push(store.add_uniform(&format!("{name}.h{hh}.w_k"), d_head, d_model, rng));
            w_v.push(store.add_uniform(&format!("{name}.h{hh}.w_v"), d_head, d_model, rng));
        }
        let w_o = store.add_uniform(&format!("{name}.w_o"), d_model, d_model, rng);
        let b_o = store.add_zeros(&format!("{name}.b_o"), d_model, 1);
        let ffn = Mlp::new(
            &format!("{name}.ffn"),
            MlpSpec::new(d_model, d_model, &[d_model]),
            store,
            rng,
        )?;
        let head = Mlp::new_zero_head(
            &format!("{name}.out"),
            MlpSpec::new(d_model, 2 * latent_dim, &[]),
            store,
            rng,
        )?;
        Ok(AttnEncoder {
            input_dim,
            d_model,
            latent_dim,
            heads,
            d_head,
            embed,
            w_q,
            w_k,
            w_v,
            w_o,
            b_o,
            ffn,
            head,
        })
    }

    fn positional(&self, t: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.d_model];
        for i in 0..self.d_model / 2 {
            let rate = (t as f64) / 10000f64.powf(2.0 * i as f64 / self.d_model as f64);
            v[2 * i] = rate.sin();
            v[2 * i + 1] = rate.cos();
        }
        v
    }

    pub fn forward(&self, g: &mut Graph, inputs: &[NodeId]) -> Result<Vec<GaussianNode>> {
        // Token embeddings with positions.
        let mut tokens = Vec::with_capacity(inputs.len());
        for (t, &x) in inputs.iter().enumerate() {
            let e = self.embed.forward(g, x)?;
            let pos = self.positional(t);
            let pos_node = g.input(&pos);
            tokens.push(g.add(e, pos_node));
        }

        // Per-head projections for every position.
        let mut qs = vec![Vec::with_capacity(tokens.len()); self.heads];
        let mut ks = vec![Vec::with_capacity(tokens.len()); self.heads];
        let mut vs = vec![Vec::with_capacity(tokens.len()); self.heads];
        for &tok in &tokens {
            for hh in 0..self.heads {
                let wq = g.param(self.w_q[hh]);
                let wk = g.param(self.w_k[hh]);
                let wv = g.param(self.w_v[hh]);
                qs[hh].push(g.matvec(wq, tok, self.d_head, self.d_model));
                ks[hh].push(g.matvec(wk, tok, self.d_head, self.d_model));
                vs[hh].push(g.matvec(wv, tok, self.d_head, self.d_model));
            }
        }

        let scale = 1.0 / (self.d_head as f64).sqrt();
        let mut out = Vec::with_capacity(tokens.len());
        for t in 0..tokens.len() {
            let mut head_outputs = Vec::with_capacity(self.heads);
            for hh in 0..self.heads {
                // Causal attention over positions 0..=t.
                let mut scores = Vec::with_capacity(t + 1);
                for tau in 0..=t {
                    let s = g.dot(qs[hh][t], ks[hh][tau]);
                    scores.push(g.scale(s, scale));
                }
                let score_vec = g.concat(&scores);
                let weights = g.softmax(score_vec);
                let mut acc = g.input_owned(vec![0.0; self.d_head]);
                for tau in 0..=t {
                    let w = g.slice(weights, tau, 1);
                    let contrib = g.scale_by(vs[hh][tau], w);
                    acc = g.add(acc, contrib);
                }
                head_outputs.push(acc);
            }
            let concat = g.concat(&head_outputs);
            let wo = g.param(self.w_o);
            let bo = g.param(self.b_o);
            let mixed = g.matvec(wo, concat, self.d_model, self.d_model);
            let mixed = g.add(mixed, bo);
            let residual = g.add(tokens[t], mixed);
            let ff = self.ffn.forward(g, residual)?;
            let block = g.add(residual, ff);
            let head_out = self.head.forward(g, block)?;
            out.push(gaussian_from_head(g, head_out, self.latent_dim));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run_encoder(kind: EncoderKind, inputs: &[Vec<f64>]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut store = ParamStore::new();
        let enc = SeqEncoder::new(kind, "enc", 3, 8, 4, &mut store, &mut rng).unwrap();
        // Give the head non-trivial weights so outputs vary.
        for (pid, p) in store.clone().iter() {
            if p.name.contains("head") || p.name.contains("out") {
                let mut r = ChaCha8Rng::seed_from_u64(99);
                let vals: Vec<f64> = (0..p.len()).map(|_| r.gen_range(-0.3..0.3)).collect();
                store.get_mut(pid).values.copy_from_slice(&vals);
            }
        }
        let mut g = Graph::new(&store);
        let nodes: Vec<NodeId> = inputs.iter().map(|x| g.input(x)).collect();
        let out = enc.forward(&mut g, &nodes).unwrap();
        out.iter()
            .map(|gn| (g.value(gn.mean).to_vec(), g.value(gn.log_var).to_vec()))
            .collect()
    }

    #[test]
    fn encoders_are_causal() {
        let base = vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6], vec![0.7, 0.8, 0.9]];
        let mut altered = base.clone();
        altered[2] = vec![-5.0, 5.0, -5.0];
        for kind in [EncoderKind::Gru, EncoderKind::Attention] {
            let a = run_encoder(kind, &base);
            let b = run_encoder(kind, &altered);
            // Steps 1 and 2 unaffected by a change at step 3.
            for t in 0..2 {
                assert_eq!(a[t], b[t], "{kind:?} step {t} must ignore the future");
            }
            assert_ne!(a[2], b[2], "{kind:?} step 3 must see its own input");
        }
    }

    #[test]
    fn zero_head_gives_standard_normal_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let enc = SeqEncoder::new(EncoderKind::Gru, "e", 2, 6, 3, &mut store, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(&[0.4, -0.4]);
        let out = enc.forward(&mut g, &[x]).unwrap();
        assert!(g.value(out[0].mean).iter().all(|&v| v == 0.0));
        assert!(g.value(out[0].log_var).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_given_same_inputs() {
        let inputs = vec![vec![0.3, -0.7, 0.2]; 4];
        for kind in [EncoderKind::Gru, EncoderKind::Attention] {
            let a = run_encoder(kind, &inputs);
            let b = run_encoder(kind, &inputs);
            assert_eq!(a, b);
        }
    }
}
