//! The decomposed world model: the latent state splits into an
//! ego-observable part inferred from ego observations and a hidden part
//! inferred from task-complete observations during training, with the
//! hidden part generated from its learned conditional prior at test time.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::graph::{self as dgraph, GaussianNode};
use crate::distributions::DiagGaussian;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Mlp, MlpSpec, NodeId, ParamStore};
use crate::worldmodel::encoder::{EncoderKind, SeqEncoder};
use crate::worldmodel::{ObsSchema, Trajectory};

/// Latent and hidden-layer widths shared by all variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentDims {
    pub d_s: usize,
    pub d_h: usize,
    pub hidden: usize,
}

impl Default for LatentDims {
    fn default() -> Self {
        LatentDims { d_s: 8, d_h: 8, hidden: 24 }
    }
}

/// Scalar loss node plus its per-term breakdown.
pub struct LossNodes {
    pub total: NodeId,
    pub recon_x: f64,
    pub recon_y: f64,
    pub kl_s: f64,
    pub kl_h: f64,
    /// Every individual KL term value, for the non-negativity invariant.
    pub kl_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LeaptModel {
    pub dims: LatentDims,
    pub ego_mod_dims: Vec<usize>,
    pub task_mod_dims: Vec<usize>,
    pub action_dim: usize,
    s_encoder: SeqEncoder,
    h_encoder: Option<SeqEncoder>,
    trans_s: Mlp,
    trans_h: Option<Mlp>,
    init_h: Option<Mlp>,
    ego_decoders: Vec<Mlp>,
    task_decoders: Vec<Mlp>,
}

impl LeaptModel {
    pub fn new(
        schema: &ObsSchema,
        dims: LatentDims,
        encoder: EncoderKind,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (d_s, d_h, hidden) = (dims.d_s, dims.d_h, dims.hidden);
        if d_s == 0 {
            return Err(Error::config("d_s must be >= 1"));
        }
        let ego_dim = schema.ego_dim();
        let task_dim = schema.task_dim();
        let a_dim = schema.action_dim;

        let s_encoder = SeqEncoder::new(encoder, "enc_s", ego_dim, hidden, d_s, store, rng)?;
        let (h_encoder, trans_h, init_h) = if d_h > 0 {
            let h_enc = SeqEncoder::new(encoder, "enc_h", task_dim, hidden, d_h, store, rng)?;
            let trans_h = Mlp::new_zero_head(
                "trans_h",
                MlpSpec::new(d_s + d_h + a_dim + d_s, 2 * d_h, &[hidden]),
                store,
                rng,
            )?;
            let init_h = Mlp::new_zero_head(
                "init_h",
                MlpSpec::new(d_s, 2 * d_h, &[hidden]),
                store,
                rng,
            )?;
            (Some(h_enc), Some(trans_h), Some(init_h))
        } else {
            (None, None, None)
        };
        let trans_s = Mlp::new_zero_head(
            "trans_s",
            MlpSpec::new(d_s + d_h + a_dim, 2 * d_s, &[hidden]),
            store,
            rng,
        )?;

        let mut ego_decoders = Vec::new();
        for m in &schema.ego {
            ego_decoders.push(Mlp::new_zero_head(
                &format!("dec_x.{}", m.name),
                MlpSpec::new(d_s, 2 * m.dim, &[hidden]),
                store,
                rng,
            )?);
        }
        let mut task_decoders = Vec::new();
        for k in &schema.task {
            task_decoders.push(Mlp::new_zero_head(
                &format!("dec_y.{}", k.name),
                MlpSpec::new(d_s + d_h, 2 * k.dim, &[hidden]),
                store,
                rng,
            )?);
        }

        Ok(LeaptModel {
            dims,
            ego_mod_dims: schema.ego.iter().map(|m| m.dim).collect(),
            task_mod_dims: schema.task.iter().map(|m| m.dim).collect(),
            action_dim: a_dim,
            s_encoder,
            h_encoder,
            trans_s,
            trans_h,
            init_h,
            ego_decoders,
            task_decoders,
        })
    }

    pub fn encode_s(&self, g: &mut Graph, ego_inputs: &[NodeId]) -> Result<Vec<GaussianNode>> {
        self.s_encoder.forward(g, ego_inputs)
    }

    pub fn encode_h(&self, g: &mut Graph, task_inputs: &[NodeId]) -> Result<Vec<GaussianNode>> {
        match &self.h_encoder {
            Some(enc) => enc.forward(g, task_inputs),
            None => Ok(task_inputs
                .iter()
                .map(|_| dgraph::standard_gaussian(g, 0))
                .collect()),
        }
    }

    /// p(s_t | s_{t-1}, h_{t-1}, a_{t-1}).
    pub fn prior_s(
        &self,
        g: &mut Graph,
        s_prev: NodeId,
        h_prev: NodeId,
        a_prev: NodeId,
    ) -> Result<GaussianNode> {
        let joined = g.concat(&[s_prev, h_prev, a_prev]);
        let head = self.trans_s.forward(g, joined)?;
        Ok(dgraph::gaussian_from_head(g, head, self.dims.d_s))
    }

    /// p(h_1 | s_1); standard normal when the hidden part is disabled.
    pub fn prior_h_init(&self, g: &mut Graph, s1: NodeId) -> Result<GaussianNode> {
        match &self.init_h {
            Some(net) => {
                let head = net.forward(g, s1)?;
                Ok(dgraph::gaussian_from_head(g, head, self.dims.d_h))
            }
            None => Ok(dgraph::standard_gaussian(g, 0)),
        }
    }

    /// p(h_t | s_{t-1}, h_{t-1}, a_{t-1}, s_t).
    pub fn prior_h(
        &self,
        g: &mut Graph,
        s_prev: NodeId,
        h_prev: NodeId,
        a_prev: NodeId,
        s_t: NodeId,
    ) -> Result<GaussianNode> {
        match &self.trans_h {
            Some(net) => {
                let joined = g.concat(&[s_prev, h_prev, a_prev, s_t]);
                let head = net.forward(g, joined)?;
                Ok(dgraph::gaussian_from_head(g, head, self.dims.d_h))
            }
            None => Ok(dgraph::standard_gaussian(g, 0)),
        }
    }

    /// Per-modality ego decoders d_x(s).
    pub fn decode_ego(&self, g: &mut Graph, s: NodeId) -> Result<Vec<GaussianNode>> {
        self.ego_decoders
            .iter()
            .zip(&self.ego_mod_dims)
            .map(|(dec, dim)| {
                let head = dec.forward(g, s)?;
                Ok(dgraph::gaussian_from_head(g, head, *dim))
            })
            .collect()
    }

    /// Per-modality task decoders d_y(s, h).
    pub fn decode_task(&self, g: &mut Graph, s: NodeId, h: NodeId) -> Result<Vec<GaussianNode>> {
        let joined = g.concat(&[s, h]);
        self.task_decoders
            .iter()
            .zip(&self.task_mod_dims)
            .map(|(dec, dim)| {
                let head = dec.forward(g, joined)?;
                Ok(dgraph::gaussian_from_head(g, head, *dim))
            })
            .collect()
    }

    /// Negative ELBO of one trajectory, estimated with one reparameterized
    /// sample per latent per step, rolled out ancestrally.
    pub fn elbo(&self, g: &mut Graph, traj: &Trajectory, rng: &mut impl Rng) -> Result<LossNodes> {
        let t_len = traj.horizon();
        if t_len == 0 {
            return Err(Error::config("empty trajectory"));
        }
        let (d_s, d_h) = (self.dims.d_s, self.dims.d_h);

        let ego_inputs: Vec<NodeId> =
            (0..t_len).map(|t| g.input_owned(traj.ego_concat(t))).collect();
        let task_inputs: Vec<NodeId> =
            (0..t_len).map(|t| g.input_owned(traj.task_concat(t))).collect();
        let q_s = self.encode_s(g, &ego_inputs)?;
        let q_h = self.encode_h(g, &task_inputs)?;

        let mut recon_terms: Vec<NodeId> = Vec::new();
        let mut kl_terms: Vec<NodeId> = Vec::new();
        let mut recon_x_acc = 0.0;
        let mut recon_y_acc = 0.0;
        let mut kl_s_acc = 0.0;
        let mut kl_h_acc = 0.0;
        let mut kl_values = Vec::with_capacity(2 * t_len);

        let mut prev: Option<(NodeId, NodeId, NodeId)> = None; // (s, h, a)
        for t in 0..t_len {
            let noise_s: Vec<f64> = (0..d_s).map(|_| rng.sample(StandardNormal)).collect();
            let noise_h: Vec<f64> = (0..d_h).map(|_| rng.sample(StandardNormal)).collect();
            let s_t = dgraph::rsample(g, q_s[t], &noise_s);
            let h_t = if d_h > 0 {
                dgraph::rsample(g, q_h[t], &noise_h)
            } else {
                g.input_owned(Vec::new())
            };

            // KL terms against the matching priors.
            let (p_s, p_h) = match prev {
                None => {
                    let p_s = dgraph::standard_gaussian(g, d_s);
                    let p_h = self.prior_h_init(g, s_t)?;
                    (p_s, p_h)
                }
                Some((s_prev, h_prev, a_prev)) => {
                    let p_s = self.prior_s(g, s_prev, h_prev, a_prev)?;
                    let p_h = self.prior_h(g, s_prev, h_prev, a_prev, s_t)?;
                    (p_s, p_h)
                }
            };
            let kl_s_t = dgraph::kl(g, q_s[t], p_s);
            kl_s_acc += g.scalar(kl_s_t);
            kl_values.push(g.scalar(kl_s_t));
            kl_terms.push(kl_s_t);
            if d_h > 0 {
                let kl_h_t = dgraph::kl(g, q_h[t], p_h);
                kl_h_acc += g.scalar(kl_h_t);
                kl_values.push(g.scalar(kl_h_t));
                kl_terms.push(kl_h_t);
            }

            // Reconstruction terms.
            let ego_dists = self.decode_ego(g, s_t)?;
            for (m, dist) in ego_dists.into_iter().enumerate() {
                let lp = dgraph::log_prob(g, dist, &traj.ego[t][m]);
                recon_x_acc += g.scalar(lp);
                recon_terms.push(lp);
            }
            let task_dists = self.decode_task(g, s_t, h_t)?;
            for (k, dist) in task_dists.into_iter().enumerate() {
                let lp = dgraph::log_prob(g, dist, &traj.task[t][k]);
                recon_y_acc += g.scalar(lp);
                recon_terms.push(lp);
            }

            if t + 1 < t_len {
                let a = g.input(&traj.actions[t]);
                prev = Some((s_t, h_t, a));
            }
        }

        let recon_sum = g.sum_scalars(&recon_terms);
        let kl_sum = g.sum_scalars(&kl_terms);
        let neg_recon = g.neg(recon_sum);
        let total = g.add(neg_recon, kl_sum);

        Ok(LossNodes {
            total,
            recon_x: recon_x_acc,
            recon_y: recon_y_acc,
            kl_s: kl_s_acc,
            kl_h: kl_h_acc,
            kl_values,
        })
    }
}

/// Extract the concrete distribution held by a Gaussian node pair.
pub fn gaussian_value(g: &Graph, node: GaussianNode) -> DiagGaussian {
    DiagGaussian::new(g.value(node.mean).to_vec(), g.value(node.log_var).to_vec())
}
