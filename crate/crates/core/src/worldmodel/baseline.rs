//! Single-latent baselines: the standard stochastic state-space model
//! trained with task-observation drop-out, and a deterministic variant
//! where the KL terms become a squared consistency penalty.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::distributions::graph::{self as dgraph, GaussianNode};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Mlp, MlpSpec, NodeId, ParamStore};
use crate::worldmodel::encoder::{EncoderKind, SeqEncoder};
use crate::worldmodel::leapt::{LatentDims, LossNodes};
use crate::worldmodel::{ObsSchema, Trajectory};

#[derive(Debug, Clone)]
pub struct BaselineModel {
    /// True for the deterministic variant.
    pub deterministic: bool,
    pub d_z: usize,
    pub ego_mod_dims: Vec<usize>,
    pub task_mod_dims: Vec<usize>,
    pub action_dim: usize,
    encoder: SeqEncoder,
    trans: Mlp,
    ego_decoders: Vec<Mlp>,
    task_decoders: Vec<Mlp>,
}

impl BaselineModel {
    pub fn new(
        schema: &ObsSchema,
        dims: LatentDims,
        encoder_kind: EncoderKind,
        deterministic: bool,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d_z = dims.d_s + dims.d_h;
        if d_z == 0 {
            return Err(Error::config("baseline latent dim must be >= 1"));
        }
        let hidden = dims.hidden;
        let in_dim = schema.ego_dim() + schema.task_dim();
        let encoder = SeqEncoder::new(encoder_kind, "enc_z", in_dim, hidden, d_z, store, rng)?;
        let trans = Mlp::new_zero_head(
            "trans_z",
            MlpSpec::new(d_z + schema.action_dim, 2 * d_z, &[hidden]),
            store,
            rng,
        )?;
        let mut ego_decoders = Vec::new();
        for m in &schema.ego {
            ego_decoders.push(Mlp::new_zero_head(
                &format!("dec_x.{}", m.name),
                MlpSpec::new(d_z, 2 * m.dim, &[hidden]),
                store,
                rng,
            )?);
        }
        let mut task_decoders = Vec::new();
        for k in &schema.task {
            task_decoders.push(Mlp::new_zero_head(
                &format!("dec_y.{}", k.name),
                MlpSpec::new(d_z, 2 * k.dim, &[hidden]),
                store,
                rng,
            )?);
        }
        Ok(BaselineModel {
            deterministic,
            d_z,
            ego_mod_dims: schema.ego.iter().map(|m| m.dim).collect(),
            task_mod_dims: schema.task.iter().map(|m| m.dim).collect(),
            action_dim: schema.action_dim,
            encoder,
            trans,
            ego_decoders,
            task_decoders,
        })
    }

    /// Encode a sequence of (ego, task) pairs; `drop_task` feeds zeros in
    /// place of the task modalities (reconstruction targets are unchanged).
    pub fn encode(
        &self,
        g: &mut Graph,
        traj: &Trajectory,
        upto: usize,
        drop_task: bool,
    ) -> Result<Vec<GaussianNode>> {
        let inputs: Vec<NodeId> = (0..upto)
            .map(|t| {
                let mut v = traj.ego_concat(t);
                if drop_task {
                    v.extend(std::iter::repeat(0.0).take(traj.task_concat(t).len()));
                } else {
                    v.extend(traj.task_concat(t));
                }
                g.input_owned(v)
            })
            .collect();
        self.encoder.forward(g, &inputs)
    }

    /// Encode an ego-only history (test-time usage): task channels zeroed.
    pub fn encode_ego_history(
        &self,
        g: &mut Graph,
        ego_hist: &[Vec<Vec<f64>>],
        task_dim: usize,
    ) -> Result<Vec<GaussianNode>> {
        let inputs: Vec<NodeId> = ego_hist
            .iter()
            .map(|mods| {
                let mut v: Vec<f64> = mods.iter().flatten().copied().collect();
                v.extend(std::iter::repeat(0.0).take(task_dim));
                g.input_owned(v)
            })
            .collect();
        self.encoder.forward(g, &inputs)
    }

    pub fn prior_z(&self, g: &mut Graph, z_prev: NodeId, a_prev: NodeId) -> Result<GaussianNode> {
        let joined = g.concat(&[z_prev, a_prev]);
        let head = self.trans.forward(g, joined)?;
        Ok(dgraph::gaussian_from_head(g, head, self.d_z))
    }

    pub fn decode_ego(&self, g: &mut Graph, z: NodeId) -> Result<Vec<GaussianNode>> {
        self.ego_decoders
            .iter()
            .zip(&self.ego_mod_dims)
            .map(|(dec, dim)| {
                let head = dec.forward(g, z)?;
                Ok(dgraph::gaussian_from_head(g, head, *dim))
            })
            .collect()
    }

    pub fn decode_task(&self, g: &mut Graph, z: NodeId) -> Result<Vec<GaussianNode>> {
        self.task_decoders
            .iter()
            .zip(&self.task_mod_dims)
            .map(|(dec, dim)| {
                let head = dec.forward(g, z)?;
                Ok(dgraph::gaussian_from_head(g, head, *dim))
            })
            .collect()
    }

    /// Negative ELBO (stochastic variant) or reconstruction plus squared
    /// consistency penalty (deterministic variant) for one trajectory.
    ///
    /// The caller decides `drop_task` per trajectory; the deterministic
    /// variant draws nothing from `rng`.
    pub fn loss(
        &self,
        g: &mut Graph,
        traj: &Trajectory,
        drop_task: bool,
        rng: &mut impl Rng,
    ) -> Result<LossNodes> {
        let t_len = traj.horizon();
        if t_len == 0 {
            return Err(Error::config("empty trajectory"));
        }
        let q_z = self.encode(g, traj, t_len, drop_task)?;

        let mut recon_terms: Vec<NodeId> = Vec::new();
        let mut reg_terms: Vec<NodeId> = Vec::new();
        let mut recon_x_acc = 0.0;
        let mut recon_y_acc = 0.0;
        let mut reg_acc = 0.0;
        let mut kl_values = Vec::with_capacity(t_len);

        let mut prev: Option<(NodeId, NodeId)> = None; // (z, a)
        for t in 0..t_len {
            let z_t = if self.deterministic {
                q_z[t].mean
            } else {
                let noise: Vec<f64> = (0..self.d_z).map(|_| rng.sample(StandardNormal)).collect();
                dgraph::rsample(g, q_z[t], &noise)
            };

            let reg = match prev {
                None => {
                    if self.deterministic {
                        // Squared distance to the fixed zero initial state.
                        g.dot(z_t, z_t)
                    } else {
                        let p = dgraph::standard_gaussian(g, self.d_z);
                        dgraph::kl(g, q_z[t], p)
                    }
                }
                Some((z_prev, a_prev)) => {
                    if self.deterministic {
                        let joined = g.concat(&[z_prev, a_prev]);
                        let head = self.trans.forward(g, joined)?;
                        let pred = g.slice(head, 0, self.d_z);
                        let diff = g.sub(z_t, pred);
                        g.dot(diff, diff)
                    } else {
                        let p = self.prior_z(g, z_prev, a_prev)?;
                        dgraph::kl(g, q_z[t], p)
                    }
                }
            };
            reg_acc += g.scalar(reg);
            kl_values.push(g.scalar(reg));
            reg_terms.push(reg);

            let ego_dists = self.decode_ego(g, z_t)?;
            for (m, dist) in ego_dists.into_iter().enumerate() {
                let lp = dgraph::log_prob(g, dist, &traj.ego[t][m]);
                recon_x_acc += g.scalar(lp);
                recon_terms.push(lp);
            }
            let task_dists = self.decode_task(g, z_t)?;
            for (k, dist) in task_dists.into_iter().enumerate() {
                let lp = dgraph::log_prob(g, dist, &traj.task[t][k]);
                recon_y_acc += g.scalar(lp);
                recon_terms.push(lp);
            }

            if t + 1 < t_len {
                let a = g.input(&traj.actions[t]);
                prev = Some((z_t, a));
            }
        }

        let recon_sum = g.sum_scalars(&recon_terms);
        let reg_sum = g.sum_scalars(&reg_terms);
        let neg_recon = g.neg(recon_sum);
        let total = g.add(neg_recon, reg_sum);

        Ok(LossNodes {
            total,
            recon_x: recon_x_acc,
            recon_y: recon_y_acc,
            kl_s: reg_acc,
            kl_h: 0.0,
            kl_values,
        })
    }
}
