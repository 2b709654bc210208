//! Unified interface over the model variants: construction, belief
//! sampling, decoding and checkpoint round-trips.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distributions::DiagGaussian;
use crate::error::{Error, Result};
use crate::numerics::{checkpoint, Graph, ParamStore};
use crate::worldmodel::baseline::BaselineModel;
use crate::worldmodel::encoder::EncoderKind;
use crate::worldmodel::leapt::{gaussian_value, LatentDims, LeaptModel, LossNodes};
use crate::worldmodel::{ObsSchema, Trajectory};

/// The four compared model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Leapt,
    LeaptAttn,
    BaselineS,
    BaselineD,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Leapt,
        ModelKind::LeaptAttn,
        ModelKind::BaselineS,
        ModelKind::BaselineD,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Leapt => "leapt",
            ModelKind::LeaptAttn => "leapt-attn",
            ModelKind::BaselineS => "baseline-s",
            ModelKind::BaselineD => "baseline-d",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        match s {
            "leapt" => Ok(ModelKind::Leapt),
            "leapt-attn" => Ok(ModelKind::LeaptAttn),
            "baseline-s" => Ok(ModelKind::BaselineS),
            "baseline-d" => Ok(ModelKind::BaselineD),
            other => Err(Error::config(format!(
                "unknown model kind `{other}` (expected leapt, leapt-attn, baseline-s or baseline-d)"
            ))),
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, ModelKind::BaselineS | ModelKind::BaselineD)
    }

    pub fn encoder_kind(&self) -> EncoderKind {
        match self {
            ModelKind::LeaptAttn => EncoderKind::Attention,
            _ => EncoderKind::Gru,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One latent draw: the ego-observable part and the hidden part. Baselines
/// carry their whole latent in `s` with `h` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub s: Vec<f64>,
    pub h: Vec<f64>,
}

/// A set of latent samples representing one belief.
pub type BeliefEnsemble = Vec<LatentSample>;

#[derive(Debug, Clone)]
pub enum Arch {
    Leapt(LeaptModel),
    Baseline(BaselineModel),
}

/// One model variant with its parameters; immutable once training ends.
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub kind: ModelKind,
    pub schema: ObsSchema,
    pub dims: LatentDims,
    pub store: ParamStore,
    pub arch: Arch,
    pub init_seed: u64,
    pub trained_epochs: usize,
}

impl WorldModel {
    pub fn new(kind: ModelKind, schema: &ObsSchema, dims: LatentDims, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = match kind {
            ModelKind::Leapt | ModelKind::LeaptAttn => Arch::Leapt(LeaptModel::new(
                schema,
                dims,
                kind.encoder_kind(),
                &mut store,
                &mut rng,
            )?),
            ModelKind::BaselineS | ModelKind::BaselineD => Arch::Baseline(BaselineModel::new(
                schema,
                dims,
                kind.encoder_kind(),
                kind == ModelKind::BaselineD,
                &mut store,
                &mut rng,
            )?),
        };
        Ok(WorldModel {
            kind,
            schema: schema.clone(),
            dims,
            store,
            arch,
            init_seed: seed,
            trained_epochs: 0,
        })
    }

    pub fn leapt(&self) -> Option<&LeaptModel> {
        match &self.arch {
            Arch::Leapt(m) => Some(m),
            Arch::Baseline(_) => None,
        }
    }

    pub fn baseline(&self) -> Option<&BaselineModel> {
        match &self.arch {
            Arch::Baseline(m) => Some(m),
            Arch::Leapt(_) => None,
        }
    }

    /// Training loss of one trajectory (negative ELBO or its deterministic
    /// analogue). `drop_task` only affects the baselines.
    pub fn loss(
        &self,
        g: &mut Graph,
        traj: &Trajectory,
        drop_task: bool,
        rng: &mut impl Rng,
    ) -> Result<LossNodes> {
        match &self.arch {
            Arch::Leapt(m) => m.elbo(g, traj, rng),
            Arch::Baseline(m) => m.loss(g, traj, drop_task, rng),
        }
    }

    fn check_history(&self, ego_hist: &[Vec<Vec<f64>>]) -> Result<()> {
        if ego_hist.is_empty() {
            return Err(Error::config("empty observation history"));
        }
        for step in ego_hist {
            if step.len() != self.schema.ego.len()
                || step.iter().zip(&self.schema.ego).any(|(v, m)| v.len() != m.dim)
            {
                return Err(Error::config("history does not match the ego schema"));
            }
        }
        Ok(())
    }

    /// Posterior over the ego-observable latent at the last step of the
    /// history. Baselines return their single-latent posterior with the
    /// task channels zeroed, as at test time.
    pub fn infer_s_posterior(&self, ego_hist: &[Vec<Vec<f64>>]) -> Result<DiagGaussian> {
        self.check_history(ego_hist)?;
        let mut g = Graph::new(&self.store);
        match &self.arch {
            Arch::Leapt(m) => {
                let inputs: Vec<_> = ego_hist
                    .iter()
                    .map(|mods| {
                        let v: Vec<f64> = mods.iter().flatten().copied().collect();
                        g.input_owned(v)
                    })
                    .collect();
                let q = m.encode_s(&mut g, &inputs)?;
                Ok(gaussian_value(&g, *q.last().expect("non-empty history")))
            }
            Arch::Baseline(m) => {
                let q = m.encode_ego_history(&mut g, ego_hist, self.schema.task_dim())?;
                Ok(gaussian_value(&g, *q.last().expect("non-empty history")))
            }
        }
    }

    /// Posterior over the hidden latent from task-complete observations
    /// (training-time inference network; decomposed models only).
    pub fn infer_h_posterior(&self, task_hist: &[Vec<Vec<f64>>]) -> Result<DiagGaussian> {
        if task_hist.is_empty() {
            return Err(Error::config("empty observation history"));
        }
        let m = self
            .leapt()
            .ok_or_else(|| Error::config("baselines have no separate hidden-latent posterior"))?;
        let mut g = Graph::new(&self.store);
        let inputs: Vec<_> = task_hist
            .iter()
            .map(|mods| {
                let v: Vec<f64> = mods.iter().flatten().copied().collect();
                g.input_owned(v)
            })
            .collect();
        let q = m.encode_h(&mut g, &inputs)?;
        Ok(gaussian_value(&g, *q.last().expect("non-empty history")))
    }

    /// Test-time replacement for the hidden-latent posterior: the learned
    /// conditional prior, at t = 1 from the current s only, later from the
    /// previous latents and action as well.
    pub fn prior_rollout_h(
        &self,
        prev: Option<(&[f64], &[f64], &[f64])>,
        s_t: &[f64],
    ) -> Result<DiagGaussian> {
        let m = self
            .leapt()
            .ok_or_else(|| Error::config("baselines have no hidden-latent prior"))?;
        if s_t.len() != self.dims.d_s {
            return Err(Error::config("s_t has the wrong dimension"));
        }
        let mut g = Graph::new(&self.store);
        let s_node = g.input(s_t);
        let dist = match prev {
            None => m.prior_h_init(&mut g, s_node)?,
            Some((s_prev, h_prev, a_prev)) => {
                let sp = g.input(s_prev);
                let hp = g.input(h_prev);
                let ap = g.input(a_prev);
                m.prior_h(&mut g, sp, hp, ap, s_node)?
            }
        };
        Ok(gaussian_value(&g, dist))
    }

    /// Ancestral latent histories given the ego history: one (s, h) chain
    /// per sample, with s drawn from the per-step posterior and h rolled
    /// out through the learned prior.
    pub fn sample_world_history(
        &self,
        ego_hist: &[Vec<Vec<f64>>],
        actions: &[Vec<f64>],
        n: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<Vec<LatentSample>>> {
        self.check_history(ego_hist)?;
        let t_len = ego_hist.len();
        if n == 0 {
            return Err(Error::config("need at least one sample"));
        }
        if t_len > 1 && actions.len() < t_len - 1 {
            return Err(Error::config("need an action for every step transition"));
        }

        let mut g = Graph::new(&self.store);
        match &self.arch {
            Arch::Leapt(m) => {
                let inputs: Vec<_> = ego_hist
                    .iter()
                    .map(|mods| {
                        let v: Vec<f64> = mods.iter().flatten().copied().collect();
                        g.input_owned(v)
                    })
                    .collect();
                let q_nodes = m.encode_s(&mut g, &inputs)?;
                let q_s: Vec<DiagGaussian> =
                    q_nodes.iter().map(|qn| gaussian_value(&g, *qn)).collect();

                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let mut chain = Vec::with_capacity(t_len);
                    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
                    for t in 0..t_len {
                        let s_t = q_s[t].sample(rng);
                        let h_dist = {
                            let s_node = g.input(&s_t);
                            match &prev {
                                None => m.prior_h_init(&mut g, s_node)?,
                                Some((s_prev, h_prev)) => {
                                    let sp = g.input(s_prev);
                                    let hp = g.input(h_prev);
                                    let ap = g.input(&actions[t - 1]);
                                    m.prior_h(&mut g, sp, hp, ap, s_node)?
                                }
                            }
                        };
                        let h_t = gaussian_value(&g, h_dist).sample(rng);
                        prev = Some((s_t.clone(), h_t.clone()));
                        chain.push(LatentSample { s: s_t, h: h_t });
                    }
                    out.push(chain);
                }
                Ok(out)
            }
            Arch::Baseline(m) => {
                let q_nodes = m.encode_ego_history(&mut g, ego_hist, self.schema.task_dim())?;
                let q_z: Vec<DiagGaussian> =
                    q_nodes.iter().map(|qn| gaussian_value(&g, *qn)).collect();
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let chain = q_z
                        .iter()
                        .map(|q| {
                            let z = if m.deterministic { q.mean.clone() } else { q.sample(rng) };
                            LatentSample { s: z, h: Vec::new() }
                        })
                        .collect();
                    out.push(chain);
                }
                Ok(out)
            }
        }
    }

    /// Belief ensemble at the last step of the history.
    pub fn sample_robot_belief(
        &self,
        ego_hist: &[Vec<Vec<f64>>],
        actions: &[Vec<f64>],
        n: usize,
        rng: &mut impl Rng,
    ) -> Result<BeliefEnsemble> {
        Ok(self
            .sample_world_history(ego_hist, actions, n, rng)?
            .into_iter()
            .map(|mut chain| chain.pop().expect("non-empty history"))
            .collect())
    }

    /// Per-modality decoder distributions for one latent sample.
    pub fn decode_task_dists(&self, sample: &LatentSample) -> Result<Vec<DiagGaussian>> {
        let mut g = Graph::new(&self.store);
        let dists = match &self.arch {
            Arch::Leapt(m) => {
                let s = g.input(&sample.s);
                let h = g.input(&sample.h);
                m.decode_task(&mut g, s, h)?
            }
            Arch::Baseline(m) => {
                let z = g.input(&sample.s);
                m.decode_task(&mut g, z)?
            }
        };
        Ok(dists.into_iter().map(|d| gaussian_value(&g, d)).collect())
    }

    /// One draw of every task modality from the decoder distributions.
    pub fn decode_task_obs(&self, sample: &LatentSample, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .decode_task_dists(sample)?
            .into_iter()
            .map(|d| d.sample(rng))
            .collect())
    }

    /// Per-modality ego decoder distributions (from the ego-observable
    /// latent part).
    pub fn decode_ego_dists(&self, sample: &LatentSample) -> Result<Vec<DiagGaussian>> {
        let mut g = Graph::new(&self.store);
        let dists = match &self.arch {
            Arch::Leapt(m) => {
                let s = g.input(&sample.s);
                m.decode_ego(&mut g, s)?
            }
            Arch::Baseline(m) => {
                let z = g.input(&sample.s);
                m.decode_ego(&mut g, z)?
            }
        };
        Ok(dists.into_iter().map(|d| gaussian_value(&g, d)).collect())
    }

    // ── Checkpointing ───────────────────────────────────────────────

    pub fn save(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let mut meta = extra.clone();
        meta.insert("kind".into(), self.kind.name().into());
        meta.insert("d_s".into(), self.dims.d_s.to_string());
        meta.insert("d_h".into(), self.dims.d_h.to_string());
        meta.insert("hidden".into(), self.dims.hidden.to_string());
        meta.insert("init_seed".into(), self.init_seed.to_string());
        meta.insert("epochs".into(), self.trained_epochs.to_string());
        meta.insert(
            "schema".into(),
            serde_json::to_string(&self.schema).map_err(|e| Error::format(e.to_string()))?,
        );
        checkpoint::save(path, &self.store, &meta)
    }

    pub fn load(path: &Path) -> Result<(WorldModel, BTreeMap<String, String>)> {
        let (loaded, meta) = checkpoint::load(path)?;
        let get = |k: &str| -> Result<&String> {
            meta.get(k)
                .ok_or_else(|| Error::format(format!("checkpoint missing `{k}` metadata")))
        };
        let kind = ModelKind::parse(get("kind")?)?;
        let dims = LatentDims {
            d_s: get("d_s")?.parse().map_err(|_| Error::format("bad d_s"))?,
            d_h: get("d_h")?.parse().map_err(|_| Error::format("bad d_h"))?,
            hidden: get("hidden")?.parse().map_err(|_| Error::format("bad hidden"))?,
        };
        let init_seed: u64 = get("init_seed")?.parse().map_err(|_| Error::format("bad seed"))?;
        let epochs: usize = get("epochs")?.parse().map_err(|_| Error::format("bad epochs"))?;
        let schema: ObsSchema = serde_json::from_str(get("schema")?)
            .map_err(|e| Error::format(format!("bad schema metadata: {e}")))?;

        let mut model = WorldModel::new(kind, &schema, dims, init_seed)?;
        model.trained_epochs = epochs;
        if model.store.len() != loaded.len() {
            return Err(Error::format(format!(
                "checkpoint has {} tensors, architecture expects {}",
                loaded.len(),
                model.store.len()
            )));
        }
        for ((id, fresh), (_, saved)) in model.store.clone().iter().zip(loaded.iter()) {
            if fresh.name != saved.name || fresh.shape != saved.shape {
                return Err(Error::format(format!(
                    "checkpoint tensor `{}` {:?} does not match architecture tensor `{}` {:?}",
                    saved.name, saved.shape, fresh.name, fresh.shape
                )));
            }
            model.store.get_mut(id).values.copy_from_slice(&saved.values);
        }
        Ok((model, meta))
    }
}
