//! Visual and conceptual perspective-taking.
//!
//! A pose-conditioned observation synthesizer maps task-complete
//! observations plus a viewing pose to predicted ego observations. Feeding
//! it sampled task-complete observations and the human's pose yields
//! synthesized human observations; running those through the robot's own
//! inference networks (with neutral actions, since the human does not see
//! the robot act) yields samples of the human's belief.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Adam, Graph, Mlp, MlpSpec, NodeId, ParamStore};
use crate::worldmodel::{LatentSample, ObsSchema, Trajectory, WorldModel};

/// One training tuple: the robot's ego observations, the task-complete
/// observations and the robot's pose at that step.
#[derive(Debug, Clone)]
pub struct PerspectiveTuple {
    pub ego: Vec<Vec<f64>>,
    pub task: Vec<Vec<f64>>,
    pub pose: Vec<f64>,
}

/// Collect per-step tuples from roll-out trajectories.
pub fn tuples_from_trajectories(data: &[Trajectory]) -> Vec<PerspectiveTuple> {
    let mut out = Vec::new();
    for traj in data {
        for t in 0..traj.horizon() {
            out.push(PerspectiveTuple {
                ego: traj.ego[t].clone(),
                task: traj.task[t].clone(),
                pose: traj.robot_pose[t].clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PerspectiveConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of tuples held out for the reported squared error.
    pub holdout: f64,
}

impl Default for PerspectiveConfig {
    fn default() -> Self {
        PerspectiveConfig {
            hidden: vec![64],
            epochs: 400,
            lr: 3e-3,
            seed: 0,
            holdout: 0.1,
        }
    }
}

/// Deterministic pose-conditioned observation synthesizer: one feedforward
/// head per ego modality, all consuming the concatenated task observations
/// plus the viewing pose.
#[derive(Debug, Clone)]
pub struct PerspectiveModel {
    pub store: ParamStore,
    pub task_dim: usize,
    pub pose_dim: usize,
    pub ego_mod_dims: Vec<usize>,
    heads: Vec<Mlp>,
}

impl PerspectiveModel {
    pub fn new(schema: &ObsSchema, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = schema.task_dim() + schema.pose_dim;
        let mut heads = Vec::new();
        for m in &schema.ego {
            heads.push(Mlp::new_zero_head(
                &format!("pt.{}", m.name),
                MlpSpec::new(in_dim, m.dim, hidden),
                &mut store,
                &mut rng,
            )?);
        }
        Ok(PerspectiveModel {
            store,
            task_dim: schema.task_dim(),
            pose_dim: schema.pose_dim,
            ego_mod_dims: schema.ego.iter().map(|m| m.dim).collect(),
            heads,
        })
    }

    fn input_node(&self, g: &mut Graph, task: &[Vec<f64>], pose: &[f64]) -> Result<NodeId> {
        let mut v: Vec<f64> = task.iter().flatten().copied().collect();
        if v.len() != self.task_dim || pose.len() != self.pose_dim {
            return Err(Error::config("perspective input dims do not match the schema"));
        }
        v.extend_from_slice(pose);
        Ok(g.input_owned(v))
    }

    /// Predicted ego observations for a viewer at `pose`.
    pub fn predict(&self, task: &[Vec<f64>], pose: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.store);
        let x = self.input_node(&mut g, task, pose)?;
        let mut out = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let y = head.forward(&mut g, x)?;
            out.push(g.value(y).to_vec());
        }
        Ok(out)
    }

    /// Squared error of the prediction against a recorded observation.
    pub fn squared_error(&self, tuple: &PerspectiveTuple) -> Result<f64> {
        let pred = self.predict(&tuple.task, &tuple.pose)?;
        let mut total = 0.0;
        for (p, x) in pred.iter().zip(&tuple.ego) {
            for (a, b) in p.iter().zip(x) {
                total += (a - b) * (a - b);
            }
        }
        Ok(total)
    }
}

/// Training outcome: the reported held-out squared error (per tuple) and a
/// flag marking pose-degenerate datasets.
#[derive(Debug, Clone, Copy)]
pub struct PerspectiveReport {
    pub heldout_mse: f64,
    pub train_mse: f64,
    /// Set when every tuple shares one pose; the model cannot learn pose
    /// dependence from such data.
    pub pose_degenerate: bool,
}

/// Fit the synthesizer by minimizing the summed squared error.
pub fn train_perspective(
    config: &PerspectiveConfig,
    schema: &ObsSchema,
    tuples: &[PerspectiveTuple],
) -> Result<(PerspectiveModel, PerspectiveReport)> {
    if tuples.is_empty() {
        return Err(Error::config("perspective training requires tuples"));
    }
    let mut model = PerspectiveModel::new(schema, &config.hidden, config.seed)?;

    let pose_degenerate = tuples
        .iter()
        .all(|t| poses_close(&t.pose, &tuples[0].pose));

    // Deterministic holdout split.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xd1f));
    let mut order: Vec<usize> = (0..tuples.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let n_hold = ((tuples.len() as f64) * config.holdout).round() as usize;
    let n_hold = n_hold.min(tuples.len().saturating_sub(1));
    let (hold_idx, train_idx) = order.split_at(n_hold);

    let mut adam = Adam::new(&model.store, config.lr);
    for _ in 0..config.epochs {
        let mut g = Graph::new(&model.store);
        let mut terms = Vec::with_capacity(train_idx.len());
        for &i in train_idx {
            let tup = &tuples[i];
            let input = model.input_node(&mut g, &tup.task, &tup.pose)?;
            for (head, target) in model.heads.iter().zip(&tup.ego) {
                let pred = head.forward(&mut g, input)?;
                let tgt = g.input(target);
                let diff = g.sub(pred, tgt);
                terms.push(g.dot(diff, diff));
            }
        }
        let total = g.sum_scalars(&terms);
        let mean = g.scale(total, 1.0 / train_idx.len() as f64);
        let grads = g.backward(mean)?;
        let pairs = g.collect_param_grads(&grads);
        drop(g);
        for (pid, gv) in pairs {
            model.store.accumulate_grad(pid, &gv);
        }
        adam.step(&mut model.store)?;
    }

    let mean_err = |idx: &[usize]| -> Result<f64> {
        if idx.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for &i in idx {
            total += model.squared_error(&tuples[i])?;
        }
        Ok(total / idx.len() as f64)
    };
    let report = PerspectiveReport {
        heldout_mse: mean_err(hold_idx)?,
        train_mse: mean_err(train_idx)?,
        pose_degenerate,
    };
    Ok((model, report))
}

fn poses_close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6)
}

/// Synthesize `n` draws of the human's ego observations at the last step
/// of the history: sample the robot's belief, decode task-complete
/// observations, and re-render them from the human's pose.
pub fn sample_human_observation(
    world: &WorldModel,
    persp: &PerspectiveModel,
    ego_hist: &[Vec<Vec<f64>>],
    actions: &[Vec<f64>],
    human_pose: &[f64],
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if human_pose.len() != persp.pose_dim {
        return Err(Error::config("human pose has the wrong dimension"));
    }
    let ensemble = world.sample_robot_belief(ego_hist, actions, n, rng)?;
    let mut out = Vec::with_capacity(n);
    for sample in &ensemble {
        let task = world.decode_task_obs(sample, rng)?;
        out.push(persp.predict(&task, human_pose)?);
    }
    Ok(out)
}

/// A set of human-belief samples with the synthesized observation
/// histories that produced them.
#[derive(Debug, Clone)]
pub struct HumanBeliefEnsemble {
    pub samples: Vec<LatentSample>,
    pub histories: Vec<Vec<Vec<Vec<f64>>>>,
    pub seed: u64,
}

/// Synthesize `n` full human observation histories up to the last step of
/// `ego_hist`, one per sampled world history.
pub fn synthesize_human_histories(
    world: &WorldModel,
    persp: &PerspectiveModel,
    ego_hist: &[Vec<Vec<f64>>],
    actions: &[Vec<f64>],
    human_poses: &[Vec<f64>],
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    let t_len = ego_hist.len();
    if human_poses.len() < t_len {
        return Err(Error::config("need the human pose at every step"));
    }
    let chains = world.sample_world_history(ego_hist, actions, n, rng)?;
    let mut out = Vec::with_capacity(n);
    for chain in &chains {
        let mut hist = Vec::with_capacity(t_len);
        for (t, latent) in chain.iter().enumerate() {
            let task = world.decode_task_obs(latent, rng)?;
            hist.push(persp.predict(&task, &human_poses[t])?);
        }
        out.push(hist);
    }
    Ok(out)
}

/// Conceptual perspective-taking: infer the human's belief by feeding each
/// synthesized human observation history through the same inference
/// networks, rolling the hidden latent with the neutral action (the human
/// does not observe the robot's actions).
pub fn infer_human_belief(
    world: &WorldModel,
    persp: &PerspectiveModel,
    ego_hist: &[Vec<Vec<f64>>],
    actions: &[Vec<f64>],
    human_poses: &[Vec<f64>],
    neutral_action: &[f64],
    n: usize,
    rng: &mut impl Rng,
) -> Result<HumanBeliefEnsemble> {
    let histories = synthesize_human_histories(
        world, persp, ego_hist, actions, human_poses, n, rng,
    )?;
    let t_len = ego_hist.len();
    let noops = vec![neutral_action.to_vec(); t_len.saturating_sub(1)];
    let mut samples = Vec::with_capacity(histories.len());
    for hist in &histories {
        let chain = world.sample_world_history(hist, &noops, 1, rng)?;
        samples.push(chain[0].last().expect("non-empty history").clone());
    }
    Ok(HumanBeliefEnsemble {
        samples,
        histories,
        seed: 0,
    })
}

/// Human-belief samples from each synthesized history: `n_inner` belief
/// chains per history, returned per history for conditional scoring.
pub fn human_belief_per_history(
    world: &WorldModel,
    histories: &[Vec<Vec<Vec<f64>>>],
    neutral_action: &[f64],
    n_inner: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<LatentSample>>> {
    let mut out = Vec::with_capacity(histories.len());
    for hist in histories {
        let noops = vec![neutral_action.to_vec(); hist.len().saturating_sub(1)];
        let chains = world.sample_world_history(hist, &noops, n_inner, rng)?;
        out.push(
            chains
                .into_iter()
                .map(|mut c| c.pop().expect("non-empty history"))
                .collect(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::{ModalitySpec, ObsSchema};

    fn linear_schema() -> ObsSchema {
        ObsSchema {
            domain: "synthetic".into(),
            ego: vec![ModalitySpec::new("view", 3, &[true; 3])],
            task: vec![ModalitySpec::new("state", 2, &[true; 2])],
            action_dim: 1,
            pose_dim: 2,
            horizon: 1,
        }
    }

    /// x = A [y; pose] + c, a fixed linear ground truth.
    fn linear_tuples(n: usize, seed: u64) -> Vec<PerspectiveTuple> {
        let a = [
            [0.5, -0.3, 0.8, 0.1],
            [-0.2, 0.7, 0.0, -0.5],
            [0.3, 0.3, -0.4, 0.6],
        ];
        let c = [0.1, -0.2, 0.05];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let y = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let pose = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let joined = [y[0], y[1], pose[0], pose[1]];
                let x: Vec<f64> = (0..3)
                    .map(|i| {
                        c[i] + (0..4).map(|j| a[i][j] * joined[j]).sum::<f64>()
                    })
                    .collect();
                PerspectiveTuple {
                    ego: vec![x],
                    task: vec![y.to_vec()],
                    pose: pose.to_vec(),
                }
            })
            .collect()
    }

    #[test]
    fn learns_a_linear_ground_truth() {
        let schema = linear_schema();
        let tuples = linear_tuples(400, 3);
        let config = PerspectiveConfig {
            epochs: 600,
            ..Default::default()
        };
        let (model, report) = train_perspective(&config, &schema, &tuples).unwrap();
        assert!(!report.pose_degenerate);
        assert!(
            report.heldout_mse < 1e-3,
            "held-out MSE {} should be < 1e-3",
            report.heldout_mse
        );
        // Per-dimension error under 0.1 on a training tuple.
        let pred = model.predict(&tuples[0].task, &tuples[0].pose).unwrap();
        for (p, x) in pred[0].iter().zip(&tuples[0].ego[0]) {
            assert!((p - x).abs() < 0.1);
        }
    }

    #[test]
    fn zero_epoch_predictions_start_at_zero() {
        let schema = linear_schema();
        let tuples = linear_tuples(50, 4);
        let config = PerspectiveConfig {
            epochs: 0,
            ..Default::default()
        };
        let (model, _) = train_perspective(&config, &schema, &tuples).unwrap();
        let pred = model.predict(&tuples[0].task, &tuples[0].pose).unwrap();
        assert!(pred[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pose_dataset_is_flagged() {
        let schema = linear_schema();
        let mut tuples = linear_tuples(50, 5);
        for t in &mut tuples {
            t.pose = vec![0.25, -0.75];
        }
        let config = PerspectiveConfig {
            epochs: 1,
            ..Default::default()
        };
        let (_, report) = train_perspective(&config, &schema, &tuples).unwrap();
        assert!(report.pose_degenerate);
    }
}
