//! Desk-scale partially observable two-agent domains.
//!
//! Each domain provides deterministic task dynamics with a scripted
//! human, pose-dependent observation rendering, exact Bayes-filter belief
//! oracles for both agents, and seeded episode generation.
//!
//! Observations are structured real vectors. Visibility is a function of
//! the viewing pose, so the same render applies to robot and human poses
//! alike; an agent's information set is whatever its pose sequence let it
//! see. Training data uses roaming robot poses so every viewpoint is
//! covered; evaluation episodes keep the robot at its scripted station, so
//! the task-relevant hidden state never enters its observations.

pub mod dataset;
pub mod false_belief;
pub mod fetch_tool;
pub mod table_assembly;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distributions::{BernoulliDist, CategoricalDist, DiagGaussian};
use crate::error::{Error, Result};
use crate::worldmodel::{ObsSchema, Trajectory};

/// The three experimental domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    FalseBelief,
    FetchTool,
    TableAssembly,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::FalseBelief, Domain::FetchTool, Domain::TableAssembly];

    pub fn name(&self) -> &'static str {
        match self {
            Domain::FalseBelief => "false-belief",
            Domain::FetchTool => "fetch-tool",
            Domain::TableAssembly => "table-assembly",
        }
    }

    pub fn parse(s: &str) -> Result<Domain> {
        match s {
            "false-belief" => Ok(Domain::FalseBelief),
            "fetch-tool" => Ok(Domain::FetchTool),
            "table-assembly" => Ok(Domain::TableAssembly),
            other => Err(Error::config(format!(
                "unknown domain `{other}` (expected false-belief, fetch-tool or table-assembly)"
            ))),
        }
    }

    pub fn schema(&self) -> ObsSchema {
        match self {
            Domain::FalseBelief => false_belief::schema(),
            Domain::FetchTool => fetch_tool::schema(),
            Domain::TableAssembly => table_assembly::schema(),
        }
    }

    /// Training-set size and horizon used throughout the experiments.
    pub fn training_regime(&self) -> TrainingRegime {
        match self {
            Domain::FalseBelief => TrainingRegime { trajectories: 30, horizon: 5, epochs: 100 },
            Domain::FetchTool => TrainingRegime { trajectories: 100, horizon: 5, epochs: 400 },
            Domain::TableAssembly => TrainingRegime { trajectories: 300, horizon: 10, epochs: 700 },
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Domain::FalseBelief => false_belief::ACTIONS,
            Domain::FetchTool => fetch_tool::ACTIONS,
            Domain::TableAssembly => table_assembly::ACTIONS,
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Episode count, horizon and epoch budget for one domain.
#[derive(Debug, Clone, Copy)]
pub struct TrainingRegime {
    pub trajectories: usize,
    pub horizon: usize,
    pub epochs: usize,
}

/// Which agent a rendered observation belongs to (selects the "own" pose
/// slot; visibility itself depends only on the pose).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agent {
    Robot,
    Human,
}

/// Pose regime for episode generation.
///
/// `Train` lets the robot roam across viewpoints (including the revealing
/// ones) so the models see every view of the world. `Eval` keeps the robot
/// at its scripted station, matching the information set the belief
/// oracles describe. `EvalSilent` additionally suppresses informative
/// communication and is used by the information-barrier probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Train,
    Eval,
    EvalSilent,
}

/// Exact ground-truth belief emitted by the domain oracles.
#[derive(Debug, Clone)]
pub enum GroundTruthBelief {
    Bernoulli(BernoulliDist),
    Categorical(CategoricalDist),
    Gaussian(DiagGaussian),
}

impl GroundTruthBelief {
    pub fn as_categorical(&self) -> Option<CategoricalDist> {
        match self {
            GroundTruthBelief::Bernoulli(b) => Some(b.as_categorical()),
            GroundTruthBelief::Categorical(c) => Some(c.clone()),
            GroundTruthBelief::Gaussian(_) => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<&DiagGaussian> {
        match self {
            GroundTruthBelief::Gaussian(g) => Some(g),
            _ => None,
        }
    }
}

/// Hidden state trace of one domain episode.
#[derive(Debug, Clone)]
pub enum StateTrace {
    FalseBelief(Vec<false_belief::State>),
    FetchTool(Vec<fetch_tool::State>),
    TableAssembly(Vec<table_assembly::State>),
}

/// One generated episode: the robot-side trajectory (the training record),
/// the human's true observations (simulation-only ground truth) and the
/// underlying state trace.
#[derive(Debug, Clone)]
pub struct Episode {
    pub domain: Domain,
    pub traj: Trajectory,
    pub human_obs: Vec<Vec<Vec<f64>>>,
    pub states: StateTrace,
}

/// Additive noise applied to continuous observation channels.
pub const OBS_NOISE_STD: f64 = 0.01;

pub(crate) fn apply_noise(obs: &mut [Vec<f64>], masks: &[Vec<bool>], rng: &mut impl Rng) {
    for (vec, mask) in obs.iter_mut().zip(masks) {
        for (v, cont) in vec.iter_mut().zip(mask) {
            if *cont {
                let n: f64 = rng.sample(StandardNormal);
                *v += OBS_NOISE_STD * n;
            }
        }
    }
}

/// Generate `n` episodes of horizon `t` under the given pose regime.
///
/// Reproducible: equal arguments give identical episodes.
pub fn generate_episodes(
    domain: Domain,
    n: usize,
    horizon: usize,
    seed: u64,
    regime: Regime,
) -> Vec<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match domain {
            Domain::FalseBelief => false_belief::generate_episode(horizon, regime, &mut rng),
            Domain::FetchTool => fetch_tool::generate_episode(horizon, regime, &mut rng),
            Domain::TableAssembly => table_assembly::generate_episode(horizon, regime, &mut rng),
        })
        .collect()
}

/// Training dataset: roaming-pose trajectories only.
pub fn generate_dataset(domain: Domain, n: usize, horizon: usize, seed: u64) -> Vec<Trajectory> {
    generate_episodes(domain, n, horizon, seed, Regime::Train)
        .into_iter()
        .map(|e| e.traj)
        .collect()
}

/// Exact Bayesian posterior over the task-relevant hidden state given the
/// robot's information set: its ego observations and its own actions.
pub fn oracle_robot_belief(
    domain: Domain,
    ego_obs: &[Vec<Vec<f64>>],
    actions: &[Vec<f64>],
) -> Result<GroundTruthBelief> {
    if ego_obs.is_empty() {
        return Err(Error::config("oracle requires a non-empty history"));
    }
    match domain {
        Domain::FalseBelief => false_belief::oracle_robot_belief(ego_obs, actions),
        Domain::FetchTool => fetch_tool::oracle_robot_belief(ego_obs),
        Domain::TableAssembly => table_assembly::oracle_robot_belief(ego_obs),
    }
}

/// Exact Bayesian posterior given the human's information set: their ego
/// observations only (the human does not observe the robot's actions).
pub fn oracle_human_belief(domain: Domain, human_obs: &[Vec<Vec<f64>>]) -> Result<GroundTruthBelief> {
    if human_obs.is_empty() {
        return Err(Error::config("oracle requires a non-empty history"));
    }
    match domain {
        Domain::FalseBelief => false_belief::oracle_human_belief(human_obs),
        Domain::FetchTool => fetch_tool::oracle_human_belief(human_obs),
        Domain::TableAssembly => table_assembly::oracle_human_belief(human_obs),
    }
}

/// Round a noisy 2-D position to the nearest of a set of scripted spots.
pub(crate) fn nearest_spot(pos: [f64; 2], spots: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in spots.iter().enumerate() {
        let d = (pos[0] - s[0]).powi(2) + (pos[1] - s[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

pub(crate) fn one_hot(len: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        if *v > best_v {
            best_v = *v;
            best = i;
        }
    }
    best
}
