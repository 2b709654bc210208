//! World-model variants and their training loops.
//!
//! Three model families share one interface: the decomposed model with
//! separate ego-observable and hidden latents, and single-latent stochastic
//! and deterministic baselines. All operate on [`Trajectory`] data described
//! by an [`ObsSchema`].

pub mod baseline;
pub mod encoder;
pub mod leapt;
pub mod model;
pub mod train;

pub use model::{BeliefEnsemble, LatentSample, ModelKind, WorldModel};
pub use train::{train, LossRecord, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named observation modality: a fixed-dimension real vector with a
/// per-channel flag marking continuous (noise-carrying) entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub dim: usize,
    pub continuous: Vec<bool>,
}

impl ModalitySpec {
    pub fn new(name: &str, dim: usize, continuous: &[bool]) -> Self {
        assert_eq!(dim, continuous.len());
        ModalitySpec {
            name: name.to_string(),
            dim,
            continuous: continuous.to_vec(),
        }
    }

    pub fn discrete(name: &str, dim: usize) -> Self {
        Self::new(name, dim, &vec![false; dim])
    }
}

/// Shapes of everything a domain emits per step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsSchema {
    pub domain: String,
    pub ego: Vec<ModalitySpec>,
    pub task: Vec<ModalitySpec>,
    pub action_dim: usize,
    pub pose_dim: usize,
    pub horizon: usize,
}

impl ObsSchema {
    pub fn ego_dim(&self) -> usize {
        self.ego.iter().map(|m| m.dim).sum()
    }

    pub fn task_dim(&self) -> usize {
        self.task.iter().map(|m| m.dim).sum()
    }

    pub fn ego_masks(&self) -> Vec<Vec<bool>> {
        self.ego.iter().map(|m| m.continuous.clone()).collect()
    }

    pub fn task_masks(&self) -> Vec<Vec<bool>> {
        self.task.iter().map(|m| m.continuous.clone()).collect()
    }
}

/// Time-indexed record of one episode from the robot's side: ego
/// observations, task-complete observations, actions and both agents'
/// poses. Actions sit between steps, so there are `horizon - 1` of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub ego: Vec<Vec<Vec<f64>>>,
    pub task: Vec<Vec<Vec<f64>>>,
    pub actions: Vec<Vec<f64>>,
    pub robot_pose: Vec<Vec<f64>>,
    pub human_pose: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.ego.len()
    }

    /// Check dimensional consistency against a schema.
    pub fn validate(&self, schema: &ObsSchema) -> Result<()> {
        let t = self.horizon();
        if t == 0 {
            return Err(Error::config("empty trajectory"));
        }
        if self.task.len() != t
            || self.robot_pose.len() != t
            || self.human_pose.len() != t
            || self.actions.len() + 1 != t
        {
            return Err(Error::config(format!(
                "trajectory lengths inconsistent: ego {t}, task {}, actions {}",
                self.task.len(),
                self.actions.len()
            )));
        }
        for step in &self.ego {
            if step.len() != schema.ego.len()
                || step.iter().zip(&schema.ego).any(|(v, m)| v.len() != m.dim)
            {
                return Err(Error::config("ego modality dims do not match schema"));
            }
        }
        for step in &self.task {
            if step.len() != schema.task.len()
                || step.iter().zip(&schema.task).any(|(v, m)| v.len() != m.dim)
            {
                return Err(Error::config("task modality dims do not match schema"));
            }
        }
        if self.actions.iter().any(|a| a.len() != schema.action_dim) {
            return Err(Error::config("action dim does not match schema"));
        }
        Ok(())
    }

    /// Concatenated ego modalities at step `t` (0-based).
    pub fn ego_concat(&self, t: usize) -> Vec<f64> {
        self.ego[t].iter().flatten().copied().collect()
    }

    /// Concatenated task modalities at step `t` (0-based).
    pub fn task_concat(&self, t: usize) -> Vec<f64> {
        self.task[t].iter().flatten().copied().collect()
    }
}
