//! Full-batch training loop with per-epoch loss records.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Adam, Graph};
use crate::worldmodel::leapt::LatentDims;
use crate::worldmodel::model::{ModelKind, WorldModel};
use crate::worldmodel::{ObsSchema, Trajectory};

/// Everything one training run needs.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dims: LatentDims,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Per-trajectory probability of zeroing the task channels fed to the
    /// baseline inference encoder. Ignored by the decomposed models.
    pub dropout_prob: f64,
}

impl TrainConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        TrainConfig {
            kind,
            dims: LatentDims::default(),
            epochs: 100,
            lr: 1e-3,
            seed,
            dropout_prob: 0.5,
        }
    }
}

/// Mean per-trajectory loss components of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub loss: f64,
    pub recon_x: f64,
    pub recon_y: f64,
    pub kl_s: f64,
    pub kl_h: f64,
}

/// Decide which trajectories get their task channels dropped this epoch.
///
/// The stochastic baseline draws a coin per trajectory. The deterministic
/// variant uses systematic sampling over the trajectory index so its loss
/// never depends on the random stream.
fn dropout_plan(kind: ModelKind, n: usize, p: f64, rng: &mut impl Rng) -> Vec<bool> {
    match kind {
        ModelKind::BaselineS => (0..n).map(|_| rng.gen::<f64>() < p).collect(),
        ModelKind::BaselineD => (0..n)
            .map(|i| ((i + 1) as f64 * p).floor() > (i as f64 * p).floor())
            .collect(),
        _ => vec![false; n],
    }
}

/// Train a fresh model on the dataset. Returns the model (marked with the
/// epochs it has seen) and one loss record per epoch.
pub fn train(
    config: &TrainConfig,
    schema: &ObsSchema,
    data: &[Trajectory],
) -> Result<(WorldModel, Vec<LossRecord>)> {
    if data.is_empty() {
        return Err(Error::config("training requires a non-empty dataset"));
    }
    for traj in data {
        traj.validate(schema)?;
    }
    let mut model = WorldModel::new(config.kind, schema, config.dims, config.seed)?;
    let records = train_more(&mut model, config, data, config.epochs)?;
    Ok((model, records))
}

/// Continue training an existing model for `epochs` more epochs, keeping
/// the epoch numbering. The optimizer moments start fresh.
pub fn train_more(
    model: &mut WorldModel,
    config: &TrainConfig,
    data: &[Trajectory],
    epochs: usize,
) -> Result<Vec<LossRecord>> {
    let mut adam = Adam::new(&model.store, config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let n = data.len();
    let start = model.trained_epochs;
    let mut records = Vec::with_capacity(epochs);

    for e in 0..epochs {
        let epoch = start + e + 1;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let drop = dropout_plan(config.kind, n, config.dropout_prob, &mut rng);

        let mut g = Graph::new(&model.store);
        let mut totals = Vec::with_capacity(n);
        let mut rec = LossRecord {
            epoch,
            loss: 0.0,
            recon_x: 0.0,
            recon_y: 0.0,
            kl_s: 0.0,
            kl_h: 0.0,
        };
        for &i in &order {
            let parts = model.loss(&mut g, &data[i], drop[i], &mut rng)?;
            for kl in &parts.kl_values {
                if *kl < -1e-9 {
                    return Err(Error::numerical(format!(
                        "negative KL term {kl} at epoch {epoch}"
                    )));
                }
            }
            rec.recon_x += parts.recon_x;
            rec.recon_y += parts.recon_y;
            rec.kl_s += parts.kl_s;
            rec.kl_h += parts.kl_h;
            totals.push(parts.total);
        }
        let sum = g.sum_scalars(&totals);
        let mean = g.scale(sum, 1.0 / n as f64);
        let loss_value = g.scalar(mean);
        if !loss_value.is_finite() {
            return Err(Error::numerical(format!(
                "training diverged: loss {loss_value} at epoch {epoch}"
            )));
        }
        rec.loss = loss_value;
        rec.recon_x /= n as f64;
        rec.recon_y /= n as f64;
        rec.kl_s /= n as f64;
        rec.kl_h /= n as f64;

        let grads = g.backward(mean)?;
        let pairs = g.collect_param_grads(&grads);
        drop_graph(g);
        for (pid, gv) in pairs {
            model.store.accumulate_grad(pid, &gv);
        }
        adam.step(&mut model.store).map_err(|err| {
            Error::numerical(format!("{err} (epoch {epoch})"))
        })?;

        records.push(rec);
        model.trained_epochs = epoch;
    }
    Ok(records)
}

fn drop_graph(g: Graph) {
    drop(g);
}

/// Append-or-create the per-epoch loss CSV.
pub fn write_loss_csv(path: &Path, records: &[LossRecord], append: bool) -> Result<()> {
    let exists = path.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(path)?;
    if !append || !exists {
        writeln!(file, "epoch,loss,recon_x,recon_y,kl_s,kl_h")?;
    }
    for r in records {
        writeln!(
            file,
            "{},{},{},{},{},{}",
            r.epoch, r.loss, r.recon_x, r.recon_y, r.kl_s, r.kl_h
        )?;
    }
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::format(format!("bad loss CSV line: {line}")));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| Error::format(format!("bad number {s}")));
        out.push(LossRecord {
            epoch: parts[0].parse().map_err(|_| Error::format("bad epoch"))?,
            loss: f(parts[1])?,
            recon_x: f(parts[2])?,
            recon_y: f(parts[3])?,
            kl_s: f(parts[4])?,
            kl_h: f(parts[5])?,
        });
    }
    Ok(out)
}
