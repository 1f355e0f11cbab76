use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lm::{add_toylm_params, pooled_masks, prefix_tokens, sample_vars, sequence_loss};
use super::SyntheticSample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::projector::{Dims, FusionVariant, ProjectorParams, Stage};
use crate::tensor::params::sum_grads;
use crate::tensor::{Binder, GradMap, OptimState, Tape, TensorF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_ratio: f64,
    pub batch_size: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub seed: u64,
}

/// Desk-scale recipe. The freshly initialized segmap branch needs many
/// small steps before its signal reaches the frozen decoder.
impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 3e-3, warmup_ratio: 0.03, batch_size: 2, stage1_epochs: 8, stage2_epochs: 30, seed: 0 }
    }
}

impl TrainConfig {
    /// The full-scale recipe: one epoch per stage at batch 16.
    pub fn paper() -> Self {
        Self { lr: 2e-5, batch_size: 16, stage1_epochs: 1, stage2_epochs: 1, ..Self::default() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::default()),
            "paper" => Ok(Self::paper()),
            _ => Err(Error::Config(format!("unknown preset {name:?}; expected desk or paper"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub step: usize,
    pub stage: u8,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub stage1: ProjectorParams,
    pub stage2: ProjectorParams,
    pub losses: Vec<LossRow>,
    /// weighted-addition coefficient after every step, if the variant has one
    pub alpha: Vec<f64>,
}

fn sample_grad(params: &ProjectorParams, s: &SyntheticSample, pooled: Option<&TensorF>) -> Result<(f64, GradMap)> {
    let mut tape = Tape::new();
    let mut b = Binder::new(&params.store);
    let x = sample_vars(&mut tape, params, s, pooled)?;
    let prefix = prefix_tokens(&mut tape, &mut b, params, x)?;
    let loss = sequence_loss(&mut tape, &mut b, prefix, &s.prompt, &s.report)?;
    let mut grads = tape.backward(loss)?;
    Ok((tape.value(loss).item()?, b.grads(&mut grads)))
}

/// Train for `epochs` passes over `train` with the parameters frozen as
/// `stage` dictates. Steps are numbered from `first_step`.
#[allow(clippy::too_many_arguments)]
pub fn train_stage(
    params: &mut ProjectorParams,
    samples: &[SyntheticSample],
    train: &[usize],
    stage: Stage,
    epochs: usize,
    cfg: &TrainConfig,
    first_step: usize,
    exec: Exec,
) -> Result<(Vec<LossRow>, Vec<f64>)> {
    cfg.validate()?;
    params.freeze_mask(stage)?;
    if epochs == 0 || train.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let pooled: Vec<Option<TensorF>> = if params.variant.use_segmaps {
        exec.map(train, |&i| pooled_masks(params, &samples[i]).map(Some))
            .into_iter()
            .collect::<Result<_>>()?
    } else {
        vec![None; train.len()]
    };
    let per_epoch = train.len().div_ceil(cfg.batch_size);
    let total = per_epoch * epochs;
    // short runs still get one warmup step
    let warmup = if cfg.warmup_ratio > 0.0 { cfg.warmup_ratio.max(1.0 / total as f64) } else { 0.0 };
    let mut opt = OptimState::new(cfg.lr, warmup, total)?;
    let stage_id: u8 = match stage {
        Stage::Stage1 => 1,
        Stage::Stage2 => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stage_id as u64);
    let mut rows = Vec::new();
    let mut alpha = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let step = first_step + rows.len();
            let p: &ProjectorParams = params;
            let results = exec.map(batch, |&k| sample_grad(p, &samples[train[k]], pooled[k].as_ref()));
            let mut losses = Vec::with_capacity(batch.len());
            let mut maps = Vec::with_capacity(batch.len());
            for r in results {
                let (l, g) = r?;
                losses.push(l);
                maps.push(g);
            }
            let loss = losses.iter().sum::<f64>() / batch.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Divergence { step, loss });
            }
            let inv = 1.0 / batch.len() as f64;
            let grads: GradMap = sum_grads(maps).into_iter().map(|(k, g)| (k, g.scale(inv))).collect();
            let lr = opt.adam_step(&mut params.store, &grads)?;
            rows.push(LossRow { step, stage: stage_id, lr, loss });
            if let Some(a) = params.alpha() {
                alpha.push(a);
            }
        }
    }
    log::debug!(
        "stage {stage_id}: {} steps, loss {:.4} -> {:.4}",
        rows.len(),
        rows.first().map_or(f64::NAN, |r| r.loss),
        rows.last().map_or(f64::NAN, |r| r.loss)
    );
    Ok((rows, alpha))
}

/// Fresh projector plus toy decoder for `variant`, without segmap branch.
pub fn init_model(dims: Dims, variant: FusionVariant, vocab_size: usize, seed: u64) -> Result<ProjectorParams> {
    let base = FusionVariant { use_segmaps: false, ..variant };
    let mut p = ProjectorParams::init(dims, base, seed)?;
    add_toylm_params(&mut p, vocab_size, seed)?;
    Ok(p)
}

/// Stage 2 from a finished stage 1: optionally attach a freshly initialized
/// segmap branch, then train the projector only.
pub fn continue_stage2(
    stage1: &ProjectorParams,
    use_segmaps: bool,
    samples: &[SyntheticSample],
    train: &[usize],
    cfg: &TrainConfig,
    first_step: usize,
    exec: Exec,
) -> Result<(ProjectorParams, Vec<LossRow>, Vec<f64>)> {
    let mut p = stage1.clone();
    if use_segmaps {
        p.add_segmap_branch(cfg.seed ^ 0x5e9_0002)?;
    }
    let (rows, alpha) = train_stage(&mut p, samples, train, Stage::Stage2, cfg.stage2_epochs, cfg, first_step, exec)?;
    Ok((p, rows, alpha))
}

/// Stage 1 trains everything on the features-only path; stage 2 adds the
/// segmap branch when `variant` uses it and trains the projector alone.
pub fn train_two_stage(
    cfg: &TrainConfig,
    dims: Dims,
    variant: FusionVariant,
    vocab_size: usize,
    samples: &[SyntheticSample],
    train: &[usize],
    exec: Exec,
) -> Result<TrainOutcome> {
    variant.validate()?;
    let mut p = init_model(dims, variant, vocab_size, cfg.seed)?;
    let (mut losses, mut alpha) = train_stage(&mut p, samples, train, Stage::Stage1, cfg.stage1_epochs, cfg, 0, exec)?;
    p.mark_stage1_complete();
    let (p2, rows2, alpha2) = continue_stage2(&p, variant.use_segmaps, samples, train, cfg, losses.len(), exec)?;
    losses.extend(rows2);
    alpha.extend(alpha2);
    Ok(TrainOutcome { stage1: p, stage2: p2, losses, alpha })
}

/// Loss curve as CSV with header `step,stage,lr,loss`.
pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}
