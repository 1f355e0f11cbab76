use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::lm::{generate_with_rng, pooled_masks, prefix_mean, GenConfig};
use super::train::{continue_stage2, init_model, train_stage, train_two_stage, LossRow, TrainConfig};
use super::{gen_synthetic_dataset, split_dataset, SyntheticSample, TaskSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::{ce_scores, keyword_labeler, CeScores, Lexicon, MetricSummary};
use crate::projector::{Dims, FusionVariant, ProjectorParams, Stage};
use crate::segstack::shuffle_classes;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub gen: GenConfig,
    pub seed: u64,
    /// reorder the class axis of every test stack with this seed
    pub shuffle_seed: Option<u64>,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { gen: GenConfig::default(), seed: 0, shuffle_seed: None, exec: Exec::Parallel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub n: usize,
    pub ce: CeScores,
    /// lexical metrics; absent when the corpus leaves one undefined
    pub lexical: Option<MetricSummaryJson>,
    pub candidates: Vec<String>,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummaryJson {
    pub bleu1: f64,
    pub bleu4: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub meteor: f64,
    #[serde(rename = "ciderD")]
    pub cider_d: f64,
}

impl From<&MetricSummary> for MetricSummaryJson {
    fn from(m: &MetricSummary) -> Self {
        Self { bleu1: m.bleu1, bleu4: m.bleu4, rouge_l: m.rouge_l, meteor: m.meteor, cider_d: m.cider_d }
    }
}

fn generate_one(
    params: &ProjectorParams,
    s: &SyntheticSample,
    k: usize,
    opts: &EvalOptions,
) -> Result<Vec<usize>> {
    let pooled = if params.variant.use_segmaps {
        let masks = match opts.shuffle_seed {
            Some(seed) => shuffle_classes(&s.masks, seed),
            None => s.masks.clone(),
        };
        let shuffled = SyntheticSample { masks, ..s.clone() };
        Some(pooled_masks(params, &shuffled)?)
    } else {
        None
    };
    let pm = prefix_mean(params, s, pooled.as_ref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(k as u64 + 1);
    generate_with_rng(params, &pm, &s.prompt, &opts.gen, &mut rng)
}

/// Generate a report for every sample in `idx` and score it against the
/// template report.
pub fn evaluate(
    params: &ProjectorParams,
    samples: &[SyntheticSample],
    idx: &[usize],
    task: &TaskSpec,
    lexicon: &Lexicon,
    opts: &EvalOptions,
) -> Result<EvalSummary> {
    if idx.is_empty() {
        return Err(Error::Undefined("evaluation set is empty".into()));
    }
    let positions: Vec<usize> = (0..idx.len()).collect();
    let generated = opts.exec.map(&positions, |&k| generate_one(params, &samples[idx[k]], k, opts));
    let mut candidates = Vec::with_capacity(idx.len());
    for g in generated {
        candidates.push(task.vocab.decode(&g?));
    }
    let references: Vec<String> = idx.iter().map(|&i| task.vocab.decode(&samples[i].report)).collect();
    let preds: Vec<_> = candidates.iter().map(|c| keyword_labeler(c, lexicon)).collect();
    let golds: Vec<_> = references.iter().map(|r| keyword_labeler(r, lexicon)).collect();
    let ce = ce_scores(&preds, &golds)?;
    let lexical = match MetricSummary::compute(&candidates, &references, lexicon) {
        Ok(m) => Some(MetricSummaryJson::from(&m)),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalSummary { n: idx.len(), ce, lexical, candidates, references })
}

/// One seed of the synthetic comparison: a two-stage baseline, a
/// features-only model and a features+segmaps model sharing its stage 1,
/// and the latter again with shuffled test masks.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub seed: u64,
    pub baseline: EvalSummary,
    pub features: EvalSummary,
    pub features_segmaps: EvalSummary,
    pub features_segmaps_shuffled: EvalSummary,
    /// loss curve of the features+segmaps model, both stages
    pub losses: Vec<LossRow>,
}

impl ExperimentResult {
    pub fn f1(&self) -> [f64; 4] {
        [
            self.baseline.ce.f1,
            self.features.ce.f1,
            self.features_segmaps.ce.f1,
            self.features_segmaps_shuffled.ce.f1,
        ]
    }
}

pub fn run_experiment(
    task: &TaskSpec,
    dims: Dims,
    cfg: &TrainConfig,
    n: usize,
    gen: GenConfig,
    exec: Exec,
) -> Result<ExperimentResult> {
    let seed = cfg.seed;
    let samples = gen_synthetic_dataset(task, n, &dims, seed, exec)?;
    let split = split_dataset(n, seed);
    let v = task.vocab.len();
    let lexicon = Lexicon::default_lexicon();

    let base = train_two_stage(cfg, dims, FusionVariant::baseline(), v, &samples, &split.train, exec)?;

    let mut stage1 = init_model(dims, FusionVariant::concat(), v, seed)?;
    let (mut losses, _) = train_stage(&mut stage1, &samples, &split.train, Stage::Stage1, cfg.stage1_epochs, cfg, 0, exec)?;
    stage1.mark_stage1_complete();
    let (features, _, _) = continue_stage2(&stage1, false, &samples, &split.train, cfg, losses.len(), exec)?;
    let (fs, rows, _) = continue_stage2(&stage1, true, &samples, &split.train, cfg, losses.len(), exec)?;
    losses.extend(rows);

    let opts = EvalOptions { gen, seed, shuffle_seed: None, exec };
    let shuffled = EvalOptions { shuffle_seed: Some(seed ^ 0x5407_f1e5), ..opts };
    let eval = |p: &ProjectorParams, o: &EvalOptions| evaluate(p, &samples, &split.test, task, &lexicon, o);
    Ok(ExperimentResult {
        seed,
        baseline: eval(&base.stage2, &opts)?,
        features: eval(&features, &opts)?,
        features_segmaps: eval(&fs, &opts)?,
        features_segmaps_shuffled: eval(&fs, &shuffled)?,
        losses,
    })
}
