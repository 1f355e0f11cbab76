use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use segfuse::ground::{self, FindingMapping};
use segfuse::metrics::Lexicon;
use segfuse::pipeline::{
    end_to_end_grad_check, evaluate, gen_synthetic_dataset, read_dataset, split_dataset, train_two_stage,
    write_dataset, write_loss_csv, EvalOptions, EvalSummary, GenConfig, Split, TaskSpec, TrainConfig,
};
use segfuse::projector::{count_params, projector_forward, Dims, FusionVariant, ProjectorParams, DEFAULT_BACKBONE_SIZE};
use segfuse::segstack::MaskStack;
use segfuse::stats::{self, welch_groups, Sided, StatsInput, TestResult};
use segfuse::vqa::{convert_corpus, parse_reports_jsonl, validate_corpus, PromptSet};
use segfuse::{Exec, TensorF};

use crate::manifest::RunManifest;
use crate::{AblateArgs, Cli, Command, ConvertArgs, DemoArgs, EvalArgs, GenArgs, GradCheckArgs, GroundArgs, StatsArgs, TrainArgs};

pub const VARIANTS: [&str; 7] = [
    "baseline",
    "replace",
    "learned-mixing",
    "weighted-addition:0",
    "weighted-addition:1",
    "concat",
    "concat-segmaps",
];

/// Contents of `--config`. Missing fields take their defaults; a missing
/// `train` section takes the preset's recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub variant: String,
    pub n_samples: usize,
    pub train: Option<TrainConfig>,
    pub gen: GenConfig,
    pub dataset: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            variant: "concat-segmaps".into(),
            n_samples: 512,
            train: None,
            gen: GenConfig::default(),
            dataset: None,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// The config from `--config` (a manifest contributes its `config`), with
/// the global flags applied on top.
fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(path) => {
            let v: Value = serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
            let v = if v.get("config_hash").is_some() { v["config"].clone() } else { v };
            serde_json::from_value(v).with_context(|| format!("invalid config {}", path.display()))?
        }
    };
    if let Some(p) = &cli.preset {
        cfg.preset = p.clone();
    }
    let mut train = match cfg.train {
        Some(t) => t,
        None => TrainConfig::preset(&cfg.preset)?,
    };
    if let Some(s) = cli.seed {
        train.seed = s;
    }
    train.validate()?;
    cfg.train = Some(train);
    Dims::preset(&cfg.preset)?;
    Ok(cfg)
}

fn apply_gen(mut gen: GenConfig, args: &GenArgs) -> Result<GenConfig> {
    if let Some(t) = args.temperature {
        gen.temperature = t;
    }
    if let Some(m) = args.max_new_tokens {
        gen.max_new_tokens = m;
    }
    gen.greedy |= args.greedy;
    if !gen.greedy && (gen.temperature.is_nan() || gen.temperature <= 0.0) {
        bail!("temperature must be positive for sampled decoding");
    }
    Ok(gen)
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn run(cli: &Cli) -> Result<u8> {
    let cfg = load_config(cli)?;
    prepare_out(&cli.out)?;
    match &cli.command {
        Command::Train(a) => cmd_train(cli, cfg, a),
        Command::Eval(a) => cmd_eval(cli, &cfg, a),
        Command::AblateShuffle(a) => cmd_ablate(cli, &cfg, a),
        Command::ConvertVqa(a) => cmd_convert(cli, &cfg, a),
        Command::Stats(a) => cmd_stats(cli, &cfg, a),
        Command::Ground(a) => cmd_ground(cli, &cfg, a),
        Command::DemoFusion(a) => cmd_demo(cli, &cfg, a),
        Command::GradCheck(a) => cmd_grad_check(cli, &cfg, a),
    }
}

fn seed_of(cfg: &RunConfig) -> u64 {
    cfg.train.map_or(0, |t| t.seed)
}

fn cmd_train(cli: &Cli, mut cfg: RunConfig, a: &TrainArgs) -> Result<u8> {
    if let Some(v) = &a.variant {
        cfg.variant = v.clone();
    }
    if let Some(n) = a.samples {
        cfg.n_samples = n;
    }
    if a.dataset.is_some() {
        cfg.dataset = a.dataset.clone();
    }
    let variant = FusionVariant::parse(&cfg.variant)?;
    let dims = Dims::preset(&cfg.preset)?;
    let train_cfg = cfg.train.expect("resolved by load_config");
    let task = TaskSpec::default_task();
    let out = &cli.out;

    let mut m = RunManifest::new("train", serde_json::to_value(&cfg)?, train_cfg.seed, Some(cfg.variant.clone()));
    m.checkpoints = vec!["stage1.ckpt".into(), "stage2.ckpt".into()];
    m.outputs = vec!["loss.csv".into(), "alpha.json".into(), "train.txt".into()];
    if cfg.dataset.is_none() {
        m.outputs.push("dataset".into());
    }
    m.write(out)?;

    let (samples, split) = match &cfg.dataset {
        Some(dir) => {
            let samples = read_dataset(dir, &task.vocab)?;
            let split = read_split(dir)?.unwrap_or_else(|| split_dataset(samples.len(), train_cfg.seed));
            (samples, split)
        }
        None => {
            let samples = gen_synthetic_dataset(&task, cfg.n_samples, &dims, train_cfg.seed, Exec::Parallel)?;
            let split = split_dataset(samples.len(), train_cfg.seed);
            let dir = out.join("dataset");
            write_dataset(&dir, &samples, &task.vocab)?;
            write_json(&dir.join("split.json"), &split)?;
            (samples, split)
        }
    };
    log::info!("training {} on {} samples", cfg.variant, split.train.len());
    let outcome = train_two_stage(&train_cfg, dims, variant, task.vocab.len(), &samples, &split.train, Exec::Parallel)?;
    outcome.stage1.save(&out.join("stage1.ckpt"))?;
    outcome.stage2.save(&out.join("stage2.ckpt"))?;
    write_loss_csv(&out.join("loss.csv"), &outcome.losses)?;
    write_json(&out.join("alpha.json"), &outcome.alpha)?;

    let mut table = format!("{:<6}  {:>6}  {:>10}  {:>10}\n", "stage", "steps", "first", "last");
    for stage in [1u8, 2] {
        let rows: Vec<_> = outcome.losses.iter().filter(|r| r.stage == stage).collect();
        if let (Some(f), Some(l)) = (rows.first(), rows.last()) {
            table.push_str(&format!("{:<6}  {:>6}  {:>10.4}  {:>10.4}\n", stage, rows.len(), f.loss, l.loss));
        }
    }
    write_text(&out.join("train.txt"), &table)?;
    print!("{table}");
    m.finish(out)?;
    Ok(0)
}

fn read_split(dataset: &Path) -> Result<Option<Split>> {
    let path = dataset.join("split.json");
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&read_text(&path)?)?))
}

/// Indices to evaluate: the stored test split, or every sample.
fn eval_indices(dataset: &Path, n: usize) -> Result<Vec<usize>> {
    Ok(match read_split(dataset)? {
        Some(s) => s.test,
        None => (0..n).collect(),
    })
}

pub fn format_eval(s: &EvalSummary) -> String {
    let mut rows = vec![
        ("samples", s.n as f64),
        ("ce_precision", s.ce.precision),
        ("ce_recall", s.ce.recall),
        ("ce_f1", s.ce.f1),
    ];
    if let Some(l) = &s.lexical {
        rows.extend([("bleu1", l.bleu1), ("bleu4", l.bleu4), ("rougeL", l.rouge_l), ("meteor", l.meteor), ("ciderD", l.cider_d)]);
    }
    rows.iter().map(|(k, v)| format!("{k:<12}  {v:>10.4}\n")).collect()
}

struct Loaded {
    params: ProjectorParams,
    samples: Vec<segfuse::pipeline::SyntheticSample>,
    idx: Vec<usize>,
    task: TaskSpec,
}

fn load_eval_inputs(checkpoint: &Path, dataset: &Path) -> Result<Loaded> {
    let params = ProjectorParams::load(checkpoint)?;
    let task = TaskSpec::default_task();
    let samples = read_dataset(dataset, &task.vocab)?;
    let idx = eval_indices(dataset, samples.len())?;
    if let Some(&bad) = idx.iter().find(|&&i| i >= samples.len()) {
        bail!("split index {bad} is outside a dataset of {} samples", samples.len());
    }
    Ok(Loaded { params, samples, idx, task })
}

fn cmd_eval(cli: &Cli, cfg: &RunConfig, a: &EvalArgs) -> Result<u8> {
    let gen = apply_gen(cfg.gen, &a.gen)?;
    let seed = seed_of(cfg);
    let config = json!({
        "checkpoint": a.checkpoint, "dataset": a.dataset, "shuffle_seed": a.shuffle_seed, "gen": gen, "seed": seed,
    });
    let mut m = RunManifest::new("eval", config, seed, None);
    m.checkpoints = vec![a.checkpoint.display().to_string()];
    m.outputs = vec!["eval.json".into(), "eval.txt".into()];
    m.write(&cli.out)?;

    let l = load_eval_inputs(&a.checkpoint, &a.dataset)?;
    let opts = EvalOptions { gen, seed, shuffle_seed: a.shuffle_seed, exec: Exec::Parallel };
    let summary = evaluate(&l.params, &l.samples, &l.idx, &l.task, &Lexicon::default_lexicon(), &opts)?;
    write_json(&cli.out.join("eval.json"), &summary)?;
    let table = format_eval(&summary);
    write_text(&cli.out.join("eval.txt"), &table)?;
    print!("{table}");
    m.finish(&cli.out)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct AblationReport {
    seeds: Vec<u64>,
    sorted_f1: Vec<f64>,
    shuffled_f1: Vec<f64>,
    /// one-sided Welch test of sorted > shuffled; absent when undefined
    test: Option<TestResult>,
    note: Option<String>,
}

fn cmd_ablate(cli: &Cli, cfg: &RunConfig, a: &AblateArgs) -> Result<u8> {
    let gen = apply_gen(cfg.gen, &a.gen)?;
    if a.seeds.len() < 2 {
        bail!("the shuffle ablation needs at least two seeds");
    }
    let config = json!({ "checkpoint": a.checkpoint, "dataset": a.dataset, "seeds": a.seeds, "gen": gen });
    let mut m = RunManifest::new("ablate-shuffle", config, seed_of(cfg), None);
    m.checkpoints = vec![a.checkpoint.display().to_string()];
    m.outputs = vec!["ablate.json".into(), "ablate.txt".into()];
    m.write(&cli.out)?;

    let l = load_eval_inputs(&a.checkpoint, &a.dataset)?;
    if !l.params.variant.use_segmaps {
        bail!("checkpoint does not use segmentation maps; nothing to shuffle");
    }
    let lexicon = Lexicon::default_lexicon();
    let (mut sorted, mut shuffled) = (Vec::new(), Vec::new());
    for &s in &a.seeds {
        let opts = EvalOptions { gen, seed: s, shuffle_seed: None, exec: Exec::Parallel };
        sorted.push(evaluate(&l.params, &l.samples, &l.idx, &l.task, &lexicon, &opts)?.ce.f1);
        let opts = EvalOptions { shuffle_seed: Some(s), ..opts };
        shuffled.push(evaluate(&l.params, &l.samples, &l.idx, &l.task, &lexicon, &opts)?.ce.f1);
    }
    let (test, note) = match welch_groups(&sorted, &shuffled, Sided::Greater) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = AblationReport { seeds: a.seeds.clone(), sorted_f1: sorted, shuffled_f1: shuffled, test, note };
    write_json(&cli.out.join("ablate.json"), &report)?;

    let mut table = format!("{:>6}  {:>8}  {:>8}\n", "seed", "sorted", "shuffled");
    for (i, s) in report.seeds.iter().enumerate() {
        table.push_str(&format!("{:>6}  {:>8.4}  {:>8.4}\n", s, report.sorted_f1[i], report.shuffled_f1[i]));
    }
    match (&report.test, &report.note) {
        (Some(t), _) => table.push_str(&format!("welch t = {:.4}, df = {:.3}, one-sided p = {:.3e}\n", t.t, t.df, t.p)),
        (None, Some(n)) => table.push_str(&format!("welch test undefined: {n}\n")),
        (None, None) => {}
    }
    write_text(&cli.out.join("ablate.txt"), &table)?;
    print!("{table}");
    m.finish(&cli.out)?;
    Ok(0)
}

fn cmd_convert(cli: &Cli, cfg: &RunConfig, a: &ConvertArgs) -> Result<u8> {
    let seed = seed_of(cfg);
    let output = a.output.clone().unwrap_or_else(|| cli.out.join("chat.jsonl"));
    let config = json!({ "input": a.input, "output": output, "prompts": a.prompts, "seed": seed });
    let mut m = RunManifest::new("convert-vqa", config, seed, None);
    m.outputs = vec![output.display().to_string(), "convert.json".into()];
    m.write(&cli.out)?;

    let prompts = match &a.prompts {
        Some(p) => PromptSet::from_json(&read_text(p)?)?,
        None => PromptSet::default_set(),
    };
    let records = parse_reports_jsonl(&read_text(&a.input)?)?;
    let conv = convert_corpus(&records, seed, &prompts);
    let jsonl = conv.to_jsonl();
    let violations = validate_corpus(&jsonl, &prompts);
    if let Some(v) = violations.first() {
        bail!("converted corpus breaks an invariant: {v}");
    }
    write_text(&output, &jsonl)?;
    let summary = json!({ "input": records.len(), "written": conv.records.len(), "skipped": conv.skipped });
    write_json(&cli.out.join("convert.json"), &summary)?;
    println!("{:<8}  {:>6}\n{:<8}  {:>6}\n{:<8}  {:>6}", "input", records.len(), "written", conv.records.len(), "skipped", conv.skipped.len());
    m.finish(&cli.out)?;
    Ok(0)
}

fn cmd_stats(cli: &Cli, cfg: &RunConfig, a: &StatsArgs) -> Result<u8> {
    let input: StatsInput = serde_json::from_str(&read_text(&a.input)?).with_context(|| format!("parsing {}", a.input.display()))?;
    let mut m = RunManifest::new("stats", json!({ "input": a.input }), seed_of(cfg), None);
    m.outputs = vec!["stats.json".into(), "stats.txt".into()];
    m.write(&cli.out)?;
    let rows = stats::run_comparisons(&input)?;
    write_json(&cli.out.join("stats.json"), &rows)?;
    let table = stats::format_table(&rows);
    write_text(&cli.out.join("stats.txt"), &table)?;
    print!("{table}");
    m.finish(&cli.out)?;
    Ok(0)
}

fn cmd_ground(cli: &Cli, cfg: &RunConfig, a: &GroundArgs) -> Result<u8> {
    let report = match (&a.report, &a.report_file) {
        (Some(r), _) => r.clone(),
        (None, Some(p)) => read_text(p)?,
        (None, None) => bail!("give --report or --report-file"),
    };
    let config = json!({ "report": report, "stack": a.stack, "mapping": a.mapping, "min_area": a.min_area });
    let mut m = RunManifest::new("ground", config, seed_of(cfg), None);
    m.outputs = vec!["ground.json".into(), "ground.txt".into()];
    m.write(&cli.out)?;

    let stack = MaskStack::read_file(&a.stack)?;
    let mapping = match &a.mapping {
        Some(p) => FindingMapping::from_json(&read_text(p)?)?,
        None => FindingMapping::default_mapping(),
    };
    let rows = ground::ground(&report, &stack, &mapping, &Lexicon::default_lexicon(), a.min_area)?;
    write_json(&cli.out.join("ground.json"), &rows)?;
    let table = ground::format_table(&rows);
    write_text(&cli.out.join("ground.txt"), &table)?;
    print!("{table}");
    m.finish(&cli.out)?;
    Ok(0)
}

fn variants(name: &Option<String>) -> Result<Vec<(String, FusionVariant)>> {
    let names: Vec<String> = match name {
        Some(n) => vec![n.clone()],
        None => VARIANTS.iter().map(|s| s.to_string()).collect(),
    };
    names
        .into_iter()
        .map(|n| {
            let v = FusionVariant::parse(&n)?;
            Ok((n, v))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct DemoRow {
    variant: String,
    output_shape: Vec<usize>,
    finite: bool,
    projector_params: usize,
    /// added parameters as a fraction of a full-size backbone at the full-size shapes
    paper_added_fraction: f64,
}

fn cmd_demo(cli: &Cli, cfg: &RunConfig, a: &DemoArgs) -> Result<u8> {
    if a.batch == 0 {
        bail!("batch must be at least 1");
    }
    let seed = seed_of(cfg);
    let dims = Dims::preset(&cfg.preset)?;
    let config = json!({ "preset": cfg.preset, "variant": a.variant, "batch": a.batch, "seed": seed });
    let mut m = RunManifest::new("demo-fusion", config, seed, a.variant.clone());
    m.outputs = vec!["demo.json".into(), "demo.txt".into()];
    m.write(&cli.out)?;

    let task = TaskSpec::default_task();
    let batch = gen_synthetic_dataset(&task, a.batch, &dims, seed, Exec::Parallel)?;
    let f_i = TensorF::stack(&batch.iter().map(|s| s.f_i.clone()).collect::<Vec<_>>())?;
    let r = TensorF::stack(&batch.iter().map(|s| s.r.clone()).collect::<Vec<_>>())?;
    let s = TensorF::stack(&batch.iter().map(|s| s.masks.to_tensor()).collect::<Vec<_>>())?;
    let mut rows = Vec::new();
    for (name, v) in variants(&a.variant)? {
        let params = ProjectorParams::init(dims, v, seed)?;
        let seg = v.use_segmaps.then_some(&s);
        let y = projector_forward(&params, &f_i, &r, seg, Exec::Parallel)?;
        let budget = count_params(&v, &Dims::paper(), DEFAULT_BACKBONE_SIZE);
        rows.push(DemoRow {
            variant: name,
            output_shape: y.shape().to_vec(),
            finite: y.all_finite(),
            projector_params: params.num_projector_elements(),
            paper_added_fraction: budget.added_fraction,
        });
    }
    write_json(&cli.out.join("demo.json"), &rows)?;
    let w = rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7);
    let mut table = format!("{:<w$}  {:<16}  {:>10}  {:>10}\n", "variant", "output", "params", "added %");
    for r in &rows {
        let shape = format!("{:?}", r.output_shape);
        table.push_str(&format!(
            "{:<w$}  {:<16}  {:>10}  {:>9.4}%\n",
            r.variant,
            shape,
            r.projector_params,
            100.0 * r.paper_added_fraction
        ));
    }
    write_text(&cli.out.join("demo.txt"), &table)?;
    print!("{table}");
    m.finish(&cli.out)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct GradRow {
    variant: String,
    passed: bool,
    max_error: f64,
    worst_param: Option<String>,
    checked_entries: usize,
}

fn cmd_grad_check(cli: &Cli, cfg: &RunConfig, a: &GradCheckArgs) -> Result<u8> {
    let seed = seed_of(cfg);
    let dims = Dims::preset(&cfg.preset)?;
    let config = json!({
        "preset": cfg.preset, "variant": a.variant, "per_param": a.per_param, "eps": a.eps, "tol": a.tol, "seed": seed,
    });
    let mut m = RunManifest::new("grad-check", config, seed, a.variant.clone());
    m.outputs = vec!["gradcheck.json".into(), "gradcheck.txt".into()];
    m.write(&cli.out)?;

    let mut rows = Vec::new();
    for (name, v) in variants(&a.variant)? {
        let r = end_to_end_grad_check(dims, v, a.per_param, a.eps, a.tol, seed, Exec::Parallel)?;
        rows.push(GradRow {
            variant: name,
            passed: r.passed(),
            max_error: r.max_error,
            worst_param: r.worst().map(|p| p.name.clone()),
            checked_entries: r.checked_entries,
        });
    }
    write_json(&cli.out.join("gradcheck.json"), &rows)?;
    let w = rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7);
    let mut table = format!("{:<w$}  {:>8}  {:>10}  {:<6}  {}\n", "variant", "entries", "max err", "result", "worst");
    for r in &rows {
        table.push_str(&format!(
            "{:<w$}  {:>8}  {:>10.3e}  {:<6}  {}\n",
            r.variant,
            r.checked_entries,
            r.max_error,
            if r.passed { "PASS" } else { "FAIL" },
            r.worst_param.as_deref().unwrap_or("-")
        ));
    }
    write_text(&cli.out.join("gradcheck.txt"), &table)?;
    print!("{table}");
    m.finish(&cli.out)?;
    Ok(if rows.iter().all(|r| r.passed) { 0 } else { crate::EXIT_VALIDATION })
}
