//! Toy decoder standing in for the language model: logits are a linear read
//! of the mean projected image token plus the mean embedded text token.

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::SyntheticSample;
use crate::error::{Error, Result};
use crate::projector::graph::{self, SampleVars};
use crate::projector::{init_tensor, pool_segmaps_raw, Init, ParamSpec, ProjectorParams};
use crate::tensor::ops::linear_forward;
use crate::tensor::{Binder, Tape, TensorF, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub greedy: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { temperature: 0.2, max_new_tokens: 1024, greedy: false }
    }
}

/// Insert `lm.E [V, D_llm]`, `lm.U [D_llm, V]` and `lm.b [V]`.
pub fn add_toylm_params(params: &mut ProjectorParams, vocab_size: usize, seed: u64) -> Result<()> {
    if vocab_size < 2 {
        return Err(Error::Config(format!("vocabulary of {vocab_size} is too small")));
    }
    let d = params.dims.d_llm;
    let specs = [
        ParamSpec { name: "lm.E".into(), shape: vec![vocab_size, d], init: Init::Uniform { fan_in: d } },
        ParamSpec { name: "lm.U".into(), shape: vec![d, vocab_size], init: Init::Uniform { fan_in: d } },
        ParamSpec { name: "lm.b".into(), shape: vec![vocab_size], init: Init::Const(0.0) },
    ];
    for s in specs {
        params.store.insert(s.name.clone(), init_tensor(&s, seed));
    }
    Ok(())
}

/// Mask stack of a sample pooled to `[n_cls, g*g]`.
pub(crate) fn pooled_masks(params: &ProjectorParams, sample: &SyntheticSample) -> Result<TensorF> {
    pool_segmaps_raw(&sample.masks.to_tensor(), params.dims.g)
}

/// Put a sample's inputs on the tape. `pooled` is used only when the variant
/// takes segmentation maps.
pub(crate) fn sample_vars(
    tape: &mut Tape,
    params: &ProjectorParams,
    sample: &SyntheticSample,
    pooled: Option<&TensorF>,
) -> Result<SampleVars> {
    let f_i = tape.constant(sample.f_i.clone());
    let r = tape.constant(sample.r.clone().reshape(&[1, sample.r.numel()])?);
    let seg = match (params.variant.use_segmaps, pooled) {
        (false, _) => None,
        (true, Some(p)) => Some(tape.constant(p.clone())),
        (true, None) => Some(tape.constant(pooled_masks(params, sample)?)),
    };
    Ok(SampleVars { f_i, r, seg })
}

/// Projected multimodal tokens `[T_out, D_llm]`.
pub fn prefix_tokens(tape: &mut Tape, b: &mut Binder, params: &ProjectorParams, x: SampleVars) -> Result<Var> {
    graph::projector(tape, b, &params.dims, &params.variant, x)
}

fn check_prefix(tape: &Tape, prefix: Var, e: Var) -> Result<()> {
    let (pv, ev) = (tape.value(prefix), tape.value(e));
    if pv.rank() != 2 || pv.last_dim() != ev.last_dim() {
        return Err(Error::dim("toylm prefix", pv.shape(), ev.shape()));
    }
    Ok(())
}

/// Next-token logits `[1, V]` after `tokens`. An empty token list reads the
/// multimodal mean alone.
pub fn toylm_forward(tape: &mut Tape, b: &mut Binder, prefix: Var, tokens: &[usize]) -> Result<Var> {
    let e = b.var(tape, "lm.E")?;
    check_prefix(tape, prefix, e)?;
    let mut h = tape.mean_rows(prefix)?;
    if !tokens.is_empty() {
        let emb = tape.gather(e, tokens)?;
        let t = tape.mean_rows(emb)?;
        h = tape.add(h, t)?;
    }
    let u = b.var(tape, "lm.U")?;
    let bias = b.var(tape, "lm.b")?;
    tape.linear(h, u, bias)
}

/// Teacher-forced mean cross-entropy of `report` followed by the end token,
/// each position conditioned on the prompt and the report so far.
pub fn sequence_loss(tape: &mut Tape, b: &mut Binder, prefix: Var, prompt: &[usize], report: &[usize]) -> Result<Var> {
    let e = b.var(tape, "lm.E")?;
    check_prefix(tape, prefix, e)?;
    let eos = 0;
    let ctx: Vec<usize> = prompt.iter().chain(report).copied().collect();
    let targets: Vec<usize> = report.iter().copied().chain([eos]).collect();
    let pm = tape.mean_rows(prefix)?;
    let h = if ctx.is_empty() {
        pm
    } else {
        let (n_t, l, p) = (targets.len(), ctx.len(), prompt.len());
        let mut m = vec![0.0; n_t * l];
        for k in 0..n_t {
            let seen = p + k;
            for j in 0..seen {
                m[k * l + j] = 1.0 / seen as f64;
            }
        }
        let avg = tape.constant(TensorF::new(vec![n_t, l], m)?);
        let emb = tape.gather(e, &ctx)?;
        let text = tape.matmul(avg, emb)?;
        tape.add_row(text, pm)?
    };
    let u = b.var(tape, "lm.U")?;
    let bias = b.var(tape, "lm.b")?;
    let logits = tape.linear(h, u, bias)?;
    tape.softmax_xent(logits, &targets)
}

/// Mean projected token `[1, D_llm]` for one sample, forward only.
pub fn prefix_mean(params: &ProjectorParams, sample: &SyntheticSample, pooled: Option<&TensorF>) -> Result<TensorF> {
    let mut tape = Tape::new();
    let mut b = Binder::frozen(&params.store);
    let x = sample_vars(&mut tape, params, sample, pooled)?;
    let p = prefix_tokens(&mut tape, &mut b, params, x)?;
    let m = tape.mean_rows(p)?;
    Ok(tape.value(m).clone())
}

/// Autoregressive decoding from a precomputed prefix mean. The end token
/// stops decoding and is not returned.
pub fn generate_with_rng(
    params: &ProjectorParams,
    prefix_mean: &TensorF,
    prompt: &[usize],
    gen: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if !gen.greedy && (gen.temperature.is_nan() || gen.temperature <= 0.0) {
        return Err(Error::Config(format!("temperature {} must be positive unless greedy", gen.temperature)));
    }
    let e = params.get("lm.E")?;
    let u = params.get("lm.U")?;
    let bias = params.get("lm.b")?;
    let (v, d) = e.dims2()?;
    if prefix_mean.shape() != [1, d] {
        return Err(Error::dim("generate prefix", prefix_mean.shape(), &[1, d]));
    }
    let mut sum = vec![0.0; d];
    let mut n = 0usize;
    let push = |sum: &mut Vec<f64>, id: usize| {
        for (s, x) in sum.iter_mut().zip(&e.data()[id * d..(id + 1) * d]) {
            *s += x;
        }
    };
    for &t in prompt {
        if t >= v {
            return Err(Error::Contract(format!("token id {t} out of range for vocabulary {v}")));
        }
        push(&mut sum, t);
        n += 1;
    }
    let mut out = Vec::new();
    while out.len() < gen.max_new_tokens {
        let h: Vec<f64> = if n == 0 {
            prefix_mean.data().to_vec()
        } else {
            prefix_mean.data().iter().zip(&sum).map(|(p, s)| p + s / n as f64).collect()
        };
        let logits = linear_forward(&TensorF::new(vec![1, d], h)?, u, bias)?;
        let next = if gen.greedy {
            argmax(logits.data())
        } else {
            let scaled: Vec<f64> = logits.data().iter().map(|l| l / gen.temperature).collect();
            let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
            WeightedIndex::new(&w)
                .map_err(|err| Error::Contract(format!("sampling weights: {err}")))?
                .sample(rng)
        };
        if next == 0 {
            break;
        }
        out.push(next);
        push(&mut sum, next);
        n += 1;
    }
    Ok(out)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Generate a report for `sample`, deterministic in `seed`.
pub fn generate(params: &ProjectorParams, sample: &SyntheticSample, gen: &GenConfig, seed: u64) -> Result<Vec<usize>> {
    let pm = prefix_mean(params, sample, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_with_rng(params, &pm, &sample.prompt, gen, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::pipeline::{gen_synthetic_dataset, TaskSpec};
    use crate::projector::{Dims, FusionVariant};

    fn model(variant: FusionVariant) -> (ProjectorParams, Vec<SyntheticSample>) {
        let task = TaskSpec::default_task();
        let mut p = ProjectorParams::init(Dims::desk(), variant, 1).unwrap();
        add_toylm_params(&mut p, task.vocab.len(), 1).unwrap();
        let data = gen_synthetic_dataset(&task, 4, &Dims::desk(), 2, Exec::Sequential).unwrap();
        (p, data)
    }

    #[test]
    fn zero_readout_gives_bias() {
        let (mut p, data) = model(FusionVariant::concat());
        let v = p.get("lm.b").unwrap().numel();
        *p.store.get_mut("lm.U").unwrap() = TensorF::zeros(&[p.dims.d_llm, v]);
        let b: Vec<f64> = (0..v).map(|i| i as f64 * 0.5).collect();
        *p.store.get_mut("lm.b").unwrap() = TensorF::vector(b.clone());
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&p.store);
        let x = sample_vars(&mut tape, &p, &data[0], None).unwrap();
        let pre = prefix_tokens(&mut tape, &mut bind, &p, x).unwrap();
        let logits = toylm_forward(&mut tape, &mut bind, pre, &data[0].prompt).unwrap();
        assert_eq!(tape.value(logits).data(), b.as_slice());
    }

    #[test]
    fn pooled_term_is_linear_in_the_prefix() {
        let (p, _) = model(FusionVariant::baseline());
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&p.store);
        let x = TensorF::new(vec![3, p.dims.d_llm], (0..3 * p.dims.d_llm).map(|i| (i as f64).sin()).collect()).unwrap();
        let zero = TensorF::zeros(&[3, p.dims.d_llm]);
        let logits = |tape: &mut Tape, bind: &mut Binder, t: TensorF| {
            let v = tape.constant(t);
            let l = toylm_forward(tape, bind, v, &[]).unwrap();
            tape.value(l).clone()
        };
        let l0 = logits(&mut tape, &mut bind, zero);
        let l1 = logits(&mut tape, &mut bind, x.clone());
        let l2 = logits(&mut tape, &mut bind, x.scale(2.0));
        for i in 0..l0.numel() {
            let (a, b, c) = (l0.data()[i], l1.data()[i], l2.data()[i]);
            assert!(((c - a) - 2.0 * (b - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_matches_per_step_forward() {
        let (p, data) = model(FusionVariant::concat());
        let s = &data[0];
        let mut tape = Tape::new();
        let mut bind = Binder::frozen(&p.store);
        let x = sample_vars(&mut tape, &p, s, None).unwrap();
        let pre = prefix_tokens(&mut tape, &mut bind, &p, x).unwrap();
        let loss = sequence_loss(&mut tape, &mut bind, pre, &s.prompt, &s.report).unwrap();
        let mut total = 0.0;
        let targets: Vec<usize> = s.report.iter().copied().chain([0]).collect();
        for (k, &t) in targets.iter().enumerate() {
            let ctx: Vec<usize> = s.prompt.iter().chain(&s.report[..k]).copied().collect();
            let l = toylm_forward(&mut tape, &mut bind, pre, &ctx).unwrap();
            let lv = tape.value(l).data();
            let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lv.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - lv[t];
        }
        let mean = total / targets.len() as f64;
        assert!((tape.value(loss).item().unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn generation_edge_cases() {
        let (p, data) = model(FusionVariant::concat());
        let zero = GenConfig { max_new_tokens: 0, ..GenConfig::default() };
        assert!(generate(&p, &data[0], &zero, 1).unwrap().is_empty());
        let g = GenConfig { greedy: true, max_new_tokens: 12, temperature: 0.2 };
        let a = generate(&p, &data[0], &g, 1).unwrap();
        let b = generate(&p, &data[0], &GenConfig { temperature: 7.0, ..g }, 99).unwrap();
        assert_eq!(a, b);
        let s = GenConfig { max_new_tokens: 12, ..GenConfig::default() };
        assert_eq!(generate(&p, &data[0], &s, 5).unwrap(), generate(&p, &data[0], &s, 5).unwrap());
    }
}
