//! Shared fixtures, per-op gradient cases and brute-force metric oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use segfuse::metrics::{stem, tokenize, TokenizedReport};
use segfuse::tensor::ops::ADAIN_EPS;
use segfuse::tensor::{Tape, Var};
use segfuse::{Result, TensorF};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn randn(shape: &[usize], seed: u64) -> TensorF {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    TensorF::new(shape.to_vec(), data).unwrap()
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var> + Sync>;

pub struct OpCase {
    pub name: &'static str,
    pub params: Vec<(String, TensorF)>,
    pub build: Build,
}

fn case(name: &'static str, shapes: &[(&str, &[usize])], seed: u64, out_shape: &[usize], f: Build) -> OpCase {
    let params = shapes
        .iter()
        .enumerate()
        .map(|(i, (n, s))| (n.to_string(), randn(s, seed * 31 + i as u64)))
        .collect();
    // random weights so every output entry contributes differently
    let w = randn(out_shape, seed * 31 + 17);
    let build: Build = Box::new(move |t, v| {
        let y = f(t, v)?;
        t.weighted_sum(y, w.clone())
    });
    OpCase { name, params, build }
}

/// One finite-difference case per differentiable tape op.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        case("linear", &[("x", &[3, 4]), ("w", &[4, 5]), ("b", &[5])], 1, &[3, 5], Box::new(|t, v| t.linear(v[0], v[1], v[2]))),
        case("matmul", &[("a", &[3, 4]), ("b", &[4, 2])], 2, &[3, 2], Box::new(|t, v| t.matmul(v[0], v[1]))),
        case("transpose", &[("x", &[3, 4])], 3, &[4, 3], Box::new(|t, v| t.transpose(v[0]))),
        case(
            "conv1d",
            &[("x", &[3, 7]), ("k", &[4, 3, 3]), ("b", &[4])],
            4,
            &[4, 7],
            Box::new(|t, v| t.conv1d(v[0], v[1], v[2], 1, 1)),
        ),
        case(
            "conv1d_strided",
            &[("x", &[2, 8]), ("k", &[3, 2, 2]), ("b", &[3])],
            5,
            &[3, 5],
            Box::new(|t, v| t.conv1d(v[0], v[1], v[2], 2, 1)),
        ),
        case("adain", &[("c", &[5, 3]), ("s", &[5, 3])], 6, &[5, 3], Box::new(|t, v| t.adain(v[0], v[1], ADAIN_EPS))),
        case("pool1d", &[("x", &[3, 7])], 7, &[3, 3], Box::new(|t, v| t.pool1d(v[0], 3))),
        case("concat_tokens", &[("a", &[2, 3]), ("b", &[4, 3])], 8, &[6, 3], Box::new(|t, v| t.concat(v[0], v[1], 0))),
        case("concat_embed", &[("a", &[2, 3]), ("b", &[2, 5])], 9, &[2, 8], Box::new(|t, v| t.concat(v[0], v[1], 1))),
        case(
            "scaled_add",
            &[("x", &[3, 2]), ("y", &[3, 2]), ("alpha", &[1])],
            10,
            &[3, 2],
            Box::new(|t, v| t.scaled_add(v[0], v[1], v[2])),
        ),
        case("add", &[("a", &[2, 3]), ("b", &[2, 3])], 11, &[2, 3], Box::new(|t, v| t.add(v[0], v[1]))),
        case("gelu", &[("x", &[4, 3])], 12, &[4, 3], Box::new(|t, v| Ok(t.gelu(v[0])))),
        case("mean_rows", &[("x", &[4, 3])], 13, &[1, 3], Box::new(|t, v| t.mean_rows(v[0]))),
        case("add_row", &[("x", &[4, 3]), ("r", &[1, 3])], 14, &[4, 3], Box::new(|t, v| t.add_row(v[0], v[1]))),
        case("repeat_rows", &[("x", &[1, 3])], 15, &[4, 3], Box::new(|t, v| t.repeat_rows(v[0], 4))),
        case("gather", &[("table", &[5, 3])], 16, &[4, 3], Box::new(|t, v| t.gather(v[0], &[1, 4, 1, 0]))),
        OpCase {
            name: "softmax_xent",
            params: vec![("logits".into(), randn(&[3, 6], 17))],
            build: Box::new(|t, v| t.softmax_xent(v[0], &[2, 0, 5])),
        },
    ]
}

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

fn count(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

pub fn bleu_bf(cands: &[TokenizedReport], refs: &[TokenizedReport], max_n: usize) -> f64 {
    let mut precisions = Vec::new();
    for n in 1..=max_n {
        let (mut hit, mut all) = (0usize, 0usize);
        for (c, r) in cands.iter().zip(refs) {
            let cg = ngrams(&c.tokens, n);
            let rg = ngrams(&r.tokens, n);
            let mut seen: Vec<Vec<String>> = Vec::new();
            for g in &cg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                hit += count(&cg, g).min(count(&rg, g));
            }
            all += cg.len();
        }
        if hit == 0 {
            return 0.0;
        }
        precisions.push(hit as f64 / all as f64);
    }
    let c: usize = cands.iter().map(|x| x.tokens.len()).sum();
    let r: usize = refs.iter().map(|x| x.tokens.len()).sum();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64).exp()
}

fn lcs(a: &[String], b: &[String], i: usize, j: usize, memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
    if i == a.len() || j == b.len() {
        return 0;
    }
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let v = if a[i] == b[j] {
        1 + lcs(a, b, i + 1, j + 1, memo)
    } else {
        lcs(a, b, i + 1, j, memo).max(lcs(a, b, i, j + 1, memo))
    };
    memo.insert((i, j), v);
    v
}

pub fn rouge_bf(cands: &[TokenizedReport], refs: &[TokenizedReport]) -> f64 {
    let beta2 = 1.2f64 * 1.2;
    let scores: Vec<f64> = cands
        .iter()
        .zip(refs)
        .map(|(c, r)| {
            let l = lcs(&c.tokens, &r.tokens, 0, 0, &mut BTreeMap::new()) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / c.tokens.len() as f64;
            let rc = l / r.tokens.len() as f64;
            (1.0 + beta2) * p * rc / (rc + beta2 * p)
        })
        .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

pub fn meteor_bf(cands: &[TokenizedReport], refs: &[TokenizedReport]) -> f64 {
    let mut total = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        let (c, r) = (&c.tokens, &r.tokens);
        let mut taken = vec![false; r.len()];
        let mut link: Vec<Option<usize>> = vec![None; c.len()];
        for stage in 0..2 {
            for i in 0..c.len() {
                if link[i].is_some() {
                    continue;
                }
                for j in 0..r.len() {
                    let same = if stage == 0 { c[i] == r[j] } else { stem(&c[i]) == stem(&r[j]) };
                    if !taken[j] && same {
                        taken[j] = true;
                        link[i] = Some(j);
                        break;
                    }
                }
            }
        }
        let m = link.iter().flatten().count();
        if m == 0 {
            continue;
        }
        let mut chunks = 0;
        let mut prev: Option<(usize, usize)> = None;
        for (i, l) in link.iter().enumerate() {
            if let Some(j) = *l {
                let continues = matches!(prev, Some((pi, pj)) if pi + 1 == i && pj + 1 == j);
                if !continues {
                    chunks += 1;
                }
                prev = Some((i, j));
            }
        }
        let p = m as f64 / c.len() as f64;
        let rc = m as f64 / r.len() as f64;
        let f = 10.0 * p * rc / (rc + 9.0 * p);
        total += f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3));
    }
    total / cands.len() as f64
}

pub fn cider_bf(cands: &[TokenizedReport], refs: &[TokenizedReport]) -> f64 {
    let n_docs = refs.len() as f64;
    let df = |g: &[String]| refs.iter().filter(|r| ngrams(&r.tokens, g.len()).iter().any(|x| x.as_slice() == g)).count();
    let weights = |toks: &[String], n: usize| -> BTreeMap<Vec<String>, f64> {
        let all = ngrams(toks, n);
        let mut out = BTreeMap::new();
        for g in &all {
            let tf = count(&all, g) as f64;
            let idf = n_docs.ln() - (df(g).max(1) as f64).ln();
            out.insert(g.clone(), tf * idf);
        }
        out
    };
    let norm = |v: &BTreeMap<Vec<String>, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        let d = c.tokens.len() as f64 - r.tokens.len() as f64;
        let pen = (-d * d / 72.0).exp();
        let mut s = 0.0;
        for n in 1..=4 {
            let (vc, vr) = (weights(&c.tokens, n), weights(&r.tokens, n));
            let mut dot = 0.0;
            for (g, a) in &vc {
                if let Some(b) = vr.get(g) {
                    dot += a.min(*b) * b;
                }
            }
            let (nc, nr) = (norm(&vc), norm(&vr));
            if nc != 0.0 && nr != 0.0 {
                dot /= nc * nr;
            }
            s += dot * pen;
        }
        total += 10.0 * s / 4.0;
    }
    total / cands.len() as f64
}

/// The 50-pair metric fixture, tokenized.
pub fn metric_corpus() -> (Vec<TokenizedReport>, Vec<TokenizedReport>) {
    let pairs = segfuse::metrics::parse_pairs_jsonl(&fixture("metric_pairs50.jsonl")).unwrap();
    let c = pairs.iter().map(|p| tokenize(&p.candidate)).collect();
    let r = pairs.iter().map(|p| tokenize(&p.reference)).collect();
    (c, r)
}

/// Three-document corpus with a CIDEr-D value computed once by a separate
/// Python implementation of the tf-idf formula.
pub const CIDER3_CANDS: [&str; 3] = [
    "small left pleural effusion is seen",
    "the heart is enlarged and the lungs are clear",
    "no pneumothorax no effusion",
];
pub const CIDER3_REFS: [&str; 3] = [
    "there is a small left pleural effusion",
    "the heart is mildly enlarged lungs are clear",
    "no pneumothorax is seen",
];
pub const CIDER3_GOLDEN: f64 = 3.6080117203749746;
