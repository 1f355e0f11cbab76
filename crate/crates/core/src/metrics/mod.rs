//! Lexical report metrics and clinical-efficacy scoring.

mod bleu;
mod ce;
mod cider;
mod labeler;
mod meteor;
mod rouge;

pub use bleu::bleu;
pub use ce::{ce_scores, CeScores};
pub use cider::{cider_d, CIDER_SIGMA};
pub use labeler::{keyword_labeler, CeVector, Finding, Lexicon, FINDINGS, N_FINDINGS};
pub use meteor::{meteor_lite, stem};
pub use rouge::{rouge_l, ROUGE_BETA};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercased tokens of a report, with the source text kept alongside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedReport {
    pub source: String,
    pub tokens: Vec<String>,
}

impl TokenizedReport {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercase, split on whitespace and trim punctuation from token ends.
/// Tokens made only of punctuation are kept as they are.
pub fn tokenize(text: &str) -> TokenizedReport {
    let tokens = text
        .split_whitespace()
        .map(|raw| {
            let lower = raw.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| c.is_ascii_punctuation());
            if trimmed.is_empty() {
                lower
            } else {
                trimmed.to_string()
            }
        })
        .collect();
    TokenizedReport { source: text.to_string(), tokens }
}

pub(crate) fn check_corpus(cands: &[TokenizedReport], refs: &[TokenizedReport]) -> Result<()> {
    if cands.len() != refs.len() {
        return Err(Error::Contract(format!(
            "{} candidates but {} references",
            cands.len(),
            refs.len()
        )));
    }
    if cands.is_empty() {
        return Err(Error::Undefined("empty corpus".into()));
    }
    Ok(())
}

/// n-gram counts of one token sequence.
pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// One line of the metric input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub candidate: String,
    pub reference: String,
}

pub fn parse_pairs_jsonl(text: &str) -> Result<Vec<PairRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider_d: f64,
    pub ce: CeScores,
}

impl MetricSummary {
    /// Score a corpus with every metric; CE labels come from `lexicon`.
    pub fn compute(cands: &[String], refs: &[String], lexicon: &Lexicon) -> Result<Self> {
        let c: Vec<_> = cands.iter().map(|t| tokenize(t)).collect();
        let r: Vec<_> = refs.iter().map(|t| tokenize(t)).collect();
        let preds: Vec<_> = cands.iter().map(|t| keyword_labeler(t, lexicon)).collect();
        let golds: Vec<_> = refs.iter().map(|t| keyword_labeler(t, lexicon)).collect();
        Ok(Self {
            bleu1: bleu(&c, &r, 1)?,
            bleu4: bleu(&c, &r, 4)?,
            rouge_l: rouge_l(&c, &r)?,
            meteor: meteor_lite(&c, &r)?,
            cider_d: cider_d(&c, &r)?,
            ce: ce_scores(&preds, &golds)?,
        })
    }

    /// JSON with every value fixed to six decimals.
    pub fn to_json(&self) -> String {
        format!(
            "{{\n  \"bleu1\": {:.6},\n  \"bleu4\": {:.6},\n  \"rougeL\": {:.6},\n  \"meteor\": {:.6},\n  \"ciderD\": {:.6},\n  \"ce\": {{\n    \"precision\": {:.6},\n    \"recall\": {:.6},\n    \"f1\": {:.6}\n  }}\n}}\n",
            self.bleu1,
            self.bleu4,
            self.rouge_l,
            self.meteor,
            self.cider_d,
            self.ce.precision,
            self.ce.recall,
            self.ce.f1
        )
    }
}
