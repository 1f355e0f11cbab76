use serde::Serialize;

use super::CeVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CeScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Micro-averaged precision, recall and F1 over all 14 x N decisions; 0/0 is 0.
pub fn ce_scores(preds: &[CeVector], golds: &[CeVector]) -> Result<CeScores> {
    if preds.len() != golds.len() {
        return Err(Error::Contract(format!("{} predictions but {} labels", preds.len(), golds.len())));
    }
    if preds.is_empty() {
        return Err(Error::Contract("clinical efficacy needs at least one report".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in preds.iter().zip(golds) {
        for (&a, &b) in p.0.iter().zip(&g.0) {
            match (a, b) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(CeScores { precision, recall, f1 })
}
