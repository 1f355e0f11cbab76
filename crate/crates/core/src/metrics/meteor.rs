use std::borrow::Cow;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

use super::{check_corpus, TokenizedReport};
use crate::error::Result;

/// English Snowball stem of a lowercase token.
pub fn stem(word: &str) -> Cow<'_, str> {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English)).stem(word)
}

/// Greedy alignment: exact matches first, then stem matches, each pairing a
/// candidate token with the leftmost unused reference token.
/// Returns `(cand_index, ref_index)` pairs sorted by candidate index.
fn align(c: &[String], r: &[String]) -> Vec<(usize, usize)> {
    let mut ref_used = vec![false; r.len()];
    let mut cand_ref: Vec<Option<usize>> = vec![None; c.len()];
    for (i, w) in c.iter().enumerate() {
        if let Some(j) = (0..r.len()).find(|&j| !ref_used[j] && r[j] == *w) {
            ref_used[j] = true;
            cand_ref[i] = Some(j);
        }
    }
    let ref_stems: Vec<Cow<'_, str>> = r.iter().map(|w| stem(w)).collect();
    for (i, w) in c.iter().enumerate() {
        if cand_ref[i].is_some() {
            continue;
        }
        let s = stem(w);
        if let Some(j) = (0..r.len()).find(|&j| !ref_used[j] && ref_stems[j] == s) {
            ref_used[j] = true;
            cand_ref[i] = Some(j);
        }
    }
    cand_ref
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect()
}

fn pair(c: &[String], r: &[String]) -> f64 {
    let matches = align(c, r);
    let m = matches.len();
    if m == 0 {
        return 0.0;
    }
    let chunks = 1 + matches
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = m as f64 / c.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let f = 10.0 * p * rec / (rec + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f * (1.0 - penalty)
}

/// Mean per-pair METEOR with exact and stem stages only.
pub fn meteor_lite(cands: &[TokenizedReport], refs: &[TokenizedReport]) -> Result<f64> {
    check_corpus(cands, refs)?;
    let total: f64 = cands.iter().zip(refs).map(|(c, r)| pair(&c.tokens, &r.tokens)).sum();
    Ok(total / cands.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;

    fn one(c: &str, r: &str) -> f64 {
        meteor_lite(&[tokenize(c)], &[tokenize(r)]).unwrap()
    }

    #[test]
    fn examples() {
        assert!((one("a b c d", "a b c d") - (1.0 - 0.5 / 64.0)).abs() < 1e-15);
        assert!((one("a b c d", "a b c d") - 0.9922).abs() < 1e-4);
        assert_eq!(one("a b", "c d"), 0.0);
        // every match its own chunk
        assert!((one("d c b a", "a b c d") - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stem_stage_matches_inflections() {
        assert_eq!(stem("effusions"), stem("effusion"));
        let v = one("effusions present", "effusion present");
        assert!((v - (1.0 - 0.5 / 8.0)).abs() < 1e-15);
    }
}
