use std::collections::HashMap;

use super::{check_corpus, ngram_counts, TokenizedReport};
use crate::error::{Error, Result};

pub const CIDER_SIGMA: f64 = 6.0;
const MAX_N: usize = 4;

struct Doc<'a> {
    vecs: Vec<HashMap<&'a [String], f64>>,
    norms: Vec<f64>,
    len: usize,
}

fn tfidf<'a>(tokens: &'a [String], df: &HashMap<&[String], usize>, log_n: f64) -> Doc<'a> {
    let mut vecs = Vec::with_capacity(MAX_N);
    let mut norms = Vec::with_capacity(MAX_N);
    for n in 1..=MAX_N {
        let v: HashMap<&[String], f64> = ngram_counts(tokens, n)
            .into_iter()
            .map(|(g, tf)| {
                let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
                (g, tf as f64 * (log_n - d.ln()))
            })
            .collect();
        norms.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
        vecs.push(v);
    }
    Doc { vecs, norms, len: tokens.len() }
}

/// CIDEr-D: clipped tf-idf cosine per n-gram order with a Gaussian length
/// penalty, averaged over orders 1-4, scaled by 10 and averaged over pairs.
/// Document frequencies are counted over the references.
pub fn cider_d(cands: &[TokenizedReport], refs: &[TokenizedReport]) -> Result<f64> {
    check_corpus(cands, refs)?;
    if refs.len() < 2 {
        return Err(Error::Undefined("CIDEr-D document frequencies need at least two references".into()));
    }
    let mut df: HashMap<&[String], usize> = HashMap::new();
    for r in refs {
        for n in 1..=MAX_N {
            for g in ngram_counts(&r.tokens, n).into_keys() {
                *df.entry(g).or_insert(0) += 1;
            }
        }
    }
    let log_n = (refs.len() as f64).ln();
    let mut total = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        let hc = tfidf(&c.tokens, &df, log_n);
        let hr = tfidf(&r.tokens, &df, log_n);
        let delta = hc.len as f64 - hr.len as f64;
        let gauss = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
        let mut score = 0.0;
        for n in 0..MAX_N {
            let mut val: f64 = hc.vecs[n]
                .iter()
                .filter_map(|(g, &v)| hr.vecs[n].get(g).map(|&w| v.min(w) * w))
                .sum();
            if hc.norms[n] != 0.0 && hr.norms[n] != 0.0 {
                val /= hc.norms[n] * hr.norms[n];
            }
            score += val * gauss;
        }
        total += 10.0 * score / MAX_N as f64;
    }
    Ok(total / cands.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;

    fn corpus(items: &[&str]) -> Vec<TokenizedReport> {
        items.iter().map(|s| tokenize(s)).collect()
    }

    #[test]
    fn unique_self_match_scores_ten() {
        let refs = corpus(&["alpha beta gamma delta", "one two three four"]);
        let v = cider_d(&refs, &refs).unwrap();
        assert!((v - 10.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn disjoint_scores_zero_and_single_doc_is_undefined() {
        let c = corpus(&["a b", "c d"]);
        let r = corpus(&["x y", "z w"]);
        assert_eq!(cider_d(&c, &r).unwrap(), 0.0);
        assert!(matches!(cider_d(&c[..1], &r[..1]), Err(Error::Undefined(_))));
    }
}
