use super::{check_corpus, ngram_counts, TokenizedReport};
use crate::error::{Error, Result};

/// Corpus BLEU with one reference per candidate and no smoothing.
pub fn bleu(cands: &[TokenizedReport], refs: &[TokenizedReport], max_n: usize) -> Result<f64> {
    check_corpus(cands, refs)?;
    if max_n == 0 {
        return Err(Error::Contract("bleu needs max_n >= 1".into()));
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (mut clipped, mut total) = (0usize, 0usize);
        for (c, r) in cands.iter().zip(refs) {
            let rc = ngram_counts(&r.tokens, n);
            for (g, k) in ngram_counts(&c.tokens, n) {
                clipped += k.min(rc.get(g).copied().unwrap_or(0));
                total += k;
            }
        }
        if clipped == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c: usize = cands.iter().map(TokenizedReport::len).sum();
    let r: usize = refs.iter().map(TokenizedReport::len).sum();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * (log_sum / max_n as f64).exp())
}
