use super::{check_corpus, TokenizedReport};
use crate::error::Result;

pub const ROUGE_BETA: f64 = 1.2;

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn pair(c: &[String], r: &[String]) -> f64 {
    let l = lcs_len(c, r);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / c.len() as f64;
    let rec = l as f64 / r.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

/// Mean per-pair LCS F-measure.
pub fn rouge_l(cands: &[TokenizedReport], refs: &[TokenizedReport]) -> Result<f64> {
    check_corpus(cands, refs)?;
    let total: f64 = cands.iter().zip(refs).map(|(c, r)| pair(&c.tokens, &r.tokens)).sum();
    Ok(total / cands.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;

    fn one(c: &str, r: &str) -> f64 {
        rouge_l(&[tokenize(c)], &[tokenize(r)]).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(one("a b c", "a b c"), 1.0);
        assert_eq!(one("a b", "c d"), 0.0);
        let expected = (2.44 * 0.75) / (1.0 + 1.44 * 0.75);
        assert!((one("a b c d", "a c d") - expected).abs() < 1e-12);
        assert!((one("a b c d", "a c d") - 0.8798).abs() < 1e-4);
        assert_eq!(one("", "a"), 0.0);
    }
}
