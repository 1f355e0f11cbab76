//! Synthetic end-to-end harness: a generated dataset with known findings, a
//! bag-of-prefix decoder, two-stage training and sampled report generation.

mod check;
mod data;
mod eval;
mod lm;
mod train;

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::metrics::{CeVector, Finding, FINDINGS, N_FINDINGS};
use crate::segstack::ClassTable;

pub use data::{
    gen_synthetic_dataset, read_dataset, split_dataset, write_dataset, Split, SyntheticSample,
};
pub use check::end_to_end_grad_check;
pub use eval::{evaluate, run_experiment, EvalOptions, EvalSummary, ExperimentResult};
pub use lm::{
    add_toylm_params, generate, generate_with_rng, prefix_mean, prefix_tokens, sequence_loss, toylm_forward, GenConfig,
};
pub use train::{
    continue_stage2, init_model, train_stage, train_two_stage, write_loss_csv, LossRow, TrainConfig, TrainOutcome,
};

const DEFAULT_TASK_JSON: &str = include_str!("../../data/synthetic_task.json");

#[derive(Debug, Clone, Deserialize)]
struct AnatomyRect {
    class: String,
    /// `[y, x, h, w]`
    rect: [usize; 4],
}

#[derive(Debug, Clone, Deserialize)]
struct TaskFile {
    prior: f64,
    noise: f64,
    mask_side: usize,
    lesion_side: [usize; 2],
    prompt: String,
    normal_report: String,
    end_token: String,
    keywords: BTreeMap<String, String>,
    feature_gain: BTreeMap<String, f64>,
    extra_vocab: Vec<String>,
    anatomy: Vec<AnatomyRect>,
    /// `[y, x, h, w]` per mapped finding
    lesion_regions: BTreeMap<String, [usize; 4]>,
}

/// Fixed assets of the synthetic task.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub prior: f64,
    pub noise: f64,
    pub mask_side: usize,
    pub lesion_side: (usize, usize),
    /// one keyword per finding; `None` for "No Finding"
    pub keywords: Vec<Option<String>>,
    /// how strongly each finding shows in the intermediate features
    pub feature_gain: [f64; N_FINDINGS],
    /// `(class, y, x, h, w)` rectangles present in every sample
    pub anatomy: Vec<(usize, usize, usize, usize, usize)>,
    /// `(y, x, h, w)` area a finding's lesion is drawn inside
    pub lesion_regions: [Option<(usize, usize, usize, usize)>; N_FINDINGS],
    pub vocab: Vocab,
    pub prompt: Vec<usize>,
    pub normal_report: Vec<usize>,
}

impl TaskSpec {
    pub fn default_task() -> Self {
        Self::from_json(DEFAULT_TASK_JSON).expect("bundled task is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let f: TaskFile = serde_json::from_str(json)?;
        if !(0.0..=1.0).contains(&f.prior) || f.noise < 0.0 {
            return Err(Error::Config("prior must lie in [0, 1] and noise be non-negative".into()));
        }
        let (lo, hi) = (f.lesion_side[0], f.lesion_side[1]);
        if lo == 0 || lo > hi || hi > f.mask_side {
            return Err(Error::Config(format!("lesion sides {lo}..={hi} do not fit a {} mask", f.mask_side)));
        }
        let mut keywords = vec![None; N_FINDINGS];
        for (name, kw) in &f.keywords {
            let fi = finding(name)?;
            keywords[fi.index()] = Some(kw.clone());
        }
        if keywords.iter().enumerate().any(|(i, k)| k.is_none() != (i == Finding::NO_FINDING.index())) {
            return Err(Error::Config("every finding except \"No Finding\" needs a keyword".into()));
        }
        let mut feature_gain = [0.0; N_FINDINGS];
        for (name, g) in &f.feature_gain {
            feature_gain[finding(name)?.index()] = *g;
        }
        let table = ClassTable::default_table();
        let mut anatomy = Vec::new();
        for a in &f.anatomy {
            let c = table
                .index_of(&a.class)
                .ok_or_else(|| Error::Config(format!("unknown anatomy class {:?}", a.class)))?;
            let [y, x, h, w] = a.rect;
            if y + h > f.mask_side || x + w > f.mask_side || h == 0 || w == 0 {
                return Err(Error::Config(format!("rectangle for {:?} leaves the mask", a.class)));
            }
            anatomy.push((c, y, x, h, w));
        }
        let mut lesion_regions = [None; N_FINDINGS];
        for (name, &[y, x, h, w]) in &f.lesion_regions {
            if h < hi || w < hi || y + h > f.mask_side || x + w > f.mask_side {
                return Err(Error::Config(format!("lesion region for {name:?} cannot hold a {hi}-pixel lesion")));
            }
            lesion_regions[finding(name)?.index()] = Some((y, x, h, w));
        }

        let mut words = vec![f.end_token.clone(), ".".to_string()];
        let text_words = f.prompt.split_whitespace().chain(f.normal_report.split_whitespace());
        let kw_words = keywords.iter().flatten().map(String::as_str);
        for w in text_words.chain(kw_words).chain(f.extra_vocab.iter().map(String::as_str)) {
            if !words.iter().any(|x| x == w) {
                words.push(w.to_string());
            }
        }
        let vocab = Vocab::new(words)?;
        let prompt = vocab.encode(&f.prompt)?;
        let normal_report = vocab.encode(&f.normal_report)?;
        Ok(Self {
            prior: f.prior,
            noise: f.noise,
            mask_side: f.mask_side,
            lesion_side: (lo, hi),
            keywords,
            feature_gain,
            anatomy,
            lesion_regions,
            vocab,
            prompt,
            normal_report,
        })
    }

    /// Template report for a finding vector: the keywords of the present
    /// findings in ontology order, or the normal sentence, closed by a period.
    pub fn report_tokens(&self, z: &CeVector) -> Vec<usize> {
        let mut out: Vec<usize> = Finding::all()
            .filter(|f| z.get(*f))
            .filter_map(|f| self.keywords[f.index()].as_deref())
            .map(|k| self.vocab.id(k).expect("keywords are in the vocabulary"))
            .collect();
        if out.is_empty() {
            out = self.normal_report.clone();
        }
        out.push(self.vocab.period());
        out
    }
}

fn finding(name: &str) -> Result<Finding> {
    Finding::from_name(name).ok_or_else(|| {
        Error::Config(format!("unknown finding {name:?}; expected one of {FINDINGS:?}"))
    })
}

/// Word-level vocabulary; id 0 is the end token, id 1 the period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary word {w:?}")));
            }
        }
        if words.len() < 2 {
            return Err(Error::Config("vocabulary needs an end token and a period".into()));
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn eos(&self) -> usize {
        0
    }

    pub fn period(&self) -> usize {
        1
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Whitespace-split words, with a trailing period split off.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for w in text.split_whitespace() {
            let (stem, dot) = match w.strip_suffix('.') {
                Some(s) if !s.is_empty() => (s, true),
                _ => (w, false),
            };
            out.push(self.id(stem).ok_or_else(|| Error::Config(format!("word {stem:?} not in vocabulary")))?);
            if dot {
                out.push(self.period());
            }
        }
        Ok(out)
    }

    /// Space-joined words; the end token is dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != self.eos())
            .filter_map(|&i| self.word(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{keyword_labeler, Lexicon};

    #[test]
    fn vocabulary_is_large_enough() {
        let t = TaskSpec::default_task();
        assert!(t.vocab.len() >= 40, "{}", t.vocab.len());
        assert_eq!(t.vocab.word(0), Some("<eos>"));
    }

    #[test]
    fn labeler_inverts_every_single_finding_report() {
        let t = TaskSpec::default_task();
        let lex = Lexicon::default_lexicon();
        for f in Finding::all() {
            let mut v = [false; N_FINDINGS];
            v[f.index()] = true;
            let z = CeVector::from_pathologies(v);
            let text = t.vocab.decode(&t.report_tokens(&z));
            assert_eq!(keyword_labeler(&text, &lex), z, "{text}");
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let t = TaskSpec::default_task();
        let ids = t.vocab.encode("effusion pneumothorax.").unwrap();
        assert_eq!(t.vocab.decode(&ids), "effusion pneumothorax .");
        assert!(t.vocab.encode("unknownword").is_err());
    }
}
