use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::error::{Error, Result};

pub const N_FINDINGS: usize = 14;

/// The 14 CheXpert findings in alphabetical order, which is also the order
/// of every [`CeVector`].
pub const FINDINGS: [&str; N_FINDINGS] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Enlarged Cardiomediastinum",
    "Fracture",
    "Lung Lesion",
    "Lung Opacity",
    "No Finding",
    "Pleural Effusion",
    "Pleural Other",
    "Pneumonia",
    "Pneumothorax",
    "Support Devices",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Finding(usize);

impl Finding {
    pub const NO_FINDING: Finding = Finding(8);

    pub fn all() -> impl Iterator<Item = Finding> {
        (0..N_FINDINGS).map(Finding)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < N_FINDINGS).then_some(Finding(i))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        FINDINGS.iter().position(|f| *f == name).map(Finding)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn name(self) -> &'static str {
        FINDINGS[self.0]
    }
}

/// Binary presence of each finding, indexed as [`FINDINGS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CeVector(pub [bool; N_FINDINGS]);

impl CeVector {
    /// Presence of the 13 findings other than "No Finding"; "No Finding" is
    /// set iff all of them are absent.
    pub fn from_pathologies(mut v: [bool; N_FINDINGS]) -> Self {
        let ni = Finding::NO_FINDING.index();
        v[ni] = false;
        v[ni] = !v.iter().any(|&b| b);
        CeVector(v)
    }

    pub fn get(&self, f: Finding) -> bool {
        self.0[f.index()]
    }

    pub fn positives(&self) -> impl Iterator<Item = Finding> + '_ {
        Finding::all().filter(|f| self.get(*f))
    }
}

#[derive(Debug, Deserialize)]
struct LexiconFile {
    negation_cues: Vec<String>,
    findings: BTreeMap<String, Vec<String>>,
}

/// Synonym phrases per finding plus negation cues, all pre-tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    negation_cues: Vec<Vec<String>>,
    phrases: Vec<Vec<Vec<String>>>,
}

const DEFAULT_LEXICON_JSON: &str = include_str!("../../data/lexicon.json");

impl Lexicon {
    pub fn default_lexicon() -> Self {
        Self::from_json(DEFAULT_LEXICON_JSON).expect("bundled lexicon is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: LexiconFile = serde_json::from_str(json)?;
        let mut phrases = vec![Vec::new(); N_FINDINGS];
        for (name, syns) in file.findings {
            let f = Finding::from_name(&name)
                .ok_or_else(|| Error::Config(format!("lexicon names unknown finding {name:?}")))?;
            phrases[f.index()] = syns.iter().map(|s| tokenize(s).tokens).filter(|t| !t.is_empty()).collect();
        }
        let negation_cues = file.negation_cues.iter().map(|s| tokenize(s).tokens).collect();
        Ok(Self { negation_cues, phrases })
    }

    pub fn phrases(&self, f: Finding) -> &[Vec<String>] {
        &self.phrases[f.index()]
    }
}

fn occurrences<'a>(tokens: &'a [String], phrase: &'a [String]) -> impl Iterator<Item = usize> + 'a {
    tokens.windows(phrase.len()).enumerate().filter(move |(_, w)| *w == phrase).map(|(i, _)| i)
}

/// Rule-based labels: a finding is positive iff one of its phrases occurs in
/// a sentence with no negation cue before it. "No Finding" is positive iff
/// every other finding is negative.
pub fn keyword_labeler(text: &str, lexicon: &Lexicon) -> CeVector {
    let mut v = [false; N_FINDINGS];
    for sentence in text.split(['.', '!', '?', '\n']) {
        let tokens = tokenize(sentence).tokens;
        if tokens.is_empty() {
            continue;
        }
        let first_cue = lexicon
            .negation_cues
            .iter()
            .filter(|c| !c.is_empty())
            .filter_map(|c| occurrences(&tokens, c).next())
            .min();
        for f in Finding::all().filter(|f| *f != Finding::NO_FINDING) {
            let hit = lexicon.phrases(f).iter().any(|p| {
                occurrences(&tokens, p).any(|pos| first_cue.is_none_or(|cue| cue >= pos))
            });
            v[f.index()] |= hit;
        }
    }
    CeVector::from_pathologies(v)
}
