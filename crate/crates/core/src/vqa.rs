//! Conversion of raw report records into single-turn chat records.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const IMAGE_TAG: &str = "<image>";

const DEFAULT_PROMPTS_JSON: &str = include_str!("../data/vqa_prompts.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: String,
    pub image: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub id: String,
    pub image: String,
    pub conversations: Vec<Turn>,
    /// Reserved for merging differently generated chats later.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    prompts: Vec<String>,
}

#[derive(Deserialize)]
struct PromptFile {
    prompts: Vec<String>,
}

impl PromptSet {
    pub fn default_set() -> Self {
        Self::from_json(DEFAULT_PROMPTS_JSON).expect("bundled prompts are valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: PromptFile = serde_json::from_str(json)?;
        if file.prompts.is_empty() || file.prompts.iter().any(|p| p.trim().is_empty() || p.contains('\n')) {
            return Err(Error::Config("prompts must be nonempty single lines".into()));
        }
        Ok(Self { prompts: file.prompts })
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn get(&self, i: usize) -> &str {
        &self.prompts[i]
    }

    pub fn contains(&self, prompt: &str) -> bool {
        self.prompts.iter().any(|p| p == prompt)
    }

    /// Uniform choice keyed by SHA-256 of the seed and record id.
    pub fn index_for(&self, seed: u64, id: &str) -> usize {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(id.as_bytes());
        let digest = h.finalize();
        let v = u64::from_le_bytes(digest[..8].try_into().unwrap());
        (v % self.prompts.len() as u64) as usize
    }
}

fn find_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    haystack[from..].to_ascii_lowercase().find(&needle.to_ascii_lowercase()).map(|i| i + from)
}

/// Text between the `FINDINGS:` header and `IMPRESSION:` (or the end), with
/// whitespace runs collapsed. `None` means the record has no findings.
pub fn extract_findings(text: &str) -> Option<String> {
    const HEADER: &str = "findings:";
    let start = find_ci(text, HEADER, 0)? + HEADER.len();
    let end = find_ci(text, "impression:", start).unwrap_or(text.len());
    let body = text[start..end].split_whitespace().collect::<Vec<_>>().join(" ");
    (!body.is_empty()).then_some(body)
}

/// `None` when the record has to be skipped for lack of findings.
pub fn to_single_turn(record: &ReportRecord, seed: u64, prompts: &PromptSet) -> Option<ChatRecord> {
    let findings = extract_findings(&record.text)?;
    let prompt = prompts.get(prompts.index_for(seed, &record.id));
    Some(ChatRecord {
        id: record.id.clone(),
        image: record.image.clone(),
        conversations: vec![
            Turn { from: "human".into(), value: format!("{IMAGE_TAG}\n{prompt}") },
            Turn { from: "gpt".into(), value: findings },
        ],
        style: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Conversion {
    pub records: Vec<ChatRecord>,
    pub skipped: Vec<String>,
}

impl Conversion {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("chat records serialize") + "\n")
            .collect()
    }
}

pub fn parse_reports_jsonl(text: &str) -> Result<Vec<ReportRecord>> {
    let records: Vec<ReportRecord> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Config(format!("line {}: {e}", i + 1))))
        .collect::<Result<_>>()?;
    let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate record id {:?}", w[0])));
    }
    Ok(records)
}

/// Convert a corpus in input order; records without findings are skipped.
pub fn convert_corpus(records: &[ReportRecord], seed: u64, prompts: &PromptSet) -> Conversion {
    let mut out = Conversion::default();
    for r in records {
        match to_single_turn(r, seed, prompts) {
            Some(c) => out.records.push(c),
            None => out.skipped.push(r.id.clone()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// 1-based line number
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Every broken invariant of a single record.
pub fn check_record(record: &ChatRecord, prompts: &PromptSet) -> Vec<String> {
    let mut problems = Vec::new();
    if record.id.is_empty() {
        problems.push("empty id".to_string());
    }
    if record.conversations.len() != 2 {
        problems.push(format!("expected 2 turns, found {}", record.conversations.len()));
        return problems;
    }
    let (human, gpt) = (&record.conversations[0], &record.conversations[1]);
    if human.from != "human" || gpt.from != "gpt" {
        problems.push(format!("turn roles are {:?}/{:?}, expected human/gpt", human.from, gpt.from));
    }
    match human.value.strip_prefix(IMAGE_TAG).and_then(|r| r.strip_prefix('\n')) {
        None => problems.push(format!("human turn does not start with {IMAGE_TAG:?} and a newline")),
        Some(prompt) if !prompts.contains(prompt) => problems.push(format!("prompt {prompt:?} is not a known template")),
        Some(_) => {}
    }
    if gpt.value.trim().is_empty() {
        problems.push("empty assistant turn".to_string());
    }
    problems
}

pub fn validate_corpus(jsonl: &str, prompts: &PromptSet) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ChatRecord>(line) {
            Ok(rec) => out.extend(check_record(&rec, prompts).into_iter().map(|message| Violation { line: i + 1, message })),
            Err(e) => out.push(Violation { line: i + 1, message: format!("malformed JSON: {e}") }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, text: &str) -> ReportRecord {
        ReportRecord { id: id.into(), image: format!("{id}.jpg"), text: text.into() }
    }

    #[test]
    fn prompt_asset() {
        let p = PromptSet::default_set();
        assert_eq!(p.len(), 33);
        assert_eq!(p.get(0), "Can you describe what you see in the image?");
        assert_eq!(p.get(23), "Brief me on the findings.");
    }

    #[test]
    fn extract_examples() {
        assert_eq!(extract_findings("FINDINGS: Clear lungs. IMPRESSION: Normal.").as_deref(), Some("Clear lungs."));
        assert_eq!(extract_findings("IMPRESSION: Normal."), None);
        let multi = "EXAMINATION: CXR\nFindings:\n  Heart size normal.\n\n\n  No effusion.\t\nImpression: none";
        assert_eq!(extract_findings(multi).as_deref(), Some("Heart size normal. No effusion."));
        assert_eq!(extract_findings("FINDINGS:   IMPRESSION: x"), None);
    }

    #[test]
    fn single_turn_is_deterministic_and_valid() {
        let p = PromptSet::default_set();
        let r = rec("s1", "FINDINGS: Small left effusion.");
        let a = to_single_turn(&r, 7, &p).unwrap();
        assert_eq!(a, to_single_turn(&r, 7, &p).unwrap());
        assert!(check_record(&a, &p).is_empty());
        assert!(a.conversations[0].value.starts_with("<image>\n"));
    }

    #[test]
    fn validation_flags_each_problem() {
        let p = PromptSet::default_set();
        let good = to_single_turn(&rec("a", "FINDINGS: x."), 1, &p).unwrap();
        let mut no_tag = good.clone();
        no_tag.conversations[0].value = no_tag.conversations[0].value.replace("<image>\n", "");
        let mut empty = good.clone();
        empty.conversations[1].value = " ".into();
        let corpus = [&good, &no_tag, &empty]
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .chain(["{not json".to_string()])
            .collect::<Vec<_>>()
            .join("\n");
        let v = validate_corpus(&corpus, &p);
        assert_eq!(v.iter().map(|v| v.line).collect::<Vec<_>>(), [2, 3, 4]);
        assert!(v[1].message.contains("empty assistant"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let line = serde_json::to_string(&rec("x", "FINDINGS: a")).unwrap();
        assert!(parse_reports_jsonl(&format!("{line}\n{line}\n")).is_err());
    }
}
