mod common;

use std::collections::BTreeSet;

use segfuse::vqa::{convert_corpus, parse_reports_jsonl, validate_corpus, PromptSet, IMAGE_TAG};

const DISTINCT_PROMPTS_SEED7: usize = 30;

fn corpus() -> Vec<segfuse::vqa::ReportRecord> {
    parse_reports_jsonl(&common::fixture("reports100.jsonl")).unwrap()
}

#[test]
fn fixture_converts_cleanly_at_seed_7() {
    let prompts = PromptSet::default_set();
    let records = corpus();
    assert_eq!(records.len(), 100);
    let out = convert_corpus(&records, 7, &prompts);

    // no header on every tenth record, empty findings on every tenth + 3
    assert_eq!(out.skipped.len(), 20);
    assert_eq!(out.records.len() + out.skipped.len(), records.len());
    assert!(validate_corpus(&out.to_jsonl(), &prompts).is_empty());

    let mut used = BTreeSet::new();
    for r in &out.records {
        assert_eq!(r.conversations.len(), 2);
        let (head, prompt) = r.conversations[0].value.split_once('\n').unwrap();
        assert_eq!(head, IMAGE_TAG);
        assert!(prompts.contains(prompt), "{prompt}");
        assert!(!r.conversations[1].value.trim().is_empty());
        used.insert(prompt.to_string());
    }
    println!("distinct prompts at seed 7: {}", used.len());
    assert!(used.len() >= 10);
    assert_eq!(used.len(), DISTINCT_PROMPTS_SEED7);
}

#[test]
fn conversion_is_deterministic_and_keeps_order() {
    let prompts = PromptSet::default_set();
    let records = corpus();
    let a = convert_corpus(&records, 7, &prompts).to_jsonl();
    assert_eq!(a, convert_corpus(&records, 7, &prompts).to_jsonl());
    assert_ne!(a, convert_corpus(&records, 8, &prompts).to_jsonl());
    let ids: Vec<String> = convert_corpus(&records, 7, &prompts).records.into_iter().map(|r| r.id).collect();
    let want: Vec<String> = records.iter().map(|r| r.id.clone()).filter(|id| ids.contains(id)).collect();
    assert_eq!(ids, want);
}

#[test]
fn multi_line_findings_are_joined() {
    let prompts = PromptSet::default_set();
    let out = convert_corpus(&corpus(), 7, &prompts);
    for r in &out.records {
        let text = &r.conversations[1].value;
        assert!(!text.contains('\n') && !text.contains("  "), "{text:?}");
        assert!(!text.to_ascii_lowercase().contains("impression"));
    }
}
