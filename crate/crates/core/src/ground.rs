//! Agreement between findings asserted in a report and the segmentation
//! classes that should show them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{keyword_labeler, Finding, Lexicon, FINDINGS};
use crate::segstack::{presence, MaskStack};

const DEFAULT_MAPPING_JSON: &str = include_str!("../data/finding_classes.json");

/// Finding name to the segmentation classes that depict it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindingMapping {
    classes: BTreeMap<Finding, Vec<usize>>,
}

#[derive(Deserialize)]
struct MappingFile {
    mapping: BTreeMap<String, Vec<usize>>,
}

impl FindingMapping {
    pub fn default_mapping() -> Self {
        Self::from_json(DEFAULT_MAPPING_JSON).expect("bundled mapping is valid")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: MappingFile = serde_json::from_str(json)?;
        let mut classes = BTreeMap::new();
        for (name, idx) in file.mapping {
            let f = Finding::from_name(&name)
                .ok_or_else(|| Error::Config(format!("mapping names unknown finding {name:?}")))?;
            if idx.is_empty() {
                return Err(Error::Config(format!("finding {name:?} maps to no classes")));
            }
            classes.insert(f, idx);
        }
        Ok(Self { classes })
    }

    pub fn classes(&self, f: Finding) -> Option<&[usize]> {
        self.classes.get(&f).map(Vec::as_slice)
    }

    pub fn mapped(&self) -> impl Iterator<Item = (Finding, &[usize])> {
        self.classes.iter().map(|(f, c)| (*f, c.as_slice()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Agreement {
    BothPositive,
    ReportOnly,
    SegmentationOnly,
    BothNegative,
    Unmapped,
}

impl Agreement {
    pub fn as_str(self) -> &'static str {
        match self {
            Agreement::BothPositive => "both-positive",
            Agreement::ReportOnly => "report-only",
            Agreement::SegmentationOnly => "segmentation-only",
            Agreement::BothNegative => "both-negative",
            Agreement::Unmapped => "unmapped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundRow {
    pub finding: &'static str,
    pub report: bool,
    /// `None` when the finding has no mapped class
    pub segmentation: Option<bool>,
    pub agreement: Agreement,
}

/// One row per finding, in ontology order.
pub fn ground(
    report: &str,
    stack: &MaskStack,
    mapping: &FindingMapping,
    lexicon: &Lexicon,
    min_area_fraction: f64,
) -> Result<Vec<GroundRow>> {
    let labels = keyword_labeler(report, lexicon);
    let present = presence(stack, min_area_fraction)?;
    Finding::all()
        .map(|f| {
            let in_report = labels.get(f);
            let Some(classes) = mapping.classes(f) else {
                return Ok(GroundRow { finding: f.name(), report: in_report, segmentation: None, agreement: Agreement::Unmapped });
            };
            if let Some(&bad) = classes.iter().find(|&&c| c >= present.len()) {
                return Err(Error::Config(format!("{} maps to class {bad}, stack has {}", f.name(), present.len())));
            }
            let seg = classes.iter().any(|&c| present[c].present);
            let agreement = match (in_report, seg) {
                (true, true) => Agreement::BothPositive,
                (true, false) => Agreement::ReportOnly,
                (false, true) => Agreement::SegmentationOnly,
                (false, false) => Agreement::BothNegative,
            };
            Ok(GroundRow { finding: f.name(), report: in_report, segmentation: Some(seg), agreement })
        })
        .collect()
}

pub fn format_table(rows: &[GroundRow]) -> String {
    let w = FINDINGS.iter().map(|f| f.len()).max().unwrap_or(0);
    let mut out = format!("{:<w$}  {:<6}  {:<12}  {}\n", "finding", "report", "segmentation", "agreement");
    for r in rows {
        let seg = match r.segmentation {
            Some(true) => "yes",
            Some(false) => "no",
            None => "-",
        };
        let rep = if r.report { "yes" } else { "no" };
        out.push_str(&format!("{:<w$}  {:<6}  {:<12}  {}\n", r.finding, rep, seg, r.agreement.as_str()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segstack::DEFAULT_MIN_AREA_FRACTION;

    fn row<'a>(rows: &'a [GroundRow], name: &str) -> &'a GroundRow {
        rows.iter().find(|r| r.finding == name).unwrap()
    }

    #[test]
    fn default_mapping_matches_design() {
        let m = FindingMapping::default_mapping();
        assert_eq!(m.classes(Finding::from_name("Pleural Effusion").unwrap()), Some(&[182][..]));
        assert_eq!(m.classes(Finding::from_name("Support Devices").unwrap()).unwrap().len(), 22);
        assert_eq!(m.classes(Finding::from_name("Edema").unwrap()), None);
        assert_eq!(m.mapped().count(), 9);
    }

    #[test]
    fn unmapped_findings_are_reported_not_errors() {
        let stack = MaskStack::empty(212, 16, 16);
        let rows = ground("Mild edema.", &stack, &FindingMapping::default_mapping(), &Lexicon::default_lexicon(), DEFAULT_MIN_AREA_FRACTION).unwrap();
        assert_eq!(rows.len(), 14);
        assert_eq!(row(&rows, "Edema").agreement, Agreement::Unmapped);
        assert!(row(&rows, "Edema").report);
        assert!(format_table(&rows).contains("unmapped"));
    }
}
