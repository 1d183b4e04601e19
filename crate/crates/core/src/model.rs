//! Prediction logs: records, claims, datasets and JSONL ingestion.
//!
//! One JSON object per line. Recognised fields are `id`, `group`, `valid`,
//! `confidence`, `answer`, `claims` and `meta`; any other top-level field is
//! stringified into `meta`. Confidences are checked against `[0, 1]` and never
//! clamped.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::claims::{self, Aggregation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub text: String,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// One model response with its ground-truth correctness label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub claims: Vec<ClaimRecord>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, valid: bool, confidence: Option<f64>) -> Self {
        PredictionRecord {
            id: id.into(),
            group: None,
            valid,
            confidence,
            answer: None,
            claims: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn confidence(&self) -> Result<f64> {
        self.confidence.ok_or_else(|| Error::MissingConfidence {
            id: self.id.clone(),
        })
    }
}

#[derive(Deserialize)]
struct RawClaim {
    text: String,
    confidence: f64,
    #[serde(default)]
    valid: Option<bool>,
    #[serde(default)]
    rationale: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    #[serde(default)]
    group: Option<String>,
    valid: Option<bool>,
    #[serde(default)]
    confidence: Option<f64>,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    claims: Vec<RawClaim>,
    #[serde(default)]
    meta: BTreeMap<String, Value>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

fn meta_string(v: Value) -> String {
    match v {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

/// Parses a single JSONL line. `line` is 1-based and only used for errors.
pub fn parse_record(text: &str, line: usize) -> Result<PredictionRecord> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| Error::Json {
        line,
        message: e.to_string(),
    })?;
    let id = raw.id.ok_or(Error::MissingField { line, field: "id" })?;
    if id.is_empty() {
        return Err(Error::MissingField { line, field: "id" });
    }
    let valid = raw.valid.ok_or(Error::MissingField {
        line,
        field: "valid",
    })?;
    if let Some(p) = raw.confidence {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRangeAt {
                what: "confidence",
                line,
                value: p,
            });
        }
    }
    let mut claims = Vec::with_capacity(raw.claims.len());
    for c in raw.claims {
        if !(0.0..=1.0).contains(&c.confidence) {
            return Err(Error::OutOfRangeAt {
                what: "claim confidence",
                line,
                value: c.confidence,
            });
        }
        claims.push(ClaimRecord {
            text: c.text,
            confidence: c.confidence,
            valid: c.valid,
            rationale: c.rationale,
        });
    }
    let mut meta: BTreeMap<String, String> =
        raw.meta.into_iter().map(|(k, v)| (k, meta_string(v))).collect();
    for (k, v) in raw.extra {
        meta.insert(k, meta_string(v));
    }
    Ok(PredictionRecord {
        id,
        group: raw.group,
        valid,
        confidence: raw.confidence,
        answer: raw.answer,
        claims,
        meta,
    })
}

/// A labelled collection of prediction records with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub label: String,
    pub records: Vec<PredictionRecord>,
}

impl Dataset {
    /// Builds a dataset, checking id uniqueness and confidence ranges.
    pub fn from_records(label: impl Into<String>, records: Vec<PredictionRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.id.is_empty() {
                return Err(Error::MissingField {
                    line: 0,
                    field: "id",
                });
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            if let Some(p) = r.confidence {
                crate::error::check_unit("confidence", p)?;
            }
            for c in &r.claims {
                crate::error::check_unit("claim confidence", c.confidence)?;
            }
        }
        Ok(Dataset {
            label: label.into(),
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(confidence, valid)` pairs; fails on the first record without a confidence.
    pub fn scored(&self) -> Result<Vec<(f64, bool)>> {
        self.records
            .iter()
            .map(|r| Ok((r.confidence()?, r.valid)))
            .collect()
    }

    pub fn has_groups(&self) -> bool {
        self.records.iter().any(|r| r.group.is_some())
    }

    /// Replaces each record's confidence by the aggregate of its claim
    /// confidences. Records without claims are an error.
    pub fn with_aggregated_confidence(&self, how: Aggregation) -> Result<Dataset> {
        let mut out = self.clone();
        for r in &mut out.records {
            let ps: Vec<f64> = r.claims.iter().map(|c| c.confidence).collect();
            r.confidence = Some(how.apply(&ps)?);
        }
        Ok(out)
    }

    /// Flattens every labelled claim into its own record (`<id>#<index>`),
    /// for claim-level evaluation. Unlabelled claims are skipped.
    pub fn claim_level(&self) -> Dataset {
        let mut records = Vec::new();
        for r in &self.records {
            for (i, c) in r.claims.iter().enumerate() {
                let Some(valid) = c.valid else { continue };
                let mut rec = PredictionRecord::new(format!("{}#{}", r.id, i), valid, Some(c.confidence));
                rec.meta.insert("parent".to_owned(), r.id.clone());
                records.push(rec);
            }
        }
        Dataset {
            label: format!("{}:claims", self.label),
            records,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads JSONL from any buffered reader. Blank lines are skipped but still
/// counted for line numbers.
pub fn read_jsonl<R: BufRead>(reader: R, label: impl Into<String>) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, idx + 1)?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        records.push(rec);
    }
    Ok(Dataset {
        label: label.into(),
        records,
    })
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_jsonl(BufReader::new(file), path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationWarning {
    pub severity: Severity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub records: usize,
    pub with_confidence: usize,
    pub claims: usize,
    pub labeled_claims: usize,
    pub groups: usize,
    pub warnings: Vec<ValidationWarning>,
}

impl ValidationSummary {
    pub fn is_fatal(&self) -> bool {
        self.warnings.iter().any(|w| w.severity == Severity::Fatal)
    }
}

/// Meta key holding the raw claim-annotated response, when a producer ships it.
pub const RESPONSE_META_KEY: &str = "response";

/// Inspects a dataset without failing.
///
/// Warns on records lacking a confidence, groups of size one, records with
/// unlabelled claims, and records whose `meta.response` markup disagrees with
/// their `claims` list.
pub fn validate(ds: &Dataset) -> ValidationSummary {
    let mut warnings = Vec::new();
    let warn = |id: &str, message: String| ValidationWarning {
        severity: Severity::Warning,
        id: Some(id.to_owned()),
        message,
    };
    if ds.is_empty() {
        warnings.push(ValidationWarning {
            severity: Severity::Fatal,
            id: None,
            message: "dataset is empty; no metric can be computed".to_owned(),
        });
    }

    let mut group_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut claims = 0;
    let mut labeled_claims = 0;
    let mut with_confidence = 0;
    for r in &ds.records {
        if r.confidence.is_some() {
            with_confidence += 1;
        } else {
            warnings.push(warn(&r.id, "record has no response-level confidence".into()));
        }
        if let Some(g) = &r.group {
            *group_sizes.entry(g.as_str()).or_default() += 1;
        }
        claims += r.claims.len();
        let labeled = r.claims.iter().filter(|c| c.valid.is_some()).count();
        labeled_claims += labeled;
        if labeled < r.claims.len() {
            warnings.push(warn(
                &r.id,
                format!("{} of {} claims lack a valid label", r.claims.len() - labeled, r.claims.len()),
            ));
        }
        if let Some(text) = r.meta.get(RESPONSE_META_KEY) {
            match claims::markup_matches_claims(text, &r.claims) {
                Ok(true) => {}
                Ok(false) => warnings.push(warn(
                    &r.id,
                    "claim markup in meta.response disagrees with the claims list".into(),
                )),
                Err(e) => warnings.push(warn(&r.id, format!("meta.response markup: {e}"))),
            }
        }
    }
    for (g, n) in &group_sizes {
        if *n == 1 {
            warnings.push(ValidationWarning {
                severity: Severity::Warning,
                id: None,
                message: format!("group `{g}` has a single sample"),
            });
        }
    }
    ValidationSummary {
        records: ds.len(),
        with_confidence,
        claims,
        labeled_claims,
        groups: group_sizes.len(),
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<Dataset> {
        read_jsonl(s.as_bytes(), "test")
    }

    #[test]
    fn direct_field_mapping() {
        let ds = read(r#"{"id":"q1","valid":true,"confidence":0.9}"#).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.records[0].confidence, Some(0.9));
        assert!(ds.records[0].valid);
    }

    #[test]
    fn confidence_out_of_range_reports_line() {
        let err = read("{\"id\":\"q1\",\"valid\":true,\"confidence\":0.9}\n{\"id\":\"q2\",\"valid\":false,\"confidence\":1.7}")
            .unwrap_err();
        assert_eq!(err.to_string(), "confidence out of range at line 2: 1.7");
    }

    #[test]
    fn duplicate_id_is_named() {
        let err = read(
            "{\"id\":\"a\",\"valid\":true}\n{\"id\":\"b\",\"valid\":true}\n{\"id\":\"a\",\"valid\":false}",
        )
        .unwrap_err();
        assert!(matches!(&err, Error::DuplicateId(id) if id == "a"), "{err}");
    }

    #[test]
    fn missing_fields_and_bad_json() {
        assert!(matches!(
            read(r#"{"id":"x"}"#).unwrap_err(),
            Error::MissingField { field: "valid", line: 1 }
        ));
        assert!(matches!(
            read(r#"{"valid":true}"#).unwrap_err(),
            Error::MissingField { field: "id", .. }
        ));
        assert!(matches!(
            read("\n\n{\"id\":").unwrap_err(),
            Error::Json { line: 3, .. }
        ));
    }

    #[test]
    fn unknown_fields_go_to_meta() {
        let ds = read(r#"{"id":"q","valid":false,"model":"m1","t":0.3,"meta":{"bench":"aime"}}"#).unwrap();
        let meta = &ds.records[0].meta;
        assert_eq!(meta["model"], "m1");
        assert_eq!(meta["t"], "0.3");
        assert_eq!(meta["bench"], "aime");
    }

    #[test]
    fn claims_are_parsed_and_range_checked() {
        let ds = read(r#"{"id":"q","valid":true,"claims":[{"text":"a","confidence":0.5,"valid":true},{"text":"b","confidence":0.25}]}"#)
            .unwrap();
        assert_eq!(ds.records[0].claims.len(), 2);
        assert_eq!(ds.records[0].claims[1].valid, None);
        let err = read(r#"{"id":"q","valid":true,"claims":[{"text":"a","confidence":-0.1}]}"#).unwrap_err();
        assert!(matches!(err, Error::OutOfRangeAt { what: "claim confidence", .. }));
    }

    #[test]
    fn blank_lines_are_skipped() {
        let ds = read("\n{\"id\":\"a\",\"valid\":true}\n\n{\"id\":\"b\",\"valid\":false}\n").unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn validate_counts_missing_confidence() {
        let records = (0..10)
            .map(|i| PredictionRecord::new(format!("r{i}"), i % 2 == 0, if i < 2 { None } else { Some(0.5) }))
            .collect();
        let ds = Dataset::from_records("x", records).unwrap();
        let s = validate(&ds);
        assert_eq!(s.records, 10);
        assert_eq!(s.warnings.len(), 2);
        assert!(!s.is_fatal());
    }

    #[test]
    fn validate_empty_is_fatal() {
        let s = validate(&Dataset::default());
        assert_eq!(s.records, 0);
        assert!(s.is_fatal());
    }

    #[test]
    fn validate_fully_labelled_claims() {
        let mut r = PredictionRecord::new("a", true, Some(0.9));
        r.claims = vec![
            ClaimRecord { text: "x".into(), confidence: 0.9, valid: Some(true), rationale: None },
            ClaimRecord { text: "y".into(), confidence: 0.8, valid: Some(false), rationale: None },
        ];
        let s = validate(&Dataset::from_records("x", vec![r]).unwrap());
        assert_eq!(s.labeled_claims, 2);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn validate_flags_singleton_groups_and_markup_mismatch() {
        let mut a = PredictionRecord::new("a", true, Some(0.9));
        a.group = Some("g1".into());
        a.claims = vec![ClaimRecord { text: "x".into(), confidence: 0.9, valid: Some(true), rationale: None }];
        a.meta.insert(RESPONSE_META_KEY.into(), r#"<claim confidence="0.4">x</claim>"#.into());
        let s = validate(&Dataset::from_records("x", vec![a]).unwrap());
        assert_eq!(s.groups, 1);
        assert_eq!(s.warnings.len(), 2);
    }

    #[test]
    fn aggregated_and_claim_level_views() {
        let mut r = PredictionRecord::new("a", false, None);
        r.claims = vec![
            ClaimRecord { text: "x".into(), confidence: 0.5, valid: Some(true), rationale: None },
            ClaimRecord { text: "y".into(), confidence: 0.4, valid: None, rationale: None },
        ];
        let ds = Dataset::from_records("x", vec![r]).unwrap();
        let prod = ds.with_aggregated_confidence(Aggregation::Product).unwrap();
        assert_eq!(prod.records[0].confidence, Some(0.2));
        let claims = ds.claim_level();
        assert_eq!(claims.len(), 1);
        assert_eq!(claims.records[0].id, "a#0");
    }
}
