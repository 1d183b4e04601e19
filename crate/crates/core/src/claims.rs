//! Claim markup parsing and claim-confidence aggregation.
//!
//! A claim is written inline as
//!
//! ```text
//! <claim confidence="0.85" rationale="why this might be wrong">x = 3</claim>
//! ```
//!
//! `confidence` is required and must lie in `[0, 1]`; `rationale` is optional
//! and other attributes are ignored. Claims may not nest. All offsets are byte
//! offsets into the UTF-8 input.

use std::str::FromStr;

use crate::error::{Error, MarkupErrorKind, Result};
use crate::model::ClaimRecord;

const OPEN: &str = "<claim";
const CLOSE: &str = "</claim>";

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimSpan {
    /// Offset of the `<` opening the tag.
    pub start: usize,
    /// Offset one past the closing `</claim>`.
    pub end: usize,
    pub claim: ClaimRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimMarkupDoc {
    pub raw: String,
    pub spans: Vec<ClaimSpan>,
}

impl ClaimMarkupDoc {
    pub fn confidences(&self) -> Vec<f64> {
        self.spans.iter().map(|s| s.claim.confidence).collect()
    }

    pub fn claims(&self) -> impl Iterator<Item = &ClaimRecord> {
        self.spans.iter().map(|s| &s.claim)
    }
}

fn markup_err(kind: MarkupErrorKind, offset: usize) -> Error {
    Error::Markup { kind, offset }
}

/// True when an opening claim tag (not e.g. `<claims>`) starts at `i`.
fn opens_at(text: &str, i: usize) -> bool {
    text[i..].starts_with(OPEN)
        && text[i + OPEN.len()..]
            .chars()
            .next()
            .is_some_and(|c| c == '>' || c.is_ascii_whitespace())
}

/// Next opening or closing claim tag at or after `from`.
fn next_tag(text: &str, from: usize) -> Option<(usize, bool)> {
    let mut i = from;
    while let Some(rel) = text[i..].find('<') {
        let at = i + rel;
        if text[at..].starts_with(CLOSE) {
            return Some((at, false));
        }
        if opens_at(text, at) {
            return Some((at, true));
        }
        i = at + 1;
    }
    None
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_owned();
    }
    s.replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&#39;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
}

/// Parses the attribute list of an opening tag starting at `tag_start`.
/// Returns the attributes and the offset just past the closing `>`.
fn parse_attributes(text: &str, tag_start: usize) -> Result<(Vec<(String, String)>, usize)> {
    let bytes = text.as_bytes();
    let mut i = tag_start + OPEN.len();
    let mut attrs = Vec::new();
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            return Err(markup_err(MarkupErrorKind::UnclosedTag, tag_start));
        }
        if bytes[i] == b'>' {
            return Ok((attrs, i + 1));
        }
        let name_start = i;
        while i < bytes.len() && !matches!(bytes[i], b'=' | b'>') && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let name = text[name_start..i].to_ascii_lowercase();
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'=' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i >= bytes.len() {
                return Err(markup_err(MarkupErrorKind::UnclosedTag, tag_start));
            }
            let value = if bytes[i] == b'"' || bytes[i] == b'\'' {
                let quote = bytes[i];
                let vstart = i + 1;
                let Some(rel) = bytes[vstart..].iter().position(|&b| b == quote) else {
                    return Err(markup_err(MarkupErrorKind::UnclosedTag, tag_start));
                };
                i = vstart + rel + 1;
                &text[vstart..vstart + rel]
            } else {
                let vstart = i;
                while i < bytes.len() && bytes[i] != b'>' && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                &text[vstart..i]
            };
            attrs.push((name, decode_entities(value)));
        } else {
            attrs.push((name, String::new()));
        }
    }
}

/// Extracts every claim element from a model response, in document order.
pub fn parse_claims(text: &str) -> Result<ClaimMarkupDoc> {
    let mut spans = Vec::new();
    let mut pos = 0;
    while let Some((at, is_open)) = next_tag(text, pos) {
        if !is_open {
            return Err(markup_err(MarkupErrorKind::UnmatchedClose, at));
        }
        let (attrs, body_start) = parse_attributes(text, at)?;
        let (body_end, is_open) =
            next_tag(text, body_start).ok_or(markup_err(MarkupErrorKind::UnclosedTag, at))?;
        if is_open {
            return Err(markup_err(MarkupErrorKind::NestedClaim, body_end));
        }

        let mut confidence = None;
        let mut rationale = None;
        for (name, value) in attrs {
            match name.as_str() {
                "confidence" => confidence = Some(value),
                "rationale" => rationale = Some(value),
                _ => {}
            }
        }
        let confidence = confidence.ok_or(markup_err(MarkupErrorKind::MissingConfidence, at))?;
        let confidence: f64 = confidence
            .trim()
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite())
            .ok_or(markup_err(MarkupErrorKind::NonNumericConfidence, at))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(markup_err(MarkupErrorKind::ConfidenceOutOfRange, at));
        }

        let end = body_end + CLOSE.len();
        spans.push(ClaimSpan {
            start: at,
            end,
            claim: ClaimRecord {
                text: text[body_start..body_end].to_owned(),
                confidence,
                valid: None,
                rationale,
            },
        });
        pos = end;
    }
    Ok(ClaimMarkupDoc {
        raw: text.to_owned(),
        spans,
    })
}

fn check_confidences(ps: &[f64]) -> Result<()> {
    if ps.is_empty() {
        return Err(Error::EmptyClaims);
    }
    for &p in ps {
        crate::error::check_unit("claim confidence", p)?;
    }
    Ok(())
}

/// Product of claim confidences: the response is correct iff every claim is,
/// with claims treated as independent.
pub fn aggregate_product(ps: &[f64]) -> Result<f64> {
    check_confidences(ps)?;
    Ok(ps.iter().product())
}

/// Confidence of the weakest claim.
pub fn aggregate_min(ps: &[f64]) -> Result<f64> {
    check_confidences(ps)?;
    Ok(ps.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Product,
    Min,
}

impl Aggregation {
    pub fn apply(self, ps: &[f64]) -> Result<f64> {
        match self {
            Aggregation::Product => aggregate_product(ps),
            Aggregation::Min => aggregate_min(ps),
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" | "prod" => Ok(Aggregation::Product),
            "min" | "minimum" => Ok(Aggregation::Min),
            other => Err(Error::Usage(format!("unknown aggregation `{other}` (expected product or min)"))),
        }
    }
}

/// Whether the claims marked up in `text` carry the same confidences as the
/// listed claims, compared count-wise and through both aggregates.
pub fn markup_matches_claims(text: &str, listed: &[ClaimRecord]) -> Result<bool> {
    let parsed = parse_claims(text)?.confidences();
    let listed: Vec<f64> = listed.iter().map(|c| c.confidence).collect();
    if parsed.len() != listed.len() {
        return Ok(false);
    }
    if parsed.is_empty() {
        return Ok(true);
    }
    for how in [Aggregation::Product, Aggregation::Min] {
        if (how.apply(&parsed)? - how.apply(&listed)?).abs() > 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}
