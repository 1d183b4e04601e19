//! Crate-wide error type.
//!
//! Variants fall into three families that the CLI maps onto exit codes:
//! usage errors, data errors (bad input files or records) and numeric-domain
//! errors (arguments outside the range an operation is defined on).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed JSON at line {line}: {message}")]
    Json { line: usize, message: String },

    #[error("missing required field `{field}` at line {line}")]
    MissingField { line: usize, field: &'static str },

    #[error("{what} out of range at line {line}: {value}")]
    OutOfRangeAt {
        what: &'static str,
        line: usize,
        value: f64,
    },

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}` has no confidence")]
    MissingConfidence { id: String },

    #[error("record `{id}` has no answer")]
    MissingAnswer { id: String },

    #[error("{kind} at offset {offset}")]
    Markup { kind: MarkupErrorKind, offset: usize },

    #[error("cannot aggregate an empty claim list")]
    EmptyClaims,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("AUC undefined: dataset contains only {0} records")]
    SingleClass(&'static str),

    #[error("dataset has no grouped records; test-time scaling needs `group` keys")]
    NoGroups,

    #[error("group `{group}` has {size} samples, fewer than k = {k}")]
    GroupTooSmall { group: String, size: usize, k: usize },

    #[error("too many draws to enumerate exhaustively ({0})")]
    EnumerationTooLarge(u128),

    #[error("invalid risk prior: {0}")]
    InvalidPrior(String),

    #[error("invalid agent spec: {0}")]
    InvalidSpec(String),

    #[error("numeric domain error: {0}")]
    Domain(String),

    #[error("usage: {0}")]
    Usage(String),
}

/// Why a claim markup document failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkupErrorKind {
    UnclosedTag,
    NestedClaim,
    UnmatchedClose,
    MissingConfidence,
    NonNumericConfidence,
    ConfidenceOutOfRange,
}

impl std::fmt::Display for MarkupErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MarkupErrorKind::UnclosedTag => "unclosed claim",
            MarkupErrorKind::NestedClaim => "nested claim",
            MarkupErrorKind::UnmatchedClose => "unmatched </claim>",
            MarkupErrorKind::MissingConfidence => "claim without confidence attribute",
            MarkupErrorKind::NonNumericConfidence => "non-numeric claim confidence",
            MarkupErrorKind::ConfidenceOutOfRange => "claim confidence out of range",
        };
        f.write_str(s)
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for this error: 1 usage, 2 data, 3 numeric domain.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Domain(_) | Error::InvalidPrior(_) | Error::InvalidSpec(_) => 3,
            _ => 2,
        }
    }
}

/// Checks that `x` is a finite probability.
pub(crate) fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {x}")))
    }
}
