//! Behavioral calibration toolkit.
//!
//! Tools for training and evaluating models that answer only when their
//! stated confidence clears a user's risk threshold:
//!
//! * [`model`] — prediction records, claim lists and JSONL ingestion;
//! * [`claims`] — inline claim markup and claim-to-response aggregation;
//! * [`rewards`] — threshold rewards and risk-prior integrated scoring rules;
//! * [`metrics`] — smooth ECE, Brier, NLL, AUC and abstention metrics;
//! * [`behavior`] — risk sweeps, SNR-gain and objective checks;
//! * [`simulate`] — synthetic agents with known ground truth;
//! * [`tts`] — confidence-based test-time scaling;
//! * [`cli`] — the `behavcal` command line.

pub mod behavior;
pub mod claims;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rewards;
pub mod simulate;
pub mod tts;

pub use error::{Error, Result};
pub use model::{ClaimRecord, Dataset, PredictionRecord};
pub use rewards::{decide, Action, RiskPrior};
