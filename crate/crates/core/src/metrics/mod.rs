//! Scalar calibration and discrimination metrics over a [`Dataset`].

mod smooth;

pub use smooth::{
    calibration_diagram, reflected_kernel, smece, smece_at_bandwidth, CalibrationDiagram, Smece,
    SmeceConfig,
};

pub(crate) use smooth::csv_io;

use serde::Serialize;

use crate::behavior::{self, LogBase, ThresholdGrid};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rewards::{decide, Action};

pub const DEFAULT_NLL_FLOOR: f64 = 1e-6;

fn nonempty_scores(ds: &Dataset) -> Result<Vec<(f64, bool)>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ds.scored()
}

fn indicator(valid: bool) -> f64 {
    if valid {
        1.0
    } else {
        0.0
    }
}

/// Mean squared error between confidence and the 0/1 outcome.
pub fn brier_score(ds: &Dataset) -> Result<f64> {
    let scores = nonempty_scores(ds)?;
    let total: f64 = scores.iter().map(|&(p, v)| (p - indicator(v)).powi(2)).sum();
    Ok(total / scores.len() as f64)
}

/// Mean negative log-likelihood of the outcomes, with `p` clipped to
/// `[floor, 1 - floor]`.
pub fn nll(ds: &Dataset, floor: f64) -> Result<f64> {
    if !(floor > 0.0 && floor < 0.5) {
        return Err(Error::domain(format!("nll floor must lie in (0, 0.5), got {floor}")));
    }
    let scores = nonempty_scores(ds)?;
    let total: f64 = scores
        .iter()
        .map(|&(p, v)| {
            let p = p.clamp(floor, 1.0 - floor);
            -(if v { p } else { 1.0 - p }).ln()
        })
        .sum();
    Ok(total / scores.len() as f64)
}

/// Probability that a correct response carries a higher confidence than an
/// incorrect one, ties counting one half. Computed from average ranks.
pub fn confidence_auc(ds: &Dataset) -> Result<f64> {
    let mut scores = nonempty_scores(ds)?;
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::SingleClass("incorrect"));
    }
    if n_neg == 0 {
        return Err(Error::SingleClass("correct"));
    }
    scores.sort_by(|a, b| a.0.total_cmp(&b.0));

    // sum of 1-based average ranks of the correct responses
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < scores.len() {
        let mut j = i;
        while j < scores.len() && scores[j].0 == scores[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_tie = scores[i..j].iter().filter(|s| s.1).count();
        rank_sum += avg_rank * pos_in_tie as f64;
        i = j;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Fraction of responses where answering at `t = 0.5` was the right call:
/// answered and correct, or abstained and incorrect.
pub fn abstention_accuracy(ds: &Dataset) -> Result<f64> {
    let scores = nonempty_scores(ds)?;
    let good = scores
        .iter()
        .filter(|&&(p, v)| (decide(p, 0.5) == Action::Ans) == v)
        .count();
    Ok(good as f64 / scores.len() as f64)
}

/// Accuracy with no abstention.
pub fn predictive_accuracy(ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let good = ds.records.iter().filter(|r| r.valid).count();
    Ok(good as f64 / ds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricOptions {
    pub nll_floor: f64,
    /// Zero-hallucination regulariser for SNR; `None` means `1/(2n)`.
    pub epsilon_h: Option<f64>,
    pub grid_points: usize,
    pub log_base: LogBase,
    pub smece: SmeceConfig,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            nll_floor: DEFAULT_NLL_FLOOR,
            epsilon_h: None,
            grid_points: behavior::DEFAULT_GRID_POINTS,
            log_base: LogBase::Natural,
            smece: SmeceConfig::default(),
        }
    }
}

/// The metric battery for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub n: usize,
    pub smece: f64,
    pub brier: f64,
    pub nll: f64,
    /// `None` when the dataset holds a single outcome class.
    pub auc: Option<f64>,
    pub snr_gain: f64,
    pub abstention_accuracy: f64,
    pub predictive_accuracy: f64,
}

impl MetricReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.serialize(self).map_err(smooth::csv_io)?;
        out.flush()?;
        Ok(())
    }
}

pub fn metric_report(ds: &Dataset, opts: &MetricOptions) -> Result<(MetricReport, CalibrationDiagram)> {
    let (sm, diagram) = smece(ds, &opts.smece)?;
    let auc = match confidence_auc(ds) {
        Ok(a) => Some(a),
        Err(Error::SingleClass(_)) => None,
        Err(e) => return Err(e),
    };
    let sweep = behavior::sweep(ds, &ThresholdGrid::uniform(opts.grid_points)?)?;
    let eps = opts.epsilon_h.unwrap_or_else(|| sweep.default_epsilon_h());
    let report = MetricReport {
        n: ds.len(),
        smece: sm.value,
        brier: brier_score(ds)?,
        nll: nll(ds, opts.nll_floor)?,
        auc,
        snr_gain: behavior::snr_gain(&sweep, eps, opts.log_base)?,
        abstention_accuracy: abstention_accuracy(ds)?,
        predictive_accuracy: predictive_accuracy(ds)?,
    };
    Ok((report, diagram))
}
