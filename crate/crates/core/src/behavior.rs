//! Risk sweeps: answer/abstain behaviour of a confidence-thresholding policy
//! across risk thresholds `t`, the SNR family of hallucination metrics, and
//! checks of the four behavioural-calibration objectives.

use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rewards::{decide, Action};

pub const DEFAULT_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid(Vec<f64>);

impl ThresholdGrid {
    /// `points` evenly spaced thresholds from 0 to 1 inclusive.
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::domain(format!("threshold grid needs at least 2 points, got {points}")));
        }
        Ok(ThresholdGrid(
            (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
        ))
    }

    pub fn custom(ts: Vec<f64>) -> Result<Self> {
        if ts.is_empty() || ts.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::domain("thresholds must be non-empty and lie in [0, 1]"));
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("thresholds must be strictly increasing"));
        }
        Ok(ThresholdGrid(ts))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LogBase {
    #[serde(rename = "e")]
    Natural,
    #[serde(rename = "10")]
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "ln" | "natural" => Ok(LogBase::Natural),
            "10" | "log10" => Ok(LogBase::Ten),
            other => Err(Error::Usage(format!("unknown log base `{other}` (expected e or 10)"))),
        }
    }
}

/// Behaviour curves on a threshold grid. `tp[i]` / `fn_rate[i]` are `None`
/// where no record answers / abstains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSweep {
    pub n: usize,
    pub grid: Vec<f64>,
    pub acc: Vec<f64>,
    pub hal: Vec<f64>,
    pub abs: Vec<f64>,
    pub tp: Vec<Option<f64>>,
    #[serde(rename = "fn")]
    pub fn_rate: Vec<Option<f64>>,
}

impl RiskSweep {
    /// Half a record: `1 / (2n)`.
    pub fn default_epsilon_h(&self) -> f64 {
        0.5 / self.n as f64
    }

    fn index_of(&self, t: f64) -> Result<usize> {
        self.grid
            .iter()
            .position(|&g| (g - t).abs() <= 1e-9)
            .ok_or_else(|| Error::domain(format!("threshold {t} is not on the sweep grid")))
    }

    /// Linear interpolation of `curve` at `t` (inside the grid range).
    fn interpolate(&self, curve: &[f64], t: f64) -> f64 {
        let i = self.grid.partition_point(|&g| g <= t);
        if i == 0 {
            return curve[0];
        }
        if i == self.grid.len() {
            return curve[i - 1];
        }
        let (t0, t1) = (self.grid[i - 1], self.grid[i]);
        let w = (t - t0) / (t1 - t0);
        curve[i - 1] + w * (curve[i] - curve[i - 1])
    }

    /// Trapezoid average of a curve over `[lo, hi]`, written as
    /// `c(lo) + mean(c - c(lo))` so constant curves come out exact.
    fn interval_mean(&self, curve: &[f64], lo: f64, hi: f64) -> f64 {
        let base = self.interpolate(curve, lo);
        let mut pts = vec![(lo, 0.0)];
        for (i, &t) in self.grid.iter().enumerate() {
            if t > lo && t < hi {
                pts.push((t, curve[i] - base));
            }
        }
        pts.push((hi, self.interpolate(curve, hi) - base));
        let area: f64 = pts
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum();
        base + area / (hi - lo)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["t", "acc", "hal", "abs", "tp", "fn"]).map_err(io)?;
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_owned(), |v| v.to_string());
        for i in 0..self.grid.len() {
            out.write_record([
                self.grid[i].to_string(),
                self.acc[i].to_string(),
                self.hal[i].to_string(),
                self.abs[i].to_string(),
                opt(self.tp[i]),
                opt(self.fn_rate[i]),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Applies [`decide`] to every record at every grid threshold.
pub fn sweep(ds: &Dataset, grid: &ThresholdGrid) -> Result<RiskSweep> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scores = ds.scored()?;
    let n = scores.len();
    let nf = n as f64;
    let k = grid.values().len();
    let mut out = RiskSweep {
        n,
        grid: grid.values().to_vec(),
        acc: Vec::with_capacity(k),
        hal: Vec::with_capacity(k),
        abs: Vec::with_capacity(k),
        tp: Vec::with_capacity(k),
        fn_rate: Vec::with_capacity(k),
    };
    for &t in grid.values() {
        let (mut right, mut wrong, mut held_right) = (0usize, 0usize, 0usize);
        for &(p, valid) in &scores {
            match (decide(p, t), valid) {
                (Action::Ans, true) => right += 1,
                (Action::Ans, false) => wrong += 1,
                (Action::Abs, true) => held_right += 1,
                (Action::Abs, false) => {}
            }
        }
        let answered = right + wrong;
        let held = n - answered;
        out.acc.push(right as f64 / nf);
        out.hal.push(wrong as f64 / nf);
        out.abs.push(held as f64 / nf);
        out.tp.push((answered > 0).then(|| right as f64 / answered as f64));
        out.fn_rate.push((held > 0).then(|| held_right as f64 / held as f64));
    }
    Ok(out)
}

/// `Acc(t) / max(Hal(t), ε_h)` at a grid threshold.
pub fn snr_point(sweep: &RiskSweep, t: f64, epsilon_h: f64) -> Result<f64> {
    let i = sweep.index_of(t)?;
    Ok(sweep.acc[i] / sweep.hal[i].max(epsilon_h))
}

/// `∫Acc / max(∫Hal, ε_h·(hi − lo))` over `[lo, hi]`, trapezoid rule on the
/// sweep grid with linear interpolation at unaligned endpoints.
pub fn snr_interval(sweep: &RiskSweep, lo: f64, hi: f64, epsilon_h: f64) -> Result<f64> {
    let (first, last) = (sweep.grid[0], sweep.grid[sweep.grid.len() - 1]);
    if !(lo >= first && hi <= last && lo < hi) {
        return Err(Error::domain(format!(
            "interval [{lo}, {hi}] must be non-degenerate and inside [{first}, {last}]"
        )));
    }
    let acc = sweep.interval_mean(&sweep.acc, lo, hi);
    let hal = sweep.interval_mean(&sweep.hal, lo, hi);
    Ok(acc / hal.max(epsilon_h))
}

/// `log(SNR([0, 1]) / SNR(0))`. A policy with no correct answers at all has
/// no signal at either end and scores 0.
pub fn snr_gain(sweep: &RiskSweep, epsilon_h: f64, base: LogBase) -> Result<f64> {
    if sweep.grid[0] != 0.0 || sweep.grid[sweep.grid.len() - 1] != 1.0 {
        return Err(Error::domain("SNR gain needs a sweep covering [0, 1]"));
    }
    let over_spectrum = snr_interval(sweep, 0.0, 1.0, epsilon_h)?;
    let at_zero = snr_point(sweep, 0.0, epsilon_h)?;
    if at_zero == 0.0 {
        return Ok(0.0);
    }
    Ok(base.log(over_spectrum / at_zero))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveDiagnostics {
    pub abs_at_zero: f64,
    pub abs_at_one: f64,
    pub abs_monotone: bool,
    /// Largest increase of `Abs` between neighbouring grid thresholds.
    pub max_abs_step: f64,
    pub acc_at_zero: f64,
    pub baseline_acc: f64,
    pub hal_at_one: f64,
    pub snr_gain: f64,
    /// `min (TP(t) − t)` over thresholds where TP is defined.
    pub worst_tp_margin: Option<f64>,
    /// `max (FN(t) − t)` over thresholds where FN is defined.
    pub worst_fn_margin: Option<f64>,
    pub tp_violations: Vec<f64>,
    pub fn_violations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveReport {
    pub tolerance: f64,
    pub adaptive_risk: bool,
    pub accuracy_preservation: bool,
    pub hallucination_reduction: bool,
    pub quantitative_calibration: bool,
    pub diagnostics: ObjectiveDiagnostics,
}

impl ObjectiveReport {
    pub fn all_pass(&self) -> bool {
        self.adaptive_risk && self.accuracy_preservation && self.hallucination_reduction && self.quantitative_calibration
    }
}

/// [`check_objectives_with`] using the sweep's default `ε_h`.
pub fn check_objectives(sweep: &RiskSweep, baseline_acc: f64, tolerance: f64) -> Result<ObjectiveReport> {
    check_objectives_with(sweep, baseline_acc, tolerance, sweep.default_epsilon_h())
}

/// Evaluates the four objectives on a sweep over `[0, 1]`.
///
/// * adaptive risk: `Abs` is non-decreasing, covers at least `1 − tol` of the
///   range from `Abs(0)` to 1, and no single grid step carries more than half
///   of that swing (a lone jump means the policy ignores `t`);
/// * accuracy preservation: `Acc(0) ≥ baseline − tol`;
/// * hallucination reduction: `Hal(1) ≤ tol` and a positive SNR gain;
/// * quantitative calibration: `TP(t) ≥ t − tol` and `FN(t) ≤ t + tol`
///   wherever they are defined.
pub fn check_objectives_with(
    sweep: &RiskSweep,
    baseline_acc: f64,
    tolerance: f64,
    epsilon_h: f64,
) -> Result<ObjectiveReport> {
    if !(0.0..1.0).contains(&tolerance) {
        return Err(Error::domain(format!("tolerance must lie in [0, 1), got {tolerance}")));
    }
    let last = sweep.grid.len() - 1;
    let abs0 = sweep.abs[0];
    let abs1 = sweep.abs[last];
    let abs_monotone = sweep.abs.windows(2).all(|w| w[1] >= w[0]);
    let max_abs_step = sweep
        .abs
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    let span = abs1 - abs0;
    let adaptive_risk = abs_monotone
        && span > 0.0
        && span >= (1.0 - tolerance) * (1.0 - abs0)
        && max_abs_step <= 0.5 * span;

    let acc0 = sweep.acc[0];
    let accuracy_preservation = acc0 >= baseline_acc - tolerance;

    let gain = snr_gain(sweep, epsilon_h, LogBase::Natural)?;
    let hal1 = sweep.hal[last];
    let hallucination_reduction = hal1 <= tolerance && gain > 0.0;

    let mut tp_violations = Vec::new();
    let mut fn_violations = Vec::new();
    let mut worst_tp: Option<f64> = None;
    let mut worst_fn: Option<f64> = None;
    for (i, &t) in sweep.grid.iter().enumerate() {
        if let Some(tp) = sweep.tp[i] {
            worst_tp = Some(worst_tp.map_or(tp - t, |w| w.min(tp - t)));
            if tp < t - tolerance {
                tp_violations.push(t);
            }
        }
        if let Some(f) = sweep.fn_rate[i] {
            worst_fn = Some(worst_fn.map_or(f - t, |w| w.max(f - t)));
            if f > t + tolerance {
                fn_violations.push(t);
            }
        }
    }
    let quantitative_calibration = tp_violations.is_empty() && fn_violations.is_empty();

    Ok(ObjectiveReport {
        tolerance,
        adaptive_risk,
        accuracy_preservation,
        hallucination_reduction,
        quantitative_calibration,
        diagnostics: ObjectiveDiagnostics {
            abs_at_zero: abs0,
            abs_at_one: abs1,
            abs_monotone,
            max_abs_step,
            acc_at_zero: acc0,
            baseline_acc,
            hal_at_one: hal1,
            snr_gain: gain,
            worst_tp_margin: worst_tp,
            worst_fn_margin: worst_fn,
            tp_violations,
            fn_violations,
        },
    })
}
