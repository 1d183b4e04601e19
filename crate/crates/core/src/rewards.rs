//! Reward functions for answer/abstain decisions under a risk threshold `t`.
//!
//! * [`reward_explicit`]: +1 correct, 0 abstain, `-t/(1-t)` wrong.
//! * [`reward_bounded`]: +1 correct, `2t-1` abstain, -1 wrong.
//! * [`reward_integrated`]: the bounded reward averaged over a prior on `t`,
//!   given a stated confidence `p` and the rule "abstain iff `p < t`".
//!   With CDF `u` this is `2·valid·u(p) + 2∫_p^1 t du(t) − 1`.
//! * [`reward_brier`] and [`reward_ce`]: closed forms of the integrated reward
//!   for the uniform and truncated Beta(0,0) priors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};

/// Default truncation for the Beta(0,0) prior and the CE reward.
pub const DEFAULT_CE_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Ans,
    Abs,
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ans" | "answer" => Ok(Action::Ans),
            "abs" | "abstain" | "idk" => Ok(Action::Abs),
            other => Err(Error::Usage(format!("unknown action `{other}` (expected ans or abs)"))),
        }
    }
}

/// The abstention rule shared by every module: abstain iff `p < t`, so a
/// confidence exactly at the threshold answers.
#[inline]
pub fn decide(p: f64, t: f64) -> Action {
    if p < t {
        Action::Abs
    } else {
        Action::Ans
    }
}

pub fn reward_explicit(action: Action, valid: bool, t: f64) -> Result<f64> {
    check_unit("risk threshold", t)?;
    match (action, valid) {
        (Action::Abs, _) => Ok(0.0),
        (Action::Ans, true) => Ok(1.0),
        (Action::Ans, false) if t >= 1.0 => Err(Error::domain(
            "wrong-answer penalty t/(1-t) is unbounded at t = 1",
        )),
        (Action::Ans, false) => Ok(-t / (1.0 - t)),
    }
}

pub fn reward_bounded(action: Action, valid: bool, t: f64) -> Result<f64> {
    check_unit("risk threshold", t)?;
    Ok(match (action, valid) {
        (Action::Abs, _) => 2.0 * t - 1.0,
        (Action::Ans, true) => 1.0,
        (Action::Ans, false) => -1.0,
    })
}

/// Expected [`reward_explicit`] of answering for an agent whose belief of
/// being correct is `p`. Abstaining always yields 0.
pub fn expected_explicit_reward(p: f64, t: f64) -> Result<f64> {
    check_unit("belief", p)?;
    let win = reward_explicit(Action::Ans, true, t)?;
    let loss = reward_explicit(Action::Ans, false, t)?;
    Ok(p * win + (1.0 - p) * loss)
}

/// Expected-reward-maximising action under [`reward_explicit`].
///
/// Answering pays `p - (1-p)·t/(1-t)`; multiplying by `1 - t > 0` gives the
/// comparison `p·(1-t) ≥ (1-p)·t` used here, which is exact at `p = t`.
pub fn optimal_threshold_policy(p: f64, t: f64) -> Result<Action> {
    check_unit("belief", p)?;
    check_unit("risk threshold", t)?;
    if t >= 1.0 {
        return Err(Error::domain("explicit reward is undefined at t = 1"));
    }
    Ok(if p * (1.0 - t) >= (1.0 - p) * t {
        Action::Ans
    } else {
        Action::Abs
    })
}

/// `2p·valid − p²`, the integrated reward under a uniform prior.
#[inline]
pub fn reward_brier(valid: bool, p: f64) -> f64 {
    let v = if valid { 1.0 } else { 0.0 };
    2.0 * p * v - p * p
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(Error::domain(format!("epsilon must lie in (0, 0.5), got {epsilon}")))
    }
}

/// Cross-entropy style reward from the Beta(0,0) prior truncated to
/// `(ε, 1-ε)`. `p` is clipped to that interval first.
pub fn reward_ce(valid: bool, p: f64, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let clipped = p.clamp(epsilon, 1.0 - epsilon);
    let norm = ((1.0 - epsilon) / epsilon).ln();
    let raw = if valid {
        (clipped / epsilon).ln()
    } else {
        ((1.0 - clipped) / (1.0 - epsilon)).ln()
    };
    Ok(raw / norm)
}

/// A tabulated CDF on a strictly increasing grid of thresholds, linearly
/// interpolated between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf {
    t: Vec<f64>,
    cdf: Vec<f64>,
    /// `tail[i] = ∫_{t_i}^{t_last} s du(s)`.
    tail: Vec<f64>,
}

impl TabulatedCdf {
    pub fn new(t: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidPrior(m));
        if t.len() != cdf.len() {
            return bad("threshold and cdf columns differ in length".into());
        }
        if t.len() < 2 {
            return bad("a tabulated prior needs at least two points".into());
        }
        if t.iter().chain(&cdf).any(|x| !x.is_finite()) {
            return bad("non-finite value in table".into());
        }
        if t[0] < 0.0 || t[t.len() - 1] > 1.0 {
            return bad("thresholds must lie in [0, 1]".into());
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return bad("thresholds must be strictly increasing".into());
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return bad("cdf must be non-decreasing".into());
        }
        if cdf[0] != 0.0 || cdf[cdf.len() - 1] != 1.0 {
            return bad(format!(
                "cdf must start at 0 and end at 1 (got {} .. {})",
                cdf[0],
                cdf[cdf.len() - 1]
            ));
        }
        let mut tail = vec![0.0; t.len()];
        for i in (0..t.len() - 1).rev() {
            tail[i] = tail[i + 1] + (cdf[i + 1] - cdf[i]) * 0.5 * (t[i] + t[i + 1]);
        }
        Ok(TabulatedCdf { t, cdf, tail })
    }

    /// Samples a CDF on `n` evenly spaced thresholds over `[0, 1]`.
    pub fn from_fn(n: usize, cdf: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidPrior("need at least two grid points".into()));
        }
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let u = t.iter().map(|&x| cdf(x)).collect();
        TabulatedCdf::new(t, u)
    }

    /// Reads `t,cdf` rows. Lines starting with `#` and a non-numeric header
    /// row are skipped.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| Error::InvalidPrior(e.to_string()))?;
        let (mut t, mut u) = (Vec::new(), Vec::new());
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::InvalidPrior(e.to_string()))?;
            if row.len() < 2 {
                return Err(Error::InvalidPrior(format!("row {} needs two columns", i + 1)));
            }
            match (row[0].parse::<f64>(), row[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    t.push(a);
                    u.push(b);
                }
                _ if i == 0 => continue,
                _ => return Err(Error::InvalidPrior(format!("row {} is not numeric", i + 1))),
            }
        }
        TabulatedCdf::new(t, u)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index `i` with `t[i] <= x < t[i+1]`, for `t[0] <= x < t[last]`.
    fn segment(&self, x: f64) -> usize {
        self.t.partition_point(|&s| s <= x) - 1
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let last = self.t.len() - 1;
        if x < self.t[0] {
            return 0.0;
        }
        if x >= self.t[last] {
            return 1.0;
        }
        let i = self.segment(x);
        let w = (x - self.t[i]) / (self.t[i + 1] - self.t[i]);
        self.cdf[i] + w * (self.cdf[i + 1] - self.cdf[i])
    }

    /// `∫_x^1 s du(s)`, exact for the piecewise-linear CDF.
    pub fn upper_moment(&self, x: f64) -> f64 {
        let last = self.t.len() - 1;
        if x < self.t[0] {
            return self.tail[0];
        }
        if x >= self.t[last] {
            return 0.0;
        }
        let i = self.segment(x);
        let partial = (self.cdf[i + 1] - self.cdf(x)) * 0.5 * (x + self.t[i + 1]);
        partial + self.tail[i + 1]
    }
}

/// Distribution of the risk threshold `t`, through its CDF `u`.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskPrior {
    Uniform,
    /// Density proportional to `1/(t(1-t))` on `(ε, 1-ε)`.
    TruncatedBeta00 { epsilon: f64 },
    Tabulated(TabulatedCdf),
}

impl RiskPrior {
    pub fn beta00(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon).map_err(|e| Error::InvalidPrior(e.to_string()))?;
        Ok(RiskPrior::TruncatedBeta00 { epsilon })
    }

    /// Parses `uniform`, `beta00:EPS` or `table:PATH`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.eq_ignore_ascii_case("uniform") {
            return Ok(RiskPrior::Uniform);
        }
        if let Some(eps) = spec.strip_prefix("beta00:") {
            let eps: f64 = eps
                .parse()
                .map_err(|_| Error::InvalidPrior(format!("bad epsilon in `{spec}`")))?;
            return RiskPrior::beta00(eps);
        }
        if spec == "beta00" {
            return RiskPrior::beta00(DEFAULT_CE_EPSILON);
        }
        if let Some(path) = spec.strip_prefix("table:") {
            return Ok(RiskPrior::Tabulated(TabulatedCdf::from_csv_path(path)?));
        }
        Err(Error::InvalidPrior(format!(
            "unknown prior `{spec}` (expected uniform, beta00:EPS or table:PATH)"
        )))
    }

    /// `u(p) = P(t <= p)`: the prior mass of thresholds at which `p` answers.
    pub fn cdf(&self, p: f64) -> f64 {
        match self {
            RiskPrior::Uniform => p.clamp(0.0, 1.0),
            RiskPrior::TruncatedBeta00 { epsilon } => {
                let (e, c) = (*epsilon, p.clamp(*epsilon, 1.0 - *epsilon));
                let half_range = ((1.0 - e) / e).ln();
                ((c / (1.0 - c)).ln() + half_range) / (2.0 * half_range)
            }
            RiskPrior::Tabulated(tab) => tab.cdf(p),
        }
    }

    /// `∫_p^1 t du(t)`: the mean threshold over the abstention region, unnormalised.
    pub fn upper_moment(&self, p: f64) -> f64 {
        match self {
            RiskPrior::Uniform => {
                let p = p.clamp(0.0, 1.0);
                0.5 * (1.0 - p * p)
            }
            RiskPrior::TruncatedBeta00 { epsilon } => {
                let (e, c) = (*epsilon, p.clamp(*epsilon, 1.0 - *epsilon));
                ((1.0 - c) / e).ln() / (2.0 * ((1.0 - e) / e).ln())
            }
            RiskPrior::Tabulated(tab) => tab.upper_moment(p),
        }
    }
}

impl fmt::Display for RiskPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskPrior::Uniform => f.write_str("uniform"),
            RiskPrior::TruncatedBeta00 { epsilon } => write!(f, "beta00:{epsilon}"),
            RiskPrior::Tabulated(tab) => write!(f, "table({} points)", tab.len()),
        }
    }
}

/// The bounded reward averaged over `prior`, for stated confidence `p`.
pub fn reward_integrated(valid: bool, p: f64, prior: &RiskPrior) -> f64 {
    let v = if valid { 1.0 } else { 0.0 };
    2.0 * v * prior.cdf(p) + 2.0 * prior.upper_moment(p) - 1.0
}

/// `E_q[R_u(p)]` for an agent whose true success probability is `q`.
pub fn expected_integrated_reward(prior: &RiskPrior, q: f64, p: f64) -> f64 {
    q * reward_integrated(true, p, prior) + (1.0 - q) * reward_integrated(false, p, prior)
}

/// Evenly spaced report grid over `[0, 1]` with spacing `step` (the last
/// point is always 1).
pub fn report_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::domain(format!("grid step must lie in (0, 0.1], got {step}")));
    }
    let n = (1.0 / step).round();
    if ((n * step) - 1.0).abs() < 1e-9 {
        let n = n as usize;
        return Ok((0..=n).map(|k| k as f64 / n as f64).collect());
    }
    let mut grid: Vec<f64> = (0..).map(|k| k as f64 * step).take_while(|&p| p < 1.0).collect();
    grid.push(1.0);
    Ok(grid)
}

/// Grid argmax over reports `p` of the expected integrated reward for an
/// agent with success probability `q`.
///
/// Exact ties only occur on the flat regions created by a truncated prior;
/// they resolve to the report farthest from 1/2, i.e. the outermost report of
/// the clipped region.
pub fn verify_propriety(prior: &RiskPrior, q: f64, grid_step: f64) -> Result<f64> {
    check_unit("q", q)?;
    let grid = report_grid(grid_step)?;
    let mut best_p = grid[0];
    let mut best = expected_integrated_reward(prior, q, best_p);
    for &p in &grid[1..] {
        let e = expected_integrated_reward(prior, q, p);
        if e > best || (e == best && (p - 0.5).abs() > (best_p - 0.5).abs()) {
            best = e;
            best_p = p;
        }
    }
    Ok(best_p)
}

/// Reward names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Explicit,
    Bounded,
    Brier,
    Ce,
    Integrated,
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(RewardKind::Explicit),
            "bounded" => Ok(RewardKind::Bounded),
            "brier" => Ok(RewardKind::Brier),
            "ce" => Ok(RewardKind::Ce),
            "integrated" => Ok(RewardKind::Integrated),
            other => Err(Error::Usage(format!(
                "unknown reward `{other}` (expected explicit, bounded, brier, ce or integrated)"
            ))),
        }
    }
}
