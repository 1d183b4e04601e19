//! Test-time scaling: choose among `k` sampled responses per question.
//!
//! Draws are without replacement. Groups are processed in key order and
//! samples in id order, so results do not depend on input ordering. Every
//! `(k, resample)` pair owns one ChaCha8 stream shared by all strategies,
//! which makes strategy comparisons paired.
//!
//! Tie rules: majority picks the largest vote count, then the larger summed
//! confidence, then the lexicographically smallest answer; confidence-weighted
//! voting compares summed confidence first, then count, then the answer;
//! max-confidence keeps the first maximal sample in draw order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::simulate::stream_rng;

/// Largest number of draws [`exhaustive_accuracy`] will enumerate.
pub const MAX_ENUMERATION: u128 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub id: String,
    pub answer: Option<String>,
    pub confidence: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleGroup {
    pub group: String,
    pub samples: Vec<Sample>,
}

/// Collects grouped records. Records without a `group` form singleton groups
/// keyed by their id.
pub fn groups_from_dataset(ds: &Dataset) -> Result<Vec<SampleGroup>> {
    if !ds.has_groups() {
        return Err(Error::NoGroups);
    }
    let mut by_key: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for r in &ds.records {
        let key = r.group.clone().unwrap_or_else(|| r.id.clone());
        by_key.entry(key).or_default().push(Sample {
            id: r.id.clone(),
            answer: r.answer.clone(),
            confidence: r.confidence,
            valid: r.valid,
        });
    }
    Ok(by_key
        .into_iter()
        .map(|(group, mut samples)| {
            samples.sort_by(|a, b| a.id.cmp(&b.id));
            SampleGroup { group, samples }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mean,
    Best,
    Majority,
    Maxconf,
    Majconf,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Mean,
        Strategy::Best,
        Strategy::Majority,
        Strategy::Maxconf,
        Strategy::Majconf,
    ];

    fn needs_answers(self) -> bool {
        matches!(self, Strategy::Majority | Strategy::Majconf)
    }

    fn needs_confidence(self) -> bool {
        matches!(self, Strategy::Maxconf | Strategy::Majconf)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Mean => "mean",
            Strategy::Best => "best",
            Strategy::Majority => "majority",
            Strategy::Maxconf => "maxconf",
            Strategy::Majconf => "majconf",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.to_string() == s)
            .ok_or_else(|| Error::Usage(format!("unknown strategy `{s}` (expected mean, best, majority, maxconf or majconf)")))
    }
}

fn check(groups: &[SampleGroup], strategy: Strategy, k: usize) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::NoGroups);
    }
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    for g in groups {
        if g.samples.len() < k {
            return Err(Error::GroupTooSmall {
                group: g.group.clone(),
                size: g.samples.len(),
                k,
            });
        }
        for s in &g.samples {
            if strategy.needs_answers() && s.answer.is_none() {
                return Err(Error::MissingAnswer { id: s.id.clone() });
            }
            if strategy.needs_confidence() && s.confidence.is_none() {
                return Err(Error::MissingConfidence { id: s.id.clone() });
            }
        }
    }
    Ok(())
}

/// Partial Fisher–Yates: the first `k` entries, in draw order.
fn draw<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Winning answer of a vote over `idx`; whether any sample giving it is valid.
fn vote(g: &SampleGroup, idx: &[usize], weighted: bool) -> bool {
    // (count, confidence sum, any valid); sums run in sample order so they do
    // not depend on the draw order.
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    let mut tally: BTreeMap<&str, (usize, f64, bool)> = BTreeMap::new();
    for &i in &sorted {
        let s = &g.samples[i];
        let e = tally.entry(s.answer.as_deref().unwrap_or("")).or_insert((0, 0.0, false));
        e.0 += 1;
        e.1 += s.confidence.unwrap_or(0.0);
        e.2 |= s.valid;
    }
    let mut best: Option<(&str, (usize, f64, bool))> = None;
    // BTreeMap iterates answers in ascending order; only a strictly better
    // key replaces the incumbent, so the smallest answer wins remaining ties.
    for (ans, t) in tally {
        let better = match &best {
            None => true,
            Some((_, b)) => {
                let primary = if weighted {
                    t.1.partial_cmp(&b.1).unwrap().then(t.0.cmp(&b.0))
                } else {
                    t.0.cmp(&b.0).then(t.1.partial_cmp(&b.1).unwrap())
                };
                primary.is_gt()
            }
        };
        if better {
            best = Some((ans, t));
        }
    }
    best.map(|(_, t)| t.2).unwrap_or(false)
}

/// Score of one group under one ordered draw.
fn score(strategy: Strategy, g: &SampleGroup, idx: &[usize]) -> f64 {
    match strategy {
        Strategy::Mean => idx.iter().filter(|&&i| g.samples[i].valid).count() as f64 / idx.len() as f64,
        Strategy::Best => idx.iter().any(|&i| g.samples[i].valid) as u8 as f64,
        Strategy::Majority => vote(g, idx, false) as u8 as f64,
        Strategy::Majconf => vote(g, idx, true) as u8 as f64,
        Strategy::Maxconf => {
            let mut pick = idx[0];
            for &i in &idx[1..] {
                if g.samples[i].confidence > g.samples[pick].confidence {
                    pick = i;
                }
            }
            g.samples[pick].valid as u8 as f64
        }
    }
}

fn resample_accuracy(groups: &[SampleGroup], strategy: Strategy, k: usize, seed: u64, r: u64) -> f64 {
    let mut rng = stream_rng(seed, ((k as u64) << 32) | r);
    let total: f64 = groups
        .iter()
        .map(|g| score(strategy, g, &draw(&mut rng, g.samples.len(), k)))
        .sum();
    total / groups.len() as f64
}

/// Accuracy of one seeded draw of `k` samples per group.
pub fn accuracy_at_k(groups: &[SampleGroup], strategy: Strategy, k: usize, seed: u64) -> Result<f64> {
    check(groups, strategy, k)?;
    Ok(resample_accuracy(groups, strategy, k, seed, 0))
}

pub fn mean_at_k(groups: &[SampleGroup], k: usize, seed: u64) -> Result<f64> {
    accuracy_at_k(groups, Strategy::Mean, k, seed)
}

pub fn best_at_k(groups: &[SampleGroup], k: usize, seed: u64) -> Result<f64> {
    accuracy_at_k(groups, Strategy::Best, k, seed)
}

pub fn majority_at_k(groups: &[SampleGroup], k: usize, seed: u64) -> Result<f64> {
    accuracy_at_k(groups, Strategy::Majority, k, seed)
}

pub fn maxconf_at_k(groups: &[SampleGroup], k: usize, seed: u64) -> Result<f64> {
    accuracy_at_k(groups, Strategy::Maxconf, k, seed)
}

pub fn majconf_at_k(groups: &[SampleGroup], k: usize, seed: u64) -> Result<f64> {
    accuracy_at_k(groups, Strategy::Majconf, k, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub strategy: Strategy,
    pub k: usize,
    pub accuracy: f64,
    /// Standard error of the mean over resamples; 0 for a single resample.
    pub stderr: f64,
}

/// Monte-Carlo accuracy for each `k`, averaged over `n_resamples` draws.
pub fn scaling_curve(
    groups: &[SampleGroup],
    strategy: Strategy,
    k_values: &[usize],
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if n_resamples == 0 {
        return Err(Error::domain("n_resamples must be at least 1"));
    }
    k_values
        .iter()
        .map(|&k| {
            check(groups, strategy, k)?;
            let accs: Vec<f64> = (0..n_resamples as u64)
                .into_par_iter()
                .map(|r| resample_accuracy(groups, strategy, k, seed, r))
                .collect();
            let n = accs.len() as f64;
            // shifted by the first resample so identical resamples give an
            // exact mean and a zero spread
            let shift = accs[0];
            let offset = accs.iter().map(|a| a - shift).sum::<f64>() / n;
            let mean = shift + offset;
            let stderr = if accs.len() > 1 {
                let var = accs.iter().map(|a| (a - shift - offset).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            Ok(CurvePoint {
                strategy,
                k,
                accuracy: mean,
                stderr,
            })
        })
        .collect()
}

pub fn write_curve_csv<W: std::io::Write>(points: &[CurvePoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = crate::metrics::csv_io;
    out.write_record(["strategy", "k", "accuracy", "stderr"]).map_err(io)?;
    for p in points {
        out.write_record([p.strategy.to_string(), p.k.to_string(), p.accuracy.to_string(), p.stderr.to_string()])
            .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Expected credit of an unordered draw. Max-confidence ties are resolved by
/// draw order, which is uniform over the tied samples.
fn expected_credit(strategy: Strategy, g: &SampleGroup, combo: &[usize]) -> Ratio<u128> {
    match strategy {
        Strategy::Maxconf => {
            let top = combo
                .iter()
                .map(|&i| g.samples[i].confidence)
                .fold(None, |m: Option<Option<f64>>, c| match m {
                    Some(best) if best >= c => Some(best),
                    _ => Some(c),
                })
                .flatten();
            let tied: Vec<usize> = combo.iter().copied().filter(|&i| g.samples[i].confidence == top).collect();
            let good = tied.iter().filter(|&&i| g.samples[i].valid).count();
            Ratio::new(good as u128, tied.len() as u128)
        }
        Strategy::Mean => Ratio::new(
            combo.iter().filter(|&&i| g.samples[i].valid).count() as u128,
            combo.len() as u128,
        ),
        _ => Ratio::from_integer(score(strategy, g, combo) as u128),
    }
}

fn overflow() -> Error {
    Error::domain("exact accuracy overflowed 128-bit rationals")
}

/// Exact expected accuracy over every `k`-subset of every group.
pub fn exhaustive_accuracy(groups: &[SampleGroup], strategy: Strategy, k: usize) -> Result<Ratio<u128>> {
    check(groups, strategy, k)?;
    let total: u128 = groups
        .iter()
        .map(|g| binomial(g.samples.len(), k))
        .fold(0u128, |a, b| a.saturating_add(b));
    if total > MAX_ENUMERATION {
        return Err(Error::EnumerationTooLarge(total));
    }
    let mut acc = Ratio::from_integer(0u128);
    for g in groups {
        let n = g.samples.len();
        let mut combo: Vec<usize> = (0..k).collect();
        let mut sum = Ratio::from_integer(0u128);
        loop {
            sum = sum.checked_add(&expected_credit(strategy, g, &combo)).ok_or_else(overflow)?;
            // next combination in lexicographic order
            let Some(i) = (0..k).rev().find(|&i| combo[i] < n - k + i) else { break };
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
        }
        let per_group = sum
            .checked_mul(&Ratio::new(1, binomial(n, k)))
            .ok_or_else(overflow)?;
        acc = acc.checked_add(&per_group).ok_or_else(overflow)?;
    }
    acc.checked_mul(&Ratio::new(1, groups.len() as u128)).ok_or_else(overflow)
}
