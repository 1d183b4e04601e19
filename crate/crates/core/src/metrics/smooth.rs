//! Smooth calibration error and kernel-smoothed calibration diagrams.
//!
//! Residuals `valid - p` are smoothed with a Gaussian kernel reflected at
//! both ends of `[0, 1]`, so every kernel integrates to one over the unit
//! interval. `smECE_σ` is the L1 norm of the smoothed residual density; the
//! reported value is taken at the bandwidth `σ*` where `smECE_σ* = σ*`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Dataset;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmeceConfig {
    /// Evaluation grid for the residual integral.
    pub grid_points: usize,
    /// Bisection stops once the bandwidth bracket is narrower than this.
    pub tolerance: f64,
    /// Grid of the returned diagram.
    pub diagram_points: usize,
    /// Diagram points whose density falls below this are flagged.
    pub low_density: f64,
}

impl Default for SmeceConfig {
    fn default() -> Self {
        SmeceConfig {
            grid_points: 512,
            tolerance: 1e-4,
            diagram_points: 201,
            low_density: 0.1,
        }
    }
}

/// Gaussian density at `z` summed over every reflection image `z - 2k`.
fn periodic_gaussian(z: f64, sigma: f64) -> f64 {
    let reach = 12.0 * sigma + 1.0;
    let k_lo = ((z - reach) / 2.0).floor() as i64;
    let k_hi = ((z + reach) / 2.0).ceil() as i64;
    let norm = INV_SQRT_2PI / sigma;
    (k_lo..=k_hi)
        .map(|k| {
            let d = (z - 2.0 * k as f64) / sigma;
            norm * (-0.5 * d * d).exp()
        })
        .sum()
}

/// Reflected Gaussian kernel on `[0, 1]` centred at `x`, evaluated at `t`.
pub fn reflected_kernel(t: f64, x: f64, sigma: f64) -> f64 {
    periodic_gaussian(t - x, sigma) + periodic_gaussian(t + x, sigma)
}

fn trapezoid(ys: &[f64], h: f64) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = ys[1..n - 1].iter().sum();
    h * (inner + 0.5 * (ys[0] + ys[n - 1]))
}

/// Sorted `(p, valid)` pairs so every later sum is order independent.
fn sorted_scores(ds: &Dataset) -> Result<Vec<(f64, bool)>> {
    let mut scores = ds.scored()?;
    scores.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scores)
}

/// Residual mass linearly binned onto a uniform grid, plus the kernel
/// sums needed to evaluate `smECE_σ` for many bandwidths.
struct BinnedResiduals {
    grid: usize,
    n: f64,
    /// `(bin index, residual mass)` for non-empty bins.
    mass: Vec<(usize, f64)>,
}

impl BinnedResiduals {
    fn new(scores: &[(f64, bool)], grid: usize) -> Self {
        let last = (grid - 1) as f64;
        let mut bins = vec![0.0; grid];
        for &(p, valid) in scores {
            let r = if valid { 1.0 } else { 0.0 } - p;
            let x = p * last;
            let i = (x.floor() as usize).min(grid - 2);
            let frac = x - i as f64;
            bins[i] += r * (1.0 - frac);
            bins[i + 1] += r * frac;
        }
        let mass = bins
            .into_iter()
            .enumerate()
            .filter(|&(_, m)| m != 0.0)
            .collect();
        BinnedResiduals {
            grid,
            n: scores.len() as f64,
            mass,
        }
    }

    /// `∫ |r_σ(t)| dt` with `r_σ(t) = Σ residual·K_σ(t, p) / n`.
    fn smece_at(&self, sigma: f64) -> f64 {
        let g = self.grid;
        let h = 1.0 / (g - 1) as f64;
        // kernel offsets: t_j - x_i = (j - i)h, t_j + x_i = (j + i)h
        let offset = g - 1;
        let table: Vec<f64> = (0..3 * g - 2)
            .map(|m| periodic_gaussian((m as f64 - offset as f64) * h, sigma))
            .collect();
        let residual: Vec<f64> = (0..g)
            .map(|j| {
                let acc: f64 = self
                    .mass
                    .iter()
                    .map(|&(i, m)| m * (table[j + offset - i] + table[j + i + offset]))
                    .sum();
                (acc / self.n).abs()
            })
            .collect();
        trapezoid(&residual, h)
    }
}

/// Smooth ECE at a fixed bandwidth.
pub fn smece_at_bandwidth(ds: &Dataset, sigma: f64, config: &SmeceConfig) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::domain(format!("bandwidth must be positive, got {sigma}")));
    }
    let scores = sorted_scores(ds)?;
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(BinnedResiduals::new(&scores, config.grid_points).smece_at(sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Smece {
    pub value: f64,
    pub bandwidth: f64,
    /// True when bisection was abandoned for a dense bandwidth scan.
    pub scanned: bool,
}

/// Locates the fixed point `smECE_σ = σ` by bisection on
/// `[grid step, 1]`, checking along the way that `smECE_σ` is
/// non-increasing; if it is not, falls back to a dense scan.
fn fixed_point(binned: &BinnedResiduals, config: &SmeceConfig) -> Smece {
    let mut lo = 1.0 / (config.grid_points - 1) as f64;
    let mut hi = 1.0;
    let mut seen: Vec<(f64, f64)> = Vec::new();
    let eval = |s: f64, seen: &mut Vec<(f64, f64)>| {
        let v = binned.smece_at(s);
        seen.push((s, v));
        v
    };

    let at_lo = eval(lo, &mut seen);
    if at_lo <= lo {
        return Smece { value: at_lo, bandwidth: lo, scanned: false };
    }
    eval(hi, &mut seen);
    while hi - lo > config.tolerance {
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut seen) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    seen.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = seen.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
    if monotone {
        let sigma = 0.5 * (lo + hi);
        return Smece { value: binned.smece_at(sigma), bandwidth: sigma, scanned: false };
    }

    let start = 1.0 / (config.grid_points - 1) as f64;
    let steps = 2000;
    let ratio = (1.0 / start).powf(1.0 / steps as f64);
    let mut sigma = start;
    for _ in 0..=steps {
        let v = binned.smece_at(sigma);
        if v <= sigma {
            return Smece { value: v, bandwidth: sigma, scanned: true };
        }
        sigma = (sigma * ratio).min(1.0);
    }
    Smece { value: binned.smece_at(1.0), bandwidth: 1.0, scanned: true }
}

/// Smooth ECE at the fixed-point bandwidth, with the diagram at that bandwidth.
pub fn smece(ds: &Dataset, config: &SmeceConfig) -> Result<(Smece, CalibrationDiagram)> {
    let scores = sorted_scores(ds)?;
    if scores.len() < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: scores.len() });
    }
    let binned = BinnedResiduals::new(&scores, config.grid_points);
    let result = fixed_point(&binned, config);
    let diagram = diagram_from_scores(&scores, result.bandwidth, config)?;
    Ok((result, diagram))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationDiagram {
    pub grid: Vec<f64>,
    pub smoothed_accuracy: Vec<f64>,
    pub density: Vec<f64>,
    pub low_density: Vec<bool>,
    pub bandwidth: f64,
}

impl CalibrationDiagram {
    /// Trapezoid integral of the confidence density.
    pub fn density_mass(&self) -> f64 {
        let h = 1.0 / (self.grid.len() - 1) as f64;
        trapezoid(&self.density, h)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["grid", "smoothed_accuracy", "density"])
            .map_err(csv_io)?;
        for i in 0..self.grid.len() {
            out.write_record([
                self.grid[i].to_string(),
                self.smoothed_accuracy[i].to_string(),
                self.density[i].to_string(),
            ])
            .map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn diagram_from_scores(
    scores: &[(f64, bool)],
    bandwidth: f64,
    config: &SmeceConfig,
) -> Result<CalibrationDiagram> {
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(Error::domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = config.diagram_points.max(2);
    let n = scores.len() as f64;
    let base_rate = scores.iter().filter(|s| s.1).count() as f64 / n;
    let grid: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let mut smoothed_accuracy = Vec::with_capacity(m);
    let mut density = Vec::with_capacity(m);
    for &t in &grid {
        let (mut mass, mut hits) = (0.0, 0.0);
        for &(p, valid) in scores {
            let k = reflected_kernel(t, p, bandwidth);
            mass += k;
            if valid {
                hits += k;
            }
        }
        density.push(mass / n);
        smoothed_accuracy.push(if mass > 0.0 { (hits / mass).clamp(0.0, 1.0) } else { base_rate });
    }
    let low_density = density.iter().map(|&d| d < config.low_density).collect();
    Ok(CalibrationDiagram {
        grid,
        smoothed_accuracy,
        density,
        low_density,
        bandwidth,
    })
}

/// Kernel-smoothed accuracy and confidence density at a given bandwidth.
pub fn calibration_diagram(ds: &Dataset, bandwidth: f64, config: &SmeceConfig) -> Result<CalibrationDiagram> {
    let scores = sorted_scores(ds)?;
    diagram_from_scores(&scores, bandwidth, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PredictionRecord;

    fn dataset(pairs: &[(f64, bool)]) -> Dataset {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, &(p, v))| PredictionRecord::new(format!("r{i}"), v, Some(p)))
            .collect();
        Dataset::from_records("t", records).unwrap()
    }

    #[test]
    fn kernel_integrates_to_one() {
        for &(x, s) in &[(0.0, 0.05), (0.3, 0.2), (0.97, 0.01), (0.5, 1.0)] {
            let n = 20_001;
            let ys: Vec<f64> = (0..n).map(|i| reflected_kernel(i as f64 / (n - 1) as f64, x, s)).collect();
            let mass = trapezoid(&ys, 1.0 / (n - 1) as f64);
            assert!((mass - 1.0).abs() < 1e-6, "{x} {s} {mass}");
        }
    }

    /// Brute-force smECE_σ straight from the records, no binning.
    fn brute_smece(pairs: &[(f64, bool)], sigma: f64) -> f64 {
        let g = 2001;
        let n = pairs.len() as f64;
        let ys: Vec<f64> = (0..g)
            .map(|j| {
                let t = j as f64 / (g - 1) as f64;
                pairs
                    .iter()
                    .map(|&(p, v)| (if v { 1.0 } else { 0.0 } - p) * reflected_kernel(t, p, sigma))
                    .sum::<f64>()
                    .abs()
                    / n
            })
            .collect();
        trapezoid(&ys, 1.0 / (g - 1) as f64)
    }

    #[test]
    fn binned_matches_brute_force() {
        let pairs = [(0.1, false), (0.35, true), (0.36, false), (0.8, true), (0.9, false), (0.95, true)];
        let ds = dataset(&pairs);
        for &s in &[0.03, 0.1, 0.4] {
            let fast = smece_at_bandwidth(&ds, s, &SmeceConfig::default()).unwrap();
            let slow = brute_smece(&pairs, s);
            assert!((fast - slow).abs() < 2e-3, "{s}: {fast} vs {slow}");
        }
    }

    #[test]
    fn perfect_point_mass_is_zero() {
        let ds = dataset(&[(1.0, true); 50]);
        let (s, _) = smece(&ds, &SmeceConfig::default()).unwrap();
        assert!(s.value <= 0.005, "{s:?}");
    }

    #[test]
    fn wrong_point_mass() {
        // every σ gives 0.8 for this data, so the fixed point is 0.8
        let pairs = [(0.8, false); 40];
        for &s in &[0.01, 0.2, 0.8] {
            assert!((brute_smece(&pairs, s) - 0.8).abs() < 1e-9);
        }
        let (s, _) = smece(&dataset(&pairs), &SmeceConfig::default()).unwrap();
        assert!(s.value > 0.3 && (0.5..=0.8 + 1e-9).contains(&s.value), "{s:?}");
        assert!((s.value - 0.8).abs() < 1e-6);
    }

    #[test]
    fn permutation_invariance_is_exact() {
        let pairs: Vec<(f64, bool)> = (0..300).map(|i| ((i * 37 % 101) as f64 / 100.0, i % 3 == 0)).collect();
        let mut rev = pairs.clone();
        rev.reverse();
        let cfg = SmeceConfig::default();
        let (a, _) = smece(&dataset(&pairs), &cfg).unwrap();
        let (b, _) = smece(&dataset(&rev), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn needs_two_records_and_confidence() {
        assert!(matches!(
            smece(&dataset(&[(0.5, true)]), &SmeceConfig::default()),
            Err(Error::TooFewRecords { .. })
        ));
        let ds = Dataset::from_records(
            "x",
            vec![PredictionRecord::new("a", true, None), PredictionRecord::new("b", true, Some(0.1))],
        )
        .unwrap();
        assert!(matches!(smece(&ds, &SmeceConfig::default()), Err(Error::MissingConfidence { .. })));
    }

    #[test]
    fn point_mass_diagram() {
        let ds = dataset(&[(0.8, true); 20]);
        let d = calibration_diagram(&ds, 0.05, &SmeceConfig::default()).unwrap();
        assert_eq!(d.grid.len(), 201);
        let at = |t: f64| d.grid.iter().position(|&g| (g - t).abs() < 1e-9).unwrap();
        assert!((d.smoothed_accuracy[at(0.8)] - 1.0).abs() < 1e-12);
        let peak = d.density.iter().cloned().fold(0.0, f64::max);
        assert_eq!(d.density[at(0.8)], peak);
        assert!((d.density_mass() - 1.0).abs() < 1e-3);
        assert!(d.low_density[at(0.1)]);
        assert!(!d.low_density[at(0.8)]);
        assert!(calibration_diagram(&ds, 0.0, &SmeceConfig::default()).is_err());
    }
}
