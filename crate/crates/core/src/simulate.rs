//! Synthetic agents with known ground truth.
//!
//! Every question draws a true success probability `q` from a difficulty
//! prior, an outcome `valid ~ Bernoulli(q)`, and reports a confidence through
//! a monotone report map. Randomness comes from ChaCha8 with one stream per
//! question, so generation parallelises without changing the output.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::claims::aggregate_product;
use crate::config::parse_key_values;
use crate::error::{Error, Result};
use crate::model::{ClaimRecord, Dataset, PredictionRecord};
use crate::rewards::{expected_integrated_reward, RiskPrior};

/// Name of the pseudo-random generator behind every seeded operation.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), stream per question/resample";

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| spec_err(format!("`{s}` is not a number")))
}

/// Splits `name(a,b)` or `name:a,b` into the name and its arguments.
fn split_call(s: &str) -> (&str, Vec<&str>) {
    let s = s.trim();
    if let Some(open) = s.find('(') {
        if let Some(body) = s[open + 1..].strip_suffix(')') {
            return (s[..open].trim(), body.split(',').map(str::trim).collect());
        }
    }
    if let Some((name, rest)) = s.split_once(':') {
        return (name.trim(), rest.split(',').map(str::trim).collect());
    }
    (s, Vec::new())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyPrior {
    Uniform,
    Beta { a: f64, b: f64 },
    /// `q` drawn uniformly from the listed values.
    PointMass(Vec<f64>),
}

impl DifficultyPrior {
    pub fn validate(&self) -> Result<()> {
        match self {
            DifficultyPrior::Uniform => Ok(()),
            DifficultyPrior::Beta { a, b } => {
                if *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(spec_err(format!("beta parameters must be positive, got ({a}, {b})")))
                }
            }
            DifficultyPrior::PointMass(qs) => {
                if qs.is_empty() {
                    return Err(spec_err("point-mass prior needs at least one value"));
                }
                match qs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                    Some(q) => Err(spec_err(format!("point mass {q} outside [0, 1]"))),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DifficultyPrior::Uniform => rng.random::<f64>(),
            DifficultyPrior::Beta { a, b } => Beta::new(*a, *b).expect("validated").sample(rng),
            DifficultyPrior::PointMass(qs) => qs[rng.random_range(0..qs.len())],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DifficultyPrior::Uniform => 0.5,
            DifficultyPrior::Beta { a, b } => a / (a + b),
            DifficultyPrior::PointMass(qs) => qs.iter().sum::<f64>() / qs.len() as f64,
        }
    }
}

impl FromStr for DifficultyPrior {
    type Err = Error;

    /// `uniform`, `beta(a,b)` / `beta:a,b`, `point(q1,q2,…)` / `point:q`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_call(s);
        let prior = match (name, args.len()) {
            ("uniform", 0) => DifficultyPrior::Uniform,
            ("beta", 2) => DifficultyPrior::Beta {
                a: parse_f64(args[0])?,
                b: parse_f64(args[1])?,
            },
            ("point" | "point_mass" | "point-mass", n) if n > 0 => {
                DifficultyPrior::PointMass(args.iter().map(|a| parse_f64(a)).collect::<Result<_>>()?)
            }
            _ => return Err(spec_err(format!("unknown difficulty prior `{s}`"))),
        };
        prior.validate()?;
        Ok(prior)
    }
}

impl fmt::Display for DifficultyPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DifficultyPrior::Uniform => f.write_str("uniform"),
            DifficultyPrior::Beta { a, b } => write!(f, "beta({a},{b})"),
            DifficultyPrior::PointMass(qs) => {
                let parts: Vec<String> = qs.iter().map(|q| q.to_string()).collect();
                write!(f, "point({})", parts.join(","))
            }
        }
    }
}

/// Monotone map from true success probability to stated confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMap {
    Calibrated,
    /// `p = q^γ`: overconfident for `γ < 1`, underconfident for `γ > 1`.
    Power(f64),
    Constant(f64),
}

impl ReportMap {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ReportMap::Calibrated => Ok(()),
            ReportMap::Power(g) if g > 0.0 && g.is_finite() => Ok(()),
            ReportMap::Power(g) => Err(spec_err(format!("power exponent must be positive, got {g}"))),
            ReportMap::Constant(c) if (0.0..=1.0).contains(&c) => Ok(()),
            ReportMap::Constant(c) => Err(spec_err(format!("constant confidence {c} outside [0, 1]"))),
        }
    }

    pub fn apply(&self, q: f64) -> f64 {
        match *self {
            ReportMap::Calibrated => q,
            ReportMap::Power(g) => q.powf(g),
            ReportMap::Constant(c) => c,
        }
    }
}

impl FromStr for ReportMap {
    type Err = Error;

    /// `calibrated`, `overconfident` (γ = 0.5), `underconfident` (γ = 2),
    /// `power(γ)`, `constant(c)`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_call(s);
        let map = match (name, args.len()) {
            ("calibrated" | "identity", 0) => ReportMap::Calibrated,
            ("overconfident", 0) => ReportMap::Power(0.5),
            ("underconfident", 0) => ReportMap::Power(2.0),
            ("power", 1) => ReportMap::Power(parse_f64(args[0])?),
            ("constant", 1) => ReportMap::Constant(parse_f64(args[0])?),
            _ => return Err(spec_err(format!("unknown report map `{s}`"))),
        };
        map.validate()?;
        Ok(map)
    }
}

impl fmt::Display for ReportMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportMap::Calibrated => f.write_str("calibrated"),
            ReportMap::Power(g) => write!(f, "power({g})"),
            ReportMap::Constant(c) => write!(f, "constant({c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSpec {
    pub difficulty: DifficultyPrior,
    pub report: ReportMap,
    pub n_questions: usize,
    /// Emit a chain of this many claims per response, each with success
    /// probability `q^(1/n)` so the whole chain succeeds with probability `q`.
    pub n_claims: Option<usize>,
    /// Emit this many grouped samples per question instead of one record.
    pub samples_per_question: Option<usize>,
    /// Number of distinct wrong answers in ensembles.
    pub n_distractors: usize,
    /// Concentration `κ` of per-sample success probabilities around the
    /// question's `q` (`Beta(κq, κ(1−q))`); `None` keeps every sample at `q`.
    pub intra_spread: Option<f64>,
    pub seed: u64,
}

impl Default for AgentSpec {
    fn default() -> Self {
        AgentSpec {
            difficulty: DifficultyPrior::Uniform,
            report: ReportMap::Calibrated,
            n_questions: 1000,
            n_claims: None,
            samples_per_question: None,
            n_distractors: 3,
            intra_spread: None,
            seed: 0,
        }
    }
}

impl AgentSpec {
    pub fn new(report: ReportMap, n_questions: usize, seed: u64) -> Self {
        AgentSpec {
            report,
            n_questions,
            seed,
            ..AgentSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.difficulty.validate()?;
        self.report.validate()?;
        if self.n_questions == 0 {
            return Err(spec_err("n_questions must be at least 1"));
        }
        if self.n_claims == Some(0) {
            return Err(spec_err("n_claims must be at least 1"));
        }
        if self.samples_per_question == Some(0) {
            return Err(spec_err("samples_per_question must be at least 1"));
        }
        if self.n_claims.is_some() && self.samples_per_question.is_some() {
            return Err(spec_err("claim chains and sample ensembles are mutually exclusive"));
        }
        if self.n_distractors == 0 {
            return Err(spec_err("n_distractors must be at least 1"));
        }
        if let Some(k) = self.intra_spread {
            if !(k > 0.0 && k.is_finite()) {
                return Err(spec_err(format!("intra_spread must be positive, got {k}")));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| -> Result<usize> {
            v.parse().map_err(|_| spec_err(format!("`{key}` expects an integer, got `{v}`")))
        };
        match key {
            "agent" | "report" | "report_map" => self.report = value.parse()?,
            "difficulty" | "difficulty_prior" => self.difficulty = value.parse()?,
            "n" | "n_questions" => self.n_questions = int(value)?,
            "n_claims" | "claims" => self.n_claims = Some(int(value)?),
            "samples" | "samples_per_question" => self.samples_per_question = Some(int(value)?),
            "distractors" | "n_distractors" => self.n_distractors = int(value)?,
            "spread" | "intra_spread" => self.intra_spread = Some(parse_f64(value)?),
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| spec_err(format!("seed must be a 64-bit unsigned integer, got `{value}`")))?
            }
            other => return Err(spec_err(format!("unknown agent setting `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut spec = AgentSpec::default();
        for (k, v) in parse_key_values(text)? {
            spec.set(&k, &v)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn draw_valid<R: Rng + ?Sized>(rng: &mut R, q: f64) -> bool {
    rng.random::<f64>() < q
}

fn claims_from_rng<R: Rng + ?Sized>(q_chain: &[f64], report: &ReportMap, rng: &mut R) -> (Vec<ClaimRecord>, bool) {
    let mut all = true;
    let claims = q_chain
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let valid = draw_valid(rng, q);
            all &= valid;
            ClaimRecord {
                text: format!("claim {}", i + 1),
                confidence: report.apply(q),
                valid: Some(valid),
                rationale: None,
            }
        })
        .collect();
    (claims, all)
}

/// Samples an independent claim chain. Claim `i` is valid with probability
/// `q_chain[i]`; the response is valid iff every claim is.
pub fn generate_claims(q_chain: &[f64], report: &ReportMap, seed: u64) -> Result<(Vec<ClaimRecord>, bool)> {
    if q_chain.is_empty() {
        return Err(Error::EmptyClaims);
    }
    for &q in q_chain {
        crate::error::check_unit("claim success probability", q)?;
    }
    report.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(claims_from_rng(q_chain, report, &mut rng))
}

fn question(spec: &AgentSpec, i: usize) -> Vec<PredictionRecord> {
    let mut rng = stream_rng(spec.seed, i as u64);
    let q = spec.difficulty.sample(&mut rng);
    let id = format!("q{i:06}");
    if let Some(m) = spec.samples_per_question {
        return (0..m)
            .map(|s| {
                let qs = match spec.intra_spread {
                    Some(k) if q > 0.0 && q < 1.0 => Beta::new(k * q, k * (1.0 - q)).expect("validated").sample(&mut rng),
                    _ => q,
                };
                let valid = draw_valid(&mut rng, qs);
                let answer = if valid {
                    "ans-0".to_owned()
                } else {
                    format!("ans-{}", rng.random_range(1..=spec.n_distractors))
                };
                let mut rec = PredictionRecord::new(format!("{id}-s{s:03}"), valid, Some(spec.report.apply(qs)));
                rec.group = Some(id.clone());
                rec.answer = Some(answer);
                rec.meta.insert("q".to_owned(), qs.to_string());
                rec
            })
            .collect();
    }
    let mut rec = if let Some(m) = spec.n_claims {
        let qi = q.powf(1.0 / m as f64);
        let (claims, valid) = claims_from_rng(&vec![qi; m], &spec.report, &mut rng);
        let ps: Vec<f64> = claims.iter().map(|c| c.confidence).collect();
        let conf = aggregate_product(&ps).expect("non-empty chain of probabilities");
        let mut rec = PredictionRecord::new(id, valid, Some(conf));
        rec.claims = claims;
        rec
    } else {
        let valid = draw_valid(&mut rng, q);
        PredictionRecord::new(id, valid, Some(spec.report.apply(q)))
    };
    rec.meta.insert("q".to_owned(), q.to_string());
    vec![rec]
}

/// Generates a dataset for `spec`. Identical specs give identical datasets
/// regardless of thread count.
pub fn generate(spec: &AgentSpec) -> Result<Dataset> {
    spec.validate()?;
    let records: Vec<PredictionRecord> = (0..spec.n_questions)
        .into_par_iter()
        .map(|i| question(spec, i))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Dataset::from_records(format!("sim:{}:{}", spec.report, spec.seed), records)
}

/// Tabular value estimates trained by stochastic squared-error descent on
/// binary outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticSurrogate {
    /// True success probability of each context.
    pub contexts: Vec<f64>,
    pub values: Vec<f64>,
    pub visits: Vec<u64>,
    pub learning_rate: f64,
    /// Step size `η₀ / (1 + visits)` when set, constant `η₀` otherwise.
    pub annealed: bool,
    pub steps: u64,
    /// `(context, outcome)` for every step, when recording is enabled.
    pub log: Option<Vec<(usize, bool)>>,
}

impl CriticSurrogate {
    pub fn new(contexts: Vec<f64>, initial_value: f64, learning_rate: f64) -> Result<Self> {
        if contexts.is_empty() {
            return Err(spec_err("critic needs at least one context"));
        }
        for &q in &contexts {
            crate::error::check_unit("context success probability", q)?;
        }
        crate::error::check_unit("initial value", initial_value)?;
        if !(learning_rate > 0.0 && learning_rate <= 0.5) {
            return Err(Error::domain(format!("learning rate must lie in (0, 0.5], got {learning_rate}")));
        }
        let n = contexts.len();
        Ok(CriticSurrogate {
            contexts,
            values: vec![initial_value; n],
            visits: vec![0; n],
            learning_rate,
            annealed: true,
            steps: 0,
            log: None,
        })
    }

    pub fn constant_step(mut self) -> Self {
        self.annealed = false;
        self
    }

    pub fn recording(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let c = rng.random_range(0..self.contexts.len());
        let outcome = draw_valid(rng, self.contexts[c]);
        let eta = if self.annealed {
            self.learning_rate / (1 + self.visits[c]) as f64
        } else {
            self.learning_rate
        };
        let o = if outcome { 1.0 } else { 0.0 };
        let v = self.values[c];
        self.values[c] = (v - eta * 2.0 * (v - o)).clamp(0.0, 1.0);
        self.visits[c] += 1;
        self.steps += 1;
        if let Some(log) = &mut self.log {
            log.push((c, outcome));
        }
    }

    /// `n_steps` updates, each on a uniformly drawn context.
    pub fn train_critic(mut self, n_steps: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_steps {
            self.step(&mut rng);
        }
        self
    }

    /// Trains until every context has been visited at least `min_visits` times.
    pub fn train_until(mut self, min_visits: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while self.visits.iter().any(|&v| v < min_visits) {
            self.step(&mut rng);
        }
        self
    }

    pub fn max_error(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.contexts)
            .map(|(v, q)| (v - q).abs())
            .fold(0.0, f64::max)
    }
}

/// Expected integrated reward over the report grid `p = 0, 0.001, …, 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardCurve {
    pub p: Vec<f64>,
    pub reward: Vec<f64>,
}

impl RewardCurve {
    /// Grid point with the largest expected reward (first on ties).
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = 0;
        for i in 1..self.p.len() {
            if self.reward[i] > self.reward[best] {
                best = i;
            }
        }
        (self.p[best], self.reward[best])
    }
}

pub fn expected_reward_curve(prior: &RiskPrior, q: f64) -> RewardCurve {
    let p: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let reward = p.iter().map(|&x| expected_integrated_reward(prior, q, x)).collect();
    RewardCurve { p, reward }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{check_objectives, sweep, ThresholdGrid};
    use crate::metrics::{confidence_auc, predictive_accuracy, smece, SmeceConfig};
    use proptest::prelude::*;

    #[test]
    fn parse_names() {
        assert_eq!("beta(2,5)".parse::<DifficultyPrior>().unwrap(), DifficultyPrior::Beta { a: 2.0, b: 5.0 });
        assert_eq!("point:0.5".parse::<DifficultyPrior>().unwrap(), DifficultyPrior::PointMass(vec![0.5]));
        assert!("beta(0,1)".parse::<DifficultyPrior>().is_err());
        assert_eq!("overconfident".parse::<ReportMap>().unwrap(), ReportMap::Power(0.5));
        assert_eq!("constant(1)".parse::<ReportMap>().unwrap(), ReportMap::Constant(1.0));
        assert!("constant(2)".parse::<ReportMap>().is_err());
        for s in ["uniform", "beta(2,5)", "point(0.2,0.8)"] {
            let p: DifficultyPrior = s.parse().unwrap();
            assert_eq!(p.to_string().parse::<DifficultyPrior>().unwrap(), p);
        }
    }

    #[test]
    fn config_file_spec() {
        let spec = AgentSpec::from_config_str("agent = power(0.5)\ndifficulty = beta(2,5)\nn = 12\nseed = 9\n").unwrap();
        assert_eq!(spec.report, ReportMap::Power(0.5));
        assert_eq!(spec.n_questions, 12);
        assert_eq!(spec.seed, 9);
        assert!(AgentSpec::from_config_str("n = 0").is_err());
        assert!(AgentSpec::from_config_str("colour = red").is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = AgentSpec::new(ReportMap::Calibrated, 500, 7);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 8;
        assert_ne!(a, generate(&spec).unwrap());
    }

    #[test]
    fn point_mass_reproducible() {
        let mut spec = AgentSpec::new(ReportMap::Calibrated, 4, 1234);
        spec.difficulty = DifficultyPrior::PointMass(vec![0.5]);
        let seq = |ds: Dataset| ds.records.iter().map(|r| r.valid).collect::<Vec<_>>();
        assert_eq!(seq(generate(&spec).unwrap()), seq(generate(&spec).unwrap()));
        assert!(generate(&spec).unwrap().records.iter().all(|r| r.confidence == Some(0.5)));
    }

    #[test]
    fn constant_one_reports() {
        let spec = AgentSpec::new(ReportMap::Constant(1.0), 4000, 3);
        let ds = generate(&spec).unwrap();
        assert!(ds.records.iter().all(|r| r.confidence == Some(1.0)));
        assert!((predictive_accuracy(&ds).unwrap() - 0.5).abs() < 0.03);
    }

    #[test]
    fn calibrated_agent_is_calibrated() {
        let ds = generate(&AgentSpec::new(ReportMap::Calibrated, 10_000, 42)).unwrap();
        let (s, _) = smece(&ds, &SmeceConfig::default()).unwrap();
        assert!(s.value <= 0.03, "{}", s.value);
        let sw = sweep(&ds, &ThresholdGrid::uniform(101).unwrap()).unwrap();
        let r = check_objectives(&sw, predictive_accuracy(&ds).unwrap(), 0.05).unwrap();
        assert!(r.all_pass(), "{r:?}");
    }

    #[test]
    fn overconfident_agent_is_flagged() {
        let mut cal = AgentSpec::new(ReportMap::Calibrated, 10_000, 42);
        cal.difficulty = DifficultyPrior::Beta { a: 2.0, b: 5.0 };
        let over = AgentSpec {
            report: ReportMap::Power(0.5),
            ..cal.clone()
        };
        let (dc, dov) = (generate(&cal).unwrap(), generate(&over).unwrap());
        let sw = sweep(&dov, &ThresholdGrid::uniform(101).unwrap()).unwrap();
        let r = check_objectives(&sw, predictive_accuracy(&dov).unwrap(), 0.05).unwrap();
        assert!(!r.quantitative_calibration);
        let cfg = SmeceConfig::default();
        assert!(smece(&dov, &cfg).unwrap().0.value > smece(&dc, &cfg).unwrap().0.value);
        // same (q, valid) draws, monotone reports: identical AUC
        assert_eq!(confidence_auc(&dc).unwrap(), confidence_auc(&dov).unwrap());
    }

    #[test]
    fn claim_chain_examples() {
        for seed in 0..200 {
            assert!(generate_claims(&[1.0, 1.0, 1.0], &ReportMap::Calibrated, seed).unwrap().1);
        }
        let hits = (0..10_000)
            .filter(|&s| generate_claims(&[0.5], &ReportMap::Calibrated, s).unwrap().1)
            .count();
        assert!((hits as f64 / 10_000.0 - 0.5).abs() <= 0.02);
        let chain = [0.8; 10];
        let hits = (0..20_000)
            .filter(|&s| generate_claims(&chain, &ReportMap::Calibrated, s).unwrap().1)
            .count();
        assert!((hits as f64 / 20_000.0 - 0.8f64.powi(10)).abs() < 0.01);
        assert!(matches!(generate_claims(&[], &ReportMap::Calibrated, 0), Err(Error::EmptyClaims)));
        assert!(generate_claims(&[1.2], &ReportMap::Calibrated, 0).is_err());
    }

    #[test]
    fn claim_chain_records() {
        let mut spec = AgentSpec::new(ReportMap::Calibrated, 300, 5);
        spec.n_claims = Some(4);
        let ds = generate(&spec).unwrap();
        for r in &ds.records {
            assert_eq!(r.claims.len(), 4);
            assert_eq!(r.valid, r.claims.iter().all(|c| c.valid == Some(true)));
            let q: f64 = r.meta["q"].parse().unwrap();
            assert!((r.confidence.unwrap() - q).abs() < 1e-12);
        }
    }

    #[test]
    fn ensembles_are_grouped() {
        let mut spec = AgentSpec::new(ReportMap::Calibrated, 5, 11);
        spec.samples_per_question = Some(8);
        spec.intra_spread = Some(8.0);
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.len(), 40);
        for r in &ds.records {
            assert_eq!(r.valid, r.answer.as_deref() == Some("ans-0"));
            assert!(r.group.is_some());
        }
    }

    #[test]
    fn critic_single_context() {
        let c = CriticSurrogate::new(vec![0.5], 0.0, 0.5).unwrap().train_critic(20_000, 1);
        assert!((0.45..=0.55).contains(&c.values[0]));
        let same = CriticSurrogate::new(vec![0.3, 0.6], 0.2, 0.5).unwrap();
        assert_eq!(same.clone().train_critic(0, 1).values, same.values);
        assert!(CriticSurrogate::new(vec![0.5], 0.0, 0.6).is_err());
        assert!(CriticSurrogate::new(vec![0.5], 0.0, 0.0).is_err());
    }

    #[test]
    fn critic_certain_context_moves_up() {
        let c = CriticSurrogate::new(vec![1.0], 0.0, 0.1).unwrap().constant_step();
        let mut prev = c.values[0];
        let mut c = c;
        for seed in 0..20 {
            c = c.train_critic(5, seed);
            assert!(c.values[0] >= prev);
            prev = c.values[0];
        }
        assert!(prev > 0.9);
    }

    #[test]
    fn critic_minimises_empirical_brier() {
        let qs: Vec<f64> = (0..5).map(|i| 0.1 + 0.2 * i as f64).collect();
        let c = CriticSurrogate::new(qs, 0.7, 0.5).unwrap().recording().train_until(50, 99);
        let log = c.log.as_ref().unwrap();
        for ctx in 0..c.contexts.len() {
            let outs: Vec<f64> = log.iter().filter(|(k, _)| *k == ctx).map(|&(_, o)| o as u8 as f64).collect();
            let sse = |v: f64| outs.iter().map(|o| (o - v).powi(2)).sum::<f64>();
            let mean = outs.iter().sum::<f64>() / outs.len() as f64;
            let fitted = sse(c.values[ctx]);
            assert!(sse(mean) <= fitted + 1e-9);
            for other in [0.0, 0.25, 0.5, 0.75, 1.0, mean + 0.01] {
                assert!(sse(other) >= fitted - 1e-9);
            }
        }
    }

    #[test]
    fn reward_curves() {
        let c = expected_reward_curve(&RiskPrior::Uniform, 0.5);
        assert_eq!(c.p.len(), 1001);
        for (p, r) in c.p.iter().zip(&c.reward) {
            assert!((r - (p - p * p)).abs() < 1e-12);
        }
        let (p, r) = c.argmax();
        assert_eq!(p, 0.5);
        assert!((r - 0.25).abs() < 1e-12);
        let c = expected_reward_curve(&RiskPrior::Uniform, 0.0);
        assert_eq!(c.argmax().0, 0.0);
        let c = expected_reward_curve(&RiskPrior::beta00(0.01).unwrap(), 0.3);
        assert!((c.argmax().0 - 0.3).abs() <= 0.001 + 1e-12);
    }

    proptest! {
        #[test]
        fn report_maps_are_monotone(g in 0.05f64..5.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for m in [ReportMap::Calibrated, ReportMap::Power(g), ReportMap::Constant(0.3)] {
                let (pl, ph) = (m.apply(lo), m.apply(hi));
                prop_assert!(pl <= ph);
                prop_assert!((0.0..=1.0).contains(&pl) && (0.0..=1.0).contains(&ph));
            }
        }
    }
}
