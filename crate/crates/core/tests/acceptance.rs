//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always show.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use behavcal::behavior::{check_objectives, snr_gain, sweep, LogBase, RiskSweep, ThresholdGrid};
use behavcal::claims::aggregate_product;
use behavcal::metrics::{confidence_auc, predictive_accuracy, smece, SmeceConfig};
use behavcal::model::{Dataset, PredictionRecord};
use behavcal::rewards::{
    decide, optimal_threshold_policy, reward_brier, reward_ce, reward_integrated, verify_propriety, RiskPrior,
    TabulatedCdf,
};
use behavcal::simulate::{generate, generate_claims, AgentSpec, CriticSurrogate, DifficultyPrior, ReportMap};
use behavcal::tts::{exhaustive_accuracy, groups_from_dataset, scaling_curve, Sample, SampleGroup, Strategy};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn dataset(pairs: &[(f64, bool)]) -> Dataset {
    let records = pairs
        .iter()
        .enumerate()
        .map(|(i, &(p, v))| PredictionRecord::new(format!("r{i}"), v, Some(p)))
        .collect();
    Dataset::from_records("acceptance", records).unwrap()
}

fn full_sweep(ds: &Dataset) -> RiskSweep {
    sweep(ds, &ThresholdGrid::uniform(101).unwrap()).unwrap()
}

fn reward_equivalences() -> Outcome {
    let start = Instant::now();
    let beta = RiskPrior::beta00(0.01).unwrap();
    let (mut worst_u, mut worst_b) = (0.0f64, 0.0f64);
    for i in 0..=1000 {
        let p = i as f64 / 1000.0;
        for valid in [false, true] {
            worst_u = worst_u.max((reward_integrated(valid, p, &RiskPrior::Uniform) - reward_brier(valid, p)).abs());
            worst_b = worst_b.max((reward_integrated(valid, p, &beta) - reward_ce(valid, p, 0.01).unwrap()).abs());
        }
    }
    ensure(worst_u <= 1e-12, || format!("uniform vs brier max diff {worst_u:e}"))?;
    ensure(worst_b <= 1e-9, || format!("beta00 vs ce max diff {worst_b:e}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("max |Δ| uniform {worst_u:.1e}, beta00 {worst_b:.1e}"))
}

fn strict_propriety() -> Outcome {
    let start = Instant::now();
    let tabulated = RiskPrior::Tabulated(TabulatedCdf::from_fn(10_001, |t| t).unwrap());
    let priors = [
        ("uniform", RiskPrior::Uniform),
        ("beta00(0.01)", RiskPrior::beta00(0.01).unwrap()),
        ("tabulated-uniform", tabulated),
    ];
    let mut worst = 0.0f64;
    for (name, prior) in &priors {
        for j in 0..=20 {
            let q = j as f64 * 0.05;
            let p = verify_propriety(prior, q, 0.001).map_err(|e| e.to_string())?;
            worst = worst.max((p - q).abs());
            ensure((p - q).abs() <= 0.001 + 1e-12, || format!("{name}: q = {q}, p* = {p}"))?;
        }
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("63 (prior, q) cases, max |p* - q| = {worst:.1e}"))
}

fn bayes_threshold_rule() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    // the explicit reward is defined for t in [0, 1)
    for i in 0..=100 {
        for j in 0..100 {
            let (p, t) = (i as f64 / 100.0, j as f64 / 100.0);
            let opt = optimal_threshold_policy(p, t).map_err(|e| e.to_string())?;
            ensure(opt == decide(p, t), || format!("disagree at p = {p}, t = {t}"))?;
            cases += 1;
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("{cases} (p, t) pairs agree"))
}

fn aggregation_number() -> Outcome {
    let agg = aggregate_product(&[0.8; 10]).map_err(|e| e.to_string())?;
    ensure((agg - 0.1074).abs() <= 1e-4, || format!("product of ten 0.8s = {agg}"))?;
    let n = 100_000u64;
    let hits = (0..n)
        .filter(|&s| generate_claims(&[0.8; 10], &ReportMap::Calibrated, s).unwrap().1)
        .count();
    let rate = hits as f64 / n as f64;
    ensure((rate - 0.1074).abs() <= 0.01, || format!("simulated P(final valid) = {rate}"))?;
    Ok(format!("product = {agg:.6}, simulated = {rate:.4}"))
}

fn snr_null_and_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let always: Vec<(f64, bool)> = (0..500).map(|_| (1.0, rng.random_bool(0.6))).collect();
    let ds = dataset(&always);
    let sw = full_sweep(&ds);
    let gain = snr_gain(&sw, sw.default_epsilon_h(), LogBase::Natural).map_err(|e| e.to_string())?;
    ensure(gain == 0.0, || format!("never-abstaining gain = {gain:e}"))?;

    let mut tested = vec![ds];
    for report in [ReportMap::Calibrated, ReportMap::Power(0.5), ReportMap::Power(2.0), ReportMap::Constant(0.7)] {
        tested.push(generate(&AgentSpec::new(report, 3000, 11)).unwrap());
    }
    for _ in 0..10 {
        let n = rng.random_range(1..400);
        let levels = rng.random_range(2..50);
        let pairs: Vec<_> = (0..n)
            .map(|_| (rng.random_range(0..=levels) as f64 / levels as f64, rng.random_bool(0.5)))
            .collect();
        tested.push(dataset(&pairs));
    }
    let mut worst = 0.0f64;
    for ds in &tested {
        let sw = full_sweep(ds);
        for i in 0..sw.grid.len() {
            worst = worst.max((sw.acc[i] + sw.hal[i] + sw.abs[i] - 1.0).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("partition residual {worst:e}"))?;
    Ok(format!("gain = 0 exactly; partition residual {worst:.1e} over {} datasets", tested.len()))
}

fn ideal_agent_objectives() -> Outcome {
    let start = Instant::now();
    let cal = generate(&AgentSpec::new(ReportMap::Calibrated, 10_000, 42)).unwrap();
    let sw = full_sweep(&cal);
    let r = check_objectives(&sw, predictive_accuracy(&cal).unwrap(), 0.05).map_err(|e| e.to_string())?;
    ensure(r.all_pass(), || format!("calibrated agent failed: {r:?}"))?;

    // Under uniform difficulty a square-root report map still answers with
    // accuracy (1 + t²)/2 ≥ t, so the violation needs a harder question mix.
    let mut over = AgentSpec::new(ReportMap::Power(0.5), 10_000, 42);
    over.difficulty = DifficultyPrior::Beta { a: 2.0, b: 5.0 };
    let ds = generate(&over).unwrap();
    let sw = full_sweep(&ds);
    let r2 = check_objectives(&sw, predictive_accuracy(&ds).unwrap(), 0.05).map_err(|e| e.to_string())?;
    ensure(!r2.quantitative_calibration, || "overconfident agent passed calibration".to_owned())?;
    let margin = r2.diagnostics.worst_tp_margin.unwrap();
    ensure(margin < -0.05, || format!("worst TP(t) - t = {margin}"))?;
    within(start.elapsed(), 10.0)?;
    let v = &r2.diagnostics.tp_violations;
    Ok(format!(
        "calibrated passes 4/4; overconfident worst TP(t) - t = {margin:.3}, violations on t in [{}, {}]",
        v[0],
        v[v.len() - 1]
    ))
}

fn smece_sanity() -> Outcome {
    let cfg = SmeceConfig::default();
    let cal = generate(&AgentSpec::new(ReportMap::Calibrated, 10_000, 42)).unwrap();
    let (s, _) = smece(&cal, &cfg).map_err(|e| e.to_string())?;
    ensure(s.value <= 0.03, || format!("calibrated smECE {}", s.value))?;
    let point = dataset(&[(1.0, true); 200]);
    let (sp, _) = smece(&point, &cfg).map_err(|e| e.to_string())?;
    ensure(sp.value <= 0.005, || format!("point-mass smECE {}", sp.value))?;
    let mut shuffled = cal.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in (1..shuffled.records.len()).rev() {
        let j = rng.random_range(0..=i);
        shuffled.records.swap(i, j);
    }
    let (ss, _) = smece(&shuffled, &cfg).map_err(|e| e.to_string())?;
    ensure(ss.value == s.value, || format!("permuted smECE {} != {}", ss.value, s.value))?;
    Ok(format!("calibrated {:.4}, point mass {:.1e}, permutation exact", s.value, sp.value))
}

fn pairwise_auc(pairs: &[(f64, bool)]) -> f64 {
    let (mut total, mut count) = (0.0, 0.0);
    for &(pc, _) in pairs.iter().filter(|s| s.1) {
        for &(pi, _) in pairs.iter().filter(|s| !s.1) {
            total += if pc > pi {
                1.0
            } else if pc == pi {
                0.5
            } else {
                0.0
            };
            count += 1.0;
        }
    }
    total / count
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst, mut worst_cube) = (0.0f64, 0.0f64);
    for d in 0..50 {
        let n = rng.random_range(2..=1000);
        // alternate between tie-heavy and continuous confidences
        let levels = if d % 2 == 0 { rng.random_range(2..20) } else { 0 };
        let mut pairs: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let p = if levels > 0 {
                    rng.random_range(0..=levels) as f64 / levels as f64
                } else {
                    rng.random::<f64>()
                };
                (p, rng.random_bool(p.clamp(0.05, 0.95)))
            })
            .collect();
        pairs[0].1 = true;
        pairs[1].1 = false;
        let auc = confidence_auc(&dataset(&pairs)).map_err(|e| e.to_string())?;
        worst = worst.max((auc - pairwise_auc(&pairs)).abs());
        let cubed: Vec<_> = pairs.iter().map(|&(p, v)| (p * p * p, v)).collect();
        worst_cube = worst_cube.max((confidence_auc(&dataset(&cubed)).unwrap() - auc).abs());
    }
    ensure(worst <= 1e-12, || format!("rank-sum vs pairwise {worst:e}"))?;
    ensure(worst_cube <= 1e-12, || format!("p -> p^3 changed AUC by {worst_cube:e}"))?;
    Ok(format!("50 datasets, max |Δ| {worst:.1e}, cube invariance {worst_cube:.1e}"))
}

fn critic_surrogate() -> Outcome {
    let start = Instant::now();
    let contexts: Vec<f64> = (0..10).map(|i| 0.1 + 0.8 * i as f64 / 9.0).collect();
    let mut good = 0;
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let c = CriticSurrogate::new(contexts.clone(), 0.5, 0.5)
            .map_err(|e| e.to_string())?
            .train_until(5000, seed);
        worst = worst.max(c.max_error());
        if c.max_error() <= 0.05 {
            good += 1;
        }
    }
    ensure(good >= 99, || format!("only {good}/100 seeds converged"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("{good}/100 seeds within 0.05 (worst {worst:.4})"))
}

fn paradox_groups() -> Vec<SampleGroup> {
    let mk = |g: &str, conf: f64, valid: &[bool]| SampleGroup {
        group: g.to_owned(),
        samples: valid
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample {
                id: format!("{g}-{i}"),
                answer: Some(format!("answer-{i}")),
                confidence: Some(conf),
                valid: v,
            })
            .collect(),
    };
    vec![
        mk("I", 1.0 / 2.0, &[true, false]),
        mk("II", 1.0 / 3.0, &[true, false, false]),
    ]
}

fn tts_paradox() -> Outcome {
    let start = Instant::now();
    let groups = paradox_groups();
    let base = (Ratio::new(1u128, 2) + Ratio::new(1u128, 3)) / Ratio::from_integer(2u128);
    for k in [1, 2] {
        let got = exhaustive_accuracy(&groups, Strategy::Maxconf, k).map_err(|e| e.to_string())?;
        ensure(got == base, || format!("maxconf@{k} = {got}, base rate {base}"))?;
    }

    let mut spec = AgentSpec::new(ReportMap::Calibrated, 20, 2026);
    spec.samples_per_question = Some(16);
    spec.intra_spread = Some(4.0);
    let groups = groups_from_dataset(&generate(&spec).unwrap()).map_err(|e| e.to_string())?;
    let ks = [1, 2, 4, 8, 16];
    let maj = scaling_curve(&groups, Strategy::Majority, &ks, 1000, 1).map_err(|e| e.to_string())?;
    let wmaj = scaling_curve(&groups, Strategy::Majconf, &ks, 1000, 1).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for (a, b) in maj.iter().zip(&wmaj) {
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        ensure(b.accuracy >= a.accuracy - 2.0 * se, || {
            format!("k = {}: majconf {} < majority {} - 2·{se}", a.k, b.accuracy, a.accuracy)
        })?;
        detail.push(format!("k{}: {:.3}/{:.3}", a.k, b.accuracy, a.accuracy));
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("maxconf = base rate {base} exactly; majconf/majority {}", detail.join(", ")))
}

fn run_bin(args: &[&str], stdin: Option<&[u8]>) -> Result<Vec<u8>, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_behavcal"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(bytes) = stdin {
            pipe.write_all(bytes).map_err(|e| e.to_string())?;
        }
    }
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn end_to_end_determinism() -> Outcome {
    let pipeline = |threads: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let sim = run_bin(
            &["--threads", threads, "simulate", "--agent", "calibrated", "--n", "10000", "--seed", "42"],
            None,
        )?;
        let metrics = run_bin(&["--threads", threads, "metrics", "-"], Some(&sim))?;
        let sweep = run_bin(&["--threads", threads, "sweep", "-", "--format", "csv"], Some(&sim))?;
        Ok((metrics, sweep))
    };
    let first = pipeline("1")?;
    let second = pipeline("4")?;
    ensure(first.0 == second.0, || "metrics output differs between runs".to_owned())?;
    ensure(first.1 == second.1, || "sweep output differs between runs".to_owned())?;
    let report: serde_json::Value = serde_json::from_slice(&first.0).map_err(|e| e.to_string())?;
    let sm = report["smece"].as_f64().unwrap_or(f64::NAN);
    ensure(sm <= 0.03, || format!("pipeline smECE {sm}"))?;
    Ok(format!(
        "metrics {} B and sweep {} B identical across runs; smECE {sm:.4}",
        first.0.len(),
        first.1.len()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("reward equivalences", reward_equivalences),
        ("strict propriety", strict_propriety),
        ("Bayes threshold rule", bayes_threshold_rule),
        ("claim aggregation number", aggregation_number),
        ("SNR-gain null and partition identity", snr_null_and_partition),
        ("behavioural objectives of ideal and overconfident agents", ideal_agent_objectives),
        ("smooth ECE sanity", smece_sanity),
        ("AUC oracle equivalence", auc_oracle),
        ("critic surrogate convergence", critic_surrogate),
        ("test-time scaling paradox", tts_paradox),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_owned()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL  {:>2}. {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
