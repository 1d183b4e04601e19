//! Sweep the risk threshold and check the behavioural-calibration objectives.
//!
//! The calibrated agent sees uniformly spread difficulty. The overconfident
//! one (`p = sqrt(q)`) gets a harder mix: on uniform difficulty its answered
//! accuracy `(1 + t²)/2` never drops below `t`. Keep in mind that TP(t) is
//! noisy wherever only a handful of records still answer.

use behavcal::behavior::{check_objectives, snr_gain, snr_interval, sweep, LogBase, ThresholdGrid};
use behavcal::metrics::predictive_accuracy;
use behavcal::simulate::{generate, AgentSpec, DifficultyPrior, ReportMap};

fn main() -> behavcal::Result<()> {
    let grid = ThresholdGrid::uniform(101)?;
    let agents = [
        ("calibrated", ReportMap::Calibrated, DifficultyPrior::Uniform),
        ("overconfident", ReportMap::Power(0.5), DifficultyPrior::Beta { a: 2.0, b: 5.0 }),
    ];
    for (name, report, difficulty) in agents {
        let mut spec = AgentSpec::new(report, 10_000, 42);
        spec.difficulty = difficulty;
        let ds = generate(&spec)?;
        let sw = sweep(&ds, &grid)?;
        let eps = sw.default_epsilon_h();

        println!("== {name}");
        println!("   t    acc    hal    abs     tp     fn");
        for i in (0..=100).step_by(20) {
            let show = |x: Option<f64>| x.map_or("    - ".to_owned(), |v| format!("{v:.3}"));
            println!(
                "{:.2}  {:.3}  {:.3}  {:.3}  {}  {}",
                sw.grid[i], sw.acc[i], sw.hal[i], sw.abs[i], show(sw.tp[i]), show(sw.fn_rate[i])
            );
        }
        println!(
            "SNR over [0.5, 1] = {:.2}, SNR-gain = {:.3}",
            snr_interval(&sw, 0.5, 1.0, eps)?,
            snr_gain(&sw, eps, LogBase::Natural)?
        );
        let r = check_objectives(&sw, predictive_accuracy(&ds)?, 0.05)?;
        println!(
            "adaptive risk {}, accuracy preservation {}, hallucination reduction {}, quantitative calibration {}",
            r.adaptive_risk, r.accuracy_preservation, r.hallucination_reduction, r.quantitative_calibration
        );
        if let Some(m) = r.diagnostics.worst_tp_margin {
            println!("worst TP(t) - t = {m:.3}\n");
        }
    }
    Ok(())
}
