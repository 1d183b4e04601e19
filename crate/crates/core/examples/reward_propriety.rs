//! Threshold rewards, risk-prior scoring rules and a propriety check.

use behavcal::rewards::{
    decide, expected_explicit_reward, reward_bounded, reward_brier, reward_ce, reward_explicit, reward_integrated,
    verify_propriety, Action, RiskPrior,
};
use behavcal::simulate::expected_reward_curve;

fn main() -> behavcal::Result<()> {
    let t = 0.75;
    println!("risk threshold t = {t}");
    for (action, valid) in [(Action::Ans, true), (Action::Ans, false), (Action::Abs, false)] {
        println!(
            "  {action:?} valid={valid:<5} explicit={:+.3} bounded={:+.3}",
            reward_explicit(action, valid, t)?,
            reward_bounded(action, valid, t)?
        );
    }
    for p in [0.6, 0.75, 0.9] {
        println!(
            "  belief {p}: answering pays {:+.3} in expectation -> {:?}",
            expected_explicit_reward(p, t)?,
            decide(p, t)
        );
    }

    let beta = RiskPrior::beta00(0.01)?;
    println!("\nintegrated rewards at p = 0.8");
    for valid in [true, false] {
        println!(
            "  valid={valid:<5} uniform={:+.4} (brier {:+.4})  beta00={:+.4} (ce {:+.4})",
            reward_integrated(valid, 0.8, &RiskPrior::Uniform),
            reward_brier(valid, 0.8),
            reward_integrated(valid, 0.8, &beta),
            reward_ce(valid, 0.8, 0.01)?
        );
    }

    println!("\nbest report on a 0.001 grid");
    for q in [0.1, 0.3, 0.7, 0.95] {
        println!(
            "  q = {q:<4}  uniform -> {:.3}  beta00 -> {:.3}",
            verify_propriety(&RiskPrior::Uniform, q, 0.001)?,
            verify_propriety(&beta, q, 0.001)?
        );
    }
    let (p, r) = expected_reward_curve(&beta, 0.3).argmax();
    println!("expected reward curve for q = 0.3 peaks at p = {p:.3} ({r:.4})");
    Ok(())
}
