//! A tabular critic trained with squared error on 0/1 outcomes converges to
//! each context's success probability.

use behavcal::simulate::CriticSurrogate;

fn main() -> behavcal::Result<()> {
    let contexts: Vec<f64> = (0..10).map(|i| 0.1 + 0.8 * i as f64 / 9.0).collect();
    let mut critic = CriticSurrogate::new(contexts, 0.5, 0.5)?;
    for (round, visits) in [10u64, 100, 1000, 5000].into_iter().enumerate() {
        critic = critic.train_until(visits, round as u64);
        println!("min visits {visits:>5}: steps {:>6}, max |v - q| = {:.4}", critic.steps, critic.max_error());
    }
    for (q, v) in critic.contexts.iter().zip(&critic.values) {
        println!("  q = {q:.3}  v = {v:.3}");
    }

    let fixed = CriticSurrogate::new(vec![0.3], 0.0, 0.05)?.constant_step().train_critic(20_000, 9);
    println!("constant step 0.05 after 20000 steps: v = {:.3} (q = 0.3)", fixed.values[0]);
    Ok(())
}
