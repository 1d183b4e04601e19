//! Generate synthetic agents and write them as JSONL.

use behavcal::simulate::{generate, AgentSpec};

fn main() -> behavcal::Result<()> {
    let spec = AgentSpec::from_config_str(
        "# an overconfident agent on hard questions\n\
         agent = power(0.5)\n\
         difficulty = beta(2,5)\n\
         n = 5\n\
         n_claims = 3\n\
         seed = 1\n",
    )?;
    let ds = generate(&spec)?;
    ds.write_jsonl(std::io::stdout().lock())?;

    let again = generate(&spec)?;
    eprintln!("deterministic: {}", again == ds);
    Ok(())
}
