//! Parse inline claim markup and turn claim confidences into a response
//! confidence.

use behavcal::claims::{aggregate_min, aggregate_product, parse_claims};
use behavcal::simulate::{generate_claims, ReportMap};

fn main() -> behavcal::Result<()> {
    let text = r#"First, <claim confidence="0.95" rationale="arithmetic">12 * 7 = 84</claim>.
Then <claim confidence='0.6'>84 is the number of days</claim>, so the answer is 84."#;
    let doc = parse_claims(text)?;
    for span in &doc.spans {
        println!("[{}..{}] {:.2}  {}", span.start, span.end, span.claim.confidence, span.claim.text);
    }
    let ps = doc.confidences();
    println!("product = {:.4}, min = {:.4}", aggregate_product(&ps)?, aggregate_min(&ps)?);

    // Ten steps that are each 80% likely to be right leave little room for the whole.
    let chain = [0.8; 10];
    println!("ten 0.8 claims: product = {:.4}", aggregate_product(&chain)?);
    let n = 20_000;
    let ok = (0..n)
        .filter(|&seed| generate_claims(&chain, &ReportMap::Calibrated, seed).map(|c| c.1).unwrap_or(false))
        .count();
    println!("simulated chains fully correct: {:.4}", ok as f64 / n as f64);

    if let Err(e) = parse_claims("<claim confidence=\"0.5\">outer <claim confidence=\"0.4\">inner</claim></claim>") {
        println!("nested markup rejected: {e}");
    }
    Ok(())
}
