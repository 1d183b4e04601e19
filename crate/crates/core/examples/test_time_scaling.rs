//! Test-time scaling with confidence: curves over k, and the case where
//! calibrated but flat confidences cannot pick the right sample.

use behavcal::simulate::{generate, AgentSpec, ReportMap};
use behavcal::tts::{exhaustive_accuracy, groups_from_dataset, scaling_curve, Sample, SampleGroup, Strategy};

fn main() -> behavcal::Result<()> {
    let mut spec = AgentSpec::new(ReportMap::Calibrated, 20, 2026);
    spec.samples_per_question = Some(16);
    spec.intra_spread = Some(4.0);
    let groups = groups_from_dataset(&generate(&spec)?)?;
    let ks = [1, 2, 4, 8, 16];
    println!("{:<9} {}", "strategy", ks.map(|k| format!("{:>13}", format!("k={k}"))).join(""));
    for st in Strategy::ALL {
        let curve = scaling_curve(&groups, st, &ks, 500, 1)?;
        let cells: String = curve.iter().map(|p| format!("{:>7.3}±{:<5.3}", p.accuracy, p.stderr)).collect();
        println!("{:<9} {cells}", st.to_string());
    }

    // Two questions; every guess for a question carries the same confidence.
    let flat = |g: &str, c: f64, valid: &[bool]| SampleGroup {
        group: g.to_owned(),
        samples: valid
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample {
                id: format!("{g}{i}"),
                answer: Some(format!("a{i}")),
                confidence: Some(c),
                valid: v,
            })
            .collect(),
    };
    let paradox = [flat("I", 0.5, &[true, false]), flat("II", 1.0 / 3.0, &[true, false, false])];
    for k in [1, 2] {
        println!(
            "flat confidences, k = {k}: maxconf = {}, mean = {}",
            exhaustive_accuracy(&paradox, Strategy::Maxconf, k)?,
            exhaustive_accuracy(&paradox, Strategy::Mean, k)?
        );
    }
    Ok(())
}
