//! Load a prediction log, validate it and print what was found.
//!
//! `cargo run --example ingest_jsonl -- [path]` (defaults to the bundled sample).

use behavcal::model::{load_jsonl, validate};

fn main() -> behavcal::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/responses.jsonl").to_owned());
    let ds = load_jsonl(&path)?;
    println!("{}: {} records", ds.label, ds.len());
    for r in &ds.records {
        println!(
            "  {:<4} valid={:<5} confidence={:<6} claims={} meta={:?}",
            r.id,
            r.valid,
            r.confidence.map_or("-".to_owned(), |p| p.to_string()),
            r.claims.len(),
            r.meta
        );
    }

    let summary = validate(&ds);
    println!(
        "{} with confidence, {} claims ({} labelled), {} warnings",
        summary.with_confidence,
        summary.claims,
        summary.labeled_claims,
        summary.warnings.len()
    );
    for w in &summary.warnings {
        println!("  [{:?}] {}: {}", w.severity, w.id.as_deref().unwrap_or("-"), w.message);
    }
    Ok(())
}
