//! Library-level pipelines over simulated data.

use behavcal::claims::Aggregation;
use behavcal::metrics::{calibration_diagram, smece, SmeceConfig};
use behavcal::model::read_jsonl;
use behavcal::simulate::{generate, AgentSpec, ReportMap};

#[test]
fn jsonl_round_trip() {
    let mut spec = AgentSpec::new(ReportMap::Power(0.7), 200, 4);
    spec.n_claims = Some(2);
    let ds = generate(&spec).unwrap();
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf).unwrap();
    let back = read_jsonl(buf.as_slice(), ds.label.clone()).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn calibrated_diagram_tracks_diagonal() {
    let ds = generate(&AgentSpec::new(ReportMap::Calibrated, 10_000, 42)).unwrap();
    let d = calibration_diagram(&ds, 0.05, &SmeceConfig::default()).unwrap();
    assert_eq!(d.grid.len(), 201);
    for i in 0..d.grid.len() {
        if !d.low_density[i] {
            assert!((d.smoothed_accuracy[i] - d.grid[i]).abs() <= 0.05, "t = {}", d.grid[i]);
        }
    }
    assert!((d.density_mass() - 1.0).abs() < 1e-6);
}

#[test]
fn product_aggregation_is_calibrated_for_independent_chains() {
    let cfg = SmeceConfig::default();
    let mut last = f64::INFINITY;
    for n in [500, 4000, 20_000] {
        let mut spec = AgentSpec::new(ReportMap::Calibrated, n, 13);
        spec.n_claims = Some(5);
        let ds = generate(&spec).unwrap().with_aggregated_confidence(Aggregation::Product).unwrap();
        let (s, _) = smece(&ds, &cfg).unwrap();
        assert!(s.value < last + 0.005, "n = {n}: {}", s.value);
        last = s.value;
    }
    assert!(last <= 0.02, "{last}");
    // the weakest-claim view overstates confidence for long chains
    let mut spec = AgentSpec::new(ReportMap::Calibrated, 20_000, 13);
    spec.n_claims = Some(5);
    let min = generate(&spec).unwrap().with_aggregated_confidence(Aggregation::Min).unwrap();
    assert!(smece(&min, &cfg).unwrap().0.value > last);
}
