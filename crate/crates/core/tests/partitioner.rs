use std::path::Path;
use std::time::Duration;

use nacert::dynamics::lookup_system;
use nacert::network::Network;
use nacert::partitioner::{verify_domain, Mode, PartitionConfig};
use nacert::report::{CoverageReport, RegionStatus};
use nacert::verifier::Reference;
use nacert::Hyperrectangle;

fn weights(name: &str) -> Network {
    Network::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../weights").join(name)).unwrap()
}

fn run(system: &str, net: &str, eps: Option<f64>, config: &PartitionConfig) -> CoverageReport {
    let sys = lookup_system(system).unwrap();
    let eps = eps.unwrap_or(sys.default_epsilon);
    let d = sys.domain.clone();
    verify_domain(Reference::analytic(sys), weights(net), &d, eps, config).unwrap()
}

fn cfg(workers: usize) -> PartitionConfig {
    PartitionConfig { workers, ..Default::default() }
}

/// Per output, the terminal boxes must have disjoint interiors and cover the domain.
fn assert_tiling(r: &CoverageReport) {
    let dv = r.domain.volume();
    for j in 0..r.m {
        let boxes: Vec<&Hyperrectangle> = r.regions.iter().filter(|x| x.j == j).map(|x| &x.bx).collect();
        let total: f64 = boxes.iter().map(|b| b.volume()).sum();
        assert!((total - dv).abs() <= 1e-9 * dv, "output {j}: {total} vs {dv}");
        for b in &boxes {
            assert!(r.domain.contains_box(b, 0.0));
        }
        // disjointness via a sweep on the lower corner of axis 0
        let mut sorted = boxes.clone();
        sorted.sort_by(|a, b| a.lower_ref()[0].total_cmp(&b.lower_ref()[0]));
        for (k, a) in sorted.iter().enumerate() {
            for b in &sorted[k + 1..] {
                if b.lower_ref()[0] >= a.upper_ref()[0] {
                    break;
                }
                let overlap: f64 = (0..r.n)
                    .map(|i| (a.upper_ref()[i].min(b.upper_ref()[i]) - a.lower_ref()[i].max(b.lower_ref()[i])).max(0.0))
                    .product();
                assert!(overlap == 0.0, "overlapping boxes {a:?} {b:?}");
            }
        }
        let o = &r.per_output[j];
        let acc = o.certified_volume + o.counterexample_volume + o.unknown_volume;
        assert!((acc - dv).abs() <= 1e-9 * dv);
    }
}

fn same_partition(a: &CoverageReport, b: &CoverageReport) {
    assert_eq!(a.regions, b.regions);
    assert_eq!(a.counterexamples, b.counterexamples);
    assert_eq!(a.certified_fraction, b.certified_fraction);
    assert_eq!(a.boxes_checked, b.boxes_checked);
    assert_eq!(a.per_output, b.per_output);
}

#[test]
fn tiling_is_exhaustive() {
    for (sys, net) in [("jet_engine", "jet_engine_small.json"), ("steam_governor", "steam_governor_small.json")] {
        let r = run(sys, net, None, &cfg(2));
        assert_tiling(&r);
        assert_eq!(r.certified_fraction, 1.0);
    }
    // a failing run still accounts for every box
    let r = run("exponential", "exponential_small.json", Some(0.02), &cfg(2));
    assert_tiling(&r);
    assert!(r.certified_fraction < 1.0 && !r.counterexamples.is_empty());
}

#[test]
fn worker_count_does_not_change_the_report() {
    let one = run("exponential", "exponential_small.json", None, &cfg(1));
    let four = run("exponential", "exponential_small.json", None, &cfg(4));
    same_partition(&one, &four);
    let one = run("nl2", "nl2_small.json", Some(0.03), &cfg(1));
    let four = run("nl2", "nl2_small.json", Some(0.03), &cfg(4));
    same_partition(&one, &four);
}

#[test]
fn fixed_seed_is_deterministic() {
    let c = PartitionConfig { seed: 42, ..cfg(3) };
    let a = run("jet_engine", "jet_engine_small.json", Some(0.02), &c);
    let b = run("jet_engine", "jet_engine_small.json", Some(0.02), &c);
    same_partition(&a, &b);
}

#[test]
fn jet_engine_split_axes() {
    let r = run("jet_engine", "jet_engine_small.json", None, &cfg(1));
    // the second output is linear, so its reference band is exact
    assert!(r.per_output[1].remainder_splits.iter().all(|&c| c == 0));
    // the first is nonlinear in x only
    assert!(r.per_output[0].remainder_splits[0] > 0);
    assert_eq!(r.per_output[0].remainder_splits[1], 0);
}

#[test]
fn early_stop_flags_partial_reports() {
    let c = PartitionConfig { mode: Mode::EarlyStop, ..cfg(2) };
    let r = run("exponential", "exponential_small.json", Some(0.02), &c);
    assert!(r.partial);
    assert!(!r.counterexamples.is_empty());
    assert!(r.certified_fraction < 1.0);
    assert_tiling(&r);
}

#[test]
fn time_budget_leaves_unknown_volume() {
    let c = PartitionConfig { time_budget: Some(Duration::from_nanos(1)), ..cfg(1) };
    let r = run("exponential", "exponential_small.json", None, &c);
    assert!(r.budget_exhausted);
    assert!(r.regions.iter().any(|x| x.status == RegionStatus::Unknown));
    assert_tiling(&r);
}

#[test]
fn depth_floor_marks_unknown() {
    let c = PartitionConfig { max_depth: 1, ..cfg(1) };
    let r = run("exponential", "exponential_small.json", None, &c);
    assert!(r.max_depth <= 1);
    assert!(r.unknown_boxes().count() > 0);
    assert!(r.counterexamples.is_empty());
    assert_tiling(&r);
}

#[test]
fn outputs_can_be_restricted() {
    let c = PartitionConfig { outputs: Some(vec![1]), ..cfg(1) };
    let r = run("jet_engine", "jet_engine_small.json", None, &c);
    assert!(r.regions.iter().all(|x| x.j == 1));
    assert_eq!(r.per_output[1].certified_fraction, 1.0);
    assert_eq!(r.certified_fraction, 0.0);
}
