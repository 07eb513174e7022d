mod common;

use nacert::dynamics::{lookup_system, parse_expr, DynamicalSystem, TimeKind};
use nacert::network::Activation;
use nacert::taylor::taylor_expand;
use nacert::verifier::{
    confirm_counterexample, residual_bound, CheckConfig, Reference, Side, VerificationTask, Verdict, Verifier,
};
use nacert::Hyperrectangle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(bx: &Hyperrectangle, per_axis: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = (bx.lower(), bx.upper());
    let mut pts = vec![vec![]];
    for i in 0..bx.dim() {
        let (a, b) = (lo[i], hi[i]);
        pts = pts
            .into_iter()
            .flat_map(|p| {
                (0..per_axis).map(move |k| {
                    let mut q = p.clone();
                    q.push(a + (b - a) * k as f64 / (per_axis - 1) as f64);
                    q
                })
            })
            .collect();
    }
    pts
}

fn one_d_system(src: &str) -> DynamicalSystem {
    let d = Hyperrectangle::from_bounds(&[-2.0, -2.0], &[2.0, 2.0]).unwrap();
    DynamicalSystem::new("p", vec![parse_expr(src, &[]).unwrap()], d, 0.1, TimeKind::Continuous).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn residual_bound_dominates_grid_search(
        seed in any::<u64>(),
        src in prop::sample::select(vec!["x0*x1", "sin(x0) + x1^2", "exp(x0/2) - x1", "x0^3 - x1"]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = one_d_system(src);
        let net = common::random_net(&mut rng, &[2, 8, 8, 1], &[Activation::Relu]);
        let bx = common::random_subbox(&mut rng, &sys.domain, 0.6);
        let enc = taylor_expand(&sys, &bx).unwrap();
        let band = enc.row(0);
        let up = residual_bound(&net, &enc, &bx, 0, Side::Upper).unwrap();
        let low = residual_bound(&net, &enc, &bx, 0, Side::Lower).unwrap();
        for x in grid(&bx, 100) {
            let y = net.forward(&x).unwrap()[0];
            prop_assert!(band.upper_at(&x) - y <= up + 1e-9);
            prop_assert!(y - band.lower_at(&x) <= low + 1e-9);
        }
    }
}

#[test]
fn certified_boxes_survive_resampling() {
    let sys = lookup_system("nl2").unwrap();
    let net = nacert::network::Network::load(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../weights/nl2_small.json"),
    )
    .unwrap();
    let min_width = vec![1e-4; 2];
    let v = Verifier::new(Reference::analytic(sys.clone()), net, CheckConfig::new(min_width)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut certified = 0;
    for _ in 0..300 {
        let bx = common::random_subbox(&mut rng, &sys.domain, 0.1);
        let task = VerificationTask { bx: bx.clone(), j: rng.gen_range(0..2), epsilon: 0.081, depth: 0 };
        match v.check_box(&task).unwrap() {
            Verdict::Certified => {
                certified += 1;
                for _ in 0..500 {
                    let x = bx.sample(&mut rng);
                    assert!(v.error_at(&x, task.j).unwrap() <= task.epsilon + 1e-9);
                }
            }
            Verdict::Falsified { x, error } => {
                assert!(bx.contains(&x));
                assert!(error > task.epsilon);
                assert!(confirm_counterexample(&v.reference, &v.net, &x, task.j, task.epsilon).unwrap());
            }
            Verdict::Split { axis, .. } => assert!(axis < 2),
        }
    }
    assert!(certified > 0);
}
