mod common;

use common::*;
use reach_under::oracle::{self, DirectionSample, DEFAULT_QUADRATURE_STEPS};
use reach_under::Zonotope;

#[test]
fn semigroup_composition() {
    for seed in 0..5u64 {
        let mut r = rng(500 + seed);
        let sys = random_system(&mut r, 3);
        let origin = Zonotope::origin(3);
        for (a, b) in [(0.3, 1.0), (0.5, 0.8), (0.0, 0.6)] {
            let shift = oracle::accurate_expm(&sys.a().transpose(), b - a);
            for d in &DirectionSample::new(3, 20, seed).directions {
                let direct = oracle::reach_support_oracle(&sys, b, d, DEFAULT_QUADRATURE_STEPS).value;
                let first = if a > 0.0 {
                    oracle::reach_support_oracle(&sys, a, &(&shift * d), DEFAULT_QUADRATURE_STEPS).value
                } else {
                    sys.x0().support(&(&shift * d))
                };
                let rest = oracle::support_of_reachable(sys.a(), &origin, sys.u(), b - a, d, DEFAULT_QUADRATURE_STEPS).value;
                assert!((direct - (first + rest)).abs() < 1e-8, "seed {seed}: {direct} vs {}", first + rest);
            }
        }
    }
}

#[test]
fn witnesses_lie_below_the_support() {
    for seed in 0..4u64 {
        let mut r = rng(600 + seed);
        let sys = random_system(&mut r, 3);
        let points = oracle::inner_witness_points(&sys, 0.9, 100, seed);
        for d in &DirectionSample::new(3, 60, seed).directions {
            let h = oracle::reach_support_oracle(&sys, 0.9, d, DEFAULT_QUADRATURE_STEPS).value;
            for p in &points {
                assert!(d.dot(p) <= h + 1e-8);
            }
        }
    }
}

#[test]
fn halving_the_step_barely_moves_the_oracle() {
    let systems = [double_integrator(), random_system(&mut rng(700), 3), random_system(&mut rng(701), 4)];
    for sys in &systems {
        let n = sys.dim();
        for d in &DirectionSample::new(n, 40, 1).directions {
            let coarse = oracle::reach_support_oracle(sys, 1.0, d, DEFAULT_QUADRATURE_STEPS / 2).value;
            let fine = oracle::reach_support_oracle(sys, 1.0, d, DEFAULT_QUADRATURE_STEPS).value;
            assert!((coarse - fine).abs() < 1e-9);
        }
    }
}

#[test]
fn closed_form_region_support() {
    // h(d) of {x²/2 ≤ y ≤ x − x²/2 + 1, 0 ≤ x ≤ 1}, evaluated by dense sampling
    // of its two boundary curves
    let sys = double_integrator();
    for d in &DirectionSample::new(2, 50, 8).directions {
        let m = 200_000;
        let mut best = f64::NEG_INFINITY;
        for k in 0..=m {
            let x = k as f64 / m as f64;
            for y in [x * x / 2.0, x - x * x / 2.0 + 1.0] {
                best = best.max(d[0] * x + d[1] * y);
            }
        }
        let h = oracle::reach_support_oracle(&sys, 1.0, d, DEFAULT_QUADRATURE_STEPS).value;
        assert!((h - best).abs() < 1e-9, "{d:?}: {h} vs {best}");
    }
}
