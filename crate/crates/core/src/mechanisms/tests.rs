use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::density::Density1d;
use crate::grid::Grid;
use crate::myerson::optimal_utility_1d;
use crate::reduced::{solve_reduced, PrimalProblem};

fn uniform(n: usize) -> DistributionSpec {
    DistributionSpec::uniform(n)
}

fn one(x: &[f64]) -> Vec<Vec<f64>> {
    x.iter().map(|&v| vec![v]).collect()
}

#[test]
fn second_price_examples() {
    let sp = second_price_1d(&uniform(1), 2).unwrap();
    assert!((sp.reserve - 0.5).abs() < 1e-9);
    let out = sp.evaluate(&one(&[0.8, 0.6]));
    assert_eq!(out.allocation[0], vec![1.0, 0.0]);
    assert!((out.transfers[0] - 0.6).abs() < 1e-12 && out.transfers[1] == 0.0);
    let out = sp.evaluate(&one(&[0.8, 0.3]));
    assert!((out.transfers[0] - 0.5).abs() < 1e-9);
    assert_eq!(sp.evaluate(&one(&[0.4, 0.3])), Outcome::nothing(1, 2));
    let tie = sp.evaluate(&one(&[0.7, 0.7]));
    assert_eq!(tie.allocation[0], vec![0.5, 0.5]);
}

#[test]
fn second_price_needs_a_regular_density() {
    let bridged = Density1d::triangle_mixture(&[(0.4, 0.4, 0.6), (0.6, 0.7, 0.9)], 0.02, 51).unwrap();
    let rho = DistributionSpec::Product { factors: vec![bridged] };
    assert!(matches!(second_price_1d(&rho, 2), Err(Error::Unsupported(_))));
    assert!(second_price_1d(&uniform(2), 2).is_err());
}

#[test]
fn lifted_optimum_is_second_price_with_reserve() {
    let u = optimal_utility_1d(&uniform(1), 2, 201).unwrap();
    let lift = lift_argmax(&u, 2).unwrap();
    let sp = second_price_1d(&uniform(1), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1.0 / 200.0;
    for _ in 0..2000 {
        let x = [rng.gen::<f64>(), rng.gen::<f64>()];
        if (x[0] - x[1]).abs() < 2.0 * h || x.iter().any(|v| (v - 0.5).abs() < 2.0 * h) {
            continue;
        }
        let (a, b) = (lift.evaluate(&one(&x)), sp.evaluate(&one(&x)));
        assert_eq!(a.allocation, b.allocation, "{x:?}");
        for j in 0..2 {
            assert!((a.transfers[j] - b.transfers[j]).abs() < 1e-6, "{x:?}: {:?} vs {:?}", a.transfers, b.transfers);
        }
    }
}

#[test]
fn single_bidder_lift_is_the_reduced_mechanism() {
    let grid = Grid::new(2, 9).unwrap();
    let u = UtilityGrid::from_fn(&grid, |x| (x[0] + x[1] - 0.8).max(0.0).max(x[0] - 0.6));
    let lift = lift_argmax(&u, 1).unwrap();
    let x = vec![0.9, 0.2];
    let out = lift.evaluate(&[x.clone()]);
    let g = [lift.gradient(&x, 0), lift.gradient(&x, 1)];
    assert_eq!(out.allocation, vec![vec![g[0]], vec![g[1]]]);
    let expect = g[0] * x[0] + g[1] * x[1] - u.grid.interpolate(&u.u, &x);
    assert!((out.transfers[0] - expect).abs() < 1e-14);
}

#[test]
fn zero_utility_allocates_nothing() {
    let grid = Grid::new(1, 5).unwrap();
    let lift = lift_argmax(&UtilityGrid::from_fn(&grid, |_| 0.0), 3).unwrap();
    assert_eq!(lift.evaluate(&one(&[0.2, 0.9, 0.5])), Outcome::nothing(1, 3));
}

#[test]
fn revenue_oracles() {
    let posted = PostedPrice { price: 0.5 };
    let est = estimate_revenue(&posted, &uniform(1), 200_000, 1).unwrap();
    assert!((est.mean - 0.25).abs() < 3.0 * est.std_error, "{est:?}");
    let sp = second_price_1d(&uniform(1), 2).unwrap();
    let est = estimate_revenue(&sp, &uniform(1), 200_000, 2).unwrap();
    assert!((est.mean - 5.0 / 12.0).abs() < 3.0 * est.std_error, "{est:?}");
    assert!(est.max_overallocation <= 1e-12);
    let zero = MechanismSpec::Zero { n: 2, m: 3 }.build();
    let est = estimate_revenue(zero.as_ref(), &uniform(2), 10_000, 3).unwrap();
    assert_eq!((est.mean, est.std_error), (0.0, 0.0));
}

#[test]
fn estimates_are_reproducible() {
    let sp = second_price_1d(&uniform(1), 3).unwrap();
    let a = estimate_revenue(&sp, &uniform(1), 50_000, 9).unwrap();
    let b = estimate_revenue(&sp, &uniform(1), 50_000, 9).unwrap();
    let c = estimate_revenue(&sp, &uniform(1), 50_000, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.mean, c.mean);
}

#[test]
fn lifted_lp_mechanisms_match_their_reduced_value() {
    for (n, m, k) in [(1, 2, 201), (2, 1, 17)] {
        let sol = solve_reduced(&PrimalProblem::auction(n, m, uniform(n), k)).unwrap();
        let lift = lift_argmax(&sol.utility, m).unwrap();
        let est = estimate_revenue(&lift, &uniform(n), 100_000, 5).unwrap();
        assert!((est.mean - sol.value).abs() < 3.0 * est.std_error + 2e-2, "{n}x{m}: {} vs {}", est.mean, sol.value);
        assert!(est.max_overallocation <= 1e-12);
    }
}

#[test]
fn second_price_is_consistent_with_the_optimal_reduced_form() {
    let u = optimal_utility_1d(&uniform(1), 2, 4001).unwrap();
    let sp = second_price_1d(&uniform(1), 2).unwrap();
    let r = check_reduced_consistency(&sp, &u, &uniform(1), 400_000, 4, 20, 0.0).unwrap();
    assert!(r.allocation_consistent && r.transfer_consistent, "{r:?}");
}

#[test]
fn degenerate_lift_has_zero_deviation() {
    let sol = solve_reduced(&PrimalProblem::auction(2, 1, uniform(2), 9)).unwrap();
    let lift = lift_argmax(&sol.utility, 1).unwrap();
    let r = check_reduced_consistency(&lift, &sol.utility, &uniform(2), 20_000, 1, 4, 0.0).unwrap();
    assert_eq!((r.max_allocation_dev, r.max_transfer_dev), (0.0, 0.0));
    assert!(r.allocation_consistent && r.transfer_consistent);
}

/// Wraps a rule and perturbs it.
struct Tampered<M> {
    inner: M,
    surcharge: f64,
    first_price: bool,
}

impl<M: MechanismRule> MechanismRule for Tampered<M> {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn m(&self) -> usize {
        self.inner.m()
    }
    fn provenance(&self) -> Provenance {
        Provenance::Custom
    }
    fn evaluate(&self, profile: &[Vec<f64>]) -> Outcome {
        let mut out = self.inner.evaluate(profile);
        for j in 0..out.transfers.len() {
            out.transfers[j] += self.surcharge;
            if self.first_price {
                out.transfers[j] = out.allocation[0][j] * profile[j][0];
            }
        }
        out
    }
}

#[test]
fn corrupted_payments_are_flagged() {
    let u = optimal_utility_1d(&uniform(1), 2, 401).unwrap();
    let sp = second_price_1d(&uniform(1), 2).unwrap();
    let bad = Tampered { inner: sp, surcharge: 0.1, first_price: false };
    let r = check_reduced_consistency(&bad, &u, &uniform(1), 50_000, 4, 10, 0.0).unwrap();
    assert!(!r.transfer_consistent);
    let ic = verify_ic_ir(&bad, &uniform(1), &IcIrConfig { expost_samples: 1000, opponents: 500, ..Default::default() }).unwrap();
    assert!(ic.ir_violations > 0 && ic.expost_ir_violations > 0);
}

#[test]
fn incentive_checks() {
    let cfg = IcIrConfig { probe_k: 21, opponents: 2000, expost_samples: 50_000, seed: 3, tol: 1e-9 };
    let sp = second_price_1d(&uniform(1), 2).unwrap();
    let r = verify_ic_ir(&sp, &uniform(1), &cfg).unwrap();
    assert_eq!((r.ic_violations, r.ir_violations, r.expost_ir_violations, r.feasibility_violations), (0, 0, 0, 0), "{r:?}");
    let posted = PostedPrice { price: 0.5 };
    let r = verify_ic_ir(&posted, &uniform(1), &cfg).unwrap();
    assert_eq!((r.ic_violations, r.ir_violations), (0, 0));
    // Truthful utility (x − 1/2)₊ on the probes.
    assert!(r.max_ic_gain <= 1e-12);
    let first = Tampered { inner: sp, surcharge: 0.0, first_price: true };
    let r = verify_ic_ir(&first, &uniform(1), &cfg).unwrap();
    assert!(r.ic_violations > 0 && r.expost_ir_violations == 0);
}

#[test]
fn lifted_two_item_mechanism_is_ex_post_ir_and_feasible() {
    let sol = solve_reduced(&PrimalProblem::auction(2, 2, uniform(2), 9)).unwrap();
    let lift = lift_argmax(&sol.utility, 2).unwrap();
    let cfg = IcIrConfig { probe_k: 5, opponents: 300, expost_samples: 20_000, seed: 1, tol: 1e-9 };
    let r = verify_ic_ir(&lift, &uniform(2), &cfg).unwrap();
    assert_eq!((r.expost_ir_violations, r.feasibility_violations), (0, 0), "{r:?}");
}

#[test]
fn rules_are_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sol = solve_reduced(&PrimalProblem::auction(2, 3, uniform(2), 7)).unwrap();
    let lift = lift_argmax(&sol.utility, 3).unwrap();
    let sp = second_price_1d(&uniform(1), 3).unwrap();
    for _ in 0..300 {
        let mut perm: Vec<usize> = (0..3).collect();
        perm.shuffle(&mut rng);
        for (rule, n) in [(&lift as &dyn MechanismRule, 2), (&sp as &dyn MechanismRule, 1)] {
            let x: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&j| x[j].clone()).collect();
            let (a, b) = (rule.evaluate(&x), rule.evaluate(&permuted));
            for (pos, &j) in perm.iter().enumerate() {
                for i in 0..n {
                    assert_eq!(b.allocation[i][pos], a.allocation[i][j]);
                }
                assert_eq!(b.transfers[pos], a.transfers[j]);
            }
        }
    }
}

#[test]
fn mechanism_specs_round_trip() {
    let spec = MechanismSpec::SecondPrice(second_price_1d(&uniform(1), 2).unwrap());
    let text = serde_json::to_string(&spec).unwrap();
    assert!(text.contains("\"kind\":\"second_price\""));
    let back: MechanismSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    assert_eq!(back.build().provenance(), Provenance::SecondPrice1d);
}
