use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::orders::{law_of_gradient, stop_loss};

fn uniform() -> DistributionSpec {
    DistributionSpec::uniform(1)
}

fn one_d(d: Density1d) -> DistributionSpec {
    DistributionSpec::Product { factors: vec![d] }
}

/// Mixture 0.8·triangle on [0, 0.4] + 0.2·triangle on [0.6, 1] with a small
/// floor so the density stays positive.
pub(crate) fn bimodal() -> DistributionSpec {
    one_d(Density1d::triangle_mixture(&[(0.8, 0.0, 0.4), (0.2, 0.6, 1.0)], 0.02, 51).unwrap())
}

/// Two bumps high in the type space, so the envelope bridges over dips of
/// the revenue curve above the reserve.
fn bridged() -> DistributionSpec {
    one_d(Density1d::triangle_mixture(&[(0.4, 0.4, 0.6), (0.6, 0.7, 0.9)], 0.02, 51).unwrap())
}

#[test]
fn bridges_iron_the_allocation() {
    let rho = bridged();
    let iv = iron(&rho, 4097).unwrap();
    assert!(!iv.bridges.is_empty());
    let d = rho.marginal(0).unwrap();
    for br in &iv.bridges {
        // The bridge value averages V over the interval.
        let rule = Composite::new(10, 64);
        let mean = rule.integrate(br.a, br.b, &d.breakpoints(), |x| virtual_valuation(&d, x) * d.pdf(x))
            / (d.cdf(br.b) - d.cdf(br.a));
        assert!((mean - br.value).abs() < 1e-8, "{mean} vs {}", br.value);
        // Tangency at both ends.
        assert!((virtual_valuation(&d, br.a) - br.value).abs() < 1e-6);
        assert!((virtual_valuation(&d, br.b) - br.value).abs() < 1e-6);
    }
    for m in [2, 3] {
        let sol = solve_1item(&rho, m).unwrap();
        let br = iv.bridges.last().unwrap();
        let mid = 0.5 * (br.a + br.b);
        let (lo, hi) = (sol.allocation.derivative(br.a + 1e-6), sol.allocation.derivative(br.b - 1e-6));
        assert_eq!(lo, hi);
        assert_eq!(lo, sol.allocation.derivative(mid));
        let oracle = fine_grid_revenue(&rho, m, |x| sol.allocation.derivative(x));
        assert!((sol.revenue - oracle).abs() < 1e-6);
        assert!(sol.revenue > naive_threshold_revenue(&rho, m).unwrap());
    }
}

#[test]
fn uniform_virtual_valuation() {
    for i in 0..=10 {
        let x = i as f64 / 10.0;
        assert!((virtual_valuation(&Density1d::Uniform, x) - (2.0 * x - 1.0)).abs() < 1e-15);
    }
    assert_eq!(virtual_valuation(&Density1d::Uniform, 0.5), 0.0);
}

#[test]
fn virtual_valuation_matches_finite_differences() {
    // ρ ∝ max(2x, ε); its CDF written out by hand.
    let eps = 0.05;
    let d = Density1d::piecewise_linear(vec![0.0, eps / 2.0, 1.0], vec![eps, eps, 2.0]).unwrap();
    let z = 1.0 + eps * eps / 4.0;
    let cdf = |x: f64| if x <= eps / 2.0 { eps * x / z } else { (eps * eps / 4.0 + x * x) / z };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 1..10_000 {
        let x = i as f64 / 10_000.0;
        if (x - eps / 2.0).abs() < 3.0 * h || x + h > 1.0 {
            continue;
        }
        let rho = (cdf(x + h) - cdf(x - h)) / (2.0 * h);
        let oracle = x - (1.0 - cdf(x)) / rho;
        worst = worst.max((virtual_valuation(&d, x) - oracle).abs());
    }
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn uniform_ironing_clips_at_zero() {
    let iv = iron(&uniform(), 1025).unwrap();
    assert!(iv.is_regular());
    assert!((iv.x0 - 0.5).abs() < 1e-9);
    for i in 0..=100 {
        let x = i as f64 / 100.0;
        assert!((iv.vbar(x) - (2.0 * x - 1.0).max(0.0)).abs() < 1e-12);
    }
    let flats = iv.flat_intervals();
    assert_eq!(flats.len(), 1);
    assert!(flats[0].0 == 0.0 && (flats[0].1 - 0.5).abs() < 1e-9);
}

#[test]
fn regular_density_is_left_alone() {
    let d = Density1d::linear(1.0, 1.0).unwrap();
    let iv = iron(&one_d(d.clone()), 2049).unwrap();
    assert!(iv.is_regular());
    for i in 0..=200 {
        let x = i as f64 / 200.0;
        assert!((iv.vbar(x) - virtual_valuation(&d, x).max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn envelope_dominates_the_revenue_curve() {
    let iv = iron(&bimodal(), 4097).unwrap();
    let n = 2000;
    let g: Vec<f64> = (0..=n).map(|i| iv.envelope(i as f64 / n as f64)).collect();
    for i in 0..=n {
        let q = i as f64 / n as f64;
        assert!(g[i] >= revenue_curve(&iv.density, q) - 1e-9);
        assert!(g[i] >= -1e-15);
        if i > 0 {
            assert!(g[i] <= g[i - 1] + 1e-12);
        }
        if i > 0 && i < n {
            assert!(g[i - 1] + g[i + 1] <= 2.0 * g[i] + 1e-9, "not concave at {q}");
        }
    }
}

#[test]
fn bimodal_ironing_is_monotone_and_pays() {
    let rho = bimodal();
    let iv = iron(&rho, 4097).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=5000 {
        let v = iv.vbar(i as f64 / 5000.0);
        assert!(v >= prev - 1e-12);
        prev = v;
    }
    // V itself is not monotone here.
    let d = rho.marginal(0).unwrap();
    let raw: Vec<f64> = (0..=1000).map(|i| virtual_valuation(&d, i as f64 / 1000.0)).collect();
    assert!(raw.windows(2).any(|w| w[1] < w[0] - 1e-6));
    // The dip in V sits inside the no-sale region, which reaches well past
    // the first zero of V.
    assert!(iv.x0 > first_zero_of_v(&d) + 0.1);

    for m in [1, 2, 3] {
        let ironed = solve_1item(&rho, m).unwrap();
        let naive = naive_threshold_revenue(&rho, m).unwrap();
        let oracle_ironed = fine_grid_revenue(&rho, m, |x| ironed.allocation.derivative(x));
        let r = first_zero_of_v(&d);
        let oracle_naive = fine_grid_revenue(&rho, m, |x| if x >= r { d.cdf(x).powi(m as i32 - 1) } else { 0.0 });
        assert!((ironed.revenue - oracle_ironed).abs() < 1e-6, "m={m}");
        assert!((naive - oracle_naive).abs() < 1e-6, "m={m}");
        assert!(ironed.revenue >= naive - 1e-9);
        if m == 2 {
            assert!(ironed.revenue - naive >= 1e-3);
        }
    }
}

/// `m ∫ (x u′ − u) ρ` by a fine trapezoid rule with `u` accumulated from `u′`.
fn fine_grid_revenue(rho: &DistributionSpec, m: usize, du: impl Fn(f64) -> f64) -> f64 {
    let d = rho.marginal(0).unwrap();
    let n = 400_000;
    let h = 1.0 / n as f64;
    let mut u = 0.0;
    let mut prev_du = du(0.0);
    let mut total = 0.0;
    for i in 0..=n {
        let x = i as f64 * h;
        let cur = du(x);
        if i > 0 {
            u += 0.5 * h * (prev_du + cur);
        }
        prev_du = cur;
        let w = if i == 0 || i == n { 0.5 * h } else { h };
        total += w * (x * cur - u) * d.pdf(x);
    }
    m as f64 * total
}

#[test]
fn uniform_revenues() {
    let one = solve_1item(&uniform(), 1).unwrap();
    assert!((one.revenue - 0.25).abs() < 1e-12);
    assert!((one.x0 - 0.5).abs() < 1e-9);
    let two = solve_1item(&uniform(), 2).unwrap();
    assert!((two.revenue - 5.0 / 12.0).abs() < 1e-12);
    assert!((two.revenue_vbar - two.revenue).abs() < 1e-12);
}

#[test]
fn two_bidder_revenue_matches_second_price_payments() {
    // E[payment] of the second-price auction with reserve 1/2 by a midpoint
    // rule on [0,1]².
    let n = 2000;
    let h = 1.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = (j as f64 + 0.5) * h;
            if x.max(y) > 0.5 {
                total += x.min(y).max(0.5);
            }
        }
    }
    let oracle = total * h * h;
    assert!((oracle - 5.0 / 12.0).abs() < 1e-5);
    assert!((optimal_revenue_1item(&uniform(), 2).unwrap() - oracle).abs() < 1e-5);
}

#[test]
fn single_bidder_revenue_is_the_envelope_peak() {
    for rho in [bimodal(), one_d(Density1d::linear(2.0, -1.0).unwrap())] {
        let sol = solve_1item(&rho, 1).unwrap();
        assert!((sol.revenue - sol.allocation.ironed.envelope(0.0)).abs() < 1e-9);
    }
}

#[test]
fn uniform_optimal_utilities() {
    let u1 = optimal_utility_1d(&uniform(), 1, 101).unwrap();
    for (i, &v) in u1.u.iter().enumerate() {
        let x = u1.grid.coord(i);
        assert!((v - (x - 0.5).max(0.0)).abs() < 1e-9);
    }
    let u2 = optimal_utility_1d(&uniform(), 2, 101).unwrap();
    for (i, &v) in u2.u.iter().enumerate() {
        let x = u2.grid.coord(i);
        let exact = if x > 0.5 { (x * x - 0.25) / 2.0 } else { 0.0 };
        assert!((v - exact).abs() < 1e-9);
    }
}

#[test]
fn optimal_utility_properties() {
    for rho in [uniform(), bimodal(), one_d(Density1d::linear(1.0, 3.0).unwrap())] {
        for m in 1..=3 {
            let u = optimal_utility_1d(&rho, m, 201).unwrap();
            let g = u.g.as_ref().unwrap();
            assert_eq!(u.u[0], 0.0);
            assert!(g.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(u.max_violation() < 1e-9);
            for i in 0..u.grid.len() {
                assert!(u.grid.coord(i) * g.data[i] - u.u[i] >= -1e-9);
            }
            let law = law_of_gradient(&u, 0, &rho);
            for &alpha in law.support().iter().chain([0.0, 0.25, 0.5].iter()) {
                assert!(stop_loss(&law, alpha) <= xi_power_stop_loss(m, alpha) + 2e-3, "m={m} α={alpha}");
            }
        }
    }
}

#[test]
fn revenue_grows_with_bidders() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let knots = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let values = (0..5).map(|_| rng.gen_range(0.2..2.0)).collect();
        let rho = one_d(Density1d::piecewise_linear(knots, values).unwrap());
        let revs: Vec<f64> = (1..=4).map(|m| optimal_revenue_1item(&rho, m).unwrap()).collect();
        assert!(revs.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{revs:?}");
    }
}

#[test]
fn dual_certificates_close_the_gap() {
    let c1 = dual_certificate_1d(&uniform(), 1, 1001).unwrap();
    assert!(c1.gap >= -1e-8 && c1.gap <= 1e-6, "{}", c1.gap);
    for (i, &c) in c1.flow.c.data.iter().enumerate() {
        assert!((c - (2.0 * c1.flow.grid.coord(i) - 1.0).max(0.0)).abs() < 1e-12);
    }
    let c2 = dual_certificate_1d(&uniform(), 2, 1001).unwrap();
    assert!(c2.gap >= -1e-8 && c2.gap <= 1e-4, "{}", c2.gap);
    assert!((c2.primal - 5.0 / 12.0).abs() < 1e-12);
    // Complementary slackness: ∫u′V̄ρ = ∫φ*(V̄)ρ + ∫φ(t^{m−1}).
    assert!((c2.primal / 2.0 - (c2.conjugate_part + c2.phi_part)).abs() < 1e-6);
}

#[test]
fn ironed_certificate_is_valid() {
    for (rho, m) in [(bimodal(), 2), (bridged(), 1), (bridged(), 2), (bridged(), 3)] {
        let c = dual_certificate_1d(&rho, m, 1001).unwrap();
        assert!(c.gap >= -1e-8 && c.gap <= 1e-3, "m={m} gap={}", c.gap);
        assert!(c.phi.eval(0.0) == 0.0);
    }
}

#[test]
fn phi_integral_matches_quadrature() {
    let phi = ConvexPwl::new(vec![0.0, 0.3, 0.6, 1.0], vec![0.0, 0.0, 0.15, 0.75], None, None).unwrap();
    for m in [1usize, 2, 4] {
        let n = 200_000;
        let q: f64 = (0..n).map(|i| phi.eval(((i as f64 + 0.5) / n as f64).powi(m as i32 - 1))).sum::<f64>() / n as f64;
        assert!((integral_phi_xi_power(&phi, m) - q).abs() < 1e-8, "m={m}");
    }
}
