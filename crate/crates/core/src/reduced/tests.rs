use super::*;
use crate::grid::integrate;
use crate::grid::GridMeasure;

fn pavlov_u(x: f64, y: f64) -> f64 {
    let c = (4.0 - 2f64.sqrt()) / 3.0;
    0f64.max(x - 2.0 / 3.0).max(y - 2.0 / 3.0).max(x + y - c)
}

/// Midpoint quadrature of `⟨x,∇u⟩ − u` for the closed form, with the
/// gradient read off the active affine piece.
fn pavlov_revenue(cells: usize) -> f64 {
    let c = (4.0 - 2f64.sqrt()) / 3.0;
    let h = 1.0 / cells as f64;
    let mut total = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let pieces = [(0.0, 0.0, 0.0), (x - 2.0 / 3.0, 1.0, 0.0), (y - 2.0 / 3.0, 0.0, 1.0), (x + y - c, 1.0, 1.0)];
            let best = pieces.iter().cloned().fold((f64::NEG_INFINITY, 0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
            total += (x * best.1 + y * best.2 - best.0) * h * h;
        }
    }
    total
}

#[test]
fn single_bidder_single_item_is_a_quarter() {
    let sol = solve_reduced(&PrimalProblem::auction(1, 1, DistributionSpec::uniform(1), 101)).unwrap();
    // Lattice types overstate the continuum revenue by O(h).
    assert!(sol.value >= 0.25 - 2e-3 && sol.value <= 0.25 + 5e-3, "{}", sol.value);
    assert!(sol.convexity_residual < 1e-7);
    // The optimum posts a price near 1/2.
    let g = sol.utility.g.as_ref().unwrap();
    assert!(g.at(30)[0] < 0.5 && g.at(70)[0] > 0.5);
}

#[test]
fn pairwise_row_count_is_quadratic() {
    for k in [5, 11, 21] {
        let (lp, layout) = build_lp(&PrimalProblem::auction(1, 1, DistributionSpec::uniform(1), k)).unwrap();
        assert_eq!(layout.pairs.len(), k * (k - 1));
        assert_eq!(lp.num_rows(), k * (k - 1));
        assert_eq!(lp.num_vars(), 2 * k);
    }
}

#[test]
fn alpha_grid_contents() {
    let mut p = PrimalProblem::auction(1, 1, DistributionSpec::uniform(1), 9);
    assert!(p.alpha_grid().is_empty());
    p.m = 2;
    let a = p.alpha_grid();
    for j in 0..32 {
        let v = j as f64 / 32.0;
        assert!(a.iter().any(|&x| (x - v).abs() < 1e-12), "{v}");
    }
    assert!(a.iter().any(|&x| (x - 0.125).abs() < 1e-12));
    assert!(a.windows(2).all(|w| w[0] < w[1]) && a[0] == 0.0 && *a.last().unwrap() < 1.0);
}

#[test]
fn two_bidders_match_five_twelfths() {
    let sol = solve_reduced(&PrimalProblem::auction(1, 2, DistributionSpec::uniform(1), 201)).unwrap();
    assert!((sol.value - 5.0 / 12.0).abs() < 5e-3, "{}", sol.value);
    let res = dominance_residuals(&sol.utility, &DistributionSpec::uniform(1), 2);
    assert!(res[0] < 1e-3, "{res:?}");
}

#[test]
fn objective_recomputed_by_integration() {
    let p = PrimalProblem::auction(2, 1, DistributionSpec::uniform(2), 9);
    let sol = solve_reduced(&p).unwrap();
    let grid = &sol.utility.grid;
    let g = sol.utility.g.as_ref().unwrap();
    let surplus: Vec<f64> = (0..grid.len())
        .map(|x| g.at(x).iter().zip(grid.node(x)).map(|(a, b)| a * b).sum::<f64>() - sol.utility.u[x])
        .collect();
    let rho = GridMeasure::new(grid.clone(), p.rho.node_weights(grid), vec![]);
    assert!((integrate(&surplus, &rho) - sol.lp_solution.objective).abs() < 1e-8);
}

#[test]
fn two_items_recover_the_closed_form() {
    let sol = solve_reduced(&PrimalProblem::auction(2, 1, DistributionSpec::uniform(2), 33)).unwrap();
    let oracle = pavlov_revenue(2000);
    assert!((sol.value - oracle).abs() < 1.5e-2, "{} vs {oracle}", sol.value);
    let grid = &sol.utility.grid;
    let sup = (0..grid.len())
        .map(|x| {
            let v = grid.node(x);
            (sol.utility.u[x] - pavlov_u(v[0], v[1])).abs()
        })
        .fold(0.0, f64::max);
    assert!(sup < 5e-2, "{sup}");
    assert!(sol.utility.max_violation() < 1e-6);
    // Regions: zero region agrees with the closed form, the rest is affine.
    let labels = classify_regions(&sol.utility, 1e-6).unwrap();
    let regions = region_map(&sol.utility).unwrap();
    let (mut agree, mut degenerate, mut positive) = (0, 0, 0);
    for x in 0..grid.len() {
        let v = grid.node(x);
        let expect = Region::from_allocation(&exact_allocation(v[0], v[1]));
        agree += usize::from(regions[x] == expect);
        if labels[x] != RegionLabel::Zero {
            positive += 1;
            degenerate += usize::from(labels[x] == RegionLabel::Degenerate);
        }
    }
    assert!(agree as f64 >= 0.85 * grid.len() as f64, "{agree}/{}", grid.len());
    assert!(degenerate as f64 >= 0.7 * positive as f64, "{degenerate}/{positive}");
}

fn exact_allocation(x: f64, y: f64) -> [f64; 2] {
    let c = (4.0 - 2f64.sqrt()) / 3.0;
    let pieces = [(0.0, [0.0, 0.0]), (x - 2.0 / 3.0, [1.0, 0.0]), (y - 2.0 / 3.0, [0.0, 1.0]), (x + y - c, [1.0, 1.0])];
    pieces.iter().cloned().fold((f64::NEG_INFINITY, [0.0; 2]), |a, b| if b.0 > a.0 { b } else { a }).1
}

#[test]
fn refinement_approaches_the_oracle_from_above_and_stencil_relaxes() {
    let oracle = pavlov_revenue(2000);
    let mut prev = f64::INFINITY;
    for k in [5, 9, 17] {
        let mut p = PrimalProblem::auction(2, 1, DistributionSpec::uniform(2), k);
        let exact = solve_reduced(&p).unwrap();
        assert!(exact.value > oracle && exact.value - oracle < prev, "k={k}: {}", exact.value);
        prev = exact.value - oracle;
        p.encoding = ConvexityEncoding::AxisStencil;
        let relaxed = solve_reduced(&p).unwrap();
        assert!(relaxed.relaxed);
        assert!(exact.value <= relaxed.value + 1e-8, "k={k}: {} > {}", exact.value, relaxed.value);
    }
}

#[test]
fn lazy_and_full_pairwise_agree() {
    // 169 nodes give 28392 ordered pairs, enough to trigger pair generation.
    let p = PrimalProblem::auction(2, 1, DistributionSpec::uniform(2), 13);
    let lazy = solve_reduced(&p).unwrap();
    assert!(lazy.layout.pairs.len() < 169 * 168 / 4);
    let (lp, _) = build_lp(&p).unwrap();
    let full = crate::lp::solve(&lp, &p.lp).unwrap();
    assert!((lazy.lp_solution.objective - full.objective).abs() < 1e-7);
}

#[test]
fn zero_utility_is_all_zero_region() {
    let grid = Grid::new(2, 5).unwrap();
    let u = UtilityGrid::from_fn(&grid, |_| 0.0);
    assert!(classify_regions(&u, 1e-9).unwrap().iter().all(|&l| l == RegionLabel::Zero));
    let one = UtilityGrid::from_fn(&Grid::new(1, 5).unwrap(), |_| 0.0);
    assert!(matches!(classify_regions(&one, 1e-9), Err(Error::Unsupported(_))));
}

#[test]
fn quadratic_monopolist_has_a_corner_triangle() {
    let sol = solve_reduced(&PrimalProblem::monopolist_quadratic(1.0, 17)).unwrap();
    assert!(sol.value > 0.0);
    let labels = classify_regions(&sol.utility, 1e-7).unwrap();
    let grid = &sol.utility.grid;
    assert_eq!(labels[0], RegionLabel::Zero);
    // Zero region is a down-set bounded by an anti-diagonal line.
    for x in 0..grid.len() {
        let v = grid.node(x);
        if labels[x] == RegionLabel::Zero {
            for y in 0..grid.len() {
                let w = grid.node(y);
                if w[0] + w[1] < v[0] + v[1] - 0.13 {
                    assert_eq!(labels[y], RegionLabel::Zero, "{w:?} below {v:?}");
                }
            }
        }
    }
    assert!(labels.iter().filter(|&&l| l == RegionLabel::Zero).count() > 3);
}

#[test]
fn bad_problems_are_rejected() {
    let mut p = PrimalProblem::auction(2, 1, DistributionSpec::uniform(1), 5);
    assert!(matches!(solve_reduced(&p), Err(Error::InvalidArgument(_))));
    p.rho = DistributionSpec::uniform(2);
    p.m = 4;
    p.k = 300;
    assert!(matches!(build_lp(&p), Err(Error::ProblemSize(_))));
}
