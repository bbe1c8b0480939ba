use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use optauction::dual::{
    certify_reduced_solution, complementary_slackness_report, solve_weak_dual, transform_measure, DualCertificate,
    SlacknessReport,
};
use optauction::grid::{discrete_gradient, GridMeasure, UtilityGrid};
use optauction::mechanisms::{
    check_reduced_consistency, estimate_revenue, lift_argmax, verify_ic_ir, ConsistencyReport, IcIrReport,
    MechanismSpec, RevenueEstimate,
};
use optauction::density::DistributionSpec;
use optauction::myerson::{dual_certificate_1d, optimal_utility_1d, solve_1item};
use optauction::reduced::{classify_regions, dominance_residuals, region_map, solve_reduced, Region, RegionLabel, ReducedSolution};
use optauction::Error;
use serde::{Deserialize, Serialize};

use crate::artifacts::Bundle;
use crate::config::RunConfig;
use crate::tables;

/// Exit codes: all checks passed, a stage errored, an invariant failed, a
/// solver stalled.
pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INVARIANT: u8 = 2;
pub const EXIT_STALLED: u8 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    /// Node counts per allocation pattern `Z`, `A`, `B`, `W`.
    pub counts: BTreeMap<char, usize>,
    /// Node counts per Hessian class.
    pub classes: BTreeMap<String, usize>,
    /// Median payment on the nodes buying only item 1 / only item 2.
    pub item_prices: [Option<f64>; 2],
    /// Median payment on the nodes buying both.
    pub bundle_price: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReduceReport {
    pub value: f64,
    pub relaxed: bool,
    pub rounds: usize,
    pub convexity_residual: f64,
    pub utility_violation: f64,
    pub ae_lip_min: f64,
    pub dominance_residuals: Vec<f64>,
    pub regions: Option<RegionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakReport {
    pub value: f64,
    pub plan_entries: usize,
    pub slackness: SlacknessReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismArtifact {
    pub mechanism: MechanismSpec,
    pub rho: DistributionSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub revenue: RevenueEstimate,
    pub reduced_value: Option<f64>,
    pub consistency: Option<ConsistencyReport>,
    pub ic_ir: IcIrReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MyersonReport {
    pub m: usize,
    pub x0: f64,
    pub revenue: f64,
    pub revenue_vbar: f64,
    pub regular: bool,
    /// Certificate dual value minus revenue on a `k`-node grid.
    pub gap: f64,
}

/// Exact one-item solution plus its `x,u,vbar` table on `k` nodes.
pub fn myerson_report(rho: &DistributionSpec, m: usize, k: usize) -> Result<(MyersonReport, String)> {
    let s = solve_1item(rho, m)?;
    let cert = dual_certificate_1d(rho, m, k)?;
    let u = optimal_utility_1d(rho, m, k)?;
    let mut csv = String::from("x,u,vbar\n");
    for idx in 0..u.grid.len() {
        let x = u.grid.coord(idx);
        csv.push_str(&format!("{x},{},{}\n", u.u[idx], s.allocation.ironed.vbar(x)));
    }
    let report = MyersonReport {
        m,
        x0: s.x0,
        revenue: s.revenue,
        revenue_vbar: s.revenue_vbar,
        regular: s.allocation.ironed.is_regular(),
        gap: cert.gap,
    };
    Ok((report, csv))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub checks: Vec<Check>,
    pub failed_stage: Option<String>,
    pub stalled: bool,
    /// The failed stage reported a violated internal invariant.
    pub invariant_error: bool,
    pub primal_value: Option<f64>,
    pub dual_value: Option<f64>,
    pub weak_dual_value: Option<f64>,
    pub simulated_revenue: Option<f64>,
    pub simulated_std_error: Option<f64>,
}

impl PipelineSummary {
    pub fn exit_code(&self) -> u8 {
        if self.stalled {
            EXIT_STALLED
        } else if self.invariant_error || self.checks.iter().any(|c| !c.passed) {
            EXIT_INVARIANT
        } else if self.failed_stage.is_some() {
            EXIT_ERROR
        } else {
            EXIT_OK
        }
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, detail });
    }
}

pub struct PipelineOutcome {
    pub dir: PathBuf,
    pub summary: PipelineSummary,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

pub fn region_summary(u: &UtilityGrid) -> Result<RegionSummary> {
    let regions = region_map(u)?;
    let labels = classify_regions(u, 1e-6)?;
    let g = discrete_gradient(u);
    let mut counts = BTreeMap::new();
    let mut classes = BTreeMap::new();
    let (mut a, mut b, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for idx in 0..u.grid.len() {
        *counts.entry(regions[idx].letter()).or_insert(0) += 1;
        let class = match labels[idx] {
            RegionLabel::Zero => "zero",
            RegionLabel::Degenerate => "degenerate",
            RegionLabel::StrictlyConvex => "strictly_convex",
        };
        *classes.entry(class.to_string()).or_insert(0) += 1;
        let x = u.grid.node(idx);
        let pay = g.at(idx)[0] * x[0] + g.at(idx)[1] * x[1] - u.u[idx];
        match regions[idx] {
            Region::A => a.push(pay),
            Region::B => b.push(pay),
            Region::W => w.push(pay),
            Region::Z => {}
        }
    }
    Ok(RegionSummary { counts, classes, item_prices: [median(a), median(b)], bundle_price: median(w) })
}

pub fn reduce_report(sol: &ReducedSolution) -> Result<ReduceReport> {
    let p = &sol.problem;
    Ok(ReduceReport {
        value: sol.value,
        relaxed: sol.relaxed,
        rounds: sol.rounds,
        convexity_residual: sol.convexity_residual,
        utility_violation: sol.utility.max_violation(),
        ae_lip_min: sol.ae_lip_min,
        dominance_residuals: dominance_residuals(&sol.utility, &p.rho, p.m),
        regions: if p.n == 2 && p.k >= 3 { Some(region_summary(&sol.utility)?) } else { None },
    })
}

/// Write the reduce-stage artifacts: `solution.json`, `reduce.json`,
/// `utility.csv`, and `regions.csv` for two items.
pub fn write_reduce(bundle: &mut Bundle, cfg: &RunConfig, sol: &ReducedSolution, report: &ReduceReport) -> Result<()> {
    bundle.write_json("solution.json", "reduced_solution", cfg, sol)?;
    bundle.write_json("reduce.json", "reduce_report", cfg, report)?;
    if cfg.output.csv {
        bundle.write_csv("utility.csv", &tables::utility_csv(&sol.utility))?;
        if report.regions.is_some() {
            bundle.write_csv("regions.csv", &crate::plot::region_csv(&sol.utility)?)?;
        }
    }
    Ok(())
}

pub fn write_certificate(bundle: &mut Bundle, cfg: &RunConfig, cert: &DualCertificate) -> Result<()> {
    bundle.write_json("certificate.json", "dual_certificate", cfg, cert)?;
    if cfg.output.csv {
        bundle.write_csv("flow.csv", &tables::flow_csv(&cert.flow))?;
    }
    Ok(())
}

pub fn weak_stage(bundle: &mut Bundle, cfg: &RunConfig, mu: &GridMeasure, u: &UtilityGrid) -> Result<WeakReport> {
    let weak = solve_weak_dual(mu, &cfg.solver)?;
    let tol = 3.0 * u.grid.h();
    let slackness = complementary_slackness_report(u, &weak.plan, tol)?;
    let report = WeakReport { value: weak.value, plan_entries: weak.plan.entries.len(), slackness };
    bundle.write_json("weak.json", "weak_dual", cfg, &report)?;
    bundle.write_csv("plan.csv", &weak.plan.to_csv())?;
    Ok(report)
}

pub fn simulate(cfg: &RunConfig, mech: &MechanismArtifact, reduced: Option<(&UtilityGrid, f64)>) -> Result<SimulationReport> {
    let rule = mech.mechanism.build();
    let s = &cfg.simulation;
    let revenue = estimate_revenue(rule.as_ref(), &mech.rho, s.samples, cfg.seed)?;
    let consistency = match reduced {
        Some((u, _)) => Some(check_reduced_consistency(rule.as_ref(), u, &mech.rho, s.samples, cfg.seed, s.consistency_bins, 2e-2)?),
        None => None,
    };
    let ic_ir = verify_ic_ir(rule.as_ref(), &mech.rho, &cfg.ic_config())?;
    Ok(SimulationReport { revenue, reduced_value: reduced.map(|r| r.1), consistency, ic_ir })
}

fn stage<T>(summary: &mut PipelineSummary, bundle: &mut Bundle, name: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            match e.downcast_ref::<Error>() {
                Some(Error::Stalled { .. }) => summary.stalled = true,
                Some(Error::Invariant(_)) => summary.invariant_error = true,
                _ => {}
            }
            bundle.note(format!("failed stage: {name}: {e:#}"));
            summary.failed_stage = Some(name.to_string());
            None
        }
    }
}

/// reduce → transform measure → certificate → weak dual → lift → simulate.
/// Stage failures are recorded in the summary and MANIFEST; artifacts
/// written before the failure are kept.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let mut bundle = Bundle::create(out)?;
    bundle.write_json("config.json", "run_config", cfg, cfg)?;
    let mut summary = PipelineSummary {
        checks: Vec::new(),
        failed_stage: None,
        stalled: false,
        invariant_error: false,
        primal_value: None,
        dual_value: None,
        weak_dual_value: None,
        simulated_revenue: None,
        simulated_std_error: None,
    };
    run_stages(cfg, &mut bundle, &mut summary);
    bundle.write_json("summary.json", "pipeline_summary", cfg, &summary)?;
    bundle.finish()?;
    Ok(PipelineOutcome { dir: out.to_path_buf(), summary })
}

fn run_stages(cfg: &RunConfig, bundle: &mut Bundle, summary: &mut PipelineSummary) {
    let p = &cfg.problem;
    if p.n == 1 {
        let my = myerson_report(&p.rho, p.m, p.k).and_then(|(report, csv)| {
            bundle.write_json("myerson.json", "myerson", cfg, &report)?;
            if cfg.output.csv {
                bundle.write_csv("myerson.csv", &csv)?;
            }
            Ok(report)
        });
        if stage(summary, bundle, "myerson", my).is_none() {
            return;
        }
    }
    let reduced = solve_reduced(&cfg.primal()).map_err(anyhow::Error::from).and_then(|sol| {
        let report = reduce_report(&sol)?;
        write_reduce(bundle, cfg, &sol, &report)?;
        Ok((sol, report))
    });
    let Some((sol, report)) = stage(summary, bundle, "reduce", reduced) else { return };
    summary.primal_value = Some(sol.value);
    summary.check("utility_invariants", report.utility_violation <= 1e-6, format!("max violation {:e}", report.utility_violation));
    summary.check("pointwise_surplus", report.ae_lip_min >= -1e-6, format!("min ⟨x,g⟩ − u − φ(g) = {:e}", report.ae_lip_min));

    let mu = transform_measure(&p.rho, p.m, &sol.utility.grid).map_err(anyhow::Error::from).and_then(|mu| {
        bundle.write_json("transform_measure.json", "transform_measure", cfg, &mu)?;
        if cfg.output.csv {
            bundle.write_csv("transform_measure.csv", &tables::measure_csv(&mu))?;
        }
        Ok(mu)
    });
    let Some(mu) = stage(summary, bundle, "transform_measure", mu) else { return };
    summary.check("transform_measure_balanced", mu.total_mass().abs() <= 1e-8, format!("total mass {:e}", mu.total_mass()));

    let cert = certify_reduced_solution(&sol).map_err(anyhow::Error::from).and_then(|c| {
        write_certificate(bundle, cfg, &c)?;
        Ok(c)
    });
    let Some(cert) = stage(summary, bundle, "certify", cert) else { return };
    summary.dual_value = Some(cert.dual_value);
    summary.check("weak_duality", cert.gap_vs_primal >= -1e-8, format!("dual − primal = {:e}", cert.gap_vs_primal));
    summary.check("certificate_valid", cert.valid, format!("separation {:e}", cert.separation));

    // The unit-ℓ¹ transport dual is the one-bidder statement.
    if p.m == 1 {
        match weak_stage(bundle, cfg, &mu, &sol.utility) {
            Ok(w) => summary.weak_dual_value = Some(w.value),
            Err(e) if matches!(e.downcast_ref::<Error>(), Some(Error::ProblemSize(_))) => {
                bundle.note(format!("weak dual skipped: {e}"));
            }
            Err(e) => {
                stage::<()>(summary, bundle, "weak_dual", Err(e));
                return;
            }
        }
    }

    let mech = lift_argmax(&sol.utility, p.m).map_err(anyhow::Error::from).and_then(|l| {
        let art = MechanismArtifact { mechanism: MechanismSpec::ArgmaxLift(l), rho: p.rho.clone() };
        bundle.write_json("mechanism.json", "mechanism", cfg, &art)?;
        Ok(art)
    });
    let Some(mech) = stage(summary, bundle, "lift", mech) else { return };
    let sim = simulate(cfg, &mech, Some((&sol.utility, sol.value))).and_then(|s| {
        bundle.write_json("simulation.json", "simulation", cfg, &s)?;
        Ok(s)
    });
    let Some(sim) = stage(summary, bundle, "simulate", sim) else { return };
    summary.simulated_revenue = Some(sim.revenue.mean);
    summary.simulated_std_error = Some(sim.revenue.std_error);
    let over = sim.revenue.max_overallocation.max(sim.ic_ir.max_overallocation);
    summary.check("feasibility", over <= 1e-12 && sim.ic_ir.feasibility_violations == 0, format!("max overallocation {over:e}"));
    summary.check(
        "expost_ir",
        sim.ic_ir.expost_ir_violations == 0,
        format!("{} violations, min utility {:e}", sim.ic_ir.expost_ir_violations, sim.ic_ir.min_expost_utility),
    );
    let dev = (sim.revenue.mean - sol.value).abs();
    let allowed = 3.0 * sim.revenue.std_error + 2e-2;
    summary.check("revenue_consistency", dev <= allowed, format!("|simulated − reduced| = {dev:e}, allowed {allowed:e}"));
}
