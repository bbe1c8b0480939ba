use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MechanismRule;
use crate::density::DistributionSpec;
use crate::error::{Error, Result};
use crate::grid::{discrete_gradient, Grid, UtilityGrid};

/// Samples per RNG stream; block `b` draws from stream `b` of the seed.
const BLOCK: usize = 8192;

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn draw_profile(rho: &DistributionSpec, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..m).map(|_| rho.sample(rng)).collect()
}

/// Run `f` over `samples` profiles in fixed blocks and return the block
/// results in block order, so merging is independent of scheduling.
fn blocks<T: Send>(
    rho: &DistributionSpec,
    m: usize,
    samples: usize,
    seed: u64,
    f: impl Fn(&mut dyn FnMut() -> Vec<Vec<f64>>, usize) -> T + Sync,
) -> Vec<T> {
    let count = samples.div_ceil(BLOCK);
    (0..count)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let len = BLOCK.min(samples - b * BLOCK);
            let mut next = || draw_profile(rho, m, &mut rng);
            f(&mut next, len)
        })
        .collect()
}

fn check_dims(mech: &dyn MechanismRule, rho: &DistributionSpec) -> Result<()> {
    if mech.n() != rho.dim() {
        return Err(Error::InvalidArgument(format!("mechanism has {} items, density {} dimensions", mech.n(), rho.dim())));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevenueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
    /// Largest `Σ_j P_{i,j} − 1` seen (feasibility needs ≤ 1e−12).
    pub max_overallocation: f64,
}

/// Monte Carlo mean of `Σ_j T_j` over i.i.d. profiles from `ρ^{⊗m}`.
pub fn estimate_revenue(mech: &dyn MechanismRule, rho: &DistributionSpec, samples: usize, seed: u64) -> Result<RevenueEstimate> {
    check_dims(mech, rho)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let parts = blocks(rho, mech.m(), samples, seed, |next, len| {
        let (mut s, mut s2, mut over) = (0.0, 0.0, f64::NEG_INFINITY);
        for _ in 0..len {
            let out = mech.evaluate(&next());
            let r: f64 = out.transfers.iter().sum();
            s += r;
            s2 += r * r;
            over = over.max(out.overallocation());
        }
        (s, s2, over)
    });
    let (s, s2, over) = parts.iter().fold((0.0, 0.0, f64::NEG_INFINITY), |a, b| (a.0 + b.0, a.1 + b.1, a.2.max(b.2)));
    let nf = samples as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(RevenueEstimate { mean, std_error: (var / nf).sqrt(), samples, seed, max_overallocation: over })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub bins_per_axis: usize,
    pub samples: usize,
    pub seed: u64,
    pub allowance: f64,
    /// Largest `|E(P_{i,1} − g_i(x₁) | bin)|`.
    pub max_allocation_dev: f64,
    /// The same deviation in standard errors.
    pub max_allocation_z: f64,
    /// Largest `|E(T₁ − ⟨x₁,g⟩ + u(x₁) | bin)|`.
    pub max_transfer_dev: f64,
    pub max_transfer_z: f64,
    pub allocation_consistent: bool,
    pub transfer_consistent: bool,
}

#[derive(Clone, Default)]
struct Moments {
    count: f64,
    sum: f64,
    sum2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        self.sum += v;
        self.sum2 += v * v;
    }

    fn merge(&mut self, o: &Moments) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum2 += o.sum2;
    }

    /// `(|mean|, standard error)`.
    fn deviation(&self) -> (f64, f64) {
        let mean = self.sum / self.count;
        let var = ((self.sum2 - self.count * mean * mean) / (self.count - 1.0)).max(0.0);
        (mean.abs(), (var / self.count).sqrt())
    }
}

/// Compare the mechanism's conditional allocation and transfer of bidder 1
/// with the reduced pair `(g, ⟨x,g⟩ − u)` on `bins^n` cells. A bin is
/// consistent when its mean deviation is within 3 standard errors plus
/// `allowance`; bins with fewer than 30 samples are skipped.
pub fn check_reduced_consistency(
    mech: &dyn MechanismRule,
    u: &UtilityGrid,
    rho: &DistributionSpec,
    samples: usize,
    seed: u64,
    bins: usize,
    allowance: f64,
) -> Result<ConsistencyReport> {
    check_dims(mech, rho)?;
    if u.grid.dim() != mech.n() || bins == 0 {
        return Err(Error::InvalidArgument("utility grid and mechanism disagree, or no bins".into()));
    }
    let n = mech.n();
    let g = discrete_gradient(u);
    let cells = bins.pow(n as u32);
    let bin_of = |x: &[f64]| x.iter().fold(0, |acc, &v| acc * bins + ((v * bins as f64) as usize).min(bins - 1));
    let parts = blocks(rho, mech.m(), samples, seed, |next, len| {
        let mut alloc = vec![Moments::default(); cells * n];
        let mut pay = vec![Moments::default(); cells];
        for _ in 0..len {
            let profile = next();
            let out = mech.evaluate(&profile);
            let x = &profile[0];
            let loc = u.grid.locate(x);
            let b = bin_of(x);
            let mut reduced_t = -loc.iter().map(|&(idx, w)| w * u.u[idx]).sum::<f64>();
            for i in 0..n {
                let gi = loc.iter().map(|&(idx, w)| w * g.at(idx)[i]).sum::<f64>().clamp(0.0, 1.0);
                reduced_t += gi * x[i];
                alloc[b * n + i].push(out.allocation[i][0] - gi);
            }
            pay[b].push(out.transfers[0] - reduced_t);
        }
        (alloc, pay)
    });
    let mut alloc = vec![Moments::default(); cells * n];
    let mut pay = vec![Moments::default(); cells];
    for (a, p) in &parts {
        alloc.iter_mut().zip(a).for_each(|(x, y)| x.merge(y));
        pay.iter_mut().zip(p).for_each(|(x, y)| x.merge(y));
    }
    let summarize = |stats: &[Moments]| {
        let (mut dev, mut z, mut ok) = (0.0f64, 0.0f64, true);
        for s in stats.iter().filter(|s| s.count >= 30.0) {
            let (d, se) = s.deviation();
            dev = dev.max(d);
            if d > 0.0 {
                z = z.max(if se > 0.0 { d / se } else { f64::INFINITY });
            }
            ok &= d <= 3.0 * se + allowance;
        }
        (dev, z, ok)
    };
    let (max_allocation_dev, max_allocation_z, allocation_consistent) = summarize(&alloc);
    let (max_transfer_dev, max_transfer_z, transfer_consistent) = summarize(&pay);
    Ok(ConsistencyReport {
        bins_per_axis: bins,
        samples,
        seed,
        allowance,
        max_allocation_dev,
        max_allocation_z,
        max_transfer_dev,
        max_transfer_z,
        allocation_consistent,
        transfer_consistent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcIrConfig {
    /// Probe types are the nodes of a grid with this many points per axis.
    pub probe_k: usize,
    /// Rival profiles shared by every probe (common random numbers).
    pub opponents: usize,
    /// Extra random full profiles for the pathwise checks.
    pub expost_samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for IcIrConfig {
    fn default() -> Self {
        Self { probe_k: 11, opponents: 4000, expost_samples: 100_000, seed: 7, tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcIrReport {
    pub config: IcIrConfig,
    pub probes: usize,
    /// Pairs `(t, t′)` where misreporting `t′` beats truth by more than `tol`.
    pub ic_violations: usize,
    pub max_ic_gain: f64,
    pub ir_violations: usize,
    pub min_interim_utility: f64,
    pub expost_ir_violations: usize,
    pub min_expost_utility: f64,
    pub feasibility_violations: usize,
    pub max_overallocation: f64,
}

/// Interim IC/IR of bidder 1 on a probe grid, estimated against a common
/// sample of rivals, plus pathwise IR and feasibility for every bidder.
pub fn verify_ic_ir(mech: &dyn MechanismRule, rho: &DistributionSpec, cfg: &IcIrConfig) -> Result<IcIrReport> {
    check_dims(mech, rho)?;
    let (n, m) = (mech.n(), mech.m());
    let probes: Vec<Vec<f64>> = Grid::new(n, cfg.probe_k)?.nodes().collect();
    let mut rng = block_rng(cfg.seed, usize::MAX >> 1);
    let rivals: Vec<Vec<Vec<f64>>> = (0..cfg.opponents.max(1)).map(|_| draw_profile(rho, m - 1, &mut rng)).collect();
    // (P̄, T̄, min ex-post utility, worst overallocation) per probe.
    let interim: Vec<(Vec<f64>, f64, f64, f64)> = probes
        .par_iter()
        .map(|t| {
            let (mut p, mut pay, mut low, mut over) = (vec![0.0; n], 0.0, f64::INFINITY, f64::NEG_INFINITY);
            for r in &rivals {
                let mut profile = Vec::with_capacity(m);
                profile.push(t.clone());
                profile.extend(r.iter().cloned());
                let out = mech.evaluate(&profile);
                for i in 0..n {
                    p[i] += out.allocation[i][0];
                }
                pay += out.transfers[0];
                low = low.min((0..m).map(|j| out.utility(&profile, j)).fold(f64::INFINITY, f64::min));
                over = over.max(out.overallocation());
            }
            let s = rivals.len() as f64;
            (p.iter().map(|v| v / s).collect(), pay / s, low, over)
        })
        .collect();
    let value = |t: &[f64], k: usize| interim[k].0.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() - interim[k].1;
    let (mut ic_violations, mut max_ic_gain) = (0, f64::NEG_INFINITY);
    let (mut ir_violations, mut min_interim) = (0, f64::INFINITY);
    for (a, t) in probes.iter().enumerate() {
        let truth = value(t, a);
        min_interim = min_interim.min(truth);
        ir_violations += usize::from(truth < -cfg.tol);
        for b in 0..probes.len() {
            let gain = value(t, b) - truth;
            max_ic_gain = max_ic_gain.max(gain);
            ic_violations += usize::from(gain > cfg.tol);
        }
    }
    let mut expost_violations = interim.iter().filter(|r| r.2 < -cfg.tol).count();
    let mut min_expost = interim.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    let mut max_over = interim.iter().map(|r| r.3).fold(f64::NEG_INFINITY, f64::max);
    let mut feasibility_violations = interim.iter().filter(|r| r.3 > 1e-12).count();
    if cfg.expost_samples > 0 {
        let parts = blocks(rho, m, cfg.expost_samples, cfg.seed, |next, len| {
            let (mut bad, mut low, mut infeasible, mut over) = (0usize, f64::INFINITY, 0usize, f64::NEG_INFINITY);
            for _ in 0..len {
                let profile = next();
                let out = mech.evaluate(&profile);
                let worst = (0..m).map(|j| out.utility(&profile, j)).fold(f64::INFINITY, f64::min);
                bad += usize::from(worst < -cfg.tol);
                low = low.min(worst);
                let o = out.overallocation();
                infeasible += usize::from(o > 1e-12);
                over = over.max(o);
            }
            (bad, low, infeasible, over)
        });
        for (bad, low, infeasible, over) in parts {
            expost_violations += bad;
            min_expost = min_expost.min(low);
            feasibility_violations += infeasible;
            max_over = max_over.max(over);
        }
    }
    Ok(IcIrReport {
        config: cfg.clone(),
        probes: probes.len(),
        ic_violations,
        max_ic_gain,
        ir_violations,
        min_interim_utility: min_interim,
        expost_ir_violations: expost_violations,
        min_expost_utility: min_expost,
        feasibility_violations,
        max_overallocation: max_over,
    })
}
