use std::path::Path;

use anyhow::{bail, Context, Result};
use optauction::density::DistributionSpec;
use optauction::lp::LpConfig;
use optauction::mechanisms::IcIrConfig;
use optauction::reduced::{ConvexityEncoding, ObjectiveKind, PrimalProblem};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub m: usize,
    pub rho: DistributionSpec,
    pub k: usize,
    #[serde(default = "default_encoding")]
    pub encoding: ConvexityEncoding,
    #[serde(default = "default_alpha_points")]
    pub alpha_points: usize,
}

fn default_encoding() -> ConvexityEncoding {
    ConvexityEncoding::ExactPairwise
}

fn default_alpha_points() -> usize {
    33
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub samples: usize,
    pub ic_probe_k: usize,
    pub ic_opponents: usize,
    pub expost_samples: usize,
    /// Bins per axis for the reduced-form consistency check.
    pub consistency_bins: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { samples: 200_000, ic_probe_k: 11, ic_opponents: 2000, expost_samples: 100_000, consistency_bins: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Write CSV tables next to the JSON artifacts.
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { csv: true }
    }
}

/// Everything a run depends on. Artifacts embed it verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: LpConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(problem: ProblemConfig) -> Self {
        Self {
            problem,
            solver: LpConfig::default(),
            simulation: SimulationConfig::default(),
            output: OutputConfig::default(),
            seed: 1,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.rho.dim() != p.n {
            bail!("density dimension {} does not match n = {}", p.rho.dim(), p.n);
        }
        if p.k < 2 || p.m == 0 || p.n == 0 {
            bail!("need n ≥ 1, m ≥ 1 and k ≥ 2");
        }
        p.rho.validate()?;
        Ok(())
    }

    pub fn primal(&self) -> PrimalProblem {
        let p = &self.problem;
        PrimalProblem {
            n: p.n,
            m: p.m,
            rho: p.rho.clone(),
            k: p.k,
            kind: ObjectiveKind::Auction,
            encoding: p.encoding,
            alpha_points: p.alpha_points,
            lp: self.solver.clone(),
        }
    }

    pub fn ic_config(&self) -> IcIrConfig {
        let s = &self.simulation;
        IcIrConfig {
            probe_k: s.ic_probe_k,
            opponents: s.ic_opponents,
            expost_samples: s.expost_samples,
            seed: self.seed,
            tol: 1e-9,
        }
    }
}

/// `uniform`, inline JSON, or a path to a JSON density description.
pub fn parse_rho(text: &str, n: usize) -> Result<DistributionSpec> {
    let spec = if text == "uniform" {
        DistributionSpec::uniform(n)
    } else if text.trim_start().starts_with('{') {
        serde_json::from_str(text).context("parsing inline density JSON")?
    } else {
        let body = std::fs::read_to_string(text).with_context(|| format!("reading density file {text}"))?;
        serde_json::from_str(&body).with_context(|| format!("parsing density file {text}"))?
    };
    spec.validate()?;
    Ok(spec)
}
