use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use optauction::dual::{
    beckmann_value, certify_reduced_solution, legendre_value, restrict_unit, transform_measure, DualCertificate,
};
use optauction::reduced::{solve_reduced, ConvexityEncoding, ReducedSolution};
use optauction::Error;
use optauction_cli::artifacts::{read_artifact, Bundle};
use optauction_cli::config::{parse_rho, ProblemConfig, RunConfig};
use optauction_cli::pipeline::{
    myerson_report, reduce_report, run_pipeline, simulate, weak_stage, write_certificate, write_reduce,
    MechanismArtifact, EXIT_INVARIANT, EXIT_STALLED,
};
use optauction_cli::plot::emit_plot_data;
use optauction_cli::tables;
use serde::Serialize;

/// Output root for commands run without `--out`.
const OUT_ENV: &str = "OPTAUCTION_OUT";

#[derive(Parser)]
#[command(name = "optauction", version, about = "Optimal symmetric multi-item auctions on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ProblemArgs {
    /// Full run configuration; overrides every other problem flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// `uniform`, inline JSON, or a path to a density JSON file.
    #[arg(long, default_value = "uniform")]
    rho: String,
    #[arg(long, default_value_t = 33)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Encoding::ExactPairwise)]
    encoding: Encoding,
    #[arg(long, default_value_t = 33)]
    alpha_points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoding {
    ExactPairwise,
    AxisStencil,
}

#[derive(Clone, Copy, ValueEnum)]
enum DualMode {
    Weak,
    Beckmann,
    Certify,
}

#[derive(Subcommand)]
enum Command {
    /// Exact one-item optimal auction.
    Myerson(ProblemArgs),
    /// Solve the reduced-form primal on a grid.
    Reduce(ProblemArgs),
    /// Dual computations on the artifacts of a `reduce` run.
    Dual {
        #[arg(long, value_enum)]
        mode: DualMode,
        /// Directory written by `reduce` or `pipeline`.
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo revenue and IC/IR checks of a mechanism artifact.
    Simulate {
        #[arg(long)]
        mech: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to the directory holding the mechanism artifact.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// reduce → certify → lift → simulate with invariant checks.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot-ready CSV tables from a run directory.
    Plotdata {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: String,
    },
}

fn out_dir(explicit: Option<PathBuf>, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
        root.join(name)
    })
}

impl ProblemArgs {
    fn resolve(&self) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            return RunConfig::load(path);
        }
        let encoding = match self.encoding {
            Encoding::ExactPairwise => ConvexityEncoding::ExactPairwise,
            Encoding::AxisStencil => ConvexityEncoding::AxisStencil,
        };
        let mut cfg = RunConfig::new(ProblemConfig {
            n: self.n,
            m: self.m,
            rho: parse_rho(&self.rho, self.n)?,
            k: self.k,
            encoding,
            alpha_points: self.alpha_points,
        });
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn myerson(args: ProblemArgs) -> Result<()> {
    let cfg = args.resolve()?;
    if cfg.problem.n != 1 {
        bail!("myerson needs n = 1, got {}", cfg.problem.n);
    }
    let (report, csv) = myerson_report(&cfg.problem.rho, cfg.problem.m, cfg.problem.k)?;
    let mut bundle = Bundle::create(&out_dir(args.out, "myerson"))?;
    bundle.write_json("config.json", "run_config", &cfg, &cfg)?;
    bundle.write_json("myerson.json", "myerson", &cfg, &report)?;
    bundle.write_csv("myerson.csv", &csv)?;
    bundle.finish()?;
    print_json(&report)
}

fn reduce(args: ProblemArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let sol = solve_reduced(&cfg.primal())?;
    let report = reduce_report(&sol)?;
    let mut bundle = Bundle::create(&out_dir(args.out, "reduce"))?;
    bundle.write_json("config.json", "run_config", &cfg, &cfg)?;
    write_reduce(&mut bundle, &cfg, &sol, &report)?;
    bundle.finish()?;
    print_json(&report)
}

#[derive(Serialize)]
struct BeckmannReport {
    beckmann: f64,
    legendre: f64,
    certificate_part: f64,
}

fn dual(mode: DualMode, input: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = read_artifact::<RunConfig>(&input.join("config.json"))?.payload;
    let sol = read_artifact::<ReducedSolution>(&input.join("solution.json"))?.payload;
    let out = out.unwrap_or_else(|| input.to_path_buf());
    let mut bundle = Bundle::open(&out)?;
    let p = &cfg.problem;
    match mode {
        DualMode::Weak => {
            if p.m != 1 {
                bail!("the transport dual is stated for one bidder, got m = {}", p.m);
            }
            let mu = transform_measure(&p.rho, p.m, &sol.utility.grid)?;
            bundle.write_json("transform_measure.json", "transform_measure", &cfg, &mu)?;
            bundle.write_csv("transform_measure.csv", &tables::measure_csv(&mu))?;
            let report = weak_stage(&mut bundle, &cfg, &mu, &sol.utility)?;
            bundle.finish()?;
            print_json(&report)
        }
        DualMode::Certify => {
            let cert = certify_reduced_solution(&sol)?;
            write_certificate(&mut bundle, &cfg, &cert)?;
            bundle.finish()?;
            println!("dual {} primal {} gap {:e} valid {}", cert.dual_value, cert.primal_value, cert.gap_vs_primal, cert.valid);
            Ok(())
        }
        DualMode::Beckmann => {
            let path = input.join("certificate.json");
            let cert = if path.exists() {
                read_artifact::<DualCertificate>(&path)?.payload
            } else {
                certify_reduced_solution(&sol)?
            };
            let phi: Vec<_> = cert.phi.iter().map(restrict_unit).collect();
            let conj: Vec<_> = phi.iter().map(|f| f.conjugate()).collect();
            let b = beckmann_value(&cert.pi, &conj, &p.rho, &cfg.solver)?;
            let l = legendre_value(&cert.pi, &phi, &p.rho, &cfg.solver)?;
            let report = BeckmannReport { beckmann: b.value, legendre: l.value, certificate_part: cert.beckmann_part };
            bundle.write_json("beckmann.json", "beckmann", &cfg, &report)?;
            bundle.write_csv("beckmann_flow.csv", &tables::flow_csv(&b.flow))?;
            bundle.finish()?;
            print_json(&report)
        }
    }
}

fn simulate_cmd(mech: &Path, samples: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let art = read_artifact::<MechanismArtifact>(mech)?;
    let mut cfg = art.config;
    if let Some(s) = samples {
        cfg.simulation.samples = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = mech.parent().map(Path::to_path_buf).unwrap_or_default();
    let solution = dir.join("solution.json");
    let reduced = if solution.exists() { Some(read_artifact::<ReducedSolution>(&solution)?.payload) } else { None };
    let report = simulate(&cfg, &art.payload, reduced.as_ref().map(|s| (&s.utility, s.value)))?;
    let mut bundle = Bundle::open(&out.unwrap_or(dir))?;
    bundle.write_json("simulation.json", "simulation", &cfg, &report)?;
    bundle.finish()?;
    print_json(&report)
}

fn pipeline(config: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = RunConfig::load(config)?;
    let name = config.file_stem().and_then(|s| s.to_str()).unwrap_or("pipeline").to_string();
    let outcome = run_pipeline(&cfg, &out_dir(out, &name))?;
    for c in &outcome.summary.checks {
        println!("{:<28} {}  {}", c.name, if c.passed { "ok  " } else { "FAIL" }, c.detail);
    }
    if let Some(stage) = &outcome.summary.failed_stage {
        println!("failed stage: {stage}");
    }
    println!("artifacts in {}", outcome.dir.display());
    Ok(ExitCode::from(outcome.summary.exit_code()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Myerson(a) => myerson(a)?,
        Command::Reduce(a) => reduce(a)?,
        Command::Dual { mode, input, out } => dual(mode, &input, out)?,
        Command::Simulate { mech, samples, seed, out } => simulate_cmd(&mech, samples, seed, out)?,
        Command::Pipeline { config, out } => return pipeline(&config, out),
        Command::Plotdata { input, kind } => {
            let path = emit_plot_data(&input, &kind).context("emitting plot data")?;
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Stalled { .. }) => ExitCode::from(EXIT_STALLED),
                Some(Error::Invariant(_)) => ExitCode::from(EXIT_INVARIANT),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
