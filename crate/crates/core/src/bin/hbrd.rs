//! Command-line front end: configuration ingestion, subcommand dispatch,
//! and report persistence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hbrd::config::{RunConfig, Scenario};
use hbrd::error::{HbrdError, Result};
use hbrd::gaussian::{
    gaussian_component_rd, gaussian_gap, gaussian_oracle, gaussian_rd, GaussianParams,
};
use hbrd::lemma::lemma1_sweep;
use hbrd::optimizer::{lossless_rate, optimize_rd, sum_vs_joint};
use hbrd::prob::nats_to_bits;
use hbrd::report::{
    to_json_string, write_json, ComputeReport, GapReport, GaussianGapRunReport, GaussianReport,
    LemmaReport, LosslessReport, SimulateReport, SweepPoint, SweepReport, UNITS_NOTE,
};
use hbrd::simulate::simulate_xor_binning;
use hbrd::source::{classify_degradedness_default, DistortionQuadruple};

#[derive(Parser)]
#[command(
    name = "hbrd",
    about = "Rate-distortion computations for products of degraded sources \
             with side information at two decoders",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// RNG seed override (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the machine-readable report here (CSV for `sweep`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Optimizer restart override.
    #[arg(long, global = true)]
    restarts: Option<usize>,

    /// Simulator trial-count override.
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Grid resolution override (Gaussian oracle points per parameter).
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the rate-distortion objective for a discrete source.
    Compute,
    /// Exact zero-distortion rate of a discrete source.
    Lossless,
    /// Evaluate the jointly Gaussian closed form and its grid oracle.
    Gaussian,
    /// Joint-versus-component-sum comparison (discrete or Gaussian).
    Gap,
    /// Monte Carlo run of the lossless XOR-binning block code.
    Simulate,
    /// Audit the converse entropy inequality on random instances.
    AuditLemma,
    /// Sweep distortion targets and emit a rate curve as CSV.
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// HBRD_THREADS caps worker parallelism; results do not depend on it.
fn init_threads() {
    if let Ok(v) = std::env::var("HBRD_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(r) = cli.restarts {
        cfg.optimizer.get_or_insert_with(Default::default).restarts = Some(r);
    }
    if let Some(t) = cli.trials {
        if let Some(sim) = cfg.simulate.as_mut() {
            sim.trials = t;
        }
    }
    if let Some(g) = cli.grid {
        if let Some(gs) = cfg.gaussian.as_mut() {
            gs.grid = Some(g);
        }
        cfg.optimizer
            .get_or_insert_with(Default::default)
            .grid_resolution = Some(g);
    }
    Ok(cfg)
}

fn gaussian_params(cfg: &RunConfig) -> Result<(GaussianParams, usize)> {
    let gs = cfg.gaussian.as_ref().ok_or_else(|| {
        HbrdError::Config("field 'gaussian' is required for this subcommand".into())
    })?;
    Ok((
        GaussianParams {
            sigma_x: gs.sigma_x,
            sigma_ny: gs.sigma_ny,
            sigma_nz: gs.sigma_nz,
            distortion: gs.distortion,
        },
        gs.grid.unwrap_or(200),
    ))
}

fn emit<T: serde::Serialize>(cfg: &RunConfig, report: &T) -> Result<()> {
    if let Some(path) = &cfg.out {
        write_json(report, path)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Compute => {
            let (ps, name) = cfg.require_source()?;
            let d = cfg.distortion_or_zero();
            let mode = cfg.resolve_mode(&ps)?;
            let ocfg = cfg.optimizer_config(cfg.seed());
            let result = optimize_rd(&ps, &d, mode, &ocfg)?;
            println!(
                "source {} ({:?}): rate {:.6} bits ({:.6} nats), feasible: {}",
                name, mode, result.rate_bits, result.rate_nats, result.feasibility.feasible
            );
            for w in &result.diagnostics.warnings {
                println!("warning: {}", w);
            }
            let report = ComputeReport {
                kind: "compute".into(),
                units: UNITS_NOTE.into(),
                source_name: name,
                degradedness: classify_degradedness_default(&ps)?,
                distortion: d,
                result,
                source: ps,
            };
            emit(&cfg, &report)
        }
        Command::Lossless => {
            let (ps, name) = cfg.require_source()?;
            let nats = lossless_rate(&ps)?;
            println!(
                "source {}: lossless rate {:.6} bits",
                name,
                nats_to_bits(nats)
            );
            let report = LosslessReport {
                kind: "lossless".into(),
                units: UNITS_NOTE.into(),
                source_name: name,
                rate_nats: nats,
                rate_bits: nats_to_bits(nats),
                source: ps,
            };
            emit(&cfg, &report)
        }
        Command::Gaussian => {
            let (gp, grid) = gaussian_params(&cfg)?;
            let result = gaussian_rd(&gp)?;
            let oracle = gaussian_oracle(&gp, grid)?;
            println!(
                "gaussian rate {:.6} bits ({:.6} nats); oracle {:.6} nats; \
                 gap to component sum {:.6} nats",
                result.rate_bits, result.rate_nats, oracle.rate_nats, result.gap_vs_component_sum
            );
            let report = GaussianReport {
                kind: "gaussian".into(),
                units: UNITS_NOTE.into(),
                params: gp,
                component_rates_nats: [
                    gaussian_component_rd(0, &gp)?,
                    gaussian_component_rd(1, &gp)?,
                ],
                result,
                oracle: Some(oracle),
            };
            emit(&cfg, &report)
        }
        Command::Gap => {
            if cfg.scenario == Some(Scenario::Gaussian) || cfg.gaussian.is_some() {
                let (gp, _) = gaussian_params(&cfg)?;
                let gap = gaussian_gap(&gp)?;
                println!(
                    "gaussian joint {:.6} nats, component sum {:.6} nats, gap {:.6} nats",
                    gap.joint_nats, gap.sum_nats, gap.gap_nats
                );
                let report = GaussianGapRunReport {
                    kind: "gaussian-gap".into(),
                    units: UNITS_NOTE.into(),
                    params: gp,
                    gap,
                };
                emit(&cfg, &report)
            } else {
                let (ps, name) = cfg.require_source()?;
                let d = cfg.distortion_or_zero();
                let ocfg = cfg.optimizer_config(cfg.seed());
                let comparison = sum_vs_joint(&ps, &d, &ocfg)?;
                println!(
                    "source {}: joint {:.6} bits, component sum {:.6} bits, gap {:.6} bits",
                    name,
                    nats_to_bits(comparison.joint_nats),
                    nats_to_bits(comparison.sum_nats),
                    comparison.gap_bits
                );
                for w in &comparison.warnings {
                    println!("warning: {}", w);
                }
                let report = GapReport {
                    kind: "gap".into(),
                    units: UNITS_NOTE.into(),
                    source_name: name,
                    distortion: d,
                    comparison,
                    source: ps,
                };
                emit(&cfg, &report)
            }
        }
        Command::Simulate => {
            let (ps, name) = cfg.require_source()?;
            let sim = cfg.simulate.clone().ok_or_else(|| {
                HbrdError::Config("field 'simulate' is required for this subcommand".into())
            })?;
            let report =
                simulate_xor_binning(&ps, sim.block_length, sim.epsilon, sim.trials, cfg.seed())?;
            println!(
                "source {}: n = {}, rate {:.4} bits/symbol, decoder errors {:.4} / {:.4}",
                name,
                report.n,
                report.rate_bits,
                report.decoder1_error_rate,
                report.decoder2_error_rate
            );
            for w in &report.warnings {
                println!("warning: {}", w);
            }
            let lossless_bits = nats_to_bits(lossless_rate(&ps)?);
            let wrapped = SimulateReport {
                kind: "simulate".into(),
                source_name: name,
                report,
                lossless_rate_bits: lossless_bits,
            };
            emit(&cfg, &wrapped)
        }
        Command::AuditLemma => {
            let settings = cfg.lemma.clone().ok_or_else(|| {
                HbrdError::Config("field 'lemma' is required for this subcommand".into())
            })?;
            let sweep = lemma1_sweep(settings.count, settings.block_length, cfg.seed())?;
            println!(
                "audited {} instances at block length {}: {} violations, min slack {:.3e} nats",
                sweep.instances, sweep.block_length, sweep.violations, sweep.min_slack
            );
            let report = LemmaReport {
                kind: "audit-lemma".into(),
                units: UNITS_NOTE.into(),
                sweep,
            };
            emit(&cfg, &report)?;
            if report.sweep.violations > 0 {
                return Err(HbrdError::InternalInvariant(format!(
                    "{} audited instances violated the entropy inequality",
                    report.sweep.violations
                )));
            }
            Ok(())
        }
        Command::Sweep => {
            let (ps, name) = cfg.require_source()?;
            let sweep = cfg.sweep.clone().ok_or_else(|| {
                HbrdError::Config("field 'sweep' is required for this subcommand".into())
            })?;
            if sweep.steps < 2 {
                return Err(HbrdError::Config("sweep needs at least 2 steps".into()));
            }
            let mode = cfg.resolve_mode(&ps)?;
            let ocfg = cfg.optimizer_config(cfg.seed());
            let mut points = Vec::with_capacity(sweep.steps);
            for k in 0..sweep.steps {
                let t = k as f64 / (sweep.steps - 1) as f64;
                let lerp = |a: f64, b: f64| a + t * (b - a);
                let d = DistortionQuadruple::new(
                    lerp(sweep.from.dhat1, sweep.to.dhat1),
                    lerp(sweep.from.dhat2, sweep.to.dhat2),
                    lerp(sweep.from.dtilde1, sweep.to.dtilde1),
                    lerp(sweep.from.dtilde2, sweep.to.dtilde2),
                )?;
                let result = optimize_rd(&ps, &d, mode, &ocfg)?;
                points.push(SweepPoint {
                    distortion: d,
                    rate_nats: result.rate_nats,
                    rate_bits: result.rate_bits,
                });
            }
            let report = SweepReport {
                kind: "sweep".into(),
                units: UNITS_NOTE.into(),
                source_name: name,
                points,
                source: ps,
            };
            let csv = report.to_csv();
            match &cfg.out {
                Some(path) => {
                    std::fs::write(path, &csv)?;
                    println!("curve written to {}", path.display());
                    // the JSON report sits next to the curve
                    let json_path = path.with_extension("json");
                    write_json(&report, &json_path)?;
                    println!("report written to {}", json_path.display());
                }
                None => print!("{}", to_json_string(&report)?),
            }
            Ok(())
        }
    }
}
