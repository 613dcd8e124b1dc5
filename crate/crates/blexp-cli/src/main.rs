//! Command-line driver for the boundary-layer expansion toolkit.
//!
//! Without a subcommand the full pipeline runs: boundary-layer march,
//! corrector chain, viscosity sweep of the momentum defects, nonlinear
//! remainder correction, and the probe corpora, ending in a quantitative
//! verdict. Each stage is also a subcommand that runs against the cached
//! outputs of its upstream stages.
//!
//! Exit codes: `0` when all quantitative checks pass, `2` when a check or
//! a numerical stage fails, `1` for execution errors (bad configuration,
//! missing caches, filesystem problems).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blexp::config::RunConfig;
use blexp::pipeline::{
    run_expand, run_ns_verify, run_pipeline, run_prandtl, run_probes, run_remainder_sweep,
    PipelineError,
};

#[derive(Parser)]
#[command(
    name = "blexp",
    version,
    about = "Multi-order boundary-layer expansions with remainder verification"
)]
struct Cli {
    /// Configuration file (key = value format); defaults apply otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Comma-separated viscosity list overriding the configuration.
    #[arg(long, global = true, value_name = "LIST")]
    eps: Option<String>,

    /// Flow family overriding the configuration: shear, strain, harmonic.
    #[arg(long, global = true, value_name = "KIND")]
    flow: Option<String>,

    /// Output directory overriding the configuration (the BLEXP_OUT
    /// environment variable overrides both).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for the random probe corpora.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve (or reload) the nonlinear boundary-layer march.
    Prandtl,
    /// Build the corrector chain from the cached march.
    Expand,
    /// Sweep the momentum defects of the composed expansion over the
    /// configured viscosities.
    RemainderSweep,
    /// Solve the nonlinear remainder correction and the linear response
    /// ratios at the verification viscosity.
    NsVerify,
    /// Run the interpolation-inequality and quadratic-form probe corpora.
    Probes,
    /// Run every stage in order and score the verdict (the default).
    Run,
}

fn load_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            RunConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(kind) = &cli.flow {
        cfg.flow_kind = kind.clone();
    }
    if let Some(list) = &cli.eps {
        let mut eps = Vec::new();
        for part in list.split(',') {
            let v: f64 = part
                .trim()
                .parse()
                .map_err(|_| format!("--eps: cannot parse `{part}`"))?;
            eps.push(v);
        }
        cfg.eps_list = eps;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn error_code(err: &PipelineError) -> u8 {
    match err {
        // A stage that ran but failed its computation is a numerical
        // failure; everything else is an execution problem.
        PipelineError::Stage { .. } => 2,
        _ => 1,
    }
}

fn run(cmd: &Cmd, cfg: &RunConfig) -> Result<u8, PipelineError> {
    match cmd {
        Cmd::Prandtl => {
            let out = run_prandtl(cfg)?;
            println!(
                "march ready: {} stations x {} heights, cache {} ({})",
                out.sol.grid.nx(),
                out.sol.grid.ny(),
                out.cache.rel,
                if out.cache.hit { "hit" } else { "computed" },
            );
            println!(
                "structure ok: {}, wall shear min {:.6}, off-wall min {:.6}",
                out.oleinik.ok, out.oleinik.wall_shear_min, out.oleinik.min_off_wall_u
            );
            Ok(0)
        }
        Cmd::Expand => {
            let out = run_expand(cfg)?;
            println!(
                "corrector chain built on {} stations ({} layer / {} outer heights)",
                cfg.nx, cfg.march_ny, cfg.outer_ny
            );
            for (eps, f) in &out.facts {
                println!(
                    "eps {eps:>12e}: wall sup {:.2e}, div/eps {:.3}, lower min {:.3}, \
                     v-band max {:.3}, edge gaps {:.3}/{:.3}",
                    f.wall_sup,
                    f.div_sup / eps,
                    f.lower_min,
                    f.vband_max,
                    f.euler_gap0,
                    f.euler_gap1
                );
            }
            Ok(0)
        }
        Cmd::RemainderSweep => {
            let out = run_remainder_sweep(cfg)?;
            for row in &out.full.rows {
                println!(
                    "eps {:>12e}: defect {:.6e}, slope so far {:.4}",
                    row.eps,
                    row.r1 + row.r2,
                    row.slope_so_far
                );
            }
            println!(
                "fitted slope {:.4} (full), {:.4} (second order dropped)",
                out.full.slope, out.truncated.slope
            );
            Ok(0)
        }
        Cmd::NsVerify => {
            let out = run_ns_verify(cfg)?;
            println!(
                "fixed point: converged {} in {} iterations, final increment {:.3e}",
                out.record.converged, out.record.iterations, out.record.final_increment
            );
            println!(
                "ball constant {:.4}, sup ratio {:.4}, composite gaps {:.4}/{:.4}",
                out.record.ball_constant, out.record.sup_ratio, out.gap.u_gap, out.gap.v_gap
            );
            for (eps, rho) in &out.rho {
                println!("eps {eps:>12e}: response ratio {rho:.6}");
            }
            println!("homogeneity drift {:.3e}", out.homogeneity_drift);
            Ok(0)
        }
        Cmd::Probes => {
            let out = run_probes(cfg)?;
            for h in &out.hardy {
                println!(
                    "cut {:>5}: {} draws, corpus constant max {:.4}, mean {:.4}",
                    h.xi, h.draws, h.max_c, h.mean_c
                );
            }
            println!(
                "quadratic-form constants: elliptic {:.4}, derivative {:.4}, away {:.4e}",
                out.probes.elliptic_c, out.probes.derivative_c, out.probes.away_c
            );
            Ok(0)
        }
        Cmd::Run => {
            let report = run_pipeline(cfg)?;
            for check in &report.verdict.checks {
                println!(
                    "{} {}: {}",
                    if check.pass { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            println!("artifacts in {}", report.root.display());
            Ok(if report.verdict.passed() { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cmd = cli.cmd.unwrap_or(Cmd::Run);
    match run(&cmd, &cfg) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(error_code(&err))
        }
    }
}
