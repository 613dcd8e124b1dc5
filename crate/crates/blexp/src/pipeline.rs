//! Staged artifact pipeline driving the whole toolkit from one
//! [`RunConfig`].
//!
//! Stages run in dependency order: the boundary-layer march, the corrector
//! chain (`expand`), the viscosity sweep of the momentum defects, the
//! nonlinear remainder correction (`ns_verify`), and the inequality probe
//! corpora (`probes`). Each stage writes plain-text artifacts under the
//! output root and can also run standalone against cached upstream
//! outputs; a missing cache produces an error naming the prerequisite
//! stage. The march solution is cached keyed by a content hash of the
//! flow, the inflow, and the grid, and serializes bit-exactly, so a second
//! run of the same configuration reproduces every numeric output byte for
//! byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::compose::{
    assemble, build_expansion_from, profile_facts, remainder, remainder_sweep,
    ApproximateSolution, BuildParams, ExpansionProfiles, ProfileFacts, SweepReport, Truncation,
};
use crate::config::{ConfigError, RunConfig};
use crate::flows::EulerFlow;
use crate::mesh::{Grid, ScalarField2D};
use crate::ns::{
    composite_gap, hardy_corpus, lemma_probes, picard_solve, CompositeGap, ContractionRecord,
    HardyCorpusReport, LinearizedOperator, ProbeReport,
};
use crate::prandtl::{
    blasius_inflow, check_oleinik, compatibility_check, march_grid, solve_blasius, solve_prandtl,
    InflowProfile, MarchParams, OleinikReport, PrandtlSolution,
};

/// Environment variable that overrides the configured output root.
pub const OUT_ENV: &str = "BLEXP_OUT";

/// Errors from running pipeline stages.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Invalid configuration.
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    /// Filesystem failure.
    #[error("i/o at {path}: {source}")]
    Io {
        /// Path involved.
        path: String,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
    /// A stage's computation failed.
    #[error("stage {stage}: {message}")]
    Stage {
        /// Stage that failed.
        stage: &'static str,
        /// Human-readable cause.
        message: String,
    },
    /// A standalone stage was asked to run before its upstream stage.
    #[error(
        "stage {stage}: missing cached output {path}; run the `{prerequisite}` subcommand first"
    )]
    MissingCache {
        /// Stage that was requested.
        stage: &'static str,
        /// Subcommand that produces the missing artifact.
        prerequisite: &'static str,
        /// Expected cache path.
        path: String,
    },
}

fn io_at(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn stage_err<T, E: std::fmt::Display>(
    stage: &'static str,
    r: Result<T, E>,
) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_at(path, e))
}

/// Resolves the output root: the `BLEXP_OUT` environment variable wins
/// over the configured directory.
pub fn output_root(cfg: &RunConfig) -> PathBuf {
    match std::env::var(OUT_ENV) {
        Ok(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(&cfg.out_dir),
    }
}

// ---------------------------------------------------------------------------
// Content hashing and cache keys
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a over a canonical text rendering; stable across runs and
/// platforms.
fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hex(h: u64) -> String {
    format!("{h:016x}")
}

/// Canonical text the march cache key hashes: flow, inflow, and grid.
fn prandtl_key_text(cfg: &RunConfig, inflow_text: &str) -> String {
    format!(
        "flow={} beta={:?} alpha={:?} k={:?} l={:?} y_max={:?} nx={} march_ny={} inflow={}",
        cfg.flow_kind,
        cfg.beta,
        cfg.alpha,
        cfg.k,
        cfg.l,
        cfg.y_max,
        cfg.nx,
        cfg.march_ny,
        inflow_text,
    )
}

fn prandtl_cache_path(root: &Path, key: &str) -> PathBuf {
    root.join("cache").join(format!("prandtl-{key}.txt"))
}

fn expansion_stamp_path(root: &Path, key: &str) -> PathBuf {
    root.join("cache").join(format!("expansion-{key}.txt"))
}

/// Builds the configured inflow on the march heights and returns it with
/// the canonical text that identifies it in cache keys (table inflows hash
/// their file contents).
fn resolve_inflow(
    cfg: &RunConfig,
    flow: &EulerFlow,
    ys: &[f64],
) -> Result<(InflowProfile, String), PipelineError> {
    if cfg.inflow == "blasius" {
        return Ok((blasius_inflow(flow, ys), "blasius".to_string()));
    }
    if let Some(path) = cfg.inflow.strip_prefix("table:") {
        let text = fs::read_to_string(path).map_err(|e| io_at(Path::new(path), e))?;
        let profile = stage_err("prandtl", InflowProfile::from_table_str(&text))?;
        return Ok((profile, format!("table:{}", hex(fnv1a(&text)))));
    }
    Err(PipelineError::Stage {
        stage: "prandtl",
        message: format!("inflow `{}` is neither `blasius` nor `table:<path>`", cfg.inflow),
    })
}

// ---------------------------------------------------------------------------
// Stage: boundary-layer march
// ---------------------------------------------------------------------------

/// Where a march solution is cached and how it was obtained.
#[derive(Debug, Clone)]
pub struct CacheInfo {
    /// Cache path relative to the output root.
    pub rel: String,
    /// Content hash of the cached table.
    pub hash: String,
    /// Whether the solution came from the cache.
    pub hit: bool,
}

/// Result of the march stage.
#[derive(Debug)]
pub struct PrandtlOutput {
    /// The (possibly cache-loaded) march solution.
    pub sol: PrandtlSolution,
    /// Structural facts of the profile.
    pub oleinik: OleinikReport,
    /// Cache bookkeeping for the manifest.
    pub cache: CacheInfo,
}

fn prandtl_stage(cfg: &RunConfig, root: &Path) -> Result<PrandtlOutput, PipelineError> {
    let flow = cfg.flow()?;
    let march = stage_err("prandtl", march_grid(cfg.l, cfg.nx, cfg.march_ny))?;
    let (inflow, inflow_text) = resolve_inflow(cfg, &flow, march.ys())?;
    let key = hex(fnv1a(&prandtl_key_text(cfg, &inflow_text)));
    let cache_path = prandtl_cache_path(root, &key);

    let (sol, cache_hit, table) = if cache_path.exists() {
        let text = fs::read_to_string(&cache_path).map_err(|e| io_at(&cache_path, e))?;
        let sol = stage_err("prandtl", PrandtlSolution::from_text(&text))?;
        (sol, true, text)
    } else {
        let sol = stage_err(
            "prandtl",
            solve_prandtl(&flow, &march, &inflow, &MarchParams::default()),
        )?;
        let text = sol.to_text();
        write_text(&cache_path, &text)?;
        (sol, false, text)
    };

    let oleinik = check_oleinik(&sol);
    let compat = compatibility_check(&flow, &inflow);

    let mut rep = String::from("# boundary-layer march report\n");
    let _ = writeln!(rep, "newton_iters = {}", sol.newton_iters);
    let _ = writeln!(rep, "min_off_wall_u = {:?}", oleinik.min_off_wall_u);
    let _ = writeln!(rep, "wall_shear_min = {:?}", oleinik.wall_shear_min);
    let _ = writeln!(rep, "band_shear_min = {:?}", oleinik.band_shear_min);
    let _ = writeln!(rep, "sup_u = {:?}", oleinik.sup_u);
    let _ = writeln!(rep, "sup_ratio = {:?}", oleinik.sup_ratio);
    let _ = writeln!(rep, "structure_ok = {}", oleinik.ok);
    let _ = writeln!(rep, "no_slip_defect = {:?}", compat.no_slip_defect);
    let _ = writeln!(rep, "curvature_residual = {:?}", compat.curvature_residual);
    let _ = writeln!(rep, "curvature_analytic = {}", compat.analytic);
    if cfg.flow_kind == "shear" && cfg.inflow == "blasius" {
        // Constant edge speed and zero pressure gradient keep the march in
        // the similarity family, so its wall shear has a closed form.
        let blasius = solve_blasius();
        let ue0 = flow.u(0.0, 0.0);
        let drift = |i: usize, x: f64| {
            let reference = blasius.similarity_wall_shear(ue0, x);
            ((sol.wall_shear[i] - reference) / reference).abs()
        };
        let worst = sol
            .grid
            .xs()
            .iter()
            .enumerate()
            .map(|(i, &x)| drift(i, x))
            .fold(0.0_f64, f64::max);
        let _ = writeln!(rep, "similarity_drift_inflow = {:?}", drift(0, 0.0));
        let _ = writeln!(rep, "similarity_drift_max = {:?}", worst);
    }
    write_text(&root.join("reports").join("march_report.txt"), &rep)?;

    Ok(PrandtlOutput {
        sol,
        oleinik,
        cache: CacheInfo {
            rel: format!("cache/prandtl-{key}.txt"),
            hash: hex(fnv1a(&table)),
            hit: cache_hit,
        },
    })
}

/// Loads the cached march solution for this configuration, or reports
/// which subcommand must run first.
fn load_cached_prandtl(
    cfg: &RunConfig,
    root: &Path,
    stage: &'static str,
) -> Result<PrandtlSolution, PipelineError> {
    let flow = cfg.flow()?;
    let march = stage_err(stage, march_grid(cfg.l, cfg.nx, cfg.march_ny))?;
    let (_, inflow_text) = resolve_inflow(cfg, &flow, march.ys())?;
    let key = hex(fnv1a(&prandtl_key_text(cfg, &inflow_text)));
    let cache_path = prandtl_cache_path(root, &key);
    if !cache_path.exists() {
        return Err(PipelineError::MissingCache {
            stage,
            prerequisite: "prandtl",
            path: cache_path.display().to_string(),
        });
    }
    let text = fs::read_to_string(&cache_path).map_err(|e| io_at(&cache_path, e))?;
    stage_err(stage, PrandtlSolution::from_text(&text))
}

// ---------------------------------------------------------------------------
// Stage: corrector chain
// ---------------------------------------------------------------------------

/// Result of the corrector-chain stage.
pub struct ExpandOutput {
    /// The composed profile chain.
    pub profiles: ExpansionProfiles,
    /// Structural facts per configured viscosity.
    pub facts: Vec<(f64, ProfileFacts)>,
}

fn expansion_key(cfg: &RunConfig) -> Result<String, PipelineError> {
    let flow = cfg.flow()?;
    let march = stage_err("expand", march_grid(cfg.l, cfg.nx, cfg.march_ny))?;
    let (_, inflow_text) = resolve_inflow(cfg, &flow, march.ys())?;
    let upstream = hex(fnv1a(&prandtl_key_text(cfg, &inflow_text)));
    Ok(hex(fnv1a(&format!(
        "prandtl={upstream} outer_ny={}",
        cfg.outer_ny
    ))))
}

fn expand_stage(
    cfg: &RunConfig,
    root: &Path,
    sol: PrandtlSolution,
) -> Result<ExpandOutput, PipelineError> {
    let flow = cfg.flow()?;
    let params = BuildParams {
        nx: cfg.nx,
        march_ny: cfg.march_ny,
        outer_ny: cfg.outer_ny,
    };
    let profiles = stage_err("expand", build_expansion_from(&flow, &params, sol))?;

    let mut facts = Vec::new();
    for &eps in &cfg.eps_list {
        let ap = stage_err("expand", assemble(&profiles, eps, Truncation::Full))?;
        facts.push((eps, profile_facts(&ap)));
    }

    let mut csv = String::from(
        "eps,wall_sup,div_sup,div_over_eps,lower_min,vband_max,delta,euler_gap0,euler_gap1\n",
    );
    for (eps, f) in &facts {
        let _ = writeln!(
            csv,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            eps,
            f.wall_sup,
            f.div_sup,
            f.div_sup / eps,
            f.lower_min,
            f.vband_max,
            f.delta,
            f.euler_gap0,
            f.euler_gap1,
        );
    }
    write_text(&root.join("reports").join("facts.csv"), &csv)?;

    let ap = stage_err(
        "expand",
        assemble(&profiles, cfg.verify_eps, Truncation::Full),
    )?;
    write_text(
        &root
            .join("fields")
            .join(format!("composite-{:e}.csv", cfg.verify_eps)),
        &composite_csv(&ap),
    )?;

    let key = expansion_key(cfg)?;
    let stamp = format!(
        "expansion-stamp 1\nkey = {key}\nnx = {}\nmarch_ny = {}\nouter_ny = {}\n",
        cfg.nx, cfg.march_ny, cfg.outer_ny
    );
    write_text(&expansion_stamp_path(root, &key), &stamp)?;

    Ok(ExpandOutput { profiles, facts })
}

fn composite_csv(ap: &ApproximateSolution) -> String {
    let g = &ap.grid;
    let mut out = String::from("x,y,us,vs,ps\n");
    for i in 0..g.nx() {
        for j in 0..g.ny() {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?}",
                g.xs()[i],
                g.ys()[j],
                ap.us[[i, j]],
                ap.vs[[i, j]],
                ap.ps[[i, j]],
            );
        }
    }
    out
}

/// Rebuilds the profile chain for a standalone downstream stage, requiring
/// both the corrector stamp and the march cache to exist.
fn require_expansion(
    cfg: &RunConfig,
    root: &Path,
    stage: &'static str,
) -> Result<ExpansionProfiles, PipelineError> {
    let key = expansion_key(cfg)?;
    let stamp = expansion_stamp_path(root, &key);
    if !stamp.exists() {
        return Err(PipelineError::MissingCache {
            stage,
            prerequisite: "expand",
            path: stamp.display().to_string(),
        });
    }
    let sol = load_cached_prandtl(cfg, root, stage)?;
    let flow = cfg.flow()?;
    let params = BuildParams {
        nx: cfg.nx,
        march_ny: cfg.march_ny,
        outer_ny: cfg.outer_ny,
    };
    stage_err(stage, build_expansion_from(&flow, &params, sol))
}

// ---------------------------------------------------------------------------
// Stage: viscosity sweep of the momentum defects
// ---------------------------------------------------------------------------

/// Result of the sweep stage: the full composition and the one with the
/// second-order profiles dropped.
pub struct SweepOutput {
    /// All orders composed.
    pub full: SweepReport,
    /// Second-order profiles omitted.
    pub truncated: SweepReport,
}

fn sweep_stage(
    cfg: &RunConfig,
    root: &Path,
    profiles: &ExpansionProfiles,
) -> Result<SweepOutput, PipelineError> {
    let full = stage_err(
        "remainder_sweep",
        remainder_sweep(profiles, &cfg.eps_list, Truncation::Full),
    )?;
    let truncated = stage_err(
        "remainder_sweep",
        remainder_sweep(profiles, &cfg.eps_list, Truncation::DropSecondOrder),
    )?;
    write_text(
        &root.join("reports").join("remainder_sweep.csv"),
        &sweep_csv(&full),
    )?;
    write_text(
        &root.join("reports").join("remainder_sweep_truncated.csv"),
        &sweep_csv(&truncated),
    )?;
    write_text(
        &root.join("reports").join("remainder_sweep.svg"),
        &sweep_svg(&full, &truncated),
    )?;
    Ok(SweepOutput { full, truncated })
}

fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("eps,r1,r2,slope_so_far\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{:?}",
            row.eps, row.r1, row.r2, row.slope_so_far
        );
    }
    let _ = writeln!(out, "# fitted_slope = {:?}", report.slope);
    let _ = writeln!(out, "# intercept_ln = {:?}", report.intercept_ln);
    out
}

/// Hand-rolled log-log plot of the momentum-defect magnitudes: both
/// compositions plus a reference line of slope 3/2 through the finest
/// point of the full one.
fn sweep_svg(full: &SweepReport, truncated: &SweepReport) -> String {
    let (x0, x1, y0, y1) = (70.0, 590.0, 20.0, 330.0);
    let all: Vec<(f64, f64)> = full
        .rows
        .iter()
        .chain(truncated.rows.iter())
        .map(|r| (r.eps.ln(), (r.r1 + r.r2).ln()))
        .collect();
    let (mut lx0, mut lx1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ly0, mut ly1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(lx, ly) in &all {
        lx0 = lx0.min(lx);
        lx1 = lx1.max(lx);
        ly0 = ly0.min(ly);
        ly1 = ly1.max(ly);
    }
    // A reference line of slope 3/2 anchored at the finest full point can
    // leave the data window; widen the value range to keep it visible.
    let anchor = full
        .rows
        .iter()
        .map(|r| (r.eps.ln(), (r.r1 + r.r2).ln()))
        .fold((f64::INFINITY, 0.0), |a, p| if p.0 < a.0 { p } else { a });
    let ref_top = anchor.1 + 1.5 * (lx1 - anchor.0);
    ly1 = ly1.max(ref_top);
    let pad = 0.05 * (ly1 - ly0).max(1e-12);
    ly0 -= pad;
    ly1 += pad;
    let sx = |lx: f64| x0 + (lx - lx0) / (lx1 - lx0) * (x1 - x0);
    let sy = |ly: f64| y1 - (ly - ly0) / (ly1 - ly0) * (y1 - y0);
    let path = |rows: &[crate::compose::SweepRow]| {
        rows.iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.eps.ln()), sy((r.r1 + r.r2).ln())))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut dots = String::new();
    for r in full.rows.iter().chain(truncated.rows.iter()) {
        let _ = write!(
            dots,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#333\"/>",
            sx(r.eps.ln()),
            sy((r.r1 + r.r2).ln())
        );
    }
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" ",
            "font-family=\"monospace\" font-size=\"12\">\n",
            "<rect x=\"{x0}\" y=\"{top}\" width=\"{w:.2}\" height=\"{h:.2}\" ",
            "fill=\"none\" stroke=\"#999\"/>\n",
            "<polyline points=\"{pf}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
            "<polyline points=\"{pt}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n",
            "<line x1=\"{rx0:.2}\" y1=\"{ry0:.2}\" x2=\"{rx1:.2}\" y2=\"{ry1:.2}\" ",
            "stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n",
            "{dots}\n",
            "<text x=\"{x0}\" y=\"360\" fill=\"#1f77b4\">full composition: slope {sf:.3}</text>\n",
            "<text x=\"{x0}\" y=\"378\" fill=\"#d62728\">",
            "second order dropped: slope {st:.3}</text>\n",
            "<text x=\"440\" y=\"360\" fill=\"#888\">reference slope 1.5</text>\n",
            "<text x=\"300\" y=\"396\" fill=\"#333\">ln eps</text>\n",
            "<text x=\"6\" y=\"180\" fill=\"#333\" transform=\"rotate(-90 14 180)\">",
            "ln defect</text>\n",
            "</svg>\n"
        ),
        x0 = x0,
        top = y0,
        w = x1 - x0,
        h = y1 - y0,
        pf = path(&full.rows),
        pt = path(&truncated.rows),
        rx0 = sx(anchor.0),
        ry0 = sy(anchor.1),
        rx1 = sx(lx1),
        ry1 = sy(ref_top),
        dots = dots,
        sf = full.slope,
        st = truncated.slope,
    )
}

// ---------------------------------------------------------------------------
// Stage: nonlinear remainder correction
// ---------------------------------------------------------------------------

/// Result of the remainder-correction stage.
pub struct VerifyOutput {
    /// Fixed-point convergence record at the verification viscosity.
    pub record: ContractionRecord,
    /// Drift of the corrected solution from the leading composite, scaled
    /// by the square root of the viscosity.
    pub gap: CompositeGap,
    /// Linear response ratio per configured viscosity, under a fixed
    /// smooth forcing.
    pub rho: Vec<(f64, f64)>,
    /// Relative change of the response ratio when the forcing is doubled.
    pub homogeneity_drift: f64,
}

/// Fixed smooth forcing used for response ratios and probe corpora, so
/// only the operator varies across viscosities.
fn fixed_forcing(grid: &Grid, l: f64) -> (ScalarField2D, ScalarField2D) {
    let f1 = grid.field_from_fn(|x, y| (std::f64::consts::PI * x / l).sin() * y * y * (-y).exp());
    let f2 = grid.field_from_fn(|x, y| (x / l) * (1.0 - x / l) * y * (-0.5 * y).exp());
    (f1, f2)
}

fn verify_stage(
    cfg: &RunConfig,
    root: &Path,
    profiles: &ExpansionProfiles,
) -> Result<VerifyOutput, PipelineError> {
    let eps = cfg.verify_eps;
    let ap = stage_err("ns_verify", assemble(profiles, eps, Truncation::Full))?;
    let (r1, r2) = remainder(&ap);
    write_text(
        &root
            .join("fields")
            .join(format!("remainder-{eps:e}.csv")),
        &remainder_csv(&ap, &r1, &r2),
    )?;

    let op = stage_err("ns_verify", LinearizedOperator::new(&ap))?;
    let tol = cfg.picard_tol_factor * eps.powf(1.5);
    let outcome = stage_err("ns_verify", picard_solve(&op, &r1, &r2, tol))?;
    let record = outcome.state.clone();
    let u_full = &ap.us + &outcome.u;
    let v_full = &ap.vs + &outcome.v;
    let gap = composite_gap(
        &ap,
        &u_full,
        &v_full,
        &profiles.sol.u,
        &profiles.sol.ue_wall,
    );

    let mut rho = Vec::new();
    for &e in &cfg.eps_list {
        let ap_e = stage_err("ns_verify", assemble(profiles, e, Truncation::Full))?;
        let op_e = stage_err("ns_verify", LinearizedOperator::new(&ap_e))?;
        let (f1, f2) = fixed_forcing(&ap_e.grid, cfg.l);
        let ratio = stage_err("ns_verify", op_e.response_ratio(&f1, &f2))?;
        rho.push((e, ratio));
    }
    let (f1, f2) = fixed_forcing(&ap.grid, cfg.l);
    let base = stage_err("ns_verify", op.response_ratio(&f1, &f2))?;
    let doubled = stage_err(
        "ns_verify",
        op.response_ratio(&(&f1 * 2.0), &(&f2 * 2.0)),
    )?;
    let homogeneity_drift = ((doubled - base) / base).abs();

    let mut csv = String::from("eps,rho\n");
    for (e, r) in &rho {
        let _ = writeln!(csv, "{e:?},{r:?}");
    }
    let _ = writeln!(csv, "# homogeneity_drift = {homogeneity_drift:?}");
    write_text(&root.join("reports").join("linear_response.csv"), &csv)?;

    let mut rep = String::from("# nonlinear remainder correction\n");
    let _ = writeln!(rep, "eps = {eps:?}");
    let _ = writeln!(rep, "tol_z = {tol:?}");
    let _ = writeln!(rep, "iterations = {}", record.iterations);
    let _ = writeln!(rep, "converged = {}", record.converged);
    let _ = writeln!(rep, "final_increment = {:?}", record.final_increment);
    let _ = writeln!(rep, "z_value = {:?}", record.z_value);
    let _ = writeln!(rep, "ball_constant = {:?}", record.ball_constant);
    let _ = writeln!(rep, "sup_ratio = {:?}", record.sup_ratio);
    let ratios = record
        .ratios
        .iter()
        .map(|r| format!("{r:?}"))
        .collect::<Vec<_>>()
        .join(",");
    let _ = writeln!(rep, "contraction_ratios = {ratios}");
    let _ = writeln!(rep, "composite_u_gap = {:?}", gap.u_gap);
    let _ = writeln!(rep, "composite_v_gap = {:?}", gap.v_gap);
    write_text(&root.join("reports").join("contraction_report.txt"), &rep)?;

    Ok(VerifyOutput {
        record,
        gap,
        rho,
        homogeneity_drift,
    })
}

fn remainder_csv(ap: &ApproximateSolution, r1: &ScalarField2D, r2: &ScalarField2D) -> String {
    let g = &ap.grid;
    let mut out = String::from("x,y,r1,r2\n");
    for i in 0..g.nx() {
        for j in 0..g.ny() {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?}",
                g.xs()[i],
                g.ys()[j],
                r1[[i, j]],
                r2[[i, j]],
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Stage: inequality probe corpora
// ---------------------------------------------------------------------------

/// Result of the probe stage.
pub struct ProbesOutput {
    /// One-dimensional weighted interpolation corpus, one report per cut
    /// parameter.
    pub hardy: Vec<HardyCorpusReport>,
    /// Quadratic-form probe constants on the solved linear system.
    pub probes: ProbeReport,
}

fn probes_stage(
    cfg: &RunConfig,
    root: &Path,
    profiles: &ExpansionProfiles,
) -> Result<ProbesOutput, PipelineError> {
    let eps = cfg.verify_eps;
    let ap = stage_err("probes", assemble(profiles, eps, Truncation::Full))?;

    let mid = ap.grid.nx() / 2;
    let us_col: Vec<f64> = (0..ap.grid.ny()).map(|j| ap.us[[mid, j]]).collect();
    let mut hardy = Vec::new();
    let mut csv = String::from("xi,draws,max_c,mean_c\n");
    for xi in [1.0, 0.5, 0.25] {
        let report = hardy_corpus(ap.grid.ys(), &us_col, eps, xi, cfg.probe_draws, cfg.seed);
        let _ = writeln!(
            csv,
            "{:?},{},{:?},{:?}",
            report.xi, report.draws, report.max_c, report.mean_c
        );
        hardy.push(report);
    }
    write_text(&root.join("reports").join("hardy_corpus.csv"), &csv)?;

    let op = stage_err("probes", LinearizedOperator::new(&ap))?;
    let (f1, f2) = fixed_forcing(&ap.grid, cfg.l);
    let sol = stage_err("probes", op.solve(&f1, &f2))?;
    let delta = cfg.l.sqrt().max(eps.powf(0.25));
    let probes = stage_err("probes", lemma_probes(&op, &sol, &f1, &f2, delta))?;

    let mut rep = String::from("# quadratic-form probe constants\n");
    let _ = writeln!(rep, "eps = {eps:?}");
    let _ = writeln!(rep, "delta = {:?}", probes.delta);
    let _ = writeln!(rep, "g_x_sq = {:?}", probes.g_x_sq);
    let _ = writeln!(rep, "g_y_sq = {:?}", probes.g_y_sq);
    let _ = writeln!(rep, "elliptic_lhs = {:?}", probes.elliptic_lhs);
    let _ = writeln!(rep, "elliptic_rhs = {:?}", probes.elliptic_rhs);
    let _ = writeln!(rep, "elliptic_c = {:?}", probes.elliptic_c);
    let _ = writeln!(rep, "derivative_lhs = {:?}", probes.derivative_lhs);
    let _ = writeln!(rep, "derivative_rhs = {:?}", probes.derivative_rhs);
    let _ = writeln!(rep, "derivative_c = {:?}", probes.derivative_c);
    let _ = writeln!(rep, "away_lhs = {:?}", probes.away_lhs);
    let _ = writeln!(rep, "away_rhs = {:?}", probes.away_rhs);
    let _ = writeln!(rep, "away_c = {:?}", probes.away_c);
    write_text(&root.join("reports").join("lemma_probes.txt"), &rep)?;

    Ok(ProbesOutput { hardy, probes })
}

// ---------------------------------------------------------------------------
// Standalone stage entry points
// ---------------------------------------------------------------------------

/// Runs (or reloads) the boundary-layer march and writes its report.
pub fn run_prandtl(cfg: &RunConfig) -> Result<PrandtlOutput, PipelineError> {
    cfg.validate()?;
    let root = output_root(cfg);
    write_text(&root.join("resolved_config.txt"), &cfg.to_text())?;
    prandtl_stage(cfg, &root)
}

/// Runs the corrector chain against the cached march solution.
pub fn run_expand(cfg: &RunConfig) -> Result<ExpandOutput, PipelineError> {
    cfg.validate()?;
    let root = output_root(cfg);
    write_text(&root.join("resolved_config.txt"), &cfg.to_text())?;
    let sol = load_cached_prandtl(cfg, &root, "expand")?;
    expand_stage(cfg, &root, sol)
}

/// Runs the viscosity sweep against cached upstream outputs.
pub fn run_remainder_sweep(cfg: &RunConfig) -> Result<SweepOutput, PipelineError> {
    cfg.validate()?;
    let root = output_root(cfg);
    write_text(&root.join("resolved_config.txt"), &cfg.to_text())?;
    let profiles = require_expansion(cfg, &root, "remainder_sweep")?;
    sweep_stage(cfg, &root, &profiles)
}

/// Runs the nonlinear remainder correction against cached upstream
/// outputs.
pub fn run_ns_verify(cfg: &RunConfig) -> Result<VerifyOutput, PipelineError> {
    cfg.validate()?;
    let root = output_root(cfg);
    write_text(&root.join("resolved_config.txt"), &cfg.to_text())?;
    let profiles = require_expansion(cfg, &root, "ns_verify")?;
    verify_stage(cfg, &root, &profiles)
}

/// Runs the probe corpora against cached upstream outputs.
pub fn run_probes(cfg: &RunConfig) -> Result<ProbesOutput, PipelineError> {
    cfg.validate()?;
    let root = output_root(cfg);
    write_text(&root.join("resolved_config.txt"), &cfg.to_text())?;
    let profiles = require_expansion(cfg, &root, "probes")?;
    probes_stage(cfg, &root, &profiles)
}

// ---------------------------------------------------------------------------
// Full pipeline with manifest and verdict
// ---------------------------------------------------------------------------

/// Ordered stage names of the full pipeline.
pub const STAGES: [&str; 5] = ["prandtl", "expand", "remainder_sweep", "ns_verify", "probes"];

/// One stage's outcome in the run manifest.
#[derive(Debug, Clone)]
pub struct StageRecord {
    /// Stage name.
    pub name: &'static str,
    /// `ok`, `skipped`, or `error: <cause>`.
    pub status: String,
}

/// One quantitative check in the final verdict.
#[derive(Debug, Clone)]
pub struct Check {
    /// Check name.
    pub name: &'static str,
    /// Whether it passed.
    pub pass: bool,
    /// Values behind the decision.
    pub detail: String,
}

/// The run's quantitative verdict.
#[derive(Debug, Clone)]
pub struct Verdict {
    /// Individual checks.
    pub checks: Vec<Check>,
}

impl Verdict {
    /// True when every check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Result of a full pipeline run.
#[derive(Debug)]
pub struct PipelineReport {
    /// Output root holding all artifacts.
    pub root: PathBuf,
    /// Per-stage outcomes.
    pub stages: Vec<StageRecord>,
    /// Quantitative verdict.
    pub verdict: Verdict,
}

fn write_manifest(
    root: &Path,
    cfg: &RunConfig,
    cache: Option<&CacheInfo>,
    stages: &[StageRecord],
    verdict: &str,
) -> Result<(), PipelineError> {
    let mut out = String::from("# run manifest\n");
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "config_hash = {}", hex(fnv1a(&cfg.to_text())));
    if let Some(c) = cache {
        let _ = writeln!(out, "march_cache = {}", c.rel);
        let _ = writeln!(out, "march_cache_hash = {}", c.hash);
        let _ = writeln!(out, "march_cache_hit = {}", c.hit);
    }
    for s in stages {
        let _ = writeln!(out, "stage {} = {}", s.name, s.status);
    }
    let _ = writeln!(out, "verdict = {verdict}");
    write_text(&root.join("manifest.txt"), &out)
}

fn verdict_text(verdict: &Verdict) -> String {
    let mut out = String::new();
    for c in &verdict.checks {
        let _ = writeln!(
            out,
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let _ = writeln!(
        out,
        "overall = {}",
        if verdict.passed() { "pass" } else { "fail" }
    );
    out
}

fn build_verdict(
    oleinik: &OleinikReport,
    sweep: &SweepOutput,
    verify: &VerifyOutput,
    probes: &ProbesOutput,
) -> Verdict {
    let mut checks = Vec::new();
    let slope = sweep.full.slope;
    checks.push(Check {
        name: "remainder_order",
        pass: (1.3..=1.7).contains(&slope),
        detail: format!("fitted slope {slope:?} against window [1.3, 1.7]"),
    });
    let drop = sweep.full.slope - sweep.truncated.slope;
    checks.push(Check {
        name: "truncation_sensitivity",
        pass: drop >= 0.3,
        detail: format!(
            "slope falls by {drop:?} without the second-order profiles (need >= 0.3)"
        ),
    });
    checks.push(Check {
        name: "layer_structure",
        pass: oleinik.ok,
        detail: format!(
            "min off-wall u {:?}, band shear min {:?}",
            oleinik.min_off_wall_u, oleinik.band_shear_min
        ),
    });
    let max_ratio = verify
        .record
        .ratios
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    checks.push(Check {
        name: "fixed_point_contraction",
        pass: verify.record.converged && verify.record.ratios.iter().all(|r| *r < 1.0),
        detail: format!(
            "converged {} in {} iterations, worst increment ratio {max_ratio:?}",
            verify.record.converged, verify.record.iterations
        ),
    });
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for &(_, r) in &verify.rho {
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let spread = hi / lo;
    checks.push(Check {
        name: "linear_response_window",
        pass: spread <= 3.0 && verify.homogeneity_drift <= 1e-8,
        detail: format!(
            "response spread {spread:?} (cap 3), homogeneity drift {:?} (cap 1e-8)",
            verify.homogeneity_drift
        ),
    });
    let hardy_ok = probes.hardy.iter().all(|h| h.max_c.is_finite());
    let probe_ok = probes.probes.elliptic_c.is_finite()
        && probes.probes.derivative_c.is_finite()
        && probes.probes.away_c.is_finite();
    checks.push(Check {
        name: "probe_constants_finite",
        pass: hardy_ok && probe_ok,
        detail: format!(
            "corpus max {:?}, quadratic-form constants {:?}/{:?}/{:?}",
            probes
                .hardy
                .iter()
                .map(|h| h.max_c)
                .fold(0.0_f64, f64::max),
            probes.probes.elliptic_c,
            probes.probes.derivative_c,
            probes.probes.away_c
        ),
    });
    Verdict { checks }
}

/// Marks the failing stage and everything after it as skipped, then
/// persists the manifest so the failure is recorded on disk, not just in
/// the returned error.
fn abort_run(
    root: &Path,
    cfg: &RunConfig,
    cache: Option<&CacheInfo>,
    mut stages: Vec<StageRecord>,
    failed: &'static str,
    err: PipelineError,
) -> PipelineError {
    stages.push(StageRecord {
        name: failed,
        status: format!("error: {err}"),
    });
    for &name in STAGES.iter().skip_while(|&&n| n != failed).skip(1) {
        stages.push(StageRecord {
            name,
            status: "skipped".into(),
        });
    }
    if let Err(e) = write_manifest(root, cfg, cache, &stages, "not-reached") {
        return e;
    }
    err
}

/// Runs every stage in order, records a manifest, and scores the
/// quantitative verdict. Artifacts of stages that completed before a
/// failure stay on disk, and the manifest names the failing stage.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineReport, PipelineError> {
    cfg.validate()?;
    let root = output_root(cfg);
    write_text(&root.join("resolved_config.txt"), &cfg.to_text())?;

    let mut stages: Vec<StageRecord> = Vec::new();
    let ok = |name| StageRecord {
        name,
        status: "ok".into(),
    };

    let PrandtlOutput {
        sol,
        oleinik,
        cache,
    } = match prandtl_stage(cfg, &root) {
        Ok(v) => {
            stages.push(ok("prandtl"));
            v
        }
        Err(e) => return Err(abort_run(&root, cfg, None, stages, "prandtl", e)),
    };

    let expand = match expand_stage(cfg, &root, sol) {
        Ok(v) => {
            stages.push(ok("expand"));
            v
        }
        Err(e) => return Err(abort_run(&root, cfg, Some(&cache), stages, "expand", e)),
    };

    let sweep = match sweep_stage(cfg, &root, &expand.profiles) {
        Ok(v) => {
            stages.push(ok("remainder_sweep"));
            v
        }
        Err(e) => {
            return Err(abort_run(
                &root,
                cfg,
                Some(&cache),
                stages,
                "remainder_sweep",
                e,
            ))
        }
    };

    let verify = match verify_stage(cfg, &root, &expand.profiles) {
        Ok(v) => {
            stages.push(ok("ns_verify"));
            v
        }
        Err(e) => return Err(abort_run(&root, cfg, Some(&cache), stages, "ns_verify", e)),
    };

    let probes = match probes_stage(cfg, &root, &expand.profiles) {
        Ok(v) => {
            stages.push(ok("probes"));
            v
        }
        Err(e) => return Err(abort_run(&root, cfg, Some(&cache), stages, "probes", e)),
    };

    let verdict = build_verdict(&oleinik, &sweep, &verify, &probes);
    write_text(&root.join("verdict.txt"), &verdict_text(&verdict))?;
    write_manifest(
        &root,
        cfg,
        Some(&cache),
        &stages,
        if verdict.passed() { "pass" } else { "fail" },
    )?;

    Ok(PipelineReport {
        root,
        stages,
        verdict,
    })
}
