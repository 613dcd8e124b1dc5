//! Composition of the multi-order approximate solution and its remainder.
//!
//! [`build_expansion`] runs the viscosity-independent part of the pipeline
//! once per flow: the nonlinear layer march, the two outer correctors (fed
//! by the layer's wall fluxes), and the two layer correctors. The result
//! can then be composed at any `ε` by [`assemble`]:
//!
//! ```text
//! U_s = u0e + u0b + √ε (u1e + u1b) + ε (u2e + û2b)
//! V_s = v0e + √ε (v0b + v1e) + ε (v1b + v2e) + ε^{3/2} v̂2b
//! P_s = p0e + √ε p1e + ε (p2e + p2b) + ε^{3/2} p3b
//! ```
//!
//! with outer fields evaluated at `(X, Y)` and layer fields at
//! `y = Y/√ε`. The evaluation grid aligns its near-wall nodes with
//! `√ε · y_j`, so layer fields transfer by index (no interpolation error)
//! and the centered operators applied to the composed fields reproduce the
//! scaled layer operators exactly; outer fields are interpolated in `Y`
//! by a fixed cubic rule per target height, which commutes with the
//! streamwise stencils.
//!
//! [`remainder`] then evaluates the steady momentum residuals
//!
//! ```text
//! R1 = U_s U_sX + V_s U_sY − ε ΔU_s + P_sX
//! R2 = U_s V_sX + V_s V_sY − ε ΔV_s + P_sY
//! ```
//!
//! with the shared difference operators, and [`remainder_sweep`] fits the
//! decay of `‖R1‖ + ‖R2‖` against `ε` (the construction targets an
//! `ε^{3/2}` rate; dropping the second-order correctors costs a half
//! order, which the truncated mode exposes).

use crate::euler_corr::{
    outer_grid, solve_corrector1, solve_corrector2, CorrError, EulerCorrector,
};
use crate::flows::EulerFlow;
use crate::layer_corr::{
    layer_zero, solve_bl1, solve_bl2, traces1, traces2, CorrectorTraces1, CorrectorTraces2,
    LayerError, LayerOne, LayerTwo, LayerZero,
};
use crate::mesh::{
    chi, chi_prime, cumtrapz, diff, fit_loglog_slope, interp_cubic, l2_norm, laplacian,
    sup_norm, Axis, Grid, MeshError, ScalarField2D,
};
use crate::prandtl::{
    blasius_inflow, march_grid, solve_prandtl, MarchParams, PrandtlError, PrandtlSolution,
};
use thiserror::Error;

/// Errors from building or composing the expansion.
#[derive(Debug, Error)]
pub enum ComposeError {
    /// Grid construction failed.
    #[error(transparent)]
    Mesh(#[from] MeshError),
    /// The nonlinear layer march failed.
    #[error(transparent)]
    Prandtl(#[from] PrandtlError),
    /// An outer corrector solve failed.
    #[error(transparent)]
    Corrector(#[from] CorrError),
    /// A layer corrector solve failed.
    #[error(transparent)]
    Layer(#[from] LayerError),
    /// The evaluation grid cannot resolve the layer at this viscosity.
    #[error("only {nodes} vertical nodes below √ε = {sqrt_eps:.3e}; need at least 8")]
    UnresolvedLayer { sqrt_eps: f64, nodes: usize },
    /// Invalid sweep or assembly input.
    #[error("bad composition input: {0}")]
    Bad(String),
}

/// Resolutions for the viscosity-independent solves.
#[derive(Debug, Clone, Copy)]
pub struct BuildParams {
    /// Stations shared by every grid in the chain.
    pub nx: usize,
    /// Vertical nodes of the layer march grid.
    pub march_ny: usize,
    /// Vertical nodes of the outer corrector grid.
    pub outer_ny: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            nx: 64,
            march_ny: 385,
            outer_ny: 129,
        }
    }
}

/// Everything the composition needs, computed once per flow: the base
/// profile, both outer correctors with their wall traces, and both layer
/// correctors. Viscosity enters only at assembly time.
#[derive(Debug, Clone)]
pub struct ExpansionProfiles {
    /// The outer flow.
    pub flow: EulerFlow,
    /// Layer march grid (stations × layer variable).
    pub march: Grid,
    /// Outer corrector grid (same stations × outer variable).
    pub outer: Grid,
    /// Nonlinear layer profile.
    pub sol: PrandtlSolution,
    /// Zeroth-order layer fields and derivatives.
    pub lz: LayerZero,
    /// Streamwise integral of the layer's zeroth-order wall flux; wall
    /// data of the first corrector.
    pub w1: Vec<f64>,
    /// First outer corrector.
    pub c1: EulerCorrector,
    /// First-order wall traces.
    pub t1: CorrectorTraces1,
    /// First layer corrector.
    pub l1: LayerOne,
    /// Streamwise integral of the first-order wall flux; wall data of the
    /// second corrector.
    pub w2: Vec<f64>,
    /// Second outer corrector.
    pub c2: EulerCorrector,
    /// Second-order wall traces.
    pub t2: CorrectorTraces2,
    /// Second layer corrector and the layer pressures.
    pub l2: LayerTwo,
}

/// Runs the full viscosity-independent corrector chain for one flow.
pub fn build_expansion(flow: &EulerFlow, p: &BuildParams) -> Result<ExpansionProfiles, ComposeError> {
    let march = march_grid(flow.l(), p.nx, p.march_ny)?;
    let inflow = blasius_inflow(flow, march.ys());
    let sol = solve_prandtl(flow, &march, &inflow, &MarchParams::default())?;
    build_expansion_from(flow, p, sol)
}

/// Same chain, but starting from an already-solved layer march (for example
/// one loaded from a cache file). The march grid must match what
/// [`build_expansion`] would construct for these parameters.
pub fn build_expansion_from(
    flow: &EulerFlow,
    p: &BuildParams,
    sol: PrandtlSolution,
) -> Result<ExpansionProfiles, ComposeError> {
    let l = flow.l();
    let march = march_grid(l, p.nx, p.march_ny)?;
    if sol.grid.xs() != march.xs() || sol.grid.ys() != march.ys() {
        return Err(ComposeError::Bad(
            "supplied march solution lives on a different grid than the build parameters request"
                .into(),
        ));
    }
    let lz = layer_zero(&sol);

    let outer = outer_grid(l, p.nx, p.outer_ny)?;
    debug_assert_eq!(march.xs(), outer.xs());
    let w1 = cumtrapz(march.xs(), &lz.v0b_wall);
    let c1 = solve_corrector1(flow, &outer, &w1)?;
    let t1 = traces1(flow, &c1, march.xs());
    let l1 = solve_bl1(&march, &lz, &t1)?;

    let w2 = cumtrapz(march.xs(), &l1.v1b_wall);
    let c2 = solve_corrector2(flow, &outer, &w2, &c1)?;
    let t2 = traces2(flow, &c1, &c2, march.xs());
    let l2 = solve_bl2(&march, flow, &lz, &l1, &t1, &t2)?;

    Ok(ExpansionProfiles {
        flow: *flow,
        march,
        outer,
        sol,
        lz,
        w1,
        c1,
        t1,
        l1,
        w2,
        c2,
        t2,
        l2,
    })
}

/// Which part of the expansion to compose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// All orders through `ε^{3/2}`.
    Full,
    /// Drop every second-order piece (outer and layer) and the layer
    /// pressures; the remainder then decays a half order slower.
    DropSecondOrder,
}

/// The composed approximate solution at one viscosity.
#[derive(Debug, Clone)]
pub struct ApproximateSolution {
    /// Viscosity.
    pub eps: f64,
    /// The outer flow the expansion corrects.
    pub flow: EulerFlow,
    /// Evaluation grid (layer-aligned near the wall).
    pub grid: Grid,
    /// Number of leading vertical nodes that coincide with `√ε · y_j`.
    pub n_aligned: usize,
    /// Composed tangential velocity.
    pub us: ScalarField2D,
    /// Composed vertical velocity.
    pub vs: ScalarField2D,
    /// Composed pressure.
    pub ps: ScalarField2D,
    /// Inflow trace `U_s(0, ·)`.
    pub a0: Vec<f64>,
    /// Outflow trace `U_s(L, ·)`.
    pub a_l: Vec<f64>,
    /// Inflow trace `V_s(0, ·)`.
    pub b0: Vec<f64>,
    /// Outflow trace `V_s(L, ·)`.
    pub b_l: Vec<f64>,
    /// Which truncation was composed.
    pub truncation: Truncation,
}

/// Geometric growth ratio of the vertical spacing above the aligned layer.
const TAIL_GROWTH: f64 = 1.12;

/// Interpolates an outer-grid field to the evaluation heights with a fixed
/// cubic rule per target height (exact at shared nodes, and commuting with
/// the streamwise stencils since the rule does not depend on the station).
fn interp_outer(outer: &Grid, f: &ScalarField2D, ys_eval: &[f64]) -> ScalarField2D {
    let nx = outer.nx();
    let mut out = ScalarField2D::zeros((nx, ys_eval.len()));
    let mut col = vec![0.0; outer.ny()];
    for i in 0..nx {
        for (j, v) in col.iter_mut().enumerate() {
            *v = f[[i, j]];
        }
        for (j, &y) in ys_eval.iter().enumerate() {
            out[[i, j]] = interp_cubic(outer.ys(), &col, y);
        }
    }
    out
}

/// Composes the approximate solution at viscosity `eps`.
pub fn assemble(
    pr: &ExpansionProfiles,
    eps: f64,
    trunc: Truncation,
) -> Result<ApproximateSolution, ComposeError> {
    if !(eps > 0.0) {
        return Err(ComposeError::Bad(format!("eps must be positive, got {eps}")));
    }
    let flow = &pr.flow;
    let l = flow.l();
    let y_max = flow.y_max();
    let (grid, n_aligned) =
        Grid::layer_aligned(l, pr.march.nx(), y_max, eps, pr.march.ys(), TAIL_GROWTH)?;
    let sq = eps.sqrt();
    let nodes = grid.nodes_below(sq);
    if nodes < 8 {
        return Err(ComposeError::UnresolvedLayer { sqrt_eps: sq, nodes });
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let xs = grid.xs().to_vec();
    let ys = grid.ys().to_vec();

    // Outer corrector fields at the evaluation heights.
    let u1e = interp_outer(&pr.outer, &pr.c1.u, &ys);
    let v1e = interp_outer(&pr.outer, &pr.c1.v, &ys);
    let p1e = interp_outer(&pr.outer, &pr.c1.p, &ys);
    let u2e = interp_outer(&pr.outer, &pr.c2.u, &ys);
    let v2e = interp_outer(&pr.outer, &pr.c2.v, &ys);
    let p2e = interp_outer(&pr.outer, &pr.c2.p, &ys);

    // Layer fields transfer by index below the aligned height and follow
    // their limits above it (all the decaying fields vanish; the vertical
    // antiderivative saturates and the shifted second-order flux keeps the
    // constant `-v2b(x, 0)` until the cutoff removes it).
    let layer = |f: &ScalarField2D, i: usize, j: usize| if j < n_aligned { f[[i, j]] } else { 0.0 };

    let full = trunc == Truncation::Full;
    let mut us = ScalarField2D::zeros((nx, ny));
    let mut vs = ScalarField2D::zeros((nx, ny));
    let mut ps = ScalarField2D::zeros((nx, ny));
    for i in 0..nx {
        let x = xs[i];
        for (j, &y_out) in ys.iter().enumerate() {
            let u0b = layer(&pr.lz.u0b, i, j);
            let v0b = layer(&pr.lz.v0b, i, j);
            let u1b = layer(&pr.l1.u1b, i, j);
            let v1b = layer(&pr.l1.v1b, i, j);
            let mut u = flow.u(x, y_out) + u0b + sq * (u1e[[i, j]] + u1b);
            let mut v = flow.v(x, y_out) + sq * (v0b + v1e[[i, j]]) + eps * v1b;
            let mut p = flow.p(x, y_out) + sq * p1e[[i, j]];
            if full {
                let u2b = layer(&pr.l2.u2b, i, j);
                let iu2b = if j < n_aligned {
                    pr.l2.iu2b[[i, j]]
                } else {
                    pr.l2.iu2b_top[i]
                };
                let v2b_shift = if j < n_aligned {
                    pr.l2.v2b[[i, j]] - pr.l2.v2b_wall[i]
                } else {
                    -pr.l2.v2b_wall[i]
                };
                let p2b = layer(&pr.l2.p2b, i, j);
                let p3b = layer(&pr.l2.p3b, i, j);
                u += eps * (u2e[[i, j]] + chi(y_out) * u2b + sq * chi_prime(y_out) * iu2b);
                v += eps * v2e[[i, j]] + eps * sq * chi(y_out) * v2b_shift;
                p += eps * (p2e[[i, j]] + p2b) + eps * sq * p3b;
            }
            us[[i, j]] = u;
            vs[[i, j]] = v;
            ps[[i, j]] = p;
        }
    }
    let col = |f: &ScalarField2D, i: usize| (0..ny).map(|j| f[[i, j]]).collect::<Vec<f64>>();
    Ok(ApproximateSolution {
        eps,
        flow: *flow,
        n_aligned,
        a0: col(&us, 0),
        a_l: col(&us, nx - 1),
        b0: col(&vs, 0),
        b_l: col(&vs, nx - 1),
        us,
        vs,
        ps,
        grid,
        truncation: trunc,
    })
}

/// Steady momentum residuals of a composed (or arbitrary) field triple,
/// evaluated with the shared centered operators.
pub fn remainder(ap: &ApproximateSolution) -> (ScalarField2D, ScalarField2D) {
    let g = &ap.grid;
    let ux = diff(g, &ap.us, Axis::X, 1);
    let uy = diff(g, &ap.us, Axis::Y, 1);
    let vx = diff(g, &ap.vs, Axis::X, 1);
    let vy = diff(g, &ap.vs, Axis::Y, 1);
    let lap_u = laplacian(g, &ap.us);
    let lap_v = laplacian(g, &ap.vs);
    let px = diff(g, &ap.ps, Axis::X, 1);
    let py = diff(g, &ap.ps, Axis::Y, 1);
    let mut r1 = ScalarField2D::zeros(ap.us.dim());
    let mut r2 = ScalarField2D::zeros(ap.us.dim());
    for i in 0..g.nx() {
        for j in 0..g.ny() {
            r1[[i, j]] = ap.us[[i, j]] * ux[[i, j]] + ap.vs[[i, j]] * uy[[i, j]]
                - ap.eps * lap_u[[i, j]]
                + px[[i, j]];
            r2[[i, j]] = ap.us[[i, j]] * vx[[i, j]] + ap.vs[[i, j]] * vy[[i, j]]
                - ap.eps * lap_v[[i, j]]
                + py[[i, j]];
        }
    }
    (r1, r2)
}

/// Structural facts about the composed profile: exact wall vanishing, the
/// near-wall lower bound `U_s ≳ Y/√ε`, the vertical-velocity band bound
/// `|V_s| ≤ C δ U_s`, the `O(√ε)` distance to the outer flow above the
/// band, and the discrete divergence.
#[derive(Debug, Clone)]
pub struct ProfileFacts {
    /// `max |U_s(X, 0)|` (telescoping wall values; exactly zero).
    pub wall_sup: f64,
    /// `sup |∂_X U_s + ∂_Y V_s|`.
    pub div_sup: f64,
    /// `min U_s √ε / Y` over `0 < Y ≤ √ε` (≈ the wall shear; positive for
    /// non-degenerate profiles).
    pub lower_min: f64,
    /// `max |V_s| / (δ U_s)` over `0 < Y ≤ δ`.
    pub vband_max: f64,
    /// Band height `δ = max(√L, ε^{1/4})`.
    pub delta: f64,
    /// `sup_{Y ≥ δ} |U_s − u0e| / √ε`.
    pub euler_gap0: f64,
    /// `sup_{Y ≥ δ} |∂_Y(U_s − u0e)| / √ε`.
    pub euler_gap1: f64,
}

/// Measures the profile facts of a composed solution.
pub fn profile_facts(ap: &ApproximateSolution) -> ProfileFacts {
    let g = &ap.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let sq = ap.eps.sqrt();
    let delta = ap.flow.l().sqrt().max(ap.eps.powf(0.25));

    let mut wall_sup = 0.0_f64;
    for i in 0..nx {
        wall_sup = wall_sup.max(ap.us[[i, 0]].abs());
    }
    let ux = diff(g, &ap.us, Axis::X, 1);
    let vy = diff(g, &ap.vs, Axis::Y, 1);
    let div_sup = sup_norm(&(&ux + &vy));

    let mut lower_min = f64::INFINITY;
    let mut vband_max = 0.0_f64;
    for i in 0..nx {
        for (j, &y) in g.ys().iter().enumerate().skip(1) {
            if y <= sq {
                lower_min = lower_min.min(ap.us[[i, j]] * sq / y);
            }
            if y <= delta {
                vband_max = vband_max.max(ap.vs[[i, j]].abs() / (delta * ap.us[[i, j]]));
            }
        }
    }

    // Distance to the outer flow above the band, in units of √ε; the gap
    // field is differentiated with the same stencils as the remainder.
    let mut gap = ScalarField2D::zeros((nx, ny));
    for (i, &x) in g.xs().iter().enumerate() {
        for (j, &y) in g.ys().iter().enumerate() {
            gap[[i, j]] = ap.us[[i, j]] - ap.flow.u(x, y);
        }
    }
    let gap_y = diff(g, &gap, Axis::Y, 1);
    let mut euler_gap0 = 0.0_f64;
    let mut euler_gap1 = 0.0_f64;
    for i in 0..nx {
        for (j, &y) in g.ys().iter().enumerate() {
            if y >= delta {
                euler_gap0 = euler_gap0.max(gap[[i, j]].abs() / sq);
                euler_gap1 = euler_gap1.max(gap_y[[i, j]].abs() / sq);
            }
        }
    }
    ProfileFacts {
        wall_sup,
        div_sup,
        lower_min,
        vband_max,
        delta,
        euler_gap0,
        euler_gap1,
    }
}

/// One row of the viscosity sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    /// Viscosity.
    pub eps: f64,
    /// `‖R1‖`.
    pub r1: f64,
    /// `‖R2‖`.
    pub r2: f64,
    /// Least-squares slope over the rows so far (NaN on the first row).
    pub slope_so_far: f64,
}

/// Result of a viscosity sweep.
#[derive(Debug, Clone)]
pub struct SweepReport {
    /// Per-viscosity norms.
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log(‖R1‖+‖R2‖)` against `log ε`.
    pub slope: f64,
    /// Intercept of the fit (natural log of the leading constant).
    pub intercept_ln: f64,
    /// Which truncation was swept.
    pub truncation: Truncation,
}

/// Sweeps the remainder norms over a decreasing viscosity list and fits
/// the decay rate.
pub fn remainder_sweep(
    pr: &ExpansionProfiles,
    eps_list: &[f64],
    trunc: Truncation,
) -> Result<SweepReport, ComposeError> {
    if eps_list.len() < 4 {
        return Err(ComposeError::Bad(format!(
            "sweep needs at least 4 viscosities, got {}",
            eps_list.len()
        )));
    }
    if !eps_list.windows(2).all(|w| w[0] > w[1]) {
        return Err(ComposeError::Bad("sweep viscosities must decrease".into()));
    }
    let span = eps_list[0] / eps_list[eps_list.len() - 1];
    if span < 10.0_f64.powf(1.5) {
        return Err(ComposeError::Bad(format!(
            "sweep must span at least 1.5 decades, got {:.2}",
            span.log10()
        )));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut sums = Vec::with_capacity(eps_list.len());
    for (k, &eps) in eps_list.iter().enumerate() {
        let ap = assemble(pr, eps, trunc)?;
        let (r1, r2) = remainder(&ap);
        let n1 = l2_norm(&ap.grid, &r1);
        let n2 = l2_norm(&ap.grid, &r2);
        sums.push(n1 + n2);
        let slope_so_far = if k == 0 {
            f64::NAN
        } else {
            fit_loglog_slope(&eps_list[..=k], &sums)
        };
        rows.push(SweepRow {
            eps,
            r1: n1,
            r2: n2,
            slope_so_far,
        });
    }
    let slope = fit_loglog_slope(eps_list, &sums);
    let mean_lx = eps_list.iter().map(|v| v.ln()).sum::<f64>() / eps_list.len() as f64;
    let mean_ly = sums.iter().map(|v| v.ln()).sum::<f64>() / sums.len() as f64;
    let intercept_ln = mean_ly - slope * mean_lx;
    Ok(SweepReport {
        rows,
        slope,
        intercept_ln,
        truncation: trunc,
    })
}
