//! Nonlinear boundary-layer march and its similarity-solution oracle.
//!
//! The leading-order layer profile solves the degenerate parabolic system
//!
//! ```text
//! u u_x + v u_y - u_yy + px(x) = 0,      u_x + v_y = 0,
//! u(x, 0) = 0,   u(x, y→∞) → ue(x),   u(0, y) = inflow(y),
//! ```
//!
//! in the stretched layer variable `y`, where `ue(x)` is the wall trace of
//! the outer tangential velocity and `px(x) = -ue ue'` is the Bernoulli
//! pressure gradient it imposes. [`solve_prandtl`] marches this system
//! station by station with midpoint (Crank–Nicolson) collocation in `x` and
//! a damped Newton iteration per station; the vertical velocity is
//! eliminated through the continuity equation, which makes each station's
//! Jacobian lower Hessenberg and solvable in O(n²).
//!
//! For a constant edge velocity `c` the system has the classical similarity
//! solution `u = c f'(η)`, `η = y √(c/(1+x))`, where `f''' + ½ f f'' = 0`
//! with `f(0) = f'(0) = 0`, `f'(∞) = 1`. [`solve_blasius`] produces that
//! profile by shooting and serves as the accuracy oracle for the march and
//! as the default inflow profile.
//!
//! [`check_oleinik`] verifies the structural facts the downstream analysis
//! leans on: the profile is positive off the wall, increases monotonically
//! in a band above the wall, and stays below the edge velocity.

use crate::flows::EulerFlow;
use crate::linalg::{dense_solve, solve_lower_hessenberg};
use crate::mesh::{
    cumtrapz2d, diff, diff1d, diff_stencils, fd_weights, interp_cubic, Axis, Grid, MeshError,
    ScalarField2D,
};
use ndarray::Array2;
use thiserror::Error;

/// Wall value `f''(0)` of the similarity profile (normalization
/// `f''' + ½ f f'' = 0`, `η = y √(c/(1+x))`).
pub const BLASIUS_FPP0: f64 = 0.332057336215196;

/// Limit of `η - f(η)`: the (scaled) displacement thickness of the
/// similarity profile.
pub const BLASIUS_DISPLACEMENT: f64 = 1.720787657520503;

/// Errors from inflow handling and the boundary-layer march.
#[derive(Debug, Error)]
pub enum PrandtlError {
    /// The wall shear dropped to zero or below: the layer separates and the
    /// march is no longer well posed.
    #[error("flow separates at station {station} (x = {x:.5}): wall shear {wall_shear:.3e}")]
    Separation {
        /// Index of the offending station.
        station: usize,
        /// Streamwise location.
        x: f64,
        /// Observed wall shear.
        wall_shear: f64,
    },
    /// Newton failed to reach the residual tolerance at a station.
    #[error("Newton stalled at station {station} (x = {x:.5}): residual {residual:.3e}")]
    NewtonStalled {
        /// Index of the offending station.
        station: usize,
        /// Streamwise location.
        x: f64,
        /// Final sup-norm residual.
        residual: f64,
    },
    /// The inflow profile is unusable (wrong format, no-slip violation, …).
    #[error("bad inflow profile: {0}")]
    BadInflow(String),
    /// Grid construction failed.
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

// ---------------------------------------------------------------------------
// Similarity profile by shooting
// ---------------------------------------------------------------------------

/// Tabulated similarity profile `f, f', f''` on a uniform `η` grid, with
/// Hermite interpolation between nodes.
#[derive(Debug, Clone)]
pub struct Blasius {
    h: f64,
    eta_max: f64,
    f: Vec<f64>,
    fp: Vec<f64>,
    fpp: Vec<f64>,
}

/// Integrates `f''' = -½ f f''` from `(0, 0, s)` with classical RK4 and
/// `n` uniform steps, storing the trajectory.
fn integrate_profile(s: f64, eta_max: f64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = eta_max / n as f64;
    let rhs = |y: [f64; 3]| [y[1], y[2], -0.5 * y[0] * y[2]];
    let mut y = [0.0, 0.0, s];
    let mut f = Vec::with_capacity(n + 1);
    let mut fp = Vec::with_capacity(n + 1);
    let mut fpp = Vec::with_capacity(n + 1);
    f.push(y[0]);
    fp.push(y[1]);
    fpp.push(y[2]);
    for _ in 0..n {
        let k1 = rhs(y);
        let y2 = [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1], y[2] + 0.5 * h * k1[2]];
        let k2 = rhs(y2);
        let y3 = [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1], y[2] + 0.5 * h * k2[2]];
        let k3 = rhs(y3);
        let y4 = [y[0] + h * k3[0], y[1] + h * k3[1], y[2] + h * k3[2]];
        let k4 = rhs(y4);
        for c in 0..3 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        f.push(y[0]);
        fp.push(y[1]);
        fpp.push(y[2]);
    }
    (f, fp, fpp)
}

/// Solves the similarity problem by shooting on the wall curvature with a
/// secant iteration, using `n` RK4 steps up to `η = 12`.
pub fn solve_blasius_with(n: usize) -> Blasius {
    let eta_max = 12.0;
    // f'(η) approaches its asymptote like exp(-η²/4), so the far-field
    // condition may be collocated at η = 12 with error ~1e-12.
    let shoot = |s: f64| integrate_profile(s, eta_max, n).1[n] - 1.0;
    let mut s0 = 0.30;
    let mut s1 = 0.36;
    let mut g0 = shoot(s0);
    let mut g1 = shoot(s1);
    for _ in 0..60 {
        if (g1 - g0).abs() < 1e-300 {
            break;
        }
        let s2 = s1 - g1 * (s1 - s0) / (g1 - g0);
        s0 = s1;
        g0 = g1;
        s1 = s2;
        g1 = shoot(s1);
        if g1.abs() < 1e-14 || (s1 - s0).abs() < 1e-15 {
            break;
        }
    }
    let (f, fp, fpp) = integrate_profile(s1, eta_max, n);
    Blasius {
        h: eta_max / n as f64,
        eta_max,
        f,
        fp,
        fpp,
    }
}

/// Solves the similarity problem at the default resolution (4800 steps,
/// profile accurate to ~1e-11).
pub fn solve_blasius() -> Blasius {
    solve_blasius_with(4800)
}

impl Blasius {
    /// Wall curvature `f''(0)` found by the shooting iteration.
    pub fn fpp0(&self) -> f64 {
        self.fpp[0]
    }

    /// `lim (η - f)`, read off at the truncation height.
    pub fn displacement(&self) -> f64 {
        self.eta_max - self.f[self.f.len() - 1]
    }

    /// Evaluates `(f, f', f'')` at arbitrary `η ≥ 0` by cubic Hermite
    /// interpolation (each stored component's derivative is also stored or
    /// given by the ODE, so the interpolant is O(h⁴) accurate).
    pub fn eval(&self, eta: f64) -> (f64, f64, f64) {
        assert!(eta >= 0.0, "similarity variable must be nonnegative");
        let n = self.f.len() - 1;
        if eta >= self.eta_max {
            // Beyond the table f' has converged to 1 to machine precision.
            let fe = self.f[n] + (eta - self.eta_max) * self.fp[n];
            return (fe, self.fp[n], 0.0);
        }
        let k = ((eta / self.h) as usize).min(n - 1);
        let t = (eta - self.h * k as f64) / self.h;
        let hermite = |va: f64, vb: f64, da: f64, db: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            va * (2.0 * t3 - 3.0 * t2 + 1.0)
                + vb * (-2.0 * t3 + 3.0 * t2)
                + self.h * (da * (t3 - 2.0 * t2 + t) + db * (t3 - t2))
        };
        let fppp = |i: usize| -0.5 * self.f[i] * self.fpp[i];
        let f = hermite(self.f[k], self.f[k + 1], self.fp[k], self.fp[k + 1]);
        let fp = hermite(self.fp[k], self.fp[k + 1], self.fpp[k], self.fpp[k + 1]);
        let fpp = hermite(self.fpp[k], self.fpp[k + 1], fppp(k), fppp(k + 1));
        (f, fp, fpp)
    }

    /// Tangential similarity velocity `c f'(y √(c/(1+x)))` for edge speed `c`.
    pub fn similarity_u(&self, c: f64, x: f64, y: f64) -> f64 {
        let s = (c / (1.0 + x)).sqrt();
        c * self.eval(y * s).1
    }

    /// Vertical similarity velocity `½ √(c/(1+x)) (η f' - f)`.
    pub fn similarity_v(&self, c: f64, x: f64, y: f64) -> f64 {
        let s = (c / (1.0 + x)).sqrt();
        let eta = y * s;
        let (f, fp, _) = self.eval(eta);
        0.5 * s * (eta * fp - f)
    }

    /// Analytic wall shear `c^{3/2} f''(0) / √(1+x)` of the similarity
    /// solution.
    pub fn similarity_wall_shear(&self, c: f64, x: f64) -> f64 {
        c.powf(1.5) * self.fpp0() / (1.0 + x).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Inflow profiles
// ---------------------------------------------------------------------------

/// Tangential inflow profile `u(0, y)` prescribed on its own node set.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowProfile {
    /// Node heights, starting at the wall `y = 0`.
    pub y: Vec<f64>,
    /// Profile values at the nodes.
    pub u: Vec<f64>,
    /// Analytic wall curvature `∂²_y u(0)` when the profile was built from
    /// closed-form pieces; `None` for profiles read from tables, in which
    /// case compatibility checks fall back to a one-sided difference.
    pub curvature_at_wall: Option<f64>,
}

impl InflowProfile {
    /// Parses a two-column `y u` table (whitespace separated, `#` comments).
    pub fn from_table_str(text: &str) -> Result<Self, PrandtlError> {
        let mut y = Vec::new();
        let mut u = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut parts = body.split_whitespace();
            let (a, b) = (parts.next(), parts.next());
            if parts.next().is_some() {
                return Err(PrandtlError::BadInflow(format!(
                    "line {}: expected two columns",
                    lineno + 1
                )));
            }
            match (a.and_then(|t| t.parse::<f64>().ok()), b.and_then(|t| t.parse::<f64>().ok())) {
                (Some(yv), Some(uv)) => {
                    y.push(yv);
                    u.push(uv);
                }
                _ => {
                    return Err(PrandtlError::BadInflow(format!(
                        "line {}: could not parse two numbers from {body:?}",
                        lineno + 1
                    )))
                }
            }
        }
        if y.len() < 4 {
            return Err(PrandtlError::BadInflow(format!(
                "need at least 4 rows, found {}",
                y.len()
            )));
        }
        if y[0] != 0.0 {
            return Err(PrandtlError::BadInflow(format!(
                "first node must sit on the wall, found y = {}",
                y[0]
            )));
        }
        if y.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PrandtlError::BadInflow(
                "node heights must be strictly increasing".into(),
            ));
        }
        Ok(InflowProfile {
            y,
            u,
            curvature_at_wall: None,
        })
    }

    /// Renders the profile as a two-column table (17 significant digits, so
    /// a round trip through text is bit-exact).
    pub fn to_table_string(&self) -> String {
        let mut out = String::from("# y u\n");
        for (y, u) in self.y.iter().zip(&self.u) {
            out.push_str(&format!("{y:.17e} {u:.17e}\n"));
        }
        out
    }

    /// Samples the profile at height `y` (cubic interpolation inside the
    /// table, constant extension above it).
    pub fn sample(&self, y: f64) -> f64 {
        let top = *self.y.last().unwrap();
        if y >= top {
            *self.u.last().unwrap()
        } else {
            interp_cubic(&self.y, &self.u, y)
        }
    }

    /// Samples the profile on a new node set.
    pub fn resample(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.sample(y)).collect()
    }
}

/// Builds the default inflow: the similarity profile for the local edge
/// speed, plus a compactly concentrated correction that bends the wall
/// curvature to match the imposed pressure gradient.
///
/// The correction `(px(0)/2) y² e^{-y²}` vanishes to second order at the
/// wall except in curvature, decays rapidly, and keeps no-slip exact.
pub fn blasius_inflow(flow: &EulerFlow, ys: &[f64]) -> InflowProfile {
    let profile = solve_blasius();
    let ue0 = flow.u(0.0, 0.0);
    let px0 = flow.bernoulli_wall_px(0.0);
    let u = ys
        .iter()
        .map(|&y| profile.similarity_u(ue0, 0.0, y) + 0.5 * px0 * y * y * (-y * y).exp())
        .collect();
    InflowProfile {
        y: ys.to_vec(),
        u,
        curvature_at_wall: Some(px0),
    }
}

/// Outcome of the inflow/pressure-gradient compatibility check.
#[derive(Debug, Clone, Copy)]
pub struct CompatibilityReport {
    /// `|u(0)|` of the inflow — must be an exact zero for the march.
    pub no_slip_defect: f64,
    /// `|∂²_y u(0) - px(0)|`: the wall curvature a steady layer must carry.
    pub curvature_residual: f64,
    /// Whether the curvature came from a closed form (`true`) or a one-sided
    /// difference on the first table rows (`false`, looser tolerance).
    pub analytic: bool,
}

/// Checks that an inflow profile is compatible with the wall pressure
/// gradient of the base flow: evaluating the layer momentum balance on the
/// wall forces `∂²_y u(0, 0) = px(0)`.
pub fn compatibility_check(flow: &EulerFlow, inflow: &InflowProfile) -> CompatibilityReport {
    let px0 = flow.bernoulli_wall_px(0.0);
    let (curv, analytic) = match inflow.curvature_at_wall {
        Some(c) => (c, true),
        None => {
            let w = fd_weights(&inflow.y[0..4], 0.0, 2);
            let c = w.iter().zip(&inflow.u).map(|(w, u)| w * u).sum();
            (c, false)
        }
    };
    CompatibilityReport {
        no_slip_defect: inflow.u[0].abs(),
        curvature_residual: (curv - px0).abs(),
        analytic,
    }
}

// ---------------------------------------------------------------------------
// The nonlinear march
// ---------------------------------------------------------------------------

/// Tunable tolerances of the station solver.
#[derive(Debug, Clone, Copy)]
pub struct MarchParams {
    /// Sup-norm residual target per station.
    pub tol: f64,
    /// Maximum Newton iterations per station.
    pub max_newton: usize,
    /// Maximum step halvings in the residual-decrease line search.
    pub max_halvings: usize,
}

impl Default for MarchParams {
    fn default() -> Self {
        MarchParams {
            tol: 1e-10,
            max_newton: 30,
            max_halvings: 8,
        }
    }
}

/// Profile of the layer solution on the march grid.
#[derive(Debug, Clone)]
pub struct PrandtlSolution {
    /// Stations × layer heights (the march grid).
    pub grid: Grid,
    /// Tangential velocity at the nodes.
    pub u: ScalarField2D,
    /// Vertical velocity recovered from continuity with the shared centered
    /// operators: `v = -∫_0^y ∂_x u`.
    pub v: ScalarField2D,
    /// One-sided wall shear `∂_y u(x_i, 0)` per station.
    pub wall_shear: Vec<f64>,
    /// Edge velocity `ue(x_i)` (also the top boundary value).
    pub ue_wall: Vec<f64>,
    /// Imposed pressure gradient `px(x_i)` per station.
    pub p0px: Vec<f64>,
    /// Total Newton iterations spent across stations.
    pub newton_iters: usize,
}

/// Default march grid: the given streamwise stations against a layer grid
/// on `[0, 20]` with half the nodes packed below `y = 2`, where the profile
/// carries its curvature.
pub fn march_grid(l: f64, nx: usize, ny: usize) -> Result<Grid, MeshError> {
    Grid::wall_clustered(l, 20.0, nx, ny, 0.25)
}

/// One station's residual: midpoint collocation of the layer momentum
/// equation between the known profile `u0` and the candidate `u1`.
struct StationOp<'a> {
    ys: &'a [f64],
    sten1: &'a [(usize, Vec<f64>)],
    sten2: &'a [(usize, Vec<f64>)],
    u0: &'a [f64],
    dx: f64,
    px_mid: f64,
    top_bc: f64,
}

impl StationOp<'_> {
    /// Residual vector; also returns the midpoint fields needed by the
    /// Jacobian: `(dxu, um, vm, dyum)`.
    #[allow(clippy::type_complexity)]
    fn residual(&self, u1: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.ys.len();
        let mut dxu = vec![0.0; n];
        let mut um = vec![0.0; n];
        for k in 0..n {
            dxu[k] = (u1[k] - self.u0[k]) / self.dx;
            um[k] = 0.5 * (u1[k] + self.u0[k]);
        }
        // Continuity: v at the midpoint station, integrated up from the wall.
        let mut vm = vec![0.0; n];
        for j in 1..n {
            vm[j] = vm[j - 1] - 0.5 * (self.ys[j] - self.ys[j - 1]) * (dxu[j] + dxu[j - 1]);
        }
        let apply = |sten: &[(usize, Vec<f64>)], vals: &[f64], j: usize| {
            let (start, w) = &sten[j];
            w.iter()
                .enumerate()
                .map(|(t, w)| w * vals[start + t])
                .sum::<f64>()
        };
        let mut res = vec![0.0; n];
        res[0] = u1[0];
        res[n - 1] = u1[n - 1] - self.top_bc;
        let mut dyum = vec![0.0; n];
        for j in 1..n - 1 {
            dyum[j] = apply(self.sten1, &um, j);
            let dyyum = apply(self.sten2, &um, j);
            res[j] = um[j] * dxu[j] + vm[j] * dyum[j] - dyyum + self.px_mid;
        }
        (res, dxu, um, vm, dyum)
    }

    /// Dense Jacobian of [`Self::residual`]; lower Hessenberg because the
    /// continuity integral couples row `j` to all columns below it and the
    /// vertical stencils reach one node above.
    fn jacobian(&self, dxu: &[f64], um: &[f64], vm: &[f64], dyum: &[f64]) -> Array2<f64> {
        let n = self.ys.len();
        let mut jac = Array2::<f64>::zeros((n, n));
        jac[[0, 0]] = 1.0;
        jac[[n - 1, n - 1]] = 1.0;
        for j in 1..n - 1 {
            jac[[j, j]] += 0.5 * dxu[j] + um[j] / self.dx;
            let (s1, w1) = &self.sten1[j];
            for (t, w) in w1.iter().enumerate() {
                jac[[j, s1 + t]] += 0.5 * vm[j] * w;
            }
            let (s2, w2) = &self.sten2[j];
            for (t, w) in w2.iter().enumerate() {
                jac[[j, s2 + t]] -= 0.5 * w;
            }
            // ∂vm[j]/∂u1[k]: trapezoid weights of ∫_0^{y_j}, scaled by -1/dx.
            let scale = -dyum[j] / (2.0 * self.dx);
            for k in 0..=j {
                let lo = if k == 0 { 0.0 } else { self.ys[k] - self.ys[k - 1] };
                let hi = if k == j { 0.0 } else { self.ys[k + 1] - self.ys[k] };
                jac[[j, k]] += scale * (lo + hi);
            }
        }
        jac
    }
}

/// Distinguishes a genuine solver failure from incipient separation: at
/// separation the wall shear vanishes like `√(x_s - x)` and the station
/// systems lose solvability, so Newton stalls with the iterate's near-wall
/// velocities already driven negative.
fn stall_diagnosis(station: usize, x: f64, residual: f64, iterate_shear: f64) -> PrandtlError {
    if iterate_shear <= 0.0 {
        PrandtlError::Separation {
            station,
            x,
            wall_shear: iterate_shear,
        }
    } else {
        PrandtlError::NewtonStalled {
            station,
            x,
            residual,
        }
    }
}

/// Marches the layer system across the given grid.
///
/// `grid.xs()` are the stations (the first carries the inflow), `grid.ys()`
/// the layer heights. The inflow is resampled onto the layer heights and
/// must satisfy no-slip exactly. Fails with [`PrandtlError::Separation`]
/// when the wall shear reaches zero, including the stalled approach to the
/// shear collapse that the square-root behavior at separation forces.
pub fn solve_prandtl(
    flow: &EulerFlow,
    grid: &Grid,
    inflow: &InflowProfile,
    params: &MarchParams,
) -> Result<PrandtlSolution, PrandtlError> {
    let xs = grid.xs().to_vec();
    let ys = grid.ys().to_vec();
    let (nx, ny) = (xs.len(), ys.len());
    let sten1 = diff_stencils(&ys, 1);
    let sten2 = diff_stencils(&ys, 2);
    let wall_weights = fd_weights(&ys[0..3], 0.0, 1);

    let mut u = Array2::<f64>::zeros((nx, ny));
    let inflow_u = inflow.resample(&ys);
    if inflow_u[0].abs() > 1e-12 {
        return Err(PrandtlError::BadInflow(format!(
            "no-slip violated: u(0) = {:.3e}",
            inflow_u[0]
        )));
    }
    for j in 0..ny {
        u[[0, j]] = inflow_u[j];
    }

    let wall_shear_at = |profile: &[f64]| -> f64 {
        wall_weights
            .iter()
            .zip(profile)
            .map(|(w, v)| w * v)
            .sum::<f64>()
    };

    let mut wall_shear = vec![wall_shear_at(&inflow_u)];
    if wall_shear[0] <= 0.0 {
        return Err(PrandtlError::Separation {
            station: 0,
            x: xs[0],
            wall_shear: wall_shear[0],
        });
    }
    let mut newton_iters = 0;

    for i in 1..nx {
        let dx = xs[i] - xs[i - 1];
        let x_mid = 0.5 * (xs[i] + xs[i - 1]);
        let u0: Vec<f64> = (0..ny).map(|j| u[[i - 1, j]]).collect();
        let op = StationOp {
            ys: &ys,
            sten1: &sten1,
            sten2: &sten2,
            u0: &u0,
            dx,
            px_mid: flow.bernoulli_wall_px(x_mid),
            top_bc: flow.u(xs[i], 0.0),
        };
        let mut u1 = u0.clone();
        u1[ny - 1] = op.top_bc;

        let mut converged = false;
        for _ in 0..params.max_newton {
            let (res, dxu, um, vm, dyum) = op.residual(&u1);
            let res_norm = res.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            if res_norm <= params.tol {
                converged = true;
                break;
            }
            newton_iters += 1;
            let jac = op.jacobian(&dxu, &um, &vm, &dyum);
            let rhs: Vec<f64> = res.iter().map(|&v| -v).collect();
            let delta = {
                let mut jh = jac.clone();
                let mut bh = rhs.clone();
                match solve_lower_hessenberg(&mut jh, &mut bh) {
                    Ok(d) => d,
                    Err(_) => dense_solve(jac, rhs).map_err(|_| PrandtlError::NewtonStalled {
                        station: i,
                        x: xs[i],
                        residual: res_norm,
                    })?,
                }
            };
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..=params.max_halvings {
                let cand: Vec<f64> =
                    u1.iter().zip(&delta).map(|(v, d)| v + lambda * d).collect();
                let cand_norm = op
                    .residual(&cand)
                    .0
                    .iter()
                    .fold(0.0_f64, |m, &v| m.max(v.abs()));
                if cand_norm <= (1.0 - 0.25 * lambda) * res_norm || cand_norm <= params.tol {
                    u1 = cand;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(stall_diagnosis(i, xs[i], res_norm, wall_shear_at(&u1)));
            }
        }
        if !converged {
            let (res, ..) = op.residual(&u1);
            let res_norm = res.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            if res_norm > params.tol {
                return Err(stall_diagnosis(i, xs[i], res_norm, wall_shear_at(&u1)));
            }
        }

        let shear = wall_shear_at(&u1);
        if shear <= 0.0 {
            return Err(PrandtlError::Separation {
                station: i,
                x: xs[i],
                wall_shear: shear,
            });
        }
        wall_shear.push(shear);
        for j in 0..ny {
            u[[i, j]] = u1[j];
        }
    }

    let ux = diff(grid, &u, Axis::X, 1);
    let v = -cumtrapz2d(grid, &ux, Axis::Y);
    let ue_wall = xs.iter().map(|&x| flow.u(x, 0.0)).collect();
    let p0px = xs.iter().map(|&x| flow.bernoulli_wall_px(x)).collect();
    Ok(PrandtlSolution {
        grid: grid.clone(),
        u,
        v,
        wall_shear,
        ue_wall,
        p0px,
        newton_iters,
    })
}

// ---------------------------------------------------------------------------
// Structural checks and serialization
// ---------------------------------------------------------------------------

/// Structural facts of a layer profile: positivity off the wall, monotone
/// growth in a wall band, and confinement below the edge velocity.
#[derive(Debug, Clone, Copy)]
pub struct OleinikReport {
    /// Minimum of `u` over all off-wall nodes.
    pub min_off_wall_u: f64,
    /// Minimum wall shear across stations.
    pub wall_shear_min: f64,
    /// Minimum of `∂_y u` over the band `y ≤ 1` (the monotonicity modulus).
    pub band_shear_min: f64,
    /// Largest profile value.
    pub sup_u: f64,
    /// `sup u / max ue`: a confined profile keeps this at 1 (attained at
    /// the top boundary) up to discretization.
    pub sup_ratio: f64,
    /// Positivity and band monotonicity both hold.
    pub ok: bool,
}

/// Measures the structural facts on a march solution.
pub fn check_oleinik(sol: &PrandtlSolution) -> OleinikReport {
    let (nx, ny) = sol.u.dim();
    let mut min_off_wall = f64::INFINITY;
    let mut sup_u = 0.0_f64;
    for i in 0..nx {
        for j in 0..ny {
            sup_u = sup_u.max(sol.u[[i, j]]);
            if j >= 1 {
                min_off_wall = min_off_wall.min(sol.u[[i, j]]);
            }
        }
    }
    let uy = diff(&sol.grid, &sol.u, Axis::Y, 1);
    let mut band_shear_min = f64::INFINITY;
    for (j, &y) in sol.grid.ys().iter().enumerate() {
        if y > 1.0 {
            break;
        }
        for i in 0..nx {
            band_shear_min = band_shear_min.min(uy[[i, j]]);
        }
    }
    let wall_shear_min = sol.wall_shear.iter().cloned().fold(f64::INFINITY, f64::min);
    let ue_max = sol.ue_wall.iter().cloned().fold(0.0_f64, f64::max);
    OleinikReport {
        min_off_wall_u: min_off_wall,
        wall_shear_min,
        band_shear_min,
        sup_u,
        sup_ratio: sup_u / ue_max,
        ok: min_off_wall > 0.0 && band_shear_min > 0.0,
    }
}

impl PrandtlSolution {
    /// Serializes the march state as a text table that round-trips
    /// bit-exactly. The vertical velocity and the wall shear are recomputed
    /// on load with the shared operators (bitwise identical to the fresh
    /// solve), while the edge speed is stored: it is analytic data of the
    /// base flow, and the top table row differs from it by the far-field
    /// truncation of the inflow profile.
    pub fn to_text(&self) -> String {
        let mut out = String::from("march-table 2\n");
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.17e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&format!("{} {}\n", self.grid.nx(), self.grid.ny()));
        out.push_str(&join(self.grid.xs()));
        out.push('\n');
        out.push_str(&join(self.grid.ys()));
        out.push('\n');
        out.push_str(&join(&self.p0px));
        out.push('\n');
        out.push_str(&join(&self.ue_wall));
        out.push('\n');
        for i in 0..self.grid.nx() {
            let row: Vec<f64> = (0..self.grid.ny()).map(|j| self.u[[i, j]]).collect();
            out.push_str(&join(&row));
            out.push('\n');
        }
        out
    }

    /// Reads a table written by [`Self::to_text`].
    pub fn from_text(text: &str) -> Result<Self, PrandtlError> {
        let bad = |msg: &str| PrandtlError::BadInflow(format!("march table: {msg}"));
        let mut lines = text.lines();
        match lines.next() {
            Some("march-table 2") => {}
            _ => return Err(bad("missing or unsupported header")),
        }
        let parse_row = |line: Option<&str>, what: &str| -> Result<Vec<f64>, PrandtlError> {
            line.ok_or_else(|| bad(&format!("missing {what}")))?
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| bad(&format!("bad number in {what}: {t:?}")))
                })
                .collect()
        };
        let dims = parse_row(lines.next(), "dimensions")?;
        if dims.len() != 2 {
            return Err(bad("dimension line must hold two entries"));
        }
        let (nx, ny) = (dims[0] as usize, dims[1] as usize);
        let xs = parse_row(lines.next(), "stations")?;
        let ys = parse_row(lines.next(), "heights")?;
        let p0px = parse_row(lines.next(), "pressure gradient")?;
        let ue_wall = parse_row(lines.next(), "edge speed")?;
        if xs.len() != nx || ys.len() != ny || p0px.len() != nx || ue_wall.len() != nx {
            return Err(bad("axis lengths disagree with dimensions"));
        }
        let grid = Grid::new(xs, ys)?;
        let mut u = Array2::<f64>::zeros((nx, ny));
        for i in 0..nx {
            let row = parse_row(lines.next(), &format!("station row {i}"))?;
            if row.len() != ny {
                return Err(bad(&format!("station row {i} has {} entries", row.len())));
            }
            for j in 0..ny {
                u[[i, j]] = row[j];
            }
        }
        let ux = diff(&grid, &u, Axis::X, 1);
        let v = -cumtrapz2d(&grid, &ux, Axis::Y);
        let wall_shear = (0..nx)
            .map(|i| {
                let col: Vec<f64> = (0..ny).map(|j| u[[i, j]]).collect();
                diff1d(grid.ys(), &col, 1)[0]
            })
            .collect();
        Ok(PrandtlSolution {
            grid,
            u,
            v,
            wall_shear,
            ue_wall,
            p0px,
            newton_iters: 0,
        })
    }
}
