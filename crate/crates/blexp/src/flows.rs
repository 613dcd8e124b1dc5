//! Catalog of exact steady Euler base flows on the strip.
//!
//! Every flow here is an exact solution of the steady incompressible Euler
//! equations with tangential velocity bounded away from zero (the expansion
//! machinery requires `u ≥ c0 > 0`) and no penetration through the wall
//! (`v(x, 0) = 0`). Three families are provided:
//!
//! * [`FlowKind::Shear`] — `u = 1 + beta e^{-Y}`, `v = 0`, constant
//!   pressure. `beta = 0` is the uniform stream `[1, 0]`.
//! * [`FlowKind::Strain`] — `u = 1 + alpha X`, `v = -alpha Y`,
//!   `p = -(1 + alpha X)²/2 - alpha² Y²/2`. Accelerating for `alpha > 0`,
//!   decelerating (adverse pressure gradient) for `alpha < 0`.
//! * [`FlowKind::HarmonicPerturb`] — stream function
//!   `psi = Y + (alpha/k) cos(kX) sinh(kY)`; irrotational, with Bernoulli
//!   pressure. The `sinh` growth means positivity restricts the usable
//!   domain height; [`make_flow`] enforces this.
//!
//! All first and second partial derivatives are analytic closures, so base
//! flow data never contributes differencing error to the solvers. The
//! residual and extraction *operations*, by contrast, deliberately run
//! through the shared discrete operators: they measure what the rest of the
//! pipeline actually sees.
//!
//! For the linearized stream-function operator the coefficient
//! `F' = Δu / u` (constant along streamlines) and its streamline derivative
//! `F'' = ∂_Y F' / u` are exposed both analytically and as an extraction
//! with a constancy diagnostic.

use crate::mesh::{diff, l2_norm, sup_norm, Axis, Grid, ScalarField2D};
use thiserror::Error;

/// Parameter choice selecting a base flow from the catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    /// Parallel shear `u = 1 + beta e^{-Y}`, `v = 0`.
    Shear {
        /// Shear amplitude; `0` gives the uniform stream.
        beta: f64,
    },
    /// Uniform strain `u = 1 + alpha X`, `v = -alpha Y`.
    Strain {
        /// Strain rate; negative values decelerate the flow.
        alpha: f64,
    },
    /// Irrotational harmonic perturbation of the uniform stream with
    /// stream function `Y + (alpha/k) cos(kX) sinh(kY)`.
    HarmonicPerturb {
        /// Perturbation amplitude.
        alpha: f64,
        /// Horizontal wavenumber (must be positive).
        k: f64,
    },
}

impl FlowKind {
    /// Short lowercase tag used in configs and file names.
    pub fn tag(&self) -> &'static str {
        match self {
            FlowKind::Shear { .. } => "shear",
            FlowKind::Strain { .. } => "strain",
            FlowKind::HarmonicPerturb { .. } => "harmonic",
        }
    }
}

/// Errors from flow validation.
#[derive(Debug, Error)]
pub enum FlowError {
    /// The tangential component dips to or below zero on the domain.
    #[error(
        "tangential velocity not positive on [0,{l}]x[0,{y_max}]: min {min:.6} at ({x:.4}, {y:.4})"
    )]
    NotPositive {
        /// Observed minimum.
        min: f64,
        /// Location of the minimum.
        x: f64,
        /// Location of the minimum.
        y: f64,
        /// Domain length.
        l: f64,
        /// Domain height.
        y_max: f64,
    },
    /// A parameter is outside its admissible range.
    #[error("bad flow parameter: {0}")]
    BadParameter(String),
}

/// A validated base flow on a fixed rectangle, with analytic derivatives.
#[derive(Debug, Clone, Copy)]
pub struct EulerFlow {
    kind: FlowKind,
    l: f64,
    y_max: f64,
    c0: f64,
}

/// Validates a catalog flow on `[0, l] × [0, y_max]`.
///
/// Checks positivity of the tangential component on a fine sample lattice
/// (the catalog flows are monotone enough for sampling to be conclusive)
/// and that the wall is a streamline.
pub fn make_flow(kind: FlowKind, l: f64, y_max: f64) -> Result<EulerFlow, FlowError> {
    if !(l > 0.0) || !(y_max > 0.0) {
        return Err(FlowError::BadParameter(format!(
            "domain must have positive extent, got l={l}, y_max={y_max}"
        )));
    }
    if let FlowKind::HarmonicPerturb { k, .. } = kind {
        if !(k > 0.0) {
            return Err(FlowError::BadParameter(format!(
                "harmonic wavenumber must be positive, got {k}"
            )));
        }
    }
    let flow = EulerFlow {
        kind,
        l,
        y_max,
        c0: f64::NAN,
    };
    let n = 201;
    let mut min = f64::INFINITY;
    let mut arg = (0.0, 0.0);
    for i in 0..n {
        let x = l * i as f64 / (n - 1) as f64;
        debug_assert!(flow.v(x, 0.0).abs() < 1e-12, "wall must be a streamline");
        for j in 0..n {
            let y = y_max * j as f64 / (n - 1) as f64;
            let u = flow.u(x, y);
            if u < min {
                min = u;
                arg = (x, y);
            }
        }
    }
    if !(min > 0.0) {
        return Err(FlowError::NotPositive {
            min,
            x: arg.0,
            y: arg.1,
            l,
            y_max,
        });
    }
    Ok(EulerFlow { kind, l, y_max, c0: min })
}

impl EulerFlow {
    /// The catalog entry this flow was built from.
    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    /// Validated positive lower bound of the tangential component.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Domain length the flow was validated on.
    pub fn l(&self) -> f64 {
        self.l
    }

    /// Domain height the flow was validated on.
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    /// Tangential velocity `u(x, y)`.
    pub fn u(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { beta } => 1.0 + beta * (-y).exp(),
            FlowKind::Strain { alpha } => 1.0 + alpha * x,
            FlowKind::HarmonicPerturb { alpha, k } => {
                1.0 + alpha * (k * x).cos() * (k * y).cosh()
            }
        }
    }

    /// Normal velocity `v(x, y)`.
    pub fn v(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } => 0.0,
            FlowKind::Strain { alpha } => -alpha * y,
            FlowKind::HarmonicPerturb { alpha, k } => alpha * (k * x).sin() * (k * y).sinh(),
        }
    }

    /// Pressure `p(x, y)` (normalized so moderate values appear near the
    /// inflow corner).
    pub fn p(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } => 0.0,
            FlowKind::Strain { alpha } => {
                let ue = 1.0 + alpha * x;
                -0.5 * ue * ue - 0.5 * alpha * alpha * y * y
            }
            FlowKind::HarmonicPerturb { .. } => {
                // Bernoulli: p + |u|²/2 constant for irrotational flow.
                let u = self.u(x, y);
                let v = self.v(x, y);
                0.5 * (1.0 - u * u - v * v)
            }
        }
    }

    /// `∂_x u`.
    pub fn ux(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } => 0.0,
            FlowKind::Strain { alpha } => alpha,
            FlowKind::HarmonicPerturb { alpha, k } => {
                -alpha * k * (k * x).sin() * (k * y).cosh()
            }
        }
    }

    /// `∂_y u`.
    pub fn uy(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { beta } => -beta * (-y).exp(),
            FlowKind::Strain { .. } => 0.0,
            FlowKind::HarmonicPerturb { alpha, k } => {
                alpha * k * (k * x).cos() * (k * y).sinh()
            }
        }
    }

    /// `∂_x∂_y u`.
    pub fn uxy(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } | FlowKind::Strain { .. } => 0.0,
            FlowKind::HarmonicPerturb { alpha, k } => {
                -alpha * k * k * (k * x).sin() * (k * y).sinh()
            }
        }
    }

    /// `∂_yy u`.
    pub fn uyy(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { beta } => beta * (-y).exp(),
            FlowKind::Strain { .. } => 0.0,
            FlowKind::HarmonicPerturb { alpha, k } => {
                alpha * k * k * (k * x).cos() * (k * y).cosh()
            }
        }
    }

    /// `∂_x v`.
    pub fn vx(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } => 0.0,
            FlowKind::Strain { .. } => 0.0,
            FlowKind::HarmonicPerturb { alpha, k } => {
                alpha * k * (k * x).cos() * (k * y).sinh()
            }
        }
    }

    /// `∂_y v`.
    pub fn vy(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } => 0.0,
            FlowKind::Strain { alpha } => -alpha,
            FlowKind::HarmonicPerturb { alpha, k } => {
                alpha * k * (k * x).sin() * (k * y).cosh()
            }
        }
    }

    /// `∂_yy v`.
    pub fn vyy(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } | FlowKind::Strain { .. } => 0.0,
            FlowKind::HarmonicPerturb { alpha, k } => {
                alpha * k * k * (k * x).sin() * (k * y).sinh()
            }
        }
    }

    /// `∂_yyy v`.
    pub fn vyyy(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } | FlowKind::Strain { .. } => 0.0,
            FlowKind::HarmonicPerturb { alpha, k } => {
                alpha * k * k * k * (k * x).sin() * (k * y).cosh()
            }
        }
    }

    /// `Δu` (vanishes for the irrotational members).
    pub fn lap_u(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { beta } => beta * (-y).exp(),
            FlowKind::Strain { .. } => 0.0,
            FlowKind::HarmonicPerturb { .. } => {
                let _ = (x, y);
                0.0
            }
        }
    }

    /// `Δv`.
    pub fn lap_v(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    /// `∂_x p`.
    pub fn px(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } => 0.0,
            FlowKind::Strain { alpha } => -alpha * (1.0 + alpha * x),
            FlowKind::HarmonicPerturb { .. } => {
                -(self.u(x, y) * self.ux(x, y) + self.v(x, y) * self.vx(x, y))
            }
        }
    }

    /// `∂_y p`.
    pub fn py(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { .. } => 0.0,
            FlowKind::Strain { alpha } => -alpha * alpha * y,
            FlowKind::HarmonicPerturb { .. } => {
                -(self.u(x, y) * self.uy(x, y) + self.v(x, y) * self.vy(x, y))
            }
        }
    }

    /// Wall pressure gradient from Bernoulli: `-u(x,0) ∂_x u(x,0)`. This is
    /// the forcing the boundary-layer equations inherit from the base flow.
    pub fn bernoulli_wall_px(&self, x: f64) -> f64 {
        -self.u(x, 0.0) * self.ux(x, 0.0)
    }

    /// Laplacian of the stream function (negative vorticity).
    pub fn lap_stream(&self, _x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { beta } => -beta * (-y).exp(),
            FlowKind::Strain { .. } | FlowKind::HarmonicPerturb { .. } => 0.0,
        }
    }

    /// Bilaplacian of the stream function; drives the second-corrector
    /// forcing for rotational base flows.
    pub fn bilap_stream(&self, _x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { beta } => -beta * (-y).exp(),
            FlowKind::Strain { .. } | FlowKind::HarmonicPerturb { .. } => 0.0,
        }
    }

    /// Rayleigh quotient `F' = Δu / u`, constant along streamlines.
    pub fn feprime(&self, x: f64, y: f64) -> f64 {
        self.lap_u(x, y) / self.u(x, y)
    }

    /// Streamline derivative `F'' = ∂_Y F' / u`.
    pub fn fesecond(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            FlowKind::Shear { beta } => {
                let u = 1.0 + beta * (-y).exp();
                let _ = x;
                -beta * (-y).exp() / (u * u * u)
            }
            FlowKind::Strain { .. } | FlowKind::HarmonicPerturb { .. } => 0.0,
        }
    }
}

/// Fields produced by [`extract_feprime`].
#[derive(Debug, Clone)]
pub struct FeprimeExtract {
    /// `F' = Δu/u` at the grid nodes.
    pub feprime: ScalarField2D,
    /// `F'' = ∂_Y F' / u` at the grid nodes.
    pub fesecond: ScalarField2D,
    /// `sup |∂_x F'|`: for the catalog flows streamlines never cross the
    /// vertical, so streamline constancy shows up as streamwise constancy.
    pub streamwise_variation: f64,
}

/// Extracts the linearized-operator coefficients on a grid and measures how
/// well `F'` is constant along streamlines.
pub fn extract_feprime(flow: &EulerFlow, grid: &Grid) -> FeprimeExtract {
    let feprime = grid.field_from_fn(|x, y| flow.feprime(x, y));
    let fesecond = grid.field_from_fn(|x, y| flow.fesecond(x, y));
    let fx = diff(grid, &feprime, Axis::X, 1);
    FeprimeExtract {
        feprime,
        fesecond,
        streamwise_variation: sup_norm(&fx),
    }
}

/// Discrete steady Euler residuals of a base flow.
#[derive(Debug, Clone)]
pub struct EulerResidual {
    /// First momentum residual `u u_x + v u_y + p_x` under the shared
    /// difference operators.
    pub r1: ScalarField2D,
    /// Second momentum residual `u v_x + v v_y + p_y`.
    pub r2: ScalarField2D,
    /// Discrete divergence `u_x + v_y`.
    pub div: ScalarField2D,
}

impl EulerResidual {
    /// Largest of the three residual sup norms.
    pub fn sup(&self) -> f64 {
        sup_norm(&self.r1).max(sup_norm(&self.r2)).max(sup_norm(&self.div))
    }

    /// `L²` norms `(r1, r2, div)`.
    pub fn l2(&self, grid: &Grid) -> (f64, f64, f64) {
        (
            l2_norm(grid, &self.r1),
            l2_norm(grid, &self.r2),
            l2_norm(grid, &self.div),
        )
    }
}

/// Evaluates the steady Euler residual of the base flow with the shared
/// discrete operators (this measures the differencing error the composed
/// expansion inherits from the base flow; it is exactly zero for the
/// polynomial-in-each-variable catalog members).
pub fn euler_residual(flow: &EulerFlow, grid: &Grid) -> EulerResidual {
    let u = grid.field_from_fn(|x, y| flow.u(x, y));
    let v = grid.field_from_fn(|x, y| flow.v(x, y));
    let p = grid.field_from_fn(|x, y| flow.p(x, y));
    let ux = diff(grid, &u, Axis::X, 1);
    let uy = diff(grid, &u, Axis::Y, 1);
    let vx = diff(grid, &v, Axis::X, 1);
    let vy = diff(grid, &v, Axis::Y, 1);
    let px = diff(grid, &p, Axis::X, 1);
    let py = diff(grid, &p, Axis::Y, 1);
    EulerResidual {
        r1: &(&u * &ux) + &(&v * &uy) + &px,
        r2: &(&u * &vx) + &(&v * &vy) + &py,
        div: &ux + &vy,
    }
}
