//! Multi-order boundary-layer expansions of steady incompressible flows.
//!
//! This crate builds, order by order, an approximate solution of the steady
//! Navier–Stokes equations at small viscosity `eps` on the strip
//! `[0, L] × [0, Y_max]`:
//!
//! ```text
//! U_s = u0e + u0b + √eps (u1e + u1b) + eps (u2e + û2b)
//! V_s = v0e + √eps (v0b + v1e) + eps (v1b + v2e) + eps^{3/2} v̂2b
//! P_s = p0e + √eps p1e + eps (p2e + p2b) + eps^{3/2} p3b
//! ```
//!
//! where `e`-fields are inviscid (Euler) profiles on the outer variable `Y`
//! and `b`-fields are boundary-layer profiles evaluated at `y = Y/√eps`.
//! The pieces are produced by a chain of solvers:
//!
//! 1. [`flows`] — a small catalog of exact Euler base flows with analytic
//!    derivatives, plus checks (positivity, residuals, Rayleigh quotient
//!    extraction for the linearized operator).
//! 2. [`prandtl`] — the nonlinear order-zero boundary-layer march (Oleinik
//!    regime: monotone positive profiles), with a Blasius shooting solver
//!    used for inflow data and as an accuracy oracle.
//! 3. [`euler_corr`] — the two linearized Euler correctors, solved as
//!    divergence-form elliptic problems for the stream functions, with
//!    pressure recovery.
//! 4. [`layer_corr`] — the two linearized boundary-layer marches (with the
//!    boundary-data homogenization trick) and the layer pressures.
//! 5. [`compose`] — assembly of the expansion on a layer-aligned grid,
//!    pointwise remainder measurement, and the remainder scaling sweep.
//! 6. [`ns`] — the linearized Navier–Stokes solve for the true remainder
//!    correction in stream-function form (fourth order, clamped), energy
//!    probes for the linear estimates, and the Picard fixed-point loop.
//!
//! [`mesh`] and [`linalg`] supply the shared discrete infrastructure:
//! tensor-product grids, second-order difference operators, quadrature,
//! weighted norms, banded and Hessenberg direct solvers. [`config`] and
//! [`pipeline`] tie everything into reproducible runs.
//!
//! Everything is deterministic: same configuration, same bytes out.

pub mod config;
pub mod compose;
pub mod euler_corr;
pub mod flows;
pub mod layer_corr;
pub mod linalg;
pub mod mesh;
pub mod ns;
pub mod pipeline;
pub mod prandtl;


pub use config::RunConfig;
pub use mesh::{Axis, Grid, ScalarField2D};
pub use pipeline::{run_pipeline, PipelineError, PipelineReport};
