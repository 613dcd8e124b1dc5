//! Tensor-product grids, difference operators, quadrature and norms.
//!
//! Every solver in this crate works on a [`Grid`]: a tensor product of a
//! horizontal node set `x[0..nx]` on `[0, L]` and a vertical node set
//! `y[0..ny]` on `[0, y_max]`. Fields are stored row-major with index
//! `[i][j]` ↔ `(x_i, y_j)`.
//!
//! Differencing is second-order: 3-point centered stencils in the interior
//! (generated for arbitrary node spacing), 3-point one-sided stencils for
//! first derivatives at the ends and 4-point one-sided stencils for second
//! derivatives, so the boundary rows match the interior order. The weights
//! come from Fornberg's recurrence, which is also used directly by the
//! fourth-order solver for its 5-point stencils.
//!
//! Quadrature is the trapezoid rule; it pairs with the differencing order
//! and keeps cumulative integrals (`cumtrapz`) consistent with `trapz`.
//!
//! Three special grid builders matter for the expansion work:
//! * [`Grid::uniform`] — plain uniform spacing in both directions.
//! * [`Grid::wall_clustered`] — tanh-stretched vertical nodes, calibrated so
//!   at least half of them sit below `4√eps_min`.
//! * [`Grid::layer_aligned`] — vertical nodes that are *exactly* the scaled
//!   image `√eps · y_j` of a boundary-layer march grid, continued by a
//!   geometric tail. Three-point stencils are scale-covariant, so derivative
//!   identities established on the march grid transfer to this grid without
//!   interpolation error; the composed remainder measurement depends on it.

use ndarray::Array2;
use thiserror::Error;

/// Values on a [`Grid`], row-major `[i][j]` with `i` ↔ x and `j` ↔ y.
pub type ScalarField2D = Array2<f64>;

/// Direction selector for difference operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Horizontal (streamwise) direction, index `i`.
    X,
    /// Vertical (wall-normal) direction, index `j`.
    Y,
}

/// Errors from grid construction and norm evaluation.
#[derive(Debug, Error)]
pub enum MeshError {
    /// Fewer than the minimum supported nodes in one direction.
    #[error("grid too coarse: {axis:?} has {n} nodes, need at least {min}")]
    TooCoarse {
        /// Direction that failed the check.
        axis: Axis,
        /// Number of nodes supplied.
        n: usize,
        /// Minimum required.
        min: usize,
    },
    /// Node coordinates must be finite and strictly increasing from zero.
    #[error("grid nodes invalid: {0}")]
    BadNodes(String),
    /// Domain parameters (lengths, ratios) out of range.
    #[error("bad domain parameter: {0}")]
    BadDomain(String),
    /// A quotient norm was requested against a profile that vanishes away
    /// from the wall.
    #[error("quotient norm undefined: profile vanishes at interior node ({i}, {j})")]
    DegenerateProfile {
        /// Horizontal index of the offending node.
        i: usize,
        /// Vertical index of the offending node.
        j: usize,
    },
}

/// Minimum node count per direction for the stencils used here.
pub const MIN_NODES: usize = 8;

/// Tensor-product grid on `[0, L] × [0, y_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Grid {
    /// Builds a grid from explicit node vectors.
    ///
    /// Both vectors must start at `0`, be strictly increasing, finite, and
    /// hold at least [`MIN_NODES`] entries.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, MeshError> {
        check_nodes(&x, Axis::X)?;
        check_nodes(&y, Axis::Y)?;
        Ok(Self { x, y })
    }

    /// Uniformly spaced nodes in both directions.
    pub fn uniform(l: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self, MeshError> {
        if !(l > 0.0) || !(y_max > 0.0) {
            return Err(MeshError::BadDomain(format!(
                "domain lengths must be positive, got L={l}, y_max={y_max}"
            )));
        }
        Self::new(linspace(0.0, l, nx), linspace(0.0, y_max, ny))
    }

    /// Uniform horizontal nodes with tanh-stretched vertical nodes.
    ///
    /// The stretching parameter is calibrated by bisection so that at least
    /// half of the vertical nodes lie in the band `y ≤ 4√eps_min`, i.e. the
    /// thinnest boundary layer the grid is expected to resolve stays covered
    /// by half the vertical budget.
    pub fn wall_clustered(
        l: f64,
        y_max: f64,
        nx: usize,
        ny: usize,
        eps_min: f64,
    ) -> Result<Self, MeshError> {
        if !(l > 0.0) || !(y_max > 0.0) {
            return Err(MeshError::BadDomain(format!(
                "domain lengths must be positive, got L={l}, y_max={y_max}"
            )));
        }
        if !(eps_min > 0.0) {
            return Err(MeshError::BadDomain(format!(
                "eps_min must be positive, got {eps_min}"
            )));
        }
        let band = 4.0 * eps_min.sqrt();
        if band >= y_max {
            // The band covers the whole domain; uniform spacing already
            // satisfies the clustering requirement.
            return Self::uniform(l, y_max, nx, ny);
        }
        // Count with the same comparison `nodes_below` uses, so the
        // calibrated grid verifiably meets its own quota.
        let nodes_in_band = |beta: f64| -> usize {
            tanh_nodes(y_max, ny, beta)
                .iter()
                .filter(|&&v| v <= band + 1e-14)
                .count()
        };
        let need = ny.div_ceil(2);
        // Clustering strengthens monotonically with beta; find the smallest
        // beta that places `need` nodes in the band.
        let mut lo = 0.0_f64; // uniform limit
        let mut hi = 1.0_f64;
        let mut tries = 0;
        while nodes_in_band(hi) < need {
            hi *= 2.0;
            tries += 1;
            if tries > 60 {
                return Err(MeshError::BadDomain(format!(
                    "cannot cluster {ny} nodes into band {band} on y_max={y_max}"
                )));
            }
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if nodes_in_band(mid) >= need {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // The bisection can converge onto a beta where the last counted node
        // sits exactly on the band edge; push past any rounding ambiguity.
        let mut beta = hi;
        while nodes_in_band(beta) < need {
            beta *= 1.0 + 1e-6;
        }
        Self::new(linspace(0.0, l, nx), tanh_nodes(y_max, ny, beta))
    }

    /// Vertical nodes aligned with a scaled boundary-layer grid.
    ///
    /// The first `march_y.len()` vertical nodes are exactly `√eps · y_j`;
    /// past the scaled layer region the spacing grows geometrically (ratio
    /// close to `growth`) until the last node lands exactly on `y_max`.
    /// Returns the grid and the number of aligned nodes.
    pub fn layer_aligned(
        l: f64,
        nx: usize,
        y_max: f64,
        eps: f64,
        march_y: &[f64],
        growth: f64,
    ) -> Result<(Self, usize), MeshError> {
        if !(eps > 0.0) {
            return Err(MeshError::BadDomain(format!("eps must be positive, got {eps}")));
        }
        if !(growth > 1.0) || !(growth < 2.0) {
            return Err(MeshError::BadDomain(format!(
                "tail growth ratio must lie in (1, 2), got {growth}"
            )));
        }
        check_nodes(march_y, Axis::Y)?;
        let sq = eps.sqrt();
        let layer_top = sq * march_y[march_y.len() - 1];
        if layer_top >= 0.75 * y_max {
            return Err(MeshError::BadDomain(format!(
                "scaled layer top {layer_top:.4} too close to y_max {y_max}; \
                 shrink eps or the march domain"
            )));
        }
        let mut y: Vec<f64> = march_y.iter().map(|&v| sq * v).collect();
        let h0 = y[y.len() - 1] - y[y.len() - 2];
        let dist = y_max - layer_top;
        // Minimal number of geometrically growing steps at the target ratio.
        let n_tail = ((1.0 + dist * (growth - 1.0) / (h0 * growth)).ln() / growth.ln())
            .ceil()
            .max(2.0) as usize;
        // Re-solve the ratio for that integer count so the tail lands on
        // y_max exactly: sum_{k=1..n} h0 r^k = dist.
        let sum = |r: f64| -> f64 {
            if (r - 1.0).abs() < 1e-12 {
                h0 * n_tail as f64
            } else {
                h0 * r * (r.powi(n_tail as i32) - 1.0) / (r - 1.0)
            }
        };
        let (mut lo, mut hi) = (1.0 + 1e-9, growth * 1.5);
        if sum(lo) > dist {
            return Err(MeshError::BadDomain(format!(
                "tail of {n_tail} steps overshoots y_max even at unit ratio"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum(mid) < dist {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let mut h = h0;
        let mut pos = layer_top;
        for k in 0..n_tail {
            h *= r;
            pos += h;
            // Force the last node onto y_max exactly; the bisection leaves
            // only a rounding-level gap.
            y.push(if k + 1 == n_tail { y_max } else { pos });
        }
        let aligned = march_y.len();
        Ok((Self::new(linspace(0.0, l, nx), y)?, aligned))
    }

    /// Horizontal nodes.
    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    /// Vertical nodes.
    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    /// Number of horizontal nodes.
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    /// Number of vertical nodes.
    pub fn ny(&self) -> usize {
        self.y.len()
    }

    /// Horizontal extent `L`.
    pub fn lx(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Vertical extent.
    pub fn y_max(&self) -> f64 {
        self.y[self.y.len() - 1]
    }

    /// Builds a field by evaluating `f(x, y)` at every node.
    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField2D {
        let mut out = Array2::zeros((self.nx(), self.ny()));
        for (i, &x) in self.x.iter().enumerate() {
            for (j, &y) in self.y.iter().enumerate() {
                out[[i, j]] = f(x, y);
            }
        }
        out
    }

    /// All-zero field with this grid's shape.
    pub fn zero_field(&self) -> ScalarField2D {
        Array2::zeros((self.nx(), self.ny()))
    }

    /// Counts vertical nodes at or below the given height.
    pub fn nodes_below(&self, height: f64) -> usize {
        self.y.iter().filter(|&&v| v <= height + 1e-14).count()
    }
}

fn check_nodes(v: &[f64], axis: Axis) -> Result<(), MeshError> {
    if v.len() < MIN_NODES {
        return Err(MeshError::TooCoarse {
            axis,
            n: v.len(),
            min: MIN_NODES,
        });
    }
    if !v.iter().all(|t| t.is_finite()) {
        return Err(MeshError::BadNodes(format!("{axis:?} nodes contain non-finite values")));
    }
    if v[0].abs() > 1e-14 {
        return Err(MeshError::BadNodes(format!(
            "{axis:?} nodes must start at 0, got {}",
            v[0]
        )));
    }
    if !v.windows(2).all(|w| w[1] > w[0]) {
        return Err(MeshError::BadNodes(format!(
            "{axis:?} nodes must be strictly increasing"
        )));
    }
    Ok(())
}

/// Evenly spaced nodes including both endpoints.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|k| a + h * k as f64).collect();
    v[n - 1] = b;
    v
}

fn tanh_nodes(y_max: f64, ny: usize, beta: f64) -> Vec<f64> {
    if beta < 1e-12 {
        return linspace(0.0, y_max, ny);
    }
    let t = beta.tanh();
    let mut v: Vec<f64> = (0..ny)
        .map(|j| {
            let xi = j as f64 / (ny - 1) as f64;
            y_max * (1.0 - (beta * (1.0 - xi)).tanh() / t)
        })
        .collect();
    v[0] = 0.0;
    v[ny - 1] = y_max;
    v
}

// ---------------------------------------------------------------------------
// Difference operators
// ---------------------------------------------------------------------------

/// Finite-difference weights on arbitrary nodes (Fornberg's recurrence).
///
/// Returns the weights `w` such that `sum_k w[k] f(nodes[k])` approximates the
/// `m`-th derivative of `f` at `x0`, exact for polynomials of degree
/// `nodes.len() - 1`.
///
/// # Panics
/// Panics if fewer than `m + 1` nodes are supplied.
pub fn fd_weights(nodes: &[f64], x0: f64, m: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(n > m, "need at least m+1 nodes for an m-th derivative");
    let mut c = vec![vec![0.0_f64; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Per-node stencil table for a derivative along one node vector.
///
/// Entry `i` holds `(start, weights)`: the derivative at node `i` is
/// `sum_k weights[k] * f[start + k]`. Interior nodes get 3-point centered
/// stencils; boundary nodes get one-sided stencils of matching (second)
/// order — 3 points for first derivatives, 4 points for second derivatives.
pub fn diff_stencils(nodes: &[f64], order: usize) -> Vec<(usize, Vec<f64>)> {
    assert!(order == 1 || order == 2, "only first and second derivatives");
    let n = nodes.len();
    let edge = if order == 1 { 3 } else { 4 };
    (0..n)
        .map(|i| {
            let (start, len) = if i == 0 {
                (0, edge)
            } else if i == n - 1 {
                (n - edge, edge)
            } else {
                (i - 1, 3)
            };
            (start, fd_weights(&nodes[start..start + len], nodes[i], order))
        })
        .collect()
}

/// Derivative of 1-D samples along their node vector.
pub fn diff1d(nodes: &[f64], values: &[f64], order: usize) -> Vec<f64> {
    assert_eq!(nodes.len(), values.len(), "nodes/values length mismatch");
    diff_stencils(nodes, order)
        .iter()
        .map(|(start, w)| w.iter().enumerate().map(|(k, &wk)| wk * values[start + k]).sum())
        .collect()
}

/// Field derivative along one axis (second-order everywhere, see
/// [`diff_stencils`] for the boundary treatment).
///
/// # Panics
/// Panics if the field shape does not match the grid.
pub fn diff(grid: &Grid, f: &ScalarField2D, axis: Axis, order: usize) -> ScalarField2D {
    assert_eq!(
        f.shape(),
        [grid.nx(), grid.ny()],
        "field shape does not match grid"
    );
    let mut out = Array2::zeros(f.raw_dim());
    match axis {
        Axis::X => {
            let st = diff_stencils(grid.xs(), order);
            for i in 0..grid.nx() {
                let (start, w) = &st[i];
                for j in 0..grid.ny() {
                    let mut acc = 0.0;
                    for (k, &wk) in w.iter().enumerate() {
                        acc += wk * f[[start + k, j]];
                    }
                    out[[i, j]] = acc;
                }
            }
        }
        Axis::Y => {
            let st = diff_stencils(grid.ys(), order);
            for j in 0..grid.ny() {
                let (start, w) = &st[j];
                for i in 0..grid.nx() {
                    let mut acc = 0.0;
                    for (k, &wk) in w.iter().enumerate() {
                        acc += wk * f[[i, start + k]];
                    }
                    out[[i, j]] = acc;
                }
            }
        }
    }
    out
}

/// Five-point Laplacian built from the shared second-derivative stencils.
pub fn laplacian(grid: &Grid, f: &ScalarField2D) -> ScalarField2D {
    diff(grid, f, Axis::X, 2) + diff(grid, f, Axis::Y, 2)
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Trapezoid-rule weights for a node vector.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let h = 0.5 * (nodes[k + 1] - nodes[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

/// Trapezoid integral of 1-D samples.
pub fn trapz(nodes: &[f64], values: &[f64]) -> f64 {
    assert_eq!(nodes.len(), values.len());
    trapezoid_weights(nodes)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

/// Running trapezoid integral from the first node: `out[k] = ∫_{t_0}^{t_k}`.
pub fn cumtrapz(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    assert_eq!(nodes.len(), values.len());
    let mut out = vec![0.0; nodes.len()];
    for k in 1..nodes.len() {
        out[k] = out[k - 1] + 0.5 * (nodes[k] - nodes[k - 1]) * (values[k] + values[k - 1]);
    }
    out
}

/// Running trapezoid integral of a field along one axis, from the first
/// node of that axis: `out[i, j] = ∫_0^{x_i}` for [`Axis::X`],
/// `∫_0^{y_j}` for [`Axis::Y`].
pub fn cumtrapz2d(grid: &Grid, f: &ScalarField2D, axis: Axis) -> ScalarField2D {
    assert_eq!(f.dim(), (grid.nx(), grid.ny()), "field/grid shape mismatch");
    let mut out = grid.zero_field();
    match axis {
        Axis::X => {
            let xs = grid.xs();
            for j in 0..grid.ny() {
                for i in 1..grid.nx() {
                    out[[i, j]] = out[[i - 1, j]]
                        + 0.5 * (xs[i] - xs[i - 1]) * (f[[i, j]] + f[[i - 1, j]]);
                }
            }
        }
        Axis::Y => {
            let ys = grid.ys();
            for i in 0..grid.nx() {
                for j in 1..grid.ny() {
                    out[[i, j]] = out[[i, j - 1]]
                        + 0.5 * (ys[j] - ys[j - 1]) * (f[[i, j]] + f[[i, j - 1]]);
                }
            }
        }
    }
    out
}

/// Trapezoid integral of a field over the whole domain.
pub fn integrate(grid: &Grid, f: &ScalarField2D) -> f64 {
    let wx = trapezoid_weights(grid.xs());
    let wy = trapezoid_weights(grid.ys());
    let mut acc = 0.0;
    for i in 0..grid.nx() {
        for j in 0..grid.ny() {
            acc += wx[i] * wy[j] * f[[i, j]];
        }
    }
    acc
}

/// `L²` norm of a field over the domain.
pub fn l2_norm(grid: &Grid, f: &ScalarField2D) -> f64 {
    let sq = f.mapv(|v| v * v);
    integrate(grid, &sq).max(0.0).sqrt()
}

/// Supremum norm (max of `|f|` over the nodes).
pub fn sup_norm(f: &ScalarField2D) -> f64 {
    f.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

// ---------------------------------------------------------------------------
// Weighted and structured norms
// ---------------------------------------------------------------------------

/// Spatial weight used inside the probe estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormWeight {
    /// Unweighted.
    One,
    /// `L − x`: vanishes at the outflow end.
    DistanceToOutflow,
    /// `x (L − x)`: vanishes at both ends.
    EndpointBubble,
    /// Smooth cutoff `χ(y / delta)`: supported in a wall band of width
    /// `2 delta`.
    WallBand {
        /// Band scale.
        delta: f64,
    },
}

/// Selects the weight for [`weighted_l2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNormConfig {
    /// The weight function.
    pub weight: NormWeight,
}

impl Default for WeightedNormConfig {
    fn default() -> Self {
        Self {
            weight: NormWeight::One,
        }
    }
}

/// Evaluates the configured weight at every node.
pub fn weight_field(grid: &Grid, cfg: &WeightedNormConfig) -> ScalarField2D {
    let l = grid.lx();
    match cfg.weight {
        NormWeight::One => grid.field_from_fn(|_, _| 1.0),
        NormWeight::DistanceToOutflow => grid.field_from_fn(|x, _| l - x),
        NormWeight::EndpointBubble => grid.field_from_fn(|x, _| x * (l - x)),
        NormWeight::WallBand { delta } => grid.field_from_fn(|_, y| chi(y / delta)),
    }
}

/// Weighted `L²` norm `(∫ w f²)^{1/2}` with the configured weight.
pub fn weighted_l2(grid: &Grid, f: &ScalarField2D, cfg: &WeightedNormConfig) -> f64 {
    let w = weight_field(grid, cfg);
    let sq = &w * &f.mapv(|v| v * v);
    integrate(grid, &sq).max(0.0).sqrt()
}

/// The two energy norms of a quotient `G = phi / profile`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuotientNorms {
    /// First-order part: `(‖profile·G_x‖² + ‖profile·G_y‖²)^{1/2}`.
    pub x_norm: f64,
    /// Second-order part:
    /// `(eps(‖√profile·G_xx‖² + 2‖√profile·G_xy‖² + ‖√profile·G_yy‖²))^{1/2}`.
    pub y_norm: f64,
}

/// Energy norms of `G = phi / profile` for a profile that vanishes linearly
/// at the wall (row `j = 0`) and is positive elsewhere.
///
/// `phi` must vanish to second order at the wall (clamped), so the quotient
/// extends continuously by `0` there; the wall row is set accordingly.
pub fn quotient_norms(
    grid: &Grid,
    phi: &ScalarField2D,
    profile: &ScalarField2D,
    eps: f64,
) -> Result<QuotientNorms, MeshError> {
    let mut g = Array2::zeros(phi.raw_dim());
    for i in 0..grid.nx() {
        for j in 0..grid.ny() {
            if j == 0 {
                g[[i, j]] = 0.0;
            } else {
                let us = profile[[i, j]];
                if !(us > 0.0) {
                    return Err(MeshError::DegenerateProfile { i, j });
                }
                g[[i, j]] = phi[[i, j]] / us;
            }
        }
    }
    let gx = diff(grid, &g, Axis::X, 1);
    let gy = diff(grid, &g, Axis::Y, 1);
    let gxx = diff(grid, &gx, Axis::X, 1);
    let gxy = diff(grid, &gx, Axis::Y, 1);
    let gyy = diff(grid, &gy, Axis::Y, 1);
    let wtd = |d: &ScalarField2D, pw: f64| -> f64 {
        // ∫ profile^{2pw} d², with the wall row dropped (the integrand
        // extends by zero there for clamped phi).
        let wx = trapezoid_weights(grid.xs());
        let wy = trapezoid_weights(grid.ys());
        let mut acc = 0.0;
        for i in 0..grid.nx() {
            for j in 1..grid.ny() {
                let us = profile[[i, j]];
                acc += wx[i] * wy[j] * us.powf(2.0 * pw) * d[[i, j]] * d[[i, j]];
            }
        }
        acc.max(0.0)
    };
    let x_norm = (wtd(&gx, 1.0) + wtd(&gy, 1.0)).sqrt();
    let y_norm = (eps * (wtd(&gxx, 0.5) + 2.0 * wtd(&gxy, 0.5) + wtd(&gyy, 0.5))).sqrt();
    Ok(QuotientNorms { x_norm, y_norm })
}

/// Layered velocity norm `‖·‖ + √eps ‖∇·‖ + eps^{3/2} ‖∇²·‖` summed over the
/// supplied components.
pub fn z_norm(grid: &Grid, components: &[&ScalarField2D], eps: f64) -> f64 {
    let mut total = 0.0;
    for f in components {
        let fx = diff(grid, f, Axis::X, 1);
        let fy = diff(grid, f, Axis::Y, 1);
        let fxx = diff(grid, f, Axis::X, 2);
        let fyy = diff(grid, f, Axis::Y, 2);
        let fxy = diff(grid, &fx, Axis::Y, 1);
        let grad = (l2_norm(grid, &fx).powi(2) + l2_norm(grid, &fy).powi(2)).sqrt();
        let hess = (l2_norm(grid, &fxx).powi(2)
            + 2.0 * l2_norm(grid, &fxy).powi(2)
            + l2_norm(grid, &fyy).powi(2))
        .sqrt();
        total += l2_norm(grid, f) + eps.sqrt() * grad + eps.powf(1.5) * hess;
    }
    total
}

/// Pieces of the weighted Hardy-type inequality on a single vertical line:
/// `‖H‖² ≤ C ξ eps ‖√profile H_y‖² + (C/ξ²) ‖profile H‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardyProbe {
    /// `‖H‖²` (unweighted left side).
    pub lhs_sq: f64,
    /// `‖√profile · H_y‖²` (raw, before the `ξ eps` factor).
    pub grad_sq: f64,
    /// `‖profile · H‖²` (raw, before the `ξ^{-2}` factor).
    pub bulk_sq: f64,
    /// Interpolation parameter `ξ` used for the fit.
    pub xi: f64,
    /// Viscosity used for the fit.
    pub eps: f64,
}

impl HardyProbe {
    /// Smallest constant `C` for which the inequality holds on this profile.
    pub fn fitted_constant(&self) -> f64 {
        let denom = self.xi * self.eps * self.grad_sq + self.bulk_sq / (self.xi * self.xi);
        self.lhs_sq / denom
    }
}

/// Evaluates the Hardy-inequality pieces for samples `h` of a function on the
/// vertical nodes `ys`, against a positive profile (e.g. a composed
/// tangential velocity column).
pub fn hardy_probe(ys: &[f64], h: &[f64], profile: &[f64], eps: f64, xi: f64) -> HardyProbe {
    assert_eq!(ys.len(), h.len());
    assert_eq!(ys.len(), profile.len());
    let hy = diff1d(ys, h, 1);
    let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|t| t * t).collect() };
    let lhs_sq = trapz(ys, &sq(h));
    let grad_w: Vec<f64> = hy
        .iter()
        .zip(profile)
        .map(|(d, us)| us.max(0.0) * d * d)
        .collect();
    let grad_sq = trapz(ys, &grad_w);
    let bulk_w: Vec<f64> = h
        .iter()
        .zip(profile)
        .map(|(v, us)| us * us * v * v)
        .collect();
    let bulk_sq = trapz(ys, &bulk_w);
    HardyProbe {
        lhs_sq,
        grad_sq,
        bulk_sq,
        xi,
        eps,
    }
}

// ---------------------------------------------------------------------------
// Smooth cutoff
// ---------------------------------------------------------------------------

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// `bump(t) / t²`, computed in log space to avoid 0·∞ at small `t`.
fn bump_over_t2(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t - 2.0 * t.ln()).exp()
    }
}

/// Smooth transition function: `1` for `s ≤ 1`, `0` for `s ≥ 2`, strictly
/// decreasing in between, infinitely differentiable.
pub fn chi(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let a = bump(s - 1.0);
        let b = bump(2.0 - s);
        b / (a + b)
    }
}

/// Derivative of [`chi`]; supported on `(1, 2)` and nonpositive.
pub fn chi_prime(s: f64) -> f64 {
    if s <= 1.0 || s >= 2.0 {
        0.0
    } else {
        let a = s - 1.0;
        let b = 2.0 - s;
        let fa = bump(a);
        let fb = bump(b);
        let den = (fa + fb) * (fa + fb);
        -(bump_over_t2(a) * fb + fa * bump_over_t2(b)) / den
    }
}

// ---------------------------------------------------------------------------
// Interpolation and slope fitting
// ---------------------------------------------------------------------------

/// Cubic Lagrange interpolation of 1-D samples.
///
/// Exact at the nodes (returns the stored sample when `x` coincides with a
/// node) and fourth-order accurate in between; the 4-point window is clamped
/// at the ends. `x` outside the node range is an error of the caller and is
/// clamped to the range.
pub fn interp_cubic(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    assert_eq!(nodes.len(), values.len());
    let n = nodes.len();
    assert!(n >= 4, "cubic interpolation needs at least 4 nodes");
    let x = x.clamp(nodes[0], nodes[n - 1]);
    // Locate the bracketing interval.
    let k = match nodes.binary_search_by(|t| t.partial_cmp(&x).unwrap()) {
        Ok(idx) => return values[idx],
        Err(idx) => idx.saturating_sub(1).min(n - 2),
    };
    let scale = nodes[n - 1] - nodes[0];
    if (x - nodes[k]).abs() <= 1e-14 * scale {
        return values[k];
    }
    if (x - nodes[k + 1]).abs() <= 1e-14 * scale {
        return values[k + 1];
    }
    let start = k.saturating_sub(1).min(n - 4);
    let xs = &nodes[start..start + 4];
    let vs = &values[start..start + 4];
    let mut acc = 0.0;
    for a in 0..4 {
        let mut lag = vs[a];
        for b in 0..4 {
            if a != b {
                lag *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        acc += lag;
    }
    acc
}

/// Least-squares slope of `log(y)` against `log(x)`.
///
/// Used both for observed convergence orders and for the remainder scaling
/// sweep. All entries must be positive.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a slope");
    assert!(
        xs.iter().chain(ys.iter()).all(|&v| v > 0.0),
        "log-log fit needs positive data"
    );
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn demo_grid() -> Grid {
        Grid::uniform(0.25, 8.0, 16, 24).unwrap()
    }

    /// A mildly nonuniform but valid node vector for stencil tests.
    fn warped_nodes(n: usize, len: f64) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                len * (t + 0.35 * t * (1.0 - t))
            })
            .collect()
    }

    #[test]
    fn fornberg_matches_classic_uniform_stencils() {
        let nodes = [0.0, 1.0, 2.0];
        let w = fd_weights(&nodes, 1.0, 1);
        assert_abs_diff_eq!(w[0], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[2], 0.5, epsilon = 1e-14);
        let w2 = fd_weights(&nodes, 1.0, 2);
        assert_abs_diff_eq!(w2[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(w2[1], -2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(w2[2], 1.0, epsilon = 1e-13);
        let nodes5 = [0.0, 1.0, 2.0, 3.0, 4.0];
        let w4 = fd_weights(&nodes5, 2.0, 4);
        for (got, want) in w4.iter().zip([1.0, -4.0, 6.0, -4.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn cumtrapz2d_is_exact_for_linear_integrands() {
        let grid = demo_grid();
        let f = grid.field_from_fn(|x, y| 2.0 * x + 3.0 * y);
        let ix = cumtrapz2d(&grid, &f, Axis::X);
        let iy = cumtrapz2d(&grid, &f, Axis::Y);
        for (i, &x) in grid.xs().iter().enumerate() {
            for (j, &y) in grid.ys().iter().enumerate() {
                assert_abs_diff_eq!(ix[[i, j]], x * x + 3.0 * x * y, epsilon = 1e-12);
                assert_abs_diff_eq!(iy[[i, j]], 2.0 * x * y + 1.5 * y * y, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn derivatives_exact_for_quadratics_on_nonuniform_grids() {
        let x = warped_nodes(13, 0.25);
        let y = warped_nodes(17, 8.0);
        let grid = Grid::new(x, y).unwrap();
        // p(x, y) = 2 + 3x - y + 0.5 x y + x^2 - 0.25 y^2
        let p = grid.field_from_fn(|x, y| 2.0 + 3.0 * x - y + 0.5 * x * y + x * x - 0.25 * y * y);
        let px = diff(&grid, &p, Axis::X, 1);
        let py = diff(&grid, &p, Axis::Y, 1);
        let pxx = diff(&grid, &p, Axis::X, 2);
        let pyy = diff(&grid, &p, Axis::Y, 2);
        for (i, &x) in grid.xs().iter().enumerate() {
            for (j, &y) in grid.ys().iter().enumerate() {
                assert_abs_diff_eq!(px[[i, j]], 3.0 + 0.5 * y + 2.0 * x, epsilon = 1e-10);
                assert_abs_diff_eq!(py[[i, j]], -1.0 + 0.5 * x - 0.5 * y, epsilon = 1e-10);
                assert_abs_diff_eq!(pxx[[i, j]], 2.0, epsilon = 1e-9);
                assert_abs_diff_eq!(pyy[[i, j]], -0.5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn derivative_observed_order_is_second() {
        // Smoothly mapped (tanh-stretched) grids refined together keep the
        // one-sided boundary rows at second order as well.
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for &ny in &[33_usize, 65, 129] {
            let grid = Grid::wall_clustered(0.25, 8.0, 17, ny, 1e-2).unwrap();
            let f = grid.field_from_fn(|x, y| (3.0 * x).sin() * (-0.4 * y).exp());
            let fyy = diff(&grid, &f, Axis::Y, 2);
            let exact = grid.field_from_fn(|x, y| 0.16 * (3.0 * x).sin() * (-0.4 * y).exp());
            let err = sup_norm(&(&fyy - &exact));
            errs.push(err);
            hs.push(1.0 / (ny - 1) as f64);
        }
        let slope = fit_loglog_slope(&hs, &errs);
        assert!(
            slope >= 1.9,
            "second-derivative observed order {slope:.3} below 1.9: errors {errs:?}"
        );
    }

    #[test]
    fn trapezoid_is_exact_for_linear_fields() {
        let grid = demo_grid();
        let f = grid.field_from_fn(|x, y| 1.0 + 2.0 * x - 0.5 * y);
        // ∫∫ (1 + 2x - 0.5y) over [0, .25] × [0, 8]
        let exact = 8.0 * (0.25 + 0.25 * 0.25) - 0.5 * 0.25 * 32.0;
        assert_abs_diff_eq!(integrate(&grid, &f), exact, epsilon = 1e-12);
    }

    #[test]
    fn quadrature_weights_are_positive_and_sum_to_length() {
        let nodes = warped_nodes(11, 8.0);
        let w = trapezoid_weights(&nodes);
        assert!(w.iter().all(|&v| v > 0.0), "trapezoid weights must be positive");
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn cumtrapz_endpoint_matches_trapz() {
        let nodes = warped_nodes(21, 5.0);
        let vals: Vec<f64> = nodes.iter().map(|&t| (0.7 * t).cos()).collect();
        let cum = cumtrapz(&nodes, &vals);
        assert_abs_diff_eq!(cum[20], trapz(&nodes, &vals), epsilon = 1e-13);
        assert_eq!(cum[0], 0.0);
    }

    #[test]
    fn sup_and_l2_norms_on_known_field() {
        let grid = demo_grid();
        let f = grid.field_from_fn(|_, _| -3.0);
        assert_abs_diff_eq!(sup_norm(&f), 3.0, epsilon = 1e-15);
        let area: f64 = 0.25 * 8.0;
        assert_abs_diff_eq!(l2_norm(&grid, &f), 3.0 * area.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn quotient_norms_scale_linearly_in_phi() {
        let grid = demo_grid();
        // Clamped-looking numerator and a wall-vanishing positive profile.
        let phi = grid.field_from_fn(|x, y| x * x * (0.25 - x) * y * y * (-y).exp());
        let us = grid.field_from_fn(|_, y| (y / (1.0 + y)).max(0.0) + 0.0);
        let n1 = quotient_norms(&grid, &phi, &us, 1e-3).unwrap();
        let n2 = quotient_norms(&grid, &phi.mapv(|v| 2.0 * v), &us, 1e-3).unwrap();
        assert_abs_diff_eq!(n2.x_norm, 2.0 * n1.x_norm, epsilon = 1e-10 * n1.x_norm.max(1.0));
        assert_abs_diff_eq!(n2.y_norm, 2.0 * n1.y_norm, epsilon = 1e-10 * n1.y_norm.max(1.0));
    }

    #[test]
    fn quotient_norms_reject_vanishing_profiles() {
        let grid = demo_grid();
        let phi = grid.field_from_fn(|_, y| y * y);
        let us = grid.field_from_fn(|_, y| y - 4.0); // crosses zero inside
        assert!(quotient_norms(&grid, &phi, &us, 1e-3).is_err());
    }

    #[test]
    fn z_norm_is_homogeneous() {
        let grid = demo_grid();
        let u = grid.field_from_fn(|x, y| (x + 0.1) * (-0.3 * y).exp());
        let v = grid.field_from_fn(|x, y| x * y / 8.0);
        let base = z_norm(&grid, &[&u, &v], 1e-3);
        let scaled = z_norm(&grid, &[&u.mapv(|t| 3.0 * t), &v.mapv(|t| 3.0 * t)], 1e-3);
        assert_abs_diff_eq!(scaled, 3.0 * base, epsilon = 1e-9 * base);
    }

    #[test]
    fn hardy_probe_parts_are_nonnegative_and_constant_is_finite() {
        let ys = linspace(0.0, 8.0, 101);
        let h: Vec<f64> = ys.iter().map(|&y| (1.0 + y) * (-y).exp()).collect();
        let us: Vec<f64> = ys.iter().map(|&y| (y / 0.03).tanh()).collect();
        let probe = hardy_probe(&ys, &h, &us, 1e-3, 0.5);
        assert!(probe.lhs_sq > 0.0);
        assert!(probe.grad_sq > 0.0);
        assert!(probe.bulk_sq > 0.0);
        assert!(probe.fitted_constant().is_finite());
    }

    #[test]
    fn cutoff_has_plateau_support_and_consistent_derivative() {
        assert_eq!(chi(0.3), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert_eq!(chi(5.0), 0.0);
        let mut prev = 1.0;
        for k in 1..=40 {
            let s = 1.0 + k as f64 * 0.025;
            let v = chi(s);
            assert!(v <= prev + 1e-12, "chi must be nonincreasing");
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
        // Central difference of chi matches the analytic derivative.
        let h = 1e-6;
        for &s in &[1.15, 1.4, 1.5, 1.75, 1.9] {
            let fd = (chi(s + h) - chi(s - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, chi_prime(s), epsilon = 1e-5);
            assert!(chi_prime(s) < 0.0);
        }
    }

    #[test]
    fn wall_clustered_grid_meets_band_quota() {
        let eps_min = 1e-3;
        let grid = Grid::wall_clustered(0.25, 8.0, 16, 96, eps_min).unwrap();
        let band = 4.0 * eps_min.sqrt();
        assert!(
            grid.nodes_below(band) >= 48,
            "only {} of 96 nodes below {band}",
            grid.nodes_below(band)
        );
        assert_abs_diff_eq!(grid.y_max(), 8.0, epsilon = 0.0);
        assert_eq!(grid.ys()[0], 0.0);
    }

    #[test]
    fn grid_rejects_too_few_nodes() {
        assert!(matches!(
            Grid::uniform(0.25, 8.0, 4, 16),
            Err(MeshError::TooCoarse { .. })
        ));
    }

    #[test]
    fn grid_rejects_nonmonotone_nodes() {
        let x = vec![0.0, 0.1, 0.05, 0.2, 0.3, 0.4, 0.5, 0.6];
        let y = linspace(0.0, 1.0, 8);
        assert!(matches!(Grid::new(x, y), Err(MeshError::BadNodes(_))));
    }

    #[test]
    fn layer_aligned_grid_reproduces_scaled_march_nodes() {
        let march: Vec<f64> = linspace(0.0, 20.0, 41);
        let eps = 1e-3;
        let (grid, aligned) = Grid::layer_aligned(0.25, 16, 8.0, eps, &march, 1.08).unwrap();
        assert_eq!(aligned, 41);
        for (j, &my) in march.iter().enumerate() {
            assert_eq!(grid.ys()[j], eps.sqrt() * my, "node {j} must match exactly");
        }
        assert_eq!(grid.y_max(), 8.0);
        // Tail ratios stay near the requested growth and monotone.
        let ys = grid.ys();
        for w in ys[aligned - 1..].windows(3) {
            let r = (w[2] - w[1]) / (w[1] - w[0]);
            assert!(r > 0.99 && r < 1.35, "tail ratio {r} out of range");
        }
    }

    #[test]
    fn layer_aligned_rejects_layer_reaching_top() {
        let march: Vec<f64> = linspace(0.0, 20.0, 41);
        assert!(Grid::layer_aligned(0.25, 16, 8.0, 0.16, &march, 1.08).is_err());
    }

    #[test]
    fn cubic_interpolation_is_exact_at_nodes_and_for_cubics() {
        let nodes = warped_nodes(12, 20.0);
        let cubic = |t: f64| 1.0 - 2.0 * t + 0.3 * t * t - 0.01 * t * t * t;
        let vals: Vec<f64> = nodes.iter().map(|&t| cubic(t)).collect();
        for (k, &t) in nodes.iter().enumerate() {
            assert_eq!(interp_cubic(&nodes, &vals, t), vals[k]);
        }
        for &t in &[0.3, 4.7, 11.2, 19.9] {
            assert_abs_diff_eq!(interp_cubic(&nodes, &vals, t), cubic(t), epsilon = 1e-10);
        }
    }

    #[test]
    fn loglog_slope_recovers_power_law() {
        let xs = [1e-2, 1e-3, 1e-4];
        let ys: Vec<f64> = xs.iter().map(|&x: &f64| 3.0 * x.powf(1.5)).collect();
        assert_abs_diff_eq!(fit_loglog_slope(&xs, &ys), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn weight_fields_have_expected_support() {
        let grid = demo_grid();
        let l = grid.lx();
        let w1 = weight_field(
            &grid,
            &WeightedNormConfig {
                weight: NormWeight::DistanceToOutflow,
            },
        );
        assert_abs_diff_eq!(w1[[0, 0]], l, epsilon = 1e-15);
        assert_abs_diff_eq!(w1[[grid.nx() - 1, 3]], 0.0, epsilon = 1e-15);
        let w2 = weight_field(
            &grid,
            &WeightedNormConfig {
                weight: NormWeight::EndpointBubble,
            },
        );
        assert_eq!(w2[[0, 0]], 0.0);
        assert_eq!(w2[[grid.nx() - 1, 0]], 0.0);
        let w3 = weight_field(
            &grid,
            &WeightedNormConfig {
                weight: NormWeight::WallBand { delta: 0.5 },
            },
        );
        assert_eq!(w3[[2, 0]], 1.0);
        assert_eq!(w3[[2, grid.ny() - 1]], 0.0);
    }
}
