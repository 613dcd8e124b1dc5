//! Direct solvers for the structured linear systems assembled here.
//!
//! Two sparsity patterns cover every system in the crate:
//!
//! * **Banded** — the divergence-form elliptic solves and the fourth-order
//!   stream-function solve produce matrices whose bandwidth is a small
//!   multiple of one grid dimension. [`BandMatrix`] stores the band in
//!   LAPACK-style compact form (with `kl` extra rows of fill space) and
//!   factors it by Gaussian elimination with partial pivoting.
//! * **Lower Hessenberg** — each boundary-layer station couples a
//!   tridiagonal diffusion block with a dense *lower* triangle coming from
//!   the continuity integral `v = -∫₀ʸ u_x`. Such systems reduce to
//!   bidiagonal form in O(n²) without pivoting
//!   ([`solve_lower_hessenberg`]); the diffusion diagonal dominates in the
//!   marches solved here, and a degenerate pivot falls back to the dense
//!   solver.
//!
//! [`dense_solve`] is a plain partial-pivoting LU used as the reference in
//! tests and as the fallback path.

use ndarray::Array2;
use thiserror::Error;

/// Errors from the direct solvers.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// A pivot vanished (matrix singular to working precision).
    #[error("matrix singular to working precision at column {col}")]
    Singular {
        /// Column at which elimination broke down.
        col: usize,
    },
    /// Dimension mismatch between matrix and right-hand side.
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Band matrix in compact storage with room for pivoting fill.
///
/// Entry `(i, j)` with `-ku ≤ i - j ≤ kl` lives at `ab[[kl + ku + i - j, j]]`;
/// the top `kl` rows of `ab` hold fill generated by row swaps during
/// factorization.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Array2<f64>,
}

impl BandMatrix {
    /// Zero matrix of size `n` with `kl` sub- and `ku` superdiagonals.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            ab: Array2::zeros((2 * kl + ku + 1, n)),
        }
    }

    /// Matrix dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// True if `(i, j)` lies inside the declared band.
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j <= i + self.ku && i <= j + self.kl
    }

    /// Adds `v` to entry `(i, j)`.
    ///
    /// # Panics
    /// Panics if `(i, j)` is outside the declared band: every stencil entry
    /// must fit the band chosen at assembly time.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={}, ku={}",
            self.kl,
            self.ku
        );
        self.ab[[self.kl + self.ku + i - j, j]] += v;
    }

    /// Sets entry `(i, j)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={}, ku={}",
            self.kl,
            self.ku
        );
        self.ab[[self.kl + self.ku + i - j, j]] = v;
    }

    /// Reads entry `(i, j)` (zero outside the band).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[[self.kl + self.ku + i - j, j]]
        } else {
            0.0
        }
    }

    /// Matrix–vector product (used by residual checks).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                out[i] += self.ab[[self.kl + self.ku + i - j, j]] * x[j];
            }
        }
        out
    }

    /// Factors the matrix in place by banded Gaussian elimination with
    /// partial pivoting.
    pub fn factor(mut self) -> Result<BandLu, LinalgError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku; // effective upper bandwidth after pivoting
        let mut ipiv = vec![0_usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Pivot search in column j, rows j..=j+km.
            let mut jp = 0;
            let mut best = self.ab[[kv, j]].abs();
            for k in 1..=km {
                let v = self.ab[[kv + k, j]].abs();
                if v > best {
                    best = v;
                    jp = k;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(LinalgError::Singular { col: j });
            }
            if jp != 0 {
                // Swap rows j and j+jp across columns j..=min(n-1, j+kv).
                let cmax = (j + kv).min(n - 1);
                for c in j..=cmax {
                    let r1 = kv + j - c;
                    let r2 = kv + j + jp - c;
                    self.ab.swap([r1, c], [r2, c]);
                }
            }
            // Eliminate below the pivot.
            let piv = self.ab[[kv, j]];
            for k in 1..=km {
                let m = self.ab[[kv + k, j]] / piv;
                self.ab[[kv + k, j]] = m;
                if m != 0.0 {
                    let cmax = (j + kv).min(n - 1);
                    for c in j + 1..=cmax {
                        let upd = m * self.ab[[kv + j - c, c]];
                        self.ab[[kv + k + j - c, c]] -= upd;
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            ab: self.ab,
            ipiv,
        })
    }
}

/// Factored band matrix; solves many right-hand sides cheaply.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Array2<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    /// Solves `A x = b`, overwriting `b` with the solution.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::Shape(format!(
                "rhs length {} vs matrix size {}",
                b.len(),
                self.n
            )));
        }
        let kv = self.kl + self.ku;
        // Forward substitution with the stored multipliers.
        for j in 0..self.n.saturating_sub(1) {
            let p = self.ipiv[j];
            if p != j {
                b.swap(p, j);
            }
            let km = self.kl.min(self.n - 1 - j);
            for k in 1..=km {
                b[j + k] -= self.ab[[kv + k, j]] * b[j];
            }
        }
        // Back substitution on the upper factor.
        for j in (0..self.n).rev() {
            let cmax = (j + kv).min(self.n - 1);
            let mut acc = b[j];
            for c in j + 1..=cmax {
                acc -= self.ab[[kv + j - c, c]] * b[c];
            }
            b[j] = acc / self.ab[[kv, j]];
        }
        Ok(())
    }

    /// Convenience wrapper returning a fresh solution vector.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Dense LU solve with partial pivoting (reference and fallback path).
pub fn dense_solve(mut a: Array2<f64>, mut b: Vec<f64>) -> Result<Vec<f64>, LinalgError> {
    let n = b.len();
    if a.shape() != [n, n] {
        return Err(LinalgError::Shape(format!(
            "matrix {:?} vs rhs length {n}",
            a.shape()
        )));
    }
    for k in 0..n {
        let mut p = k;
        let mut best = a[[k, k]].abs();
        for i in k + 1..n {
            let v = a[[i, k]].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(LinalgError::Singular { col: k });
        }
        if p != k {
            for c in 0..n {
                a.swap([k, c], [p, c]);
            }
            b.swap(k, p);
        }
        let piv = a[[k, k]];
        for i in k + 1..n {
            let m = a[[i, k]] / piv;
            if m != 0.0 {
                for c in k + 1..n {
                    let upd = m * a[[k, c]];
                    a[[i, c]] -= upd;
                }
                b[i] -= m * b[k];
            }
            a[[i, k]] = m;
        }
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for c in i + 1..n {
            acc -= a[[i, c]] * b[c];
        }
        b[i] = acc / a[[i, i]];
    }
    Ok(b)
}

/// Solves a lower-Hessenberg system (`a[[i, j]] = 0` for `j > i + 1`) in
/// O(n²) by structure-preserving elimination without pivoting.
///
/// The matrix and right-hand side are consumed (overwritten). Returns an
/// error if a pivot falls below `1e-12` times the largest prior pivot, in
/// which case the caller should rebuild the system and use [`dense_solve`].
pub fn solve_lower_hessenberg(
    a: &mut Array2<f64>,
    b: &mut [f64],
) -> Result<Vec<f64>, LinalgError> {
    let n = b.len();
    if a.shape() != [n, n] {
        return Err(LinalgError::Shape(format!(
            "matrix {:?} vs rhs length {n}",
            a.shape()
        )));
    }
    let mut scale = 0.0_f64;
    for k in 0..n {
        let p = a[[k, k]];
        scale = scale.max(p.abs());
        if p.abs() <= 1e-12 * scale {
            return Err(LinalgError::Singular { col: k });
        }
        if k + 1 < n {
            // Row k has nonzeros only in columns ≤ k+1, so eliminating
            // column k below the diagonal touches column k+1 alone.
            let upper = a[[k, k + 1]];
            for i in k + 1..n {
                let m = a[[i, k]] / p;
                if m != 0.0 {
                    a[[i, k + 1]] -= m * upper;
                    b[i] -= m * b[k];
                }
            }
        }
    }
    // The eliminated system is bidiagonal.
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / a[[n - 1, n - 1]];
    for i in (0..n - 1).rev() {
        x[i] = (b[i] - a[[i, i + 1]] * x[i + 1]) / a[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> (BandMatrix, Array2<f64>) {
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                if band.in_band(i, j) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    // Strengthen the diagonal enough to keep the systems
                    // well conditioned without hiding pivoting behavior.
                    let v = if i == j { v + 4.0 } else { v };
                    band.set(i, j, v);
                    dense[[i, j]] = v;
                }
            }
        }
        (band, dense)
    }

    #[test]
    fn banded_lu_matches_dense_reference_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(12_usize, 2_usize, 3_usize), (40, 5, 5), (75, 9, 4)] {
            let (band, dense) = random_banded(n, kl, ku, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lu = band.clone().factor().expect("factorization");
            let x = lu.solve(&b).unwrap();
            let x_ref = dense_solve(dense, b.clone()).unwrap();
            for (a, c) in x.iter().zip(&x_ref) {
                assert_abs_diff_eq!(a, c, epsilon = 1e-10);
            }
            // Residual check through the band matvec.
            let r = band.matvec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                assert_abs_diff_eq!(ri, bi, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn banded_lu_pivots_when_diagonal_vanishes() {
        // Leading diagonal entry is zero; without pivoting this would break.
        let mut band = BandMatrix::zeros(3, 1, 1);
        band.set(0, 0, 0.0);
        band.set(0, 1, 2.0);
        band.set(1, 0, 1.0);
        band.set(1, 1, 1.0);
        band.set(1, 2, 1.0);
        band.set(2, 1, 3.0);
        band.set(2, 2, 1.0);
        let lu = band.factor().expect("pivoted factorization");
        // Solve against the known system: x = (1, 1, 1) maps to b = (2, 3, 4).
        let x = lu.solve(&[2.0, 3.0, 4.0]).unwrap();
        for v in x {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_band_is_reported() {
        let mut band = BandMatrix::zeros(4, 1, 1);
        // Column 2 entirely zero.
        band.set(0, 0, 1.0);
        band.set(1, 1, 1.0);
        band.set(3, 3, 1.0);
        assert!(matches!(
            band.factor(),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn hessenberg_solver_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=(i + 1).min(n - 1) {
                a[[i, j]] = rng.gen_range(-0.5..0.5);
            }
            a[[i, i]] += 5.0; // diffusion-dominated diagonal, like the marches
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x_ref = dense_solve(a.clone(), b.clone()).unwrap();
        let mut b2 = b.clone();
        let x = solve_lower_hessenberg(&mut a.clone(), &mut b2).unwrap();
        for (u, v) in x.iter().zip(&x_ref) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-9);
        }
    }

    #[test]
    fn hessenberg_solver_reports_degenerate_pivot() {
        let mut a = Array2::zeros((3, 3));
        a[[0, 1]] = 1.0; // zero pivot in the first column
        a[[1, 0]] = 1.0;
        a[[1, 1]] = 1.0;
        a[[2, 2]] = 1.0;
        let mut b = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            solve_lower_hessenberg(&mut a, &mut b),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn dense_solver_recovers_known_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 25;
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = rng.gen_range(-1.0..1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a[[i, j]] * x_true[j]).sum())
            .collect();
        let x = dense_solve(a, b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-9);
        }
    }
}
