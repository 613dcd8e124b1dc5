//! Property tests for the discrete infrastructure and the configuration
//! format: algebraic identities that must hold for arbitrary admissible
//! inputs, not just hand-picked fixtures.

use blexp::config::RunConfig;
use blexp::linalg::{dense_solve, BandMatrix};
use blexp::mesh::{chi, chi_prime, diff1d, fit_loglog_slope, l2_norm, trapz, z_norm, Grid};
use blexp::ScalarField2D;
use proptest::prelude::*;

/// Strictly increasing node sets with spacing bounded away from zero, so
/// difference weights stay well conditioned.
fn nodes() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 4..40).prop_map(|steps| {
        let mut t = 0.0;
        let mut out = vec![0.0];
        for s in steps {
            t += s;
            out.push(t);
        }
        out
    })
}

proptest! {
    #[test]
    fn stencils_differentiate_quadratics_exactly(
        ts in nodes(),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        c in -2.0f64..2.0,
    ) {
        let values: Vec<f64> = ts.iter().map(|&t| a + b * t + c * t * t).collect();
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let d1 = diff1d(&ts, &values, 1);
        let d2 = diff1d(&ts, &values, 2);
        for (k, &t) in ts.iter().enumerate() {
            prop_assert!((d1[k] - (b + 2.0 * c * t)).abs() <= 1e-8 * scale);
            prop_assert!((d2[k] - 2.0 * c).abs() <= 1e-7 * scale);
        }
    }

    #[test]
    fn trapezoid_rule_is_exact_on_linear_data(
        ts in nodes(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let values: Vec<f64> = ts.iter().map(|&t| a + b * t).collect();
        let top = *ts.last().unwrap();
        let exact = a * top + 0.5 * b * top * top;
        let scale = 1.0 + exact.abs();
        prop_assert!((trapz(&ts, &values) - exact).abs() <= 1e-11 * scale);
    }

    #[test]
    fn cutoff_is_a_monotone_shoulder(s in -1.0f64..4.0, h in 0.0f64..1.0) {
        let v = chi(s);
        prop_assert!((0.0..=1.0).contains(&v));
        if s <= 1.0 {
            prop_assert_eq!(v, 1.0);
            prop_assert_eq!(chi_prime(s), 0.0);
        }
        if s >= 2.0 {
            prop_assert_eq!(v, 0.0);
            prop_assert_eq!(chi_prime(s), 0.0);
        }
        prop_assert!(chi(s + h) <= v + 1e-15);
        prop_assert!(chi_prime(s) <= 0.0);
    }

    #[test]
    fn loglog_fit_recovers_exact_power_laws(
        p in -2.5f64..2.5,
        c in 0.1f64..10.0,
        factor in 2.0f64..4.0,
        n in 4usize..9,
    ) {
        let xs: Vec<f64> = (0..n).map(|k| 1e-1 / factor.powi(k as i32)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| c * x.powf(p)).collect();
        prop_assert!((fit_loglog_slope(&xs, &ys) - p).abs() <= 1e-9);
    }

    #[test]
    fn norms_are_absolutely_homogeneous(
        nx in 9usize..17,
        ny in 9usize..17,
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        scalar in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        eps in 1e-4f64..1e-1,
    ) {
        let grid = Grid::uniform(1.0, 1.0, nx, ny).unwrap();
        let f = grid.field_from_fn(|x, y| a * (3.0 * x).sin() + b * (2.0 * y).cos() + x * y);
        let g = grid.field_from_fn(|x, y| a * x * x - b * y + 0.5);
        let fs: ScalarField2D = &f * scalar;
        let gs: ScalarField2D = &g * scalar;

        let l2 = l2_norm(&grid, &f);
        prop_assert!((l2_norm(&grid, &fs) - scalar.abs() * l2).abs() <= 1e-12 * (1.0 + l2));

        let z = z_norm(&grid, &[&f, &g], eps);
        let zs = z_norm(&grid, &[&fs, &gs], eps);
        prop_assert!((zs - scalar.abs() * z).abs() <= 1e-11 * (1.0 + z));
    }

    #[test]
    fn banded_factorization_matches_dense_elimination(
        n in 6usize..20,
        band in 1usize..4,
        seed_vals in prop::collection::vec(-1.0f64..1.0, 400),
    ) {
        let mut band_mat = BandMatrix::zeros(n, band, band);
        let mut dense = ScalarField2D::zeros((n, n));
        let mut k = 0;
        let mut next = || {
            let v = seed_vals[k % seed_vals.len()];
            k += 1;
            v
        };
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) <= band {
                    // Diagonally dominant entries keep both solvers far
                    // from breakdown so the comparison is meaningful.
                    let v = if i == j { 4.0 + next().abs() } else { next() };
                    band_mat.set(i, j, v);
                    dense[[i, j]] = v;
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let banded = band_mat.factor().unwrap().solve(&b).unwrap();
        let direct = dense_solve(dense, b).unwrap();
        for (x, y) in banded.iter().zip(&direct) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }
}

/// Strategy for complete, valid configurations.
fn config_strategy() -> impl Strategy<Value = RunConfig> {
    (
        prop_oneof![
            Just("shear".to_string()),
            Just("strain".to_string()),
            Just("harmonic".to_string())
        ],
        -0.5f64..0.5,
        -0.5f64..0.5,
        0.1f64..4.0,
        (0.05f64..1.0, 2.0f64..10.0),
        (8usize..40, 9usize..80, 9usize..80),
        prop::collection::vec(1e-6f64..1e-1, 1..6),
        1e-6f64..1e-1,
        prop_oneof![
            Just("blasius".to_string()),
            Just("table:data/inflow.txt".to_string())
        ],
        (1e-12f64..1e-6, 1usize..64),
        "[a-z][a-z0-9_/-]{0,12}",
        any::<u64>(),
    )
        .prop_map(
            |(
                flow_kind,
                beta,
                alpha,
                k,
                (l, y_max),
                (nx, march_ny, outer_ny),
                eps_list,
                verify_eps,
                inflow,
                (picard_tol_factor, probe_draws),
                out_dir,
                seed,
            )| RunConfig {
                flow_kind,
                beta,
                alpha,
                k,
                l,
                y_max,
                nx,
                march_ny,
                outer_ny,
                eps_list,
                verify_eps,
                inflow,
                picard_tol_factor,
                probe_draws,
                out_dir,
                seed,
                ..RunConfig::default()
            },
        )
}

proptest! {
    #[test]
    fn any_valid_config_round_trips_through_its_text_form(cfg in config_strategy()) {
        prop_assert!(cfg.validate().is_ok());
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(cfg, back);
    }
}
