//! Temporary diagnostic probe; not part of the suite.

use blexp::flows::{make_flow, FlowKind};
use blexp::prandtl::{blasius_inflow, march_grid, solve_blasius, solve_prandtl, MarchParams};

#[test]
#[ignore]
fn march_error_landscape() {
    let fl = make_flow(FlowKind::Shear { beta: 0.0 }, 0.25, 8.0).unwrap();
    let b = solve_blasius();
    for ny in [97usize, 193, 385, 769] {
        let mut line = format!("ny={ny:4}:");
        for nx in [9usize, 17, 33, 65] {
            let grid = march_grid(0.25, nx, ny).unwrap();
            let inflow = blasius_inflow(&fl, grid.ys());
            let sol = solve_prandtl(&fl, &grid, &inflow, &MarchParams::default()).unwrap();
            let mut sup = 0.0_f64;
            for (i, &x) in grid.xs().iter().enumerate() {
                for (j, &y) in grid.ys().iter().enumerate() {
                    sup = sup.max((sol.u[[i, j]] - b.similarity_u(1.0, x, y)).abs());
                }
            }
            line.push_str(&format!("  nx={nx:2} err={sup:.3e}"));
        }
        println!("{line}");
    }
}
