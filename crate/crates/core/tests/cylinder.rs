use singprof::cylinder::{
    bound_diagnostic, energy_identity_residual, energy_trace, mid_profile_distance, solve_cylinder, CylinderField,
    CylinderGrid, CylinderOptions,
};
use singprof::shooting::{omega0_with, ShootingConfig};
use singprof::{Error, ProblemParams, RadialProfile, ThetaGrid};

fn phi(grid: ThetaGrid, scale: f64) -> RadialProfile {
    RadialProfile::from_fn(grid, |t| scale * t.cos(), |t| -scale * t.sin())
}

fn omega0_on(grid: ThetaGrid, q: f64) -> RadialProfile {
    omega0_with(
        4,
        q,
        &ShootingConfig {
            nodes: grid.len(),
            ..ShootingConfig::default()
        },
    )
    .unwrap()
}

fn solve(q: f64, g0: &RadialProfile, g1: &RadialProfile, grid: &CylinderGrid) -> singprof::Result<CylinderField> {
    solve_cylinder(
        &ProblemParams::with_ell(4, q).unwrap(),
        g0,
        g1,
        grid,
        &CylinderOptions::default(),
    )
}

/// Max difference at the nodes shared by a grid and its refinement.
fn nested_difference(coarse: &CylinderField, fine: &CylinderField) -> f64 {
    let mut d = 0.0f64;
    for j in 0..coarse.grid.nt {
        for i in 0..coarse.grid.ntheta {
            d = d.max((coarse.at(j, i) - fine.at(2 * j, 2 * i)).abs());
        }
    }
    d
}

#[test]
fn differences_under_refinement_shrink_fast() {
    let g1 = CylinderGrid::new(8.0, 65, 66).unwrap();
    let (g2, g4) = (g1.refined(), g1.refined().refined());
    let field = |g: &CylinderGrid| {
        let th = g.theta_grid();
        solve(2.0, &phi(th, 1.0), &phi(th, 0.5), g).unwrap()
    };
    let (f1, f2, f4) = (field(&g1), field(&g2), field(&g4));
    let (d1, d2) = (nested_difference(&f1, &f2), nested_difference(&f2, &f4));
    assert!(d1 / d2 >= 3.5, "differences {d1:e} -> {d2:e}");
}

#[test]
fn solutions_stay_nonnegative_for_positive_data() {
    let grid = CylinderGrid::new(20.0, 81, 66).unwrap();
    let w0 = omega0_on(grid.theta_grid(), 2.0);
    let f = solve(2.0, &w0.scaled(1.25), &w0, &grid).unwrap();
    assert!(f.w.iter().all(|&v| v >= 0.0));
    assert!(!f.stats.outside_theory);
}

#[test]
fn energy_increases_above_q2() {
    // N = 4: q2 = 3 < 4 < q3 = 5, so β = 2/3 > 0.
    let grid = CylinderGrid::new(20.0, 161, 66).unwrap();
    let th = grid.theta_grid();
    let params = ProblemParams::with_ell(4, 4.0).unwrap();
    let f = solve(4.0, &phi(th, 1.0), &phi(th, 0.2), &grid).unwrap();
    let trace = energy_trace(&f, &params).unwrap();
    let scale = trace.samples.iter().fold(0.0f64, |m, s| m.max(s.h.abs()));
    assert!(trace.monotonicity_violation(1.0, 5.0, 15.0) <= 1e-10 * scale);
    assert!(trace.monotonicity_violation(-1.0, 5.0, 15.0) > 0.0);
    let law = energy_identity_residual(&trace, &params, 20.0).unwrap();
    assert!(law.lhs > 0.0 && law.relative_residual <= 1e-2, "{law:?}");
}

#[test]
fn supercritical_data_is_flushed_to_zero() {
    let mut mids = Vec::new();
    for t_max in [16.0, 32.0, 64.0] {
        let grid = CylinderGrid::new(t_max, 4 * t_max as usize + 1, 66).unwrap();
        let data = phi(grid.theta_grid(), 0.1);
        let f = solve(6.0, &data, &data, &grid).unwrap();
        mids.push(f.profile_at(0.5 * t_max).unwrap().max_abs());
    }
    assert!(mids.windows(2).all(|w| w[1] < 1e-2 * w[0]), "{mids:?}");
}

#[test]
fn bound_relative_to_the_steady_field() {
    let grid = CylinderGrid::new(40.0, 161, 66).unwrap();
    let w0 = omega0_on(grid.theta_grid(), 2.0);
    let b0 = bound_diagnostic(&CylinderField::constant(grid, &w0).unwrap());
    assert!(b0.is_finite() && b0 > 0.0);
    let f = solve(2.0, &w0.scaled(1.25), &w0, &grid).unwrap();
    assert!(bound_diagnostic(&f) <= 2.5 * b0);
    // Doubled data overshoots its own envelope 2·b0 in the interior; the ratio
    // is frozen here (2.59 at twice the t resolution).
    let f = solve(2.0, &w0.scaled(2.0), &w0, &grid).unwrap();
    let ratio = bound_diagnostic(&f) / b0;
    assert!((ratio - 2.6075).abs() < 1e-3, "ratio {ratio}");
    assert!(mid_profile_distance(&f, &w0).unwrap() <= 1e-2);
}

/// Doubling ω₀ at t = 0 is past the fold of the positive branch on a cylinder of
/// length 20: Newton and the continuation both stall, and the error says so.
/// Data 1.5·ω₀ is still below the fold, and the longer cylinders are solvable again.
#[test]
fn doubled_data_has_no_positive_solution_at_length_twenty() {
    let grid = CylinderGrid::new(20.0, 81, 66).unwrap();
    let w0 = omega0_on(grid.theta_grid(), 2.0);
    match solve(2.0, &w0.scaled(2.0), &w0, &grid) {
        Err(Error::NonConvergence { .. }) => {}
        other => panic!("expected non-convergence, got {:?}", other.map(|f| f.stats)),
    }
    assert!(solve(2.0, &w0.scaled(1.5), &w0, &grid).is_ok());
    let mut distances = Vec::new();
    for t_max in [40.0, 80.0] {
        let grid = CylinderGrid::new(t_max, 4 * t_max as usize + 1, 66).unwrap();
        distances.push(mid_profile_distance(&solve(2.0, &w0.scaled(2.0), &w0, &grid).unwrap(), &w0).unwrap());
    }
    assert!(distances[1] < distances[0], "{distances:?}");
}
