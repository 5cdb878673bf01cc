mod common;

use nlsred::ansatz::{build_ansatz, AnsatzParams};
use nlsred::discretization::{norm_e, EnergyFunctional};
use nlsred::fields::FieldSpec;
use nlsred::grid::{ComplexField, Grid};
use nlsred::groundstate::{solve_ground_state, RadialProfile};
use nlsred::reduction::GridRule;
use nlsred::solver::{
    concentration_sweep, gauge_transform, orbit_distance, peak_and_phase, refine_newton, solve_from_ansatz,
    NewtonOptions, SweepOptions,
};
use nlsred::Error;
use num_complex::Complex64;

fn profile2() -> RadialProfile {
    solve_ground_state(2, 3.0, 1e-10).unwrap()
}

fn skewed() -> &'static str {
    "exp(-(x1^2+x2^2))*(1+0.5*x1^3)"
}

#[test]
fn constant_fields_converge_at_once() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, "0.3", "1.4", &["0", "0"]).unwrap();
    let grid = Grid::new(2, 12.0, 257).unwrap();
    let params = AnsatzParams::new(0.1, &[0.0, 0.0], 0.0);
    let br = solve_from_ansatz(&prof, &spec, &params, &grid, &NewtonOptions::default()).unwrap();
    assert!(br.newton_iterations <= 2);
    assert!(br.final_residual <= 1e-8);
    let z = build_ansatz(&prof, &spec, &params, &grid).unwrap();
    let e = EnergyFunctional::new(&spec, 3.0, 0.1, &grid).unwrap();
    // u differs from z by the discretisation floor only
    assert!(orbit_distance(&br.u, &z).unwrap() <= 10.0 * norm_e(&e.gradient(&z).unwrap()));
}

#[test]
fn constant_potential_is_an_exact_gauge() {
    let prof = profile2();
    let a = [0.3, -0.2];
    let plain = FieldSpec::from_exprs(2, skewed(), "1", &["0", "0"]).unwrap();
    let magnetic = FieldSpec::from_exprs(2, skewed(), "1", &["0.3", "-0.2"]).unwrap();
    let grid = Grid::new(2, 12.0, 97).unwrap();
    let params = AnsatzParams::new(0.2, &[0.0, 0.0], 0.0);
    let opts = NewtonOptions::with_tol(1e-10);
    let u0 = solve_from_ansatz(&prof, &plain, &params, &grid, &opts).unwrap();
    let ua = solve_from_ansatz(&prof, &magnetic, &params, &grid, &opts).unwrap();
    let d = orbit_distance(&ua.u, &gauge_transform(&u0.u, &a)).unwrap();
    assert!(d <= 1e-6, "{d:e}");
    for j in 0..2 {
        assert!((ua.peak.phase_gradient[j] - a[j]).abs() < 1e-6);
        assert!((ua.peak.location[j] - u0.peak.location[j]).abs() < 1e-6);
    }
}

#[test]
fn trivial_state_is_rejected() {
    let spec = FieldSpec::from_exprs(2, "0.3", "1", &["0", "0"]).unwrap();
    let grid = Grid::new(2, 8.0, 33).unwrap();
    let e = EnergyFunctional::new(&spec, 3.0, 0.1, &grid).unwrap();
    let zero = ComplexField::zeros(&grid);
    let out = refine_newton(&e, &zero, &NewtonOptions::default());
    assert!(matches!(out, Err(Error::SingularHessian(_))), "{out:?}");
    assert!(matches!(peak_and_phase(&zero), Err(Error::FlatField)));
}

#[test]
fn small_start_collapses_to_the_trivial_state() {
    let spec = FieldSpec::from_exprs(2, "0.3", "1", &["0", "0"]).unwrap();
    let grid = Grid::new(2, 8.0, 33).unwrap();
    let e = EnergyFunctional::new(&spec, 3.0, 0.1, &grid).unwrap();
    let mut u = ComplexField::zeros(&grid);
    u.values_mut()[grid.len() / 2] = Complex64::new(1e-3, 0.0);
    // below the mountain pass level Newton heads for u = 0
    let out = refine_newton(&e, &u, &NewtonOptions::default());
    assert!(matches!(out, Err(Error::SingularHessian(_))), "{}", out.is_ok());
}

#[test]
fn peak_of_the_ansatz() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, "0", "1", &["0.3", "-0.2"]).unwrap();
    let xi = [0.37, -0.21];
    for m in [65, 129] {
        let grid = Grid::new(2, 13.0, m).unwrap();
        let z = build_ansatz(&prof, &spec, &AnsatzParams::new(0.1, &xi, 0.0), &grid).unwrap();
        let pk = peak_and_phase(&z).unwrap();
        assert!((pk.phase_gradient[0] - 0.3).abs() < 1e-8 && (pk.phase_gradient[1] + 0.2).abs() < 1e-8);
        let h = grid.spacing();
        let err = ((pk.location[0] - xi[0]).powi(2) + (pk.location[1] - xi[1]).powi(2)).sqrt();
        assert!(err <= h * h, "{err} with h = {h}");
        let rotated = peak_and_phase(&z.scaled(Complex64::from_polar(1.0, 2.1))).unwrap();
        for j in 0..2 {
            assert!((rotated.location[j] - pk.location[j]).abs() < 1e-12);
            assert!((rotated.phase_gradient[j] - pk.phase_gradient[j]).abs() < 1e-12);
        }
    }
    let real = build_ansatz(
        &prof,
        &FieldSpec::trivial(2),
        &AnsatzParams::new(0.1, &xi, 0.0),
        &Grid::new(2, 13.0, 65).unwrap(),
    )
    .unwrap();
    assert_eq!(peak_and_phase(&real).unwrap().phase_gradient, vec![0.0, 0.0]);
}

#[test]
fn twin_peaks_are_flat() {
    let grid = Grid::new(2, 8.0, 65).unwrap();
    let u = ComplexField::from_fn(&grid, |x| {
        let b = |c: f64| (-((x[0] - c).powi(2) + x[1].powi(2))).exp();
        Complex64::new(b(-3.0) + b(3.0), 0.0)
    });
    assert!(matches!(peak_and_phase(&u), Err(Error::FlatField)));
}

#[test]
fn orbit_distance_ignores_global_phase() {
    let grid = Grid::new(2, 6.0, 49).unwrap();
    let mut rng = common::rng(9);
    let u = common::random_field(&grid, &mut rng, 0.0);
    let v = u.scaled(Complex64::from_polar(1.0, 1.3));
    assert!(orbit_distance(&u, &v).unwrap() <= 1e-13 * norm_e(&u));
    let w = common::random_field(&grid, &mut rng, 0.0);
    let d = orbit_distance(&u, &w).unwrap();
    assert!(d > 0.0 && d <= norm_e(&u.sub(&w)) + 1e-12);
}

#[test]
fn rotated_start_returns_the_same_orbit() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, skewed(), "1", &["0.1", "0"]).unwrap();
    let grid = Grid::new(2, 12.0, 97).unwrap();
    let params = AnsatzParams::new(0.2, &[0.0, 0.0], 0.0);
    let e = EnergyFunctional::new(&spec, 3.0, 0.2, &grid).unwrap();
    let z = build_ansatz(&prof, &spec, &params, &grid).unwrap();
    let opts = NewtonOptions::default();
    let (u1, s1) = refine_newton(&e, &z, &opts).unwrap();
    let (u2, s2) = refine_newton(&e, &z.scaled(Complex64::from_polar(1.0, 0.9)), &opts).unwrap();
    assert_eq!(s1.iterations, s2.iterations);
    assert!(orbit_distance(&u1, &u2).unwrap() <= 10.0 * opts.tol);
}

#[test]
fn peak_location_converges_under_refinement() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, skewed(), "1", &["0", "0"]).unwrap();
    let params = AnsatzParams::new(0.2, &[0.0, 0.0], 0.0);
    let mut peaks = Vec::new();
    let mut residual_floor = Vec::new();
    let mut h = 0.0;
    for m in [97, 193] {
        let grid = Grid::new(2, 12.0, m).unwrap();
        let br = solve_from_ansatz(&prof, &spec, &params, &grid, &NewtonOptions::default()).unwrap();
        peaks.push(br.peak.location[0]);
        let frozen = FieldSpec::from_exprs(2, "1", "1", &["0", "0"]).unwrap();
        let e = EnergyFunctional::new(&frozen, 3.0, 0.2, &grid).unwrap();
        let z = build_ansatz(&prof, &frozen, &params, &grid).unwrap();
        residual_floor.push(norm_e(&e.gradient(&z).unwrap()));
        if h == 0.0 {
            h = grid.spacing();
        }
    }
    assert!((peaks[0] - peaks[1]).abs() <= h * h, "{peaks:?}");
    // the frozen-coefficient floor drops at least fourfold per halving
    assert!(residual_floor[1] <= residual_floor[0] / 4.0, "{residual_floor:?}");
}

#[test]
fn sweep_records_failures_and_continues() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, "exp(-(x1^2+x2^2))", "1", &["0", "0"]).unwrap();
    let rule = GridRule::fixed(&[0.0, 0.0], 12.0, 97);
    let seeds = vec![vec![0.0, 0.0], vec![1.5, 0.0]];
    let (rep, fields) = concentration_sweep(&prof, &spec, &[0.2], &seeds, &rule, &SweepOptions::default()).unwrap();
    assert_eq!(rep.entries.len(), 2);
    assert!(rep.entries[0].error.is_none() && fields[0].is_some());
    assert!(rep.entries[0].distance.unwrap() < 1e-6);
    assert!(rep.entries[1].error.as_deref().unwrap().contains("decay lengths"));
    assert!(fields[1].is_none());
    assert_eq!(rep.orbits, vec![1]);
    let mut csv = Vec::new();
    rep.write_csv(2, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with(
        "eps,seed_index,peak_1,peak_2,distance,phase_1,phase_2,a_1,a_2,psi,energy,newton_iterations,final_residual,orbit,error\n"
    ));
    assert_eq!(text.lines().count(), 3);
}
