mod common;

use std::f64::consts::PI;

use nlsred::ansatz::{build_ansatz, frozen_data, project_complement, tangent_frame, AnsatzParams, TangentFrame};
use nlsred::discretization::{inner_e, norm_e};
use nlsred::fields::FieldSpec;
use nlsred::grid::Grid;
use nlsred::groundstate::{solve_ground_state, RadialProfile};
use nlsred::Error;

fn profile2() -> RadialProfile {
    solve_ground_state(2, 3.0, 1e-10).unwrap()
}

#[test]
fn trivial_fields_give_the_ground_state_itself() {
    let prof = profile2();
    let spec = FieldSpec::trivial(2);
    // h = 0.25, so ξ is a node
    let grid = Grid::new(2, 13.0, 105).unwrap();
    let params = AnsatzParams::new(0.1, &[0.5, -0.25], 0.0);
    let z = build_ansatz(&prof, &spec, &params, &grid).unwrap();
    let peak = grid.nearest_node(&params.xi);
    for v in z.values() {
        assert!(v.im == 0.0 && v.re >= 0.0);
        assert!(v.re <= z.values()[peak].re);
    }
    assert!((z.values()[peak].re - prof.value(0.0)).abs() < 1e-14);
}

#[test]
fn phase_shift_by_pi_negates() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, "0.2", "1.1", &["0.3", "-0.2"]).unwrap();
    let grid = Grid::new(2, 12.0, 65).unwrap();
    let z0 = build_ansatz(&prof, &spec, &AnsatzParams::new(0.1, &[0.0, 0.0], 0.0), &grid).unwrap();
    let zpi = build_ansatz(&prof, &spec, &AnsatzParams::new(0.1, &[0.0, 0.0], PI), &grid).unwrap();
    let diff = z0.add(&zpi).max_abs();
    assert!(diff < 1e-14 * z0.max_abs());
}

#[test]
fn constant_potential_gives_linear_phase() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, "0", "1", &["0.3", "-0.2"]).unwrap();
    let grid = Grid::new(2, 12.0, 65).unwrap();
    let z = build_ansatz(&prof, &spec, &AnsatzParams::new(0.1, &[0.0, 0.0], 0.0), &grid).unwrap();
    let h = grid.spacing();
    let a = [0.3, -0.2];
    for idx in 0..grid.len() {
        let k = grid.multi_index(idx);
        for axis in 0..2 {
            if k[axis] + 1 >= grid.points() || z.values()[idx].norm() < 1e-8 {
                continue;
            }
            let next = z.values()[idx + grid.stride(axis)];
            if next.norm() < 1e-8 {
                continue;
            }
            let dphi = (next * z.values()[idx].conj()).arg();
            let expect = (a[axis] * h + PI).rem_euclid(2.0 * PI) - PI;
            assert!((dphi - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn modulus_is_the_rescaled_profile() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, "0.3", "1.4", &["0.1", "0.0"]).unwrap();
    let params = AnsatzParams::new(0.2, &[0.3, 0.0], 1.0);
    let fr = frozen_data(&spec, 3.0, &params).unwrap();
    // independent scaling: α = ((1+V)/K)^{1/(p-1)}, β = √(1+V)
    assert!((fr.alpha - (1.3f64 / 1.4).sqrt()).abs() < 1e-15);
    assert!((fr.beta - 1.3f64.sqrt()).abs() < 1e-15);
    let grid = Grid::new(2, 12.0, 65).unwrap();
    let z = build_ansatz(&prof, &spec, &params, &grid).unwrap();
    for (idx, v) in z.values().iter().enumerate().step_by(37) {
        if grid.is_boundary(idx) {
            continue;
        }
        let x = grid.node(idx);
        let r = ((x[0] - 0.3).powi(2) + x[1].powi(2)).sqrt();
        assert!((v.norm() - fr.alpha * prof.value(fr.beta * r)).abs() < 1e-13);
    }
}

#[test]
fn energy_norm_follows_change_of_variables() {
    let prof = solve_ground_state(1, 3.0, 1e-12).unwrap();
    let spec = FieldSpec::from_exprs(1, "0.44", "1.7", &["0"]).unwrap();
    let params = AnsatzParams::new(0.1, &[0.0], 0.0);
    let fr = frozen_data(&spec, 3.0, &params).unwrap();
    let mo = prof.moments().scaled(fr.alpha, fr.beta, 1, 3.0);
    let exact = mo.mass + mo.gradient_mass;
    // second-order forward differences: extrapolate two resolutions
    let mut vals = Vec::new();
    for m in [20001, 40001] {
        let grid = Grid::new(1, 14.0, m).unwrap();
        let z = build_ansatz(&prof, &spec, &params, &grid).unwrap();
        vals.push(norm_e(&z).powi(2));
    }
    let rich = (4.0 * vals[1] - vals[0]) / 3.0;
    assert!((rich - exact).abs() < 1e-6 * exact, "{rich} vs {exact}");
}

#[test]
fn out_of_box_centres_are_rejected() {
    let prof = profile2();
    let spec = FieldSpec::trivial(2);
    let grid = Grid::new(2, 12.0, 65).unwrap();
    let err = build_ansatz(&prof, &spec, &AnsatzParams::new(0.1, &[5.0, 0.0], 0.0), &grid).unwrap_err();
    assert!(matches!(err, Error::OutOfBox { .. }));
}

#[test]
fn frame_has_phase_and_translation_members() {
    let prof = profile2();
    let spec = FieldSpec::trivial(2);
    let grid = Grid::new(2, 12.0, 129).unwrap();
    let params = AnsatzParams::new(0.1, &[0.0, 0.0], 0.4);
    let z = build_ansatz(&prof, &spec, &params, &grid).unwrap();
    let frame = tangent_frame(&z, &prof, &spec, &params).unwrap();
    assert_eq!(frame.len(), 3);
    assert!(inner_e(&frame.basis()[0], &z).unwrap().abs() < 1e-14 * norm_e(&z).powi(2));
    let zz = norm_e(&z).powi(2);
    for j in 1..3 {
        assert!(inner_e(&z, &frame.basis()[j]).unwrap().abs() < 1e-3 * zz);
    }
    let g = frame.gram();
    assert!((g[(0, 1)]).abs() < 1e-3 * g[(0, 0)] && (g[(0, 2)]).abs() < 1e-3 * g[(0, 0)]);
    assert!(frame.condition() < 1e3);
}

#[test]
fn translation_members_are_xi_derivatives_for_constant_fields() {
    let prof = profile2();
    let spec = FieldSpec::from_exprs(2, "0.2", "1.3", &["0.3", "-0.2"]).unwrap();
    let grid = Grid::new(2, 12.0, 65).unwrap();
    let xi = [0.2, -0.1];
    let params = AnsatzParams::new(0.1, &xi, 0.0);
    let z = build_ansatz(&prof, &spec, &params, &grid).unwrap();
    let frame = tangent_frame(&z, &prof, &spec, &params).unwrap();
    let d = 1e-5;
    for j in 0..2 {
        let (mut xp, mut xm) = (xi.to_vec(), xi.to_vec());
        xp[j] += d;
        xm[j] -= d;
        let zp = build_ansatz(&prof, &spec, &AnsatzParams::new(0.1, &xp, 0.0), &grid).unwrap();
        let zm = build_ansatz(&prof, &spec, &AnsatzParams::new(0.1, &xm, 0.0), &grid).unwrap();
        let mut fd = zp.sub(&zm);
        fd.scale(1.0 / (2.0 * d));
        let b = &frame.basis()[j + 1];
        assert!(norm_e(&fd.sub(b)) < 1e-6 * norm_e(b));
    }
}

#[test]
fn projection_is_orthogonal_and_idempotent() {
    let prof = profile2();
    let spec = common::varying_fields();
    let grid = Grid::new(2, 12.0, 65).unwrap();
    let params = AnsatzParams::new(0.2, &[0.5, 0.5], 0.3);
    let z = build_ansatz(&prof, &spec, &params, &grid).unwrap();
    let frame = tangent_frame(&z, &prof, &spec, &params).unwrap();
    let mut rng = common::rng(11);
    for _ in 0..5 {
        let v = common::random_field(&grid, &mut rng, 0.01);
        let pv = project_complement(&v, &frame).unwrap();
        for b in frame.basis() {
            assert!(inner_e(&pv, b).unwrap().abs() <= 1e-10 * norm_e(&v) * norm_e(b));
        }
        let ppv = frame.project_complement(&pv).unwrap();
        assert!(norm_e(&ppv.sub(&pv)) <= 1e-10 * norm_e(&pv));
        // already orthogonal vectors are left alone
        assert!(norm_e(&ppv.sub(&pv)) <= 1e-12 * norm_e(&pv).max(1.0));
    }
    for b in frame.basis() {
        assert!(norm_e(&frame.project_complement(b).unwrap()) <= 1e-10 * norm_e(b));
    }
}

#[test]
fn dependent_members_are_ill_conditioned() {
    let grid = Grid::new(2, 5.0, 33).unwrap();
    let mut rng = common::rng(5);
    let a = common::random_field(&grid, &mut rng, 0.0);
    let err = TangentFrame::from_basis(vec![a.clone(), a.scaled(2.0.into())]).unwrap_err();
    assert!(matches!(err, Error::IllConditioned { .. }));
}
