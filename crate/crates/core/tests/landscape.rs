use nlsred::groundstate::scaling_factors;
use nlsred::landscape::{
    classify_manifold, find_critical_points, lambda_eval, write_points_csv, Convention,
    PointKind, SearchBox, Shape,
};
use nlsred::fields::FieldSpec;
use nlsred::Error;
use proptest::prelude::*;

fn gaussian() -> FieldSpec {
    FieldSpec::from_exprs(2, "exp(-(x1^2+x2^2))", "1", &["0", "0"]).unwrap()
}

fn ring() -> FieldSpec {
    FieldSpec::from_exprs(2, "0.5*exp(-(sqrt(x1^2+x2^2) - 1)^2/0.25)", "1", &["0", "0"]).unwrap()
}

/// `∫|z|^{p+1}` for `z = α U(β x)` in one dimension with `U = √2 sech`,
/// integrated directly on a fine grid, divided by `K⁻¹ ∫U⁴`.
fn substitution_oracle(v: f64, k: f64) -> f64 {
    let alpha = ((1.0 + v) / k).sqrt();
    let beta = (1.0 + v).sqrt();
    let h = 1e-3;
    let integral: f64 = (-40_000..=40_000)
        .map(|i| {
            let x = i as f64 * h;
            let z = alpha * 2f64.sqrt() / (beta * x).cosh();
            z.powi(4) * h
        })
        .sum();
    integral * k / (16.0 / 3.0)
}

#[test]
fn substitution_oracle_selects_derived_exponent() {
    for (v, k) in [(0.0, 2.0), (0.4, 1.3), (-0.3, 0.6), (1.5, 3.0)] {
        let spec = FieldSpec::from_exprs(1, &format!("{v:?}"), &format!("{k:?}"), &["0"]).unwrap();
        let oracle = substitution_oracle(v, k);
        let derived = lambda_eval(&spec, &[0.0], 3.0, Convention::Derived).unwrap().value;
        let literal = lambda_eval(&spec, &[0.0], 3.0, Convention::PaperLiteral).unwrap().value;
        assert!((derived - oracle).abs() < 1e-10 * oracle, "{derived} vs {oracle}");
        if (k - 1.0f64).abs() > 0.1 {
            assert!((literal - oracle).abs() > 1e-2 * oracle);
        }
        // α and β from the library agree with the oracle's
        let (a, b) = scaling_factors(v, k, 3.0).unwrap();
        assert!((a - ((1.0 + v) / k).sqrt()).abs() < 1e-15);
        assert!((b - (1.0 + v).sqrt()).abs() < 1e-15);
    }
    // the two-dimensional example: Λ(0) = 1/2 where K = 2
    let spec = FieldSpec::from_exprs(2, "0", "1 + exp(-(x1^2+x2^2))", &["0", "0"]).unwrap();
    let s = lambda_eval(&spec, &[0.0, 0.0], 3.0, Convention::Derived).unwrap();
    assert!((s.value - 0.5).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn chain_rule_matches_differences(x in prop::array::uniform2(-2.0f64..2.0), p in 2.0f64..4.0) {
        let spec = FieldSpec::from_exprs(
            2,
            "0.6*exp(-(x1^2 + 2*x2^2)) - 0.2*exp(-((x1-1)^2 + x2^2))",
            "1 + 0.4*exp(-((x1+0.5)^2 + (x2-0.3)^2))",
            &["0", "0"],
        ).unwrap();
        let h = 1e-5;
        let s = lambda_eval(&spec, &x, p, Convention::Derived).unwrap();
        let gn = s.gradient.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-3);
        let hn = s.hessian.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-3);
        for i in 0..2 {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            let sa = lambda_eval(&spec, &a, p, Convention::Derived).unwrap();
            let sb = lambda_eval(&spec, &b, p, Convention::Derived).unwrap();
            let fd = (sa.value - sb.value) / (2.0 * h);
            prop_assert!((fd - s.gradient[i]).abs() <= 1e-6 * gn);
            for j in 0..2 {
                let fd = (sa.gradient[j] - sb.gradient[j]) / (2.0 * h);
                prop_assert!((fd - s.hessian[i * 2 + j]).abs() <= 1e-6 * hn);
            }
        }
    }
}

#[test]
fn gaussian_bump_has_single_max() {
    let pts = find_critical_points(&gaussian(), 3.0, Convention::Derived, &SearchBox::cube(2, 1.5), 40, 1e-10).unwrap();
    assert_eq!(pts.len(), 1, "{pts:?}");
    assert_eq!(pts[0].kind, PointKind::Max);
    assert!(pts[0].x.iter().all(|c| c.abs() < 1e-9));
    let m = classify_manifold(&pts, 0.1).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].shape, Shape::Point);
    assert_eq!(m[0].multiplicity_bound, 1);
    assert!(m[0].bott_nondegenerate);
}

#[test]
fn ring_bump_gives_critical_circle() {
    let pts = find_critical_points(&ring(), 3.0, Convention::Derived, &SearchBox::cube(2, 1.4), 60, 1e-10).unwrap();
    let on_ring: Vec<_> = pts.iter().filter(|p| (p.x[0].hypot(p.x[1]) - 1.0).abs() <= 1e-6).cloned().collect();
    assert!(on_ring.len() >= 10, "only {} points on the ring", on_ring.len());
    assert_eq!(on_ring.len(), pts.len(), "stray critical points: {pts:?}");
    let m = classify_manifold(&on_ring, 0.8).unwrap();
    assert_eq!(m.len(), 1);
    let circle = &m[0];
    assert_eq!(circle.shape, Shape::Circle);
    assert!(circle.bott_nondegenerate);
    assert!(circle.normal_eigenvalues[0] < 0.0);
    assert_eq!(circle.multiplicity_bound, 2);
    assert!((circle.shape_params.radius.unwrap() - 1.0).abs() < 1e-7);
}

#[test]
fn flat_fields_are_degenerate() {
    let pts = find_critical_points(&FieldSpec::trivial(2), 3.0, Convention::Derived, &SearchBox::cube(2, 1.0), 5, 1e-10).unwrap();
    assert_eq!(pts.len(), 5);
    assert!(pts.iter().all(|p| p.kind == PointKind::Degenerate && p.residual == 0.0));
}

#[test]
fn two_minima_give_two_manifolds() {
    let spec = FieldSpec::from_exprs(
        2,
        "-0.5*exp(-((x1-1.5)^2 + x2^2)) - 0.5*exp(-((x1+1.5)^2 + x2^2))",
        "1",
        &["0", "0"],
    )
    .unwrap();
    let pts = find_critical_points(&spec, 3.0, Convention::Derived, &SearchBox::cube(2, 2.5), 80, 1e-10).unwrap();
    let mins: Vec<_> = pts.iter().filter(|p| p.kind == PointKind::Min).cloned().collect();
    assert_eq!(mins.len(), 2);
    let m = classify_manifold(&mins, 0.1).unwrap();
    assert_eq!(m.len(), 2);
    assert!(m.iter().all(|c| c.shape == Shape::Point && c.multiplicity_bound == 1));
}

#[test]
fn k_one_critical_points_are_those_of_v() {
    let spec = FieldSpec::from_exprs(2, "0.8*exp(-((x1-0.4)^2 + 2*(x2+0.2)^2))", "1", &["0", "0"]).unwrap();
    let pts = find_critical_points(&spec, 3.0, Convention::Derived, &SearchBox::cube(2, 1.5), 30, 1e-11).unwrap();
    assert_eq!(pts.len(), 1);
    assert!((pts[0].x[0] - 0.4).abs() < 1e-10 && (pts[0].x[1] + 0.2).abs() < 1e-10);
}

#[test]
fn scaling_k_leaves_critical_set() {
    let spec = FieldSpec::from_exprs(2, "0.3*exp(-(x1^2+x2^2))", "1 + 0.5*exp(-((x1-0.5)^2 + x2^2))", &["0", "0"]).unwrap();
    let bx = SearchBox::cube(2, 1.5);
    let a = find_critical_points(&spec, 3.0, Convention::Derived, &bx, 40, 1e-11).unwrap();
    let b = find_critical_points(&spec.with_scaled_k(3.7).unwrap(), 3.0, Convention::Derived, &bx, 40, 1e-11).unwrap();
    let ma = classify_manifold(&a, 1e-6).unwrap();
    let mb = classify_manifold(&b, 1e-6).unwrap();
    assert_eq!(ma.len(), mb.len());
    for (x, y) in ma.iter().zip(&mb) {
        let d = x.shape_params.center.iter().zip(&y.shape_params.center).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(d < 1e-9);
    }
}

#[test]
fn scattered_cluster_is_ambiguous() {
    let mut pts = find_critical_points(&ring(), 3.0, Convention::Derived, &SearchBox::cube(2, 1.4), 40, 1e-10).unwrap();
    pts[0].x = vec![0.2, 0.1];
    pts[1].x[0] += 0.05;
    assert!(matches!(classify_manifold(&pts, 3.0), Err(Error::ClusterAmbiguous { .. })));
}

#[test]
fn csv_has_frozen_columns() {
    let pts = find_critical_points(&gaussian(), 3.0, Convention::Derived, &SearchBox::cube(2, 1.0), 4, 1e-10).unwrap();
    let mut buf = Vec::new();
    write_points_csv(&pts, 2, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x1,x2,value,kind,eig1,eig2,residual\n"));
    assert!(text.lines().nth(1).unwrap().contains(",max,"));
}
