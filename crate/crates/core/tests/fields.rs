use nlsred::expr::parse_expr;
use nlsred::fields::FieldSpec;
use proptest::prelude::*;

const STEP: f64 = 1e-5;

fn test_fields() -> Vec<FieldSpec> {
    vec![
        FieldSpec::from_exprs(
            2,
            "0.5*exp(-((x1-0.3)^2 + x2^2)/0.7) + 0.1*sin(x1)*cos(2*x2)",
            "1 + 0.3*tanh(x1 - x2)^2",
            &["-0.5*x2 + 0.1*x1^2", "0.5*x1*cos(x2)"],
        )
        .unwrap(),
        FieldSpec::from_exprs(
            3,
            "sqrt(1 + x1^2 + x2^2 + x3^2) - 1",
            "2/(1 + 0.2*x3^2)",
            &["exp(-x1^2)", "x1*x3", "0.3"],
        )
        .unwrap(),
        FieldSpec::from_exprs(1, "(1 + x1^2)^(-1.5)", "1 + 0.5*exp(-x1^2)", &["sin(x1)"]).unwrap(),
    ]
}

fn central_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += STEP;
            b[i] -= STEP;
            (f(&a) - f(&b)) / (2.0 * STEP)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
    d / s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn symbolic_gradient_matches_differences(x in prop::array::uniform3(-2.0f64..2.0)) {
        for spec in test_fields() {
            let x = &x[..spec.dim()];
            let scalars = [spec.v(), spec.k()];
            for f in scalars.into_iter().chain(spec.a()) {
                let fd = central_gradient(&|y| f.value(y), x);
                prop_assert!(rel_err(&f.gradient(x), &fd) <= 1e-6, "{} at {:?}", f, x);
            }
        }
    }

    #[test]
    fn symbolic_hessian_matches_differences(x in prop::array::uniform3(-2.0f64..2.0)) {
        for spec in test_fields() {
            let n = spec.dim();
            let x = &x[..n];
            for f in [spec.v(), spec.k()] {
                let h = f.hessian(x);
                for i in 0..n {
                    let row = central_gradient(&|y| f.gradient(y)[i], x);
                    prop_assert!(rel_err(&h[i * n..(i + 1) * n], &row) <= 1e-4);
                    for j in 0..n {
                        prop_assert_eq!(h[i * n + j], h[j * n + i]);
                        prop_assert!(std::ptr::eq(f.hessian_expr(i, j), f.hessian_expr(j, i)));
                    }
                }
            }
        }
    }

    #[test]
    fn divergence_is_jacobian_trace(x in prop::array::uniform3(-2.0f64..2.0)) {
        for spec in test_fields() {
            let s = spec.eval(&x[..spec.dim()]).unwrap();
            prop_assert_eq!(s.div_a, s.jac_a.trace());
        }
    }

    #[test]
    fn printed_expressions_reparse(x in prop::array::uniform3(-2.0f64..2.0)) {
        for spec in test_fields() {
            let n = spec.dim();
            for f in [spec.v(), spec.k()] {
                let again = parse_expr(&f.to_string(), n).unwrap();
                prop_assert_eq!(&again, f.expr());
                prop_assert_eq!(again.eval(&x[..n]), f.value(&x[..n]));
            }
        }
    }
}
