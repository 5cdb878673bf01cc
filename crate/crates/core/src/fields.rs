//! The coefficient triple `(V, K, A)` with symbolic derivatives, built-in
//! families, JSON blocks and a sampled check of the standing hypotheses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::FieldExpr;

/// Where a field came from, kept for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Provenance {
    Expr { expr: String },
    Components { components: Vec<String> },
    Family { family: String, params: Value },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    dim: usize,
    v: FieldExpr,
    k: FieldExpr,
    a: Vec<FieldExpr>,
    provenance: [Provenance; 3],
}

/// Everything the solver needs from the fields at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub v: f64,
    pub grad_v: DVector<f64>,
    pub hess_v: DMatrix<f64>,
    pub k: f64,
    pub grad_k: DVector<f64>,
    pub hess_k: DMatrix<f64>,
    pub a: DVector<f64>,
    /// `jac_a[(i, j)] = ∂A_i/∂x_j`
    pub jac_a: DMatrix<f64>,
    pub div_a: f64,
}

fn fmt_num(v: f64) -> String {
    if v < 0.0 {
        format!("({v:?})")
    } else {
        format!("{v:?}")
    }
}

fn squared_distance(center: &[f64], dim: usize) -> String {
    (0..dim)
        .map(|i| {
            let c = center.get(i).copied().unwrap_or(0.0);
            if c == 0.0 {
                format!("x{}^2", i + 1)
            } else {
                format!("(x{} - {})^2", i + 1, fmt_num(c))
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorConstantParams {
    value: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianParams {
    amplitude: f64,
    #[serde(default)]
    center: Vec<f64>,
    width: f64,
    /// Added to the bump, e.g. `1` turns a bump in `K` into `1 + bump`.
    #[serde(default)]
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RingParams {
    amplitude: f64,
    #[serde(default)]
    center: Vec<f64>,
    radius: f64,
    width: f64,
    #[serde(default)]
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaugeParams {
    strength: f64,
}

fn bad_params(family: &str, err: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("bad parameters for family `{family}`: {err}"))
}

/// Expression text for a built-in scalar family.
pub fn scalar_family(family: &str, params: &Value, dim: usize) -> Result<String> {
    let text = match family {
        "constant" => {
            let p: ConstantParams =
                serde_json::from_value(params.clone()).map_err(|e| bad_params(family, e))?;
            fmt_num(p.value)
        }
        "gaussian" => {
            let p: GaussianParams =
                serde_json::from_value(params.clone()).map_err(|e| bad_params(family, e))?;
            if !(p.width > 0.0) {
                return Err(bad_params(family, "width must be positive"));
            }
            format!(
                "{} + {} * exp(-({}) / {})",
                fmt_num(p.offset),
                fmt_num(p.amplitude),
                squared_distance(&p.center, dim),
                fmt_num(p.width * p.width)
            )
        }
        "ring" => {
            let p: RingParams =
                serde_json::from_value(params.clone()).map_err(|e| bad_params(family, e))?;
            if !(p.width > 0.0) || !(p.radius > 0.0) {
                return Err(bad_params(family, "radius and width must be positive"));
            }
            format!(
                "{} + {} * exp(-(sqrt({}) - {})^2 / {})",
                fmt_num(p.offset),
                fmt_num(p.amplitude),
                squared_distance(&p.center, dim),
                fmt_num(p.radius),
                fmt_num(p.width * p.width)
            )
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown scalar family `{other}`"
            )))
        }
    };
    Ok(text)
}

/// Component texts for a built-in vector-potential family.
pub fn vector_family(family: &str, params: &Value, dim: usize) -> Result<Vec<String>> {
    match family {
        "constant" => {
            let p: VectorConstantParams =
                serde_json::from_value(params.clone()).map_err(|e| bad_params(family, e))?;
            if p.value.len() != dim {
                return Err(bad_params(family, format!("need {dim} components")));
            }
            Ok(p.value.iter().map(|&v| fmt_num(v)).collect())
        }
        "linear_gauge" => {
            let p: GaugeParams =
                serde_json::from_value(params.clone()).map_err(|e| bad_params(family, e))?;
            if dim < 2 {
                return Err(bad_params(family, "needs dimension at least 2"));
            }
            let half = 0.5 * p.strength;
            let mut comps = vec![
                format!("{} * x2", fmt_num(-half)),
                format!("{} * x1", fmt_num(half)),
            ];
            comps.extend((2..dim).map(|_| "0".to_string()));
            Ok(comps)
        }
        other => Err(Error::InvalidInput(format!(
            "unknown vector family `{other}`"
        ))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ScalarBlock {
    Expr { expr: String },
    Family { family: String, params: Value },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum VectorBlock {
    Components { components: Vec<String> },
    Family { family: String, params: Value },
}

/// JSON field block: `{"V": .., "K": .., "A": ..}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsBlock {
    #[serde(rename = "V")]
    pub v: ScalarBlock,
    #[serde(rename = "K")]
    pub k: ScalarBlock,
    #[serde(rename = "A")]
    pub a: VectorBlock,
}

impl ScalarBlock {
    fn build(&self, dim: usize) -> Result<(FieldExpr, Provenance)> {
        match self {
            ScalarBlock::Expr { expr } => Ok((
                FieldExpr::parse(expr, dim)?,
                Provenance::Expr { expr: expr.clone() },
            )),
            ScalarBlock::Family { family, params } => {
                let text = scalar_family(family, params, dim)?;
                Ok((
                    FieldExpr::parse(&text, dim)?,
                    Provenance::Family {
                        family: family.clone(),
                        params: params.clone(),
                    },
                ))
            }
        }
    }
}

impl VectorBlock {
    fn build(&self, dim: usize) -> Result<(Vec<FieldExpr>, Provenance)> {
        let (texts, prov) = match self {
            VectorBlock::Components { components } => (
                components.clone(),
                Provenance::Components {
                    components: components.clone(),
                },
            ),
            VectorBlock::Family { family, params } => (
                vector_family(family, params, dim)?,
                Provenance::Family {
                    family: family.clone(),
                    params: params.clone(),
                },
            ),
        };
        if texts.len() != dim {
            return Err(Error::InvalidInput(format!(
                "A needs {dim} components, got {}",
                texts.len()
            )));
        }
        let comps = texts
            .iter()
            .map(|t| FieldExpr::parse(t, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok((comps, prov))
    }
}

impl FieldsBlock {
    pub fn build(&self, dim: usize) -> Result<FieldSpec> {
        let (v, pv) = self.v.build(dim)?;
        let (k, pk) = self.k.build(dim)?;
        let (a, pa) = self.a.build(dim)?;
        Ok(FieldSpec {
            dim,
            v,
            k,
            a,
            provenance: [pv, pk, pa],
        })
    }
}

impl FieldSpec {
    /// Fields from expression texts.
    pub fn from_exprs(dim: usize, v: &str, k: &str, a: &[&str]) -> Result<FieldSpec> {
        FieldsBlock {
            v: ScalarBlock::Expr { expr: v.into() },
            k: ScalarBlock::Expr { expr: k.into() },
            a: VectorBlock::Components {
                components: a.iter().map(|s| s.to_string()).collect(),
            },
        }
        .build(dim)
    }

    /// `V ≡ 0`, `K ≡ 1`, `A ≡ 0`.
    pub fn trivial(dim: usize) -> FieldSpec {
        let zeros = vec!["0"; dim];
        FieldSpec::from_exprs(dim, "0", "1", &zeros).expect("constant fields parse")
    }

    /// Same `V` and `K`, with `A` replaced.
    pub fn with_potential(&self, components: &[&str]) -> Result<FieldSpec> {
        let (a, pa) = VectorBlock::Components {
            components: components.iter().map(|s| s.to_string()).collect(),
        }
        .build(self.dim)?;
        let mut out = self.clone();
        out.a = a;
        out.provenance[2] = pa;
        Ok(out)
    }

    /// Same fields with `K` multiplied by a positive constant.
    pub fn with_scaled_k(&self, factor: f64) -> Result<FieldSpec> {
        let text = format!("{} * ({})", fmt_num(factor), self.k);
        let mut out = self.clone();
        out.k = FieldExpr::parse(&text, self.dim)?;
        out.provenance[1] = Provenance::Expr { expr: text };
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn v(&self) -> &FieldExpr {
        &self.v
    }

    pub fn k(&self) -> &FieldExpr {
        &self.k
    }

    pub fn a(&self) -> &[FieldExpr] {
        &self.a
    }

    pub fn provenance(&self) -> &[Provenance; 3] {
        &self.provenance
    }

    /// True if `V`, `K` and `A` are all constant.
    pub fn is_frozen(&self) -> bool {
        self.v.is_constant() && self.k.is_constant() && self.a.iter().all(|c| c.is_constant())
    }

    /// `(V, K, A)` values without derivatives.
    pub fn values_at(&self, x: &[f64]) -> (f64, f64, Vec<f64>) {
        (
            self.v.value(x),
            self.k.value(x),
            self.a.iter().map(|c| c.value(x)).collect(),
        )
    }

    pub fn potential_at(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|c| c.value(x)).collect()
    }

    /// Values and derivatives at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<FieldSample> {
        let n = self.dim;
        if x.len() != n || x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("bad evaluation point {x:?}")));
        }
        let mut jac = DMatrix::zeros(n, n);
        for (i, comp) in self.a.iter().enumerate() {
            for (j, g) in comp.gradient(x).into_iter().enumerate() {
                jac[(i, j)] = g;
            }
        }
        let sample = FieldSample {
            v: self.v.value(x),
            grad_v: DVector::from_vec(self.v.gradient(x)),
            hess_v: DMatrix::from_row_slice(n, n, &self.v.hessian(x)),
            k: self.k.value(x),
            grad_k: DVector::from_vec(self.k.gradient(x)),
            hess_k: DMatrix::from_row_slice(n, n, &self.k.hessian(x)),
            a: DVector::from_vec(self.potential_at(x)),
            div_a: jac.trace(),
            jac_a: jac,
        };
        let finite = sample.v.is_finite()
            && sample.k.is_finite()
            && sample.div_a.is_finite()
            && sample.grad_v.iter().all(|c| c.is_finite())
            && sample.hess_v.iter().all(|c| c.is_finite())
            && sample.grad_k.iter().all(|c| c.is_finite())
            && sample.hess_k.iter().all(|c| c.is_finite())
            && sample.a.iter().all(|c| c.is_finite())
            && sample.jac_a.iter().all(|c| c.is_finite());
        if !finite {
            return Err(Error::Domain(format!(
                "field or derivative not finite at {x:?}"
            )));
        }
        Ok(sample)
    }
}

/// Sampled bounds behind the hypotheses on `V`, `K` and `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub box_half_width: f64,
    pub samples_per_axis: usize,
    pub inf_one_plus_v: f64,
    pub sup_abs_v: f64,
    pub sup_hess_v: f64,
    pub inf_k: f64,
    pub sup_abs_k: f64,
    pub sup_hess_k: f64,
    pub sup_abs_a: f64,
    pub sup_jac_a: f64,
    /// Points where some value or derivative was not finite.
    pub non_finite_samples: usize,
    pub v1: bool,
    pub k1: bool,
    pub a1: bool,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.v1 && self.k1 && self.a1
    }
}

/// Samples the fields on a tensor grid over `[-L, L]^n` and reports the
/// bounds. Matrix sizes are Frobenius norms.
pub fn check_hypotheses(
    spec: &FieldSpec,
    box_half_width: f64,
    samples_per_axis: usize,
) -> HypothesisReport {
    let n = spec.dim();
    let s = samples_per_axis.max(2);
    let total = s.pow(n as u32);
    let mut rep = HypothesisReport {
        box_half_width,
        samples_per_axis: s,
        inf_one_plus_v: f64::INFINITY,
        sup_abs_v: 0.0,
        sup_hess_v: 0.0,
        inf_k: f64::INFINITY,
        sup_abs_k: 0.0,
        sup_hess_k: 0.0,
        sup_abs_a: 0.0,
        sup_jac_a: 0.0,
        non_finite_samples: 0,
        v1: false,
        k1: false,
        a1: false,
    };
    let mut bad_v = false;
    let mut bad_k = false;
    let mut bad_a = false;
    let mut x = vec![0.0; n];
    for idx in 0..total {
        let mut rem = idx;
        for c in x.iter_mut() {
            let k = rem % s;
            rem /= s;
            *c = -box_half_width + 2.0 * box_half_width * k as f64 / (s - 1) as f64;
        }
        let v = spec.v.value(&x);
        let hv = spec.v.hessian(&x).iter().map(|h| h * h).sum::<f64>().sqrt();
        let k = spec.k.value(&x);
        let hk = spec.k.hessian(&x).iter().map(|h| h * h).sum::<f64>().sqrt();
        let a = spec.potential_at(&x);
        let abs_a = a.iter().map(|c| c * c).sum::<f64>().sqrt();
        let jac = spec
            .a
            .iter()
            .flat_map(|c| c.gradient(&x))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        let v_ok = v.is_finite() && hv.is_finite();
        let k_ok = k.is_finite() && hk.is_finite();
        let a_ok = abs_a.is_finite() && jac.is_finite();
        if !(v_ok && k_ok && a_ok) {
            rep.non_finite_samples += 1;
        }
        bad_v |= !v_ok;
        bad_k |= !k_ok;
        bad_a |= !a_ok;
        if v_ok {
            rep.inf_one_plus_v = rep.inf_one_plus_v.min(1.0 + v);
            rep.sup_abs_v = rep.sup_abs_v.max(v.abs());
            rep.sup_hess_v = rep.sup_hess_v.max(hv);
        }
        if k_ok {
            rep.inf_k = rep.inf_k.min(k);
            rep.sup_abs_k = rep.sup_abs_k.max(k.abs());
            rep.sup_hess_k = rep.sup_hess_k.max(hk);
        }
        if a_ok {
            rep.sup_abs_a = rep.sup_abs_a.max(abs_a);
            rep.sup_jac_a = rep.sup_jac_a.max(jac);
        }
    }
    rep.v1 = !bad_v && rep.inf_one_plus_v > 0.0;
    rep.k1 = !bad_k && rep.inf_k > 0.0;
    rep.a1 = !bad_a;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn constant_potential_has_zero_jacobian() {
        let spec = FieldSpec::from_exprs(2, "0", "1", &["0.3", "-0.2"]).unwrap();
        let s = spec.eval(&[0.7, -1.1]).unwrap();
        assert_eq!(s.jac_a, DMatrix::zeros(2, 2));
        assert_eq!(s.div_a, 0.0);
        assert_eq!(s.a.as_slice(), &[0.3, -0.2]);
    }

    #[test]
    fn linear_gauge_jacobian() {
        let block: FieldsBlock = serde_json::from_value(json!({
            "V": {"family": "constant", "params": {"value": 0.0}},
            "K": {"family": "constant", "params": {"value": 1.0}},
            "A": {"family": "linear_gauge", "params": {"strength": 1.0}}
        }))
        .unwrap();
        let spec = block.build(2).unwrap();
        let s = spec.eval(&[0.4, 2.0]).unwrap();
        assert_eq!(s.div_a, 0.0);
        assert_eq!(s.jac_a[(0, 1)], -0.5);
        assert_eq!(s.jac_a[(1, 0)], 0.5);
        assert_eq!(s.jac_a[(0, 0)], 0.0);
        assert_eq!(s.a.as_slice(), &[-1.0, 0.2]);
    }

    #[test]
    fn gaussian_v_at_origin() {
        let spec = FieldSpec::from_exprs(2, "exp(-(x1^2+x2^2))", "1", &["0", "0"]).unwrap();
        let s = spec.eval(&[0.0, 0.0]).unwrap();
        assert_eq!(s.v, 1.0);
        assert_eq!(s.grad_v.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.hess_v, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -2.0]));
    }

    #[test]
    fn family_matches_expression() {
        let text = scalar_family(
            "gaussian",
            &json!({"amplitude": 0.5, "center": [0.25, -1.0], "width": 0.8}),
            2,
        )
        .unwrap();
        let fam = FieldExpr::parse(&text, 2).unwrap();
        let x = [0.1, 0.3];
        let direct = 0.5 * (-((0.1f64 - 0.25).powi(2) + 1.3f64.powi(2)) / 0.64).exp();
        assert!((fam.value(&x) - direct).abs() < 1e-15);

        let ring = scalar_family("ring", &json!({"amplitude": 1.0, "radius": 1.0, "width": 0.5}), 2).unwrap();
        let ring = FieldExpr::parse(&ring, 2).unwrap();
        assert!((ring.value(&[0.6, 0.8]) - 1.0).abs() < 1e-15);
        assert!(ring.gradient(&[0.6, 0.8]).iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn unknown_family_and_keys_rejected() {
        assert!(scalar_family("bessel", &json!({}), 2).is_err());
        assert!(scalar_family("gaussian", &json!({"amplitude": 1.0, "width": 1.0, "sigma": 2.0}), 2).is_err());
        let bad: std::result::Result<FieldsBlock, _> = serde_json::from_value(json!({
            "V": {"expr": "0"}, "K": {"expr": "1"}, "A": {"components": ["0", "0"]}, "B": 1
        }));
        assert!(bad.is_err());
    }

    #[test]
    fn hypotheses_trivial_pass() {
        let rep = check_hypotheses(&FieldSpec::trivial(2), 3.0, 11);
        assert!(rep.all_pass());
        assert_eq!(rep.inf_one_plus_v, 1.0);
    }

    #[test]
    fn hypotheses_failures() {
        let spec = FieldSpec::from_exprs(2, "-1", "1", &["0", "0"]).unwrap();
        let rep = check_hypotheses(&spec, 2.0, 5);
        assert!(!rep.v1);
        assert_eq!(rep.inf_one_plus_v, 0.0);
        assert!(rep.k1 && rep.a1);

        let spec = FieldSpec::from_exprs(2, "0", "tanh(x1)", &["0", "0"]).unwrap();
        let rep = check_hypotheses(&spec, 2.0, 6);
        assert!(!rep.k1);
        assert!(rep.inf_k <= 0.0);
    }

    #[test]
    fn domain_error_on_non_finite() {
        let spec = FieldSpec::from_exprs(1, "sqrt(x1)", "1", &["0"]).unwrap();
        assert!(matches!(spec.eval(&[-1.0]), Err(Error::Domain(_))));
    }
}
