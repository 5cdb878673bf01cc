//! The approximate solutions `z = e^{iσ + iA(εξ)·x} α U(β|x - ξ|)`, their
//! tangent frame and the projector onto its `E`-orthogonal complement.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::inner_e;
use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::grid::{ComplexField, Grid};
use crate::groundstate::{scaling_factors, RadialProfile};

/// Decay lengths `1/β` required between the centre and the box faces.
pub const DECAY_MARGIN: f64 = 12.0;

/// Largest accepted condition number of the Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    pub eps: f64,
    pub xi: Vec<f64>,
    pub sigma: f64,
}

impl AnsatzParams {
    pub fn new(eps: f64, xi: &[f64], sigma: f64) -> AnsatzParams {
        AnsatzParams {
            eps,
            xi: xi.to_vec(),
            sigma,
        }
    }

    /// `εξ`
    pub fn slow_point(&self) -> Vec<f64> {
        self.xi.iter().map(|c| self.eps * c).collect()
    }
}

/// Frozen coefficients at `εξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenData {
    pub alpha: f64,
    pub beta: f64,
    pub potential: Vec<f64>,
}

pub fn frozen_data(spec: &FieldSpec, p: f64, params: &AnsatzParams) -> Result<FrozenData> {
    if params.xi.len() != spec.dim() {
        return Err(Error::InvalidInput("ξ has the wrong dimension".into()));
    }
    if !(params.eps > 0.0) {
        return Err(Error::InvalidInput(format!("need eps > 0, got {}", params.eps)));
    }
    let y = params.slow_point();
    let (v, k, a) = spec.values_at(&y);
    let (alpha, beta) = scaling_factors(v, k, p)?;
    if a.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain(format!("A not finite at {y:?}")));
    }
    Ok(FrozenData {
        alpha,
        beta,
        potential: a,
    })
}

fn check_margin(grid: &Grid, params: &AnsatzParams, beta: f64) -> Result<()> {
    if grid.dim() != params.xi.len() {
        return Err(Error::InvalidInput("ξ and grid differ in dimension".into()));
    }
    let margin = grid.margin(&params.xi) * beta;
    if margin < DECAY_MARGIN {
        return Err(Error::OutOfBox {
            centre: params.xi.clone(),
            margin,
        });
    }
    Ok(())
}

/// Phase and radial data at a node.
fn pieces(x: &[f64], params: &AnsatzParams, fr: &FrozenData) -> (Complex64, Vec<f64>, f64) {
    let phase = params.sigma + fr.potential.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    let d: Vec<f64> = x.iter().zip(&params.xi).map(|(a, b)| a - b).collect();
    let r = d.iter().map(|c| c * c).sum::<f64>().sqrt();
    (Complex64::from_polar(1.0, phase), d, r)
}

pub fn build_ansatz(
    profile: &RadialProfile,
    spec: &FieldSpec,
    params: &AnsatzParams,
    grid: &Grid,
) -> Result<ComplexField> {
    let fr = frozen_data(spec, profile.exponent(), params)?;
    check_margin(grid, params, fr.beta)?;
    Ok(ComplexField::from_fn(grid, |x| {
        let (e, _, r) = pieces(x, params, &fr);
        e * (fr.alpha * profile.value(fr.beta * r))
    }))
}

/// `{iz, -∂_{x_j} z + i A_j(εξ) z}` with its `E`-Gram matrix.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    basis: Vec<ComplexField>,
    gram: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    condition: f64,
}

impl TangentFrame {
    /// Frame from arbitrary members, e.g. for a refined solution.
    pub fn from_basis(basis: Vec<ComplexField>) -> Result<TangentFrame> {
        let k = basis.len();
        let mut gram = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let g = inner_e(&basis[i], &basis[j])?;
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(0.0, f64::max);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_GRAM_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        let factor = Cholesky::new(gram.clone()).ok_or(Error::IllConditioned { condition })?;
        Ok(TangentFrame {
            basis,
            gram,
            factor,
            condition,
        })
    }

    pub fn basis(&self) -> &[ComplexField] {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Coefficients of the `E`-orthogonal projection of `v` onto the span.
    pub fn coefficients(&self, v: &ComplexField) -> Result<DVector<f64>> {
        let rhs = self
            .basis
            .iter()
            .map(|b| inner_e(b, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.factor.solve(&DVector::from_vec(rhs)))
    }

    /// `Pv = v - Σ c_k b_k`, applied twice for round-off.
    pub fn project_complement(&self, v: &ComplexField) -> Result<ComplexField> {
        let mut out = v.clone();
        for _ in 0..2 {
            let c = self.coefficients(&out)?;
            for (ck, b) in c.iter().zip(&self.basis) {
                out.axpy(-ck, b);
            }
        }
        Ok(out)
    }
}

pub fn tangent_frame(
    z: &ComplexField,
    profile: &RadialProfile,
    spec: &FieldSpec,
    params: &AnsatzParams,
) -> Result<TangentFrame> {
    let fr = frozen_data(spec, profile.exponent(), params)?;
    check_margin(z.grid(), params, fr.beta)?;
    let n = spec.dim();
    let mut basis = vec![z.times_i()];
    for j in 0..n {
        // -∂_j z + i A_j z = -e^{iφ} α β U'(βr) (x_j - ξ_j)/r
        basis.push(ComplexField::from_fn(z.grid(), |x| {
            let (e, d, r) = pieces(x, params, &fr);
            if r == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            -e * (fr.alpha * fr.beta * profile.derivative(fr.beta * r) * d[j] / r)
        }));
    }
    TangentFrame::from_basis(basis)
}

pub fn project_complement(v: &ComplexField, frame: &TangentFrame) -> Result<ComplexField> {
    frame.project_complement(v)
}
