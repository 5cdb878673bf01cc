//! MINRES and Lanczos for operators that are symmetric in a caller-supplied
//! inner product.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ComplexField;

/// Real vector space operations needed by the solvers.
pub trait KrylovVector: Clone + Sync + Send {
    /// `self += a·x`
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale(&mut self, a: f64);
}

impl KrylovVector for ComplexField {
    fn axpy(&mut self, a: f64, x: &Self) {
        ComplexField::axpy(self, a, x)
    }

    fn scale(&mut self, a: f64) {
        ComplexField::scale(self, a)
    }
}

impl KrylovVector for Vec<f64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += a * v;
        }
    }

    fn scale(&mut self, a: f64) {
        for s in self.iter_mut() {
            *s *= a;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Residual norm estimate at exit.
    pub residual: f64,
}

/// Solves `A x = b` by MINRES from the initial guess `x`, stopping when the
/// residual norm drops to `tol`.
pub fn minres<V, A, I>(
    apply: A,
    inner: I,
    b: &V,
    x: &mut V,
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats>
where
    V: KrylovVector,
    A: Fn(&V) -> Result<V>,
    I: Fn(&V, &V) -> f64,
{
    let mut r1 = b.clone();
    r1.axpy(-1.0, &apply(x)?);
    let beta1 = inner(&r1, &r1).max(0.0).sqrt();
    if beta1 <= tol {
        return Ok(SolveStats {
            iterations: 0,
            residual: beta1,
        });
    }
    let mut y = r1.clone();
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w: Option<V> = None;
    let mut w2: Option<V> = None;

    for itn in 1..=max_iter {
        let mut v = y.clone();
        v.scale(1.0 / beta);
        y = apply(&v)?;
        if itn >= 2 {
            y.axpy(-beta / oldb, &r1);
        }
        let alfa = inner(&v, &y);
        y.axpy(-alfa / beta, &r2);
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = inner(&r2, &r2).max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        // w = (v - oldeps·w1 - delta·w2) / gamma
        let mut wn = v;
        if let Some(w1) = &w2 {
            wn.axpy(-oldeps, w1);
        }
        if let Some(wp) = &w {
            wn.axpy(-delta, wp);
        }
        wn.scale(1.0 / gamma);
        x.axpy(phi, &wn);
        w2 = w.take();
        w = Some(wn);

        if phibar.abs() <= tol || beta == 0.0 {
            return Ok(SolveStats {
                iterations: itn,
                residual: phibar.abs(),
            });
        }
    }
    Err(Error::LinearSolveFailure {
        iterations: max_iter,
        residual: phibar.abs(),
    })
}

/// Ritz pairs from a Lanczos run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RitzValues {
    /// Ascending.
    pub values: Vec<f64>,
    /// Residual bounds `|β_k s_{k,i}|`.
    pub residuals: Vec<f64>,
    pub steps: usize,
}

impl RitzValues {
    /// Smallest `|θ|` among Ritz values whose residual bound is at most `tol`.
    pub fn smallest_converged_abs(&self, tol: f64) -> Option<f64> {
        self.values
            .iter()
            .zip(&self.residuals)
            .filter(|(_, r)| **r <= tol)
            .map(|(t, _)| t.abs())
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// `steps` Lanczos iterations with full reorthogonalisation from `start`.
pub fn lanczos<V, A, I>(apply: A, inner: I, start: &V, steps: usize) -> Result<RitzValues>
where
    V: KrylovVector,
    A: Fn(&V) -> Result<V>,
    I: Fn(&V, &V) -> f64,
{
    let nrm = inner(start, start).sqrt();
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(Error::EigenSolveFailure("zero start vector".into()));
    }
    let mut q = start.clone();
    q.scale(1.0 / nrm);
    let mut basis = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last_beta = 0.0;
    for k in 0..steps {
        let mut w = apply(&basis[k])?;
        let a = inner(&basis[k], &w);
        alpha.push(a);
        // two passes of classical Gram–Schmidt against every basis vector
        for _ in 0..2 {
            for b in &basis {
                let c = inner(b, &w);
                w.axpy(-c, b);
            }
        }
        last_beta = inner(&w, &w).max(0.0).sqrt();
        if !last_beta.is_finite() {
            return Err(Error::EigenSolveFailure("non-finite Lanczos coefficient".into()));
        }
        if k + 1 == steps || last_beta <= 1e-14 * a.abs().max(1.0) {
            break;
        }
        beta.push(last_beta);
        w.scale(1.0 / last_beta);
        basis.push(w);
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], (last_beta * eig.eigenvectors[(m - 1, i)]).abs()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(RitzValues {
        values: pairs.iter().map(|p| p.0).collect(),
        residuals: pairs.iter().map(|p| p.1).collect(),
        steps: m,
    })
}
