//! The auxiliary function `Λ = (1+V)^θ K^{-2/(p-1)}`, its critical points and
//! the critical manifolds they form.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::groundstate::Moments;

/// Which form of `Λ` and `C₀` is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `Λ = (1+V)^θ K^{-2/(p-1)}` and `C₀ = ∫U^{p+1}`, which is what the change
    /// of variables in `∫|z|^{p+1}` produces.
    #[default]
    Derived,
    /// `Λ = (1+V)^θ K^{+2/(p-1)}` and `C₀ = ‖U‖_{L²}`, kept for comparison.
    PaperLiteral,
}

impl Convention {
    pub fn name(self) -> &'static str {
        match self {
            Convention::Derived => "derived",
            Convention::PaperLiteral => "paper-literal",
        }
    }

    /// Exponent of `K` in `Λ`.
    pub fn k_exponent(self, p: f64) -> f64 {
        match self {
            Convention::Derived => -2.0 / (p - 1.0),
            Convention::PaperLiteral => 2.0 / (p - 1.0),
        }
    }

    /// `C₀` from the profile moments.
    pub fn c0(self, moments: &Moments) -> f64 {
        match self {
            Convention::Derived => moments.nonlinear_mass,
            Convention::PaperLiteral => moments.mass.sqrt(),
        }
    }

    /// `C₁ = (1/2 - 1/(p+1)) C₀`.
    pub fn c1(self, moments: &Moments, p: f64) -> f64 {
        (0.5 - 1.0 / (p + 1.0)) * self.c0(moments)
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Convention> {
        match s {
            "derived" => Ok(Convention::Derived),
            "paper-literal" => Ok(Convention::PaperLiteral),
            other => Err(Error::InvalidInput(format!("unknown convention `{other}`"))),
        }
    }
}

/// `θ = (p+1)/(p-1) - n/2`.
pub fn theta(dim: usize, p: f64) -> f64 {
    (p + 1.0) / (p - 1.0) - dim as f64 / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSample {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major.
    pub hessian: Vec<f64>,
}

/// `Λ`, `∇Λ` and `Λ''` at `x` by the chain rule through `log Λ`.
pub fn lambda_eval(spec: &FieldSpec, x: &[f64], p: f64, conv: Convention) -> Result<LambdaSample> {
    let n = spec.dim();
    let s = spec.eval(x)?;
    let a = 1.0 + s.v;
    if !(a > 0.0) || !(s.k > 0.0) {
        return Err(Error::Domain(format!(
            "1+V = {a} and K = {} must be positive at {x:?}",
            s.k
        )));
    }
    let th = theta(n, p);
    let kap = conv.k_exponent(p);
    let value = (th * a.ln() + kap * s.k.ln()).exp();
    // g = log Λ
    let dg: DVector<f64> = &s.grad_v * (th / a) + &s.grad_k * (kap / s.k);
    let hg: DMatrix<f64> = (&s.hess_v / a - &s.grad_v * s.grad_v.transpose() / (a * a)) * th
        + (&s.hess_k / s.k - &s.grad_k * s.grad_k.transpose() / (s.k * s.k)) * kap;
    let grad = &dg * value;
    let hess = (hg + &dg * dg.transpose()) * value;
    Ok(LambdaSample {
        x: x.to_vec(),
        value,
        gradient: grad.as_slice().to_vec(),
        hessian: hess.transpose().as_slice().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Min,
    Max,
    Saddle,
    Degenerate,
}

impl PointKind {
    pub fn name(self) -> &'static str {
        match self {
            PointKind::Min => "min",
            PointKind::Max => "max",
            PointKind::Saddle => "saddle",
            PointKind::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: Vec<f64>,
    pub value: f64,
    pub kind: PointKind,
    /// Ascending.
    pub hessian_eigenvalues: Vec<f64>,
    /// Row-major Hessian of `Λ` at `x`.
    pub hessian: Vec<f64>,
    /// `|∇Λ(x)|`.
    pub residual: f64,
}

/// Eigenvalue magnitude below which a direction counts as flat.
pub fn degeneracy_threshold(value: f64) -> f64 {
    1e-8 * (1.0 + value.abs())
}

fn sym_eigen(n: usize, h: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = DMatrix::from_row_slice(n, n, h);
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn classify_kind(eigs: &[f64], value: f64) -> PointKind {
    let thr = degeneracy_threshold(value);
    if eigs.iter().any(|e| e.abs() < thr) {
        PointKind::Degenerate
    } else if eigs.iter().all(|&e| e > 0.0) {
        PointKind::Min
    } else if eigs.iter().all(|&e| e < 0.0) {
        PointKind::Max
    } else {
        PointKind::Saddle
    }
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn cube(dim: usize, half_width: f64) -> SearchBox {
        SearchBox {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((&c, &lo), &hi)| c >= lo && c <= hi)
    }

    fn contains_loosely(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((&c, &lo), &hi)| {
            let pad = 0.5 * (hi - lo);
            c >= lo - pad && c <= hi + pad
        })
    }
}

const PRIMES: [u64; 3] = [2, 3, 5];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton points in the box, skipping the first index (the corner).
pub fn halton_starts(bx: &SearchBox, count: usize) -> Vec<Vec<f64>> {
    (1..=count as u64)
        .map(|i| {
            bx.lower
                .iter()
                .zip(&bx.upper)
                .enumerate()
                .map(|(d, (&lo, &hi))| lo + (hi - lo) * radical_inverse(i, PRIMES[d % 3]))
                .collect()
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Levenberg–Marquardt on `∇Λ = 0`, which copes with the flat directions
/// along critical manifolds.
fn newton_from(
    spec: &FieldSpec,
    p: f64,
    conv: Convention,
    start: &[f64],
    bx: &SearchBox,
    tol: f64,
) -> Option<LambdaSample> {
    let n = spec.dim();
    let mut s = lambda_eval(spec, start, p, conv).ok()?;
    let mut res = norm(&s.gradient);
    let mut mu = {
        let h = DMatrix::from_row_slice(n, n, &s.hessian);
        1e-3 * (h.norm_squared() + 1e-30)
    };
    for _ in 0..400 {
        if res <= tol {
            return Some(s);
        }
        let h = DMatrix::from_row_slice(n, n, &s.hessian);
        let g = DVector::from_column_slice(&s.gradient);
        let hth = h.transpose() * &h;
        let rhs = -(h.transpose() * &g);
        let mut accepted = false;
        for _ in 0..40 {
            let sys = &hth + DMatrix::identity(n, n) * mu;
            let Some(step) = sys.cholesky().map(|c| c.solve(&rhs)) else {
                mu *= 4.0;
                continue;
            };
            let x: Vec<f64> = s.x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Ok(trial) = lambda_eval(spec, &x, p, conv) {
                let r = norm(&trial.gradient);
                if r < res {
                    s = trial;
                    res = r;
                    mu = (mu / 3.0).max(1e-300);
                    accepted = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted || !bx.contains_loosely(&s.x) {
            return None;
        }
    }
    (res <= tol).then_some(s)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Multistart search for critical points of `Λ` inside `bx`; points that
/// converge outside the box are dropped. Results are
/// deduplicated at radius `10·newton_tol` and sorted by coordinates.
pub fn find_critical_points(
    spec: &FieldSpec,
    p: f64,
    conv: Convention,
    bx: &SearchBox,
    n_starts: usize,
    newton_tol: f64,
) -> Result<Vec<CriticalPoint>> {
    let n = spec.dim();
    if bx.lower.len() != n || bx.upper.len() != n {
        return Err(Error::InvalidInput("search box dimension mismatch".into()));
    }
    if bx.lower.iter().zip(&bx.upper).any(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidInput("search box is empty".into()));
    }
    if n_starts == 0 || !(newton_tol > 0.0) {
        return Err(Error::InvalidInput("need n_starts >= 1 and newton_tol > 0".into()));
    }
    let starts = halton_starts(bx, n_starts);
    let found: Vec<LambdaSample> = starts
        .par_iter()
        .filter_map(|x0| newton_from(spec, p, conv, x0, bx, newton_tol))
        .filter(|s| bx.contains(&s.x))
        .collect();
    let mut found = found;
    found.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    let radius = 10.0 * newton_tol;
    let mut kept: Vec<LambdaSample> = Vec::new();
    for s in found {
        let dup = kept.iter().any(|k| {
            norm(&k.x.iter().zip(&s.x).map(|(a, b)| a - b).collect::<Vec<_>>()) <= radius
        });
        if !dup {
            kept.push(s);
        }
    }
    Ok(kept
        .into_iter()
        .map(|s| {
            let (eigs, _) = sym_eigen(n, &s.hessian);
            CriticalPoint {
                kind: classify_kind(&eigs, s.value),
                residual: norm(&s.gradient),
                hessian_eigenvalues: eigs,
                x: s.x,
                value: s.value,
                hessian: s.hessian,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Point,
    Circle,
    Sphere,
    Torus,
    Unrecognized,
}

impl Shape {
    /// Lower bound on the number of critical points of a perturbation.
    pub fn multiplicity_bound(self, manifold_dim: usize) -> usize {
        match self {
            Shape::Point | Shape::Unrecognized => 1,
            Shape::Circle | Shape::Sphere => 2,
            Shape::Torus => manifold_dim + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub center: Vec<f64>,
    /// Circle or sphere radius, or the major radius of a torus.
    pub radius: Option<f64>,
    /// Tube radius of a torus.
    pub minor_radius: Option<f64>,
    /// Plane normal of a circle in 3D, or torus axis.
    pub axis: Option<Vec<f64>>,
    /// RMS distance of the points from the fitted shape.
    pub fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalManifold {
    pub points: Vec<CriticalPoint>,
    pub shape: Shape,
    pub shape_params: ShapeParams,
    /// Hessian eigenvalues on the normal space, averaged over the points.
    pub normal_eigenvalues: Vec<f64>,
    pub bott_nondegenerate: bool,
    pub multiplicity_bound: usize,
}

/// Absolute tolerance for "all points coincide".
const POINT_SPREAD: f64 = 1e-5;
/// Relative fit residual accepted for a template.
const FIT_TOL: f64 = 1e-5;

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let l = norm(&v);
    v.into_iter().map(|c| c / l).collect()
}

/// Algebraic (Kasa) hypersphere fit: `|x|² = 2 c·x + d`.
fn kasa_fit(pts: &[Vec<f64>]) -> Option<(Vec<f64>, f64, f64)> {
    let n = pts[0].len();
    if pts.len() < n + 1 {
        return None;
    }
    let a = DMatrix::from_fn(pts.len(), n + 1, |r, c| if c < n { 2.0 * pts[r][c] } else { 1.0 });
    let b = DVector::from_fn(pts.len(), |r, _| dot(&pts[r], &pts[r]));
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    let c: Vec<f64> = sol.iter().take(n).copied().collect();
    let r2 = sol[n] + dot(&c, &c);
    if !(r2 > 0.0) {
        return None;
    }
    let r = r2.sqrt();
    let rms = (pts.iter().map(|x| (norm(&sub(x, &c)) - r).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    Some((c, r, rms))
}

fn centroid(pts: &[Vec<f64>]) -> Vec<f64> {
    let n = pts[0].len();
    let mut c = vec![0.0; n];
    for p in pts {
        for (ci, pi) in c.iter_mut().zip(p) {
            *ci += pi / pts.len() as f64;
        }
    }
    c
}

/// Principal axes of the point cloud, ascending variance.
fn principal_axes(pts: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
    let n = pts[0].len();
    let c = centroid(pts);
    let mut cov = vec![0.0; n * n];
    for p in pts {
        let d = sub(p, &c);
        for i in 0..n {
            for j in 0..n {
                cov[i * n + j] += d[i] * d[j] / pts.len() as f64;
            }
        }
    }
    let (vals, vecs) = sym_eigen(n, &cov);
    (c, vals, vecs)
}

fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

/// Circle in 3D: plane from the smallest principal axis, then a planar fit.
fn circle3_fit(pts: &[Vec<f64>]) -> Option<(Vec<f64>, f64, Vec<f64>, f64)> {
    if pts.len() < 4 {
        return None;
    }
    let (c, _, axes) = principal_axes(pts);
    let normal = column(&axes, 0);
    let e1 = column(&axes, 1);
    let e2 = column(&axes, 2);
    let planar: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| {
            let d = sub(p, &c);
            vec![dot(&d, &e1), dot(&d, &e2)]
        })
        .collect();
    let (c2, r, _) = kasa_fit(&planar)?;
    let center: Vec<f64> = (0..3).map(|i| c[i] + c2[0] * e1[i] + c2[1] * e2[i]).collect();
    let rms = (pts
        .iter()
        .map(|p| {
            let d = sub(p, &center);
            let h = dot(&d, &normal);
            let rho = (dot(&d, &d) - h * h).max(0.0).sqrt();
            (rho - r).powi(2) + h * h
        })
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Some((center, r, normal, rms))
}

fn torus_residuals(par: &[f64], pts: &[Vec<f64>]) -> Vec<f64> {
    // par = [cx, cy, cz, polar, azimuth, R, r]
    let axis = [par[3].sin() * par[4].cos(), par[3].sin() * par[4].sin(), par[3].cos()];
    pts.iter()
        .map(|p| {
            let d = sub(p, &par[..3]);
            let h = dot(&d, &axis);
            let rho = (dot(&d, &d) - h * h).max(0.0).sqrt();
            ((rho - par[5]).powi(2) + h * h).sqrt() - par[6]
        })
        .collect()
}

/// Torus in 3D by Levenberg–Marquardt from a principal-axis start.
fn torus_fit(pts: &[Vec<f64>]) -> Option<(Vec<f64>, f64, f64, Vec<f64>, f64)> {
    if pts.len() < 8 {
        return None;
    }
    let (c, _, axes) = principal_axes(pts);
    let ax = column(&axes, 0);
    let polar = ax[2].clamp(-1.0, 1.0).acos();
    let azim = ax[1].atan2(ax[0]);
    let radial: Vec<f64> = pts
        .iter()
        .map(|p| {
            let d = sub(p, &c);
            let h = dot(&d, &ax);
            (dot(&d, &d) - h * h).max(0.0).sqrt()
        })
        .collect();
    let big_r = radial.iter().sum::<f64>() / radial.len() as f64;
    let small_r = (pts
        .iter()
        .zip(&radial)
        .map(|(p, rho)| (rho - big_r).powi(2) + dot(&sub(p, &c), &ax).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    let mut par = vec![c[0], c[1], c[2], polar, azim, big_r, small_r.max(1e-3)];
    let cost = |par: &[f64]| torus_residuals(par, pts).iter().map(|r| r * r).sum::<f64>();
    let mut f = cost(&par);
    let mut mu = 1e-3;
    for _ in 0..200 {
        let r0 = torus_residuals(&par, pts);
        let jac = DMatrix::from_fn(pts.len(), 7, |i, k| {
            let mut q = par.clone();
            let hk = 1e-7 * (1.0 + par[k].abs());
            q[k] += hk;
            (torus_residuals(&q, pts)[i] - r0[i]) / hk
        });
        let g = jac.transpose() * DVector::from_vec(r0);
        let jtj = jac.transpose() * &jac;
        let mut improved = false;
        for _ in 0..30 {
            let sys = &jtj + DMatrix::from_diagonal(&jtj.diagonal().map(|d| d * mu + 1e-14));
            if let Some(step) = sys.cholesky().map(|ch| ch.solve(&(-&g))) {
                let trial: Vec<f64> = par.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let ft = cost(&trial);
                if ft < f {
                    par = trial;
                    f = ft;
                    mu = (mu / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !improved || f < 1e-28 {
            break;
        }
    }
    let axis = vec![par[3].sin() * par[4].cos(), par[3].sin() * par[4].sin(), par[3].cos()];
    let rms = (f / pts.len() as f64).sqrt();
    (par[6] > 0.0 && par[5] > par[6]).then(|| (par[..3].to_vec(), par[5], par[6], axis, rms))
}

fn single_linkage(points: &[CriticalPoint], tol: f64) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..points.len()).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if norm(&sub(&points[i].x, &points[j].x)) <= tol {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = std::collections::BTreeMap::new();
    for i in 0..points.len() {
        let r = find(&mut label, i);
        let g = *root_of.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// Normal eigenvalues at each point given its normal basis.
fn normal_eigs(points: &[CriticalPoint], normals: &[Vec<Vec<f64>>]) -> (Vec<f64>, bool) {
    let n = points[0].x.len();
    let k = normals[0].len();
    let mut avg = vec![0.0; k];
    let mut ok = true;
    for (pt, basis) in points.iter().zip(normals) {
        let h = DMatrix::from_row_slice(n, n, &pt.hessian);
        let q = DMatrix::from_fn(n, k, |r, c| basis[c][r]);
        let red = q.transpose() * h * &q;
        let (eigs, _) = sym_eigen(k, red.transpose().as_slice());
        let thr = degeneracy_threshold(pt.value);
        ok &= eigs.iter().all(|e| e.abs() >= thr);
        for (a, e) in avg.iter_mut().zip(&eigs) {
            *a += e / points.len() as f64;
        }
    }
    (avg, ok)
}

fn classify_cluster(points: Vec<CriticalPoint>) -> Result<CriticalManifold> {
    let n = points[0].x.len();
    let xs: Vec<Vec<f64>> = points.iter().map(|p| p.x.clone()).collect();
    let c = centroid(&xs);
    let spread = xs.iter().map(|x| norm(&sub(x, &c))).fold(0.0, f64::max);
    let scale = 1.0 + norm(&c);

    let finish = |points: Vec<CriticalPoint>,
                  shape: Shape,
                  params: ShapeParams,
                  normals: Vec<Vec<Vec<f64>>>,
                  mdim: usize| {
        let (normal_eigenvalues, bott) = normal_eigs(&points, &normals);
        CriticalManifold {
            points,
            shape,
            shape_params: params,
            normal_eigenvalues,
            bott_nondegenerate: bott,
            multiplicity_bound: shape.multiplicity_bound(mdim),
        }
    };
    let identity: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    if points.len() == 1 || spread <= POINT_SPREAD * scale {
        let params = ShapeParams {
            center: c,
            radius: None,
            minor_radius: None,
            axis: None,
            fit_residual: spread,
        };
        let normals = vec![identity; points.len()];
        return Ok(finish(points, Shape::Point, params, normals, 0));
    }

    let mut best = f64::INFINITY;
    match n {
        2 => {
            if let Some((center, r, rms)) = kasa_fit(&xs) {
                best = best.min(rms / (1.0 + r));
                if rms <= FIT_TOL * (1.0 + r) {
                    let normals = xs.iter().map(|x| vec![unit(sub(x, &center))]).collect();
                    let params = ShapeParams {
                        center,
                        radius: Some(r),
                        minor_radius: None,
                        axis: None,
                        fit_residual: rms,
                    };
                    return Ok(finish(points, Shape::Circle, params, normals, 1));
                }
            }
        }
        3 => {
            if let Some((center, r, normal, rms)) = circle3_fit(&xs) {
                best = best.min(rms / (1.0 + r));
                if rms <= FIT_TOL * (1.0 + r) {
                    let normals = xs
                        .iter()
                        .map(|x| {
                            let d = sub(x, &center);
                            let h = dot(&d, &normal);
                            let radial = unit(d.iter().zip(&normal).map(|(a, b)| a - h * b).collect());
                            vec![radial, normal.clone()]
                        })
                        .collect();
                    let params = ShapeParams {
                        center,
                        radius: Some(r),
                        minor_radius: None,
                        axis: Some(normal),
                        fit_residual: rms,
                    };
                    return Ok(finish(points, Shape::Circle, params, normals, 1));
                }
            }
            if let Some((center, r, rms)) = kasa_fit(&xs) {
                best = best.min(rms / (1.0 + r));
                if rms <= FIT_TOL * (1.0 + r) {
                    let normals = xs.iter().map(|x| vec![unit(sub(x, &center))]).collect();
                    let params = ShapeParams {
                        center,
                        radius: Some(r),
                        minor_radius: None,
                        axis: None,
                        fit_residual: rms,
                    };
                    return Ok(finish(points, Shape::Sphere, params, normals, 2));
                }
            }
            if let Some((center, big, small, axis, rms)) = torus_fit(&xs) {
                best = best.min(rms / (1.0 + big));
                if rms <= FIT_TOL * (1.0 + big) {
                    let normals = xs
                        .iter()
                        .map(|x| {
                            let d = sub(x, &center);
                            let h = dot(&d, &axis);
                            let inplane = unit(d.iter().zip(&axis).map(|(a, b)| a - h * b).collect());
                            let core: Vec<f64> = (0..3).map(|i| center[i] + big * inplane[i]).collect();
                            vec![unit(sub(x, &core))]
                        })
                        .collect();
                    let params = ShapeParams {
                        center,
                        radius: Some(big),
                        minor_radius: Some(small),
                        axis: Some(axis),
                        fit_residual: rms,
                    };
                    return Ok(finish(points, Shape::Torus, params, normals, 2));
                }
            }
        }
        _ => {}
    }
    if best.is_finite() {
        return Err(Error::ClusterAmbiguous { residual: best });
    }
    // Too few points for any template.
    let params = ShapeParams {
        center: c,
        radius: None,
        minor_radius: None,
        axis: None,
        fit_residual: spread,
    };
    let normals = vec![identity; points.len()];
    Ok(finish(points, Shape::Unrecognized, params, normals, 0))
}

/// Groups critical points into manifolds by single linkage at `cluster_tol`
/// and fits a point, circle, sphere or torus to each group.
pub fn classify_manifold(points: &[CriticalPoint], cluster_tol: f64) -> Result<Vec<CriticalManifold>> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no critical points to classify".into()));
    }
    single_linkage(points, cluster_tol)
        .into_iter()
        .map(|g| classify_cluster(g.into_iter().map(|i| points[i].clone()).collect()))
        .collect()
}

/// CSV with columns `x1..xn,value,kind,eig1..eign,residual`.
pub fn write_points_csv<W: Write>(points: &[CriticalPoint], dim: usize, mut out: W) -> std::io::Result<()> {
    let mut head: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    head.push("value".into());
    head.push("kind".into());
    head.extend((1..=dim).map(|i| format!("eig{i}")));
    head.push("residual".into());
    writeln!(out, "{}", head.join(","))?;
    for p in points {
        let mut row: Vec<String> = p.x.iter().map(|v| format!("{v:.16e}")).collect();
        row.push(format!("{:.16e}", p.value));
        row.push(p.kind.name().into());
        row.extend(p.hessian_eigenvalues.iter().map(|v| format!("{v:.16e}")));
        row.push(format!("{:.16e}", p.residual));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
