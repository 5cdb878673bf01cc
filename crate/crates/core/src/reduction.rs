//! Lyapunov–Schmidt reduction: the correction `w(ε, ξ)` orthogonal to the
//! tangent frame, the reduced functional `Ψ_ε(ξ) = f_ε(z + w)` and the
//! ε-ladders that measure how the reduction approaches `C₁ Λ(εξ)`.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_ansatz, frozen_data, tangent_frame, AnsatzParams, FrozenData, TangentFrame};
use crate::discretization::{det_sum, inner_e, norm_e, EnergyFunctional, Stencil};
use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::grid::{ComplexField, Grid};
use crate::groundstate::RadialProfile;
use crate::krylov::{lanczos, minres, RitzValues};
use crate::landscape::{lambda_eval, Convention};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOptions {
    /// Bound on successive-iterate distance and on `‖P∇f(z+w)‖_E`.
    pub fp_tol: f64,
    pub max_iter: usize,
    /// Inner tolerance as a fraction of the current fixed-point residual.
    pub inner_rel: f64,
    pub inner_max_iter: usize,
    /// Abort once `‖w‖_E > ball·‖z‖_E`.
    pub ball: f64,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        CorrectionOptions {
            fp_tol: 1e-9,
            max_iter: 60,
            inner_rel: 1e-2,
            inner_max_iter: 500,
            ball: 0.5,
        }
    }
}

impl CorrectionOptions {
    pub fn with_tol(fp_tol: f64) -> Self {
        CorrectionOptions {
            fp_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearSolveStats {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ReductionResult {
    pub params: AnsatzParams,
    pub w: ComplexField,
    pub w_norm_e: f64,
    pub z_norm_e: f64,
    /// `f_ε(z + w)`
    pub psi: f64,
    pub iterations: usize,
    /// `‖P∇f_ε(z+w)‖_E`
    pub fixed_point_residual: f64,
    /// `‖w_k - w_{k-1}‖_E` at exit.
    pub last_step: f64,
    /// `max_b |⟨w|b⟩_E| / (‖w‖_E ‖b‖_E)` over the frame.
    pub tangency: f64,
    pub linear: LinearSolveStats,
}

/// Everything fixed for one `(ε, ξ, σ)`: energy, ansatz and frame.
#[derive(Debug, Clone)]
pub struct Reduction<'a> {
    profile: &'a RadialProfile,
    spec: &'a FieldSpec,
    params: AnsatzParams,
    frozen: FrozenData,
    energy: EnergyFunctional,
    z: ComplexField,
    frame: TangentFrame,
}

impl<'a> Reduction<'a> {
    pub fn new(profile: &'a RadialProfile, spec: &'a FieldSpec, params: &AnsatzParams, grid: &Grid) -> Result<Self> {
        Reduction::with_stencil(profile, spec, params, grid, Stencil::default())
    }

    pub fn with_stencil(
        profile: &'a RadialProfile,
        spec: &'a FieldSpec,
        params: &AnsatzParams,
        grid: &Grid,
        stencil: Stencil,
    ) -> Result<Self> {
        let p = profile.exponent();
        let energy = EnergyFunctional::with_stencil(spec, p, params.eps, grid, stencil)?;
        let z = build_ansatz(profile, spec, params, grid)?;
        let frame = tangent_frame(&z, profile, spec, params)?;
        Ok(Reduction {
            profile,
            spec,
            params: params.clone(),
            frozen: frozen_data(spec, p, params)?,
            energy,
            z,
            frame,
        })
    }

    pub fn energy(&self) -> &EnergyFunctional {
        &self.energy
    }

    pub fn ansatz(&self) -> &ComplexField {
        &self.z
    }

    pub fn frame(&self) -> &TangentFrame {
        &self.frame
    }

    pub fn params(&self) -> &AnsatzParams {
        &self.params
    }

    pub fn profile(&self) -> &RadialProfile {
        self.profile
    }

    pub fn frozen(&self) -> &FrozenData {
        &self.frozen
    }

    /// `‖∇f_ε(z)‖_E`
    pub fn residual_norm(&self) -> Result<f64> {
        Ok(norm_e(&self.energy.gradient(&self.z)?))
    }

    /// `P H(z) P v`
    pub fn projected_hessian(&self, v: &ComplexField) -> Result<ComplexField> {
        let pv = self.frame.project_complement(v)?;
        let hv = self.energy.hessian_apply(&self.z, &pv)?;
        self.frame.project_complement(&hv)
    }

    /// Chord iteration `w_{k+1} = -L⁻¹ P(∇f(z) + R(z, w_k))` from `w = 0`.
    pub fn solve(&self, opts: &CorrectionOptions) -> Result<ReductionResult> {
        self.solve_from(opts, &ComplexField::zeros(self.z.grid()))
    }

    /// Chord iteration from the projection of `w0`.
    pub fn solve_from(&self, opts: &CorrectionOptions, w0: &ComplexField) -> Result<ReductionResult> {
        if !(opts.fp_tol > 0.0) || opts.max_iter == 0 {
            return Err(Error::InvalidInput("need fp_tol > 0 and max_iter >= 1".into()));
        }
        let z = &self.z;
        let z_norm = norm_e(z);
        let mut w = self.frame.project_complement(w0)?;
        let mut u = z.add(&w);
        let mut grad = self.energy.gradient(&u)?;
        let mut pgrad = self.frame.project_complement(&grad)?;
        let mut res = norm_e(&pgrad);
        let mut step = f64::INFINITY;
        let mut stats = LinearSolveStats::default();
        let apply = |v: &ComplexField| self.projected_hessian(v);
        let inner = |a: &ComplexField, b: &ComplexField| inner_e(a, b).expect("same grid");

        for it in 1..=opts.max_iter {
            // rhs = -P(∇f(z+w) - H(z) w)
            let hw = self.energy.hessian_apply(z, &w)?;
            let mut rhs = self.frame.project_complement(&grad.sub(&hw))?;
            rhs.scale(-1.0);
            let tol = (opts.inner_rel * res).max(1e-14 * norm_e(&rhs));
            let mut next = w.clone();
            let st = minres(apply, inner, &rhs, &mut next, tol, opts.inner_max_iter)?;
            stats.solves += 1;
            stats.total_iterations += st.iterations;
            stats.max_iterations = stats.max_iterations.max(st.iterations);
            let next = self.frame.project_complement(&next)?;
            step = norm_e(&next.sub(&w));
            w = next;
            let w_norm = norm_e(&w);
            if !w_norm.is_finite() || w_norm > opts.ball * z_norm {
                return Err(Error::ContractionFailure(format!(
                    "‖w‖ = {w_norm:e} left the ball of radius {:e} at iteration {it}",
                    opts.ball * z_norm
                )));
            }
            u = z.add(&w);
            grad = self.energy.gradient(&u)?;
            pgrad = self.frame.project_complement(&grad)?;
            res = norm_e(&pgrad);
            if step <= opts.fp_tol && res <= opts.fp_tol {
                let w_norm_e = norm_e(&w);
                let tangency = self.tangency(&w, w_norm_e)?;
                return Ok(ReductionResult {
                    params: self.params.clone(),
                    psi: self.energy.energy(&u)?.total,
                    w,
                    w_norm_e,
                    z_norm_e: z_norm,
                    iterations: it,
                    fixed_point_residual: res,
                    last_step: step,
                    tangency,
                    linear: stats,
                });
            }
        }
        Err(Error::ContractionFailure(format!(
            "no convergence in {} iterations (step {step:e}, residual {res:e})",
            opts.max_iter
        )))
    }

    fn tangency(&self, w: &ComplexField, w_norm: f64) -> Result<f64> {
        if w_norm == 0.0 {
            return Ok(0.0);
        }
        let mut worst: f64 = 0.0;
        for b in self.frame.basis() {
            worst = worst.max(inner_e(w, b)?.abs() / (w_norm * norm_e(b)));
        }
        Ok(worst)
    }

    /// Lanczos estimate of the spectrum of `P H(z) P` on the complement,
    /// started from a seeded random vector.
    pub fn coercivity(&self, n_lanczos: usize, seed: u64) -> Result<CoercivityReport> {
        let start = self.frame.project_complement(&random_like(&self.z, seed))?;
        // round-off pushes Krylov vectors into the frame, where PHP vanishes;
        // acting as the identity there keeps those directions away from 0
        let op = |v: &ComplexField| -> Result<ComplexField> {
            let pv = self.frame.project_complement(v)?;
            let hv = self.energy.hessian_apply(&self.z, &pv)?;
            let mut out = self.frame.project_complement(&hv)?;
            out.axpy(1.0, &v.sub(&pv));
            Ok(out)
        };
        let ritz = lanczos(
            op,
            |a, b| inner_e(a, b).expect("same grid"),
            &start,
            n_lanczos,
        )?;
        CoercivityReport::from_ritz(ritz)
    }

    /// Term-by-term expansion of `f_ε(z + w)` around the frozen problem.
    pub fn phi_terms(&self, w: &ComplexField) -> Result<PhiTerms> {
        phi_terms(self, w)
    }
}

/// Smooth random field with the support of `like`, for Krylov start vectors.
pub fn random_like(like: &ComplexField, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Complex64> = like
        .values()
        .iter()
        .map(|v| {
            let weight = v.norm();
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * weight
        })
        .collect();
    ComplexField::from_values(like.grid(), data).expect("same grid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    /// Smallest `|θ|` among converged Ritz values.
    pub smallest_abs: f64,
    /// Most negative converged Ritz value, if any.
    pub most_negative: Option<f64>,
    pub ritz: RitzValues,
}

impl CoercivityReport {
    /// Ritz values count as converged when the residual bound is at most
    /// `1e-6` times the largest `|θ|`.
    pub fn from_ritz(ritz: RitzValues) -> Result<CoercivityReport> {
        let scale = ritz.values.iter().map(|t| t.abs()).fold(0.0, f64::max);
        let tol = 1e-6 * scale.max(1.0);
        let smallest_abs = ritz.smallest_converged_abs(tol).ok_or_else(|| {
            Error::EigenSolveFailure(format!("no Ritz value converged in {} steps", ritz.steps))
        })?;
        let most_negative = ritz
            .values
            .iter()
            .zip(&ritz.residuals)
            .filter(|(t, r)| **t < 0.0 && **r <= tol)
            .map(|(t, _)| *t)
            .next();
        Ok(CoercivityReport {
            smallest_abs,
            most_negative,
            ritz,
        })
    }
}

/// Lanczos estimate of the spectrum of `H(u)` without any projection.
pub fn unprojected_spectrum(energy: &EnergyFunctional, u: &ComplexField, n_lanczos: usize, seed: u64) -> Result<CoercivityReport> {
    let start = random_like(u, seed);
    let ritz = lanczos(
        |v| energy.hessian_apply(u, v),
        |a, b| inner_e(a, b).expect("same grid"),
        &start,
        n_lanczos,
    )?;
    CoercivityReport::from_ritz(ritz)
}

/// `‖H(u)(iu)‖_E / ‖iu‖_E`, the Rayleigh residual of the phase direction.
pub fn phase_mode_residual(energy: &EnergyFunctional, u: &ComplexField) -> Result<f64> {
    let iu = u.times_i();
    Ok(norm_e(&energy.hessian_apply(u, &iu)?) / norm_e(&iu))
}

/// The pieces of `f_ε(z + w)` split around the problem frozen at `εξ`; the
/// `remainder` is what the listed terms leave out of the direct value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiTerms {
    /// `K(εξ)(1/2 - 1/(p+1)) ∫|z|^{p+1}`
    pub leading: f64,
    /// `½ ∫ |A(εξ) - A(εx)|² |z|²`
    pub potential_gap_z: f64,
    /// `Re ∫ (A(εξ) - A(εx)) z · (A(εξ) - A(εx)) w̄`
    pub potential_gap_zw: f64,
    /// `ε Re ∫ (1/i) z w̄ div A(εx)`
    pub divergence: f64,
    /// `½ ∫ |(∇/i - A(εx)) w|²`
    pub kinetic_w: f64,
    /// `Re ∫ (V(εx) - V(εξ)) z w̄`
    pub v_gap_zw: f64,
    /// `½ ∫ (V(εx) - V(εξ)) |w|²`
    pub v_gap_w: f64,
    /// `½ ∫ (V(εx) - V(εξ)) |z|²`
    pub v_gap_z: f64,
    /// `½ V(εξ) ∫ |w|²`
    pub v_frozen_w: f64,
    /// `-1/(p+1) Re ∫ K(εx)(|z+w|^{p+1} - |z|^{p+1} - (p+1)|z|^{p-1} z w̄)`
    pub nonlinear_w: f64,
    /// `Re K(εξ) ∫ |z|^{p-1} z w̄`
    pub nonlinear_zw: f64,
    pub sum: f64,
    /// `f_ε(z + w)`
    pub direct: f64,
    pub remainder: f64,
}

fn phi_terms(red: &Reduction<'_>, w: &ComplexField) -> Result<PhiTerms> {
    red.z.check_same_grid(w)?;
    let grid = red.z.grid();
    let n = grid.dim();
    let spec = red.spec;
    let eps = red.params.eps;
    let p = red.profile.exponent();
    let y0 = red.params.slow_point();
    let (v0, k0, a0) = spec.values_at(&y0);
    let (zv, wv) = (red.z.values(), w.values());
    let vol = grid.cell_volume();
    let at = |idx: usize| -> Vec<f64> { grid.node(idx)[..n].iter().map(|c| eps * c).collect() };
    let powp = |n2: f64, e: f64| n2.powf(0.5 * e);

    let q = |f: &(dyn Fn(usize) -> f64 + Sync)| vol * det_sum(grid.len(), f);
    let leading = k0 * (0.5 - 1.0 / (p + 1.0)) * q(&|i| powp(zv[i].norm_sqr(), p + 1.0));
    let gap = |i: usize| -> Vec<f64> {
        let a = spec.potential_at(&at(i));
        a0.iter().zip(a).map(|(x, y)| x - y).collect()
    };
    let potential_gap_z = 0.5 * q(&|i| gap(i).iter().map(|g| g * g).sum::<f64>() * zv[i].norm_sqr());
    let potential_gap_zw = q(&|i| gap(i).iter().map(|g| g * g).sum::<f64>() * (zv[i] * wv[i].conj()).re);
    let divergence = eps
        * q(&|i| {
            let s = spec.eval(&at(i)).map(|s| s.div_a).unwrap_or(f64::NAN);
            (zv[i] * wv[i].conj() * Complex64::new(0.0, -1.0)).re * s
        });
    let kinetic_w = red.energy.energy(w)?.kinetic;
    let dv = |i: usize| spec.v().value(&at(i)) - v0;
    let v_gap_zw = q(&|i| dv(i) * (zv[i] * wv[i].conj()).re);
    let v_gap_w = 0.5 * q(&|i| dv(i) * wv[i].norm_sqr());
    let v_gap_z = 0.5 * q(&|i| dv(i) * zv[i].norm_sqr());
    let v_frozen_w = 0.5 * v0 * w.l2_norm_sq();
    let nonlinear_w = -q(&|i| {
        let k = spec.k().value(&at(i));
        let z2 = zv[i].norm_sqr();
        let s2 = (zv[i] + wv[i]).norm_sqr();
        k * (powp(s2, p + 1.0) - powp(z2, p + 1.0) - (p + 1.0) * powp(z2, p - 1.0) * (zv[i] * wv[i].conj()).re)
    }) / (p + 1.0);
    let nonlinear_zw = k0 * q(&|i| powp(zv[i].norm_sqr(), p - 1.0) * (zv[i] * wv[i].conj()).re);
    let sum = leading
        + potential_gap_z
        + potential_gap_zw
        + divergence
        + kinetic_w
        + v_gap_zw
        + v_gap_w
        + v_gap_z
        + v_frozen_w
        + nonlinear_w
        + nonlinear_zw;
    let direct = red.energy.energy(&red.z.add(w))?.total;
    Ok(PhiTerms {
        leading,
        potential_gap_z,
        potential_gap_zw,
        divergence,
        kinetic_w,
        v_gap_zw,
        v_gap_w,
        v_gap_z,
        v_frozen_w,
        nonlinear_w,
        nonlinear_zw,
        sum,
        direct,
        remainder: direct - sum,
    })
}

pub fn solve_correction(
    profile: &RadialProfile,
    spec: &FieldSpec,
    params: &AnsatzParams,
    grid: &Grid,
    fp_tol: f64,
    max_iter: usize,
) -> Result<ReductionResult> {
    let opts = CorrectionOptions {
        fp_tol,
        max_iter,
        ..Default::default()
    };
    Reduction::new(profile, spec, params, grid)?.solve(&opts)
}

/// `Ψ_ε(ξ) = f_ε(z^{εξ,0} + w)`.
pub fn reduced_functional(
    profile: &RadialProfile,
    spec: &FieldSpec,
    eps: f64,
    xi: &[f64],
    grid: &Grid,
    fp_tol: f64,
) -> Result<f64> {
    let params = AnsatzParams::new(eps, xi, 0.0);
    Ok(Reduction::new(profile, spec, &params, grid)?
        .solve(&CorrectionOptions::with_tol(fp_tol))?
        .psi)
}

pub fn residual_norm(profile: &RadialProfile, spec: &FieldSpec, params: &AnsatzParams, grid: &Grid) -> Result<f64> {
    let energy = EnergyFunctional::new(spec, profile.exponent(), params.eps, grid)?;
    let z = build_ansatz(profile, spec, params, grid)?;
    Ok(norm_e(&energy.gradient(&z)?))
}

/// Smallest `|eigenvalue|` of `P H(z) P` on the complement of the frame.
pub fn coercivity_estimate(
    profile: &RadialProfile,
    spec: &FieldSpec,
    params: &AnsatzParams,
    grid: &Grid,
    n_lanczos: usize,
) -> Result<f64> {
    Ok(Reduction::new(profile, spec, params, grid)?
        .coercivity(n_lanczos, 7)?
        .smallest_abs)
}

/// Box size and resolution for the grid used at each ladder point. Without a
/// fixed `center` the box follows the ansatz centre `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRule {
    pub half_width: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

impl GridRule {
    pub fn recentering(half_width: f64, points: usize) -> GridRule {
        GridRule {
            half_width,
            points,
            center: None,
        }
    }

    pub fn fixed(center: &[f64], half_width: f64, points: usize) -> GridRule {
        GridRule {
            half_width,
            points,
            center: Some(center.to_vec()),
        }
    }

    pub fn grid_at(&self, xi: &[f64]) -> Result<Grid> {
        let c = self.center.as_deref().unwrap_or(xi);
        if c.len() != xi.len() {
            return Err(Error::InvalidInput("grid centre has the wrong dimension".into()));
        }
        Grid::with_center(c.to_vec(), self.half_width, self.points, crate::grid::DEFAULT_NODE_BUDGET)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub eps: f64,
    pub xi: Vec<f64>,
    pub residual_norm: f64,
    pub w_norm: f64,
    pub psi: f64,
    pub c1_lambda: f64,
    pub error: f64,
    pub coercivity: Option<f64>,
    pub iterations: usize,
    pub fixed_point_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEntry {
    pub eps: f64,
    /// `∇_ξ Ψ_ε` by centred differences.
    pub grad_psi: Vec<f64>,
    /// `ε C₁ ∇Λ(εξ)`, the ξ-gradient of `C₁ Λ(εξ)`.
    pub predicted: Vec<f64>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    /// The slow point `εξ`, held fixed along the ladder.
    pub slow_point: Vec<f64>,
    pub convention: Convention,
    pub c1: f64,
    pub ladder: Vec<LadderEntry>,
    pub residual_slope: f64,
    pub w_slope: f64,
    pub error_slope: f64,
    pub gradient: Vec<GradientEntry>,
    pub gradient_slope: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOptions {
    pub correction: CorrectionOptions,
    pub convention: Convention,
    /// Step for `∇_ξ Ψ_ε`; `None` skips the gradient ladder.
    pub gradient_step: Option<f64>,
    /// Lanczos steps for the coercivity column; `None` skips it.
    pub lanczos_steps: Option<usize>,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions {
            correction: CorrectionOptions::default(),
            convention: Convention::Derived,
            gradient_step: Some(1e-3),
            lanczos_steps: None,
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs the reduction along `ladder` with `εξ = slow_point` fixed, on grids
/// centred at `ξ = slow_point/ε`.
pub fn expansion_report(
    profile: &RadialProfile,
    spec: &FieldSpec,
    slow_point: &[f64],
    ladder: &[f64],
    rule: &GridRule,
    opts: &ExpansionOptions,
) -> Result<ExpansionReport> {
    if ladder.len() < 3 || ladder.windows(2).any(|w| !(w[1] < w[0])) || ladder.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("need at least three decreasing positive ε values".into()));
    }
    let p = profile.exponent();
    let c1 = opts.convention.c1(&profile.moments(), p);
    let lam = lambda_eval(spec, slow_point, p, opts.convention)?;
    let mut entries = Vec::new();
    let mut grads = Vec::new();
    for &eps in ladder {
        let xi: Vec<f64> = slow_point.iter().map(|c| c / eps).collect();
        let grid = rule.grid_at(&xi)?;
        let params = AnsatzParams::new(eps, &xi, 0.0);
        let red = Reduction::new(profile, spec, &params, &grid)?;
        let res = red.solve(&opts.correction)?;
        let coercivity = match opts.lanczos_steps {
            Some(k) => Some(red.coercivity(k, 7)?.smallest_abs),
            None => None,
        };
        let c1_lambda = c1 * lam.value;
        entries.push(LadderEntry {
            eps,
            xi: xi.clone(),
            residual_norm: red.residual_norm()?,
            w_norm: res.w_norm_e,
            psi: res.psi,
            c1_lambda,
            error: (res.psi - c1_lambda).abs(),
            coercivity,
            iterations: res.iterations,
            fixed_point_residual: res.fixed_point_residual,
        });
        if let Some(hx) = opts.gradient_step {
            let mut grad_psi = Vec::with_capacity(xi.len());
            for j in 0..xi.len() {
                let mut val = [0.0; 2];
                for (s, sign) in [1.0, -1.0].iter().enumerate() {
                    let mut x = xi.clone();
                    x[j] += sign * hx;
                    let pr = AnsatzParams::new(eps, &x, 0.0);
                    val[s] = Reduction::new(profile, spec, &pr, &grid)?.solve(&opts.correction)?.psi;
                }
                grad_psi.push((val[0] - val[1]) / (2.0 * hx));
            }
            let predicted: Vec<f64> = lam.gradient.iter().map(|g| eps * c1 * g).collect();
            let error = grad_psi
                .iter()
                .zip(&predicted)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            grads.push(GradientEntry {
                eps,
                grad_psi,
                predicted,
                error,
            });
        }
    }
    let eps: Vec<f64> = entries.iter().map(|e| e.eps).collect();
    let slope_of = |ys: Vec<f64>| loglog_slope(&eps, &ys);
    Ok(ExpansionReport {
        slow_point: slow_point.to_vec(),
        convention: opts.convention,
        c1,
        residual_slope: slope_of(entries.iter().map(|e| e.residual_norm).collect()),
        w_slope: slope_of(entries.iter().map(|e| e.w_norm).collect()),
        error_slope: slope_of(entries.iter().map(|e| e.error).collect()),
        gradient_slope: (!grads.is_empty()).then(|| slope_of(grads.iter().map(|g| g.error).collect())),
        ladder: entries,
        gradient: grads,
    })
}

impl ExpansionReport {
    /// CSV with columns `eps,residual_norm,w_norm,psi,c1_lambda,error,coercivity`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "eps,residual_norm,w_norm,psi,c1_lambda,error,coercivity")?;
        for e in &self.ladder {
            let coer = e.coercivity.map(|c| format!("{c:.16e}")).unwrap_or_default();
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                e.eps, e.residual_norm, e.w_norm, e.psi, e.c1_lambda, e.error, coer
            )?;
        }
        Ok(())
    }
}
