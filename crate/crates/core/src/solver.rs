//! Gauge-fixed Newton refinement of `z + w` to a discrete critical point of
//! `f_ε`, peak diagnostics and ε-sweeps.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_ansatz, AnsatzParams};
use crate::discretization::{inner_e, norm_e, EnergyFunctional};
use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::grid::{ComplexField, Grid};
use crate::groundstate::RadialProfile;
use crate::krylov::minres;
use crate::reduction::{CorrectionOptions, GridRule, Reduction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Target for `‖∇f_ε(u)‖_E`.
    pub tol: f64,
    pub max_iter: usize,
    /// Inner MINRES tolerance relative to `‖∇f_ε(u)‖_E`.
    pub inner_rel: f64,
    pub inner_max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 40,
            inner_rel: 1e-3,
            inner_max_iter: 4000,
            max_backtracks: 30,
        }
    }
}

impl NewtonOptions {
    pub fn with_tol(tol: f64) -> Self {
        NewtonOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Sub-grid location of the maximum of `|u|`.
    pub location: Vec<f64>,
    pub phase_gradient: Vec<f64>,
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct SolveBranch {
    pub eps: f64,
    pub seed: Vec<f64>,
    pub u: ComplexField,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub final_residual: f64,
    pub peak: Peak,
    pub energy: f64,
}

/// E-orthogonal projection off a single direction.
struct LineProjector {
    q: ComplexField,
}

impl LineProjector {
    fn new(dir: ComplexField) -> Option<LineProjector> {
        let n = norm_e(&dir);
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        Some(LineProjector { q: dir.scaled(Complex64::new(1.0 / n, 0.0)) })
    }

    fn apply(&self, v: &ComplexField) -> ComplexField {
        let mut out = v.clone();
        for _ in 0..2 {
            let c = inner_e(&self.q, &out).expect("same grid");
            out.axpy(-c, &self.q);
        }
        out
    }
}

/// Iterates this small in `E` count as the trivial state.
const TRIVIAL_NORM: f64 = 1e-10;

/// Damped Newton on the `E`-gradient; each step is solved in the complement
/// of `i·u` by MINRES and accepted once `‖∇f‖_E` decreases.
pub fn refine_newton(energy: &EnergyFunctional, u0: &ComplexField, opts: &NewtonOptions) -> Result<(ComplexField, NewtonStats)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("newton tolerance must be positive".into()));
    }
    let mut u = u0.clone();
    let mut g = energy.gradient(&u)?;
    let mut res = norm_e(&g);
    let mut stats = NewtonStats::default();
    for it in 0..=opts.max_iter {
        if norm_e(&u) <= TRIVIAL_NORM {
            return Err(Error::SingularHessian(
                "iterate is the trivial state, where the phase direction i·u vanishes".into(),
            ));
        }
        if res <= opts.tol {
            stats.iterations = it;
            stats.residual = res;
            return Ok((u, stats));
        }
        if it == opts.max_iter {
            break;
        }
        let step = newton_direction(energy, &u, &g, res, opts, &mut stats)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            let mut trial = u.clone();
            trial.axpy(t, &step);
            let gt = energy.gradient(&trial)?;
            let rt = norm_e(&gt);
            if rt.is_finite() && rt < (1.0 - 1e-4 * t) * res {
                u = trial;
                g = gt;
                res = rt;
                accepted = true;
                break;
            }
            if t == 1.0 && rt.is_finite() {
                // Moving the peak is nonlinear at second order, so the full
                // step can raise the residual before the next step removes the
                // excess. Accept the pair when it lowers the residual overall.
                if let Ok(step2) = newton_direction(energy, &trial, &gt, rt, opts, &mut stats) {
                    let mut trial2 = trial;
                    trial2.axpy(1.0, &step2);
                    let g2 = energy.gradient(&trial2)?;
                    let r2 = norm_e(&g2);
                    if r2.is_finite() && r2 < (1.0 - 1e-4) * res {
                        u = trial2;
                        g = g2;
                        res = r2;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence(format!(
                "no decrease along the Newton direction at iteration {it} (‖∇f‖ = {res:e})"
            )));
        }
    }
    Err(Error::NewtonDivergence(format!(
        "‖∇f‖ = {res:e} after {} iterations",
        opts.max_iter
    )))
}

/// Solves `Q H(u) Q s = -Q g` with `Q` the projection off `i·u`.
fn newton_direction(
    energy: &EnergyFunctional,
    u: &ComplexField,
    g: &ComplexField,
    res: f64,
    opts: &NewtonOptions,
    stats: &mut NewtonStats,
) -> Result<ComplexField> {
    let q = LineProjector::new(u.times_i())
        .ok_or_else(|| Error::SingularHessian("the phase direction i·u vanishes (trivial state)".into()))?;
    let op = |v: &ComplexField| -> Result<ComplexField> {
        let qv = q.apply(v);
        let hv = energy.hessian_apply(u, &qv)?;
        let mut out = q.apply(&hv);
        out.axpy(1.0, &v.sub(&qv));
        Ok(out)
    };
    let inner = |a: &ComplexField, b: &ComplexField| inner_e(a, b).expect("same grid");
    let mut rhs = q.apply(g);
    rhs.scale(-1.0);
    let mut step = ComplexField::zeros(u.grid());
    match minres(op, inner, &rhs, &mut step, opts.inner_rel * res, opts.inner_max_iter) {
        Ok(s) => stats.linear_iterations += s.iterations,
        // keep the partial solution; the line search decides
        Err(Error::LinearSolveFailure { iterations, .. }) => stats.linear_iterations += iterations,
        Err(e) => return Err(e),
    }
    Ok(q.apply(&step))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NewtonStats {
    pub iterations: usize,
    pub linear_iterations: usize,
    pub residual: f64,
}

/// Newton refinement plus peak diagnostics.
pub fn solve_branch(energy: &EnergyFunctional, u0: &ComplexField, seed: &[f64], opts: &NewtonOptions) -> Result<SolveBranch> {
    let (u, stats) = refine_newton(energy, u0, opts)?;
    let peak = peak_and_phase(&u)?;
    Ok(SolveBranch {
        eps: energy.epsilon(),
        seed: seed.to_vec(),
        energy: energy.energy(&u)?.total,
        newton_iterations: stats.iterations,
        linear_iterations: stats.linear_iterations,
        final_residual: stats.residual,
        u,
        peak,
    })
}

/// Sub-grid maximum of `|u|` by a three-point quadratic fit of `|u|²` per
/// axis, and the phase gradient `arg(u₊ ū₋)/(2h)` at the maximal node.
pub fn peak_and_phase(u: &ComplexField) -> Result<Peak> {
    let grid = u.grid();
    let n = grid.dim();
    let h = grid.spacing();
    let vals = u.values();
    let (imax, best) = vals
        .iter()
        .enumerate()
        .filter(|(i, _)| !grid.is_boundary(*i))
        .map(|(i, v)| (i, v.norm_sqr()))
        .fold((usize::MAX, 0.0), |acc, (i, a)| if a > acc.1 { (i, a) } else { acc });
    if imax == usize::MAX || !(best > 0.0) {
        return Err(Error::FlatField);
    }
    // a second maximum away from the neighbourhood means the peak is not unique
    let k0 = grid.multi_index(imax);
    let far_tie = vals.iter().enumerate().any(|(i, v)| {
        let k = grid.multi_index(i);
        let dist = (0..n).map(|a| k[a].abs_diff(k0[a])).max().unwrap_or(0);
        dist > 2 && v.norm_sqr() >= best * (1.0 - 1e-9)
    });
    if far_tie {
        return Err(Error::FlatField);
    }
    let mut location = Vec::with_capacity(n);
    let mut phase_gradient = Vec::with_capacity(n);
    for axis in 0..n {
        let s = grid.stride(axis);
        let (um, u0, up) = (vals[imax - s], vals[imax], vals[imax + s]);
        let (fm, f0, fp) = (um.norm_sqr(), u0.norm_sqr(), up.norm_sqr());
        let curv = fm - 2.0 * f0 + fp;
        if !(curv < 0.0) {
            return Err(Error::FlatField);
        }
        let shift = 0.5 * h * (fm - fp) / curv;
        location.push(grid.coordinate(axis, k0[axis]) + shift);
        let floor = 1e-6 * best.sqrt();
        phase_gradient.push(if um.norm() > floor && up.norm() > floor {
            (up * um.conj()).arg() / (2.0 * h)
        } else {
            0.0
        });
    }
    Ok(Peak {
        location,
        phase_gradient,
        amplitude: best.sqrt(),
    })
}

/// `min_σ ‖u₁ − e^{iσ} u₂‖_E`, evaluated at the optimal phase to avoid the
/// cancellation in `‖u₁‖² + ‖u₂‖² − 2|⟨u₁, u₂⟩|`.
pub fn orbit_distance(u1: &ComplexField, u2: &ComplexField) -> Result<f64> {
    let re = inner_e(u1, u2)?;
    let im = inner_e(u1, &u2.times_i())?;
    let sigma = im.atan2(re);
    Ok(norm_e(&u1.sub(&u2.scaled(Complex64::from_polar(1.0, sigma)))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub seed_index: usize,
    /// Seed in slow variables; the ansatz sits at `ξ = seed/ε`.
    pub seed: Vec<f64>,
    pub peak: Option<Vec<f64>>,
    /// `dist(ε·x*, crit Λ)`
    pub distance: Option<f64>,
    pub phase_gradient: Option<Vec<f64>>,
    /// `A(ε·x*)`
    pub potential_at_peak: Option<Vec<f64>>,
    pub psi: Option<f64>,
    pub energy: Option<f64>,
    pub newton_iterations: Option<usize>,
    pub final_residual: Option<f64>,
    /// Index of the distinct orbit among the converged entries at this ε.
    pub orbit: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub ladder: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    /// Distinct solution orbits found at each ε.
    pub orbits: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub correction: CorrectionOptions,
    pub newton: NewtonOptions,
    /// Points of `crit Λ` for the distance column; the seeds when empty.
    pub critical_points: Vec<Vec<f64>>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            correction: CorrectionOptions::default(),
            newton: NewtonOptions::default(),
            critical_points: Vec::new(),
        }
    }
}

/// Reduce and refine at every `(ε, seed)` pair. Failures are recorded per
/// entry and the sweep carries on. Solutions are returned alongside the
/// report in the same order as its entries.
pub fn concentration_sweep(
    profile: &RadialProfile,
    spec: &FieldSpec,
    ladder: &[f64],
    seeds: &[Vec<f64>],
    rule: &GridRule,
    opts: &SweepOptions,
) -> Result<(SweepReport, Vec<Option<ComplexField>>)> {
    if ladder.is_empty() || ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("the ε ladder must be decreasing".into()));
    }
    if seeds.is_empty() || seeds.iter().any(|s| s.len() != spec.dim()) {
        return Err(Error::InvalidInput("need seeds of the field dimension".into()));
    }
    let crit = if opts.critical_points.is_empty() {
        seeds.to_vec()
    } else {
        opts.critical_points.clone()
    };
    let tasks: Vec<(f64, usize)> = ladder
        .iter()
        .flat_map(|&e| (0..seeds.len()).map(move |s| (e, s)))
        .collect();
    let results: Vec<(SweepEntry, Option<ComplexField>)> = tasks
        .par_iter()
        .map(|&(eps, si)| {
            let mut entry = SweepEntry {
                eps,
                seed_index: si,
                seed: seeds[si].clone(),
                peak: None,
                distance: None,
                phase_gradient: None,
                potential_at_peak: None,
                psi: None,
                energy: None,
                newton_iterations: None,
                final_residual: None,
                orbit: None,
                error: None,
            };
            match sweep_point(profile, spec, eps, &seeds[si], rule, opts) {
                Ok((psi, br)) => {
                    let slow: Vec<f64> = br.peak.location.iter().map(|c| eps * c).collect();
                    entry.distance = crit
                        .iter()
                        .map(|c| c.iter().zip(&slow).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                        .min_by(|a, b| a.total_cmp(b));
                    entry.potential_at_peak = Some(spec.potential_at(&slow));
                    entry.peak = Some(br.peak.location.clone());
                    entry.phase_gradient = Some(br.peak.phase_gradient.clone());
                    entry.psi = Some(psi);
                    entry.energy = Some(br.energy);
                    entry.newton_iterations = Some(br.newton_iterations);
                    entry.final_residual = Some(br.final_residual);
                    (entry, Some(br.u))
                }
                Err(e) => {
                    entry.error = Some(e.to_string());
                    (entry, None)
                }
            }
        })
        .collect();
    let (mut entries, fields): (Vec<SweepEntry>, Vec<Option<ComplexField>>) = results.into_iter().unzip();

    // orbit bookkeeping per ε, in seed order
    let sep = 10.0 * opts.newton.tol;
    let mut orbits = Vec::with_capacity(ladder.len());
    for (li, _) in ladder.iter().enumerate() {
        let range = li * seeds.len()..(li + 1) * seeds.len();
        let mut reps: Vec<usize> = Vec::new();
        for i in range {
            let Some(u) = &fields[i] else { continue };
            let mut found = None;
            for (k, &r) in reps.iter().enumerate() {
                let v = fields[r].as_ref().expect("representative converged");
                let same = match orbit_distance(u, v) {
                    Ok(d) => d <= sep,
                    // different boxes: compare the peaks instead
                    Err(Error::GridMismatch) => {
                        let (a, b) = (entries[i].peak.as_ref(), entries[r].peak.as_ref());
                        let h = u.grid().spacing().max(v.grid().spacing());
                        a.zip(b)
                            .map(|(a, b)| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 2.0 * h))
                            .unwrap_or(false)
                    }
                    Err(e) => return Err(e),
                };
                if same {
                    found = Some(k);
                    break;
                }
            }
            let k = found.unwrap_or_else(|| {
                reps.push(i);
                reps.len() - 1
            });
            entries[i].orbit = Some(k);
        }
        orbits.push(reps.len());
    }
    Ok((
        SweepReport {
            ladder: ladder.to_vec(),
            entries,
            orbits,
        },
        fields,
    ))
}

fn sweep_point(
    profile: &RadialProfile,
    spec: &FieldSpec,
    eps: f64,
    seed: &[f64],
    rule: &GridRule,
    opts: &SweepOptions,
) -> Result<(f64, SolveBranch)> {
    let xi: Vec<f64> = seed.iter().map(|c| c / eps).collect();
    let grid = rule.grid_at(&xi)?;
    let params = AnsatzParams::new(eps, &xi, 0.0);
    let red = Reduction::new(profile, spec, &params, &grid)?;
    let res = red.solve(&opts.correction)?;
    let u0 = red.ansatz().add(&res.w);
    let branch = solve_branch(red.energy(), &u0, &xi, &opts.newton)?;
    Ok((res.psi, branch))
}

/// Newton from the bare ansatz, for callers without a reduction.
pub fn solve_from_ansatz(
    profile: &RadialProfile,
    spec: &FieldSpec,
    params: &AnsatzParams,
    grid: &Grid,
    opts: &NewtonOptions,
) -> Result<SolveBranch> {
    let energy = EnergyFunctional::new(spec, profile.exponent(), params.eps, grid)?;
    let z = build_ansatz(profile, spec, params, grid)?;
    solve_branch(&energy, &z, &params.xi, opts)
}

/// `e^{i a·x} u`, the constant-shift gauge transform.
pub fn gauge_transform(u: &ComplexField, a: &[f64]) -> ComplexField {
    let grid = u.grid();
    let data = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = grid.node(i);
            let phase: f64 = a.iter().zip(&x).map(|(c, y)| c * y).sum();
            v * Complex64::from_polar(1.0, phase)
        })
        .collect();
    ComplexField::from_values(grid, data).expect("same grid")
}

impl SweepReport {
    /// CSV with columns
    /// `eps,seed_index,peak_1..n,distance,phase_1..n,a_1..n,psi,energy,newton_iterations,final_residual,orbit,error`.
    pub fn write_csv<W: Write>(&self, dim: usize, mut out: W) -> std::io::Result<()> {
        let cols = |name: &str| (1..=dim).map(|i| format!("{name}_{i}")).collect::<Vec<_>>().join(",");
        writeln!(
            out,
            "eps,seed_index,{},distance,{},{},psi,energy,newton_iterations,final_residual,orbit,error",
            cols("peak"),
            cols("phase"),
            cols("a")
        )?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let fmt_vec = |v: &Option<Vec<f64>>| match v {
            Some(v) => v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(","),
            None => vec![String::new(); dim].join(","),
        };
        for e in &self.entries {
            writeln!(
                out,
                "{:.16e},{},{},{},{},{},{},{},{},{},{},{}",
                e.eps,
                e.seed_index,
                fmt_vec(&e.peak),
                fmt(e.distance),
                fmt_vec(&e.phase_gradient),
                fmt_vec(&e.potential_at_peak),
                fmt(e.psi),
                fmt(e.energy),
                e.newton_iterations.map(|v| v.to_string()).unwrap_or_default(),
                fmt(e.final_residual),
                e.orbit.map(|v| v.to_string()).unwrap_or_default(),
                e.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            )?;
        }
        Ok(())
    }
}
