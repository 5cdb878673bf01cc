//! Positive radial ground state of `-ΔU + U = U^p` in `R^n`.
//!
//! The profile is obtained by shooting on the radial ODE
//! `U'' + (n-1)/r U' - U + U^p = 0`, `U'(0) = 0`, bisecting on the
//! height `U(0)` between trajectories that cross zero and trajectories
//! that turn back up. Past the radius where the bracketing trajectories
//! separate, the profile continues with the exact linear tail
//! `r^(1-n/2) K_{n/2-1}(r)`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SERIES_RADIUS: f64 = 1e-4;
const SHOOT_RADIUS: f64 = 60.0;
const INITIAL_STEP: f64 = 1.0 / 32.0;
const MIN_STEP: f64 = 1.0 / 8192.0;
const LADDER_RUNGS: usize = 60;
/// Relative gap between the bracketing trajectories at which the shooting
/// data stops being trusted.
const SEPARATION_TOL: f64 = 1e-8;
const TAIL_SPACING: f64 = 0.02;
const TAIL_FLOOR: f64 = 1e-13;

/// Surface area of the unit sphere `S^{n-1}` (for `n = 1` the two-point "sphere").
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => sphere_area(dim - 2) * 2.0 * PI / (dim - 2) as f64,
    }
}

/// Checks `1 < p` and, for `n >= 3`, `p < (n+2)/(n-2)`.
pub fn check_exponent(dim: usize, p: f64) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let ok_lower = p.is_finite() && p > 1.0;
    if dim >= 3 {
        let bound = (dim as f64 + 2.0) / (dim as f64 - 2.0);
        if !ok_lower || p >= bound {
            return Err(Error::SupercriticalExponent {
                dim,
                p,
                bound: format!(" < {bound}"),
            });
        }
    } else if !ok_lower {
        return Err(Error::SupercriticalExponent {
            dim,
            p,
            bound: String::new(),
        });
    }
    Ok(())
}

/// Sampled positive radial ground state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    dim: usize,
    exponent: f64,
    radii: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    curvatures: Vec<f64>,
    shoot_height: f64,
    decay_rate: f64,
    /// Change of `U(0)` under step halving of the integrator.
    shooting_error: f64,
}

/// Integrals of the profile over `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// `∫ U²`
    pub mass: f64,
    /// `∫ U^{p+1}`
    pub nonlinear_mass: f64,
    /// `∫ |y|² U²`
    pub second_moment: f64,
    /// `∫ |y|⁴ U²`
    pub fourth_moment: f64,
    /// `∫ |∇U|²`
    pub gradient_mass: f64,
    /// Largest relative change of any moment under interval halving.
    pub quadrature_error: f64,
}

impl Moments {
    /// Moments of `α U(β ·)` obtained from these by change of variables.
    pub fn scaled(&self, alpha: f64, beta: f64, dim: usize, p: f64) -> Moments {
        let n = dim as f64;
        let jac = beta.powf(-n);
        Moments {
            mass: alpha * alpha * jac * self.mass,
            nonlinear_mass: alpha.powf(p + 1.0) * jac * self.nonlinear_mass,
            second_moment: alpha * alpha * jac * beta.powi(-2) * self.second_moment,
            fourth_moment: alpha * alpha * jac * beta.powi(-4) * self.fourth_moment,
            gradient_mass: alpha * alpha * jac * beta * beta * self.gradient_mass,
            quadrature_error: self.quadrature_error,
        }
    }

    /// Relative defect of the Nehari identity `∫|∇U|² + U² = ∫U^{p+1}`.
    pub fn nehari_defect(&self) -> f64 {
        ((self.gradient_mass + self.mass) - self.nonlinear_mass).abs() / self.nonlinear_mass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    /// `U` reached zero: the height was too large.
    Crossing,
    /// `U'` turned positive: the height was too small.
    TurnBack,
    Undecided,
}

struct Trajectory {
    r: Vec<f64>,
    u: Vec<f64>,
    du: Vec<f64>,
    fate: Fate,
}

fn nonlinearity(u: f64, p: f64) -> f64 {
    u.abs().powf(p - 1.0) * u
}

fn acceleration(dim: usize, p: f64, r: f64, u: f64, du: f64) -> f64 {
    let friction = if dim > 1 && r > 0.0 {
        (dim as f64 - 1.0) / r * du
    } else {
        0.0
    };
    -friction + u - nonlinearity(u, p)
}

fn shoot(dim: usize, p: f64, height: f64, step: f64, record: bool) -> Trajectory {
    let mut traj = Trajectory {
        r: Vec::new(),
        u: Vec::new(),
        du: Vec::new(),
        fate: Fate::Undecided,
    };
    let (mut r, mut u, mut du) = if dim == 1 {
        (0.0, height, 0.0)
    } else {
        if record {
            traj.r.push(0.0);
            traj.u.push(height);
            traj.du.push(0.0);
        }
        let c = (height - height.powf(p)) / dim as f64;
        (
            SERIES_RADIUS,
            height + 0.5 * c * SERIES_RADIUS * SERIES_RADIUS,
            c * SERIES_RADIUS,
        )
    };
    if record {
        traj.r.push(r);
        traj.u.push(u);
        traj.du.push(du);
    }
    if height <= 1.0 {
        traj.fate = Fate::TurnBack;
        return traj;
    }
    let f = |r: f64, u: f64, du: f64| acceleration(dim, p, r, u, du);
    while r < SHOOT_RADIUS {
        // graded steps keep the explicit scheme stable against the (n-1)/r friction
        let dr = if dim > 1 { step.min(0.25 * r) } else { step };
        let k1u = du;
        let k1v = f(r, u, du);
        let k2u = du + 0.5 * dr * k1v;
        let k2v = f(r + 0.5 * dr, u + 0.5 * dr * k1u, du + 0.5 * dr * k1v);
        let k3u = du + 0.5 * dr * k2v;
        let k3v = f(r + 0.5 * dr, u + 0.5 * dr * k2u, du + 0.5 * dr * k2v);
        let k4u = du + dr * k3v;
        let k4v = f(r + dr, u + dr * k3u, du + dr * k3v);
        u += dr / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        du += dr / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        r += dr;
        if record {
            traj.r.push(r);
            traj.u.push(u);
            traj.du.push(du);
        }
        if u <= 0.0 {
            traj.fate = Fate::Crossing;
            return traj;
        }
        if du > 0.0 {
            traj.fate = Fate::TurnBack;
            return traj;
        }
    }
    traj
}

/// Returns the bracket `(lo, hi)` after bisection to machine precision.
fn bisect_height(dim: usize, p: f64, step: f64) -> Result<(f64, f64)> {
    let mut lo = 1.0;
    let mut hi = None;
    let mut rung = 2.0;
    for _ in 0..LADDER_RUNGS {
        match shoot(dim, p, rung, step, false).fate {
            Fate::Crossing => {
                hi = Some(rung);
                break;
            }
            Fate::TurnBack => lo = rung,
            Fate::Undecided => return Ok((rung, rung)),
        }
        rung *= 2.0;
    }
    let mut hi = hi.ok_or_else(|| {
        Error::NonConvergence(format!(
            "no crossing trajectory below U(0) = {rung:e} for n = {dim}, p = {p}"
        ))
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(dim, p, mid, step, false).fate {
            Fate::Crossing => hi = mid,
            Fate::TurnBack => lo = mid,
            Fate::Undecided => return Ok((mid, mid)),
        }
    }
    Ok((lo, hi))
}

/// Linear tail shape `r^{(1-n)/2} e^{-r} S(r)` where `S` is the asymptotic
/// series of `K_ν`, `ν = n/2 - 1`; returns `(g, g'/g)`.
fn tail_shape(dim: usize, r: f64) -> (f64, f64) {
    let nu = dim as f64 / 2.0 - 1.0;
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut dsum = 0.0;
    for k in 1..30 {
        let kf = k as f64;
        let next = term * (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * r);
        if next.abs() > term.abs() || next == 0.0 {
            break;
        }
        term = next;
        sum += term;
        dsum -= kf * term / r;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    let power = 0.5 * (1.0 - dim as f64);
    let g = r.powf(power) * (-r).exp() * sum;
    (g, power / r - 1.0 + dsum / sum)
}

/// Solves the limit problem `-ΔU + U = U^p`, `U > 0`, `U(0) = max U`.
///
/// The integrator step is halved until the shooting height changes by at
/// most `tol`.
pub fn solve_ground_state(dim: usize, p: f64, tol: f64) -> Result<RadialProfile> {
    check_exponent(dim, p)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let mut step = INITIAL_STEP;
    let (mut lo, mut hi) = bisect_height(dim, p, step)?;
    let mut error = f64::INFINITY;
    while step > MIN_STEP {
        let (lo2, hi2) = bisect_height(dim, p, 0.5 * step)?;
        error = (0.5 * (lo2 + hi2) - 0.5 * (lo + hi)).abs();
        step *= 0.5;
        lo = lo2;
        hi = hi2;
        if error <= tol {
            break;
        }
    }
    if error > tol {
        return Err(Error::NonConvergence(format!(
            "shooting height still moves by {error:e} at the smallest step"
        )));
    }
    build_profile(dim, p, lo, hi, step, error)
}

fn build_profile(
    dim: usize,
    p: f64,
    lo: f64,
    hi: f64,
    step: f64,
    shooting_error: f64,
) -> Result<RadialProfile> {
    let low = shoot(dim, p, lo, step, true);
    let high = shoot(dim, p, hi, step, true);
    let height = 0.5 * (lo + hi);
    let len = low.r.len().min(high.r.len());
    let mut radii = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    let mut slopes = Vec::with_capacity(len);
    for i in 0..len {
        let u = 0.5 * (low.u[i] + high.u[i]);
        let du = 0.5 * (low.du[i] + high.du[i]);
        let gap = (low.u[i] - high.u[i]).abs();
        if u <= 0.0 || gap > SEPARATION_TOL * u || (i > 0 && (du >= 0.0 || u >= values[i - 1])) {
            break;
        }
        radii.push(low.r[i]);
        values.push(if i == 0 { height } else { u });
        slopes.push(du);
    }
    if radii.len() < 8 {
        return Err(Error::NonConvergence(
            "bracketing trajectories separate immediately".into(),
        ));
    }

    // continue with the linear tail, matched in value at the cut
    let r_cut = *radii.last().unwrap();
    let u_cut = *values.last().unwrap();
    let (g_cut, _) = tail_shape(dim, r_cut);
    let mut r = r_cut + TAIL_SPACING;
    loop {
        let (g, log_slope) = tail_shape(dim, r);
        let u = u_cut * g / g_cut;
        radii.push(r);
        values.push(u);
        slopes.push(u * log_slope);
        if u < TAIL_FLOOR * height {
            break;
        }
        r += TAIL_SPACING;
    }

    let curvatures = radii
        .iter()
        .zip(values.iter().zip(&slopes))
        .map(|(&r, (&u, &du))| {
            if r == 0.0 {
                (u - nonlinearity(u, p)) / dim as f64
            } else {
                acceleration(dim, p, r, u, du)
            }
        })
        .collect();

    let mut profile = RadialProfile {
        dim,
        exponent: p,
        radii,
        values,
        slopes,
        curvatures,
        shoot_height: height,
        decay_rate: 1.0,
        shooting_error,
    };
    profile.decay_rate = profile.fit_decay_rate();
    Ok(profile)
}

/// Cubic Hermite interpolation on `[x0, x1]`.
fn hermite(x0: f64, x1: f64, f0: f64, f1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * f0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * f1
        + (t3 - t2) * h * d1
}

/// Fritsch–Carlson limited slopes for a decreasing interval.
fn limited(secant: f64, d0: f64, d1: f64) -> (f64, f64) {
    if secant == 0.0 {
        return (0.0, 0.0);
    }
    let a = d0 / secant;
    let b = d1 / secant;
    let (a, b) = (a.max(0.0), b.max(0.0));
    let s = a * a + b * b;
    if s > 9.0 {
        let tau = 3.0 / s.sqrt();
        (tau * a * secant, tau * b * secant)
    } else {
        (a * secant, b * secant)
    }
}

impl RadialProfile {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `U(0)`.
    pub fn shoot_height(&self) -> f64 {
        self.shoot_height
    }

    /// Exponential rate fitted to `-ln U` over the region `U < 10⁻³ U(0)`.
    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    pub fn shooting_error(&self) -> f64 {
        self.shooting_error
    }

    fn last_radius(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    fn interval(&self, r: f64) -> usize {
        match self
            .radii
            .binary_search_by(|probe| probe.partial_cmp(&r).unwrap())
        {
            Ok(i) => i.min(self.radii.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.radii.len() - 2),
        }
    }

    /// `U(r)`: monotone cubic interpolation inside the sampled range,
    /// the exponential tail beyond it.
    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.last_radius() {
            let (g, _) = tail_shape(self.dim, r);
            let (g_last, _) = tail_shape(self.dim, self.last_radius());
            return *self.values.last().unwrap() * g / g_last;
        }
        let i = self.interval(r);
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let (u0, u1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = limited((u1 - u0) / (r1 - r0), self.slopes[i], self.slopes[i + 1]);
        hermite(r0, r1, u0, u1, d0, d1, r)
    }

    /// `U'(r)`, interpolated from the sampled `U'` and `U''`.
    pub fn derivative(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.last_radius() {
            let (_, log_slope) = tail_shape(self.dim, r);
            return self.value(r) * log_slope;
        }
        let i = self.interval(r);
        hermite(
            self.radii[i],
            self.radii[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            self.curvatures[i],
            self.curvatures[i + 1],
            r,
        )
    }

    fn fit_decay_rate(&self) -> f64 {
        let threshold = 1e-3 * self.shoot_height;
        let pts: Vec<(f64, f64)> = self
            .radii
            .iter()
            .zip(&self.values)
            .filter(|(_, &u)| u < threshold)
            .map(|(&r, &u)| (r, -u.ln()))
            .collect();
        if pts.len() < 2 {
            return 1.0;
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    fn integrate_moments(&self, splits: usize) -> [f64; 5] {
        // three-point Gauss–Legendre on each (sub)interval
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let n = self.dim as i32;
        let p = self.exponent;
        let mut acc = [0.0; 5];
        for i in 0..self.radii.len() - 1 {
            let (a, b) = (self.radii[i], self.radii[i + 1]);
            let width = (b - a) / splits as f64;
            for s in 0..splits {
                let lo = a + s as f64 * width;
                let mid = lo + 0.5 * width;
                for (x, w) in NODES.iter().zip(WEIGHTS) {
                    let r = mid + 0.5 * width * x;
                    let u = hermite(a, b, self.values[i], self.values[i + 1], self.slopes[i], self.slopes[i + 1], r);
                    let du = hermite(a, b, self.slopes[i], self.slopes[i + 1], self.curvatures[i], self.curvatures[i + 1], r);
                    let jac = 0.5 * width * w * r.powi(n - 1);
                    let u2 = u * u;
                    acc[0] += jac * u2;
                    acc[1] += jac * u.abs().powf(p + 1.0);
                    acc[2] += jac * r * r * u2;
                    acc[3] += jac * r.powi(4) * u2;
                    acc[4] += jac * du * du;
                }
            }
        }
        let area = sphere_area(self.dim);
        acc.map(|v| v * area)
    }

    /// Radial quadrature of the moments, with the step-halving error estimate.
    pub fn moments(&self) -> Moments {
        let coarse = self.integrate_moments(1);
        let fine = self.integrate_moments(2);
        let quadrature_error = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| ((c - f) / f).abs())
            .fold(0.0, f64::max);
        Moments {
            mass: fine[0],
            nonlinear_mass: fine[1],
            second_moment: fine[2],
            fourth_moment: fine[3],
            gradient_mass: fine[4],
            quadrature_error,
        }
    }

    /// Writes the samples as CSV with columns `r,U`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,U")?;
        for (r, u) in self.radii.iter().zip(&self.values) {
            writeln!(out, "{r:.17e},{u:.17e}")?;
        }
        Ok(())
    }

    /// Metadata block: dimension, exponent, `U(0)` and moments.
    pub fn metadata(&self) -> ProfileMetadata {
        ProfileMetadata {
            n: self.dim,
            p: self.exponent,
            shoot_height: self.shoot_height,
            decay_rate: self.decay_rate,
            shooting_error: self.shooting_error,
            samples: self.radii.len(),
            moments: self.moments(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetadata {
    pub n: usize,
    pub p: f64,
    #[serde(rename = "U0")]
    pub shoot_height: f64,
    pub decay_rate: f64,
    pub shooting_error: f64,
    pub samples: usize,
    pub moments: Moments,
}

/// `(α, β)` with `α = ((1+V)/K)^{1/(p-1)}` and `β = (1+V)^{1/2}`, so that
/// `α U(β·)` solves `-ΔW + (1+V) W = K W^p`.
pub fn scaling_factors(v_val: f64, k_val: f64, p: f64) -> Result<(f64, f64)> {
    let shifted = 1.0 + v_val;
    if !(shifted > 0.0) {
        return Err(Error::Domain(format!("1 + V = {shifted} is not positive")));
    }
    if !(k_val > 0.0) {
        return Err(Error::Domain(format!("K = {k_val} is not positive")));
    }
    Ok(((shifted / k_val).powf(1.0 / (p - 1.0)), shifted.sqrt()))
}
