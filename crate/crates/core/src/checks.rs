//! The self-check battery behind `nlsred check`: field hypotheses, the sech
//! ground-state oracle, gradient and Hessian consistency, phase invariance and
//! gauge covariance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{inner_e, norm_e, EnergyFunctional};
use crate::error::Result;
use crate::fields::{check_hypotheses, FieldSpec, HypothesisReport};
use crate::grid::{ComplexField, Grid};
use crate::groundstate::solve_ground_state;
use crate::solver::gauge_transform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckItem {
    fn at_most(name: &str, value: f64, tolerance: f64) -> CheckItem {
        CheckItem {
            name: name.to_string(),
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
    pub hypotheses: HypothesisReport,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub p: f64,
    pub eps: f64,
    pub seed: u64,
    /// Random `(u, v)` pairs for the derivative checks.
    pub pairs: usize,
    pub half_width: f64,
    pub points: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            p: 3.0,
            eps: 0.3,
            seed: 1,
            pairs: 20,
            half_width: 5.0,
            points: 41,
        }
    }
}

/// Gaussian blobs with random centres, widths, amplitudes and wave vectors.
pub fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> ComplexField {
    let n = grid.dim();
    let l = grid.half_width();
    let blobs: Vec<(Vec<f64>, f64, Complex64, Vec<f64>)> = (0..3)
        .map(|_| {
            let c = (0..n).map(|a| grid.center()[a] + rng.gen_range(-0.4 * l..0.4 * l)).collect();
            let w = rng.gen_range(0.5..1.5);
            let amp = Complex64::from_polar(rng.gen_range(0.3..1.5), rng.gen_range(0.0..6.3));
            let k = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (c, w, amp, k)
        })
        .collect();
    ComplexField::from_fn(grid, |x| {
        blobs
            .iter()
            .map(|(c, w, amp, k)| {
                let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                let ph: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum();
                amp * Complex64::from_polar((-r2 / (w * w)).exp(), ph)
            })
            .sum()
    })
}

pub fn run_checks(spec: &FieldSpec, opts: &CheckOptions) -> Result<CheckReport> {
    let mut items = Vec::new();
    let hypotheses = check_hypotheses(spec, 10.0, 41);
    items.push(CheckItem {
        name: "field_hypotheses".into(),
        passed: hypotheses.all_pass(),
        value: hypotheses.non_finite_samples as f64,
        tolerance: 0.0,
    });

    let sech = solve_ground_state(1, 3.0, 1e-10)?;
    let mo = sech.moments();
    let sech_err = (sech.value(0.0) - 2f64.sqrt())
        .abs()
        .max((mo.mass - 4.0).abs())
        .max((mo.nonlinear_mass - 16.0 / 3.0).abs());
    items.push(CheckItem::at_most("sech_oracle", sech_err, 1e-8));
    items.push(CheckItem::at_most("nehari_identity", mo.nehari_defect().abs(), 1e-6));

    let grid = Grid::new(spec.dim(), opts.half_width, opts.points)?;
    let e = EnergyFunctional::new(spec, opts.p, opts.eps, &grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut grad_err, mut sym_err, mut second_err, mut phase_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..opts.pairs {
        let u = random_field(&grid, &mut rng);
        let v = random_field(&grid, &mut rng);
        let w = random_field(&grid, &mut rng);
        let t = 1e-5;
        let g = e.gradient(&u)?;
        let exact = inner_e(&g, &v)?;
        let fp = e.energy(&u.add(&v.scaled(t.into())))?.total;
        let fm = e.energy(&u.sub(&v.scaled(t.into())))?.total;
        let fd = (fp - fm) / (2.0 * t);
        grad_err = grad_err.max((exact - fd).abs() / fd.abs().max(1e-300));

        let hv = e.hessian_apply(&u, &v)?;
        let hw = e.hessian_apply(&u, &w)?;
        let (a, b) = (inner_e(&hv, &w)?, inner_e(&hw, &v)?);
        sym_err = sym_err.max((a - b).abs() / a.abs().max(b.abs()));
        let t2 = 1e-4;
        let f0 = e.energy(&u)?.total;
        let fp2 = e.energy(&u.add(&v.scaled(t2.into())))?.total;
        let fm2 = e.energy(&u.sub(&v.scaled(t2.into())))?.total;
        let second = (fp2 - 2.0 * f0 + fm2) / (t2 * t2);
        let hvv = inner_e(&hv, &v)?;
        second_err = second_err.max((second - hvv).abs() / hvv.abs());

        let sigma = rng.gen_range(0.0..6.3);
        let rotated = e.energy(&u.scaled(Complex64::from_polar(1.0, sigma)))?.total;
        phase_err = phase_err.max((rotated - f0).abs() / f0.abs().max(1.0));
    }
    items.push(CheckItem::at_most("gradient_difference_quotient", grad_err, 1e-6));
    items.push(CheckItem::at_most("hessian_symmetry", sym_err, 1e-10));
    items.push(CheckItem::at_most("hessian_second_difference", second_err, 1e-5));
    items.push(CheckItem::at_most("phase_invariance", phase_err, 1e-12));

    // A + c with u ↦ e^{i c·x} u, which the discrete energy respects exactly
    let shift: Vec<f64> = (0..spec.dim()).map(|j| 0.7 - 0.5 * j as f64).collect();
    let comps: Vec<String> = spec.a().iter().zip(&shift).map(|(a, c)| format!("({a}) + {c}")).collect();
    let refs: Vec<&str> = comps.iter().map(String::as_str).collect();
    let shifted = spec.with_potential(&refs)?;
    let es = EnergyFunctional::new(&shifted, opts.p, opts.eps, &grid)?;
    let u = random_field(&grid, &mut rng);
    let d = (e.energy(&u)?.total - es.energy(&gauge_transform(&u, &shift))?.total).abs();
    let h = grid.spacing();
    items.push(CheckItem::at_most("gauge_covariance", d / norm_e(&u).powi(2), h * h));

    Ok(CheckReport { items, hypotheses })
}
