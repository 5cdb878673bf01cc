#![allow(dead_code)]

use nlsred::fields::FieldSpec;
use nlsred::grid::{ComplexField, Grid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fields with every coefficient varying.
pub fn varying_fields() -> FieldSpec {
    FieldSpec::from_exprs(
        2,
        "0.4*exp(-((x1-0.5)^2 + x2^2)) + 0.1*sin(x2)",
        "1 + 0.3*exp(-(x1^2 + (x2+0.3)^2))",
        &["-0.4*x2 + 0.2*x1^2", "0.4*x1 + 0.1*sin(x2)"],
    )
    .unwrap()
}

/// A few Gaussian blobs with random centres, widths and phases, plus
/// node-level noise.
pub fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, noise: f64) -> ComplexField {
    let n = grid.dim();
    let l = grid.half_width();
    let blobs: Vec<(Vec<f64>, f64, Complex64, Vec<f64>)> = (0..3)
        .map(|_| {
            let c: Vec<f64> = (0..n).map(|a| grid.center()[a] + rng.gen_range(-0.4 * l..0.4 * l)).collect();
            let w = rng.gen_range(0.5..1.5);
            let amp = Complex64::from_polar(rng.gen_range(0.3..1.5), rng.gen_range(0.0..6.3));
            let k: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (c, w, amp, k)
        })
        .collect();
    let mut u = ComplexField::from_fn(grid, |x| {
        blobs
            .iter()
            .map(|(c, w, amp, k)| {
                let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                let ph: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum();
                amp * Complex64::from_polar((-r2 / (w * w)).exp(), ph)
            })
            .sum()
    });
    for (idx, v) in u.values_mut().iter_mut().enumerate() {
        if noise > 0.0 && !grid.is_boundary(idx) {
            *v += Complex64::new(rng.gen_range(-noise..noise), rng.gen_range(-noise..noise));
        }
    }
    u
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
