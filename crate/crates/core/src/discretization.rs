//! Finite-difference energy `f_ε`, its gradient in the `E` inner product and
//! Hessian-vector products.
//!
//! The magnetic kinetic term uses link variables: along the edge from node `k`
//! to `k + e_j` the covariant difference is
//! `D_j u = (e^{-ih A_j(ε m)} u_{k+e_j} - u_k) / h` with `m` the edge midpoint.
//! This keeps the discrete energy exactly invariant under gauge changes by
//! constant potentials and makes the gradient the exact derivative of the
//! discrete energy.
//!
//! The fourth-order stencil combines these edges with two-step edges,
//! `½ Σ (4/3 |D_j u|² - 1/3 |D_j^{(2)} u|²)`, where `D^{(2)}` spans two nodes
//! with the product of both link phases.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::grid::{ComplexField, Grid};

const CHUNK: usize = 4096;

/// Sum of `f(i)` over `0..n` in fixed-size chunks, so that the result does
/// not depend on the thread count.
pub(crate) fn det_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let parts: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum())
        .collect();
    parts.iter().sum()
}

/// `⟨u|v⟩_E = hⁿ Re Σ (∇_h u · conj ∇_h v + u v̄)` with forward differences
/// on every edge.
pub fn inner_e(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    u.check_same_grid(v)?;
    let g = u.grid();
    let (a, b) = (u.values(), v.values());
    let m = g.points();
    let h2 = g.spacing() * g.spacing();
    let strides: Vec<usize> = (0..g.dim()).map(|j| g.stride(j)).collect();
    let s = det_sum(g.len(), |idx| {
        let mut acc = (a[idx] * b[idx].conj()).re;
        let k = g.multi_index(idx);
        for (j, &st) in strides.iter().enumerate() {
            if k[j] + 1 < m {
                let du = a[idx + st] - a[idx];
                let dv = b[idx + st] - b[idx];
                acc += (du * dv.conj()).re / h2;
            }
        }
        acc
    });
    Ok(g.cell_volume() * s)
}

pub fn norm_e(u: &ComplexField) -> f64 {
    inner_e(u, u).expect("same grid").max(0.0).sqrt()
}

/// Dirichlet solver for `(-Δ_h + 1) g = ρ` by a sine transform on the
/// interior nodes.
#[derive(Clone)]
pub struct Helmholtz {
    grid: Grid,
    interior: usize,
    fft: Arc<dyn Fft<f64>>,
    eig: Vec<f64>,
}

impl std::fmt::Debug for Helmholtz {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Helmholtz")
            .field("grid", &self.grid)
            .field("interior", &self.interior)
            .finish()
    }
}

impl Helmholtz {
    pub fn new(grid: &Grid) -> Helmholtz {
        let n = grid.points() - 2;
        let h = grid.spacing();
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        let eig = (1..=n)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * (n + 1) as f64)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        Helmholtz {
            grid: grid.clone(),
            interior: n,
            fft,
            eig,
        }
    }

    /// Unnormalised DST-I along one axis of an `N^d` block.
    fn dst_axis(&self, buf: &mut [Complex64], axis: usize) {
        let n = self.interior;
        let d = self.grid.dim();
        let stride = n.pow((d - 1 - axis) as u32);
        let outer = n.pow(axis as u32);
        let starts: Vec<usize> = (0..outer)
            .flat_map(|o| (0..stride).map(move |i| o * n * stride + i))
            .collect();
        let half_i = Complex64::new(0.0, 0.5);
        let lines: Vec<Vec<Complex64>> = starts
            .par_iter()
            .map(|&s| {
                let mut y = vec![Complex64::new(0.0, 0.0); 2 * (n + 1)];
                for k in 0..n {
                    let x = buf[s + k * stride];
                    y[k + 1] = x;
                    y[2 * (n + 1) - 1 - k] = -x;
                }
                self.fft.process(&mut y);
                (1..=n).map(|k| y[k] * half_i).collect()
            })
            .collect();
        for (s, line) in starts.iter().zip(lines) {
            for (k, v) in line.into_iter().enumerate() {
                buf[s + k * stride] = v;
            }
        }
    }

    pub fn solve(&self, rho: &ComplexField) -> ComplexField {
        let g = &self.grid;
        let n = self.interior;
        let d = g.dim();
        let m = g.points();
        let total = n.pow(d as u32);
        let to_full = |i: usize| {
            let mut full = 0;
            let mut rem = i;
            let mut mult = 1;
            let mut idx = [0usize; 3];
            for a in (0..d).rev() {
                idx[a] = rem % n + 1;
                rem /= n;
            }
            for a in (0..d).rev() {
                full += idx[a] * mult;
                mult *= m;
            }
            full
        };
        let r = rho.values();
        let mut buf: Vec<Complex64> = (0..total).map(|i| r[to_full(i)]).collect();
        for a in 0..d {
            self.dst_axis(&mut buf, a);
        }
        let norm = (2.0 / (n + 1) as f64).powi(d as i32);
        buf.par_iter_mut().enumerate().for_each(|(i, v)| {
            let mut rem = i;
            let mut lam = 1.0;
            for _ in 0..d {
                lam += self.eig[rem % n];
                rem /= n;
            }
            *v *= norm / lam;
        });
        for a in 0..d {
            self.dst_axis(&mut buf, a);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        for (i, v) in buf.into_iter().enumerate() {
            out[to_full(i)] = v;
        }
        ComplexField::from_values(g, out).expect("same grid")
    }
}

/// Accuracy of the kinetic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// Nearest-neighbour differences, error `O(h²)`.
    Second,
    /// Nearest and next-nearest differences, error `O(h⁴)`.
    #[default]
    Fourth,
}

impl Stencil {
    pub fn name(self) -> &'static str {
        match self {
            Stencil::Second => "second",
            Stencil::Fourth => "fourth",
        }
    }

    /// Weights of the one- and two-step edge terms.
    fn weights(self) -> (f64, f64) {
        match self {
            Stencil::Second => (1.0, 0.0),
            Stencil::Fourth => (4.0 / 3.0, -1.0 / 3.0),
        }
    }
}

/// The three parts of `f_ε`; `total = kinetic + potential - nonlinear`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    /// `½ ∫ |(∇/i - A(εx)) u|²`
    pub kinetic: f64,
    /// `½ ∫ (1 + V(εx)) |u|²`
    pub potential: f64,
    /// `1/(p+1) ∫ K(εx) |u|^{p+1}`
    pub nonlinear: f64,
}

/// `f_ε` on a fixed grid with the fields sampled at `εx`.
#[derive(Debug, Clone)]
pub struct EnergyFunctional {
    grid: Grid,
    p: f64,
    eps: f64,
    shift: Vec<f64>,
    k: Vec<f64>,
    /// `links[j][idx]` sits on the edge from `idx` to `idx + e_j`.
    links: Vec<Vec<Complex64>>,
    stencil: Stencil,
    helmholtz: Helmholtz,
}

impl EnergyFunctional {
    /// Functional with the default fourth-order stencil.
    pub fn new(spec: &FieldSpec, p: f64, eps: f64, grid: &Grid) -> Result<EnergyFunctional> {
        EnergyFunctional::with_stencil(spec, p, eps, grid, Stencil::default())
    }

    pub fn with_stencil(
        spec: &FieldSpec,
        p: f64,
        eps: f64,
        grid: &Grid,
        stencil: Stencil,
    ) -> Result<EnergyFunctional> {
        let n = grid.dim();
        if spec.dim() != n {
            return Err(Error::InvalidInput(format!(
                "fields are {}-dimensional, grid is {n}-dimensional",
                spec.dim()
            )));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("need p >= 2 for the discrete operators, got {p}")));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("need eps > 0, got {eps}")));
        }
        let h = grid.spacing();
        let sampled: Vec<(f64, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let x = grid.node(idx);
                let y: Vec<f64> = x[..n].iter().map(|c| eps * c).collect();
                (1.0 + spec.v().value(&y), spec.k().value(&y))
            })
            .collect();
        if sampled.iter().any(|(s, k)| !s.is_finite() || !k.is_finite()) {
            return Err(Error::Domain("V or K not finite on the grid".into()));
        }
        let (shift, k) = sampled.into_iter().unzip();
        let links = (0..n)
            .map(|j| {
                (0..grid.len())
                    .into_par_iter()
                    .map(|idx| {
                        let mut y = grid.node(idx);
                        y[j] += 0.5 * h;
                        let y: Vec<f64> = y[..n].iter().map(|c| eps * c).collect();
                        let a = spec.a()[j].value(&y);
                        Complex64::from_polar(1.0, -h * a)
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        if links.iter().flatten().any(|w| !w.re.is_finite()) {
            return Err(Error::Domain("A not finite on the grid".into()));
        }
        Ok(EnergyFunctional {
            grid: grid.clone(),
            p,
            eps,
            shift,
            k,
            links,
            stencil,
            helmholtz: Helmholtz::new(grid),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn helmholtz(&self) -> &Helmholtz {
        &self.helmholtz
    }

    fn check(&self, u: &ComplexField) -> Result<()> {
        if u.grid() == &self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `|u|^{p-1}` from `|u|²`.
    fn pow_m1(&self, n2: f64) -> f64 {
        if self.p == 3.0 {
            n2
        } else {
            n2.powf(0.5 * (self.p - 1.0))
        }
    }

    pub fn energy(&self, u: &ComplexField) -> Result<EnergyReport> {
        self.check(u)?;
        let g = &self.grid;
        let m = g.points();
        let h2 = g.spacing() * g.spacing();
        let a = u.values();
        let strides: Vec<usize> = (0..g.dim()).map(|j| g.stride(j)).collect();
        let (w1, w2) = self.stencil.weights();
        let kin = det_sum(g.len(), |idx| {
            let k = g.multi_index(idx);
            let mut acc = 0.0;
            for (j, &st) in strides.iter().enumerate() {
                if k[j] + 1 < m {
                    acc += w1 * (self.links[j][idx] * a[idx + st] - a[idx]).norm_sqr();
                }
                if w2 != 0.0 && k[j] + 2 < m {
                    let link = self.links[j][idx] * self.links[j][idx + st];
                    acc += 0.25 * w2 * (link * a[idx + 2 * st] - a[idx]).norm_sqr();
                }
            }
            acc / h2
        });
        let pot = det_sum(g.len(), |idx| self.shift[idx] * a[idx].norm_sqr());
        let nl = det_sum(g.len(), |idx| {
            let n2 = a[idx].norm_sqr();
            self.k[idx] * self.pow_m1(n2) * n2
        });
        let w = g.cell_volume();
        let kinetic = 0.5 * w * kin;
        let potential = 0.5 * w * pot;
        let nonlinear = w * nl / (self.p + 1.0);
        Ok(EnergyReport {
            total: kinetic + potential - nonlinear,
            kinetic,
            potential,
            nonlinear,
        })
    }

    /// Discrete magnetic Laplacian plus `(1+V)u`; the one-step part is
    /// `Σ_j (2u - ω u₊ - ω̄₋ u₋)/h²`, and two-step edges enter only where
    /// both ends lie on the grid.
    fn linear_part(&self, v: &[Complex64], idx: usize) -> Complex64 {
        let g = &self.grid;
        let m = g.points();
        let h2 = g.spacing() * g.spacing();
        let (w1, w2) = self.stencil.weights();
        let k = g.multi_index(idx);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..g.dim() {
            let st = g.stride(j);
            let up = self.links[j][idx] * v[idx + st];
            let down = self.links[j][idx - st].conj() * v[idx - st];
            acc += (v[idx] * 2.0 - up - down) * w1;
            if w2 != 0.0 {
                let mut two = Complex64::new(0.0, 0.0);
                if k[j] + 2 < m {
                    let link = self.links[j][idx] * self.links[j][idx + st];
                    two += v[idx] - link * v[idx + 2 * st];
                }
                if k[j] >= 2 {
                    let link = self.links[j][idx - 2 * st] * self.links[j][idx - st];
                    two += v[idx] - link.conj() * v[idx - 2 * st];
                }
                acc += two * (0.25 * w2);
            }
        }
        acc / h2 + v[idx] * self.shift[idx]
    }

    /// Euler–Lagrange residual `ρ(u)` on the interior.
    pub fn l2_residual(&self, u: &ComplexField) -> Result<ComplexField> {
        self.check(u)?;
        let g = &self.grid;
        let a = u.values();
        let data = (0..g.len())
            .into_par_iter()
            .map(|idx| {
                if g.is_boundary(idx) {
                    return Complex64::new(0.0, 0.0);
                }
                let n2 = a[idx].norm_sqr();
                self.linear_part(a, idx) - a[idx] * (self.k[idx] * self.pow_m1(n2))
            })
            .collect();
        ComplexField::from_values(g, data)
    }

    /// `E`-gradient: `(-Δ_h + 1)⁻¹ ρ(u)`.
    pub fn gradient(&self, u: &ComplexField) -> Result<ComplexField> {
        Ok(self.helmholtz.solve(&self.l2_residual(u)?))
    }

    /// Second derivative at `u` applied to `v`, before the Riesz map.
    pub fn hessian_l2(&self, u: &ComplexField, v: &ComplexField) -> Result<ComplexField> {
        self.check(u)?;
        self.check(v)?;
        let g = &self.grid;
        let (a, b) = (u.values(), v.values());
        let p = self.p;
        let data = (0..g.len())
            .into_par_iter()
            .map(|idx| {
                if g.is_boundary(idx) {
                    return Complex64::new(0.0, 0.0);
                }
                let ui = a[idx];
                let n2 = ui.norm_sqr();
                let mut nl = b[idx] * self.pow_m1(n2);
                if n2 > 0.0 {
                    let f = if p == 3.0 { 1.0 } else { n2.powf(0.5 * (p - 3.0)) };
                    nl += ui * ((p - 1.0) * f * (ui.conj() * b[idx]).re);
                }
                self.linear_part(b, idx) - nl * self.k[idx]
            })
            .collect();
        ComplexField::from_values(g, data)
    }

    /// `E`-representative of `D²f_ε(u)[v, ·]`.
    pub fn hessian_apply(&self, u: &ComplexField, v: &ComplexField) -> Result<ComplexField> {
        Ok(self.helmholtz.solve(&self.hessian_l2(u, v)?))
    }

    /// Node-centred covariant derivatives `(∂_j u)/i - A_j(εx) u`, realised as
    /// `(ω u₊ - ω̄₋ u₋) / (2ih)` with the link phases.
    pub fn magnetic_gradient(&self, u: &ComplexField) -> Result<Vec<ComplexField>> {
        self.check(u)?;
        let g = &self.grid;
        let a = u.values();
        let inv = Complex64::new(0.0, -0.5 / g.spacing());
        (0..g.dim())
            .map(|j| {
                let st = g.stride(j);
                let data = (0..g.len())
                    .into_par_iter()
                    .map(|idx| {
                        if g.is_boundary(idx) {
                            return Complex64::new(0.0, 0.0);
                        }
                        (self.links[j][idx] * a[idx + st] - self.links[j][idx - st].conj() * a[idx - st]) * inv
                    })
                    .collect();
                ComplexField::from_values(g, data)
            })
            .collect()
    }
}
