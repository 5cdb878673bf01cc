//! Uniform tensor grids with Dirichlet boundary and complex fields on them.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of nodes (16.8 million).
pub const DEFAULT_NODE_BUDGET: usize = 1 << 24;

/// Nodes `x_k = c - L + k h`, `k = 0..m`, on each axis, stored row-major with
/// the first axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
    spacing: f64,
    center: Vec<f64>,
}

impl Grid {
    /// Grid centred at the origin with the default node budget.
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Grid> {
        Grid::with_center(vec![0.0; dim], half_width, points, DEFAULT_NODE_BUDGET)
    }

    pub fn with_center(center: Vec<f64>, half_width: f64, points: usize, budget: usize) -> Result<Grid> {
        let dim = center.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("dimension {dim} not in 1..=3")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidInput(format!("half width {half_width} must be positive")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("grid centre must be finite".into()));
        }
        if points < 16 {
            return Err(Error::InvalidInput(format!("need at least 16 points per axis, got {points}")));
        }
        let nodes = (points as u128).pow(dim as u32);
        if nodes > budget as u128 {
            return Err(Error::TooLarge {
                nodes: nodes.min(usize::MAX as u128) as usize,
                budget,
            });
        }
        Ok(Grid {
            dim,
            half_width,
            points,
            spacing: 2.0 * half_width / (points - 1) as f64,
            center,
        })
    }

    /// Same size and spacing, moved to a new centre.
    pub fn recentered(&self, center: &[f64]) -> Result<Grid> {
        Grid::with_center(center.to_vec(), self.half_width, self.points, usize::MAX)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `hⁿ`, the quadrature weight of a node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Flat-index step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    pub fn coordinate(&self, axis: usize, k: usize) -> f64 {
        self.center[axis] - self.half_width + k as f64 * self.spacing
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    pub fn flat_index(&self, k: &[usize]) -> usize {
        k.iter().fold(0, |acc, &ki| acc * self.points + ki)
    }

    pub fn node(&self, idx: usize) -> [f64; 3] {
        let k = self.multi_index(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.coordinate(axis, k[axis]);
        }
        x
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let k = self.multi_index(idx);
        k[..self.dim].iter().any(|&ki| ki == 0 || ki == self.points - 1)
    }

    /// Distance from `x` to the nearest face, in the max norm.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.half_width
            - x.iter()
                .zip(&self.center)
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max)
    }

    /// Index of the node closest to `x` (clamped to the grid).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let k: Vec<usize> = (0..self.dim)
            .map(|a| {
                let t = (x[a] - self.coordinate(a, 0)) / self.spacing;
                t.round().clamp(0.0, (self.points - 1) as f64) as usize
            })
            .collect();
        self.flat_index(&k)
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Complex values on every node of a grid; boundary nodes hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: &Grid) -> ComplexField {
        ComplexField {
            grid: grid.clone(),
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Samples `f` on interior nodes.
    pub fn from_fn<F>(grid: &Grid, f: F) -> ComplexField
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let n = grid.dim();
        let data = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                if grid.is_boundary(idx) {
                    Complex64::new(0.0, 0.0)
                } else {
                    f(&grid.node(idx)[..n])
                }
            })
            .collect();
        ComplexField {
            grid: grid.clone(),
            data,
        }
    }

    /// Wraps node values, zeroing the boundary.
    pub fn from_values(grid: &Grid, mut data: Vec<Complex64>) -> Result<ComplexField> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        for (idx, d) in data.iter_mut().enumerate() {
            if grid.is_boundary(idx) {
                *d = Complex64::new(0.0, 0.0);
            }
        }
        Ok(ComplexField {
            grid: grid.clone(),
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.data
    }

    /// Mutable node values; callers keep the boundary at zero.
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.data
    }

    pub fn check_same_grid(&self, other: &ComplexField) -> Result<()> {
        self.grid.check_same(&other.grid)
    }

    /// `self += a·x`.
    pub fn axpy(&mut self, a: f64, x: &ComplexField) {
        self.data
            .par_iter_mut()
            .zip(&x.data)
            .for_each(|(s, v)| *s += v * a);
    }

    /// `self += c·x` for complex `c`.
    pub fn axpy_complex(&mut self, c: Complex64, x: &ComplexField) {
        self.data
            .par_iter_mut()
            .zip(&x.data)
            .for_each(|(s, v)| *s += v * c);
    }

    pub fn scale(&mut self, a: f64) {
        self.data.par_iter_mut().for_each(|s| *s *= a);
    }

    pub fn scaled(&self, c: Complex64) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            data: self.data.par_iter().map(|v| v * c).collect(),
        }
    }

    /// `i·self`.
    pub fn times_i(&self) -> ComplexField {
        self.scaled(Complex64::new(0.0, 1.0))
    }

    pub fn sub(&self, other: &ComplexField) -> ComplexField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &ComplexField) -> ComplexField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    /// `max |u|`.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `hⁿ Σ |u|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.data.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Writes the binary snapshot: little-endian `u64 n`, `u64 m`, `f64 L`,
    /// `n` centre coordinates as `f64`, then interleaved `re, im` per node in
    /// row-major order.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&(self.grid.dim as u64).to_le_bytes())?;
        out.write_all(&(self.grid.points as u64).to_le_bytes())?;
        out.write_all(&self.grid.half_width.to_le_bytes())?;
        for c in &self.grid.center {
            out.write_all(&c.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(16 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<ComplexField> {
        let io = |e: std::io::Error| Error::InvalidInput(format!("snapshot: {e}"));
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8).map_err(io)?;
        let dim = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8).map_err(io)?;
        let points = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8).map_err(io)?;
        let half_width = f64::from_le_bytes(b8);
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("snapshot: bad dimension {dim}")));
        }
        let mut center = Vec::with_capacity(dim);
        for _ in 0..dim {
            input.read_exact(&mut b8).map_err(io)?;
            center.push(f64::from_le_bytes(b8));
        }
        let grid = Grid::with_center(center, half_width, points, DEFAULT_NODE_BUDGET)?;
        let mut raw = vec![0u8; 16 * grid.len()];
        input.read_exact(&mut raw).map_err(io)?;
        let data = raw
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        ComplexField::from_values(&grid, data)
    }

    /// CSV line through the node nearest `through`, along `axis`, with
    /// columns `x,re,im,abs`.
    pub fn write_slice_csv<W: Write>(&self, axis: usize, through: &[f64], mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,re,im,abs")?;
        let mut k = self.grid.multi_index(self.grid.nearest_node(through));
        for i in 0..self.grid.points {
            k[axis] = i;
            let v = self.data[self.grid.flat_index(&k[..self.grid.dim])];
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.grid.coordinate(axis, i),
                v.re,
                v.im,
                v.norm()
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_size_limits() {
        let g = Grid::new(2, 12.0, 129).unwrap();
        assert_eq!(g.spacing(), 0.1875);
        assert!(matches!(Grid::new(2, 12.0, 8), Err(Error::InvalidInput(_))));
        assert!(matches!(Grid::new(3, 10.0, 600), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::with_center(vec![1.0, -2.0, 0.5], 3.0, 17, DEFAULT_NODE_BUDGET).unwrap();
        for idx in [0, 5, 300, 4912] {
            let k = g.multi_index(idx);
            assert_eq!(g.flat_index(&k), idx);
        }
        assert_eq!(g.node(0), [-2.0, -5.0, -2.5]);
        assert_eq!(g.stride(0), 289);
        assert_eq!(g.nearest_node(&[1.0, -2.0, 0.5]), g.flat_index(&[8, 8, 8]));
    }

    #[test]
    fn boundary_is_zero() {
        let g = Grid::new(2, 1.0, 16).unwrap();
        let u = ComplexField::from_fn(&g, |_| Complex64::new(1.0, 2.0));
        for (idx, v) in u.values().iter().enumerate() {
            assert_eq!(g.is_boundary(idx), v.norm() == 0.0);
        }
    }

    #[test]
    fn snapshot_roundtrip() {
        let g = Grid::with_center(vec![0.25, -1.0], 2.0, 16, DEFAULT_NODE_BUDGET).unwrap();
        let u = ComplexField::from_fn(&g, |x| Complex64::new(x[0], x[1] * x[0]));
        let mut buf = Vec::new();
        u.write_snapshot(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * 5 + 16 * 256);
        let v = ComplexField::read_snapshot(&buf[..]).unwrap();
        assert_eq!(u, v);
    }
}
