//! Periodic computational box.
//!
//! The box approximates R^N: coordinates are centered, `x_d ∈ [-L_d/2, L_d/2)`,
//! so moment weights like `|x|^2` are well defined for decaying fields. All
//! per-axis point counts are powers of two (spectral transforms assume it).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    points: Vec<usize>,
    box_length: Vec<f64>,
}

impl GridSpec {
    pub fn new(points: &[usize], box_length: &[f64]) -> Result<Arc<Self>> {
        let dim = points.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1..={MAX_DIM}, got {dim}"
            )));
        }
        if box_length.len() != dim {
            return Err(Error::InvalidGrid(
                "points and box_length must have the same length".into(),
            ));
        }
        for &n in points {
            if n < 4 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "per-axis point count must be a power of two >= 4, got {n}"
                )));
            }
        }
        for &l in box_length {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("box length must be positive, got {l}")));
            }
        }
        Ok(Arc::new(Self {
            points: points.to_vec(),
            box_length: box_length.to_vec(),
        }))
    }

    /// 1D grid on `[-l/2, l/2)` with `n` points.
    pub fn line(n: usize, l: f64) -> Result<Arc<Self>> {
        Self::new(&[n], &[l])
    }

    /// Square 2D grid.
    pub fn square(n: usize, l: f64) -> Result<Arc<Self>> {
        Self::new(&[n, n], &[l, l])
    }

    /// Cubic 3D grid.
    pub fn cube(n: usize, l: f64) -> Result<Arc<Self>> {
        Self::new(&[n, n, n], &[l, l, l])
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn box_length(&self) -> &[f64] {
        &self.box_length
    }

    /// Mesh spacing along one axis; `h * n = L` exactly.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.box_length[axis] / self.points[axis] as f64
    }

    /// Quadrature weight of one node, `h^N`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.spacing(d)).product()
    }

    pub fn total_points(&self) -> usize {
        self.points.iter().product()
    }

    /// Centered coordinate of node `index` along `axis`.
    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        -0.5 * self.box_length[axis] + index as f64 * self.spacing(axis)
    }

    /// Signed integer frequency of FFT bin `index`: 0,1,...,n/2-1,-n/2,...,-1.
    pub fn frequency(&self, axis: usize, index: usize) -> i64 {
        let n = self.points[axis];
        if index < n / 2 {
            index as i64
        } else {
            index as i64 - n as i64
        }
    }

    /// Discrete wavenumber `2*pi*f/L` of FFT bin `index` along `axis`.
    pub fn wavenumber(&self, axis: usize, index: usize) -> f64 {
        2.0 * PI * self.frequency(axis, index) as f64 / self.box_length[axis]
    }

    /// Per-axis wavenumber table in FFT bin order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|i| self.wavenumber(axis, i)).collect()
    }

    /// Decompose a flat row-major index into per-axis indices.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for d in (0..self.dim()).rev() {
            out[d] = flat % self.points[d];
            flat /= self.points[d];
        }
    }

    /// Flat row-major index from per-axis indices.
    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for d in 0..self.dim() {
            flat = flat * self.points[d] + idx[d];
        }
        flat
    }

    /// Fill `out` with the coordinates of the node at flat index `flat`.
    pub fn node_position(&self, flat: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_DIM];
        self.unravel(flat, &mut idx[..self.dim()]);
        for d in 0..self.dim() {
            out[d] = self.coordinate(d, idx[d]);
        }
    }

    /// |k|^2 of the FFT bin at flat index `flat`.
    pub fn ksq(&self, flat: usize) -> f64 {
        let mut idx = [0usize; MAX_DIM];
        self.unravel(flat, &mut idx[..self.dim()]);
        (0..self.dim())
            .map(|d| {
                let k = self.wavenumber(d, idx[d]);
                k * k
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_times_points_is_exact() {
        let g = GridSpec::line(1024, 40.0).unwrap();
        assert_eq!(g.spacing(0) * 1024.0, 40.0);
        assert_eq!(g.total_points(), 1024);
    }

    #[test]
    fn coordinates_are_centered() {
        let g = GridSpec::line(8, 16.0).unwrap();
        assert_eq!(g.coordinate(0, 0), -8.0);
        assert_eq!(g.coordinate(0, 4), 0.0);
        assert_eq!(g.coordinate(0, 7), 6.0);
    }

    #[test]
    fn frequencies_cover_half_open_range() {
        let g = GridSpec::line(8, 1.0).unwrap();
        let f: Vec<i64> = (0..8).map(|i| g.frequency(0, i)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, -4, -3, -2, -1]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(&[100], &[1.0]).is_err());
        assert!(GridSpec::new(&[], &[]).is_err());
        assert!(GridSpec::new(&[8, 8, 8, 8], &[1.0; 4]).is_err());
        assert!(GridSpec::new(&[8], &[-1.0]).is_err());
    }

    #[test]
    fn ravel_unravel_roundtrip() {
        let g = GridSpec::new(&[4, 8], &[1.0, 2.0]).unwrap();
        let mut idx = [0usize; 2];
        for flat in 0..32 {
            g.unravel(flat, &mut idx);
            assert_eq!(g.ravel(&idx), flat);
        }
    }
}
