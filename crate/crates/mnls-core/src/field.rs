//! Complex-valued fields on a periodic box with spectral differentiation.
//!
//! A [`ComponentField`] stores one scalar complex field; a [`FieldVec`] is an
//! ordered list of M components on one shared grid. Values are immutable after
//! construction and all operations are pure, so fields can be handed freely
//! between threads.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{GridSpec, MAX_DIM};

/// Fraction of the half-box (per axis) treated as the boundary shell when
/// measuring tail mass.
pub const SHELL_FRACTION: f64 = 0.125;

/// Default relative tail-mass tolerance for operations that assume decay.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ComponentField {
    grid: Arc<GridSpec>,
    values: Vec<Complex64>,
}

impl ComponentField {
    pub fn zeros(grid: &Arc<GridSpec>) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![Complex64::default(); grid.total_points()],
        }
    }

    /// Wrap raw values; checks the count and that every value is finite.
    pub fn from_values(grid: &Arc<GridSpec>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(Error::InvalidGrid(format!(
                "value count {} does not match grid point count {}",
                values.len(),
                grid.total_points()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFinite {
                    what: "field values".into(),
                    index: i,
                });
            }
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Evaluate a pointwise function of position at every grid node.
    pub fn sample<F>(grid: &Arc<GridSpec>, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Complex64,
    {
        let dim = grid.dim();
        let mut pos = [0.0f64; MAX_DIM];
        let mut values = Vec::with_capacity(grid.total_points());
        for flat in 0..grid.total_points() {
            grid.node_position(flat, &mut pos[..dim]);
            let v = f(&pos[..dim]);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonFinite {
                    what: "sampled function".into(),
                    index: flat,
                });
            }
            values.push(v);
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn from_parts(grid: Arc<GridSpec>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.total_points());
        Self { grid, values }
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid.as_ref() != other.grid.as_ref() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// L2 pairing with quadrature weight `h^N`: `sum conj(a_j) b_j h^N`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_same_grid(other)?;
        let w = self.grid.cell_volume();
        let mut acc = Complex64::default();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a.conj() * b;
        }
        Ok(acc * w)
    }

    /// `∫ |u|^2`, by the same quadrature as [`inner`](Self::inner).
    pub fn l2_norm_sq(&self) -> f64 {
        let w = self.grid.cell_volume();
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * w
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// FFT coefficients `c_k` such that `u(x) = sum_k c_k exp(i k·(x - x0))`.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut s = self.values.clone();
        fft::forward(&mut s, self.grid.points());
        let scale = 1.0 / self.grid.total_points() as f64;
        for v in s.iter_mut() {
            *v *= scale;
        }
        s
    }

    pub fn from_spectrum(grid: &Arc<GridSpec>, mut spectrum: Vec<Complex64>) -> Result<Self> {
        if spectrum.len() != grid.total_points() {
            return Err(Error::InvalidGrid("spectrum length mismatch".into()));
        }
        fft::inverse(&mut spectrum, grid.points());
        let scale = grid.total_points() as f64;
        for v in spectrum.iter_mut() {
            *v *= scale;
        }
        Self::from_values(grid, spectrum)
    }

    /// Spectral Laplacian: multiply each Fourier mode by `-|k|^2`.
    pub fn laplacian(&self) -> Self {
        let mut s = self.values.clone();
        fft::forward(&mut s, self.grid.points());
        for (flat, v) in s.iter_mut().enumerate() {
            *v *= -self.grid.ksq(flat);
        }
        fft::inverse(&mut s, self.grid.points());
        Self {
            grid: Arc::clone(&self.grid),
            values: s,
        }
    }

    /// `∫ |∇u|^2` computed on the spectral side (Parseval).
    pub fn gradient_norm_sq(&self) -> f64 {
        let mut s = self.values.clone();
        fft::forward(&mut s, self.grid.points());
        let w = self.grid.cell_volume() / self.grid.total_points() as f64;
        let mut acc = 0.0;
        for (flat, v) in s.iter().enumerate() {
            acc += self.grid.ksq(flat) * v.norm_sqr();
        }
        acc * w
    }

    /// H1 pairing: `<a,b>_{L2} + <∇a,∇b>_{L2}`, evaluated spectrally.
    pub fn h1_inner(&self, other: &Self) -> Result<Complex64> {
        self.check_same_grid(other)?;
        let mut sa = self.values.clone();
        let mut sb = other.values.clone();
        fft::forward(&mut sa, self.grid.points());
        fft::forward(&mut sb, self.grid.points());
        let w = self.grid.cell_volume() / self.grid.total_points() as f64;
        let mut acc = Complex64::default();
        for (flat, (a, b)) in sa.iter().zip(&sb).enumerate() {
            acc += (1.0 + self.grid.ksq(flat)) * a.conj() * b;
        }
        Ok(acc * w)
    }

    pub fn h1_norm_sq(&self) -> f64 {
        self.l2_norm_sq() + self.gradient_norm_sq()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Exact circular shift by whole grid cells: `u(x) -> u(x + offset*h)`.
    pub fn shift_cyclic(&self, offsets: &[i64]) -> Self {
        let dim = self.grid.dim();
        assert_eq!(offsets.len(), dim);
        let mut out = vec![Complex64::default(); self.values.len()];
        let mut idx = [0usize; MAX_DIM];
        for flat in 0..self.values.len() {
            self.grid.unravel(flat, &mut idx[..dim]);
            let mut src = [0usize; MAX_DIM];
            for d in 0..dim {
                let n = self.grid.points()[d] as i64;
                src[d] = (idx[d] as i64 + offsets[d]).rem_euclid(n) as usize;
            }
            out[flat] = self.values[self.grid.ravel(&src[..dim])];
        }
        Self {
            grid: Arc::clone(&self.grid),
            values: out,
        }
    }

    /// Band-limited shift by an arbitrary displacement: `u(x) -> u(x + y)`.
    /// Exact for trigonometric interpolants of the grid data.
    pub fn fourier_shift(&self, y: &[f64]) -> Self {
        let dim = self.grid.dim();
        assert_eq!(y.len(), dim);
        let mut s = self.values.clone();
        fft::forward(&mut s, self.grid.points());
        let mut idx = [0usize; MAX_DIM];
        for (flat, v) in s.iter_mut().enumerate() {
            self.grid.unravel(flat, &mut idx[..dim]);
            let mut phase = 0.0;
            for d in 0..dim {
                phase += self.grid.wavenumber(d, idx[d]) * y[d];
            }
            *v *= Complex64::from_polar(1.0, phase);
        }
        fft::inverse(&mut s, self.grid.points());
        Self {
            grid: Arc::clone(&self.grid),
            values: s,
        }
    }

    /// Mass fraction sitting in the boundary shell (outer [`SHELL_FRACTION`]
    /// of the half-box on any axis). Zero field reports zero.
    pub fn shell_mass_fraction(&self) -> f64 {
        let dim = self.grid.dim();
        let mut shell = 0.0;
        let mut total = 0.0;
        let mut idx = [0usize; MAX_DIM];
        for (flat, v) in self.values.iter().enumerate() {
            let m = v.norm_sqr();
            total += m;
            self.grid.unravel(flat, &mut idx[..dim]);
            let mut in_shell = false;
            for d in 0..dim {
                let x = self.grid.coordinate(d, idx[d]).abs();
                if x >= 0.5 * self.grid.box_length()[d] * (1.0 - SHELL_FRACTION) {
                    in_shell = true;
                    break;
                }
            }
            if in_shell {
                shell += m;
            }
        }
        if total > 0.0 {
            shell / total
        } else {
            0.0
        }
    }
}

/// Ordered list of M components on one shared grid. Houses the vector fields
/// evolved and minimized throughout the crate.
#[derive(Debug, Clone)]
pub struct FieldVec {
    components: Vec<ComponentField>,
}

impl FieldVec {
    pub fn new(components: Vec<ComponentField>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidGrid("a field vector needs at least one component".into()));
        }
        let g = components[0].grid().clone();
        for c in &components[1..] {
            if c.grid().as_ref() != g.as_ref() {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: &Arc<GridSpec>, m: usize) -> Self {
        Self {
            components: (0..m).map(|_| ComponentField::zeros(grid)).collect(),
        }
    }

    pub fn from_single(c: ComponentField) -> Self {
        Self { components: vec![c] }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        self.components[0].grid()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, i: usize) -> &ComponentField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ComponentField] {
        &self.components
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(&ComponentField) -> ComponentField,
    {
        Self {
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn try_map<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&ComponentField) -> Result<ComponentField>,
    {
        Ok(Self {
            components: self.components.iter().map(f).collect::<Result<_>>()?,
        })
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        self.map(|u| u.scaled(c))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.sub(b))
    }

    fn zip<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(&ComponentField, &ComponentField) -> Result<ComponentField>,
    {
        if self.len() != other.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| f(a, b))
                .collect::<Result<_>>()?,
        })
    }

    pub fn component_masses(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.l2_norm_sq()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(|c| c.l2_norm_sq()).sum()
    }

    pub fn total_gradient_norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c.gradient_norm_sq()).sum()
    }

    pub fn h1_norm_sq(&self) -> f64 {
        self.total_mass() + self.total_gradient_norm_sq()
    }

    pub fn h1_distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.h1_norm_sq().sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    /// Boundary-shell fraction of the total mass across all components.
    pub fn shell_mass_fraction(&self) -> f64 {
        let total: f64 = self.components.iter().map(|c| c.l2_norm_sq()).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let shell: f64 = self
            .components
            .iter()
            .map(|c| c.shell_mass_fraction() * c.l2_norm_sq())
            .sum();
        shell / total
    }

    pub fn shift_cyclic(&self, offsets: &[i64]) -> Self {
        self.map(|c| c.shift_cyclic(offsets))
    }

    pub fn fourier_shift(&self, y: &[f64]) -> Self {
        self.map(|c| c.fourier_shift(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line_grid() -> Arc<GridSpec> {
        GridSpec::line(1024, 40.0).unwrap()
    }

    #[test]
    fn sample_zero_function() {
        let g = line_grid();
        let f = ComponentField::sample(&g, |_| Complex64::default()).unwrap();
        assert!(f.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn sample_rejects_non_finite() {
        let g = line_grid();
        let err = ComponentField::sample(&g, |x| {
            if x[0] == 0.0 {
                Complex64::new(f64::NAN, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .unwrap_err();
        match err {
            Error::NonFinite { index, .. } => assert_eq!(index, 512),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sample_soliton_peak() {
        let g = line_grid();
        let f = ComponentField::sample(&g, |x| {
            Complex64::new(2.0f64.sqrt() / x[0].cosh(), 0.0)
        })
        .unwrap();
        // x = 0 is a grid node; the max sits there
        assert!((f.linf_norm() - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn plane_wave_has_unit_modulus() {
        let g = line_grid();
        let l = g.box_length()[0];
        let f = ComponentField::sample(&g, |x| Complex64::from_polar(1.0, 2.0 * PI * x[0] / l))
            .unwrap();
        for v in f.values() {
            assert!((v.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_of_zero_is_zero() {
        let g = line_grid();
        let z = ComponentField::zeros(&g);
        assert!(z.laplacian().l2_norm_sq() == 0.0);
    }

    #[test]
    fn laplacian_plane_wave_eigenvalue() {
        let g = line_grid();
        let l = g.box_length()[0];
        // high mode: the eigenvalue dominates the spectral roundoff floor
        for m in [50.0, 117.0] {
            let f = ComponentField::sample(&g, |x| {
                Complex64::from_polar(1.0, 2.0 * PI * m * x[0] / l)
            })
            .unwrap();
            let lap = f.laplacian();
            let eig = -(2.0 * PI * m / l).powi(2);
            for (a, b) in lap.values().iter().zip(f.values()) {
                assert!((a - b * eig).norm() <= 1e-12 * eig.abs());
            }
        }
        // low mode: roundoff scales with |k|^2_max, not with the eigenvalue
        let f = ComponentField::sample(&g, |x| {
            Complex64::from_polar(1.0, 2.0 * PI * 3.0 * x[0] / l)
        })
        .unwrap();
        let lap = f.laplacian();
        let eig = -(2.0 * PI * 3.0 / l).powi(2);
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a - b * eig).norm() <= 1e-11);
        }
    }

    #[test]
    fn laplacian_plane_wave_2d() {
        let g = GridSpec::square(64, 10.0).unwrap();
        let l = 10.0;
        let (m1, m2) = (2.0, -3.0);
        let f = ComponentField::sample(&g, |x| {
            Complex64::from_polar(1.0, 2.0 * PI * (m1 * x[0] + m2 * x[1]) / l)
        })
        .unwrap();
        let lap = f.laplacian();
        let eig = -(2.0 * PI / l).powi(2) * (m1 * m1 + m2 * m2);
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a - b * eig).norm() < 1e-11 * eig.abs());
        }
    }

    /// Spectral Laplacian of the sampled soliton against the profile's own
    /// second derivative, known in closed form.
    #[test]
    fn laplacian_matches_soliton_second_derivative() {
        // wide box so the periodization seam sits below the tolerance
        let g = GridSpec::line(1024, 60.0).unwrap();
        let q = ComponentField::sample(&g, |x| {
            Complex64::new(2.0f64.sqrt() / x[0].cosh(), 0.0)
        })
        .unwrap();
        let lap = q.laplacian();
        // Q'' = Q - Q^3 for the cubic soliton
        let mut max_err = 0.0f64;
        for (lv, qv) in lap.values().iter().zip(q.values()) {
            let expected = qv - qv * qv.norm_sqr();
            max_err = max_err.max((lv - expected).norm());
        }
        assert!(max_err < 1e-8, "max residual {max_err:.3e}");
    }

    #[test]
    fn inner_products() {
        let g = line_grid();
        let q = ComponentField::sample(&g, |x| {
            Complex64::new(2.0f64.sqrt() / x[0].cosh(), 0.0)
        })
        .unwrap();
        let z = ComponentField::zeros(&g);
        assert_eq!(z.inner(&q).unwrap().norm(), 0.0);
        // ∫ 2 sech^2 = 4
        assert!((q.inner(&q).unwrap().re - 4.0).abs() < 1e-10);
        // sesquilinearity under a phase on the first argument
        let theta = 0.9;
        let rotated = q.scaled(Complex64::from_polar(1.0, theta));
        let lhs = rotated.inner(&q).unwrap();
        let rhs = q.inner(&q).unwrap() * Complex64::from_polar(1.0, -theta);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn inner_rejects_grid_mismatch() {
        let a = ComponentField::zeros(&line_grid());
        let b = ComponentField::zeros(&GridSpec::line(512, 40.0).unwrap());
        assert!(matches!(a.inner(&b), Err(Error::GridMismatch)));
    }

    #[test]
    fn parseval_holds() {
        let g = GridSpec::line(256, 17.0).unwrap();
        let f = ComponentField::sample(&g, |x| {
            Complex64::new((-x[0] * x[0] / 3.0).exp(), 0.3 * (x[0] * 0.7).sin())
        })
        .unwrap();
        let physical: f64 = f.l2_norm_sq();
        let spec = f.spectrum();
        let n = g.total_points() as f64;
        let spectral: f64 = spec.iter().map(|v| v.norm_sqr()).sum::<f64>() * n * g.cell_volume();
        assert!((physical - spectral).abs() < 1e-12 * physical);
    }

    #[test]
    fn laplacian_is_self_adjoint() {
        let g = GridSpec::line(256, 21.0).unwrap();
        let a = ComponentField::sample(&g, |x| {
            Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.2 * (x[0]).cos())
        })
        .unwrap();
        let b = ComponentField::sample(&g, |x| {
            Complex64::new((x[0] * 0.4).sin() * (-x[0] * x[0] / 5.0).exp(), 0.1)
        })
        .unwrap();
        let lhs = a.laplacian().inner(&b).unwrap();
        let rhs = a.inner(&b.laplacian()).unwrap();
        let scale = a.l2_norm_sq().sqrt() * b.l2_norm_sq().sqrt();
        assert!((lhs - rhs).norm() <= 1e-10 * scale);
    }

    #[test]
    fn cyclic_and_fourier_shifts_agree_on_grid_multiples() {
        let g = GridSpec::line(128, 12.0).unwrap();
        let f = ComponentField::sample(&g, |x| {
            Complex64::new((-x[0] * x[0]).exp(), (x[0] * 0.3).sin() * (-x[0] * x[0]).exp())
        })
        .unwrap();
        let h = g.spacing(0);
        let a = f.shift_cyclic(&[5]);
        let b = f.fourier_shift(&[5.0 * h]);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_norm_matches_closed_form() {
        let g = line_grid();
        // d/dx sqrt(2) sech = -sqrt(2) sech tanh, ∫ 2 sech^2 tanh^2 = 4/3
        let q = ComponentField::sample(&g, |x| {
            Complex64::new(2.0f64.sqrt() / x[0].cosh(), 0.0)
        })
        .unwrap();
        assert!((q.gradient_norm_sq() - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn laplacian_plane_wave_3d() {
        let g = GridSpec::cube(16, 8.0).unwrap();
        let l = 8.0;
        let f = ComponentField::sample(&g, |x| {
            Complex64::from_polar(1.0, 2.0 * PI * (x[0] + 2.0 * x[1] - x[2]) / l)
        })
        .unwrap();
        let lap = f.laplacian();
        let eig = -(2.0 * PI / l).powi(2) * 6.0;
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a - b * eig).norm() < 1e-10 * eig.abs());
        }
    }

    #[test]
    fn fieldvec_requires_shared_grid() {
        let a = ComponentField::zeros(&line_grid());
        let b = ComponentField::zeros(&GridSpec::line(512, 40.0).unwrap());
        assert!(FieldVec::new(vec![a, b]).is_err());
    }
}
