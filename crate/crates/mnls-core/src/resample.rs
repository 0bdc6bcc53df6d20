//! Band-limited rescaling `U(x) -> lambda^e U(lambda x)` on the same grid.
//!
//! The dilated field is obtained by evaluating the trigonometric interpolant
//! of the input at the points `lambda * x_j`, which is Fourier interpolation
//! carried out exactly (no intermediate zero-padding stage). Evaluation is
//! separable, one dense synthesis matrix per axis. Source points that fall
//! outside the box (contractive case, lambda > 1) are set to zero, which is
//! valid only while the field is negligible at the boundary — both the input
//! and the output are checked against a tail-mass tolerance.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComponentField, FieldVec, DEFAULT_TAIL_TOLERANCE};
use crate::fft;
use crate::grid::GridSpec;

/// Synthesis matrix for one axis: `a[t][f] = w_f(lambda * x_t)` where `w_f`
/// is the Fourier basis function of bin `f` (Nyquist bin symmetrized to a
/// cosine) and `x_t` the grid coordinates. Row-major `n x n`.
fn axis_matrix(grid: &GridSpec, axis: usize, lambda: f64) -> Vec<Complex64> {
    let n = grid.points()[axis];
    let x0 = grid.coordinate(axis, 0);
    let k1 = grid.wavenumber(axis, 1); // fundamental 2*pi/L
    let mut mat = vec![Complex64::default(); n * n];
    for t in 0..n {
        let target = lambda * grid.coordinate(axis, t);
        let theta = k1 * (target - x0);
        let base = Complex64::from_polar(1.0, theta);
        let row = &mut mat[t * n..(t + 1) * n];
        // positive frequencies 0..n/2-1 by iterated multiplication,
        // refreshed periodically to stop roundoff drift
        let mut cur = Complex64::new(1.0, 0.0);
        for (f, slot) in row.iter_mut().enumerate().take(n / 2) {
            if f.is_multiple_of(32) {
                cur = Complex64::from_polar(1.0, theta * f as f64);
            }
            *slot = cur;
            cur *= base;
        }
        // negative frequencies -n/2+1..-1 live in bins n/2+1..n-1
        let conj_base = base.conj();
        let mut cur = conj_base;
        for f in 1..n / 2 {
            if f.is_multiple_of(32) {
                cur = Complex64::from_polar(1.0, -theta * f as f64);
            }
            row[n - f] = cur;
            cur *= conj_base;
        }
        // Nyquist bin: split across +-n/2, i.e. cos(k_nyq (x - x0))
        row[n / 2] = Complex64::new((theta * (n / 2) as f64).cos(), 0.0);
    }
    mat
}

/// Contract `data` (row-major, `shape`) with `mat` along `axis`:
/// `out[t, rest] = sum_f mat[t,f] data[f, rest]`.
fn apply_axis(data: &[Complex64], shape: &[usize], axis: usize, mat: &[Complex64]) -> Vec<Complex64> {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let lines = data.len() / n;
    let mut out = vec![Complex64::default(); data.len()];
    let mut line = vec![Complex64::default(); n];
    for l in 0..lines {
        let inner = l % stride;
        let outer = l / stride;
        let base = outer * n * stride + inner;
        for (f, v) in line.iter_mut().enumerate() {
            *v = data[base + f * stride];
        }
        for t in 0..n {
            let row = &mat[t * n..(t + 1) * n];
            let mut acc = Complex64::default();
            for (f, v) in line.iter().enumerate() {
                acc += row[f] * v;
            }
            out[base + t * stride] = acc;
        }
    }
    out
}

fn resample_component(
    field: &ComponentField,
    lambda: f64,
    amplitude: f64,
) -> ComponentField {
    let grid = field.grid();
    // spectrum coefficients c_f = FFT(u)/n_total
    let mut coef = field.values().to_vec();
    fft::forward(&mut coef, grid.points());
    let scale = amplitude / grid.total_points() as f64;
    for v in coef.iter_mut() {
        *v *= scale;
    }
    let mut data = coef;
    for axis in 0..grid.dim() {
        let mat = axis_matrix(grid, axis, lambda);
        data = apply_axis(&data, grid.points(), axis, &mat);
    }
    // contractive case: zero targets whose source point left the box
    if lambda > 1.0 {
        let dim = grid.dim();
        let mut idx = [0usize; crate::grid::MAX_DIM];
        for (flat, v) in data.iter_mut().enumerate() {
            grid.unravel(flat, &mut idx[..dim]);
            for d in 0..dim {
                if (lambda * grid.coordinate(d, idx[d])).abs() > 0.5 * grid.box_length()[d] {
                    *v = Complex64::default();
                    break;
                }
            }
        }
    }
    ComponentField::from_parts(grid.clone(), data)
}

/// `lambda^exponent * U(lambda x)` by band-limited interpolation, with a
/// tail-mass guard on input and output. `exponent = N/2` preserves mass;
/// `exponent = 1/p` is the amplitude scaling used to renormalize Lagrange
/// multipliers.
pub fn resample_scaled(u: &FieldVec, lambda: f64, exponent: f64) -> Result<FieldVec> {
    resample_scaled_with_tol(u, lambda, exponent, DEFAULT_TAIL_TOLERANCE)
}

pub fn resample_scaled_with_tol(
    u: &FieldVec,
    lambda: f64,
    exponent: f64,
    tail_tolerance: f64,
) -> Result<FieldVec> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParams(format!(
            "dilation factor must be positive, got {lambda}"
        )));
    }
    let amplitude = lambda.powf(exponent);
    if lambda == 1.0 {
        return Ok(u.scaled(Complex64::new(amplitude, 0.0)));
    }
    let tail_in = u.shell_mass_fraction();
    if tail_in > tail_tolerance {
        return Err(Error::TailMass {
            measured: tail_in,
            tolerance: tail_tolerance,
        });
    }
    let out = FieldVec::new(
        u.components()
            .iter()
            .map(|c| resample_component(c, lambda, amplitude))
            .collect(),
    )?;
    let tail_out = out.shell_mass_fraction();
    if tail_out > tail_tolerance {
        return Err(Error::TailMass {
            measured: tail_out,
            tolerance: tail_tolerance,
        });
    }
    Ok(out)
}

/// Mass-preserving dilation `lambda^{N/2} U(lambda x)`.
pub fn dilate_mass_preserving(u: &FieldVec, lambda: f64) -> Result<FieldVec> {
    let e = u.grid().dim() as f64 / 2.0;
    resample_scaled(u, lambda, e)
}
