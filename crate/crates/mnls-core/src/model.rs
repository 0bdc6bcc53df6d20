//! Model parameters: nonlinearity power, dimension, coupling matrix, and the
//! pointwise nonlinear term they induce.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldVec;

/// Symmetric real M x M coupling matrix `(k_ij)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    m: usize,
    entries: Vec<f64>, // row-major
}

impl Coupling {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidParams("coupling matrix must be nonempty".into()));
        }
        let mut entries = Vec::with_capacity(m * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::InvalidParams("coupling matrix must be square".into()));
            }
            entries.extend_from_slice(row);
        }
        for i in 0..m {
            for j in 0..m {
                if !entries[i * m + j].is_finite() {
                    return Err(Error::InvalidParams("coupling entries must be finite".into()));
                }
                // symmetry is required exactly, not within a tolerance
                if entries[i * m + j] != entries[j * m + i] {
                    return Err(Error::InvalidParams(format!(
                        "coupling matrix must be symmetric: k[{i}][{j}] != k[{j}][{i}]"
                    )));
                }
            }
        }
        Ok(Self { m, entries })
    }

    pub fn scalar(k: f64) -> Self {
        Self { m: 1, entries: vec![k] }
    }

    pub fn identity(m: usize) -> Self {
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            entries[i * m + i] = 1.0;
        }
        Self { m, entries }
    }

    pub fn all_ones(m: usize) -> Self {
        Self { m, entries: vec![1.0; m * m] }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Common row sum `beta`, if all rows agree to within `tol`.
    pub fn uniform_row_sum(&self, tol: f64) -> Option<f64> {
        let beta = self.row_sum(0);
        for i in 1..self.m {
            if (self.row_sum(i) - beta).abs() > tol {
                return None;
            }
        }
        Some(beta)
    }

    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                acc += self.get(i, j) * a[i] * a[j];
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Subcritical => write!(f, "subcritical"),
            Regime::Critical => write!(f, "critical"),
            Regime::Supercritical => write!(f, "supercritical"),
        }
    }
}

/// Nonlinearity power, space dimension and couplings of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub dim: usize,
    pub coupling: Coupling,
    /// Regularization for `|u|^{p-1}` at `u = 0` (only relevant for p < 1).
    /// With the default 0 the value 0 is used at u = 0.
    pub reg_eps: f64,
}

impl ModelParams {
    pub fn new(p: f64, dim: usize, coupling: Coupling) -> Result<Self> {
        if dim == 0 || dim > crate::grid::MAX_DIM {
            return Err(Error::InvalidParams(format!("dimension must be 1..=3, got {dim}")));
        }
        let p_max = if dim <= 2 { f64::INFINITY } else { 4.0 / (dim as f64 - 2.0) };
        if !(p.is_finite() && p > 0.0 && p < p_max) {
            return Err(Error::InvalidParams(format!(
                "power must satisfy 0 < p < {p_max}, got {p}"
            )));
        }
        Ok(Self { p, dim, coupling, reg_eps: 0.0 })
    }

    pub fn scalar(p: f64, dim: usize) -> Result<Self> {
        Self::new(p, dim, Coupling::scalar(1.0))
    }

    pub fn m(&self) -> usize {
        self.coupling.size()
    }

    /// Criticality of the power relative to the dimension: p vs 2/N.
    pub fn regime(&self) -> Regime {
        let x = self.p * self.dim as f64;
        if (x - 2.0).abs() < 1e-12 {
            Regime::Critical
        } else if x < 2.0 {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }

    pub fn check_field(&self, u: &FieldVec) -> Result<()> {
        if u.len() != self.m() {
            return Err(Error::InvalidParams(format!(
                "field has {} components but coupling matrix is {}x{}",
                u.len(),
                self.m(),
                self.m()
            )));
        }
        if u.grid().dim() != self.dim {
            return Err(Error::InvalidParams(format!(
                "grid dimension {} does not match model dimension {}",
                u.grid().dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `|u|^{p-1} u` with the zero-at-zero convention (or the reg_eps
    /// mollification when set).
    pub fn signed_power(&self, u: Complex64) -> Complex64 {
        let r = u.norm();
        if self.reg_eps > 0.0 {
            let s = (r * r + self.reg_eps * self.reg_eps).powf(0.5 * (self.p - 1.0));
            return u * s;
        }
        if r == 0.0 {
            Complex64::default()
        } else {
            // |u|^p * phase(u); avoids 0^{negative} for p < 1
            u * (r.powf(self.p) / r)
        }
    }

    /// `|u|^{p-1}` as a real factor, zero at zero (resp. mollified).
    pub fn modulus_power_pm1(&self, u: Complex64) -> f64 {
        let r = u.norm();
        if self.reg_eps > 0.0 {
            return (r * r + self.reg_eps * self.reg_eps).powf(0.5 * (self.p - 1.0));
        }
        if r == 0.0 {
            if self.p >= 1.0 {
                // 0^0 = 1 at p = 1, 0 for p > 1
                if self.p == 1.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                0.0
            }
        } else {
            r.powf(self.p - 1.0)
        }
    }
}

/// Pointwise moduli `|u_i|^{p+1}` for every component; the building block of
/// the coupled potential.
pub(crate) fn power_moduli(u: &FieldVec, p: f64) -> Vec<Vec<f64>> {
    u.components()
        .iter()
        .map(|c| c.values().iter().map(|v| v.norm().powf(p + 1.0)).collect())
        .collect()
}

/// Coupled weights `w_i(x) = sum_j k_ij |u_j(x)|^{p+1}`.
pub(crate) fn coupled_weights(params: &ModelParams, moduli: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = params.m();
    let npts = moduli[0].len();
    let mut w = vec![vec![0.0f64; npts]; m];
    for i in 0..m {
        for j in 0..m {
            let k = params.coupling.get(i, j);
            if k == 0.0 {
                continue;
            }
            let (wi, sj) = (&mut w[i], &moduli[j]);
            for (a, b) in wi.iter_mut().zip(sj) {
                *a += k * b;
            }
        }
    }
    w
}

/// The coupled nonlinear term `NL_i = (sum_j k_ij |u_j|^{p+1}) |u_i|^{p-1} u_i`.
pub fn nonlinear_term(u: &FieldVec, params: &ModelParams) -> Result<FieldVec> {
    params.check_field(u)?;
    let moduli = power_moduli(u, params.p);
    let weights = coupled_weights(params, &moduli);
    let comps = u
        .components()
        .iter()
        .zip(&weights)
        .map(|(c, w)| {
            let vals = c
                .values()
                .iter()
                .zip(w)
                .map(|(v, wv)| params.signed_power(*v) * *wv)
                .collect();
            crate::field::ComponentField::from_parts(c.grid().clone(), vals)
        })
        .collect();
    FieldVec::new(comps)
}

/// Real phase rates `w_i(x) |u_i(x)|^{p-1}` driving the exact nonlinear
/// substep of the splitting.
pub(crate) fn phase_rates(u: &FieldVec, params: &ModelParams) -> Vec<Vec<f64>> {
    let moduli = power_moduli(u, params.p);
    let weights = coupled_weights(params, &moduli);
    u.components()
        .iter()
        .zip(weights)
        .map(|(c, w)| {
            c.values()
                .iter()
                .zip(w)
                .map(|(v, wv)| {
                    let f = params.modulus_power_pm1(*v);
                    let r = wv * f;
                    if r.is_finite() {
                        r
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}
