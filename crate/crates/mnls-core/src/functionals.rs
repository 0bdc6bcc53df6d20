//! The conserved functionals of the coupled system and the scalar quantities
//! derived from them: mass M, kinetic energy T, coupled potential J, the H1
//! quantity I = M + T, energy E, the Pohozaev functional H, the action S,
//! dilation profiles of S and H, the sharp interpolation quotient, and
//! Lagrange-multiplier estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComponentField, FieldVec};
use crate::model::{power_moduli, ModelParams, Regime};
use crate::resample::dilate_mass_preserving;

/// Values of every functional for one field, with per-component splits.
///
/// The scalar fields satisfy, exactly by construction,
/// `h1 = mass + kinetic`, `energy = kinetic/2 - potential/(2p+2)`,
/// `pohozaev = kinetic - N p potential/(2p+2)` and
/// `action = h1/2 - potential/(2p+2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub mass: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub h1: f64,
    pub energy: f64,
    pub pohozaev: f64,
    pub action: f64,
    pub component_mass: Vec<f64>,
    pub component_kinetic: Vec<f64>,
    pub component_potential: Vec<f64>,
}

impl FunctionalReport {
    /// One CSV row: aggregate values then the per-component splits.
    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            format!("{:.16e}", self.mass),
            format!("{:.16e}", self.kinetic),
            format!("{:.16e}", self.potential),
            format!("{:.16e}", self.h1),
            format!("{:.16e}", self.energy),
            format!("{:.16e}", self.pohozaev),
            format!("{:.16e}", self.action),
        ];
        for v in self
            .component_mass
            .iter()
            .chain(&self.component_kinetic)
            .chain(&self.component_potential)
        {
            cols.push(format!("{v:.16e}"));
        }
        cols.join(",")
    }

    pub fn csv_header(m: usize) -> String {
        let mut cols: Vec<String> = ["mass", "kinetic", "potential", "h1", "energy", "pohozaev", "action"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..m {
            cols.push(format!("mass_{}", i + 1));
        }
        for i in 0..m {
            cols.push(format!("kinetic_{}", i + 1));
        }
        for i in 0..m {
            cols.push(format!("potential_{}", i + 1));
        }
        cols.join(",")
    }
}

/// Cross integrals `c_ij = ∫ |u_i|^{p+1} |u_j|^{p+1}` (symmetric).
fn cross_integrals(u: &FieldVec, p: f64) -> Vec<Vec<f64>> {
    let moduli = power_moduli(u, p);
    let w = u.grid().cell_volume();
    let m = u.len();
    let mut c = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in i..m {
            let mut acc = 0.0;
            for (a, b) in moduli[i].iter().zip(&moduli[j]) {
                acc += a * b;
            }
            c[i][j] = acc * w;
            c[j][i] = c[i][j];
        }
    }
    c
}

/// Evaluate every functional of the model on `u`.
pub fn report(u: &FieldVec, params: &ModelParams) -> Result<FunctionalReport> {
    params.check_field(u)?;
    let m = u.len();
    let component_mass: Vec<f64> = u.component_masses();
    let component_kinetic: Vec<f64> = u
        .components()
        .iter()
        .map(|c| c.gradient_norm_sq())
        .collect();
    let cross = cross_integrals(u, params.p);
    let component_potential: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|j| params.coupling.get(i, j) * cross[i][j]).sum())
        .collect();
    let mass: f64 = component_mass.iter().sum();
    let kinetic: f64 = component_kinetic.iter().sum();
    let potential: f64 = component_potential.iter().sum();
    for (name, v) in [("mass", mass), ("kinetic", kinetic), ("potential", potential)] {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: name.into(), index: 0 });
        }
    }
    let two_p_two = 2.0 * params.p + 2.0;
    let h1 = mass + kinetic;
    let energy = 0.5 * kinetic - potential / two_p_two;
    let pohozaev = kinetic - params.dim as f64 * params.p * potential / two_p_two;
    let action = 0.5 * h1 - potential / two_p_two;
    Ok(FunctionalReport {
        mass,
        kinetic,
        potential,
        h1,
        energy,
        pohozaev,
        action,
        component_mass,
        component_kinetic,
        component_potential,
    })
}

/// `|2E(U) - H(U)|`; identically zero at the critical power p = 2/N, where
/// it is bounded by roundoff only.
pub fn critical_identity_residual(u: &FieldVec, params: &ModelParams) -> Result<f64> {
    if params.regime() != Regime::Critical {
        return Err(Error::WrongRegime {
            required: "critical (p = 2/N)",
            p: params.p,
            dim: params.dim,
        });
    }
    let r = report(u, params)?;
    Ok((2.0 * r.energy - r.pohozaev).abs())
}

/// Action of the mass-preserving dilation as a function of lambda, computed
/// algebraically from the report of the undilated field:
/// `S(lambda) = M/2 + lambda^2 T/2 - lambda^{Np} J/(2p+2)`.
pub fn scaled_action(rep: &FunctionalReport, params: &ModelParams, lambda: f64) -> f64 {
    let np = params.dim as f64 * params.p;
    0.5 * rep.mass + 0.5 * lambda * lambda * rep.kinetic
        - lambda.powf(np) * rep.potential / (2.0 * params.p + 2.0)
}

/// Pohozaev functional of the dilation: `H(lambda) = lambda^2 T - Np lambda^{Np} J/(2p+2)`.
pub fn scaled_pohozaev(rep: &FunctionalReport, params: &ModelParams, lambda: f64) -> f64 {
    let np = params.dim as f64 * params.p;
    lambda * lambda * rep.kinetic - np * lambda.powf(np) * rep.potential / (2.0 * params.p + 2.0)
}

fn scaled_action_derivative(rep: &FunctionalReport, params: &ModelParams, lambda: f64) -> f64 {
    // d/d lambda of scaled_action = H(lambda)/lambda
    scaled_pohozaev(rep, params, lambda) / lambda
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActionSample {
    pub lambda: f64,
    pub action: f64,
    pub pohozaev: f64,
}

/// Tabulate `(lambda, S, H)` along the mass-preserving dilation, evaluating
/// the dilated fields by band-limited resampling. The derivative identity
/// `lambda * dS/dlambda = H` can be checked against this table by finite
/// differences.
pub fn action_profile(
    u: &FieldVec,
    params: &ModelParams,
    lambdas: &[f64],
) -> Result<Vec<ActionSample>> {
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let scaled = dilate_mass_preserving(u, lambda)?;
        let rep = report(&scaled, params)?;
        out.push(ActionSample {
            lambda,
            action: rep.action,
            pohozaev: rep.pohozaev,
        });
    }
    Ok(out)
}

/// Maximizer of `g(lambda) = S(P(U, lambda))` for the supercritical regime.
/// Golden-section search on the dilation profile, bracket expanded
/// geometrically from [1e-3, 1e3], followed by a derivative polish; the
/// derivative residual at the returned point is below 1e-8 relative.
pub fn lambda_star(w: &FieldVec, params: &ModelParams) -> Result<f64> {
    if params.regime() != Regime::Supercritical {
        return Err(Error::WrongRegime {
            required: "supercritical (p > 2/N)",
            p: params.p,
            dim: params.dim,
        });
    }
    let rep = report(w, params)?;
    if rep.potential <= 0.0 {
        return Err(Error::Undefined {
            what: "lambda_star",
            why: format!(
                "the dilation action is increasing (J = {:.3e} <= 0), no maximum exists",
                rep.potential
            ),
        });
    }
    let g = |lambda: f64| scaled_action(&rep, params, lambda);

    let (mut lo, mut hi) = (1e-3f64, 1e3f64);
    // expand until the maximum is interior
    for _ in 0..8 {
        let eps = 1e-6;
        let interior_lo = g(lo * (1.0 + eps)) > g(lo);
        let interior_hi = g(hi * (1.0 - eps)) > g(hi);
        if interior_lo && interior_hi {
            break;
        }
        if !interior_lo {
            lo /= 10.0;
        }
        if !interior_hi {
            hi *= 10.0;
        }
    }
    let eps = 1e-6;
    if g(lo * (1.0 + eps)) <= g(lo) || g(hi * (1.0 - eps)) <= g(hi) {
        return Err(Error::BracketFailure(format!(
            "no interior maximum of the dilation action in [{lo:.1e}, {hi:.1e}]"
        )));
    }

    // golden section on log(lambda); g is unimodal there for J > 0
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, mut gd) = (g(c.exp()), g(d.exp()));
    for _ in 0..120 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c.exp());
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d.exp());
        }
        if (b - a).abs() < 1e-14 {
            break;
        }
    }
    let mut lam = (0.5 * (a + b)).exp();
    // Newton polish on the closed-form derivative of the profile
    for _ in 0..8 {
        let np = params.dim as f64 * params.p;
        let g1 = scaled_action_derivative(&rep, params, lam);
        let g2 = rep.kinetic
            - np * (np - 1.0) * lam.powf(np - 2.0) * rep.potential / (2.0 * params.p + 2.0);
        if g2 == 0.0 {
            break;
        }
        let step = g1 / g2;
        lam -= step;
        if step.abs() < 1e-15 * lam {
            break;
        }
    }
    let scale = rep.kinetic.abs() + rep.potential.abs() + 1.0;
    let residual = scaled_action_derivative(&rep, params, lam).abs() / scale;
    if !(lam.is_finite() && lam > 0.0) || residual > 1e-8 {
        return Err(Error::BracketFailure(format!(
            "stationarity residual {residual:.3e} at lambda = {lam:.6e}"
        )));
    }
    Ok(lam)
}

/// Interpolation quotient `J(W) / (M(W)^{p+1-Np/2} T(W)^{Np/2})`; bounded by
/// the sharp constant attained on ground states.
pub fn gn_quotient(w: &FieldVec, params: &ModelParams) -> Result<f64> {
    let rep = report(w, params)?;
    if rep.mass <= 0.0 || rep.kinetic <= 0.0 {
        return Err(Error::Undefined {
            what: "interpolation quotient",
            why: "requires M(W) > 0 and T(W) > 0".into(),
        });
    }
    let half_np = 0.5 * params.dim as f64 * params.p;
    Ok(rep.potential / (rep.mass.powf(params.p + 1.0 - half_np) * rep.kinetic.powf(half_np)))
}

/// The sharp quotient value realized by a ground state `q`.
pub fn gn_constant(q: &FieldVec, params: &ModelParams) -> Result<f64> {
    gn_quotient(q, params)
}

/// Rescale `w` onto the equality manifold of the sharp inequality:
/// returns `nu * W(zeta x)` with
/// `nu = (J(Q) M(W) / (M(Q) J(W)))^{1/(2p)}` and
/// `zeta = (nu^2 M(W)/M(Q))^{1/N}`.
pub fn gn_equality_rescale(
    w: &FieldVec,
    params: &ModelParams,
    q_ref: &FieldVec,
) -> Result<FieldVec> {
    let rw = report(w, params)?;
    let rq = report(q_ref, params)?;
    if rw.potential <= 0.0 {
        return Err(Error::Undefined {
            what: "equality rescale",
            why: format!("requires J(W) > 0, got {:.3e}", rw.potential),
        });
    }
    let nu = (rq.potential * rw.mass / (rq.mass * rw.potential)).powf(1.0 / (2.0 * params.p));
    let zeta = (nu * nu * rw.mass / rq.mass).powf(1.0 / params.dim as f64);
    let resampled = crate::resample::resample_scaled(w, zeta, 0.0)?;
    Ok(resampled.scaled(num_complex::Complex64::new(nu, 0.0)))
}

/// Outcome of the positivity search for the coupled potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum P1Witness {
    /// `k_ii > 0`: a field supported on component `index` alone has J > 0.
    DiagonalDisjoint { index: usize, value: f64 },
    /// Nonnegative amplitude vector with `a^T K a > 0`: components sharing a
    /// profile with moduli `a_i^{1/(p+1)} phi` give J > 0.
    SharedProfile { a: Vec<f64>, value: f64 },
    /// Search exhausted without a certificate; this does not prove the
    /// potential cannot be positive.
    NotFound,
}

impl P1Witness {
    pub fn found(&self) -> bool {
        !matches!(self, P1Witness::NotFound)
    }
}

/// Search for a witness that the coupled potential can be positive:
/// first the diagonal (disjoint-support) route, then nonnegative amplitude
/// vectors on a simplex grid.
pub fn p1_witness(coupling: &crate::model::Coupling) -> P1Witness {
    let m = coupling.size();
    for i in 0..m {
        if coupling.get(i, i) > 0.0 {
            return P1Witness::DiagonalDisjoint {
                index: i,
                value: coupling.get(i, i),
            };
        }
    }
    // grid over nonnegative directions (coarse simplex sweep)
    let steps = match m {
        1 => 1usize,
        2 => 64,
        3 => 24,
        _ => 10,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |a: &[f64]| {
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return;
        }
        let unit: Vec<f64> = a.iter().map(|x| x / norm).collect();
        let q = coupling.quadratic_form(&unit);
        if q > 0.0 && best.as_ref().is_none_or(|(_, bq)| q > *bq) {
            best = Some((unit, q));
        }
    };
    let mut a = vec![0.0f64; m];
    enumerate_simplex(&mut a, 0, steps, &mut |a| consider(a));
    match best {
        Some((a, value)) => P1Witness::SharedProfile { a, value },
        None => P1Witness::NotFound,
    }
}

fn enumerate_simplex(a: &mut Vec<f64>, idx: usize, steps: usize, f: &mut impl FnMut(&[f64])) {
    if idx == a.len() {
        f(a);
        return;
    }
    for s in 0..=steps {
        a[idx] = s as f64 / steps as f64;
        enumerate_simplex(a, idx + 1, steps, f);
    }
}

/// Build a field realizing the witness: J of the result is positive.
pub fn witness_field(
    grid: &std::sync::Arc<crate::grid::GridSpec>,
    params: &ModelParams,
    witness: &P1Witness,
    profile: &ComponentField,
) -> Result<FieldVec> {
    let m = params.m();
    match witness {
        P1Witness::DiagonalDisjoint { index, .. } => {
            let mut comps = Vec::with_capacity(m);
            for i in 0..m {
                comps.push(if i == *index {
                    profile.clone()
                } else {
                    ComponentField::zeros(grid)
                });
            }
            FieldVec::new(comps)
        }
        P1Witness::SharedProfile { a, .. } => {
            let comps = a
                .iter()
                .map(|ai| {
                    profile.scaled(num_complex::Complex64::new(
                        ai.powf(1.0 / (params.p + 1.0)),
                        0.0,
                    ))
                })
                .collect();
            FieldVec::new(comps)
        }
        P1Witness::NotFound => Err(Error::Undefined {
            what: "witness field",
            why: "no positivity witness found".into(),
        }),
    }
}

/// Per-component Lagrange-multiplier estimates `(J_i - T_i)/M_i`, obtained by
/// pairing the stationary equation with each component. `None` where the
/// component mass vanishes.
pub fn multiplier_estimate(u: &FieldVec, params: &ModelParams) -> Result<Vec<Option<f64>>> {
    let rep = report(u, params)?;
    Ok((0..u.len())
        .map(|i| {
            let m = rep.component_mass[i];
            if m > 0.0 {
                Some((rep.component_potential[i] - rep.component_kinetic[i]) / m)
            } else {
                None
            }
        })
        .collect())
}
