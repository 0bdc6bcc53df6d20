//! Constrained minimizers and bound states.
//!
//! Subcritical ground states come from a normalized gradient flow on the
//! energy: an explicit step along the nonlinear gradient, the exact
//! integrating factor for the Laplacian in Fourier space, then
//! renormalization back onto the mass constraint, with step backtracking to
//! keep the energy monotone. The flow fixed point carries an O(tau)
//! splitting bias, so a fixed-point polish follows: the stationary system is
//! inverted spectrally with the current multiplier estimates and the
//! constraint re-imposed, which removes the bias without leaving the
//! constraint set.
//!
//! For p >= 2/N the energy is unbounded below on mass constraints; bound
//! states are computed instead by descending the action on the I = J
//! manifold (amplitude projection after each step) with a Petviashvili
//! polish.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{ComponentField, FieldVec};
use crate::functionals::{self, FunctionalReport, P1Witness};
use crate::grid::GridSpec;
use crate::model::{nonlinear_term, ModelParams, Regime};
use crate::resample::resample_scaled;

/// Mass constraint of the minimization problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintSpec {
    /// Fix the total mass `M(U)` of the vector.
    TotalMass(f64),
    /// Fix the mass of each component separately.
    PerComponentMass(Vec<f64>),
}

impl ConstraintSpec {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            ConstraintSpec::TotalMass(v) => {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(Error::InvalidConstraint(format!(
                        "total mass must be positive, got {v}"
                    )));
                }
            }
            ConstraintSpec::PerComponentMass(vs) => {
                if vs.len() != m {
                    return Err(Error::InvalidConstraint(format!(
                        "expected {m} per-component masses, got {}",
                        vs.len()
                    )));
                }
                for v in vs {
                    if !(v.is_finite() && *v > 0.0) {
                        return Err(Error::InvalidConstraint(format!(
                            "component masses must be positive, got {v}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Initializer {
    Gaussian,
    SechProfile,
    Random,
    #[serde(skip)]
    User(FieldVec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Initial flow step.
    pub tau: f64,
    pub max_iter: usize,
    /// Stationarity-residual tolerance for declaring convergence.
    pub tol: f64,
    /// Relative mass threshold below which a component counts as zero.
    pub mass_floor: f64,
    pub initializer: Initializer,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            tau: 0.2,
            max_iter: 20_000,
            tol: 1e-8,
            mass_floor: 1e-10,
            initializer: Initializer::SechProfile,
            seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParams("flow step must be positive".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParams("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// One recorded line of the convergence history.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowSample {
    pub iteration: usize,
    pub energy: f64,
    pub constraint_residual: f64,
    pub stationarity_residual: f64,
}

/// Structure tags of a converged state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureTags {
    /// Components carrying mass above the floor.
    pub support: Vec<usize>,
    /// All supported moduli proportional to the scalar reference profile
    /// after a common translation.
    pub r_member: bool,
    /// Proportionality coefficients against the reference (0 off support).
    pub coefficients: Vec<f64>,
    pub translation: Vec<f64>,
    pub max_profile_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundStateResult {
    #[serde(skip)]
    pub profile: FieldVec,
    /// Per-component Lagrange multiplier estimates (NaN on zero components).
    pub multipliers: Vec<f64>,
    /// Per-component L2 stationarity residual at those multipliers. After
    /// [`rescale_to_bound_state`] the multipliers are 1 and this is the
    /// residual of the stationary system itself.
    pub bs_residual: Vec<f64>,
    pub report: FunctionalReport,
    pub iterations: usize,
    pub converged: bool,
    /// False when unequal multipliers block the rescaling to a bound state.
    pub bound_state_candidate: bool,
    pub history: Vec<FlowSample>,
}

impl GroundStateResult {
    pub fn max_residual(&self) -> f64 {
        self.bs_residual.iter().cloned().fold(0.0, f64::max)
    }

    /// Support pattern at a relative mass floor.
    pub fn support(&self, mass_floor: f64) -> Vec<usize> {
        let total = self.report.mass;
        self.report
            .component_mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > mass_floor * total)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,energy,constraint_residual,stationarity_residual\n");
        for s in &self.history {
            out.push_str(&format!(
                "{},{:.16e},{:.3e},{:.3e}\n",
                s.iteration, s.energy, s.constraint_residual, s.stationarity_residual
            ));
        }
        out
    }
}

/// Closed-form scalar soliton of the 1D stationary problem:
/// `(p+1)^{1/(2p)} sech^{1/p}(p x)`.
pub fn sech_soliton_1d(grid: &Arc<GridSpec>, p: f64) -> Result<ComponentField> {
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid("sech profile is one-dimensional".into()));
    }
    let amp = (p + 1.0).powf(1.0 / (2.0 * p));
    ComponentField::sample(grid, |x| {
        Complex64::new(amp * (1.0 / (p * x[0]).cosh()).powf(1.0 / p), 0.0)
    })
}

fn gaussian_profile(grid: &Arc<GridSpec>) -> Result<ComponentField> {
    ComponentField::sample(grid, |x| {
        Complex64::new((-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0)
    })
}

fn ansatz_profile(grid: &Arc<GridSpec>, p: f64) -> Result<ComponentField> {
    if grid.dim() == 1 {
        sech_soliton_1d(grid, p)
    } else {
        gaussian_profile(grid)
    }
}

/// Amplitude direction used to seed component ratios: argmax of the coupling
/// quadratic form over nonnegative unit vectors (grid search), falling back
/// to uniform when nothing positive exists.
fn seed_amplitudes(params: &ModelParams) -> Vec<f64> {
    let m = params.m();
    if m == 1 {
        return vec![1.0];
    }
    let steps = if m == 2 { 64 } else { 16 };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut a = vec![0.0f64; m];
    enumerate(&mut a, 0, steps, &mut |cand: &[f64]| {
        let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return;
        }
        let unit: Vec<f64> = cand.iter().map(|x| x / norm).collect();
        let q = params.coupling.quadratic_form(&unit);
        if q > 0.0 && best.as_ref().is_none_or(|(_, bq)| q > *bq + 1e-12) {
            best = Some((unit, q));
        }
    });
    match best {
        Some((a, _)) => a,
        None => match functionals::p1_witness(&params.coupling) {
            P1Witness::DiagonalDisjoint { index, .. } => {
                (0..m).map(|i| if i == index { 1.0 } else { 0.0 }).collect()
            }
            _ => vec![1.0 / (m as f64).sqrt(); m],
        },
    }
}

fn enumerate(a: &mut Vec<f64>, idx: usize, steps: usize, f: &mut impl FnMut(&[f64])) {
    if idx == a.len() {
        f(a);
        return;
    }
    for s in 0..=steps {
        a[idx] = s as f64 / steps as f64;
        enumerate(a, idx + 1, steps, f);
    }
}

/// Build the starting field for a solve and push it onto the constraint.
pub fn initial_field(
    grid: &Arc<GridSpec>,
    params: &ModelParams,
    constraint: &ConstraintSpec,
    cfg: &FlowConfig,
) -> Result<FieldVec> {
    let m = params.m();
    let base = match &cfg.initializer {
        Initializer::User(u) => {
            params.check_field(u)?;
            u.clone()
        }
        Initializer::SechProfile => {
            let profile = ansatz_profile(grid, params.p)?;
            build_from_amplitudes(&profile, &seed_amplitudes(params), constraint)?
        }
        Initializer::Gaussian => {
            let profile = gaussian_profile(grid)?;
            build_from_amplitudes(&profile, &seed_amplitudes(params), constraint)?
        }
        Initializer::Random => random_field(grid, m, cfg.seed)?,
    };
    renormalize(&base, constraint)
}

fn build_from_amplitudes(
    profile: &ComponentField,
    amps: &[f64],
    constraint: &ConstraintSpec,
) -> Result<FieldVec> {
    let per_component = matches!(constraint, ConstraintSpec::PerComponentMass(_));
    let comps = amps
        .iter()
        .map(|&a| {
            // per-component constraints need mass in every component
            let a = if per_component { a.max(0.2) } else { a };
            profile.scaled(Complex64::new(a, 0.0))
        })
        .collect();
    FieldVec::new(comps)
}

/// Smooth random bump: common center and width, per-component amplitude,
/// phase and low-mode modulation. Deterministic in the seed.
fn random_field(grid: &Arc<GridSpec>, m: usize, seed: u64) -> Result<FieldVec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let center: Vec<f64> = (0..dim)
        .map(|d| (rng.gen::<f64>() - 0.5) * grid.box_length()[d] / 4.0)
        .collect();
    let width = 0.8 + rng.gen::<f64>();
    let mut comps = Vec::with_capacity(m);
    for _ in 0..m {
        let amp = 0.2 + rng.gen::<f64>();
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let mod_amp = 0.2 * rng.gen::<f64>();
        let mod_freq = 1.0 + 2.0 * rng.gen::<f64>();
        let center = center.clone();
        comps.push(ComponentField::sample(grid, move |x| {
            let r2: f64 = x
                .iter()
                .zip(&center)
                .map(|(xi, ci)| (xi - ci) * (xi - ci))
                .sum();
            let envelope = (-r2 / (2.0 * width * width)).exp();
            let wobble = 1.0 + mod_amp * (mod_freq * (x[0] - center[0])).cos();
            Complex64::from_polar(amp * envelope * wobble, phase)
        })?);
    }
    FieldVec::new(comps)
}

/// Rescale onto the constraint set; exact up to roundoff.
fn renormalize(u: &FieldVec, constraint: &ConstraintSpec) -> Result<FieldVec> {
    match constraint {
        ConstraintSpec::TotalMass(target) => {
            let m = u.total_mass();
            if m <= 0.0 || !m.is_finite() {
                return Err(Error::ZeroCollapse);
            }
            Ok(u.scaled(Complex64::new((target / m).sqrt(), 0.0)))
        }
        ConstraintSpec::PerComponentMass(targets) => {
            let comps = u
                .components()
                .iter()
                .zip(targets)
                .map(|(c, t)| {
                    let m = c.l2_norm_sq();
                    if m <= 0.0 || !m.is_finite() {
                        return Err(Error::ZeroCollapse);
                    }
                    Ok(c.scaled(Complex64::new((t / m).sqrt(), 0.0)))
                })
                .collect::<Result<_>>()?;
            FieldVec::new(comps)
        }
    }
}

fn constraint_residual(u: &FieldVec, constraint: &ConstraintSpec) -> f64 {
    match constraint {
        ConstraintSpec::TotalMass(target) => (u.total_mass() - target).abs() / target,
        ConstraintSpec::PerComponentMass(targets) => u
            .component_masses()
            .iter()
            .zip(targets)
            .map(|(m, t)| (m - t).abs() / t)
            .fold(0.0, f64::max),
    }
}

/// One normalized-gradient-flow step: explicit nonlinear gradient, exact
/// kinetic integrating factor, renormalization.
fn flow_step(
    u: &FieldVec,
    params: &ModelParams,
    constraint: &ConstraintSpec,
    tau: f64,
) -> Result<FieldVec> {
    let nl = nonlinear_term(u, params)?;
    let grid = u.grid();
    let comps = u
        .components()
        .iter()
        .zip(nl.components())
        .map(|(c, n)| {
            let mut s: Vec<Complex64> = c
                .values()
                .iter()
                .zip(n.values())
                .map(|(a, b)| a + tau * b)
                .collect();
            fft::forward(&mut s, grid.points());
            for (flat, v) in s.iter_mut().enumerate() {
                *v *= (-tau * grid.ksq(flat)).exp();
            }
            fft::inverse(&mut s, grid.points());
            ComponentField::from_parts(grid.clone(), s)
        })
        .collect();
    renormalize(&FieldVec::new(comps)?, constraint)
}

/// Per-component L2 residual of `Delta u_i - omega_i u_i + NL_i(U)`.
/// Zero components report zero.
fn stationarity_residual(u: &FieldVec, params: &ModelParams, omegas: &[f64]) -> Result<Vec<f64>> {
    let nl = nonlinear_term(u, params)?;
    let mut out = Vec::with_capacity(u.len());
    for (i, (c, n)) in u.components().iter().zip(nl.components()).enumerate() {
        if c.l2_norm_sq() == 0.0 {
            out.push(0.0);
            continue;
        }
        let omega = if omegas[i].is_finite() { omegas[i] } else { 1.0 };
        let lap = c.laplacian();
        let mut acc = 0.0;
        for ((l, v), nv) in lap.values().iter().zip(c.values()).zip(n.values()) {
            acc += (l - omega * v + nv).norm_sqr();
        }
        out.push((acc * u.grid().cell_volume()).sqrt());
    }
    Ok(out)
}

fn max_residual(u: &FieldVec, params: &ModelParams, omegas: &[f64]) -> Result<f64> {
    Ok(stationarity_residual(u, params, omegas)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Per-component L2 residual of the stationary system at the given
/// multipliers (1 for a bound state).
pub fn bound_state_residual(
    u: &FieldVec,
    params: &ModelParams,
    omegas: &[f64],
) -> Result<Vec<f64>> {
    params.check_field(u)?;
    stationarity_residual(u, params, omegas)
}

fn multipliers_of(rep: &FunctionalReport, constraint: &ConstraintSpec) -> Vec<f64> {
    match constraint {
        ConstraintSpec::TotalMass(_) => {
            // a single multiplier pairs the whole system
            let omega = (rep.potential - rep.kinetic) / rep.mass;
            vec![omega; rep.component_mass.len()]
        }
        ConstraintSpec::PerComponentMass(_) => rep
            .component_mass
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if *m > 0.0 {
                    (rep.component_potential[i] - rep.component_kinetic[i]) / m
                } else {
                    f64::NAN
                }
            })
            .collect(),
    }
}

/// Solve `(omega_i - Delta) w_i = NL_i(U)` spectrally and renormalize.
/// Together with the multiplier update this map has exact stationary points
/// of the constrained problem as its fixed points.
fn polish_step(
    u: &FieldVec,
    params: &ModelParams,
    constraint: &ConstraintSpec,
    omegas: &[f64],
) -> Result<FieldVec> {
    let nl = nonlinear_term(u, params)?;
    let grid = u.grid();
    let comps = u
        .components()
        .iter()
        .zip(nl.components())
        .enumerate()
        .map(|(i, (c, n))| {
            let omega = omegas[i];
            if !omega.is_finite() || c.l2_norm_sq() == 0.0 {
                return c.clone();
            }
            let mut s = n.values().to_vec();
            fft::forward(&mut s, grid.points());
            for (flat, v) in s.iter_mut().enumerate() {
                *v /= omega + grid.ksq(flat);
            }
            fft::inverse(&mut s, grid.points());
            ComponentField::from_parts(grid.clone(), s)
        })
        .collect();
    renormalize(&FieldVec::new(comps)?, constraint)
}

/// Fixed-point polish with residual monitoring and damping on failure.
fn polish(
    u0: FieldVec,
    params: &ModelParams,
    constraint: &ConstraintSpec,
    target: f64,
    max_iter: usize,
) -> Result<(FieldVec, usize)> {
    let mut u = u0;
    let rep = functionals::report(&u, params)?;
    let mut omegas = multipliers_of(&rep, constraint);
    if omegas.iter().any(|w| w.is_finite() && *w <= 0.0) {
        // the spectral inversion needs positive multipliers; leave the state
        // to the caller as-is
        return Ok((u, 0));
    }
    let mut res = max_residual(&u, params, &omegas)?;
    let mut iters = 0;
    for _ in 0..max_iter {
        if res < target {
            break;
        }
        let full = polish_step(&u, params, constraint, &omegas)?;
        let mut accepted = false;
        let mut theta = 1.0;
        for _ in 0..6 {
            let cand = if theta == 1.0 {
                full.clone()
            } else {
                let blend = u
                    .components()
                    .iter()
                    .zip(full.components())
                    .map(|(a, b)| {
                        let vals = a
                            .values()
                            .iter()
                            .zip(b.values())
                            .map(|(x, y)| x * (1.0 - theta) + y * theta)
                            .collect();
                        ComponentField::from_parts(u.grid().clone(), vals)
                    })
                    .collect();
                renormalize(&FieldVec::new(blend)?, constraint)?
            };
            let cand_rep = functionals::report(&cand, params)?;
            let cand_omegas = multipliers_of(&cand_rep, constraint);
            if cand_omegas.iter().any(|w| w.is_finite() && *w <= 0.0) {
                theta *= 0.5;
                continue;
            }
            let cand_res = max_residual(&cand, params, &cand_omegas)?;
            if cand_res < res {
                u = cand;
                omegas = cand_omegas;
                res = cand_res;
                accepted = true;
                break;
            }
            theta *= 0.5;
        }
        iters += 1;
        if !accepted {
            break;
        }
    }
    Ok((u, iters))
}

fn assemble_result(
    u: FieldVec,
    params: &ModelParams,
    constraint: Option<&ConstraintSpec>,
    iterations: usize,
    tol: f64,
    history: Vec<FlowSample>,
) -> Result<GroundStateResult> {
    let rep = functionals::report(&u, params)?;
    let multipliers = match constraint {
        Some(c) => multipliers_of(&rep, c),
        None => vec![1.0; u.len()],
    };
    let residual = stationarity_residual(&u, params, &multipliers)?;
    let converged = residual.iter().all(|r| *r < tol);
    Ok(GroundStateResult {
        profile: u,
        multipliers,
        bs_residual: residual,
        report: rep,
        iterations,
        converged,
        bound_state_candidate: true,
        history,
    })
}

/// Minimize the energy on the constraint set by normalized gradient flow.
/// Requires the subcritical regime, where the energy is bounded below.
/// Returns the constrained minimizer itself; its multipliers are generally
/// not 1 (see [`rescale_to_bound_state`]).
pub fn minimize(
    grid: &Arc<GridSpec>,
    constraint: &ConstraintSpec,
    params: &ModelParams,
    cfg: &FlowConfig,
) -> Result<GroundStateResult> {
    cfg.validate()?;
    constraint.validate(params.m())?;
    if params.regime() != Regime::Subcritical {
        return Err(Error::WrongRegime {
            required: "subcritical (p < 2/N)",
            p: params.p,
            dim: params.dim,
        });
    }
    let mut u = initial_field(grid, params, constraint, cfg)?;
    let mut energy = functionals::report(&u, params)?.energy;
    let mut tau = cfg.tau;
    let tau_min = cfg.tau * 1e-6;
    let mut history = Vec::new();
    let mut plateau = 0usize;
    let mut iterations = 0usize;
    let energy_floor = -1e12;

    while iterations < cfg.max_iter {
        let trial = flow_step(&u, params, constraint, tau)?;
        let trial_energy = functionals::report(&trial, params)?.energy;
        if !trial_energy.is_finite() || trial_energy < energy_floor {
            return Err(Error::EnergyDiverged { energy: trial_energy });
        }
        if trial_energy <= energy + 1e-13 * (1.0 + energy.abs()) {
            let decrease = (energy - trial_energy).abs() / (1.0 + energy.abs());
            u = trial;
            energy = trial_energy;
            iterations += 1;
            if iterations.is_multiple_of(25) {
                let rep = functionals::report(&u, params)?;
                let omegas = multipliers_of(&rep, constraint);
                history.push(FlowSample {
                    iteration: iterations,
                    energy,
                    constraint_residual: constraint_residual(&u, constraint),
                    stationarity_residual: max_residual(&u, params, &omegas)?,
                });
            }
            if decrease < 1e-13 {
                plateau += 1;
                if plateau >= 5 {
                    break;
                }
            } else {
                plateau = 0;
            }
            tau = (tau * 1.05).min(cfg.tau * 4.0);
        } else {
            tau *= 0.5;
            if tau < tau_min {
                break;
            }
        }
    }
    if iterations == 0 {
        return Err(Error::NonConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }

    let (u, polish_iters) = polish(u, params, constraint, cfg.tol * 1e-4, 400)?;
    let mut result = assemble_result(
        u,
        params,
        Some(constraint),
        iterations + polish_iters,
        cfg.tol,
        history,
    )?;
    result.history.push(FlowSample {
        iteration: result.iterations,
        energy: result.report.energy,
        constraint_residual: constraint_residual(&result.profile, constraint),
        stationarity_residual: result.max_residual(),
    });
    if !result.converged {
        return Err(Error::NonConvergence {
            iterations: result.iterations,
            residual: result.max_residual(),
        });
    }
    Ok(result)
}

/// Amplitude projection onto the Nehari-type set `I(U) = J(U)`.
fn nehari_project(u: &FieldVec, params: &ModelParams) -> Result<FieldVec> {
    let rep = functionals::report(u, params)?;
    if rep.potential <= 0.0 {
        return Err(Error::Undefined {
            what: "Nehari projection",
            why: format!("requires J > 0, got {:.3e}", rep.potential),
        });
    }
    let c = (rep.h1 / rep.potential).powf(1.0 / (2.0 * params.p));
    Ok(u.scaled(Complex64::new(c, 0.0)))
}

/// Semi-implicit descent step on the action: backward Euler in `(1 - Delta)`,
/// explicit nonlinear gradient, then amplitude projection.
fn nehari_step(u: &FieldVec, params: &ModelParams, tau: f64) -> Result<FieldVec> {
    let nl = nonlinear_term(u, params)?;
    let grid = u.grid();
    let comps = u
        .components()
        .iter()
        .zip(nl.components())
        .map(|(c, n)| {
            let mut s: Vec<Complex64> = c
                .values()
                .iter()
                .zip(n.values())
                .map(|(a, b)| a + tau * b)
                .collect();
            fft::forward(&mut s, grid.points());
            for (flat, v) in s.iter_mut().enumerate() {
                *v /= 1.0 + tau * (1.0 + grid.ksq(flat));
            }
            fft::inverse(&mut s, grid.points());
            ComponentField::from_parts(grid.clone(), s)
        })
        .collect();
    nehari_project(&FieldVec::new(comps)?, params)
}

/// Petviashvili iteration for the stationary system (multiplier 1) with a
/// residual-monotone acceptance rule.
fn petviashvili(
    u0: FieldVec,
    params: &ModelParams,
    target: f64,
    max_iter: usize,
) -> Result<(FieldVec, usize)> {
    let alpha = (2.0 * params.p + 1.0) / (2.0 * params.p);
    let grid = u0.grid().clone();
    let ones = vec![1.0; u0.len()];
    let mut u = u0;
    let mut res = max_residual(&u, params, &ones)?;
    let mut iters = 0usize;
    for _ in 0..max_iter {
        if res < target {
            break;
        }
        let rep = functionals::report(&u, params)?;
        if rep.potential <= 0.0 {
            break;
        }
        let gamma = rep.h1 / rep.potential;
        let nl = nonlinear_term(&u, params)?;
        let comps = nl
            .components()
            .iter()
            .map(|n| {
                let mut s = n.values().to_vec();
                fft::forward(&mut s, grid.points());
                for (flat, v) in s.iter_mut().enumerate() {
                    *v /= 1.0 + grid.ksq(flat);
                }
                fft::inverse(&mut s, grid.points());
                ComponentField::from_parts(grid.clone(), s)
            })
            .collect();
        let cand = FieldVec::new(comps)?.scaled(Complex64::new(gamma.powf(alpha), 0.0));
        let cand_res = max_residual(&cand, params, &ones)?;
        iters += 1;
        if cand_res < res {
            u = cand;
            res = cand_res;
        } else {
            break;
        }
    }
    Ok((u, iters))
}

/// Bound states by action descent constrained to `I = J` (amplitude
/// projection each step), with Petviashvili polish. This is the route for
/// p >= 2/N, where mass-constrained energy minimization degenerates.
pub fn minimize_action_nehari(
    grid: &Arc<GridSpec>,
    params: &ModelParams,
    cfg: &FlowConfig,
) -> Result<GroundStateResult> {
    cfg.validate()?;
    let seed_constraint = ConstraintSpec::TotalMass(1.0);
    let raw = initial_field(grid, params, &seed_constraint, cfg)?;
    let mut u = nehari_project(&raw, params)?;
    let mut action = functionals::report(&u, params)?.action;
    let mut tau = cfg.tau;
    let tau_min = cfg.tau * 1e-6;
    let mut history = Vec::new();
    let mut plateau = 0usize;
    let mut iterations = 0usize;

    while iterations < cfg.max_iter {
        let trial = nehari_step(&u, params, tau)?;
        let trial_action = functionals::report(&trial, params)?.action;
        if !trial_action.is_finite() {
            return Err(Error::EnergyDiverged { energy: trial_action });
        }
        if trial_action <= action + 1e-13 * (1.0 + action.abs()) {
            let decrease = (action - trial_action).abs() / (1.0 + action.abs());
            u = trial;
            action = trial_action;
            iterations += 1;
            if iterations.is_multiple_of(25) {
                history.push(FlowSample {
                    iteration: iterations,
                    energy: action,
                    constraint_residual: 0.0,
                    stationarity_residual: max_residual(&u, params, &vec![1.0; u.len()])?,
                });
            }
            if decrease < 1e-13 {
                plateau += 1;
                if plateau >= 5 {
                    break;
                }
            } else {
                plateau = 0;
            }
            tau = (tau * 1.05).min(cfg.tau * 4.0);
        } else {
            tau *= 0.5;
            if tau < tau_min {
                break;
            }
        }
    }

    let (u, polish_iters) = petviashvili(u, params, cfg.tol * 1e-4, 400)?;
    let result = assemble_result(u, params, None, iterations + polish_iters, cfg.tol, history)?;
    if !result.converged {
        return Err(Error::NonConvergence {
            iterations: result.iterations,
            residual: result.max_residual(),
        });
    }
    Ok(result)
}

/// Map a constrained minimizer to a bound state of the stationary system
/// with multiplier 1, via `u(x) -> omega^{-1/(2p)} u(x / sqrt(omega))`.
///
/// When the per-component multipliers disagree beyond 1e-6 no such scaling
/// exists; the input is returned with `bound_state_candidate = false`.
pub fn rescale_to_bound_state(
    result: &GroundStateResult,
    params: &ModelParams,
) -> Result<GroundStateResult> {
    let finite: Vec<f64> = result
        .multipliers
        .iter()
        .cloned()
        .filter(|w| w.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(Error::Undefined {
            what: "bound-state rescale",
            why: "no component carries a multiplier".into(),
        });
    }
    let omega = finite.iter().sum::<f64>() / finite.len() as f64;
    let spread = finite.iter().map(|w| (w - omega).abs()).fold(0.0, f64::max);
    if spread > 1e-6 * omega.abs().max(1.0) {
        let mut flagged = result.clone();
        flagged.bound_state_candidate = false;
        return Ok(flagged);
    }
    if omega <= 0.0 {
        return Err(Error::Undefined {
            what: "bound-state rescale",
            why: format!("multiplier must be positive, got {omega:.3e}"),
        });
    }
    if (omega - 1.0).abs() < 1e-12 {
        return Ok(result.clone());
    }
    let sigma = 1.0 / omega.sqrt();
    let scaled = resample_scaled(&result.profile, sigma, 1.0 / params.p)?;
    // the scaling is exact for the continuum system; interpolation leaves a
    // small residue that the polish removes
    let (scaled, extra) = petviashvili(scaled, params, 1e-12, 40)?;
    let mut out = assemble_result(
        scaled,
        params,
        None,
        result.iterations + extra,
        1e-6,
        result.history.clone(),
    )?;
    out.converged = result.converged && out.converged;
    Ok(out)
}

/// Total mass of the ground-state set, obtained by solving at the ansatz
/// mass and rescaling the multiplier to 1. The value is an invariant of the
/// model in the subcritical regime.
pub fn mu_of_groundstate(
    grid: &Arc<GridSpec>,
    params: &ModelParams,
    cfg: &FlowConfig,
) -> Result<f64> {
    let target = match &cfg.initializer {
        Initializer::User(u) => u.total_mass(),
        _ => {
            let amps = seed_amplitudes(params);
            let profile = ansatz_profile(grid, params.p)?;
            amps.iter().map(|a| a * a * profile.l2_norm_sq()).sum()
        }
    };
    let target = if target > 0.0 { target } else { 1.0 };
    let min = minimize(grid, &ConstraintSpec::TotalMass(target), params, cfg)?;
    let bs = rescale_to_bound_state(&min, params)?;
    if !bs.bound_state_candidate {
        return Err(Error::Undefined {
            what: "ground-state mass",
            why: "minimizer multipliers are unequal".into(),
        });
    }
    Ok(bs.report.mass)
}

/// Classify the structure of a converged state: support pattern at the mass
/// floor and membership in the class whose nonzero components are all scalar
/// multiples of one reference profile after a common translation.
pub fn classify_structure(
    u: &FieldVec,
    params: &ModelParams,
    q_scalar: &ComponentField,
    mass_floor: f64,
) -> Result<StructureTags> {
    params.check_field(u)?;
    if u.grid().as_ref() != q_scalar.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let masses = u.component_masses();
    let total: f64 = masses.iter().sum();
    let support: Vec<usize> = masses
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > mass_floor * total)
        .map(|(i, _)| i)
        .collect();
    if support.is_empty() {
        return Ok(StructureTags {
            support,
            r_member: false,
            coefficients: vec![0.0; u.len()],
            translation: vec![0.0; u.grid().dim()],
            max_profile_deviation: f64::INFINITY,
        });
    }
    let q_mass = q_scalar.l2_norm_sq();
    if q_mass <= 0.0 {
        return Err(Error::Undefined {
            what: "structure classification",
            why: "reference profile is zero".into(),
        });
    }
    // common translation from the dominant component's modulus correlation
    let dominant = *support
        .iter()
        .max_by(|a, b| masses[**a].total_cmp(&masses[**b]))
        .unwrap();
    let y = modulus_translation(u.component(dominant), q_scalar);
    let q_shifted = q_scalar.fourier_shift(&y);
    let mut coefficients = vec![0.0; u.len()];
    let mut max_dev = 0.0f64;
    for &i in &support {
        let a = (masses[i] / q_mass).sqrt();
        coefficients[i] = a;
        let mut acc = 0.0;
        for (uv, qv) in u.component(i).values().iter().zip(q_shifted.values()) {
            let d = uv.norm() - a * qv.norm();
            acc += d * d;
        }
        let dev = (acc * u.grid().cell_volume()).sqrt() / (a * q_mass.sqrt());
        max_dev = max_dev.max(dev);
    }
    Ok(StructureTags {
        r_member: max_dev < 1e-4,
        support,
        coefficients,
        translation: y,
        max_profile_deviation: max_dev,
    })
}

/// Translation `y` such that `q(x + y)` best matches `|u|`, from the grid
/// argmax of the modulus cross-correlation plus a quadratic sub-grid
/// refinement per axis.
fn modulus_translation(u: &ComponentField, q: &ComponentField) -> Vec<f64> {
    let grid = u.grid();
    let dim = grid.dim();
    let mut a: Vec<Complex64> = u.values().iter().map(|v| Complex64::new(v.norm(), 0.0)).collect();
    let mut b: Vec<Complex64> = q.values().iter().map(|v| Complex64::new(v.norm(), 0.0)).collect();
    fft::forward(&mut a, grid.points());
    fft::forward(&mut b, grid.points());
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    fft::inverse(&mut a, grid.points());
    // a[s] is now the correlation sum_x |u(x)| |q(x - s)|; q(x + y) matches
    // with y = -s_max
    let best = a
        .iter()
        .enumerate()
        .max_by(|(_, x), (_, y)| x.re.total_cmp(&y.re))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut idx = [0usize; crate::grid::MAX_DIM];
    grid.unravel(best, &mut idx[..dim]);
    let mut y = Vec::with_capacity(dim);
    for d in 0..dim {
        let n = grid.points()[d];
        let h = grid.spacing(d);
        let s = if idx[d] < n / 2 {
            idx[d] as f64
        } else {
            idx[d] as f64 - n as f64
        };
        let neighbor = |off: i64| -> f64 {
            let mut j = idx;
            j[d] = (idx[d] as i64 + off).rem_euclid(n as i64) as usize;
            a[grid.ravel(&j[..dim])].re
        };
        let (cm, c0, cp) = (neighbor(-1), neighbor(0), neighbor(1));
        let denom = cm - 2.0 * c0 + cp;
        let frac = if denom != 0.0 { 0.5 * (cm - cp) / denom } else { 0.0 };
        y.push(-(s + frac.clamp(-0.5, 0.5)) * h);
    }
    y
}

/// Ground state of the model: subcritical via constrained energy
/// minimization plus multiplier rescale, otherwise the Nehari route.
pub fn ground_state(
    grid: &Arc<GridSpec>,
    params: &ModelParams,
    cfg: &FlowConfig,
) -> Result<GroundStateResult> {
    match params.regime() {
        Regime::Subcritical => {
            let target = {
                let amps = seed_amplitudes(params);
                let profile = ansatz_profile(grid, params.p)?;
                amps.iter()
                    .map(|a| a * a * profile.l2_norm_sq())
                    .sum::<f64>()
            };
            let min = minimize(grid, &ConstraintSpec::TotalMass(target), params, cfg)?;
            let bs = rescale_to_bound_state(&min, params)?;
            if !bs.bound_state_candidate {
                return Err(Error::Undefined {
                    what: "ground state",
                    why: "total-mass minimizer produced unequal multipliers".into(),
                });
            }
            Ok(bs)
        }
        _ => minimize_action_nehari(grid, params, cfg),
    }
}
