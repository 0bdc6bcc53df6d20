//! Split-step spectral time integration of the coupled system.
//!
//! One Strang step composes a half kinetic substep (exact in Fourier space,
//! phases `exp(-i |k|^2 dt/2)`), a full nonlinear substep (exact pointwise:
//! the phase rate is real so every modulus is invariant), and another half
//! kinetic substep. Both substeps conserve each component's mass to
//! roundoff; the energy drifts at O(dt^2) per unit time.
//!
//! Blow-up is detected, not resolved: the integration stops when the
//! gradient norm grows by a configured factor or the adaptive step collapses
//! to its floor. A boundary-shell mass monitor guards the periodic
//! approximation; rows recorded after a tail violation would be untrusted,
//! so the run stops there too.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, ReferenceFamily};
use crate::error::{Error, Result};
use crate::fft;
use crate::field::{ComponentField, FieldVec};
use crate::functionals;
use crate::model::{phase_rates, ModelParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Floor for the adaptive step; reaching it raises the blow-up flag.
    pub dt_min: f64,
    /// Gradient-norm growth factor that raises the blow-up flag.
    pub blowup_gradient_factor: f64,
    /// Boundary-shell mass fraction above which results are untrusted.
    pub tail_tolerance: f64,
    /// Record one trace row every this many accepted steps.
    pub record_stride: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 10.0,
            dt_min: 1e-7,
            blowup_gradient_factor: 1e3,
            tail_tolerance: 1e-6,
            record_stride: 10,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt_min > 0.0 && self.dt > self.dt_min) {
            return Err(Error::InvalidParams(format!(
                "need dt > dt_min > 0, got dt = {}, dt_min = {}",
                self.dt, self.dt_min
            )));
        }
        if self.t_end <= 0.0 || self.t_end.is_nan() {
            return Err(Error::InvalidParams("t_end must be positive".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParams("record_stride must be nonzero".into()));
        }
        Ok(())
    }
}

/// Time series of the monitored quantities along one evolution.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    /// Row-per-time per-component masses.
    pub component_mass: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub pohozaev: Vec<f64>,
    pub variance: Vec<f64>,
    pub gradient_norm: Vec<f64>,
    /// Orbital distance to the reference family, when one was monitored.
    pub orbital_distance: Option<Vec<f64>>,
    pub blowup_time: Option<f64>,
    pub tail_violation_time: Option<f64>,
}

impl EvolutionTrace {
    pub fn blowup_detected(&self) -> bool {
        self.blowup_time.is_some()
    }

    pub fn tail_violation(&self) -> bool {
        self.tail_violation_time.is_some()
    }

    pub fn mass_drift(&self) -> f64 {
        if self.component_mass.len() < 2 {
            return 0.0;
        }
        let first = &self.component_mass[0];
        let mut worst = 0.0f64;
        for row in &self.component_mass[1..] {
            for (m, m0) in row.iter().zip(first) {
                if *m0 > 0.0 {
                    worst = worst.max((m - m0).abs() / m0);
                }
            }
        }
        worst
    }

    pub fn energy_drift(&self) -> f64 {
        if self.energy.len() < 2 {
            return 0.0;
        }
        let e0 = self.energy[0];
        let scale = e0.abs().max(1e-30);
        self.energy[1..]
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let m = self.component_mass.first().map_or(0, |r| r.len());
        let mut out = String::from("t");
        for i in 0..m {
            out.push_str(&format!(",mass_{}", i + 1));
        }
        out.push_str(",energy,pohozaev,variance,gradient_norm");
        if self.orbital_distance.is_some() {
            out.push_str(",orbital_distance");
        }
        out.push('\n');
        for (row, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:.12e}"));
            for v in &self.component_mass[row] {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push_str(&format!(
                ",{:.16e},{:.16e},{:.16e},{:.16e}",
                self.energy[row], self.pohozaev[row], self.variance[row], self.gradient_norm[row]
            ));
            if let Some(d) = &self.orbital_distance {
                out.push_str(&format!(",{:.16e}", d[row]));
            }
            out.push('\n');
        }
        out
    }

    /// Flags and drift statistics for the run summary.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rows": self.times.len(),
            "t_final": self.times.last().copied().unwrap_or(0.0),
            "mass_drift": self.mass_drift(),
            "energy_drift": self.energy_drift(),
            "blowup_detected": self.blowup_detected(),
            "blowup_time": self.blowup_time,
            "tail_violation": self.tail_violation(),
            "tail_violation_time": self.tail_violation_time,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionOutput {
    pub trace: EvolutionTrace,
    pub final_state: FieldVec,
    pub steps: usize,
    pub final_dt: f64,
}

/// Exact nonlinear substep: multiply each component by
/// `exp(i dt sum_j k_ij |v_j|^{p+1} |v_i|^{p-1})` pointwise. The rate is
/// real, so every modulus is preserved exactly.
pub fn nonlinear_phase_step(v: &FieldVec, params: &ModelParams, dt: f64) -> Result<FieldVec> {
    params.check_field(v)?;
    let rates = phase_rates(v, params);
    let comps = v
        .components()
        .iter()
        .zip(&rates)
        .map(|(c, rate)| {
            let vals = c
                .values()
                .iter()
                .zip(rate)
                .map(|(u, r)| u * Complex64::from_polar(1.0, dt * r))
                .collect();
            ComponentField::from_parts(c.grid().clone(), vals)
        })
        .collect();
    FieldVec::new(comps)
}

/// Exact kinetic substep `exp(i dt Delta)` in Fourier space.
fn kinetic_step(v: &FieldVec, dt: f64) -> FieldVec {
    let grid = v.grid();
    v.map(|c| {
        let mut s = c.values().to_vec();
        fft::forward(&mut s, grid.points());
        for (flat, val) in s.iter_mut().enumerate() {
            *val *= Complex64::from_polar(1.0, -grid.ksq(flat) * dt);
        }
        fft::inverse(&mut s, grid.points());
        ComponentField::from_parts(grid.clone(), s)
    })
}

/// One Strang step: half kinetic, full nonlinear, half kinetic. Second order
/// in dt; symmetric, so stepping dt then -dt is the identity to roundoff.
pub fn strang_step(v: &FieldVec, params: &ModelParams, dt: f64) -> Result<FieldVec> {
    let half = kinetic_step(v, 0.5 * dt);
    let kicked = nonlinear_phase_step(&half, params, dt)?;
    Ok(kinetic_step(&kicked, 0.5 * dt))
}

/// Advance to `t_end` or until a flag stops the run. Records conserved
/// quantities, variance, gradient norm, and optionally the orbital distance
/// to a reference family.
pub fn evolve(
    v0: &FieldVec,
    params: &ModelParams,
    cfg: &StepperConfig,
    monitor: Option<&ReferenceFamily>,
) -> Result<EvolutionOutput> {
    cfg.validate()?;
    params.check_field(v0)?;
    if !v0.is_finite() {
        return Err(Error::NonFinite {
            what: "initial state".into(),
            index: 0,
        });
    }
    let tail0 = v0.shell_mass_fraction();
    if tail0 > cfg.tail_tolerance {
        return Err(Error::TailMass {
            measured: tail0,
            tolerance: cfg.tail_tolerance,
        });
    }

    let mut trace = EvolutionTrace {
        orbital_distance: monitor.map(|_| Vec::new()),
        ..EvolutionTrace::default()
    };
    let mut v = v0.clone();
    let mut t = 0.0f64;
    let mut dt = cfg.dt;
    let rep0 = functionals::report(&v, params)?;
    let grad0 = rep0.kinetic.sqrt().max(1e-300);
    // natural energy scale: magnitudes of the kinetic and potential pieces
    // (the energy itself can vanish, e.g. on critical bound states)
    let e_scale = (0.5 * rep0.kinetic + rep0.potential.abs() / (2.0 * params.p + 2.0)).max(1e-300);
    let e_ref = rep0.energy;
    let mut steps = 0usize;

    let record =
        |trace: &mut EvolutionTrace, t: f64, v: &FieldVec, params: &ModelParams| -> Result<()> {
            let rep = functionals::report(v, params)?;
            trace.times.push(t);
            trace.component_mass.push(rep.component_mass.clone());
            trace.energy.push(rep.energy);
            trace.pohozaev.push(rep.pohozaev);
            trace.variance.push(diagnostics::variance(v));
            trace.gradient_norm.push(rep.kinetic.sqrt());
            if let (Some(d), Some(fam)) = (trace.orbital_distance.as_mut(), monitor) {
                d.push(diagnostics::distance_to_family(v, fam)?);
            }
            Ok(())
        };
    record(&mut trace, t, &v, params)?;

    let zero_state = v.total_mass() == 0.0;
    let mut energy = e_ref;
    // landing guard well above the float error accumulated by t += dt
    let t_guard = cfg.t_end - 1e-6 * cfg.dt;
    while t < t_guard {
        let step_dt = dt.min(cfg.t_end - t);
        let trial = strang_step(&v, params, step_dt)?;
        if !trial.is_finite() {
            trace.blowup_time = Some(t);
            break;
        }
        let trial_energy = functionals::report(&trial, params)?.energy;
        // accuracy tier: halve on a per-step energy jump; the floor is one
        // arm of the blow-up proxy
        if !zero_state && (trial_energy - energy).abs() > 1e-5 * e_scale {
            if dt * 0.5 < cfg.dt_min {
                trace.blowup_time = Some(t);
                break;
            }
            dt *= 0.5;
            continue;
        }
        // conservation tier: an accumulated deviation from the conserved
        // energy means spatial resolution is gone; no step size undoes it
        if !zero_state && (trial_energy - e_ref).abs() > 1e-3 * e_scale {
            trace.blowup_time = Some(t);
            break;
        }
        v = trial;
        energy = trial_energy;
        t += step_dt;
        steps += 1;

        let grad = v.total_gradient_norm_sq().sqrt();
        let blown = grad > cfg.blowup_gradient_factor * grad0;
        let tail = v.shell_mass_fraction();
        let tail_violated = tail > cfg.tail_tolerance;
        if steps.is_multiple_of(cfg.record_stride) || t >= t_guard || blown || tail_violated {
            record(&mut trace, t, &v, params)?;
        }
        if blown {
            trace.blowup_time = Some(t);
            break;
        }
        if tail_violated {
            trace.tail_violation_time = Some(t);
            break;
        }
    }

    Ok(EvolutionOutput {
        trace,
        final_state: v,
        steps,
        final_dt: dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::sech_soliton_1d;
    use crate::grid::GridSpec;
    use crate::model::Coupling;
    use std::sync::Arc;

    fn grid_1d() -> Arc<GridSpec> {
        GridSpec::line(1024, 40.0).unwrap()
    }

    #[test]
    fn nonlinear_step_dt_zero_is_identity() {
        let g = grid_1d();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        let v = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let w = nonlinear_phase_step(&v, &params, 0.0).unwrap();
        for (a, b) in v.component(0).values().iter().zip(w.component(0).values()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn nonlinear_step_constant_modulus_exact_phase() {
        let g = GridSpec::line(64, 10.0).unwrap();
        let params = ModelParams::scalar(1.5, 1).unwrap();
        let c = 0.7;
        let v = FieldVec::from_single(
            ComponentField::sample(&g, |_| Complex64::new(c, 0.0)).unwrap(),
        );
        let dt = 0.3;
        let w = nonlinear_phase_step(&v, &params, dt).unwrap();
        // rate = k |v|^{p+1} |v|^{p-1} = c^{2p}
        let expected = Complex64::from_polar(c, dt * c.powf(2.0 * params.p));
        for val in w.component(0).values() {
            assert!((val - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn nonlinear_step_preserves_moduli() {
        let g = GridSpec::line(256, 20.0).unwrap();
        let params = ModelParams::new(2.0, 1, Coupling::all_ones(2)).unwrap();
        let v = FieldVec::new(vec![
            ComponentField::sample(&g, |x| {
                Complex64::new((-x[0] * x[0]).exp(), 0.3 * (x[0] * 2.0).sin())
            })
            .unwrap(),
            ComponentField::sample(&g, |x| Complex64::new(0.5 * (-x[0] * x[0] / 2.0).exp(), 0.1))
                .unwrap(),
        ])
        .unwrap();
        let w = nonlinear_phase_step(&v, &params, 0.17).unwrap();
        for (cv, cw) in v.components().iter().zip(w.components()) {
            let (mv, mw) = (cv.l2_norm_sq(), cw.l2_norm_sq());
            assert!((mv - mw).abs() < 1e-14 * mv);
            for (a, b) in cv.values().iter().zip(cw.values()) {
                assert!((a.norm() - b.norm()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn strang_linear_regime_is_exact_free_evolution() {
        let g = grid_1d();
        let params = ModelParams::new(1.0, 1, Coupling::scalar(0.0)).unwrap();
        let v = FieldVec::from_single(
            ComponentField::sample(&g, |x| Complex64::new((-x[0] * x[0] / 2.0).exp(), 0.0))
                .unwrap(),
        );
        let dt = 0.05;
        let stepped = strang_step(&v, &params, dt).unwrap();
        let exact = kinetic_step(&v, dt);
        for (a, b) in stepped
            .component(0)
            .values()
            .iter()
            .zip(exact.component(0).values())
        {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn strang_is_time_reversible() {
        let g = grid_1d();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        let v = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let dt = 2e-3;
        let mut w = v.clone();
        for _ in 0..50 {
            w = strang_step(&w, &params, dt).unwrap();
        }
        for _ in 0..50 {
            w = strang_step(&w, &params, -dt).unwrap();
        }
        let err = w.h1_distance(&v).unwrap();
        assert!(err < 1e-10, "reversal error {err:.3e}");
    }

    #[test]
    fn strang_soliton_phase_advance() {
        let g = grid_1d();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        let q = sech_soliton_1d(&g, 1.0).unwrap();
        let v = FieldVec::from_single(q.clone());
        let dt = 1e-3;
        let stepped = strang_step(&v, &params, dt).unwrap();
        // V(t) = e^{it} Q: one step advances the phase by dt up to O(dt^3)
        let expected = q.scaled(Complex64::from_polar(1.0, dt));
        let err = stepped.component(0).sub(&expected).unwrap().linf_norm();
        assert!(err < 5.0 * dt.powi(3), "one-step error {err:.3e}");
    }

    #[test]
    fn strang_gauge_covariance() {
        let g = grid_1d();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        let q = sech_soliton_1d(&g, 1.0).unwrap();
        let theta = 1.3;
        let dt = 1e-2;
        let a = strang_step(&FieldVec::from_single(q.clone()), &params, dt)
            .unwrap()
            .scaled(Complex64::from_polar(1.0, theta));
        let b = strang_step(
            &FieldVec::from_single(q.scaled(Complex64::from_polar(1.0, theta))),
            &params,
            dt,
        )
        .unwrap();
        let err = a.h1_distance(&b).unwrap();
        assert!(err < 1e-12, "gauge covariance error {err:.3e}");
    }

    #[test]
    fn strang_second_order_energy_drift() {
        let g = grid_1d();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        // non-stationary datum so the drift is measurable
        let q = sech_soliton_1d(&g, 1.0).unwrap();
        let v = FieldVec::from_single(q.scaled(Complex64::new(1.2, 0.0)));
        let drift = |dt: f64| -> f64 {
            let cfg = StepperConfig {
                dt,
                t_end: 1.0,
                record_stride: usize::MAX - 1,
                ..StepperConfig::default()
            };
            let out = evolve(&v, &params, &cfg, None).unwrap();
            out.trace.energy_drift()
        };
        let d1 = drift(2e-3);
        let d2 = drift(1e-3);
        let ratio = d1 / d2;
        assert!(
            (ratio - 4.0).abs() < 0.8,
            "order-2 ratio {ratio} (drifts {d1:.3e}, {d2:.3e})"
        );
    }

    #[test]
    fn evolve_zero_field_stays_zero() {
        let g = grid_1d();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        let v = FieldVec::zeros(&g, 1);
        let cfg = StepperConfig {
            t_end: 0.1,
            ..StepperConfig::default()
        };
        let out = evolve(&v, &params, &cfg, None).unwrap();
        assert!(!out.trace.blowup_detected());
        assert!(!out.trace.tail_violation());
        assert_eq!(out.final_state.total_mass(), 0.0);
    }

    #[test]
    fn evolve_soliton_conserves_invariants() {
        let g = grid_1d();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        let v = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let cfg = StepperConfig {
            dt: 1e-3,
            t_end: 2.0,
            record_stride: 100,
            ..StepperConfig::default()
        };
        let out = evolve(&v, &params, &cfg, None).unwrap();
        assert!(!out.trace.blowup_detected());
        assert!(out.trace.mass_drift() < 1e-12);
        assert!(out.trace.energy_drift() < 1e-7, "drift {:.3e}", out.trace.energy_drift());
    }

    #[test]
    fn evolve_flags_tail_violation_for_traveling_state() {
        let g = grid_1d();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        // phase ramp gives the soliton a group velocity toward the boundary
        let q = sech_soliton_1d(&g, 1.0).unwrap();
        let moving = ComponentField::sample(&g, |x| {
            Complex64::from_polar(1.0, 2.0 * x[0])
        })
        .unwrap();
        let vals = q
            .values()
            .iter()
            .zip(moving.values())
            .map(|(a, b)| a * b)
            .collect();
        let v = FieldVec::from_single(ComponentField::from_values(&g, vals).unwrap());
        let cfg = StepperConfig {
            dt: 1e-3,
            t_end: 10.0,
            record_stride: 100,
            ..StepperConfig::default()
        };
        let out = evolve(&v, &params, &cfg, None).unwrap();
        assert!(out.trace.tail_violation(), "soliton should reach the shell");
        let t_flag = out.trace.tail_violation_time.unwrap();
        // speed ~ 2k = 4: the shell starts at 17.5
        assert!(t_flag > 2.0 && t_flag < 6.0, "flag at t = {t_flag}");
        assert!(!out.trace.blowup_detected());
    }

    #[test]
    fn stepper_config_validation() {
        let bad_dt = StepperConfig {
            dt: StepperConfig::default().dt_min / 2.0,
            ..StepperConfig::default()
        };
        assert!(bad_dt.validate().is_err());
        let bad_t = StepperConfig {
            t_end: 0.0,
            ..StepperConfig::default()
        };
        assert!(bad_t.validate().is_err());
        let bad_stride = StepperConfig {
            record_stride: 0,
            ..StepperConfig::default()
        };
        assert!(bad_stride.validate().is_err());
    }

    #[test]
    fn evolve_rejects_fat_tailed_data() {
        let g = GridSpec::line(128, 10.0).unwrap();
        let params = ModelParams::scalar(1.0, 1).unwrap();
        let v = FieldVec::from_single(
            ComponentField::sample(&g, |_| Complex64::new(1.0, 0.0)).unwrap(),
        );
        let err = evolve(&v, &params, &StepperConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::TailMass { .. }));
    }
}
