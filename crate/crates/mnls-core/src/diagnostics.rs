//! Derived observables: variance, the Virial residual, and orbital distance
//! modulo gauge rotations and translations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{ComponentField, FieldVec};
use crate::grid::MAX_DIM;

/// `sum_i ∫ |x|^2 |v_i|^2` with centered coordinates. Meaningful only while
/// the boundary tail mass is negligible.
pub fn variance(v: &FieldVec) -> f64 {
    let grid = v.grid();
    let dim = grid.dim();
    let w = grid.cell_volume();
    let mut idx = [0usize; MAX_DIM];
    let mut acc = 0.0;
    for c in v.components() {
        for (flat, val) in c.values().iter().enumerate() {
            let m = val.norm_sqr();
            if m == 0.0 {
                continue;
            }
            grid.unravel(flat, &mut idx[..dim]);
            let r2: f64 = (0..dim)
                .map(|d| {
                    let x = grid.coordinate(d, idx[d]);
                    x * x
                })
                .sum();
            acc += r2 * m;
        }
    }
    acc * w
}

/// Worst relative defect of the Virial identity along a uniformly recorded
/// trace: `max_t |d2 variance/dt2 - 8 H| / (1 + |8 H|)`, the second
/// derivative by centered differences on the recording stride.
pub fn virial_residual(times: &[f64], variance: &[f64], pohozaev: &[f64]) -> Result<f64> {
    if times.len() < 3 || variance.len() != times.len() || pohozaev.len() != times.len() {
        return Err(Error::NonUniformStride);
    }
    let dt = times[1] - times[0];
    if dt <= 0.0 {
        return Err(Error::NonUniformStride);
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
            return Err(Error::NonUniformStride);
        }
    }
    let mut worst = 0.0f64;
    for i in 1..times.len() - 1 {
        let second = (variance[i + 1] - 2.0 * variance[i] + variance[i - 1]) / (dt * dt);
        let rhs = 8.0 * pohozaev[i];
        worst = worst.max((second - rhs).abs() / (1.0 + rhs.abs()));
    }
    Ok(worst)
}

/// Optimal gauge/translation alignment of a state against a reference orbit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitalAlignment {
    /// Common translation applied to the reference.
    pub translation: Vec<f64>,
    /// Per-component phases applied to the reference.
    pub phases: Vec<f64>,
    /// H1 norm of the aligned difference.
    pub distance: f64,
}

/// H1 correlation data of `v` against reference components: tables over all
/// grid shifts plus weighted spectra for off-grid evaluation. Entry `i` at
/// displacement `y` equals `<q_i(.+y), v_i>_{H1}`.
struct Correlations {
    tables: Vec<Vec<Complex64>>,
    weighted: Vec<Vec<Complex64>>,
}

fn correlations(v: &FieldVec, refs: &[&ComponentField]) -> Result<Correlations> {
    if refs.len() != v.len() {
        return Err(Error::GridMismatch);
    }
    let grid = v.grid();
    for q in refs {
        if q.grid().as_ref() != grid.as_ref() {
            return Err(Error::GridMismatch);
        }
    }
    let w = grid.cell_volume() / grid.total_points() as f64;
    let mut tables = Vec::with_capacity(v.len());
    let mut weighted = Vec::with_capacity(v.len());
    for (vc, qc) in v.components().iter().zip(refs) {
        let mut sv = vc.values().to_vec();
        let mut sq = qc.values().to_vec();
        fft::forward(&mut sv, grid.points());
        fft::forward(&mut sq, grid.points());
        let g: Vec<Complex64> = sv
            .iter()
            .zip(&sq)
            .enumerate()
            .map(|(flat, (a, b))| (1.0 + grid.ksq(flat)) * b.conj() * a * w)
            .collect();
        let mut table = g.clone();
        fft::forward(&mut table, grid.points());
        tables.push(table);
        weighted.push(g);
    }
    Ok(Correlations { tables, weighted })
}

/// How the per-component correlation magnitudes combine into the alignment
/// objective: plain sum for a fixed reference vector, root-sum-of-squares
/// when an amplitude circle is folded in analytically.
#[derive(Clone, Copy)]
enum Combine {
    Sum,
    Rss,
}

fn combine_value(mags: &[f64], mode: Combine) -> f64 {
    match mode {
        Combine::Sum => mags.iter().sum(),
        Combine::Rss => mags.iter().map(|c| c * c).sum::<f64>().sqrt(),
    }
}

impl Correlations {
    fn at(&self, grid: &crate::grid::GridSpec, i: usize, y: &[f64]) -> Complex64 {
        let dim = grid.dim();
        let mut idx = [0usize; MAX_DIM];
        let mut acc = Complex64::default();
        for (flat, g) in self.weighted[i].iter().enumerate() {
            if g.re == 0.0 && g.im == 0.0 {
                continue;
            }
            grid.unravel(flat, &mut idx[..dim]);
            let mut phase = 0.0;
            for d in 0..dim {
                phase -= grid.wavenumber(d, idx[d]) * y[d];
            }
            acc += g * Complex64::from_polar(1.0, phase);
        }
        acc
    }

    /// `(C_i, dC_i/dy_axis, d2C_i/dy_axis^2)` at displacement `y`.
    fn at_with_derivatives(
        &self,
        grid: &crate::grid::GridSpec,
        i: usize,
        y: &[f64],
        axis: usize,
    ) -> (Complex64, Complex64, Complex64) {
        let dim = grid.dim();
        let mut idx = [0usize; MAX_DIM];
        let (mut c, mut dc, mut ddc) = (
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
        );
        for (flat, g) in self.weighted[i].iter().enumerate() {
            if g.re == 0.0 && g.im == 0.0 {
                continue;
            }
            grid.unravel(flat, &mut idx[..dim]);
            let mut phase = 0.0;
            for d in 0..dim {
                phase -= grid.wavenumber(d, idx[d]) * y[d];
            }
            let term = g * Complex64::from_polar(1.0, phase);
            let k = grid.wavenumber(axis, idx[axis]);
            c += term;
            dc += term * Complex64::new(0.0, -k);
            ddc -= term * k * k;
        }
        (c, dc, ddc)
    }

    /// Objective and its first two derivatives along one axis.
    fn objective_derivatives(
        &self,
        grid: &crate::grid::GridSpec,
        y: &[f64],
        axis: usize,
        mode: Combine,
    ) -> (f64, f64, f64) {
        let m = self.weighted.len();
        match mode {
            Combine::Sum => {
                let (mut f, mut f1, mut f2) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (c, dc, ddc) = self.at_with_derivatives(grid, i, y, axis);
                    let mag = c.norm();
                    if mag == 0.0 {
                        continue;
                    }
                    let re_cd = (c.conj() * dc).re;
                    f += mag;
                    f1 += re_cd / mag;
                    f2 += (dc.norm_sqr() + (c.conj() * ddc).re) / mag
                        - re_cd * re_cd / (mag * mag * mag);
                }
                (f, f1, f2)
            }
            Combine::Rss => {
                let (mut s, mut s1, mut s2) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (c, dc, ddc) = self.at_with_derivatives(grid, i, y, axis);
                    s += c.norm_sqr();
                    s1 += 2.0 * (c.conj() * dc).re;
                    s2 += 2.0 * (dc.norm_sqr() + (c.conj() * ddc).re);
                }
                if s == 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let f = s.sqrt();
                let f1 = 0.5 * s1 / f;
                let f2 = 0.5 * s2 / f - 0.25 * s1 * s1 / (s * f);
                (f, f1, f2)
            }
        }
    }
}

/// Maximize the alignment objective over the common translation: grid
/// argmax, coarse golden refinement, then Newton on the analytic derivative
/// per axis (the objective is flat at its maximum, so derivative iterations
/// are what localize it to machine precision).
fn optimize_translation(
    grid: &crate::grid::GridSpec,
    corr: &Correlations,
    mode: Combine,
) -> Vec<f64> {
    let dim = grid.dim();
    let m = corr.tables.len();
    let npts = grid.total_points();
    let mut mags = vec![0.0f64; m];
    let mut best_flat = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for flat in 0..npts {
        for (i, t) in corr.tables.iter().enumerate() {
            mags[i] = t[flat].norm();
        }
        let val = combine_value(&mags, mode);
        if val > best_val {
            best_val = val;
            best_flat = flat;
        }
    }
    let mut idx = [0usize; MAX_DIM];
    grid.unravel(best_flat, &mut idx[..dim]);
    let mut y = vec![0.0f64; dim];
    for d in 0..dim {
        let n = grid.points()[d];
        let s = if idx[d] < n / 2 {
            idx[d] as f64
        } else {
            idx[d] as f64 - n as f64
        };
        y[d] = s * grid.spacing(d);
    }

    let eval = |y: &[f64], mags: &mut [f64]| -> f64 {
        for i in 0..m {
            mags[i] = corr.at(grid, i, y).norm();
        }
        combine_value(mags, mode)
    };
    let gr = 0.5 * (5.0f64.sqrt() - 1.0);
    for _sweep in 0..2 {
        for d in 0..dim {
            let h = grid.spacing(d);
            let (mut a, mut b) = (y[d] - h, y[d] + h);
            let mut c = b - gr * (b - a);
            let mut e = a + gr * (b - a);
            let mut yy = y.clone();
            yy[d] = c;
            let mut fc = eval(&yy, &mut mags);
            yy[d] = e;
            let mut fe = eval(&yy, &mut mags);
            for _ in 0..25 {
                if fc > fe {
                    b = e;
                    e = c;
                    fe = fc;
                    c = b - gr * (b - a);
                    yy[d] = c;
                    fc = eval(&yy, &mut mags);
                } else {
                    a = c;
                    c = e;
                    fc = fe;
                    e = a + gr * (b - a);
                    yy[d] = e;
                    fe = eval(&yy, &mut mags);
                }
            }
            y[d] = 0.5 * (a + b);
            // Newton on the derivative
            for _ in 0..6 {
                let (_, f1, f2) = corr.objective_derivatives(grid, &y, d, mode);
                if f2 >= 0.0 {
                    break;
                }
                let step = (f1 / f2).clamp(-0.5 * h, 0.5 * h);
                y[d] -= step;
                if step.abs() < 1e-15 * h.max(1.0) {
                    break;
                }
            }
        }
    }
    y
}

/// The aligned reference `amp_i e^{i theta_i} q_i(. + y)`, built by exact
/// band-limited shifting. Evaluating the distance on the difference field
/// avoids the cancellation the correlation formula suffers near zero.
fn aligned_distance(
    v: &FieldVec,
    refs: &[&ComponentField],
    amps: &[f64],
    phases: &[f64],
    y: &[f64],
) -> Result<f64> {
    let comps: Vec<ComponentField> = refs
        .iter()
        .zip(amps.iter().zip(phases))
        .map(|(q, (a, th))| q.fourier_shift(y).scaled(Complex64::from_polar(*a, *th)))
        .collect();
    let aligned = FieldVec::new(comps)?;
    Ok(v.sub(&aligned)?.h1_norm_sq().sqrt())
}

/// Minimize `|| V - e^{i theta_i} Q(. + y) ||_{H1}` over per-component phases
/// and a common translation. Phases have a closed-form optimum given y; the
/// translation comes from the grid argmax of the H1 cross-correlation with
/// golden-section sub-grid refinement.
pub fn orbital_distance(v: &FieldVec, q_ref: &FieldVec) -> Result<OrbitalAlignment> {
    if q_ref.total_mass() <= 0.0 {
        return Err(Error::Undefined {
            what: "orbital distance",
            why: "reference state is zero".into(),
        });
    }
    if v.len() != q_ref.len() {
        return Err(Error::GridMismatch);
    }
    let grid = v.grid().clone();
    let refs: Vec<&ComponentField> = q_ref.components().iter().collect();
    let corr = correlations(v, &refs)?;
    let y = optimize_translation(&grid, &corr, Combine::Sum);
    let phases: Vec<f64> = (0..v.len()).map(|i| corr.at(&grid, i, &y).arg()).collect();
    let amps = vec![1.0; v.len()];
    let distance = aligned_distance(v, &refs, &amps, &phases, &y)?;
    Ok(OrbitalAlignment {
        translation: y,
        phases,
        distance,
    })
}

/// A set of reference states to measure distance against.
#[derive(Debug, Clone)]
pub enum ReferenceFamily {
    /// The orbit of a single state under phases and translations.
    Orbit(FieldVec),
    /// Two-component amplitude circle `(cos a, sin a) * profile` — the
    /// degenerate ground-state continuum. The infimum over the mixing angle
    /// is taken in closed form: for fixed translation the best angle gives
    /// `sqrt(|C_1|^2 + |C_2|^2)` where `C_i` are the per-component
    /// correlations against the bare profile.
    MixtureCircle { profile: ComponentField },
}

impl ReferenceFamily {
    pub fn mixture_circle(profile: ComponentField) -> Self {
        ReferenceFamily::MixtureCircle { profile }
    }
}

/// Distance from `v` to the family, exact over the family's symmetries
/// (phases, common translation, and mixing angle where applicable).
pub fn distance_to_family(v: &FieldVec, family: &ReferenceFamily) -> Result<f64> {
    match family {
        ReferenceFamily::Orbit(q) => Ok(orbital_distance(v, q)?.distance),
        ReferenceFamily::MixtureCircle { profile } => {
            if v.len() != 2 {
                return Err(Error::Undefined {
                    what: "mixture-circle distance",
                    why: format!("needs a two-component state, got {}", v.len()),
                });
            }
            if profile.l2_norm_sq() <= 0.0 {
                return Err(Error::Undefined {
                    what: "mixture-circle distance",
                    why: "reference profile is zero".into(),
                });
            }
            let grid = v.grid().clone();
            let refs = vec![profile, profile];
            let corr = correlations(v, &refs)?;
            let y = optimize_translation(&grid, &corr, Combine::Rss);
            let c1 = corr.at(&grid, 0, &y);
            let c2 = corr.at(&grid, 1, &y);
            let alpha = c2.norm().atan2(c1.norm());
            let amps = [alpha.cos(), alpha.sin()];
            let phases = [c1.arg(), c2.arg()];
            aligned_distance(v, &refs, &amps, &phases, &y)
        }
    }
}

/// Best mixing angle of a two-component state against the circle family,
/// from the same closed form as the distance.
pub fn mixture_angle(v: &FieldVec, profile: &ComponentField) -> Result<f64> {
    if v.len() != 2 {
        return Err(Error::Undefined {
            what: "mixture angle",
            why: "needs a two-component state".into(),
        });
    }
    let grid = v.grid().clone();
    let refs = vec![profile, profile];
    let corr = correlations(v, &refs)?;
    let y = optimize_translation(&grid, &corr, Combine::Rss);
    let c1 = corr.at(&grid, 0, &y).norm();
    let c2 = corr.at(&grid, 1, &y).norm();
    Ok(c2.atan2(c1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::sech_soliton_1d;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid_1d() -> Arc<GridSpec> {
        GridSpec::line(1024, 40.0).unwrap()
    }

    #[test]
    fn variance_zero_field() {
        let g = grid_1d();
        assert_eq!(variance(&FieldVec::zeros(&g, 2)), 0.0);
    }

    /// ∫ x^2 (2 sech^2) = pi^2/3 for the cubic soliton.
    #[test]
    fn variance_soliton_closed_form() {
        let g = grid_1d();
        let v = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let got = variance(&v);
        let expected = PI * PI / 3.0;
        assert!((got - expected).abs() < 1e-8, "variance {got} vs {expected}");
    }

    /// Change of variables under a shift, cross-checked by direct quadrature.
    #[test]
    fn variance_shift_identity() {
        let g = grid_1d();
        let q = sech_soliton_1d(&g, 1.0).unwrap();
        let y = 3.0;
        let shifted = FieldVec::from_single(q.fourier_shift(&[y]));
        let got = variance(&shifted);
        let w = g.cell_volume();
        let mut expected = 0.0;
        for (flat, val) in q.values().iter().enumerate() {
            let u = g.coordinate(0, flat);
            expected += (u - y) * (u - y) * val.norm_sqr();
        }
        expected *= w;
        assert!((got - expected).abs() < 1e-8 * expected, "{got} vs {expected}");
    }

    #[test]
    fn variance_gauge_invariant() {
        let g = grid_1d();
        let q = sech_soliton_1d(&g, 1.0).unwrap();
        let a = variance(&FieldVec::from_single(q.clone()));
        let b = variance(&FieldVec::from_single(
            q.scaled(Complex64::from_polar(1.0, 2.1)),
        ));
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn virial_residual_needs_uniform_stride() {
        let times = vec![0.0, 0.1, 0.25];
        let v = vec![1.0, 1.0, 1.0];
        let h = vec![0.0, 0.0, 0.0];
        assert!(matches!(
            virial_residual(&times, &v, &h),
            Err(Error::NonUniformStride)
        ));
    }

    #[test]
    fn virial_residual_quadratic_variance() {
        // v(t) = 1 + 4 c t^2 matches 8H with H = c exactly
        let c = 0.7;
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let var: Vec<f64> = times.iter().map(|t| 1.0 + 4.0 * c * t * t).collect();
        let poh = vec![c; times.len()];
        let r = virial_residual(&times, &var, &poh).unwrap();
        assert!(r < 1e-10, "residual {r:.3e}");
    }

    #[test]
    fn orbital_distance_recovers_exact_orbit_element() {
        let g = grid_1d();
        let q = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let y = 3.2 * g.spacing(0);
        let theta = 0.7;
        let v = q
            .fourier_shift(&[y])
            .scaled(Complex64::from_polar(1.0, theta));
        let align = orbital_distance(&v, &q).unwrap();
        assert!(align.distance < 1e-10, "distance {:.3e}", align.distance);
        assert!(
            (align.translation[0] - y).abs() < 1e-6,
            "y {:.3e} vs {y:.3e}",
            align.translation[0]
        );
        assert!((align.phases[0] - theta).abs() < 1e-6);
    }

    #[test]
    fn orbital_distance_perturbation_scale() {
        let g = grid_1d();
        let q = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = ComponentField::sample(&g, |x| {
            let envelope = (-x[0] * x[0] / 16.0).exp();
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * envelope
        })
        .unwrap();
        let eps = 0.01;
        let noise_h1 = noise.h1_norm_sq().sqrt();
        let v = FieldVec::from_single(
            q.component(0)
                .add(&noise.scaled(Complex64::new(eps, 0.0)))
                .unwrap(),
        );
        let d = orbital_distance(&v, &q).unwrap().distance;
        let scale = eps * noise_h1;
        assert!(
            d < 2.0 * scale && d > scale / 2.0,
            "d = {d:.3e}, scale {scale:.3e}"
        );
    }

    #[test]
    fn orbital_distance_detects_dilation() {
        let g = grid_1d();
        let q = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let w = crate::resample::dilate_mass_preserving(&q, 1.5).unwrap();
        let d = orbital_distance(&w, &q).unwrap().distance;
        assert!(d > 0.1 * q.h1_norm_sq().sqrt(), "distance {d:.3e}");
    }

    #[test]
    fn orbital_distance_invariant_under_symmetries_of_v() {
        let g = grid_1d();
        let q = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let v = FieldVec::from_single(
            q.component(0)
                .add(
                    &ComponentField::sample(&g, |x| {
                        Complex64::new(0.05 * (-x[0] * x[0] / 4.0).exp() * (x[0]).sin(), 0.0)
                    })
                    .unwrap(),
                )
                .unwrap(),
        );
        let d0 = orbital_distance(&v, &q).unwrap().distance;
        let moved = v
            .fourier_shift(&[1.7])
            .scaled(Complex64::from_polar(1.0, -0.9));
        let d1 = orbital_distance(&moved, &q).unwrap().distance;
        assert!((d0 - d1).abs() < 1e-8 * (1.0 + d0), "{d0} vs {d1}");
    }

    #[test]
    fn orbital_distance_bounded_by_plain_h1_distance() {
        let g = grid_1d();
        let q = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let v = q.fourier_shift(&[0.9]).scaled(Complex64::new(1.1, 0.2));
        let plain = v.h1_distance(&q).unwrap();
        let orbital = orbital_distance(&v, &q).unwrap().distance;
        assert!(orbital <= plain + 1e-12);
    }

    #[test]
    fn orbital_distance_rejects_zero_reference() {
        let g = grid_1d();
        let v = FieldVec::from_single(sech_soliton_1d(&g, 1.0).unwrap());
        let z = FieldVec::zeros(&g, 1);
        assert!(orbital_distance(&v, &z).is_err());
    }

    #[test]
    fn mixture_circle_distance_vanishes_on_family() {
        let g = grid_1d();
        let q = sech_soliton_1d(&g, 1.0).unwrap();
        let fam = ReferenceFamily::mixture_circle(q.clone());
        let alpha = 0.9f64;
        let member = FieldVec::new(vec![
            q.scaled(Complex64::new(alpha.cos(), 0.0)),
            q.scaled(Complex64::from_polar(alpha.sin(), 1.2)),
        ])
        .unwrap()
        .fourier_shift(&[0.8]);
        let d = distance_to_family(&member, &fam).unwrap();
        assert!(d < 1e-8, "distance {d:.3e}");
        let got_alpha = mixture_angle(&member, &q).unwrap();
        assert!((got_alpha - alpha).abs() < 1e-6, "alpha {got_alpha} vs {alpha}");
    }

    #[test]
    fn mixture_circle_distance_to_perturbed_member() {
        let g = grid_1d();
        let q = sech_soliton_1d(&g, 1.0).unwrap();
        let fam = ReferenceFamily::mixture_circle(q.clone());
        let alpha = 0.3f64;
        let bump = ComponentField::sample(&g, |x| {
            Complex64::new(0.01 * (-x[0] * x[0] / 9.0).exp(), 0.0)
        })
        .unwrap();
        let member = FieldVec::new(vec![
            q.scaled(Complex64::new(alpha.cos(), 0.0)).add(&bump).unwrap(),
            q.scaled(Complex64::new(alpha.sin(), 0.0)),
        ])
        .unwrap();
        let d = distance_to_family(&member, &fam).unwrap();
        let bump_norm = bump.h1_norm_sq().sqrt();
        assert!(d <= bump_norm * 1.01, "d {d:.3e} vs bump {bump_norm:.3e}");
    }
}
