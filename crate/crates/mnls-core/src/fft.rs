//! Multi-dimensional FFT on flat row-major buffers.
//!
//! Forward transforms are unnormalized; the inverse divides by the total
//! point count, so `inverse(forward(x)) == x` up to roundoff. Plans are
//! cached per axis length; scratch buffers are per invocation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

type Plan = Arc<dyn Fft<f64>>;
type PlanCache = Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>;

fn plan(n: usize, direction: FftDirection) -> Plan {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap();
    let key = (n, matches!(direction, FftDirection::Forward));
    if let Some(p) = guard.1.get(&key) {
        return Arc::clone(p);
    }
    let p = match direction {
        FftDirection::Forward => guard.0.plan_fft_forward(n),
        FftDirection::Inverse => guard.0.plan_fft_inverse(n),
    };
    guard.1.insert(key, Arc::clone(&p));
    p
}

/// Apply a 1D transform along `axis` of a row-major array with `shape`.
fn transform_axis(values: &mut [Complex64], shape: &[usize], axis: usize, direction: FftDirection) {
    let n = shape[axis];
    let fft = plan(n, direction);
    // stride between consecutive entries along `axis`
    let stride: usize = shape[axis + 1..].iter().product();
    let lines = values.len() / n;
    let mut line = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for l in 0..lines {
        // `l` enumerates the outer x inner index pairs around `axis`
        let inner = l % stride;
        let outer = l / stride;
        let base = outer * n * stride + inner;
        if stride == 1 {
            let seg = &mut values[base..base + n];
            fft.process_with_scratch(seg, &mut scratch);
        } else {
            for (j, v) in line.iter_mut().enumerate() {
                *v = values[base + j * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, v) in line.iter().enumerate() {
                values[base + j * stride] = *v;
            }
        }
    }
}

/// In-place unnormalized forward FFT over every axis.
pub fn forward(values: &mut [Complex64], shape: &[usize]) {
    debug_assert_eq!(values.len(), shape.iter().product::<usize>());
    for axis in 0..shape.len() {
        transform_axis(values, shape, axis, FftDirection::Forward);
    }
}

/// In-place inverse FFT over every axis, normalized by the point count.
pub fn inverse(values: &mut [Complex64], shape: &[usize]) {
    for axis in 0..shape.len() {
        transform_axis(values, shape, axis, FftDirection::Inverse);
    }
    let scale = 1.0 / values.len() as f64;
    for v in values.iter_mut() {
        *v *= scale;
    }
}
