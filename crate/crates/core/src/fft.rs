//! Internal n-dimensional FFT built from 1-d transforms along each axis.
//!
//! Plans are cached globally so repeated transforms of the same length are
//! cheap. The forward transform is normalized by `1/n^d`, so a field
//! `v_j = sum_m c_m exp(i k_m . x_j)` has coefficients exactly `c_m`.

use once_cell::sync::Lazy;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::grid::GridSpec;

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

static PLANS: Lazy<Mutex<PlanCache>> = Lazy::new(|| {
    Mutex::new(PlanCache {
        planner: FftPlanner::new(),
        forward: HashMap::new(),
        inverse: HashMap::new(),
    })
});

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = PLANS.lock().unwrap();
    let PlanCache {
        planner,
        forward: fwd,
        inverse: inv,
    } = &mut *cache;
    if forward {
        fwd.entry(n)
            .or_insert_with(|| planner.plan_fft_forward(n))
            .clone()
    } else {
        inv.entry(n)
            .or_insert_with(|| planner.plan_fft_inverse(n))
            .clone()
    }
}

/// Unnormalized 1-d transforms along every axis of a row-major `d`-cube.
fn transform_all_axes(data: &mut [Complex64], d: usize, n: usize, forward: bool) {
    let total = data.len();
    debug_assert_eq!(total, n.pow(d as u32));
    let fft = plan(n, forward);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];
    for axis in 0..d {
        // row-major: axis d-1 is fastest
        let stride = n.pow((d - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
        } else {
            let block = n * stride;
            for outer in 0..total / block {
                for inner in 0..stride {
                    let base = outer * block + inner;
                    for j in 0..n {
                        line[j] = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for j in 0..n {
                        data[base + j * stride] = line[j];
                    }
                }
            }
        }
    }
}

/// Forward DFT, normalized by `1/n^d`.
pub fn forward(data: &mut [Complex64], grid: &GridSpec) {
    transform_all_axes(data, grid.d, grid.n, true);
    let scale = 1.0 / grid.total_points() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Inverse of [`forward`] (unnormalized inverse DFT).
pub fn inverse(data: &mut [Complex64], grid: &GridSpec) {
    transform_all_axes(data, grid.d, grid.n, false);
}

/// Forward transform on an anonymous cube (used for dealiased products on
/// padded grids, where no `GridSpec` exists).
pub fn forward_cube(data: &mut [Complex64], d: usize, n: usize) {
    transform_all_axes(data, d, n, true);
    let scale = 1.0 / (n.pow(d as u32)) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Inverse transform on an anonymous cube.
pub fn inverse_cube(data: &mut [Complex64], d: usize, n: usize) {
    transform_all_axes(data, d, n, false);
}
