//! Multi-axis FFT helpers over row-major arrays.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

type Plans = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, Plans)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, plans) = &mut *guard;
    plans
        .entry((n, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Unnormalized transform along one axis.
pub fn fft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) {
    let n = shape[axis];
    if n <= 1 {
        return;
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    debug_assert_eq!(outer * n * inner, data.len());
    let fft = plan(n, inverse);
    if inner == 1 {
        data.par_chunks_mut(n).for_each(|line| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(line, &mut scratch);
        });
        return;
    }
    let lines = outer * inner;
    let src: &[Complex64] = data;
    let transformed: Vec<Complex64> = (0..lines)
        .into_par_iter()
        .flat_map_iter(|li| {
            let o = li / inner;
            let i = li % inner;
            let base = o * n * inner + i;
            let mut line: Vec<Complex64> = (0..n).map(|k| src[base + k * inner]).collect();
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(&mut line, &mut scratch);
            line.into_iter()
        })
        .collect();
    for li in 0..lines {
        let o = li / inner;
        let i = li % inner;
        let base = o * n * inner + i;
        let line = &transformed[li * n..(li + 1) * n];
        for (k, v) in line.iter().enumerate() {
            data[base + k * inner] = *v;
        }
    }
}

/// Forward transform over the listed axes.
pub fn forward(data: &mut [Complex64], shape: &[usize], axes: &[usize]) {
    for &a in axes {
        fft_axis(data, shape, a, false);
    }
}

/// Normalized inverse transform over the listed axes.
pub fn inverse(data: &mut [Complex64], shape: &[usize], axes: &[usize]) {
    let mut count = 1usize;
    for &a in axes {
        fft_axis(data, shape, a, true);
        count *= shape[a];
    }
    let scale = 1.0 / count as f64;
    data.par_iter_mut().for_each(|v| *v *= scale);
}

pub fn forward_all(data: &mut [Complex64], shape: &[usize]) {
    let axes: Vec<usize> = (0..shape.len()).collect();
    forward(data, shape, &axes);
}

pub fn inverse_all(data: &mut [Complex64], shape: &[usize]) {
    let axes: Vec<usize> = (0..shape.len()).collect();
    inverse(data, shape, &axes);
}

/// Signed integer mode of FFT bin `k` for length `n`; the Nyquist bin maps to `-n/2`.
#[inline]
pub fn signed_mode(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Mode used in derivative multipliers: the Nyquist bin is dropped.
#[inline]
pub fn derivative_mode(k: usize, n: usize) -> f64 {
    if n % 2 == 0 && k == n / 2 {
        0.0
    } else {
        signed_mode(k, n) as f64
    }
}

/// Decompose a flat index into per-axis indices.
#[inline]
pub fn unravel(mut idx: usize, shape: &[usize], out: &mut [usize]) {
    for a in (0..shape.len()).rev() {
        out[a] = idx % shape[a];
        idx /= shape[a];
    }
}

/// Copy a spectrum into a larger (or smaller) grid, keeping the centred modes.
/// The Nyquist bin is dropped in both directions.
pub fn resize_spectrum(src: &[Complex64], shape: &[usize], new_shape: &[usize]) -> Vec<Complex64> {
    let total: usize = new_shape.iter().product();
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    let d = shape.len();
    let mut idx = vec![0usize; d];
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * new_shape[a + 1];
    }
    'outer: for (flat, v) in src.iter().enumerate() {
        unravel(flat, shape, &mut idx);
        let mut target = 0usize;
        for a in 0..d {
            let n = shape[a];
            let nn = new_shape[a];
            if n % 2 == 0 && idx[a] == n / 2 && n > 1 {
                continue 'outer;
            }
            let k = signed_mode(idx[a], n);
            let lim = (nn as i64 - 1) / 2;
            if k.abs() > lim {
                continue 'outer;
            }
            let kk = if k < 0 {
                (k + nn as i64) as usize
            } else {
                k as usize
            };
            target += kk * strides[a];
        }
        out[target] = *v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_multi_axis() {
        let shape = [8usize, 4, 16];
        let n: usize = shape.iter().product();
        let orig: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut data = orig.clone();
        forward_all(&mut data, &shape);
        inverse_all(&mut data, &shape);
        let err = data
            .iter()
            .zip(&orig)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn axis_transform_matches_naive_dft() {
        let shape = [4usize, 8];
        let n: usize = shape.iter().product();
        let orig: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64, -(i as f64) * 0.5))
            .collect();
        let mut data = orig.clone();
        fft_axis(&mut data, &shape, 0, false);
        for j in 0..8 {
            for k in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..4 {
                    let ang = -2.0 * std::f64::consts::PI * (k * l) as f64 / 4.0;
                    acc += orig[l * 8 + j] * Complex64::from_polar(1.0, ang);
                }
                assert!((acc - data[k * 8 + j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn modes() {
        assert_eq!(signed_mode(0, 8), 0);
        assert_eq!(signed_mode(3, 8), 3);
        assert_eq!(signed_mode(4, 8), -4);
        assert_eq!(signed_mode(7, 8), -1);
        assert_eq!(derivative_mode(4, 8), 0.0);
    }
}
