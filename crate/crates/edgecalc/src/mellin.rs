//! Mellin transform, weight lines and the S map onto the cylinder.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{ModelGrid, ScalarField, DECAY_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightData {
    pub s: f64,
    pub gamma: f64,
}

impl WeightData {
    pub fn new(s: f64, gamma: f64) -> Result<Self> {
        if !(s.is_finite() && gamma.is_finite()) {
            return Err(Error::Invalid("weight data must be finite".into()));
        }
        Ok(Self { s, gamma })
    }

    /// Real part of the weight line, `(m+1)/2 - gamma`.
    pub fn beta(&self, m: usize) -> f64 {
        (m as f64 + 1.0) / 2.0 - self.gamma
    }

    pub fn shifted(&self, ds: f64, dgamma: f64) -> Self {
        Self {
            s: self.s + ds,
            gamma: self.gamma + dgamma,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightLine {
    pub beta: f64,
    pub samples: Vec<Complex64>,
}

impl WeightLine {
    /// Nodes `beta + i rho_l` dual to a radial window of half-width `t_half` with `n` samples,
    /// in FFT bin order.
    pub fn dual_to(beta: f64, t_half: f64, n: usize) -> Self {
        let samples = (0..n)
            .map(|l| Complex64::new(beta, PI * fft::signed_mode(l, n) as f64 / t_half))
            .collect();
        Self { beta, samples }
    }
}

/// Radial samples on the uniform window `t_j = -T + j dt`, `r = e^{-t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    pub t_half: f64,
    pub values: Vec<Complex64>,
}

impl RadialProfile {
    pub fn from_fn<F: Fn(f64) -> Complex64>(t_half: f64, n: usize, f: F) -> Self {
        let dt = 2.0 * t_half / n as f64;
        let values = (0..n).map(|j| f((t_half - j as f64 * dt).exp())).collect();
        Self { t_half, values }
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.t_half / self.values.len() as f64
    }

    pub fn t_node(&self, j: usize) -> f64 {
        -self.t_half + j as f64 * self.dt()
    }
}

/// `\int_0^\infty r^{z-1} f(r) dr` by the substitution `r = e^{-t}` and the trapezoid rule in t.
pub fn mellin_transform(profile: &RadialProfile, z: Complex64) -> Result<Complex64> {
    let n = profile.values.len();
    if n < 2 {
        return Err(Error::Invalid("profile needs at least two samples".into()));
    }
    let dt = profile.dt();
    let integrand: Vec<Complex64> = (0..n)
        .map(|j| (-z * profile.t_node(j)).exp() * profile.values[j])
        .collect();
    let max = integrand.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if max > 0.0 {
        let tail = integrand[0].norm().max(integrand[n - 1].norm()) / max;
        if tail > DECAY_THRESHOLD {
            return Err(Error::Truncation(tail));
        }
    }
    Ok(integrand.iter().sum::<Complex64>() * dt)
}

/// `(S f)(t, x) = e^{-beta t} f(e^{-t}, x)` with `beta = (m+1)/2 - gamma`.
pub fn s_gamma_map(f: &ScalarField, w: &WeightData) -> ScalarField {
    let beta = w.beta(f.grid.m);
    let weights: Vec<f64> = f.grid.t_nodes().iter().map(|t| (-beta * t).exp()).collect();
    f.mul_radial(&weights)
}

pub fn s_gamma_inverse(g: &ScalarField, w: &WeightData) -> ScalarField {
    let beta = w.beta(g.grid.m);
    let weights: Vec<f64> = g.grid.t_nodes().iter().map(|t| (beta * t).exp()).collect();
    g.mul_radial(&weights)
}

/// Joint transform: Mellin on the weight line in r, Fourier in every cross-section axis.
#[derive(Clone, Debug)]
pub struct WeightLineTransform {
    pub grid: ModelGrid,
    pub line: WeightLine,
    /// Same layout as the field: bin order in rho, then cross-section modes.
    pub data: Vec<Complex64>,
    pub tail_ratio: f64,
}

impl WeightLineTransform {
    /// `rho` value of radial bin `l`.
    pub fn rho(&self, l: usize) -> f64 {
        self.line.samples[l].im
    }
}

pub(crate) fn weight_line_unchecked(f: &ScalarField, w: &WeightData) -> (Vec<Complex64>, f64) {
    let g = &f.grid;
    let sf = s_gamma_map(f, w);
    let tail = sf.end_ratio();
    let mut data = sf.values;
    let shape = g.shape();
    fft::forward_all(&mut data, &shape);
    let n = g.n_t;
    let sl = g.slice_len();
    let scale = g.dt() * g.cell_volume();
    for l in 0..n {
        let rho = PI * fft::signed_mode(l, n) as f64 / g.t_half;
        let ph = Complex64::from_polar(scale, rho * g.t_half);
        for v in &mut data[l * sl..(l + 1) * sl] {
            *v *= ph;
        }
    }
    (data, tail)
}

/// Samples of `M F f` on `Re z = (m+1)/2 - gamma` times the dual cross-section modes.
pub fn weight_line_transform(f: &ScalarField, w: &WeightData) -> Result<WeightLineTransform> {
    let (data, tail) = weight_line_unchecked(f, w);
    if tail > DECAY_THRESHOLD {
        return Err(Error::Truncation(tail));
    }
    Ok(WeightLineTransform {
        grid: f.grid.clone(),
        line: WeightLine::dual_to(w.beta(f.grid.m), f.grid.t_half, f.grid.n_t),
        data,
        tail_ratio: tail,
    })
}
