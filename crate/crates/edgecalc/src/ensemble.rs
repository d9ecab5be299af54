//! Seeded random band-limited test fields described by continuous parameters,
//! so the same field can be sampled on several resolutions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{ModelGrid, ScalarField};

/// One Gaussian wave packet `a exp(-(t-t0)^2/(2w^2)) e^{i nu (t-t0)} e^{i k.sigma} e^{i l.u}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpTerm {
    pub amp: [f64; 2],
    pub t0: f64,
    pub width: f64,
    pub nu: f64,
    pub k_sigma: Vec<i64>,
    pub k_u: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub terms: Vec<BumpTerm>,
    /// Take the real part after summing.
    pub real: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub t_range: (f64, f64),
    pub width: (f64, f64),
    pub max_sigma_mode: i64,
    pub max_u_mode: i64,
    pub max_nu: f64,
    pub terms: usize,
    pub real: bool,
}

impl EnsembleSpec {
    /// Packets centred in `t_range` with moderate width and low cross-section modes.
    pub fn deep(t_range: (f64, f64)) -> Self {
        Self {
            t_range,
            width: (0.35, 0.5),
            max_sigma_mode: 3,
            max_u_mode: 2,
            max_nu: 2.0,
            terms: 3,
            real: false,
        }
    }
}

impl BumpTerm {
    fn eval(&self, t: f64, sigma: &[f64], u: &[f64]) -> Complex64 {
        let x = (t - self.t0) / self.width;
        let mut phase = self.nu * (t - self.t0);
        for (k, s) in self.k_sigma.iter().zip(sigma) {
            phase += *k as f64 * s;
        }
        for (l, v) in self.k_u.iter().zip(u) {
            phase += *l as f64 * v;
        }
        Complex64::new(self.amp[0], self.amp[1])
            * Complex64::from_polar((-0.5 * x * x).exp(), phase)
    }
}

impl FieldSpec {
    pub fn random<R: Rng>(rng: &mut R, spec: &EnsembleSpec, m: usize, q: usize) -> Self {
        let terms = (0..spec.terms.max(1))
            .map(|_| BumpTerm {
                amp: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                t0: rng.random_range(spec.t_range.0..=spec.t_range.1),
                width: rng.random_range(spec.width.0..=spec.width.1),
                nu: rng.random_range(-spec.max_nu..=spec.max_nu),
                k_sigma: (0..m)
                    .map(|_| rng.random_range(-spec.max_sigma_mode..=spec.max_sigma_mode))
                    .collect(),
                k_u: (0..q)
                    .map(|_| rng.random_range(-spec.max_u_mode..=spec.max_u_mode))
                    .collect(),
            })
            .collect();
        Self {
            terms,
            real: spec.real,
        }
    }

    pub fn eval(&self, t: f64, sigma: &[f64], u: &[f64]) -> Complex64 {
        let v: Complex64 = self.terms.iter().map(|b| b.eval(t, sigma, u)).sum();
        if self.real {
            Complex64::new(v.re, 0.0)
        } else {
            v
        }
    }

    pub fn sample(&self, grid: &ModelGrid) -> ScalarField {
        ScalarField::from_fn(grid, |t, s, u| self.eval(t, s, u))
    }

    /// The same packets moved by `dt` in t.
    pub fn translated(&self, dt: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.terms {
            b.t0 += dt;
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.terms {
            b.amp = [b.amp[0] * c, b.amp[1] * c];
        }
        out
    }
}

pub fn random_specs(
    seed: u64,
    count: usize,
    spec: &EnsembleSpec,
    m: usize,
    q: usize,
) -> Vec<FieldSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| FieldSpec::random(&mut rng, spec, m, q))
        .collect()
}

pub fn random_ensemble(
    grid: &ModelGrid,
    seed: u64,
    count: usize,
    spec: &EnsembleSpec,
) -> Vec<ScalarField> {
    random_specs(seed, count, spec, grid.m, grid.q)
        .iter()
        .map(|s| s.sample(grid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_model_grid;

    #[test]
    fn seeded_and_resolution_independent() {
        let g = make_model_grid(1, 1, 8.0, 64, 16, 16, 0.5, 0.1, 0.3).unwrap();
        let spec = EnsembleSpec::deep((-1.0, 1.0));
        let a = random_specs(7, 3, &spec, 1, 1);
        let b = random_specs(7, 3, &spec, 1, 1);
        assert_eq!(a, b);
        let fine = g.refined(2);
        let fc = a[0].sample(&g);
        let ff = a[0].sample(&fine);
        // coarse node j coincides with fine node 2j
        assert_eq!(fc.values[0], ff.values[0]);
    }
}
