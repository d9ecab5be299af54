//! Cone, K and edge Sobolev norms, the dilation group `kappa_lambda` and
//! estimation of its growth constants.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{random_ensemble, EnsembleSpec};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{make_model_grid, ModelGrid, ScalarField, DECAY_THRESHOLD};
use crate::mellin::{s_gamma_map, weight_line_unchecked, WeightData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeNormForm {
    /// Mode sum over the whole field.
    Local,
    /// `omega`-part in the local edge norm plus `(1-omega)`-part in plain H^s.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBounds {
    #[serde(rename = "K")]
    pub k: f64,
    pub c_gamma: f64,
    pub slope_above: f64,
    pub slope_below: f64,
    /// `(lambda, max ratio over the ensemble)`.
    pub samples: Vec<(f64, f64)>,
}

/// Smoothed bracket `(1 + |eta|^2)^{1/2}`.
pub fn bracket(eta: &[f64]) -> f64 {
    (1.0 + eta.iter().map(|e| e * e).sum::<f64>()).sqrt()
}

/// `sum (1 + shift + |zeta|^2)^s |X|^2` over a spectrum in FFT bin order.
fn weighted_sum(data: &[Complex64], grid: &ModelGrid, shift: f64, s: f64) -> f64 {
    let shape = grid.shape();
    let nt = grid.n_t;
    let sl = grid.slice_len();
    let cross = &shape[1..];
    // |k|^2 per cross-section bin is shared by all radial bins
    let mut k2 = vec![0.0; sl];
    let mut ix = vec![0usize; cross.len()];
    for (flat, v) in k2.iter_mut().enumerate() {
        fft::unravel(flat, cross, &mut ix);
        *v = ix
            .iter()
            .zip(cross)
            .map(|(&i, &n)| (fft::signed_mode(i, n) as f64).powi(2))
            .sum();
    }
    let parts: Vec<f64> = (0..nt)
        .into_par_iter()
        .map(|l| {
            let rho = PI * fft::signed_mode(l, nt) as f64 / grid.t_half;
            let base = 1.0 + shift + rho * rho;
            data[l * sl..(l + 1) * sl]
                .iter()
                .zip(&k2)
                .map(|(x, k)| (base + k).powf(s) * x.norm_sqr())
                .sum()
        })
        .collect();
    parts.iter().sum()
}

/// Plancherel factor `1 / (2T (2 pi)^{m+q})` for spectra scaled by `dt * cell_volume`.
fn plancherel(grid: &ModelGrid) -> f64 {
    1.0 / (2.0 * grid.t_half * (2.0 * PI).powi((grid.m + grid.q) as i32))
}

fn scaled_spectrum(f: &ScalarField) -> Vec<Complex64> {
    let mut data = f.values.clone();
    fft::forward_all(&mut data, &f.grid.shape());
    let c = f.grid.dt() * f.grid.cell_volume();
    data.par_iter_mut().for_each(|v| *v *= c);
    data
}

/// Squared H^s norm on the cylinder with bracket `1 + shift + |zeta|^2`, no decay check.
pub(crate) fn sobolev_sq_unchecked(f: &ScalarField, s: f64, shift: f64) -> f64 {
    weighted_sum(&scaled_spectrum(f), &f.grid, shift, s) * plancherel(&f.grid)
}

fn check_decay(f: &ScalarField) -> Result<()> {
    let r = f.end_ratio();
    if r > DECAY_THRESHOLD {
        return Err(Error::Truncation(r));
    }
    Ok(())
}

/// H^s norm of a field on the cylinder `R x T^{m+q}` with bracket `1 + shift + |zeta|^2`.
pub fn sobolev_norm(f: &ScalarField, s: f64, shift: f64) -> Result<f64> {
    check_decay(f)?;
    Ok(sobolev_sq_unchecked(f, s, shift).sqrt())
}

/// Ordinary cylinder H^s norm, used on the `(1-omega)` part.
pub fn cylinder_norm(f: &ScalarField, s: f64) -> Result<f64> {
    sobolev_norm(f, s, 0.0)
}

fn require_cone(f: &ScalarField) -> Result<()> {
    if f.grid.q != 0 {
        return Err(Error::Dimension(format!(
            "cone norms need q = 0, grid has q = {}",
            f.grid.q
        )));
    }
    Ok(())
}

pub(crate) fn cone_sq_unchecked(f: &ScalarField, w: &WeightData) -> f64 {
    let (data, _) = weight_line_unchecked(f, w);
    let beta = w.beta(f.grid.m);
    weighted_sum(&data, &f.grid, beta * beta, w.s) * plancherel(&f.grid)
}

/// `H^{s,gamma}` norm on the model cone from samples of the weight-line transform.
pub fn cone_norm_local(f: &ScalarField, w: &WeightData) -> Result<f64> {
    require_cone(f)?;
    check_decay(&s_gamma_map(f, w))?;
    Ok(cone_sq_unchecked(f, w).sqrt())
}

fn omega_split(f: &ScalarField) -> (ScalarField, ScalarField) {
    let om = f.grid.cutoff_nodes();
    let rest: Vec<f64> = om.iter().map(|w| 1.0 - w).collect();
    (f.mul_radial(&om), f.mul_radial(&rest))
}

pub(crate) fn k_norm_unchecked(f: &ScalarField, w: &WeightData) -> f64 {
    let (near, far) = omega_split(f);
    cone_sq_unchecked(&near, w).sqrt() + sobolev_sq_unchecked(&far, w.s, 0.0).sqrt()
}

fn end_max(f: &ScalarField) -> f64 {
    let last = f.grid.n_t - 1;
    f.slice(0)
        .iter()
        .chain(f.slice(last))
        .map(|v| v.norm())
        .fold(0.0, f64::max)
}

/// Both parts of the split are measured against one reference so that a
/// negligible part does not fail on its own rounding noise.
fn check_k_decay(f: &ScalarField, w: &WeightData) -> Result<()> {
    let (near, far) = omega_split(f);
    let near = s_gamma_map(&near, w);
    let reference = near.max_abs().max(far.max_abs());
    if reference == 0.0 {
        return Ok(());
    }
    let r = end_max(&near).max(end_max(&far)) / reference;
    if r > DECAY_THRESHOLD {
        return Err(Error::Truncation(r));
    }
    Ok(())
}

/// `K^{s,gamma}` norm: cone norm of `omega f` plus cylinder norm of `(1-omega) f`.
pub fn k_norm(f: &ScalarField, w: &WeightData) -> Result<f64> {
    require_cone(f)?;
    check_k_decay(f, w)?;
    Ok(k_norm_unchecked(f, w))
}

/// Spectral shift `f(t) -> f(t - a)` along the radial axis, no wrap check.
fn shift_t(f: &ScalarField, a: f64, amp: f64) -> ScalarField {
    let g = &f.grid;
    let shape = g.shape();
    let nt = g.n_t;
    let sl = g.slice_len();
    let mut data = f.values.clone();
    fft::fft_axis(&mut data, &shape, 0, false);
    let scale = amp / nt as f64;
    data.par_chunks_mut(sl).enumerate().for_each(|(l, c)| {
        let rho = PI * fft::signed_mode(l, nt) as f64 / g.t_half;
        let mult = if l == nt / 2 {
            Complex64::new(scale * (rho * a).cos(), 0.0)
        } else {
            Complex64::from_polar(scale, -rho * a)
        };
        c.iter_mut().for_each(|v| *v *= mult);
    });
    fft::fft_axis(&mut data, &shape, 0, true);
    ScalarField {
        grid: g.clone(),
        values: data,
    }
}

/// Largest modulus on radial slices that a shift by `a` carries across the window ends,
/// relative to the field maximum.
fn wrap_ratio(f: &ScalarField, a: f64) -> f64 {
    wrap_ratio_against(f, a, f.max_abs())
}

fn wrap_ratio_against(f: &ScalarField, a: f64, max: f64) -> f64 {
    if max == 0.0 || a == 0.0 {
        return 0.0;
    }
    let g = &f.grid;
    let mut worst: f64 = 0.0;
    for j in 0..g.n_t {
        let t = g.t_node(j);
        let wraps = if a > 0.0 {
            t >= g.t_half - a - g.dt()
        } else {
            t <= -g.t_half - a + g.dt()
        };
        if wraps {
            worst = worst.max(f.slice(j).iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
    }
    worst / max
}

pub(crate) fn group_action_unchecked(f: &ScalarField, lambda: f64) -> ScalarField {
    let amp = lambda.powf((f.grid.m as f64 + 1.0) / 2.0);
    shift_t(f, lambda.ln(), amp)
}

/// `(kappa_lambda f)(r, x) = lambda^{(m+1)/2} f(lambda r, x)`.
pub fn group_action(f: &ScalarField, lambda: f64) -> Result<ScalarField> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if lambda == 1.0 {
        return Ok(f.clone());
    }
    if wrap_ratio(f, lambda.ln()) > DECAY_THRESHOLD {
        return Err(Error::ScaleOutOfWindow);
    }
    Ok(group_action_unchecked(f, lambda))
}

/// Edge Fourier coefficients `(2 pi)^{-q} \int e^{-i eta u} f du` for every edge bin,
/// as cone-factor fields paired with their integer modes.
pub fn edge_modes(f: &ScalarField) -> Vec<(Vec<i64>, ScalarField)> {
    let g = &f.grid;
    let cone = g.cone_factor();
    if g.q == 0 {
        return vec![(
            vec![],
            ScalarField {
                grid: cone,
                values: f.values.clone(),
            },
        )];
    }
    let shape = g.shape();
    let axes: Vec<usize> = (1 + g.m..shape.len()).collect();
    let mut data = f.values.clone();
    fft::forward(&mut data, &shape, &axes);
    let nu = g.n_u.pow(g.q as u32);
    let inv = 1.0 / nu as f64;
    let ushape = vec![g.n_u; g.q];
    let outer = data.len() / nu;
    (0..nu)
        .into_par_iter()
        .map(|b| {
            let mut ix = vec![0usize; g.q];
            fft::unravel(b, &ushape, &mut ix);
            let eta: Vec<i64> = ix.iter().map(|&i| fft::signed_mode(i, g.n_u)).collect();
            let values = (0..outer).map(|o| data[o * nu + b] * inv).collect();
            (
                eta,
                ScalarField {
                    grid: cone.clone(),
                    values,
                },
            )
        })
        .collect()
}

pub(crate) fn edge_sq_unchecked(f: &ScalarField, w: &WeightData) -> f64 {
    let parts: Vec<f64> = edge_modes(f)
        .into_par_iter()
        .map(|(eta, g)| {
            if g.max_abs() == 0.0 {
                return 0.0;
            }
            let e: Vec<f64> = eta.iter().map(|&k| k as f64).collect();
            let b = bracket(&e);
            let h = group_action_unchecked(&g, 1.0 / b);
            b.powf(2.0 * w.s) * k_norm_unchecked(&h, w).powi(2)
        })
        .collect();
    parts.iter().sum()
}

/// Largest bracket among edge modes carrying content above `1e-13 max`.
fn active_bracket(f: &ScalarField, max: f64) -> f64 {
    edge_modes(f)
        .iter()
        .filter(|(_, g)| g.max_abs() > 1e-13 * max)
        .map(|(eta, _)| bracket(&eta.iter().map(|&k| k as f64).collect::<Vec<_>>()))
        .fold(1.0, f64::max)
}

/// Edge Sobolev norm `W^{s,gamma}`.
pub fn edge_norm(f: &ScalarField, w: &WeightData, form: EdgeNormForm) -> Result<f64> {
    Ok(edge_norms_shared(&[f], w, form)?[0])
}

/// Edge norms of several fields (components of one form) whose window checks are
/// measured against a common reference, so a component carrying only rounding noise
/// is not rejected on its own scale.
pub fn edge_norms_shared(
    fields: &[&ScalarField],
    w: &WeightData,
    form: EdgeNormForm,
) -> Result<Vec<f64>> {
    check_edge_window(fields, w)?;
    Ok(fields
        .iter()
        .map(|f| match form {
            EdgeNormForm::Local => edge_sq_unchecked(f, w).sqrt(),
            EdgeNormForm::Global => {
                let (near, far) = omega_split(f);
                edge_sq_unchecked(&near, w).sqrt() + sobolev_sq_unchecked(&far, w.s, 0.0).sqrt()
            }
        })
        .collect())
}

/// Window-decay and edge-rescaling checks for a family of fields against one reference.
pub fn check_edge_window(fields: &[&ScalarField], w: &WeightData) -> Result<()> {
    let mut reference: f64 = 0.0;
    let mut ends: f64 = 0.0;
    for f in fields {
        let (near, far) = omega_split(f);
        let near = s_gamma_map(&near, w);
        reference = reference.max(near.max_abs()).max(far.max_abs());
        ends = ends.max(end_max(&near)).max(end_max(&far));
    }
    if reference == 0.0 {
        return Ok(());
    }
    if ends / reference > DECAY_THRESHOLD {
        return Err(Error::Truncation(ends / reference));
    }
    let max = fields.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    for f in fields {
        let a = active_bracket(f, max).ln();
        if wrap_ratio_against(f, -a, max) > DECAY_THRESHOLD {
            return Err(Error::ScaleOutOfWindow);
        }
    }
    Ok(())
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-log least-squares slope of `y` against `x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    ls_slope(&pts)
}

/// Fit `||kappa_lambda|| <= K max(lambda, 1/lambda)^c` on `K^{s,gamma}` from ensemble maxima.
pub fn estimate_group_constants_with(
    w: &WeightData,
    lambdas: &[f64],
    fields: &[ScalarField],
) -> Result<GroupBounds> {
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo <= 0.1 + 1e-12 && hi >= 10.0 - 1e-9) {
        return Err(Error::Span(format!(
            "lambda samples [{lo}, {hi}] must cover [0.1, 10]"
        )));
    }
    if fields.is_empty() {
        return Err(Error::DegenerateEnsemble("no fields".into()));
    }
    let mut base = Vec::with_capacity(fields.len());
    for f in fields {
        base.push(k_norm(f, w)?);
    }
    if base.iter().all(|&b| b == 0.0) {
        return Err(Error::DegenerateEnsemble("all norms vanish".into()));
    }
    let mut samples = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let mut best: f64 = 0.0;
        for (f, &b) in fields.iter().zip(&base) {
            if b == 0.0 {
                continue;
            }
            let g = group_action(f, lam)?;
            check_k_decay(&g, w)?;
            best = best.max(k_norm_unchecked(&g, w) / b);
        }
        samples.push((lam, best));
    }
    let above: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.0 > 1.0)
        .map(|s| (s.0.ln(), s.1.ln()))
        .collect();
    let below: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.0 < 1.0)
        .map(|s| (s.0.ln(), s.1.ln()))
        .collect();
    let slope_above = if above.len() >= 2 {
        ls_slope(&above)
    } else {
        above[0].1 / above[0].0
    };
    let slope_below = if below.len() >= 2 {
        ls_slope(&below)
    } else {
        below[0].1 / below[0].0
    };
    let c = slope_above.max(-slope_below).max(0.0);
    let k = samples
        .iter()
        .map(|&(lam, r)| r / lam.max(1.0 / lam).powf(c))
        .fold(0.0, f64::max);
    Ok(GroupBounds {
        k,
        c_gamma: c,
        slope_above,
        slope_below,
        samples,
    })
}

/// Grid and ensemble used for group-constant estimation: packets deep inside `omega = 1`.
pub fn group_ensemble(seed: u64) -> Vec<ScalarField> {
    let g = make_model_grid(1, 1, 20.0, 256, 16, 8, 0.5, 0.1, 0.3)
        .expect("valid grid")
        .cone_factor();
    random_ensemble(&g, seed, 64, &EnsembleSpec::deep((9.5, 10.5)))
}

/// Group constants from the default 64-field seeded ensemble.
pub fn estimate_group_constants(w: &WeightData, lambdas: &[f64], seed: u64) -> Result<GroupBounds> {
    estimate_group_constants_with(w, lambdas, &group_ensemble(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::FieldSpec;

    fn cone_grid() -> ModelGrid {
        make_model_grid(1, 1, 12.0, 128, 16, 16, 0.5, 0.1, 0.3)
            .unwrap()
            .cone_factor()
    }

    fn bump(g: &ModelGrid, t0: f64) -> ScalarField {
        ScalarField::from_fn(g, |t, s, _| {
            Complex64::new(
                (-(t - t0) * (t - t0) * 2.0).exp() * (1.0 + 0.5 * s[0].cos()),
                0.0,
            )
        })
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let g = cone_grid();
        let w = WeightData::new(2.0, 1.7).unwrap();
        let z = ScalarField::zeros(&g);
        assert_eq!(cone_norm_local(&z, &w).unwrap(), 0.0);
        assert_eq!(k_norm(&z, &w).unwrap(), 0.0);
    }

    #[test]
    fn parseval_at_central_weight() {
        let g = cone_grid();
        let f = bump(&g, 0.5);
        let w = WeightData::new(0.0, 1.0).unwrap();
        let n = cone_norm_local(&f, &w).unwrap();
        assert!((n - f.l2_norm()).abs() < 1e-10 * n);
    }

    #[test]
    fn k_norm_reduces_to_cone_norm_near_tip() {
        let g = cone_grid();
        let f = bump(&g, 7.0);
        let w = WeightData::new(2.0, 1.7).unwrap();
        let a = k_norm(&f, &w).unwrap();
        let b = cone_norm_local(&f, &w).unwrap();
        assert!((a - b).abs() < 1e-12 * b);
    }

    #[test]
    fn k_norm_splits_over_disjoint_supports() {
        let g = cone_grid();
        let near = bump(&g, 7.0);
        let far = bump(&g, -5.0);
        let w = WeightData::new(1.0, 1.5).unwrap();
        let sum = &near + &far;
        let a = k_norm(&sum, &w).unwrap();
        let b = cone_norm_local(&near, &w).unwrap() + cylinder_norm(&far, 1.0).unwrap();
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn group_law_and_identity() {
        let g = cone_grid();
        let f = bump(&g, 3.0);
        assert_eq!(group_action(&f, 1.0).unwrap(), f);
        let back = group_action(&group_action(&f, 2.0).unwrap(), 0.5).unwrap();
        assert!((&back - &f).max_abs() < 1e-10 * f.max_abs());
    }

    #[test]
    fn scale_out_of_window_rejected() {
        let g = cone_grid();
        let f = bump(&g, 9.0);
        let e = group_action(&f, 1e3).unwrap_err();
        assert_eq!(e.to_string(), "scale out of window");
    }

    #[test]
    fn norm_ratio_is_lambda_to_gamma() {
        let g = cone_grid();
        let f = bump(&g, 5.5);
        let w = WeightData::new(2.0, 1.3).unwrap();
        let n0 = k_norm(&f, &w).unwrap();
        for lam in [2.0, 4.0, 8.0] {
            let n = k_norm(&group_action(&f, lam).unwrap(), &w).unwrap();
            assert!((n / n0 / f64::powf(lam, 1.3) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn single_edge_mode_reduces_to_rescaled_k_norm() {
        let full = make_model_grid(1, 1, 12.0, 128, 16, 16, 0.5, 0.1, 0.3).unwrap();
        let cone = full.cone_factor();
        let g = bump(&cone, 4.0);
        let eta0 = 3i64;
        let f = ScalarField::from_fn(&full, |t, s, u| {
            Complex64::new(
                (-(t - 4.0) * (t - 4.0) * 2.0).exp() * (1.0 + 0.5 * s[0].cos()),
                0.0,
            ) * Complex64::from_polar(1.0, eta0 as f64 * u[0])
        });
        let w = WeightData::new(2.0, 1.6).unwrap();
        let b = bracket(&[eta0 as f64]);
        let expect = b.powf(w.s) * k_norm(&group_action(&g, 1.0 / b).unwrap(), &w).unwrap();
        let got = edge_norm(&f, &w, EdgeNormForm::Local).unwrap();
        assert!((got / expect - 1.0).abs() < 1e-9, "{got} {expect}");
    }

    #[test]
    fn degenerate_inputs() {
        let w = WeightData::new(1.0, 1.0).unwrap();
        let e = estimate_group_constants_with(&w, &[1.0], &[]).unwrap_err();
        assert!(e.to_string().contains("span"));
        let g = cone_grid();
        let e = estimate_group_constants_with(&w, &[0.1, 1.0, 10.0], &[ScalarField::zeros(&g)])
            .unwrap_err();
        assert!(matches!(e, Error::DegenerateEnsemble(_)));
    }

    #[test]
    fn edge_norm_resolution_stable() {
        let g = make_model_grid(1, 1, 10.0, 128, 16, 16, 0.5, 0.1, 0.3).unwrap();
        let spec = FieldSpec::random(
            &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3),
            &EnsembleSpec {
                max_u_mode: 2,
                ..EnsembleSpec::deep((4.5, 5.5))
            },
            1,
            1,
        );
        let w = WeightData::new(2.0, 1.5).unwrap();
        let a = edge_norm(&spec.sample(&g), &w, EdgeNormForm::Global).unwrap();
        let b = edge_norm(&spec.sample(&g.refined(2)), &w, EdgeNormForm::Global).unwrap();
        assert!((a / b - 1.0).abs() < 1e-4, "{a} {b}");
    }
}
