//! Conormal asymptotic types, least-squares expansion fits and the
//! conormal asymptotic embedding check.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deformation::{DeformedMap, Embedding};
use crate::error::{Error, Result};
use crate::grid::{diff, radial_derivative, Axis, ModelGrid, ScalarField};
use crate::mellin::WeightData;
use crate::sobolev::{edge_norm, edge_sq_unchecked, loglog_slope, EdgeNormForm};

/// Design matrices above this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Percentile of the angular envelope per radial shell.
pub const ENVELOPE_PERCENTILE: f64 = 0.95;
/// Slack on fitted rates.
pub const RATE_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticType {
    /// `(p_j, m_j)`, terms `r^{-p_j} log^k r` for `k <= m_j`.
    pub terms: Vec<(Complex64, usize)>,
    pub gamma: f64,
    pub m: usize,
}

impl AsymptoticType {
    pub fn new(terms: Vec<(Complex64, usize)>, gamma: f64, m: usize) -> Result<Self> {
        let bound = (m as f64 + 1.0) / 2.0 - gamma;
        for (p, _) in &terms {
            if !(p.re < bound) {
                return Err(Error::Invalid(format!(
                    "Re p = {} must lie below (m+1)/2 - gamma = {bound}",
                    p.re
                )));
            }
        }
        if terms.windows(2).any(|w| w[1].0.re > w[0].0.re) {
            return Err(Error::Invalid("Re p_j must be nonincreasing".into()));
        }
        Ok(Self { terms, gamma, m })
    }

    /// `(p, k)` pairs in design order.
    pub fn design(&self) -> Vec<(Complex64, usize)> {
        self.terms
            .iter()
            .flat_map(|(p, mj)| (0..=*mj).map(move |k| (*p, k)))
            .collect()
    }
}

/// `r^{-p} log^k r = e^{p t} (-t)^k`.
pub fn design_function(p: Complex64, k: usize, t: f64) -> Complex64 {
    (p * t).exp() * (-t).powi(k as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTerm {
    pub p: Complex64,
    pub k: usize,
    /// Separable factor on the X nodes.
    pub c_samples: Vec<Complex64>,
    /// Separable factor on the E nodes.
    pub v_samples: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct ConormalFit {
    pub terms: Vec<FitTerm>,
    pub remainder: ScalarField,
    /// `||remainder|| / ||f||` in grid l2.
    pub remainder_norm: f64,
    pub condition_number: f64,
}

#[derive(Serialize)]
struct FitReport<'a> {
    terms: &'a [FitTerm],
    remainder_norm: f64,
    condition_number: f64,
}

impl ConormalFit {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(FitReport {
            terms: &self.terms,
            remainder_norm: self.remainder_norm,
            condition_number: self.condition_number,
        })
        .expect("serializable")
    }

    /// Coefficient `sum_i c_i(sigma) v_i(u)` of `(p, k)` at the cross-section node `(a, b)`.
    pub fn coefficient(&self, p: Complex64, k: usize, a: usize, b: usize) -> Complex64 {
        self.terms
            .iter()
            .filter(|t| t.p == p && t.k == k)
            .map(|t| t.c_samples[a] * t.v_samples[b])
            .sum()
    }
}

/// Split a cross-section coefficient matrix into separable rank-one terms.
fn separable(a: &DMatrix<Complex64>) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
    // full-pivot cross approximation: exact after rank(a) steps
    let mut r = a.clone();
    let amax = a.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut out = Vec::new();
    if amax == 0.0 {
        return out;
    }
    for _ in 0..a.nrows().min(a.ncols()) {
        let (mut pi, mut pj, mut best) = (0, 0, 0.0);
        for j in 0..r.ncols() {
            for i in 0..r.nrows() {
                if r[(i, j)].norm() > best {
                    (pi, pj, best) = (i, j, r[(i, j)].norm());
                }
            }
        }
        if best <= 1e-13 * amax {
            break;
        }
        let piv = r[(pi, pj)];
        let c: Vec<Complex64> = r.column(pj).iter().copied().collect();
        let v: Vec<Complex64> = r.row(pi).iter().map(|x| x / piv).collect();
        for j in 0..r.ncols() {
            for i in 0..r.nrows() {
                r[(i, j)] -= c[i] * v[j];
            }
        }
        out.push((c, v));
    }
    out
}

/// Least-squares fit of `f` on the shells where `omega = 1` against `e^{p t}(-t)^k`,
/// separately at every cross-section node; remainder `f - omega sum(fit)`.
pub fn fit_conormal_expansion(f: &ScalarField, o: &AsymptoticType) -> Result<ConormalFit> {
    let g = &f.grid;
    if g.m != o.m {
        return Err(Error::Dimension(
            "asymptotic type and grid disagree on m".into(),
        ));
    }
    let design = o.design();
    let rows: Vec<usize> = (0..g.n_t)
        .filter(|&j| g.cutoff_t(g.t_node(j)) == 1.0)
        .collect();
    if design.is_empty() {
        return Ok(ConormalFit {
            terms: vec![],
            remainder: f.clone(),
            remainder_norm: 1.0,
            condition_number: 1.0,
        });
    }
    if rows.len() < design.len() {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let mut d = DMatrix::from_fn(rows.len(), design.len(), |i, j| {
        design_function(design[j].0, design[j].1, g.t_node(rows[i]))
    });
    // column equilibration before the condition estimate
    let scales: Vec<f64> = (0..design.len()).map(|j| d.column(j).norm()).collect();
    if scales.iter().any(|s| *s == 0.0 || !s.is_finite()) {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    for (j, s) in scales.iter().enumerate() {
        d.column_mut(j).iter_mut().for_each(|x| *x /= *s);
    }
    let svd = d.clone().svd(true, true);
    let sv = &svd.singular_values;
    let cond = sv.max() / sv.min();
    if !(cond < MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let sl = g.slice_len();
    let rhs = DMatrix::from_fn(rows.len(), sl, |i, c| f.values[rows[i] * sl + c]);
    let coef = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let nu = g.n_u.pow(g.q as u32);
    let ns = sl / nu;
    let mut terms = Vec::new();
    // coef[j, c] with c = sigma_index * nu + u_index
    let mut full = vec![Complex64::new(0.0, 0.0); design.len() * sl];
    for (j, (p, k)) in design.iter().enumerate() {
        let a = DMatrix::from_fn(ns, nu, |s, u| coef[(j, s * nu + u)] / scales[j]);
        for (c, v) in separable(&a) {
            terms.push(FitTerm {
                p: *p,
                k: *k,
                c_samples: c,
                v_samples: v,
            });
        }
        for s in 0..ns {
            for u in 0..nu {
                full[j * sl + s * nu + u] = a[(s, u)];
            }
        }
    }
    let remainder = ScalarField::from_fn(g, |_, _, _| Complex64::new(0.0, 0.0));
    let mut values = f.values.clone();
    values
        .par_chunks_mut(sl)
        .enumerate()
        .for_each(|(jt, chunk)| {
            let t = g.t_node(jt);
            let w = g.cutoff_t(t);
            if w == 0.0 {
                return;
            }
            let phi: Vec<Complex64> = design
                .iter()
                .map(|(p, k)| design_function(*p, *k, t) * w)
                .collect();
            for (c, v) in chunk.iter_mut().enumerate() {
                for (j, ph) in phi.iter().enumerate() {
                    *v -= full[j * sl + c] * ph;
                }
            }
        });
    let remainder = ScalarField {
        values,
        ..remainder
    };
    let fnorm = f.l2_norm();
    let remainder_norm = if fnorm > 0.0 {
        remainder.l2_norm() / fnorm
    } else {
        0.0
    };
    Ok(ConormalFit {
        terms,
        remainder,
        remainder_norm,
        condition_number: cond,
    })
}

/// Edge norm of the fit remainder at `(s, gamma + l)`.
pub fn residual_weight_gain(f: &ScalarField, o: &AsymptoticType, l: f64, s: f64) -> Result<f64> {
    let fit = fit_conormal_expansion(f, o)?;
    let w = WeightData::new(s, o.gamma + l)?;
    edge_norm(&fit.remainder, &w, EdgeNormForm::Local)
}

/// Edge norms at `w` of the same field sampled on growing windows, without the
/// window-decay precondition, and the successive growth factors.
pub fn window_growth(samples: &[ScalarField], w: &WeightData) -> (Vec<f64>, Vec<f64>) {
    let norms: Vec<f64> = samples
        .iter()
        .map(|f| edge_sq_unchecked(f, w).sqrt())
        .collect();
    let growth = norms.windows(2).map(|p| p[1] / p[0]).collect();
    (norms, growth)
}

fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// Shells `r < eps1` away from the deep window end used for rate fits.
fn collar_shells(g: &ModelGrid) -> Vec<usize> {
    (0..g.n_t)
        .filter(|&j| {
            let t = g.t_node(j);
            g.cutoff_t(t) == 1.0 && t <= g.t_half - 1.0
        })
        .collect()
}

/// Envelope rate `rho` with `env(r) ~ r^rho` on collar shells; `None` if the field vanishes there.
fn envelope_rate(fields: &[&ScalarField], shells: &[usize]) -> Option<f64> {
    let g = &fields.first()?.grid;
    let sl = g.slice_len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &j in shells {
        let per_node: Vec<f64> = (0..sl)
            .map(|c| {
                fields
                    .iter()
                    .map(|f| f.values[j * sl + c].norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let e = percentile(per_node, ENVELOPE_PERCENTILE);
        if e > 1e-300 {
            x.push((-g.t_node(j)).exp());
            y.push(e);
        }
    }
    (x.len() >= 2).then(|| loglog_slope(&x, &y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRate {
    /// Orders in `(r, sigma, u)`.
    pub alpha: [usize; 3],
    /// Fitted `rho` in `|d^alpha (Upsilon - Phi)| ~ r^{rho - |alpha|}`; `None` when identically zero.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRate {
    pub component: String,
    /// Fitted `rho` in `|beta_ij| ~ r^rho`; `None` when identically zero.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub gamma: f64,
    pub derivative_rates: Vec<DerivativeRate>,
    pub condition_i: bool,
    pub metric_rates: Vec<MetricRate>,
    pub condition_ii: bool,
    pub pass: bool,
}

fn d_alpha(f: &ScalarField, alpha: [usize; 3]) -> Result<ScalarField> {
    let mut out = f.clone();
    for _ in 0..alpha[0] {
        out = radial_derivative(&out)?.field;
    }
    for _ in 0..alpha[1] {
        out = diff(&out, Axis::Sigma(0));
    }
    for _ in 0..alpha[2] {
        out = diff(&out, Axis::U(0));
    }
    Ok(out)
}

/// Conormal asymptotic embedding check: derivative envelopes of `Upsilon - Phi` and
/// decay of `beta = Upsilon^* g - Phi^* g` in the coordinate frame `(r, sigma, u)`.
pub fn check_conormal_embedding(
    upsilon: &DeformedMap,
    phi: &Embedding,
    gamma: f64,
    alpha_max: usize,
) -> Result<EmbeddingReport> {
    let g = upsilon
        .x
        .first()
        .ok_or_else(|| Error::Invalid("empty map".into()))?
        .grid
        .clone();
    if g.m != 1 || g.q != 1 || upsilon.x.len() != 3 || upsilon.y.len() != 3 {
        return Err(Error::Dimension(
            "maps are sampled on m = q = 1 grids into R^6".into(),
        ));
    }
    let base: Vec<ScalarField> = (0..3)
        .map(|i| {
            ScalarField::from_fn(&g, |t, s, _| {
                Complex64::new((-t).exp() * phi.theta_jet(s[0])[0][i], 0.0)
            })
        })
        .chain((0..3).map(|i| {
            ScalarField::from_fn(&g, |_, _, u| Complex64::new(phi.tau_jet(u[0])[0][i], 0.0))
        }))
        .collect();
    let ups: Vec<&ScalarField> = upsilon.x.iter().chain(&upsilon.y).collect();
    let diffs: Vec<ScalarField> = ups.iter().zip(&base).map(|(a, b)| *a - b).collect();
    let shells = collar_shells(&g);

    let mut derivative_rates = Vec::new();
    for total in 0..=alpha_max {
        for a in 0..=total {
            for b in 0..=total - a {
                let alpha = [a, b, total - a - b];
                let ders: Vec<ScalarField> = diffs
                    .iter()
                    .map(|d| d_alpha(d, alpha))
                    .collect::<Result<_>>()?;
                let refs: Vec<&ScalarField> = ders.iter().collect();
                let rate = envelope_rate(&refs, &shells).map(|r| r + total as f64);
                derivative_rates.push(DerivativeRate { alpha, rate });
            }
        }
    }
    let condition_i = derivative_rates
        .iter()
        .all(|d| d.rate.map_or(true, |r| r >= gamma - RATE_TOL));

    // tangent vectors in the coordinate frame
    let tangents = |maps: &[&ScalarField]| -> Result<[Vec<ScalarField>; 3]> {
        Ok([
            maps.iter()
                .map(|f| d_alpha(f, [1, 0, 0]))
                .collect::<Result<_>>()?,
            maps.iter()
                .map(|f| d_alpha(f, [0, 1, 0]))
                .collect::<Result<_>>()?,
            maps.iter()
                .map(|f| d_alpha(f, [0, 0, 1]))
                .collect::<Result<_>>()?,
        ])
    };
    // Phi is affine in u, so its tangents are taken in closed form.
    let phi_t: [Vec<ScalarField>; 3] = [
        (0..6).map(|i| analytic_tangent(phi, &g, 0, i)).collect(),
        (0..6).map(|i| analytic_tangent(phi, &g, 1, i)).collect(),
        (0..6).map(|i| analytic_tangent(phi, &g, 2, i)).collect(),
    ];
    let diff_refs: Vec<&ScalarField> = diffs.iter().collect();
    let dt = tangents(&diff_refs)?;
    let names = ["rr", "r_sigma", "r_u", "sigma_sigma", "sigma_u", "u_u"];
    let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let mut metric_rates = Vec::new();
    for (name, (i, j)) in names.iter().zip(pairs) {
        // beta_ij = <dPhi_i, dD_j> + <dD_i, dPhi_j> + <dD_i, dD_j>
        let mut beta = ScalarField::zeros(&g);
        for c in 0..6 {
            beta = &beta + &(&(&phi_t[i][c] * &dt[j][c]) + &(&dt[i][c] * &phi_t[j][c]));
            beta = &beta + &(&dt[i][c] * &dt[j][c]);
        }
        metric_rates.push(MetricRate {
            component: name.to_string(),
            rate: envelope_rate(&[&beta], &shells),
        });
    }
    let threshold = gamma - 1.0 - RATE_TOL;
    let condition_ii = metric_rates
        .iter()
        .all(|m| m.rate.map_or(true, |r| r >= threshold));
    Ok(EmbeddingReport {
        gamma,
        pass: condition_i && condition_ii,
        derivative_rates,
        condition_i,
        metric_rates,
        condition_ii,
    })
}

/// Component `c` (x then y) of `d_dir Phi` with `dir` in `(r, sigma, u)`.
fn analytic_tangent(phi: &Embedding, g: &ModelGrid, dir: usize, c: usize) -> ScalarField {
    ScalarField::from_fn(g, |t, s, u| {
        let th = phi.theta_jet(s[0]);
        let ta = phi.tau_jet(u[0]);
        let r = (-t).exp();
        let v = match (dir, c < 3) {
            (0, true) => th[0][c],
            (1, true) => r * th[1][c],
            (2, false) => ta[1][c - 3],
            _ => 0.0,
        };
        Complex64::new(v, 0.0)
    })
}
