//! Ensemble checks of the pointwise decay, product and algebra estimates.
//! Every constant is measured on a grid and its twofold refinement.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ensemble::{random_specs, EnsembleSpec, FieldSpec};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{diff, Axis, ModelGrid, ScalarField};
use crate::mellin::WeightData;
use crate::sobolev::{edge_norm, k_norm, loglog_slope, EdgeNormForm};

/// Two-resolution ratio band for a constant to count as stable.
pub const STABILITY_BAND: (f64, f64) = (0.9, 1.1);
/// Relative spectral energy a product may lose when folded back onto the base grid.
pub const ALIASING_THRESHOLD: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "lowercase")]
pub enum PointwiseSpace {
    /// `K^{s,gamma}` on the cone factor of the grid.
    Cone,
    /// Global edge norm; `c_gamma` is the measured group exponent.
    Edge { c_gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductTarget {
    /// `||fg||_{s, 2 gamma - (m+1)/2}`.
    ExtraRegularity,
    /// `||fg||_{s, gamma}`, requires `gamma >= (m+1)/2`.
    Algebra,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Grid refinement factor the witness was found on.
    pub refinement: usize,
    pub members: Vec<usize>,
    /// `(t, sigma.., u..)` of the extremal node, empty for norm ratios.
    pub node: Vec<f64>,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub check: String,
    pub params: serde_json::Value,
    pub constant: f64,
    pub stable: bool,
    pub witnesses: Vec<Witness>,
}

fn stable(a: f64, b: f64) -> bool {
    if a == 0.0 && b == 0.0 {
        return true;
    }
    let r = b / a;
    r.is_finite() && r >= STABILITY_BAND.0 && r <= STABILITY_BAND.1
}

fn grid_params(g: &ModelGrid) -> serde_json::Value {
    json!({ "m": g.m, "q": g.q, "T": g.t_half, "N_t": g.n_t, "N_sigma": g.n_sigma, "N_u": g.n_u })
}

fn space_norm(f: &ScalarField, w: &WeightData, space: PointwiseSpace) -> Result<f64> {
    match space {
        PointwiseSpace::Cone => k_norm(f, w),
        PointwiseSpace::Edge { .. } => edge_norm(f, w, EdgeNormForm::Global),
    }
}

fn pointwise_precondition(g: &ModelGrid, w: &WeightData, space: PointwiseSpace) -> Result<()> {
    let m = g.m as f64;
    let (need, what) = match space {
        PointwiseSpace::Cone => ((m + 1.0) / 2.0, "(m+1)/2".to_string()),
        PointwiseSpace::Edge { c_gamma } => {
            if g.q == 0 {
                return Err(Error::Dimension("edge pointwise bound needs q >= 1".into()));
            }
            (
                (m + 1.0 + g.q as f64) / 2.0 + c_gamma,
                format!(
                    "(m+1+q)/2 + c_gamma = {}",
                    (m + 1.0 + g.q as f64) / 2.0 + c_gamma
                ),
            )
        }
    };
    if w.s <= need {
        return Err(Error::BelowThreshold(format!(
            "s = {} must exceed {what}",
            w.s
        )));
    }
    Ok(())
}

/// `sup |D f| r^{|alpha'| - gamma + (m+1)/2}` over nodes and `D` in products of at most
/// one derivative per variable group, with its arg-max node.
fn weighted_sup(f: &ScalarField, w: &WeightData) -> (f64, usize) {
    let g = &f.grid;
    let decay = -w.beta(g.m);
    // r d/dr = -d/dt, so the r-power of radial derivatives is absorbed
    let mut fields = vec![f.clone(), diff(f, Axis::T)];
    let mut axes: Vec<Axis> = (0..g.m).map(Axis::Sigma).collect();
    axes.extend((0..g.q).map(Axis::U));
    for a in axes {
        let more: Vec<ScalarField> = fields.iter().map(|h| diff(h, a)).collect();
        fields.extend(more);
    }
    let sl = g.slice_len();
    let weights: Vec<f64> = g.t_nodes().iter().map(|t| (decay * t).exp()).collect();
    let mut best = (0.0, 0);
    for h in &fields {
        for (idx, v) in h.values.iter().enumerate() {
            let x = v.norm() * weights[idx / sl];
            if x > best.0 {
                best = (x, idx);
            }
        }
    }
    best
}

fn node_of(g: &ModelGrid, idx: usize) -> Vec<f64> {
    let (t, s, u) = g.coords(idx);
    let mut out = vec![t];
    out.extend(s);
    out.extend(u);
    out
}

fn pointwise_constant(
    g: &ModelGrid,
    specs: &[FieldSpec],
    w: &WeightData,
    space: PointwiseSpace,
    refinement: usize,
) -> Result<(f64, Witness)> {
    let ratios: Vec<Result<(f64, usize)>> = specs
        .par_iter()
        .map(|spec| {
            let f = spec.sample(g);
            let n = space_norm(&f, w, space)?;
            if n == 0.0 {
                return Ok((0.0, 0));
            }
            let (sup, idx) = weighted_sup(&f, w);
            Ok((sup / n, idx))
        })
        .collect();
    let mut best = (0.0, 0usize, 0usize);
    for (i, r) in ratios.into_iter().enumerate() {
        let (ratio, idx) = r?;
        if ratio > best.0 {
            best = (ratio, i, idx);
        }
    }
    let node = if best.0 > 0.0 {
        node_of(g, best.2)
    } else {
        vec![]
    };
    Ok((
        best.0,
        Witness {
            refinement,
            members: vec![best.1],
            node,
            ratio: best.0,
        },
    ))
}

fn space_grid(g: &ModelGrid, space: PointwiseSpace) -> ModelGrid {
    match space {
        PointwiseSpace::Cone => g.cone_factor(),
        PointwiseSpace::Edge { .. } => g.clone(),
    }
}

/// Fitted constant of the weighted pointwise bound over a seeded ensemble, on `grid`
/// and on its twofold refinement.
pub fn check_pointwise_bound(
    grid: &ModelGrid,
    spec: &EnsembleSpec,
    seed: u64,
    count: usize,
    w: &WeightData,
    space: PointwiseSpace,
) -> Result<VerifyReport> {
    let g = space_grid(grid, space);
    pointwise_precondition(&g, w, space)?;
    let specs = random_specs(seed, count, spec, g.m, g.q);
    let (c1, w1) = pointwise_constant(&g, &specs, w, space, 1)?;
    let (c2, w2) = pointwise_constant(&g.refined(2), &specs, w, space, 2)?;
    Ok(VerifyReport {
        check: "pointwise".into(),
        params: json!({
            "grid": grid_params(&g), "s": w.s, "gamma": w.gamma, "seed": seed, "count": count,
            "space": space, "exponent": -w.beta(g.m),
        }),
        constant: c1.max(c2),
        stable: stable(c1, c2),
        witnesses: vec![w1, w2],
    })
}

/// Exponent of `max |f| / ||f||` against `r` for one packet moved to radial depths
/// `shifts`; returns the log-log slope and the `(r, ratio)` samples.
pub fn decay_envelope_exponent(
    grid: &ModelGrid,
    field: &FieldSpec,
    w: &WeightData,
    space: PointwiseSpace,
    shifts: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    let g = space_grid(grid, space);
    let mut samples = Vec::with_capacity(shifts.len());
    for &a in shifts {
        let spec = field.translated(a);
        let f = spec.sample(&g);
        let n = space_norm(&f, w, space)?;
        if n == 0.0 {
            return Err(Error::DegenerateEnsemble("zero field".into()));
        }
        let t0 = spec.terms.iter().map(|b| b.t0).sum::<f64>() / spec.terms.len() as f64;
        samples.push(((-t0).exp(), f.max_abs() / n));
    }
    let r: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok((loglog_slope(&r, &y), samples))
}

fn padded_product(f: &ScalarField, h: &ScalarField) -> Result<(ScalarField, f64)> {
    if f.grid != h.grid {
        return Err(Error::Dimension(
            "product of fields on different grids".into(),
        ));
    }
    let shape = f.grid.shape();
    let padded: Vec<usize> = shape.iter().map(|n| n * 3 / 2).collect();
    let lift = |x: &ScalarField| {
        let mut spec = x.values.clone();
        fft::forward_all(&mut spec, &shape);
        let mut big = fft::resize_spectrum(&spec, &shape, &padded);
        fft::inverse_all(&mut big, &padded);
        big
    };
    let (a, b) = (lift(f), lift(h));
    let ratio = shape.iter().product::<usize>() as f64 / padded.iter().product::<usize>() as f64;
    // lifting scales samples by n/N; undo it on both factors
    let scale = 1.0 / (ratio * ratio);
    let mut prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y * scale).collect();
    fft::forward_all(&mut prod, &padded);
    let total: f64 = prod.iter().map(|v| v.norm_sqr()).sum();
    let mut back = fft::resize_spectrum(&prod, &padded, &shape);
    let kept: f64 = back.iter().map(|v| v.norm_sqr()).sum();
    let lost = if total > 0.0 {
        ((total - kept) / total).max(0.0)
    } else {
        0.0
    };
    back.iter_mut().for_each(|v| *v *= ratio);
    fft::inverse_all(&mut back, &shape);
    Ok((
        ScalarField {
            grid: f.grid.clone(),
            values: back,
        },
        lost,
    ))
}

/// Product on a 3/2 zero-padded grid, projected back onto the base band.
/// Errors when the dropped part carries more than `ALIASING_THRESHOLD` of the energy.
pub fn dealiased_product(f: &ScalarField, h: &ScalarField) -> Result<ScalarField> {
    let (p, lost) = padded_product(f, h)?;
    if lost > ALIASING_THRESHOLD {
        return Err(Error::Aliasing(lost));
    }
    Ok(p)
}

/// Nodal product, after the padded product has confirmed that it is band-limit safe.
/// Within the threshold the two agree; the nodal samples avoid the FFT round-off floor,
/// which weighted norms with growing weights would amplify.
pub fn checked_product(f: &ScalarField, h: &ScalarField) -> Result<ScalarField> {
    let (_, lost) = padded_product(f, h)?;
    if lost > ALIASING_THRESHOLD {
        return Err(Error::Aliasing(lost));
    }
    Ok(f * h)
}

fn product_weight(w: &WeightData, m: usize, target: ProductTarget) -> WeightData {
    match target {
        ProductTarget::ExtraRegularity => WeightData {
            s: w.s,
            gamma: 2.0 * w.gamma - (m as f64 + 1.0) / 2.0,
        },
        ProductTarget::Algebra => *w,
    }
}

fn product_precondition(g: &ModelGrid, w: &WeightData, target: ProductTarget) -> Result<()> {
    let (m, q) = (g.m as f64, g.q as f64);
    if w.s.fract() != 0.0 {
        return Err(Error::BelowThreshold(format!(
            "s = {} must be an integer",
            w.s
        )));
    }
    if w.s <= (q + m + 3.0) / 2.0 {
        return Err(Error::BelowThreshold(format!(
            "s = {} must exceed (q+m+3)/2 = {}",
            w.s,
            (q + m + 3.0) / 2.0
        )));
    }
    if target == ProductTarget::Algebra && w.gamma < (m + 1.0) / 2.0 {
        return Err(Error::BelowThreshold(format!(
            "gamma = {} must be at least (m+1)/2",
            w.gamma
        )));
    }
    Ok(())
}

fn pair_ratio(f: &ScalarField, h: &ScalarField, w: &WeightData, wt: &WeightData) -> Result<f64> {
    let nf = edge_norm(f, w, EdgeNormForm::Global)?;
    let nh = edge_norm(h, w, EdgeNormForm::Global)?;
    if nf == 0.0 || nh == 0.0 {
        return Ok(0.0);
    }
    let p = checked_product(f, h)?;
    Ok(edge_norm(&p, wt, EdgeNormForm::Global)? / (nf * nh))
}

fn product_constant(
    g: &ModelGrid,
    pairs: &[(FieldSpec, FieldSpec)],
    w: &WeightData,
    wt: &WeightData,
    refinement: usize,
) -> Result<(f64, Witness)> {
    let ratios: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|(a, b)| pair_ratio(&a.sample(g), &b.sample(g), w, wt))
        .collect();
    let mut best = (0.0, 0usize);
    for (i, r) in ratios.into_iter().enumerate() {
        let r = r?;
        if r > best.0 {
            best = (r, i);
        }
    }
    Ok((
        best.0,
        Witness {
            refinement,
            members: vec![2 * best.1, 2 * best.1 + 1],
            node: vec![],
            ratio: best.0,
        },
    ))
}

/// Max over seeded pairs of `||fg|| / (||f|| ||g||)` in the edge norms, at two resolutions.
pub fn check_banach_algebra(
    grid: &ModelGrid,
    spec: &EnsembleSpec,
    seed: u64,
    pairs: usize,
    w: &WeightData,
    target: ProductTarget,
) -> Result<VerifyReport> {
    product_precondition(grid, w, target)?;
    let specs = random_specs(seed, 2 * pairs, spec, grid.m, grid.q);
    let pairs: Vec<(FieldSpec, FieldSpec)> = specs
        .chunks(2)
        .map(|c| (c[0].clone(), c[1].clone()))
        .collect();
    let wt = product_weight(w, grid.m, target);
    let (c1, w1) = product_constant(grid, &pairs, w, &wt, 1)?;
    let (c2, w2) = product_constant(&grid.refined(2), &pairs, w, &wt, 2)?;
    Ok(VerifyReport {
        check: "algebra".into(),
        params: json!({
            "grid": grid_params(grid), "s": w.s, "gamma": w.gamma, "seed": seed, "pairs": pairs.len(),
            "target": target, "target_gamma": wt.gamma,
        }),
        constant: c1.max(c2),
        stable: stable(c1, c2),
        witnesses: vec![w1, w2],
    })
}

/// `beta = gamma - (m+1)/2` of the product weight gain.
pub fn weight_gain_beta(gamma: f64, m: usize) -> f64 {
    gamma - (m as f64 + 1.0) / 2.0
}

/// `||fg||_{s, gamma + beta} / (||f|| ||g||)` for one pair at two resolutions.
pub fn check_product_weight_gain(
    grid: &ModelGrid,
    f: &FieldSpec,
    g: &FieldSpec,
    w: &WeightData,
) -> Result<VerifyReport> {
    product_precondition(grid, w, ProductTarget::ExtraRegularity)?;
    if w.gamma < (grid.m as f64 + 1.0) / 2.0 {
        return Err(Error::BelowThreshold(format!(
            "gamma = {} must be at least (m+1)/2",
            w.gamma
        )));
    }
    let beta = weight_gain_beta(w.gamma, grid.m);
    let wt = WeightData {
        s: w.s,
        gamma: w.gamma + beta,
    };
    let pair = [(f.clone(), g.clone())];
    let (c1, w1) = product_constant(grid, &pair, w, &wt, 1)?;
    let (c2, w2) = product_constant(&grid.refined(2), &pair, w, &wt, 2)?;
    Ok(VerifyReport {
        check: "weight-gain".into(),
        params: json!({ "grid": grid_params(grid), "s": w.s, "gamma": w.gamma, "beta": beta, "target_gamma": wt.gamma }),
        constant: c1.max(c2),
        stable: c1.is_finite() && stable(c1, c2),
        witnesses: vec![w1, w2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_model_grid;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn dealiased_product_is_pointwise_on_band_limited_fields() {
        let g = make_model_grid(1, 1, 8.0, 128, 16, 16, 0.5, 0.1, 0.3).unwrap();
        let f = ScalarField::from_fn(&g, |t, s, u| {
            c((-(t - 1.0).powi(2)).exp()) * Complex64::from_polar(1.0, s[0] + u[0])
        });
        let h = ScalarField::from_fn(&g, |t, s, _| c((-(t + 0.5).powi(2)).exp() * s[0].cos()));
        let p = dealiased_product(&f, &h).unwrap();
        let direct = &f * &h;
        assert!(
            (&p - &direct).max_abs() < 1e-12,
            "{} {}",
            (&p - &direct).max_abs(),
            direct.max_abs()
        );
    }

    #[test]
    fn aliasing_is_reported() {
        let g = make_model_grid(1, 0, 8.0, 32, 8, 8, 0.5, 0.1, 0.3).unwrap();
        let f = ScalarField::from_fn(&g, |t, s, _| {
            c((-4.0 * t * t).exp()) * Complex64::from_polar(1.0, 3.0 * s[0])
        });
        assert!(matches!(dealiased_product(&f, &f), Err(Error::Aliasing(_))));
    }

    #[test]
    fn thresholds() {
        let g = make_model_grid(1, 1, 8.0, 32, 8, 8, 0.5, 0.1, 0.3).unwrap();
        let spec = EnsembleSpec::deep((2.0, 3.0));
        let low = WeightData::new(0.5, 1.0).unwrap();
        assert!(matches!(
            check_pointwise_bound(&g, &spec, 1, 2, &low, PointwiseSpace::Cone),
            Err(Error::BelowThreshold(_))
        ));
        let frac = WeightData::new(3.5, 2.0).unwrap();
        assert!(matches!(
            check_banach_algebra(&g, &spec, 1, 2, &frac, ProductTarget::ExtraRegularity),
            Err(Error::BelowThreshold(_))
        ));
        assert_eq!(weight_gain_beta(2.0, 1), 1.0);
        assert_eq!(
            product_weight(
                &WeightData::new(4.0, 2.0).unwrap(),
                1,
                ProductTarget::ExtraRegularity
            )
            .gamma,
            3.0
        );
    }
}
