//! Boundary, Mellin conormal and edge symbols; indicial roots and admissible weights.

use std::io::Write;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{FormField, Label};
use crate::operators::{apply_with, Applied, EdgeCovariable, EdgeOperator, Term};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Cluster radius for root multiplicities.
pub const CLUSTER_RADIUS: f64 = 1e-7;

/// Base point `(r, sigma, u)` and fiber `(rho, xi, eta)` for m = q = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covector {
    pub r: f64,
    pub sigma: f64,
    pub u: f64,
    pub rho: f64,
    pub xi: f64,
    pub eta: f64,
}

impl Covector {
    pub fn fiber_norm(&self) -> f64 {
        (self.rho * self.rho + self.xi * self.xi + self.eta * self.eta).sqrt()
    }
}

/// Seeded covectors on the unit fiber sphere; every fourth one sits at `r = 0`.
pub fn unit_covectors(seed: u64, count: usize) -> Vec<Covector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-3);
            Covector {
                r: if i % 4 == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..0.5)
                },
                sigma: rng.random_range(0.0..std::f64::consts::TAU),
                u: rng.random_range(0.0..std::f64::consts::TAU),
                rho: v[0] / n,
                xi: v[1] / n,
                eta: v[2] / n,
            }
        })
        .collect()
}

fn term_matrix<F: Fn(&Term) -> Option<Complex64> + Sync>(
    p: &EdgeOperator,
    f: F,
) -> DMatrix<Complex64> {
    DMatrix::from_fn(p.rows.len(), p.cols.len(), |i, j| {
        p.blocks[i][j].iter().filter_map(&f).sum()
    })
}

/// Principal boundary symbol: top-order terms with `(-r d_r) -> -i rho`,
/// `(r D_u) -> eta`, `d_sigma -> i xi`, coefficients `r^w` at the base point.
pub fn boundary_symbol(p: &EdgeOperator, c: &Covector) -> Result<DMatrix<Complex64>> {
    if c.fiber_norm() == 0.0 {
        return Err(Error::ZeroFiber);
    }
    let l = p.order;
    Ok(term_matrix(p, |t| {
        (t.diff_order() == l).then(|| {
            t.coeff
                * c.r.powi(t.w)
                * (-I * c.rho).powu(t.fuchs)
                * c.eta.powi(t.edge as i32)
                * (I * c.xi).powu(t.sigma)
        })
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub pass: bool,
    pub square: bool,
    pub min_singular_value: f64,
    pub worst: Option<Covector>,
    pub samples: usize,
}

pub const ELLIPTICITY_TOL: f64 = 1e-8;

fn min_singular(m: &DMatrix<Complex64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Boundary ellipticity on the given fiber samples (expected on the unit sphere).
pub fn check_boundary_ellipticity(
    p: &EdgeOperator,
    samples: &[Covector],
) -> Result<EllipticityReport> {
    let square = p.rows.len() == p.cols.len();
    let mut min = f64::INFINITY;
    let mut worst = None;
    for c in samples {
        let s = min_singular(&boundary_symbol(p, c)?);
        if s < min {
            min = s;
            worst = Some(*c);
        }
    }
    Ok(EllipticityReport {
        pass: square && !samples.is_empty() && min > ELLIPTICITY_TOL,
        square,
        min_singular_value: min,
        worst,
        samples: samples.len(),
    })
}

/// Polynomial entries `h(0, z)` restricted to X-mode k: ascending coefficients in z.
pub fn conormal_polynomials(p: &EdgeOperator, k: i64) -> Vec<Vec<Vec<Complex64>>> {
    let ik = Complex64::new(0.0, k as f64);
    p.blocks
        .iter()
        .map(|row| {
            row.iter()
                .map(|terms| {
                    let mut poly = vec![Complex64::new(0.0, 0.0); p.order as usize + 1];
                    for t in terms.iter().filter(|t| t.w == 0 && t.edge == 0) {
                        poly[t.fuchs as usize] += t.coeff * ik.powu(t.sigma);
                    }
                    poly
                })
                .collect()
        })
        .collect()
}

/// Mellin conormal symbol `h(0, z)` on X-mode k: `(-r d_r) -> z`, `d_sigma -> i k`,
/// edge covariables frozen to zero.
pub fn mellin_conormal_symbol(p: &EdgeOperator, z: Complex64, k: i64) -> DMatrix<Complex64> {
    let polys = conormal_polynomials(p, k);
    DMatrix::from_fn(p.rows.len(), p.cols.len(), |i, j| horner(&polys[i][j], z))
}

/// Edge symbol `sigma_wedge(P)(u, eta)` applied to a field on the cone `X^wedge`
/// (q = 0 grid): `w = 0` terms with `(r D_u)^alpha -> (r eta)^alpha`.
/// Coefficients are constant, so `u` only labels the fiber.
pub fn edge_symbol_apply(p: &EdgeOperator, u: f64, eta: f64, f: &FormField) -> Result<Applied> {
    let _ = u;
    if eta == 0.0 {
        return Err(Error::ZeroEta);
    }
    if f.grid.q != 0 {
        return Err(Error::Dimension(
            "edge symbol acts on cone grids (q = 0)".into(),
        ));
    }
    apply_with(p, f, EdgeCovariable::Frozen(&[eta]))
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, a| acc * z + a)
}

fn derivative(c: &[Complex64]) -> Vec<Complex64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, a)| a * i as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub z: Complex64,
    pub multiplicity: usize,
    pub mode: i64,
}

/// Compact rectangle in the z-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl Window {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Result<Self> {
        if !(re.0 <= re.1 && im.0 <= im.1)
            || ![re.0, re.1, im.0, im.1].iter().all(|x| x.is_finite())
        {
            return Err(Error::Invalid("window must be a compact rectangle".into()));
        }
        Ok(Self { re, im })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let e = 1e-12;
        z.re >= self.re.0 - e
            && z.re <= self.re.1 + e
            && z.im >= self.im.0 - e
            && z.im <= self.im.1 + e
    }
}

/// Connected components of the bipartite nonzero pattern of a symbol.
fn components(p: &EdgeOperator, polys: &[Vec<Vec<Complex64>>]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let (nr, nc) = (p.rows.len(), p.cols.len());
    let nonzero = |i: usize, j: usize| polys[i][j].iter().any(|c| c.norm() > 0.0);
    let mut seen_r = vec![false; nr];
    let mut seen_c = vec![false; nc];
    let mut out = Vec::new();
    for start in 0..nc {
        if seen_c[start] {
            continue;
        }
        let (mut rows, mut cols) = (Vec::new(), vec![start]);
        seen_c[start] = true;
        let mut stack = vec![(false, start)];
        while let Some((is_row, idx)) = stack.pop() {
            if is_row {
                for j in 0..nc {
                    if seen_c[j] || !nonzero(idx, j) {
                        continue;
                    }
                    seen_c[j] = true;
                    cols.push(j);
                    stack.push((false, j));
                }
            } else {
                for i in 0..nr {
                    if seen_r[i] || !nonzero(i, idx) {
                        continue;
                    }
                    seen_r[i] = true;
                    rows.push(i);
                    stack.push((true, i));
                }
            }
        }
        rows.sort();
        cols.sort();
        out.push((rows, cols));
    }
    out
}

/// Coefficients of `det M(z)` by sampling on the circle `|z| = radius`.
fn det_polynomial(entries: &[Vec<Vec<Complex64>>], degree: usize, radius: f64) -> Vec<Complex64> {
    let n = entries.len();
    let npts = degree + 1;
    let nodes: Vec<Complex64> = (0..npts)
        .map(|j| Complex64::from_polar(radius, std::f64::consts::TAU * j as f64 / npts as f64))
        .collect();
    let vals: Vec<Complex64> = nodes
        .iter()
        .map(|z| DMatrix::from_fn(n, n, |i, j| horner(&entries[i][j], *z)).determinant())
        .collect();
    (0..npts)
        .map(|k| {
            let s: Complex64 = vals
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v * Complex64::from_polar(
                        1.0,
                        -std::f64::consts::TAU * (j * k) as f64 / npts as f64,
                    )
                })
                .sum();
            s / npts as f64 / radius.powi(k as i32)
        })
        .collect()
}

fn trim(mut c: Vec<Complex64>, radius: f64) -> Vec<Complex64> {
    let scale = c
        .iter()
        .enumerate()
        .map(|(i, a)| a.norm() * radius.powi(i as i32))
        .fold(0.0, f64::max);
    while let Some(last) = c.last() {
        if last.norm() * radius.powi(c.len() as i32 - 1) <= 1e-11 * scale {
            c.pop();
        } else {
            break;
        }
    }
    for (i, a) in c.iter_mut().enumerate() {
        if a.norm() * radius.powi(i as i32) <= 1e-13 * scale {
            *a = Complex64::new(0.0, 0.0);
        }
    }
    c
}

/// Roots of a polynomial (ascending coefficients) as clustered `(z, multiplicity)`.
pub fn polynomial_roots(c: &[Complex64]) -> Result<Vec<(Complex64, usize)>> {
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = c[deg];
    let companion = DMatrix::from_fn(deg, deg, |i, j| {
        if i == 0 {
            -c[deg - 1 - j] / lead
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let eig = Schur::try_new(companion, 1e-15, 10_000)
        .and_then(|s| s.eigenvalues())
        .ok_or_else(|| Error::Invalid("companion eigenvalue iteration did not converge".into()))?;
    let mut raw: Vec<Complex64> = eig.iter().copied().collect();
    raw.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    // cluster, then refine each cluster centre on the derivative of matching order
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    let mut used = vec![false; raw.len()];
    for i in 0..raw.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![raw[i]];
        used[i] = true;
        for j in i + 1..raw.len() {
            if !used[j] && (raw[j] - raw[i]).norm() < CLUSTER_RADIUS {
                used[j] = true;
                members.push(raw[j]);
            }
        }
        let mean = members.iter().sum::<Complex64>() / members.len() as f64;
        clusters.push((mean, members.len()));
    }
    Ok(clusters
        .into_iter()
        .map(|(z, mult)| (polish(c, z, mult), mult))
        .collect())
}

fn polish(c: &[Complex64], z0: Complex64, mult: usize) -> Complex64 {
    let mut p = c.to_vec();
    for _ in 1..mult {
        p = derivative(&p);
    }
    let dp = derivative(&p);
    let mut z = z0;
    for _ in 0..50 {
        let d = horner(&dp, z);
        if d.norm() == 0.0 {
            break;
        }
        let step = horner(&p, z) / d;
        z -= step;
        if step.norm() <= 1e-16 * z.norm().max(1.0) {
            break;
        }
    }
    if (z - z0).norm() < 1e-3 {
        z
    } else {
        z0
    }
}

fn mode_roots(p: &EdgeOperator, k: i64) -> Result<Vec<(Complex64, usize)>> {
    let polys = conormal_polynomials(p, k);
    let radius = 1.0 + k.unsigned_abs() as f64;
    let mut all: Vec<(Complex64, usize)> = Vec::new();
    for (rows, cols) in components(p, &polys) {
        if rows.is_empty() {
            return Err(Error::DegenerateSymbol(k));
        }
        let n = cols.len();
        let sub: Vec<Vec<Vec<Complex64>>> = rows
            .iter()
            .map(|&i| cols.iter().map(|&j| polys[i][j].clone()).collect())
            .collect();
        if rows.len() < n {
            return Err(Error::DegenerateSymbol(k));
        }
        let degree = n * p.order as usize;
        let minor: Vec<Vec<Vec<Complex64>>> = sub[..n].to_vec();
        let det = trim(det_polynomial(&minor, degree, radius), radius);
        if det.is_empty() {
            return Err(Error::DegenerateSymbol(k));
        }
        let found = polynomial_roots(&det)?;
        if rows.len() == n {
            all.extend(found);
        } else {
            // non-square: keep minor roots where the full column block loses rank
            for (z, mult) in found {
                let m = DMatrix::from_fn(sub.len(), n, |i, j| horner(&sub[i][j], z));
                let scale = m.norm().max(1.0);
                if min_singular(&m) < 1e-6 * scale {
                    all.push((z, mult));
                }
            }
        }
    }
    // merge equal roots from different components
    let mut merged: Vec<(Complex64, usize)> = Vec::new();
    for (z, mult) in all {
        match merged
            .iter_mut()
            .find(|(w, _)| (*w - z).norm() < CLUSTER_RADIUS)
        {
            Some(e) => e.1 += mult,
            None => merged.push((z, mult)),
        }
    }
    Ok(merged)
}

/// Non-invertibility points of the conormal symbol inside `window`, over X-modes `|k| <= band_limit`.
pub fn indicial_roots(p: &EdgeOperator, window: &Window, band_limit: i64) -> Result<Vec<Root>> {
    p.validate()?;
    let per_mode: Vec<Result<Vec<Root>>> = (-band_limit..=band_limit)
        .into_par_iter()
        .map(|k| {
            Ok(mode_roots(p, k)?
                .into_iter()
                .filter(|(z, _)| window.contains(*z))
                .map(|(z, multiplicity)| Root {
                    z,
                    multiplicity,
                    mode: k,
                })
                .collect())
        })
        .collect();
    let mut roots = Vec::new();
    for r in per_mode {
        roots.extend(r?);
    }
    sort_roots(&mut roots);
    Ok(roots)
}

fn sort_roots(roots: &mut [Root]) {
    roots.sort_by(|a, b| {
        a.z.re
            .total_cmp(&b.z.re)
            .then(a.z.im.total_cmp(&b.z.im))
            .then(a.mode.cmp(&b.mode))
    });
}

/// Distinct real parts `(m+1)/2 - Re z` of roots inside the open interval, ascending.
pub fn excluded_weights(roots: &[Root], m: usize, gamma: (f64, f64)) -> Vec<f64> {
    let mut d: Vec<f64> = roots
        .iter()
        .map(|r| (m as f64 + 1.0) / 2.0 - r.z.re)
        .filter(|g| *g > gamma.0 && *g < gamma.1)
        .collect();
    d.sort_by(f64::total_cmp);
    d.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    d
}

/// Open subintervals of `gamma` whose weight lines miss every root.
pub fn admissible_weights(roots: &[Root], m: usize, gamma: (f64, f64)) -> Vec<(f64, f64)> {
    let mut cuts = vec![gamma.0];
    cuts.extend(excluded_weights(roots, m, gamma));
    cuts.push(gamma.1);
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicialReport {
    pub roots: Vec<Root>,
    /// `Lambda` intersected with the real line.
    #[serde(rename = "D")]
    pub real_roots: Vec<f64>,
    pub excluded: Vec<f64>,
    pub admissible: Vec<(f64, f64)>,
    pub band_limit: i64,
    pub window: Window,
    pub gamma_interval: (f64, f64),
}

/// Roots on the Re z window induced by `gamma` (with the given Im range), plus admissible weights.
pub fn indicial_report(
    p: &EdgeOperator,
    m: usize,
    gamma: (f64, f64),
    im: (f64, f64),
    band_limit: i64,
) -> Result<IndicialReport> {
    if !(gamma.0 < gamma.1) {
        return Err(Error::Invalid("gamma interval must be nonempty".into()));
    }
    let c = (m as f64 + 1.0) / 2.0;
    let window = Window::new((c - gamma.1, c - gamma.0), im)?;
    let roots = indicial_roots(p, &window, band_limit)?;
    Ok(report_from_roots(roots, m, gamma, window, band_limit))
}

pub fn report_from_roots(
    roots: Vec<Root>,
    m: usize,
    gamma: (f64, f64),
    window: Window,
    band_limit: i64,
) -> IndicialReport {
    let mut real_roots: Vec<f64> = roots
        .iter()
        .filter(|r| r.z.im.abs() < 1e-9)
        .map(|r| r.z.re)
        .collect();
    real_roots.sort_by(f64::total_cmp);
    real_roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    IndicialReport {
        excluded: excluded_weights(&roots, m, gamma),
        admissible: admissible_weights(&roots, m, gamma),
        roots,
        real_roots,
        band_limit,
        window,
        gamma_interval: gamma,
    }
}

impl IndicialReport {
    /// CSV with columns `mode_k, re_z, im_z, multiplicity`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mode_k", "re_z", "im_z", "multiplicity"])?;
        for r in &self.roots {
            out.write_record(&[
                r.mode.to_string(),
                format!("{:.16e}", r.z.re),
                format!("{:.16e}", r.z.im),
                r.multiplicity.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Row/column labels of a symbol matrix, for reports.
pub fn symbol_labels(p: &EdgeOperator) -> (Vec<Label>, Vec<Label>) {
    (p.rows.clone(), p.cols.clone())
}
