//! Edge embeddings `Phi(r, sigma, u) = (r theta(sigma), tau(u))` into `C^3 = R^3_x + R^3_y`,
//! the special Lagrangian conditions and the deformation operator
//! `P(Xi) = (exp(V_Xi) o Phi)^* (omega, Im(e^{-i theta0} Omega))`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{FormField, Label};
use crate::grid::{diff, Axis, ModelGrid, ScalarField};
use crate::mellin::WeightData;
use crate::operators::{apply, hodge_derham_full};
use crate::sobolev::{check_edge_window, edge_sq_unchecked, loglog_slope};

/// Tolerance on `|theta| = 1`.
pub const LINK_TOL: f64 = 1e-10;
/// The deformed map must satisfy `|V| < NEIGHBORHOOD_RATIO * r` at every node.
pub const NEIGHBORHOOD_RATIO: f64 = 0.5;
/// `DP[0] = IDENTIFICATION_SIGN * (d + d*)` under the identification of
/// `P_omega` with 2-forms and `P_ImOmega` with functions.
pub const IDENTIFICATION_SIGN: f64 = -1.0;

type V3 = [f64; 3];

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn to_v3(v: &[f64]) -> V3 {
    [v[0], v[1], v[2]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Theta {
    /// `cos(sigma) e1 + sin(sigma) e2`.
    GreatCircle { e1: Vec<f64>, e2: Vec<f64> },
    /// Periodic samples on `sigma_j = 2 pi j / N`, trigonometrically interpolated.
    Samples { values: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tau {
    /// `offset + u slope`.
    Linear { offset: Vec<f64>, slope: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EmbeddingSpec {
    theta: Theta,
    tau: Tau,
    phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "EmbeddingSpec", try_from = "EmbeddingSpec")]
pub struct Embedding {
    pub n: usize,
    pub theta: Theta,
    pub tau: Tau,
    pub phase: f64,
    /// Fourier coefficients of sampled links, per component.
    coeffs: Option<Vec<Vec<Complex64>>>,
}

impl From<Embedding> for EmbeddingSpec {
    fn from(e: Embedding) -> Self {
        Self {
            theta: e.theta,
            tau: e.tau,
            phase: e.phase,
        }
    }
}

impl TryFrom<EmbeddingSpec> for Embedding {
    type Error = Error;
    fn try_from(s: EmbeddingSpec) -> Result<Self> {
        make_edge_embedding(s.theta, s.tau, s.phase)
    }
}

pub fn make_edge_embedding(theta: Theta, tau: Tau, phase: f64) -> Result<Embedding> {
    let n = match &tau {
        Tau::Linear { offset, slope } => {
            if offset.len() != slope.len() {
                return Err(Error::Dimension(
                    "tau offset and slope differ in length".into(),
                ));
            }
            slope.len()
        }
    };
    // X = S^1 and E = S^1 charts: m + 1 + q = 3
    if n != 3 {
        return Err(Error::Dimension(format!(
            "m + 1 + q = 3 but the ambient dimension is {n}"
        )));
    }
    if !phase.is_finite() {
        return Err(Error::Invalid("phase must be finite".into()));
    }
    let coeffs = match &theta {
        Theta::GreatCircle { e1, e2 } => {
            if e1.len() != n || e2.len() != n {
                return Err(Error::Dimension("link vectors must lie in R^n_x".into()));
            }
            let (a, b) = (to_v3(e1), to_v3(e2));
            if (dot(a, a) - 1.0).abs() > LINK_TOL
                || (dot(b, b) - 1.0).abs() > LINK_TOL
                || dot(a, b).abs() > LINK_TOL
            {
                return Err(Error::LinkNotUnit);
            }
            None
        }
        Theta::Samples { values } => {
            let len = values.len();
            if len < 4 || !len.is_power_of_two() {
                return Err(Error::Invalid(
                    "link samples need a power-of-two count >= 4".into(),
                ));
            }
            if values.iter().any(|v| v.len() != n) {
                return Err(Error::Dimension("link samples must lie in R^n_x".into()));
            }
            if values
                .iter()
                .any(|v| (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() > LINK_TOL)
            {
                return Err(Error::LinkNotUnit);
            }
            let mut planner = rustfft::FftPlanner::new();
            let fft = planner.plan_fft_forward(len);
            Some(
                (0..n)
                    .map(|c| {
                        let mut buf: Vec<Complex64> =
                            values.iter().map(|v| Complex64::new(v[c], 0.0)).collect();
                        fft.process(&mut buf);
                        buf.iter().map(|x| x / len as f64).collect()
                    })
                    .collect(),
            )
        }
    };
    Ok(Embedding {
        n,
        theta,
        tau,
        phase,
        coeffs,
    })
}

impl Embedding {
    /// The desk example: unit circle in the `(x1, x2)`-plane, `tau(u) = (0, 0, u)`.
    pub fn circle_cone(phase: f64) -> Self {
        make_edge_embedding(
            Theta::GreatCircle {
                e1: vec![1.0, 0.0, 0.0],
                e2: vec![0.0, 1.0, 0.0],
            },
            Tau::Linear {
                offset: vec![0.0; 3],
                slope: vec![0.0, 0.0, 1.0],
            },
            phase,
        )
        .expect("valid example")
    }

    /// `theta`, `theta'`, `theta''` at sigma.
    pub fn theta_jet(&self, sigma: f64) -> [V3; 3] {
        match &self.theta {
            Theta::GreatCircle { e1, e2 } => {
                let (s, c) = sigma.sin_cos();
                let f = |a: f64, b: f64| std::array::from_fn(|i| a * e1[i] + b * e2[i]);
                [f(c, s), f(-s, c), f(-c, -s)]
            }
            Theta::Samples { .. } => {
                let coeffs = self.coeffs.as_ref().expect("sampled link coefficients");
                let mut out = [[0.0; 3]; 3];
                for (i, comp) in coeffs.iter().enumerate() {
                    let len = comp.len();
                    for (b, c) in comp.iter().enumerate() {
                        let k = crate::fft::signed_mode(b, len) as f64;
                        if 2 * b == len {
                            // Nyquist term as a real cosine
                            let (sn, cs) = (k * sigma).sin_cos();
                            out[0][i] += c.re * cs;
                            out[1][i] -= c.re * k * sn;
                            out[2][i] -= c.re * k * k * cs;
                            continue;
                        }
                        let e = c * Complex64::from_polar(1.0, k * sigma);
                        let ik = Complex64::new(0.0, k);
                        out[0][i] += e.re;
                        out[1][i] += (e * ik).re;
                        out[2][i] += (e * ik * ik).re;
                    }
                }
                out
            }
        }
    }

    /// `tau`, `tau'`, `tau''` at u.
    pub fn tau_jet(&self, u: f64) -> [V3; 3] {
        match &self.tau {
            Tau::Linear { offset, slope } => [
                std::array::from_fn(|i| offset[i] + u * slope[i]),
                to_v3(slope),
                [0.0; 3],
            ],
        }
    }

    /// `Phi(r, sigma, u)` as `(x, y)`.
    pub fn point(&self, r: f64, sigma: f64, u: f64) -> (V3, V3) {
        let th = self.theta_jet(sigma)[0];
        (th.map(|x| r * x), self.tau_jet(u)[0])
    }

    fn check_grid(&self, grid: &ModelGrid) -> Result<()> {
        if grid.m != 1 || grid.q != 1 {
            return Err(Error::Dimension(
                "embeddings live on grids with m = q = 1".into(),
            ));
        }
        Ok(())
    }
}

/// A vector in `R^3_x + R^3_y`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct V6 {
    x: V3,
    y: V3,
}

impl V6 {
    fn zero() -> Self {
        Self {
            x: [0.0; 3],
            y: [0.0; 3],
        }
    }

    fn complex(&self) -> [Complex64; 3] {
        std::array::from_fn(|i| Complex64::new(self.x[i], self.y[i]))
    }
}

/// `omega = sum dx_i ^ dy_i`.
fn kahler(a: &V6, b: &V6) -> f64 {
    dot(a.x, b.y) - dot(a.y, b.x)
}

fn det3(c: [[Complex64; 3]; 3]) -> Complex64 {
    c[0][0] * (c[1][1] * c[2][2] - c[2][1] * c[1][2])
        - c[1][0] * (c[0][1] * c[2][2] - c[2][1] * c[0][2])
        + c[2][0] * (c[0][1] * c[1][2] - c[1][1] * c[0][2])
}

/// `det[v_r, v_sigma, v_u]` of complex column vectors.
fn det_columns(a: &V6, b: &V6, c: &V6) -> Complex64 {
    let (a, b, c) = (a.complex(), b.complex(), c.complex());
    det3(std::array::from_fn(|i| [a[i], b[i], c[i]]))
}

/// Orthonormal tangent frame `(d_r, r^{-1} d_sigma, d_u)` of `Phi`, independent of r.
fn base_frame(emb: &Embedding, sigma: f64, u: f64) -> [V6; 3] {
    let th = emb.theta_jet(sigma);
    let ta = emb.tau_jet(u);
    [
        V6 {
            x: th[0],
            y: [0.0; 3],
        },
        V6 {
            x: th[1],
            y: [0.0; 3],
        },
        V6 {
            x: [0.0; 3],
            y: ta[1],
        },
    ]
}

/// Phase of `Omega` on the tangent frame of `Phi` at `sigma = u = 0`.
pub fn calibration_phase(emb: &Embedding) -> f64 {
    let f = base_frame(emb, 0.0, 0.0);
    det_columns(&f[0], &f[1], &f[2]).arg()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlReport {
    pub omega_residual: f64,
    pub im_omega_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Restrictions of `omega` and `Im(e^{-i theta0} Omega)` to the frame at every `(sigma, u)` node.
pub fn is_special_lagrangian(emb: &Embedding, grid: &ModelGrid, tol: f64) -> Result<SlReport> {
    emb.check_grid(grid)?;
    let rot = Complex64::from_polar(1.0, -emb.phase);
    let (mut w, mut im) = (0.0f64, 0.0f64);
    for s in grid.sigma_nodes() {
        for u in grid.u_nodes() {
            let f = base_frame(emb, s, u);
            w = w
                .max(kahler(&f[0], &f[1]).abs())
                .max(kahler(&f[0], &f[2]).abs())
                .max(kahler(&f[1], &f[2]).abs());
            im = im.max((rot * det_columns(&f[0], &f[1], &f[2])).im.abs());
        }
    }
    Ok(SlReport {
        omega_residual: w,
        im_omega_residual: im,
        tol,
        pass: w <= tol && im <= tol,
    })
}

/// `V_Xi` as x- and y-components.
#[derive(Clone, Debug)]
pub struct NormalField {
    pub x: Vec<ScalarField>,
    pub y: Vec<ScalarField>,
}

fn one_form_parts(xi: &FormField) -> Result<[Vec<f64>; 3]> {
    if xi.degree != Some(1) {
        return Err(Error::Degree {
            expected: 1,
            got: xi.degree.unwrap_or(usize::MAX),
        });
    }
    let labels = [
        Label::new(1, 0, 0),
        Label::new(0, 1, 0),
        Label::new(0, 0, 1),
    ];
    let scale = xi.max_abs();
    let mut out: [Vec<f64>; 3] = Default::default();
    for (slot, l) in labels.iter().enumerate() {
        let c = xi.component_or_zero(*l);
        if c.values
            .iter()
            .any(|v| v.im.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE))
        {
            return Err(Error::Invalid(format!(
                "component {l} of the deformation form must be real"
            )));
        }
        out[slot] = c.values.iter().map(|v| v.re).collect();
    }
    Ok(out)
}

fn check_pair(emb: &Embedding, xi: &FormField) -> Result<()> {
    emb.check_grid(&xi.grid)
        .map_err(|_| Error::Dimension("embedding and form grid disagree".into()))
}

/// `V_Xi = J Phi_* (Xi^sharp) = (-C tau', A theta + B theta')`.
pub fn normal_field(xi: &FormField, emb: &Embedding) -> Result<NormalField> {
    check_pair(emb, xi)?;
    let [a, b, c] = one_form_parts(xi)?;
    let g = &xi.grid;
    let mut x: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); g.len()]; 3];
    let mut y = x.clone();
    for idx in 0..g.len() {
        let (_, s, u) = g.coords(idx);
        let th = emb.theta_jet(s[0]);
        let ta = emb.tau_jet(u[0]);
        for i in 0..3 {
            x[i][idx] = Complex64::new(-c[idx] * ta[1][i], 0.0);
            y[i][idx] = Complex64::new(a[idx] * th[0][i] + b[idx] * th[1][i], 0.0);
        }
    }
    let wrap = |v: Vec<Vec<Complex64>>| {
        v.into_iter()
            .map(|values| ScalarField {
                grid: g.clone(),
                values,
            })
            .collect()
    };
    Ok(NormalField {
        x: wrap(x),
        y: wrap(y),
    })
}

/// Frame of `Phi` and of `V_Xi` at every node.
struct Frames {
    base: Vec<[V6; 3]>,
    pert: Vec<[V6; 3]>,
    max_v_over_r: f64,
}

fn frames(emb: &Embedding, xi: &FormField) -> Result<Frames> {
    check_pair(emb, xi)?;
    let [a, b, c] = one_form_parts(xi)?;
    let g = &xi.grid;
    let real = |v: &[f64]| ScalarField {
        grid: g.clone(),
        values: v.iter().map(|x| Complex64::new(*x, 0.0)).collect(),
    };
    let fields = [real(&a), real(&b), real(&c)];
    let et: Vec<f64> = g.t_nodes().iter().map(|t| t.exp()).collect();
    // (d_r, e^t d_sigma, d_u) of A, B, C
    let ders: Vec<[Vec<f64>; 3]> = fields
        .par_iter()
        .map(|f| {
            let dt = diff(f, Axis::T);
            let ds = diff(f, Axis::Sigma(0));
            let du = diff(f, Axis::U(0));
            let sl = g.slice_len();
            let mut out: [Vec<f64>; 3] =
                [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
            for i in 0..g.len() {
                let e = et[i / sl];
                out[0][i] = -e * dt.values[i].re;
                out[1][i] = e * ds.values[i].re;
                out[2][i] = du.values[i].re;
            }
            out
        })
        .collect();
    let sl = g.slice_len();
    let rows: Vec<([V6; 3], [V6; 3], f64)> = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (_, s, u) = g.coords(idx);
            let th = emb.theta_jet(s[0]);
            let ta = emb.tau_jet(u[0]);
            let inv_r = et[idx / sl];
            let (av, bv, cv) = (a[idx], b[idx], c[idx]);
            let d = |f: usize, dir: usize| ders[f][dir][idx];
            let lin = |p: f64, q: f64, e: &[V3; 3], i: usize| p * e[0][i] + q * e[1][i];
            let mut pert = [V6::zero(); 3];
            for i in 0..3 {
                // d_r V
                pert[0].x[i] = -d(2, 0) * ta[1][i];
                pert[0].y[i] = lin(d(0, 0), d(1, 0), &th, i);
                // r^{-1} d_sigma V
                pert[1].x[i] = -d(2, 1) * ta[1][i];
                pert[1].y[i] =
                    d(0, 1) * th[0][i] + (av * inv_r + d(1, 1)) * th[1][i] + bv * inv_r * th[2][i];
                // d_u V
                pert[2].x[i] = -d(2, 2) * ta[1][i] - cv * ta[2][i];
                pert[2].y[i] = lin(d(0, 2), d(1, 2), &th, i);
            }
            let v2: f64 = (0..3)
                .map(|i| {
                    let vx = -cv * ta[1][i];
                    let vy = av * th[0][i] + bv * th[1][i];
                    vx * vx + vy * vy
                })
                .sum();
            (base_frame(emb, s[0], u[0]), pert, v2.sqrt() * inv_r)
        })
        .collect();
    let max_v_over_r = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    if max_v_over_r >= NEIGHBORHOOD_RATIO {
        return Err(Error::Neighborhood(format!(
            "|V|/r reaches {max_v_over_r:.3e} (threshold {NEIGHBORHOOD_RATIO})"
        )));
    }
    let (base, pert) = rows.into_iter().map(|(b, p, _)| (b, p)).unzip();
    Ok(Frames {
        base,
        pert,
        max_v_over_r,
    })
}

/// Sampled map `M -> R^6`.
#[derive(Clone, Debug)]
pub struct DeformedMap {
    pub x: Vec<ScalarField>,
    pub y: Vec<ScalarField>,
    /// `max |V| / r` over the grid.
    pub max_v_over_r: f64,
}

/// `exp(V_Xi) o Phi`; the flat exponential is a translation.
pub fn deformed_embedding(emb: &Embedding, xi: &FormField) -> Result<DeformedMap> {
    let fr = frames(emb, xi)?;
    let v = normal_field(xi, emb)?;
    let g = &xi.grid;
    let mut x: Vec<ScalarField> = Vec::new();
    let mut y: Vec<ScalarField> = Vec::new();
    for i in 0..3 {
        x.push(ScalarField::from_fn(g, |t, s, _| {
            Complex64::new((-t).exp() * emb.theta_jet(s[0])[0][i], 0.0)
        }));
        y.push(ScalarField::from_fn(g, |_, _, u| {
            Complex64::new(emb.tau_jet(u[0])[0][i], 0.0)
        }));
    }
    let x = x.iter().zip(&v.x).map(|(p, q)| p + q).collect();
    let y = y.iter().zip(&v.y).map(|(p, q)| p + q).collect();
    Ok(DeformedMap {
        x,
        y,
        max_v_over_r: fr.max_v_over_r,
    })
}

const TWO_FORM: [(Label, usize, usize); 3] = [
    (Label::new(1, 1, 0), 0, 1),
    (Label::new(1, 0, 1), 0, 2),
    (Label::new(0, 1, 1), 1, 2),
];

fn mixed(base: &[V6; 3], pert: &[V6; 3], mask: usize) -> [V6; 3] {
    std::array::from_fn(|c| {
        if mask & (1 << c) != 0 {
            pert[c]
        } else {
            base[c]
        }
    })
}

/// `P(Xi) - P(0)` split by polynomial order in `V`: index 0 linear, 1 quadratic, 2 cubic.
/// Each part is a full form (degree-0 slot `Im Omega`, degree-2 slots `omega`).
fn increments(emb: &Embedding, xi: &FormField) -> Result<[FormField; 3]> {
    let fr = frames(emb, xi)?;
    let g = &xi.grid;
    let rot = Complex64::from_polar(1.0, -emb.phase);
    let n = g.len();
    let mut parts: Vec<Vec<Vec<Complex64>>> = vec![vec![vec![Complex64::new(0.0, 0.0); n]; 4]; 3];
    let vals: Vec<[[f64; 4]; 3]> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let (b, p) = (&fr.base[idx], &fr.pert[idx]);
            let mut out = [[0.0; 4]; 3];
            for (slot, (_, i, j)) in TWO_FORM.iter().enumerate() {
                out[0][slot + 1] = kahler(&b[*i], &p[*j]) + kahler(&p[*i], &b[*j]);
                out[1][slot + 1] = kahler(&p[*i], &p[*j]);
            }
            for mask in 1usize..8 {
                let f = mixed(b, p, mask);
                let order = mask.count_ones() as usize - 1;
                out[order][0] += (rot * det_columns(&f[0], &f[1], &f[2])).im;
            }
            out
        })
        .collect();
    for (idx, v) in vals.iter().enumerate() {
        for order in 0..3 {
            for slot in 0..4 {
                parts[order][slot][idx] = Complex64::new(v[order][slot], 0.0);
            }
        }
    }
    let labels = [
        Label::new(0, 0, 0),
        TWO_FORM[0].0,
        TWO_FORM[1].0,
        TWO_FORM[2].0,
    ];
    Ok(parts
        .into_iter()
        .map(|comps| FormField {
            grid: g.clone(),
            degree: None,
            components: labels
                .iter()
                .copied()
                .zip(comps.into_iter().map(|values| ScalarField {
                    grid: g.clone(),
                    values,
                }))
                .collect(),
        })
        .collect::<Vec<_>>()
        .try_into()
        .expect("three orders"))
}

fn base_values(emb: &Embedding, grid: &ModelGrid) -> [ScalarField; 4] {
    let rot = Complex64::from_polar(1.0, -emb.phase);
    let f0 = ScalarField::from_fn(grid, |_, s, u| {
        let f = base_frame(emb, s[0], u[0]);
        Complex64::new((rot * det_columns(&f[0], &f[1], &f[2])).im, 0.0)
    });
    let two = |i: usize, j: usize| {
        ScalarField::from_fn(grid, move |_, s, u| {
            let f = base_frame(emb, s[0], u[0]);
            Complex64::new(kahler(&f[i], &f[j]), 0.0)
        })
    };
    [f0, two(0, 1), two(0, 2), two(1, 2)]
}

/// `(P_ImOmega, P_omega)` as one form field: `(0,0,0)` carries the coefficient of
/// `Vol = dr ^ r dsigma ^ du`, the degree-2 slots carry `P_omega`.
pub fn deformation_operator(emb: &Embedding, xi: &FormField) -> Result<FormField> {
    let inc = increments(emb, xi)?;
    let base = base_values(emb, &xi.grid);
    let mut out = inc[0].add(&inc[1])?.add(&inc[2])?;
    for (c, b) in out.components.iter_mut().zip(base) {
        c.1 = &c.1 + &b;
    }
    Ok(out)
}

/// `P(Xi) - P(0)` summed from its multilinear expansion.
pub fn deformation_increment(emb: &Embedding, xi: &FormField) -> Result<FormField> {
    let inc = increments(emb, xi)?;
    inc[0].add(&inc[1])?.add(&inc[2])
}

/// `P_omega(Xi)`, a 2-form in the frame `dr, r dsigma, du`.
pub fn pullback_kahler(emb: &Embedding, xi: &FormField) -> Result<FormField> {
    deformation_operator(emb, xi)?.restrict_degree(2)
}

/// `P_ImOmega(Xi)` as the coefficient `f` in `f Vol_M`.
pub fn pullback_im_omega(emb: &Embedding, xi: &FormField) -> Result<ScalarField> {
    Ok(deformation_operator(emb, xi)?.component_or_zero(Label::new(0, 0, 0)))
}

/// `DP[0] Xi` from the assembled Hodge-deRham operator.
pub fn linearized(xi: &FormField) -> Result<FormField> {
    let full = xi.to_full()?;
    let out = apply(&hodge_derham_full(1)?, &full)?.field;
    let mut out = out.scale(Complex64::new(IDENTIFICATION_SIGN, 0.0));
    out.components
        .retain(|(l, _)| l.degree() == 0 || l.degree() == 2);
    Ok(out)
}

/// `sqrt(sum edge_norm^2)` over the components.
pub fn form_edge_norm(f: &FormField, w: &WeightData) -> Result<f64> {
    residual_edge_norm(f, &[], w)
}

/// Form edge norm of a difference whose window checks are taken against the
/// difference together with its operands: rounding noise of the operands, not
/// truncation, is what survives at the window ends once the difference is small.
pub fn residual_edge_norm(
    diff: &FormField,
    operands: &[&FormField],
    w: &WeightData,
) -> Result<f64> {
    let comps: Vec<&ScalarField> = diff
        .components
        .iter()
        .chain(operands.iter().flat_map(|o| o.components.iter()))
        .map(|(_, c)| c)
        .collect();
    check_edge_window(&comps, w)?;
    Ok(diff
        .components
        .iter()
        .map(|(_, c)| edge_sq_unchecked(c, w))
        .sum::<f64>()
        .sqrt())
}

fn require_sl(emb: &Embedding, grid: &ModelGrid) -> Result<()> {
    let rep = is_special_lagrangian(emb, grid, 1e-10)?;
    if !rep.pass {
        return Err(Error::NotSpecialLagrangian(
            rep.omega_residual.max(rep.im_omega_residual),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationRow {
    pub t: f64,
    pub residual: f64,
    /// `residual / ||DP[0] Xi||`.
    pub relative: f64,
    /// Previous residual over this one.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationTable {
    pub rows: Vec<LinearizationRow>,
    pub reference_norm: f64,
    /// Log-log slope of residual against t.
    pub slope: f64,
    pub weight: WeightData,
}

/// `|| (P(t Xi) - P(0)) / t - DP[0] Xi ||` in the edge norm at `(s - 1, gamma - 1)`.
pub fn linearization_fd(
    emb: &Embedding,
    xi: &FormField,
    ts: &[f64],
    w: &WeightData,
) -> Result<LinearizationTable> {
    check_pair(emb, xi)?;
    require_sl(emb, &xi.grid)?;
    if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Invalid("t values must be positive".into()));
    }
    let wl = w.shifted(-1.0, -1.0);
    let lin = linearized(xi)?;
    let reference_norm = form_edge_norm(&lin, &wl)?;
    let rows: Vec<(f64, f64)> = ts
        .par_iter()
        .map(|&t| {
            let p = deformation_increment(emb, &xi.scale(Complex64::new(t, 0.0)))?
                .scale(Complex64::new(1.0 / t, 0.0));
            let diff = p.sub(&lin)?;
            Ok((t, residual_edge_norm(&diff, &[&p, &lin], &wl)?))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, (t, r)) in rows.iter().enumerate() {
        out.push(LinearizationRow {
            t: *t,
            residual: *r,
            relative: if reference_norm > 0.0 {
                r / reference_norm
            } else {
                0.0
            },
            ratio: (i > 0 && *r > 0.0).then(|| rows[i - 1].1 / r),
        });
    }
    let positive: Vec<&(f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).collect();
    let slope = if positive.len() >= 2 {
        loglog_slope(
            &positive.iter().map(|r| r.0).collect::<Vec<_>>(),
            &positive.iter().map(|r| r.1).collect::<Vec<_>>(),
        )
    } else {
        f64::NAN
    };
    Ok(LinearizationTable {
        rows: out,
        reference_norm,
        slope,
        weight: *w,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderFit {
    /// `(||Xi||, ||P(Xi) - P(0) - DP[0] Xi||)` per scale and member.
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Log-log slope of the nonlinear remainder against `||Xi||` over dyadic scales `2^{-j}`.
pub fn quadratic_remainder(
    emb: &Embedding,
    ensemble: &[FormField],
    scales: usize,
    w: &WeightData,
) -> Result<RemainderFit> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::Invalid("empty ensemble".into()))?;
    require_sl(emb, &first.grid)?;
    let wl = w.shifted(-1.0, -1.0);
    let mut samples = Vec::new();
    for xi in ensemble {
        for j in 0..scales {
            let x = xi.scale(Complex64::new(0.5f64.powi(j as i32), 0.0));
            let (inc, lin) = (deformation_increment(emb, &x)?, linearized(&x)?);
            let rem = inc.sub(&lin)?;
            samples.push((
                form_edge_norm(&x, w)?,
                residual_edge_norm(&rem, &[&inc, &lin], &wl)?,
            ));
        }
    }
    let kept: Vec<&(f64, f64)> = samples.iter().filter(|s| s.0 > 0.0 && s.1 > 0.0).collect();
    let slope = if kept.len() >= 2 {
        loglog_slope(
            &kept.iter().map(|s| s.0).collect::<Vec<_>>(),
            &kept.iter().map(|s| s.1).collect::<Vec<_>>(),
        )
    } else {
        f64::NAN
    };
    Ok(RemainderFit { samples, slope })
}

/// Second difference `[P(b + h d1 + h d2) - P(b + h d1) - P(b + h d2) + P(b)] / h^2` of `P_omega`.
pub fn kahler_hessian_fd(
    emb: &Embedding,
    base: &FormField,
    d1: &FormField,
    d2: &FormField,
    h: f64,
) -> Result<FormField> {
    let hc = Complex64::new(h, 0.0);
    let p = |x: &FormField| pullback_kahler(emb, x);
    let b1 = base.add(&d1.scale(hc))?;
    let b2 = base.add(&d2.scale(hc))?;
    let b12 = b1.add(&d2.scale(hc))?;
    let num = p(&b12)?.sub(&p(&b1)?)?.sub(&p(&b2)?)?.add(&p(base)?)?;
    Ok(num.scale(Complex64::new(1.0 / (h * h), 0.0)))
}

/// Uniform sampling of `[0, 2 pi)`, used for link samples.
pub fn periodic_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| TAU * j as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{random_specs, EnsembleSpec};
    use crate::forms::decompose_form;
    use crate::grid::make_model_grid;

    fn grid() -> ModelGrid {
        make_model_grid(1, 1, 6.0, 64, 16, 16, 0.5, 0.1, 0.3).unwrap()
    }

    fn xi(g: &ModelGrid, seed: u64, amp: f64) -> FormField {
        let mut spec = EnsembleSpec::deep((-0.5, 0.5));
        spec.real = true;
        let specs = random_specs(seed, 3, &spec, 1, 1);
        let labels = [
            Label::new(1, 0, 0),
            Label::new(0, 1, 0),
            Label::new(0, 0, 1),
        ];
        let raw = labels
            .iter()
            .zip(&specs)
            .map(|(l, s)| (*l, s.scaled(amp).sample(g)))
            .collect();
        decompose_form(g, raw, 1).unwrap()
    }

    #[test]
    fn circle_cone_is_special_lagrangian() {
        let g = grid();
        let base = Embedding::circle_cone(0.0);
        let phase = calibration_phase(&base);
        assert!((phase - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let emb = Embedding::circle_cone(phase);
        assert!(is_special_lagrangian(&emb, &g, 1e-12).unwrap().pass);
        let off = Embedding::circle_cone(phase + std::f64::consts::FRAC_PI_2);
        let rep = is_special_lagrangian(&off, &g, 1e-12).unwrap();
        assert!(!rep.pass && (rep.im_omega_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let bad = make_edge_embedding(
            Theta::GreatCircle {
                e1: vec![2.0, 0.0, 0.0],
                e2: vec![0.0, 1.0, 0.0],
            },
            Tau::Linear {
                offset: vec![0.0; 3],
                slope: vec![0.0, 0.0, 1.0],
            },
            0.0,
        );
        assert!(matches!(bad, Err(Error::LinkNotUnit)));
        let bad = make_edge_embedding(
            Theta::GreatCircle {
                e1: vec![1.0, 0.0, 0.0, 0.0],
                e2: vec![0.0, 1.0, 0.0, 0.0],
            },
            Tau::Linear {
                offset: vec![0.0; 4],
                slope: vec![0.0, 0.0, 1.0, 0.0],
            },
            0.0,
        );
        assert!(matches!(bad, Err(Error::Dimension(_))));
    }

    #[test]
    fn sampled_link_matches_closed_form() {
        let vals: Vec<Vec<f64>> = periodic_nodes(16)
            .iter()
            .map(|s| vec![s.cos(), s.sin(), 0.0])
            .collect();
        let emb = make_edge_embedding(
            Theta::Samples { values: vals },
            Tau::Linear {
                offset: vec![0.0; 3],
                slope: vec![0.0, 0.0, 1.0],
            },
            0.0,
        )
        .unwrap();
        let exact = Embedding::circle_cone(0.0);
        for s in [0.1, 1.3, 4.0] {
            let (a, b) = (emb.theta_jet(s), exact.theta_jet(s));
            for d in 0..3 {
                for i in 0..3 {
                    assert!((a[d][i] - b[d][i]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn zero_deformation() {
        let g = grid();
        let emb = Embedding::circle_cone(calibration_phase(&Embedding::circle_cone(0.0)));
        let z = FormField::zeros(&g, 1).unwrap();
        let p = deformation_operator(&emb, &z).unwrap();
        assert!(p.max_abs() < 1e-12);
        let v = normal_field(&z, &emb).unwrap();
        assert!(v.x.iter().chain(&v.y).all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn linear_part_is_hodge_derham() {
        let g = grid();
        let emb = Embedding::circle_cone(calibration_phase(&Embedding::circle_cone(0.0)));
        let x = xi(&g, 11, 1e-3);
        let inc = increments(&emb, &x).unwrap();
        let lin = linearized(&x).unwrap();
        let err = inc[0].sub(&lin).unwrap().max_abs();
        assert!(
            err < 1e-10 * lin.max_abs(),
            "{err:e} vs {:e}",
            lin.max_abs()
        );
    }

    #[test]
    fn neighborhood_violation() {
        let g = grid();
        let emb = Embedding::circle_cone(std::f64::consts::FRAC_PI_2);
        let x = xi(&g, 3, 10.0);
        assert!(matches!(
            deformation_operator(&emb, &x),
            Err(Error::Neighborhood(_))
        ));
    }

    #[test]
    fn du_deformation_translates_x3() {
        let g = grid();
        let emb = Embedding::circle_cone(std::f64::consts::FRAC_PI_2);
        let c = ScalarField::from_fn(&g, |t, _, u| {
            Complex64::new(1e-3 * (-t * t).exp() * (1.0 + 0.5 * u[0].cos()), 0.0)
        });
        let x = decompose_form(&g, vec![(Label::new(0, 0, 1), c.clone())], 1).unwrap();
        let v = normal_field(&x, &emb).unwrap();
        assert!((&v.x[2] + &c).max_abs() < 1e-18);
        assert!(v.x[0].max_abs() == 0.0 && v.y.iter().all(|f| f.max_abs() == 0.0));
    }
}
