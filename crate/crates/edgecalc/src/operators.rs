//! Edge-degenerate operators in normal form
//! `r^{-l} sum c r^w (-r d_r)^i (r D_u)^alpha d_sigma^j`, stored as block
//! matrices of term lists over form labels.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::forms::{permutation_sign, FormField, Label, CANONICAL};
use crate::grid::{ScalarField, TAIL_ENERGY_THRESHOLD};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `coeff * r^{w-l} (-r d_r)^fuchs (r D_u)^edge d_sigma^sigma`, `l` being the operator order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Complex64,
    pub w: i32,
    pub fuchs: u32,
    pub edge: u32,
    pub sigma: u32,
}

impl Term {
    pub fn new(coeff: Complex64, w: i32, fuchs: u32, edge: u32, sigma: u32) -> Self {
        Self {
            coeff,
            w,
            fuchs,
            edge,
            sigma,
        }
    }

    pub fn real(c: f64, fuchs: u32, edge: u32, sigma: u32) -> Self {
        Self::new(Complex64::new(c, 0.0), 0, fuchs, edge, sigma)
    }

    /// Differential order `i + |alpha| + j`.
    pub fn diff_order(&self) -> u32 {
        self.fuchs + self.edge + self.sigma
    }

    fn key(&self) -> (i32, u32, u32, u32) {
        (self.w, self.fuchs, self.edge, self.sigma)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients of `(D + a)^n` in ascending powers of D.
fn shifted_power(a: f64, n: u32) -> Vec<f64> {
    (0..=n)
        .map(|k| binomial(n, k) * a.powi((n - k) as i32))
        .collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Merge like terms and drop vanishing ones.
pub fn simplify(terms: &[Term]) -> Vec<Term> {
    let mut map: BTreeMap<(i32, u32, u32, u32), Complex64> = BTreeMap::new();
    for t in terms {
        *map.entry(t.key()).or_insert(ZERO) += t.coeff;
    }
    map.into_iter()
        .filter(|(_, c)| c.norm() > 1e-14)
        .map(|((w, fuchs, edge, sigma), coeff)| Term {
            coeff,
            w,
            fuchs,
            edge,
            sigma,
        })
        .collect()
}

/// `t1 o t2` for terms of operators with orders `l1`, `l2`; the result belongs to order `l1 + l2`.
///
/// Uses `D r^c = r^c (D - c)` and `(r D_u)^a D = (D + a) (r D_u)^a` with `D = -r d_r`.
pub fn compose_terms(t1: &Term, l1: u32, t2: &Term, l2: u32) -> Vec<Term> {
    let _ = l1;
    let c = (t2.w - l2 as i32) as f64;
    let poly = poly_mul(
        &shifted_power(-c, t1.fuchs),
        &shifted_power(t1.edge as f64, t2.fuchs),
    );
    let coeff = t1.coeff * t2.coeff;
    poly.iter()
        .enumerate()
        .filter(|(_, p)| **p != 0.0)
        .map(|(i, p)| Term {
            coeff: coeff * *p,
            w: t1.w + t2.w,
            fuchs: i as u32,
            edge: t1.edge + t2.edge,
            sigma: t1.sigma + t2.sigma,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "OperatorRepr", try_from = "OperatorRepr")]
pub struct EdgeOperator {
    pub order: u32,
    pub rows: Vec<Label>,
    pub cols: Vec<Label>,
    /// `blocks[row][col]` term list.
    pub blocks: Vec<Vec<Vec<Term>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BlockEntry {
    row: Label,
    col: Label,
    terms: Vec<Term>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct OperatorRepr {
    order: u32,
    rows: Vec<Label>,
    cols: Vec<Label>,
    entries: Vec<BlockEntry>,
}

impl From<EdgeOperator> for OperatorRepr {
    fn from(op: EdgeOperator) -> Self {
        let mut entries = Vec::new();
        for (i, r) in op.rows.iter().enumerate() {
            for (j, c) in op.cols.iter().enumerate() {
                if !op.blocks[i][j].is_empty() {
                    entries.push(BlockEntry {
                        row: *r,
                        col: *c,
                        terms: op.blocks[i][j].clone(),
                    });
                }
            }
        }
        OperatorRepr {
            order: op.order,
            rows: op.rows,
            cols: op.cols,
            entries,
        }
    }
}

impl TryFrom<OperatorRepr> for EdgeOperator {
    type Error = Error;
    fn try_from(r: OperatorRepr) -> Result<Self> {
        let mut op = EdgeOperator::zero(r.order, r.rows, r.cols);
        for e in r.entries {
            let i = op.row_index(e.row)?;
            let j = op.col_index(e.col)?;
            op.blocks[i][j].extend(e.terms);
        }
        op.validate()?;
        Ok(op)
    }
}

impl EdgeOperator {
    pub fn zero(order: u32, rows: Vec<Label>, cols: Vec<Label>) -> Self {
        let blocks = vec![vec![Vec::new(); cols.len()]; rows.len()];
        Self {
            order,
            rows,
            cols,
            blocks,
        }
    }

    pub fn identity(labels: Vec<Label>) -> Self {
        let mut op = Self::zero(0, labels.clone(), labels);
        for i in 0..op.rows.len() {
            op.blocks[i][i].push(Term::real(1.0, 0, 0, 0));
        }
        op
    }

    /// Scalar operator acting on functions (label `(0,0,0)`).
    pub fn scalar(order: u32, terms: Vec<Term>) -> Self {
        let l = vec![Label::new(0, 0, 0)];
        let mut op = Self::zero(order, l.clone(), l);
        op.blocks[0][0] = terms;
        op
    }

    /// `r^{-1}(-r d_r)`.
    pub fn fuchs_first() -> Self {
        Self::scalar(1, vec![Term::real(1.0, 1, 0, 0)])
    }

    /// `r^{-2}((-r d_r)^2 - k^2)`.
    pub fn fuchs_second(k: f64) -> Self {
        Self::scalar(
            2,
            vec![Term::real(1.0, 2, 0, 0), Term::real(-k * k, 0, 0, 0)],
        )
    }

    pub fn row_index(&self, l: Label) -> Result<usize> {
        self.rows
            .iter()
            .position(|x| *x == l)
            .ok_or_else(|| Error::Labels(format!("row {l} absent")))
    }

    pub fn col_index(&self, l: Label) -> Result<usize> {
        self.cols
            .iter()
            .position(|x| *x == l)
            .ok_or_else(|| Error::Labels(format!("column {l} absent")))
    }

    pub fn entry(&self, row: Label, col: Label) -> Result<&[Term]> {
        Ok(&self.blocks[self.row_index(row)?][self.col_index(col)?])
    }

    /// Normal-form invariants: `w >= 0` and `i + |alpha| + j <= l` for every term.
    pub fn validate(&self) -> Result<()> {
        if self.blocks.len() != self.rows.len()
            || self.blocks.iter().any(|r| r.len() != self.cols.len())
        {
            return Err(Error::Labels(
                "block matrix shape does not match labels".into(),
            ));
        }
        for row in &self.blocks {
            for t in row.iter().flatten() {
                if t.w < 0 {
                    return Err(Error::Invalid(format!(
                        "negative radial power in term {t:?}"
                    )));
                }
                if t.diff_order() > self.order {
                    return Err(Error::Invalid(format!(
                        "term {t:?} exceeds operator order {}",
                        self.order
                    )));
                }
                if !(t.coeff.re.is_finite() && t.coeff.im.is_finite()) {
                    return Err(Error::Invalid("non-finite coefficient".into()));
                }
            }
        }
        Ok(())
    }

    pub fn simplified(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.blocks {
            for e in row.iter_mut() {
                *e = simplify(e);
            }
        }
        out
    }

    /// The same operator regarded as one of order `l >= self.order`.
    pub fn lifted(&self, l: u32) -> Self {
        let dw = (l - self.order) as i32;
        let mut out = self.clone();
        out.order = l;
        for t in out.blocks.iter_mut().flatten().flatten() {
            t.w += dw;
        }
        out
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for t in out.blocks.iter_mut().flatten().flatten() {
            t.coeff *= c;
        }
        out
    }

    pub fn add(&self, o: &EdgeOperator) -> Result<EdgeOperator> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(Error::Labels("operator shapes differ".into()));
        }
        let l = self.order.max(o.order);
        let (a, b) = (self.lifted(l), o.lifted(l));
        let mut out = a.clone();
        for (i, row) in out.blocks.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                e.extend(b.blocks[i][j].iter().copied());
                *e = simplify(e);
            }
        }
        Ok(out)
    }

    /// `self o other`.
    pub fn compose(&self, other: &EdgeOperator) -> Result<EdgeOperator> {
        if self.cols != other.rows {
            return Err(Error::Labels("inner labels of composition differ".into()));
        }
        let mut out = EdgeOperator::zero(
            self.order + other.order,
            self.rows.clone(),
            other.cols.clone(),
        );
        out.blocks.par_iter_mut().enumerate().for_each(|(i, row)| {
            for (j, e) in row.iter_mut().enumerate() {
                let mut acc = Vec::new();
                for k in 0..self.cols.len() {
                    for t1 in &self.blocks[i][k] {
                        for t2 in &other.blocks[k][j] {
                            acc.extend(compose_terms(t1, self.order, t2, other.order));
                        }
                    }
                }
                *e = simplify(&acc);
            }
        });
        Ok(out)
    }

    /// Sub-operator on the given row and column labels.
    pub fn restrict(&self, rows: &[Label], cols: &[Label]) -> Result<EdgeOperator> {
        let mut out = EdgeOperator::zero(self.order, rows.to_vec(), cols.to_vec());
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in cols.iter().enumerate() {
                out.blocks[i][j] = self.entry(*r, *c)?.to_vec();
            }
        }
        Ok(out)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

/// Labels for the edge dimension `q` (0 or 1) in canonical order.
pub fn frame_labels(q: usize) -> Vec<Label> {
    CANONICAL
        .iter()
        .copied()
        .filter(|l| (l.e as usize) <= q)
        .collect()
}

fn check_q(q: usize) -> Result<()> {
    if q > 1 {
        return Err(Error::Dimension(format!(
            "operators support q <= 1, got {q}"
        )));
    }
    Ok(())
}

/// Exterior derivative in the frame `dr, r dsigma, du` on all degrees.
pub fn exterior_derivative(q: usize) -> Result<EdgeOperator> {
    check_q(q)?;
    let labels = frame_labels(q);
    let mut op = EdgeOperator::zero(1, labels.clone(), labels.clone());
    for (j, col) in labels.iter().enumerate() {
        let slots = col.slots();
        let mut push = |target: Label, t: Term| {
            let i = labels
                .iter()
                .position(|l| *l == target)
                .expect("target label");
            op.blocks[i][j].push(t);
        };
        // frame derivatives: d_r = r^{-1}(-D), r^{-1} d_sigma, d_u = r^{-1} i (r D_u)
        let dirs: [(usize, Term); 3] = [
            (0, Term::real(-1.0, 1, 0, 0)),
            (1, Term::real(1.0, 0, 0, 1)),
            (2, Term::new(Complex64::new(0.0, 1.0), 0, 0, 1, 0)),
        ];
        for (slot, t) in dirs {
            if slot == 2 && q == 0 {
                continue;
            }
            if slots.contains(&slot) {
                continue;
            }
            let below = slots.iter().filter(|&&s| s < slot).count();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            let mut new_slots = slots.clone();
            new_slots.push(slot);
            new_slots.sort();
            push(
                Label::from_slots(&new_slots),
                Term {
                    coeff: t.coeff * sign,
                    ..t
                },
            );
        }
        // d(r dsigma) = r^{-1} dr ^ (r dsigma)
        if col.a == 0 && col.p == 1 {
            push(Label::new(1, col.p, col.e), Term::real(1.0, 0, 0, 0));
        }
    }
    Ok(op)
}

/// Hodge star for the orthonormal frame with volume `dr ^ r dsigma ^ du` (or `dr ^ r dsigma` when q = 0).
pub fn hodge_star(q: usize) -> Result<EdgeOperator> {
    check_q(q)?;
    let labels = frame_labels(q);
    let all: Vec<usize> = if q == 1 { vec![0, 1, 2] } else { vec![0, 1] };
    let mut op = EdgeOperator::zero(0, labels.clone(), labels.clone());
    for (j, col) in labels.iter().enumerate() {
        let s = col.slots();
        let comp: Vec<usize> = all.iter().copied().filter(|x| !s.contains(x)).collect();
        let seq: Vec<usize> = s.iter().chain(&comp).copied().collect();
        let target = Label::from_slots(&comp);
        let i = labels
            .iter()
            .position(|l| *l == target)
            .expect("complement label");
        op.blocks[i][j].push(Term::real(permutation_sign(&seq), 0, 0, 0));
    }
    Ok(op)
}

/// Formal adjoint `d* = (-1)^{n(k+1)+1} * d *` on k-forms.
pub fn codifferential(q: usize) -> Result<EdgeOperator> {
    let n = 2 + q;
    let star = hodge_star(q)?;
    let d = exterior_derivative(q)?;
    let mut op = star.compose(&d)?.compose(&star)?;
    for (j, col) in op.cols.clone().iter().enumerate() {
        let k = col.degree();
        let sign = if (n * (k + 1) + 1) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        for row in op.blocks.iter_mut() {
            for t in row[j].iter_mut() {
                t.coeff *= sign;
            }
        }
    }
    Ok(op)
}

/// `d + d*` on the full form bundle.
pub fn hodge_derham_full(q: usize) -> Result<EdgeOperator> {
    exterior_derivative(q)?.add(&codifferential(q)?)
}

/// Hodge Laplacian on the full bundle from its closed form: the scalar Laplacian
/// `r^{-2}(-D^2 - d_sigma^2 + (r D_u)^2)` on every component plus the polar
/// coupling of the `(dr, r dsigma)` pair.
pub fn hodge_laplace_full(q: usize) -> Result<EdgeOperator> {
    check_q(q)?;
    let labels = frame_labels(q);
    let mut op = EdgeOperator::zero(2, labels.clone(), labels.clone());
    let scalar = [
        Term::real(-1.0, 2, 0, 0),
        Term::real(-1.0, 0, 0, 2),
        Term::real(1.0, 0, 2, 0),
    ];
    let n = if q == 1 { 3 } else { 2 };
    for i in 0..labels.len() {
        op.blocks[i][i].extend(&scalar[..n]);
    }
    for e in 0..=q as u8 {
        let a = op.row_index(Label::new(1, 0, e))?;
        let b = op.row_index(Label::new(0, 1, e))?;
        op.blocks[a][a].push(Term::real(1.0, 0, 0, 0));
        op.blocks[b][b].push(Term::real(1.0, 0, 0, 0));
        op.blocks[a][b].push(Term::real(2.0, 0, 0, 1));
        op.blocks[b][a].push(Term::real(-2.0, 0, 0, 1));
    }
    Ok(op.simplified())
}

fn desk_degree(k: usize) -> Result<()> {
    if k > 3 {
        return Err(Error::DegreeOverflow(k));
    }
    Ok(())
}

/// `d + d*` on degree-k forms (m = q = 1), mapping into degrees `k-1` and `k+1`.
pub fn assemble_hodge_derham(k: usize) -> Result<EdgeOperator> {
    desk_degree(k)?;
    let full = hodge_derham_full(1)?;
    let cols: Vec<Label> = CANONICAL
        .iter()
        .copied()
        .filter(|l| l.degree() == k)
        .collect();
    let rows: Vec<Label> = CANONICAL
        .iter()
        .copied()
        .filter(|l| l.degree() + 1 == k || l.degree() == k + 1)
        .collect();
    full.restrict(&rows, &cols)
}

/// Hodge Laplacian on degree-k forms (m = q = 1).
pub fn assemble_hodge_laplace(k: usize) -> Result<EdgeOperator> {
    desk_degree(k)?;
    let full = hodge_laplace_full(1)?;
    let labels: Vec<Label> = CANONICAL
        .iter()
        .copied()
        .filter(|l| l.degree() == k)
        .collect();
    full.restrict(&labels, &labels)
}

/// Output of [`apply`].
#[derive(Clone, Debug)]
pub struct Applied {
    pub field: FormField,
    pub tail_energy: f64,
    /// Input not band-limited to half the Nyquist mode on some axis.
    pub warning: bool,
}

/// Source of the edge covariable in `(r D_u)^alpha`.
#[derive(Clone, Copy, Debug)]
pub(crate) enum EdgeCovariable<'a> {
    /// Fourier modes of the grid's edge axis.
    Modes,
    /// A fixed value (edge symbol); terms with `w > 0` are dropped.
    Frozen(&'a [f64]),
}

fn degree_of(labels: &[Label]) -> Option<usize> {
    let d = labels.first()?.degree();
    labels.iter().all(|l| l.degree() == d).then_some(d)
}

pub(crate) fn apply_with(
    p: &EdgeOperator,
    f: &FormField,
    cov: EdgeCovariable<'_>,
) -> Result<Applied> {
    p.validate()?;
    let g = &f.grid;
    if g.m != 1 || g.q > 1 {
        return Err(Error::Dimension(
            "operators act on grids with m = 1, q <= 1".into(),
        ));
    }
    if let Some(k) = f.degree {
        if let Some(c) = p.cols.iter().find(|c| c.degree() != k) {
            return Err(Error::Degree {
                expected: c.degree(),
                got: k,
            });
        }
    }
    for (l, _) in &f.components {
        if !p.cols.contains(l) && f.get(*l).map(|c| c.max_abs() > 0.0).unwrap_or(false) {
            return Err(Error::Labels(format!(
                "operator has no column for component {l}"
            )));
        }
    }
    let shape = g.shape();
    let (nt, ns) = (g.n_t, g.n_sigma);
    let nu = if g.q == 1 { g.n_u } else { 1 };
    let eta = match cov {
        EdgeCovariable::Modes => None,
        EdgeCovariable::Frozen(e) => Some(e.first().copied().unwrap_or(0.0)),
    };
    let rho: Vec<f64> = (0..nt)
        .map(|l| PI * fft::derivative_mode(l, nt) / g.t_half)
        .collect();
    let ks: Vec<f64> = (0..ns).map(|b| fft::derivative_mode(b, ns)).collect();
    let ku: Vec<f64> = (0..nu)
        .map(|b| {
            if g.q == 1 {
                fft::derivative_mode(b, nu)
            } else {
                0.0
            }
        })
        .collect();

    let mut tail = 0.0f64;
    let spectra: Vec<Option<Vec<Complex64>>> = p
        .cols
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let used = p.blocks.iter().any(|row| !row[j].is_empty());
            match f.get(*c) {
                Some(comp) if used && comp.max_abs() > 0.0 => {
                    tail = tail.max(comp.tail_energy());
                    let mut s = comp.values.clone();
                    fft::forward_all(&mut s, &shape);
                    Some(s)
                }
                _ => None,
            }
        })
        .collect();

    let t_nodes = g.t_nodes();
    let sl = g.slice_len();
    let rows: Vec<(Label, ScalarField)> = p
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, rl)| {
            let mut groups: BTreeMap<i32, Vec<(usize, Term)>> = BTreeMap::new();
            for (j, terms) in p.blocks[i].iter().enumerate() {
                if spectra[j].is_none() {
                    continue;
                }
                for t in terms {
                    if eta.is_some() && t.w > 0 {
                        continue;
                    }
                    let expo = p.order as i32 - t.w - t.edge as i32;
                    groups.entry(expo).or_default().push((j, *t));
                }
            }
            let mut out = vec![ZERO; g.len()];
            for (expo, terms) in groups {
                let mut acc = vec![ZERO; g.len()];
                acc.par_chunks_mut(sl).enumerate().for_each(|(l, chunk)| {
                    let it = Complex64::new(0.0, rho[l]);
                    for (rem, v) in chunk.iter_mut().enumerate() {
                        let (s, u) = (rem / nu, rem % nu);
                        let kedge = eta.unwrap_or(ku[u]);
                        let mut sum = ZERO;
                        for (j, t) in &terms {
                            let a = t.edge as f64;
                            let m = t.coeff
                                * (it - a).powu(t.fuchs)
                                * kedge.powi(t.edge as i32)
                                * Complex64::new(0.0, ks[s]).powu(t.sigma);
                            sum += m * spectra[*j].as_ref().expect("used column")[l * sl + rem];
                        }
                        *v = sum;
                    }
                });
                fft::inverse_all(&mut acc, &shape);
                out.par_chunks_mut(sl)
                    .zip(acc.par_chunks(sl))
                    .enumerate()
                    .for_each(|(l, (o, a))| {
                        let wgt = (expo as f64 * t_nodes[l]).exp();
                        for (x, y) in o.iter_mut().zip(a) {
                            *x += y * wgt;
                        }
                    });
            }
            (
                *rl,
                ScalarField {
                    grid: g.clone(),
                    values: out,
                },
            )
        })
        .collect();
    Ok(Applied {
        field: FormField {
            grid: g.clone(),
            degree: degree_of(&p.rows),
            components: rows,
        },
        tail_energy: tail,
        warning: tail > TAIL_ENERGY_THRESHOLD,
    })
}

/// Evaluate every term spectrally in `t = -log r`.
pub fn apply(p: &EdgeOperator, f: &FormField) -> Result<Applied> {
    apply_with(p, f, EdgeCovariable::Modes)
}

/// Cross-section factor of a normal-form coefficient, with the sign convention
/// `d_X = d_sigma`, `d*_X = -d_sigma`, `Delta_X = -d_sigma^2` on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum XFactor {
    Id,
    DX,
    DStarX,
    LaplaceX,
    /// `d_sigma^j` not matching one of the named factors.
    Sigma(u32),
}

/// One coefficient `a_{i,alpha}(r) = sum c r^w X-factor` of the normal form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuchsCoefficient {
    pub row: Label,
    pub col: Label,
    pub fuchs: u32,
    pub edge: u32,
    pub w: i32,
    pub x_factor: XFactor,
    pub coeff: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuchsTable {
    pub order: u32,
    pub rows: Vec<Label>,
    pub cols: Vec<Label>,
    pub coefficients: Vec<FuchsCoefficient>,
}

fn x_factor(row: Label, col: Label, sigma: u32, coeff: Complex64) -> (XFactor, Complex64) {
    match sigma {
        0 => (XFactor::Id, coeff),
        1 if row.p > col.p => (XFactor::DX, coeff),
        1 if row.p < col.p => (XFactor::DStarX, -coeff),
        2 => (XFactor::LaplaceX, -coeff),
        j => (XFactor::Sigma(j), coeff),
    }
}

fn sigma_of(f: XFactor, coeff: Complex64) -> (u32, Complex64) {
    match f {
        XFactor::Id => (0, coeff),
        XFactor::DX => (1, coeff),
        XFactor::DStarX => (1, -coeff),
        XFactor::LaplaceX => (2, -coeff),
        XFactor::Sigma(j) => (j, coeff),
    }
}

/// Coefficient table `a_{i,alpha}` with cross-section factors resolved.
pub fn fuchs_normal_form(p: &EdgeOperator) -> FuchsTable {
    let s = p.simplified();
    let mut coefficients = Vec::new();
    for (i, r) in s.rows.iter().enumerate() {
        for (j, c) in s.cols.iter().enumerate() {
            for t in &s.blocks[i][j] {
                let (x, coeff) = x_factor(*r, *c, t.sigma, t.coeff);
                coefficients.push(FuchsCoefficient {
                    row: *r,
                    col: *c,
                    fuchs: t.fuchs,
                    edge: t.edge,
                    w: t.w,
                    x_factor: x,
                    coeff,
                });
            }
        }
    }
    FuchsTable {
        order: s.order,
        rows: s.rows,
        cols: s.cols,
        coefficients,
    }
}

/// Inverse of [`fuchs_normal_form`].
pub fn from_normal_form(table: &FuchsTable) -> Result<EdgeOperator> {
    let mut op = EdgeOperator::zero(table.order, table.rows.clone(), table.cols.clone());
    for c in &table.coefficients {
        let (sigma, coeff) = sigma_of(c.x_factor, c.coeff);
        let i = op.row_index(c.row)?;
        let j = op.col_index(c.col)?;
        op.blocks[i][j].push(Term {
            coeff,
            w: c.w,
            fuchs: c.fuchs,
            edge: c.edge,
            sigma,
        });
    }
    op.validate()?;
    Ok(op.simplified())
}

/// Named operators accepted by the command line.
pub fn named_operator(name: &str, degree: Option<usize>) -> Result<EdgeOperator> {
    let need = |d: Option<usize>| {
        d.ok_or_else(|| Error::Invalid(format!("operator {name} needs --degree")))
    };
    match name {
        "hodge-derham" => match degree {
            Some(k) => assemble_hodge_derham(k),
            None => hodge_derham_full(1),
        },
        "hodge-laplace" => match degree {
            Some(k) => assemble_hodge_laplace(k),
            None => hodge_laplace_full(1),
        },
        "d" => exterior_derivative(1),
        "fuchs-first" => Ok(EdgeOperator::fuchs_first()),
        "fuchs-second" => Ok(EdgeOperator::fuchs_second(need(degree)? as f64)),
        "identity" => Ok(EdgeOperator::identity(vec![Label::new(0, 0, 0)])),
        other => Err(Error::Invalid(format!("unknown operator {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::decompose_form;
    use crate::grid::{make_model_grid, ModelGrid};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn grid() -> ModelGrid {
        make_model_grid(1, 1, 5.0, 128, 16, 16, 0.5, 0.1, 0.3).unwrap()
    }

    fn bump(g: &ModelGrid, k: f64) -> ScalarField {
        ScalarField::from_fn(g, move |t, s, u| {
            Complex64::new((-2.0 * t * t).exp(), 0.0)
                * Complex64::new(1.0 + k * s[0].cos(), 0.3 * (2.0 * u[0]).sin() + 0.1 * k)
        })
    }

    #[test]
    fn composition_rule_matches_direct_computation() {
        // r^{-1}D o r^{-1}D = r^{-2}(D + 1)D = r^{-2}(D^2 + D)
        let a = EdgeOperator::fuchs_first();
        let sq = a.compose(&a).unwrap();
        let terms = sq.entry(Label::new(0, 0, 0), Label::new(0, 0, 0)).unwrap();
        assert_eq!(terms.len(), 2);
        assert!(terms.contains(&Term::real(1.0, 2, 0, 0)));
        assert!(terms.contains(&Term::real(1.0, 1, 0, 0)));
    }

    #[test]
    fn d_squared_vanishes_and_laplacian_matches_composition() {
        for q in [0, 1] {
            let d = exterior_derivative(q).unwrap();
            let dd = d.compose(&d).unwrap();
            assert!(dd.blocks.iter().flatten().all(|e| e.is_empty()));
            let h = hodge_derham_full(q).unwrap();
            let hh = h.compose(&h).unwrap();
            let lap = hodge_laplace_full(q).unwrap();
            let diff = hh.add(&lap.scaled(c(-1.0))).unwrap();
            assert!(
                diff.blocks.iter().flatten().all(|e| e.is_empty()),
                "q = {q}: {diff:?}"
            );
        }
    }

    #[test]
    fn derham_on_functions_is_gradient() {
        let g = grid();
        let f = decompose_form(&g, vec![(Label::new(0, 0, 0), bump(&g, 0.5))], 0).unwrap();
        let out = apply(&assemble_hodge_derham(0).unwrap(), &f).unwrap();
        assert!(!out.warning);
        let base = bump(&g, 0.5);
        let dr = crate::grid::radial_derivative(&base).unwrap().field;
        let ds = crate::grid::diff(&base, crate::grid::Axis::Sigma(0))
            .mul_radial(&g.t_nodes().iter().map(|t| t.exp()).collect::<Vec<_>>());
        let du = crate::grid::diff(&base, crate::grid::Axis::U(0));
        let scale = dr.max_abs().max(ds.max_abs());
        for (l, want) in [
            (Label::new(1, 0, 0), dr),
            (Label::new(0, 1, 0), ds),
            (Label::new(0, 0, 1), du),
        ] {
            let got = out.field.get(l).unwrap();
            assert!((got - &want).max_abs() < 1e-9 * scale, "{l}");
        }
        let one = ScalarField::from_fn(&g, |_, _, _| c(1.0));
        let f = decompose_form(&g, vec![(Label::new(0, 0, 0), one)], 0).unwrap();
        assert!(
            apply(&assemble_hodge_derham(0).unwrap(), &f)
                .unwrap()
                .field
                .max_abs()
                < 1e-12
        );
    }

    #[test]
    fn paper_b_entries() {
        let h = hodge_derham_full(1).unwrap();
        // k/r + d_r on the r^k dsigma components, d_r on the E-only ones
        let e = h.entry(Label::new(1, 1, 0), Label::new(0, 1, 0)).unwrap();
        assert_eq!(
            simplify(e),
            simplify(&[Term::real(-1.0, 1, 0, 0), Term::real(1.0, 0, 0, 0)])
        );
        let e = h.entry(Label::new(1, 0, 0), Label::new(0, 0, 0)).unwrap();
        assert_eq!(e, &[Term::real(-1.0, 1, 0, 0)]);
        let e = h.entry(Label::new(1, 0, 1), Label::new(0, 0, 1)).unwrap();
        assert_eq!(simplify(e), vec![Term::real(-1.0, 1, 0, 0)]);
    }

    #[test]
    fn identity_and_zero() {
        let g = grid();
        let f = decompose_form(&g, vec![(Label::new(0, 0, 0), bump(&g, 1.0))], 0).unwrap();
        let id = EdgeOperator::identity(vec![Label::new(0, 0, 0)]);
        let out = apply(&id, &f).unwrap().field;
        assert!(out.sub(&f).unwrap().max_abs() < 1e-14);
        let z = FormField::zeros(&g, 1).unwrap();
        assert_eq!(
            apply(&assemble_hodge_derham(1).unwrap(), &z)
                .unwrap()
                .field
                .max_abs(),
            0.0
        );
    }

    #[test]
    fn laplacian_on_edge_only_function() {
        let g = grid();
        // f(u) only: a function with no radial decay is not admissible on the
        // window, so multiply by a flat-top profile and compare away from its edges.
        let f = ScalarField::from_fn(&g, |_, _, u| c((2.0 * u[0]).cos()));
        let ff = decompose_form(&g, vec![(Label::new(0, 0, 0), f.clone())], 0).unwrap();
        let out = apply(&assemble_hodge_laplace(0).unwrap(), &ff)
            .unwrap()
            .field;
        let want = &f * 4.0;
        assert!((out.get(Label::new(0, 0, 0)).unwrap() - &want).max_abs() < 1e-10);
    }

    #[test]
    fn normal_form_round_trip() {
        let t = fuchs_normal_form(&EdgeOperator::fuchs_first());
        assert_eq!(t.coefficients.len(), 1);
        assert_eq!(t.coefficients[0].fuchs, 1);
        assert_eq!(t.coefficients[0].coeff, c(1.0));
        let h = hodge_derham_full(1).unwrap();
        assert_eq!(
            from_normal_form(&fuchs_normal_form(&h)).unwrap(),
            h.simplified()
        );
        let table = fuchs_normal_form(&assemble_hodge_derham(0).unwrap());
        let dr = table
            .coefficients
            .iter()
            .find(|c| c.row == Label::new(1, 0, 0))
            .unwrap();
        assert_eq!((dr.fuchs, dr.coeff), (1, c(-1.0)));
    }

    #[test]
    fn json_round_trip() {
        let h = assemble_hodge_derham(1).unwrap();
        let s = serde_json::to_string(&h).unwrap();
        let back: EdgeOperator = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn invalid_terms_rejected() {
        let op = EdgeOperator::scalar(1, vec![Term::real(1.0, 2, 0, 0)]);
        assert!(op.validate().is_err());
        assert!(matches!(
            assemble_hodge_derham(4),
            Err(Error::DegreeOverflow(4))
        ));
    }
}
