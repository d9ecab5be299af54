//! Edge-degenerate differential forms in the basis `dr, r dsigma, du`.
//!
//! Components are labelled `(a, p, e)`: `a` flags the `dr` factor, `p` the
//! X-degree and `e` the E-degree. Only the desk specialisation `m = 1`,
//! `q <= 1` is supported.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ModelGrid, ScalarField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Label {
    pub a: u8,
    pub p: u8,
    pub e: u8,
}

impl Label {
    pub const fn new(a: u8, p: u8, e: u8) -> Self {
        Self { a, p, e }
    }

    pub fn degree(&self) -> usize {
        (self.a + self.p + self.e) as usize
    }

    /// Basis positions present in the label (0 = dr, 1 = r dsigma, 2 = du).
    pub fn slots(&self) -> Vec<usize> {
        [self.a, self.p, self.e]
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn from_slots(slots: &[usize]) -> Self {
        let mut l = Label::new(0, 0, 0);
        for &s in slots {
            match s {
                0 => l.a = 1,
                1 => l.p = 1,
                _ => l.e = 1,
            }
        }
        l
    }

    /// Position in the canonical ordering of all eight labels.
    pub fn canonical_index(&self) -> usize {
        CANONICAL
            .iter()
            .position(|l| l == self)
            .expect("label in canonical table")
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.a, self.p, self.e)
    }
}

impl From<Label> for String {
    fn from(l: Label) -> String {
        l.to_string()
    }
}

impl TryFrom<String> for Label {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<&str> = inner.split(',').map(|x| x.trim()).collect();
        if parts.len() != 3 {
            return Err(Error::Labels(format!("cannot parse label {s:?}")));
        }
        let mut v = [0u8; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Labels(format!("cannot parse label {s:?}")))?;
            if *slot > 1 {
                return Err(Error::Labels(format!("label entries must be 0 or 1: {s}")));
            }
        }
        Ok(Label::new(v[0], v[1], v[2]))
    }
}

/// Degree 0, then `dr, r dsigma, du`, then the 2-forms, then the volume form.
pub const CANONICAL: [Label; 8] = [
    Label::new(0, 0, 0),
    Label::new(1, 0, 0),
    Label::new(0, 1, 0),
    Label::new(0, 0, 1),
    Label::new(1, 1, 0),
    Label::new(1, 0, 1),
    Label::new(0, 1, 1),
    Label::new(1, 1, 1),
];

fn check_dims(grid: &ModelGrid) -> Result<()> {
    if grid.m != 1 || grid.q > 1 {
        return Err(Error::Dimension(format!(
            "forms support m = 1, q <= 1 only (got m = {}, q = {})",
            grid.m, grid.q
        )));
    }
    Ok(())
}

/// All labels on the grid, in canonical order.
pub fn all_labels(grid: &ModelGrid) -> Result<Vec<Label>> {
    check_dims(grid)?;
    Ok(CANONICAL
        .iter()
        .copied()
        .filter(|l| (l.e as usize) <= grid.q)
        .collect())
}

/// Labels of degree `k` in canonical order.
pub fn labels_of_degree(grid: &ModelGrid, k: usize) -> Result<Vec<Label>> {
    let n = grid.m + 1 + grid.q;
    if k > n {
        return Err(Error::DegreeOverflow(k));
    }
    Ok(all_labels(grid)?
        .into_iter()
        .filter(|l| l.degree() == k)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    pub grid: ModelGrid,
    /// `None` for a mixed-degree field.
    pub degree: Option<usize>,
    /// Canonically ordered components.
    pub components: Vec<(Label, ScalarField)>,
}

impl FormField {
    pub fn zeros(grid: &ModelGrid, k: usize) -> Result<Self> {
        let comps = labels_of_degree(grid, k)?
            .into_iter()
            .map(|l| (l, ScalarField::zeros(grid)))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            degree: Some(k),
            components: comps,
        })
    }

    /// Mixed-degree field over every label of the grid.
    pub fn zeros_full(grid: &ModelGrid) -> Result<Self> {
        let comps = all_labels(grid)?
            .into_iter()
            .map(|l| (l, ScalarField::zeros(grid)))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            degree: None,
            components: comps,
        })
    }

    pub fn get(&self, l: Label) -> Option<&ScalarField> {
        self.components
            .iter()
            .find(|(k, _)| *k == l)
            .map(|(_, f)| f)
    }

    pub fn get_mut(&mut self, l: Label) -> Option<&mut ScalarField> {
        self.components
            .iter_mut()
            .find(|(k, _)| *k == l)
            .map(|(_, f)| f)
    }

    pub fn component_or_zero(&self, l: Label) -> ScalarField {
        self.get(l)
            .cloned()
            .unwrap_or_else(|| ScalarField::zeros(&self.grid))
    }

    pub fn labels(&self) -> Vec<Label> {
        self.components.iter().map(|(l, _)| *l).collect()
    }

    /// Embed into the full mixed-degree layout, zero-filling absent labels.
    pub fn to_full(&self) -> Result<FormField> {
        let mut out = FormField::zeros_full(&self.grid)?;
        for (l, f) in &self.components {
            *out.get_mut(*l)
                .ok_or_else(|| Error::Labels(format!("label {l} not on grid")))? = f.clone();
        }
        Ok(out)
    }

    /// Keep only the degree-`k` components.
    pub fn restrict_degree(&self, k: usize) -> Result<FormField> {
        let comps = labels_of_degree(&self.grid, k)?
            .into_iter()
            .map(|l| (l, self.component_or_zero(l)))
            .collect();
        Ok(FormField {
            grid: self.grid.clone(),
            degree: Some(k),
            components: comps,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .map(|(_, f)| f.max_abs())
            .fold(0.0, f64::max)
    }

    /// Root-sum-square of the component L2 norms.
    pub fn l2_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|(_, f)| f.l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, c: Complex64) -> FormField {
        FormField {
            grid: self.grid.clone(),
            degree: self.degree,
            components: self
                .components
                .iter()
                .map(|(l, f)| (*l, f.scale(c)))
                .collect(),
        }
    }

    /// Componentwise sum over the union of labels.
    pub fn add(&self, o: &FormField) -> Result<FormField> {
        if self.grid != o.grid {
            return Err(Error::Dimension("form grids differ".into()));
        }
        let mut out = self.to_full()?;
        for (l, f) in &o.components {
            let slot = out.get_mut(*l).expect("full layout");
            *slot = &*slot + f;
        }
        let degree = if self.degree == o.degree {
            self.degree
        } else {
            None
        };
        match degree {
            Some(k) => out.restrict_degree(k),
            None => Ok(out),
        }
    }

    pub fn sub(&self, o: &FormField) -> Result<FormField> {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }
}

/// Build the canonical component table of a degree-`k` form from raw labelled data.
pub fn decompose_form(
    grid: &ModelGrid,
    raw: Vec<(Label, ScalarField)>,
    k: usize,
) -> Result<FormField> {
    let mut out = FormField::zeros(grid, k)?;
    let mut seen = Vec::new();
    for (l, f) in raw {
        if l.degree() != k {
            return Err(Error::Labels(format!(
                "label {l} has degree {}, expected {k}",
                l.degree()
            )));
        }
        if (l.p as usize) > grid.m || (l.e as usize) > grid.q {
            return Err(Error::Labels(format!(
                "label {l} exceeds m = {}, q = {}",
                grid.m, grid.q
            )));
        }
        if seen.contains(&l) {
            return Err(Error::Labels(format!("duplicate label {l}")));
        }
        if f.grid != *grid {
            return Err(Error::Dimension(format!(
                "component {l} lives on a different grid"
            )));
        }
        seen.push(l);
        *out.get_mut(l).expect("label of degree k") = f;
    }
    Ok(out)
}

/// Sign of the permutation sorting `seq` (entries distinct).
pub fn permutation_sign(seq: &[usize]) -> f64 {
    let mut inv = 0;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] > seq[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Exterior product; the degenerate basis is orthonormal so no extra r-powers arise.
pub fn wedge(alpha: &FormField, beta: &FormField) -> Result<FormField> {
    if alpha.grid != beta.grid {
        return Err(Error::Dimension("form grids differ".into()));
    }
    let n = alpha.grid.m + 1 + alpha.grid.q;
    let (ka, kb) = match (alpha.degree, beta.degree) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Labels("wedge needs forms of definite degree".into())),
    };
    if ka + kb > n {
        return Err(Error::DegreeOverflow(ka + kb));
    }
    let mut out = FormField::zeros(&alpha.grid, ka + kb)?;
    for (li, f) in &alpha.components {
        for (lj, g) in &beta.components {
            let (si, sj) = (li.slots(), lj.slots());
            if si.iter().any(|s| sj.contains(s)) {
                continue;
            }
            let seq: Vec<usize> = si.iter().chain(&sj).copied().collect();
            let sign = permutation_sign(&seq);
            let target = Label::from_slots(&seq);
            let prod = &(f * g) * sign;
            let slot = out.get_mut(target).expect("target label on grid");
            *slot = &*slot + &prod;
        }
    }
    Ok(out)
}

/// Vector field `X^r d_r + X^sigma d_sigma + X^u d_u` in coordinate components.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub r: ScalarField,
    pub sigma: ScalarField,
    pub u: Option<ScalarField>,
}

fn require_degree(xi: &FormField, k: usize) -> Result<()> {
    match xi.degree {
        Some(d) if d == k => Ok(()),
        Some(d) => Err(Error::Degree {
            expected: k,
            got: d,
        }),
        None => Err(Error::Labels(
            "mixed-degree form where a definite degree is required".into(),
        )),
    }
}

/// Raise a 1-form with the dual edge metric `dr^2 + r^2 g_X + g_E`.
pub fn sharp(xi: &FormField) -> Result<VectorField> {
    require_degree(xi, 1)?;
    check_dims(&xi.grid)?;
    let inv_r: Vec<f64> = xi.grid.t_nodes().iter().map(|t| t.exp()).collect();
    Ok(VectorField {
        r: xi.component_or_zero(Label::new(1, 0, 0)),
        sigma: xi.component_or_zero(Label::new(0, 1, 0)).mul_radial(&inv_r),
        u: (xi.grid.q == 1).then(|| xi.component_or_zero(Label::new(0, 0, 1))),
    })
}

/// Lower a vector field to a 1-form; inverse of [`sharp`].
pub fn flat(v: &VectorField) -> Result<FormField> {
    let grid = v.r.grid.clone();
    let r: Vec<f64> = grid.r_nodes();
    let mut raw = vec![
        (Label::new(1, 0, 0), v.r.clone()),
        (Label::new(0, 1, 0), v.sigma.mul_radial(&r)),
    ];
    if let Some(u) = &v.u {
        raw.push((Label::new(0, 0, 1), u.clone()));
    }
    decompose_form(&grid, raw, 1)
}
