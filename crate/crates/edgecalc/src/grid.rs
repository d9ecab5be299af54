//! Discretization of the local edge model `[0, eps) x X x E` in the
//! logarithmic radial coordinate `t = -log r`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Relative spectral energy above which a field counts as not band-limited.
pub const TAIL_ENERGY_THRESHOLD: f64 = 1e-20;

/// Relative amplitude below which a field counts as decayed at the window ends.
pub const DECAY_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub m: usize,
    pub q: usize,
    #[serde(rename = "T")]
    pub t_half: f64,
    pub n_t: usize,
    pub n_sigma: usize,
    pub n_u: usize,
    pub eps: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// Validated grid constructor.
#[allow(clippy::too_many_arguments)]
pub fn make_model_grid(
    m: usize,
    q: usize,
    t_half: f64,
    n_t: usize,
    n_sigma: usize,
    n_u: usize,
    eps: f64,
    eps1: f64,
    eps2: f64,
) -> Result<ModelGrid> {
    let g = ModelGrid {
        m,
        q,
        t_half,
        n_t,
        n_sigma,
        n_u,
        eps,
        eps1,
        eps2,
    };
    g.validate()?;
    Ok(g)
}

fn pow2_at_least_8(n: usize) -> bool {
    n >= 8 && n.is_power_of_two()
}

impl ModelGrid {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Grid("m must be at least 1".into()));
        }
        for (name, n) in [
            ("N_t", self.n_t),
            ("N_sigma", self.n_sigma),
            ("N_u", self.n_u),
        ] {
            if !pow2_at_least_8(n) {
                return Err(Error::Grid(format!(
                    "{name} = {n} is not a power of two >= 8"
                )));
            }
        }
        if !(self.t_half.is_finite() && self.t_half > 0.0) {
            return Err(Error::Grid("T must be positive".into()));
        }
        if !(0.0 < self.eps1 && self.eps1 < self.eps2 && self.eps2 <= self.eps && self.eps < 1.0) {
            return Err(Error::CutoffOrdering);
        }
        Ok(())
    }

    /// The same grid without edge axes, used for fields on the model cone.
    pub fn cone_factor(&self) -> ModelGrid {
        ModelGrid {
            q: 0,
            ..self.clone()
        }
    }

    /// Grid with every sample count multiplied by `factor` (a power of two).
    pub fn refined(&self, factor: usize) -> ModelGrid {
        ModelGrid {
            n_t: self.n_t * factor,
            n_sigma: self.n_sigma * factor,
            n_u: self.n_u * factor,
            ..self.clone()
        }
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.t_half / self.n_t as f64
    }

    pub fn dsigma(&self) -> f64 {
        2.0 * PI / self.n_sigma as f64
    }

    pub fn du(&self) -> f64 {
        2.0 * PI / self.n_u as f64
    }

    pub fn t_node(&self, j: usize) -> f64 {
        -self.t_half + j as f64 * self.dt()
    }

    pub fn t_nodes(&self) -> Vec<f64> {
        (0..self.n_t).map(|j| self.t_node(j)).collect()
    }

    pub fn r_nodes(&self) -> Vec<f64> {
        self.t_nodes().into_iter().map(|t| (-t).exp()).collect()
    }

    pub fn sigma_nodes(&self) -> Vec<f64> {
        (0..self.n_sigma)
            .map(|i| i as f64 * self.dsigma())
            .collect()
    }

    pub fn u_nodes(&self) -> Vec<f64> {
        (0..self.n_u).map(|i| i as f64 * self.du()).collect()
    }

    /// Array shape: t, then m sigma axes, then q edge axes.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.n_t];
        s.extend(std::iter::repeat_n(self.n_sigma, self.m));
        s.extend(std::iter::repeat_n(self.n_u, self.q));
        s
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of samples per radial node.
    pub fn slice_len(&self) -> usize {
        self.n_sigma.pow(self.m as u32) * self.n_u.pow(self.q as u32)
    }

    /// Cross-section volume element `dsigma^m du^q`.
    pub fn cell_volume(&self) -> f64 {
        self.dsigma().powi(self.m as i32) * self.du().powi(self.q as i32)
    }

    /// Cut-off `omega(r)`: 1 for r < eps1, 0 for r >= eps2, smooth monotone step in log r between.
    pub fn cutoff(&self, r: f64) -> f64 {
        smooth_step((self.eps2.ln() - r.ln()) / (self.eps2.ln() - self.eps1.ln()))
    }

    pub fn cutoff_t(&self, t: f64) -> f64 {
        self.cutoff((-t).exp())
    }

    pub fn cutoff_nodes(&self) -> Vec<f64> {
        self.t_nodes()
            .into_iter()
            .map(|t| self.cutoff_t(t))
            .collect()
    }

    /// Coordinates of the sample at flat index `idx`.
    pub fn coords(&self, idx: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let shape = self.shape();
        let mut ix = vec![0usize; shape.len()];
        fft::unravel(idx, &shape, &mut ix);
        let t = self.t_node(ix[0]);
        let sig = ix[1..=self.m]
            .iter()
            .map(|&i| i as f64 * self.dsigma())
            .collect();
        let u = ix[1 + self.m..]
            .iter()
            .map(|&i| i as f64 * self.du())
            .collect();
        (t, sig, u)
    }
}

/// C-infinity step: 0 for x <= 0, 1 for x >= 1.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    T,
    Sigma(usize),
    U(usize),
}

impl Axis {
    pub fn index(self, grid: &ModelGrid) -> Result<usize> {
        match self {
            Axis::T => Ok(0),
            Axis::Sigma(k) if k < grid.m => Ok(1 + k),
            Axis::U(l) if l < grid.q => Ok(1 + grid.m + l),
            _ => Err(Error::Invalid(format!("axis {self:?} not present on grid"))),
        }
    }

    fn length(self, grid: &ModelGrid) -> f64 {
        match self {
            Axis::T => 2.0 * grid.t_half,
            _ => 2.0 * PI,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: ModelGrid,
    pub values: Vec<Complex64>,
}

impl ScalarField {
    pub fn new(grid: ModelGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "sample count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::Invalid("non-finite sample".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &ModelGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Sample `f(t, sigma, u)` at every node.
    pub fn from_fn<F>(grid: &ModelGrid, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> Complex64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (t, s, u) = grid.coords(i);
                f(t, &s, &u)
            })
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn map<F: Fn(Complex64) -> Complex64 + Sync>(&self, f: F) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    /// Multiply every radial slice by `w[j]`.
    pub fn mul_radial(&self, w: &[f64]) -> Self {
        let sl = self.grid.slice_len();
        let mut out = self.clone();
        out.values
            .par_chunks_mut(sl)
            .zip(w.par_iter())
            .for_each(|(c, &wj)| {
                for v in c.iter_mut() {
                    *v *= wj;
                }
            });
        out
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|v| v * c)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Plain discrete L2 norm with measure `dt dsigma^m du^q`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (s * self.grid.dt() * self.grid.cell_volume()).sqrt()
    }

    /// Radial slice `j` (all cross-section samples at t_j).
    pub fn slice(&self, j: usize) -> &[Complex64] {
        let sl = self.grid.slice_len();
        &self.values[j * sl..(j + 1) * sl]
    }

    /// Largest modulus on the first and last radial slice relative to the field maximum.
    pub fn end_ratio(&self) -> f64 {
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        let first = self.slice(0).iter().map(|v| v.norm()).fold(0.0, f64::max);
        let last = self
            .slice(self.grid.n_t - 1)
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        first.max(last) / max
    }

    /// Fourier coefficient field `(2 pi)^{-q} \int e^{-i eta.u} f du` on the cone factor.
    pub fn edge_mode(&self, eta: &[i64]) -> Result<ScalarField> {
        let g = &self.grid;
        if eta.len() != g.q {
            return Err(Error::Dimension(format!(
                "eta has {} entries, q = {}",
                eta.len(),
                g.q
            )));
        }
        let cone = g.cone_factor();
        let nu = g.n_u.pow(g.q as u32);
        let u = g.u_nodes();
        let mut phase = vec![Complex64::new(0.0, 0.0); nu];
        let mut ix = vec![0usize; g.q];
        let ushape = vec![g.n_u; g.q];
        for (flat, p) in phase.iter_mut().enumerate() {
            fft::unravel(flat, &ushape, &mut ix);
            let arg: f64 = ix.iter().zip(eta).map(|(&i, &e)| -(e as f64) * u[i]).sum();
            *p = Complex64::from_polar(1.0 / nu as f64, arg);
        }
        let values = self
            .values
            .par_chunks(nu)
            .map(|c| c.iter().zip(&phase).map(|(a, b)| a * b).sum())
            .collect();
        Ok(ScalarField { grid: cone, values })
    }

    /// Band-limit diagnostic: fraction of spectral energy with |mode| >= N/4 on any axis.
    pub fn tail_energy(&self) -> f64 {
        let shape = self.grid.shape();
        let mut spec = self.values.clone();
        fft::forward_all(&mut spec, &shape);
        let mut ix = vec![0usize; shape.len()];
        let (mut total, mut tail) = (0.0, 0.0);
        for (flat, v) in spec.iter().enumerate() {
            let e = v.norm_sqr();
            total += e;
            fft::unravel(flat, &shape, &mut ix);
            if ix
                .iter()
                .zip(&shape)
                .any(|(&k, &n)| fft::signed_mode(k, n).unsigned_abs() as usize >= n / 4)
            {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, o: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, o.grid, "grid mismatch");
        ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&o.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, o: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, o.grid, "grid mismatch");
        ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&o.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    /// Pointwise product without dealiasing.
    fn mul(self, o: &ScalarField) -> ScalarField {
        assert_eq!(self.grid, o.grid, "grid mismatch");
        ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&o.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, c: f64) -> ScalarField {
        self.scale(Complex64::new(c, 0.0))
    }
}

#[derive(Clone, Debug)]
pub struct Derivative {
    pub field: ScalarField,
    /// Spectral energy fraction in the upper half of the band along the axis.
    pub tail_energy: f64,
    /// Set when the input is not band-limited to half the Nyquist mode.
    pub warning: bool,
}

/// Spectral derivative along one axis.
pub fn spectral_derivative(f: &ScalarField, axis: Axis) -> Result<Derivative> {
    let a = axis.index(&f.grid)?;
    let shape = f.grid.shape();
    let n = shape[a];
    let inner: usize = shape[a + 1..].iter().product();
    let scale = 2.0 * PI / axis.length(&f.grid);
    let mut spec = f.values.clone();
    fft::fft_axis(&mut spec, &shape, a, false);
    let (mut total, mut tail) = (0.0, 0.0);
    for (flat, v) in spec.iter_mut().enumerate() {
        let k = (flat / inner) % n;
        let e = v.norm_sqr();
        total += e;
        if fft::signed_mode(k, n).unsigned_abs() as usize >= n / 4 {
            tail += e;
        }
        *v *= Complex64::new(0.0, scale * fft::derivative_mode(k, n));
    }
    fft::fft_axis(&mut spec, &shape, a, true);
    let inv = 1.0 / n as f64;
    spec.iter_mut().for_each(|v| *v *= inv);
    let tail_energy = if total == 0.0 { 0.0 } else { tail / total };
    Ok(Derivative {
        field: ScalarField {
            grid: f.grid.clone(),
            values: spec,
        },
        tail_energy,
        warning: tail_energy > TAIL_ENERGY_THRESHOLD,
    })
}

/// `d/dr = -e^t d/dt` via the chain rule.
pub fn radial_derivative(f: &ScalarField) -> Result<Derivative> {
    let mut d = spectral_derivative(f, Axis::T)?;
    let w: Vec<f64> = f.grid.t_nodes().iter().map(|t| -t.exp()).collect();
    d.field = d.field.mul_radial(&w);
    Ok(d)
}

/// Derivative without diagnostics for internal use.
pub(crate) fn diff(f: &ScalarField, axis: Axis) -> ScalarField {
    spectral_derivative(f, axis).expect("axis present").field
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> ModelGrid {
        make_model_grid(1, 1, 8.0, 128, 32, 32, 0.5, 0.1, 0.3).unwrap()
    }

    #[test]
    fn example_grid_extent() {
        let g = make_model_grid(1, 1, 12.0, 256, 64, 64, 0.5, 0.1, 0.3).unwrap();
        let r = g.r_nodes();
        assert!((r[0] - 12f64.exp()).abs() < 1e-9 * 12f64.exp());
        assert!(r.iter().all(|&x| x >= (-12f64).exp() * (1.0 - 1e-12)));
        assert_eq!(g.len(), 256 * 64 * 64);
    }

    #[test]
    fn cutoff_ordering_rejected() {
        let e = make_model_grid(1, 1, 12.0, 256, 64, 64, 0.5, 0.3, 0.1).unwrap_err();
        assert!(e.to_string().contains("cutoff ordering"));
        assert!(make_model_grid(1, 1, 12.0, 100, 64, 64, 0.5, 0.1, 0.3).is_err());
        assert!(make_model_grid(1, 1, 12.0, 4, 64, 64, 0.5, 0.1, 0.3).is_err());
    }

    #[test]
    fn cutoff_is_one_inside_and_zero_outside() {
        let g = make_model_grid(1, 1, 8.0, 128, 32, 32, 0.5, 0.1, 0.3).unwrap();
        for (r, w) in g.r_nodes().iter().zip(g.cutoff_nodes()) {
            if *r < 0.1 {
                assert_eq!(w, 1.0);
            }
            if *r >= 0.3 {
                assert_eq!(w, 0.0);
            }
        }
        let mut prev = 0.0;
        for t in (0..400).map(|i| -1.0 + i as f64 * 0.01) {
            let w = g.cutoff_t(t);
            assert!(w >= prev);
            prev = w;
        }
    }

    #[test]
    fn derivative_examples() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |_, s, _| Complex64::new(s[0].sin(), 0.0));
        let d = spectral_derivative(&f, Axis::Sigma(0)).unwrap();
        for (i, v) in d.field.values.iter().enumerate() {
            let (_, s, _) = g.coords(i);
            assert!((v - Complex64::new(s[0].cos(), 0.0)).norm() < 1e-12);
        }
        assert!(!d.warning);
        let c = ScalarField::from_fn(&g, |_, _, _| Complex64::new(3.0, 0.0));
        assert!(spectral_derivative(&c, Axis::T).unwrap().field.max_abs() < 1e-12);
        let e = ScalarField::from_fn(&g, |_, _, u| Complex64::from_polar(1.0, 2.0 * u[0]));
        let d = spectral_derivative(&e, Axis::U(0)).unwrap();
        for (i, v) in d.field.values.iter().enumerate() {
            let (_, _, u) = g.coords(i);
            assert!(
                (v - Complex64::new(0.0, 2.0) * Complex64::from_polar(1.0, 2.0 * u[0])).norm()
                    < 1e-12
            );
        }
    }

    #[test]
    fn derivative_in_t_of_gaussian() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |t, _, _| Complex64::new((-t * t).exp(), 0.0));
        let d = spectral_derivative(&f, Axis::T).unwrap();
        for (i, v) in d.field.values.iter().enumerate() {
            let (t, _, _) = g.coords(i);
            assert!((v.re + 2.0 * t * (-t * t).exp()).abs() < 1e-11);
        }
        let dr = radial_derivative(&f).unwrap();
        for (i, v) in dr.field.values.iter().enumerate() {
            let (t, _, _) = g.coords(i);
            let exact = 2.0 * t * (-t * t).exp() * t.exp();
            assert!((v.re - exact).abs() < 1e-9 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn tail_warning_for_rough_field() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |_, s, _| {
            Complex64::new(if s[0] < PI { 1.0 } else { 0.0 }, 0.0)
        });
        assert!(spectral_derivative(&f, Axis::Sigma(0)).unwrap().warning);
    }

    #[test]
    fn edge_mode_extracts_coefficient() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |t, _, u| {
            Complex64::new((-t * t).exp(), 0.0) * Complex64::from_polar(2.0, 3.0 * u[0])
        });
        let c = f.edge_mode(&[3]).unwrap();
        assert_eq!(c.grid.q, 0);
        for (j, t) in g.t_nodes().iter().enumerate() {
            assert!((c.slice(j)[0].re - 2.0 * (-t * t).exp()).abs() < 1e-13);
        }
        assert!(f.edge_mode(&[1]).unwrap().max_abs() < 1e-13);
    }
}
