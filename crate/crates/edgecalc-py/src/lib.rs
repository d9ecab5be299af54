//! Python bindings for edgecalc. Reports come back as plain dicts (via their JSON form).

use std::collections::HashMap;
use std::path::PathBuf;

use edgecalc::asymptotics::{fit_conormal_expansion, AsymptoticType};
use edgecalc::deformation::{self, Embedding};
use edgecalc::ensemble::{random_ensemble, random_specs, EnsembleSpec};
use edgecalc::forms::{decompose_form, FormField, Label};
use edgecalc::grid::{make_model_grid, ModelGrid, ScalarField};
use edgecalc::mellin::WeightData;
use edgecalc::operators::{named_operator, EdgeOperator};
use edgecalc::sobolev::{self, EdgeNormForm};
use edgecalc::symbols::{self, Covector, Window};
use edgecalc::verify::{self, PointwiseSpace, ProductTarget};
use edgecalc::{io, Error};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = io::to_json_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn weight(s: f64, gamma: f64) -> PyResult<WeightData> {
    WeightData::new(s, gamma).map_err(err)
}

fn operator(op: &str, degree: Option<usize>) -> PyResult<EdgeOperator> {
    named_operator(op, degree).map_err(err)
}

fn ensemble_spec(t_range: (f64, f64), real: bool) -> EnsembleSpec {
    let mut spec = EnsembleSpec::deep(t_range);
    spec.real = real;
    spec
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyGrid(ModelGrid);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (m=1, q=1, t_half=12.0, n_t=256, n_sigma=16, n_u=16, eps=0.5, eps1=0.1, eps2=0.3))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        m: usize,
        q: usize,
        t_half: f64,
        n_t: usize,
        n_sigma: usize,
        n_u: usize,
        eps: f64,
        eps1: f64,
        eps2: f64,
    ) -> PyResult<Self> {
        make_model_grid(m, q, t_half, n_t, n_sigma, n_u, eps, eps1, eps2)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn q(&self) -> usize {
        self.0.q
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape()
    }

    fn t_nodes(&self) -> Vec<f64> {
        self.0.t_nodes()
    }

    fn cone_factor(&self) -> Self {
        Self(self.0.cone_factor())
    }

    fn refined(&self, factor: usize) -> Self {
        Self(self.0.refined(factor))
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(m={}, q={}, T={}, shape={:?})",
            self.0.m,
            self.0.q,
            self.0.t_half,
            self.0.shape()
        )
    }
}

#[pyclass(name = "Field", from_py_object)]
#[derive(Clone)]
pub struct PyField(ScalarField);

#[pymethods]
impl PyField {
    /// Row-major samples in `(t, sigma.., u..)` order.
    #[staticmethod]
    fn from_values(grid: &PyGrid, values: Vec<Complex64>) -> PyResult<Self> {
        if values.len() != grid.0.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} samples, got {}",
                grid.0.len(),
                values.len()
            )));
        }
        Ok(Self(ScalarField {
            grid: grid.0.clone(),
            values,
        }))
    }

    /// Seeded ensemble of wave packets centred in `t_range`.
    #[staticmethod]
    #[pyo3(signature = (grid, seed, count, t_range=(4.0, 5.0), real=false))]
    fn ensemble(
        grid: &PyGrid,
        seed: u64,
        count: usize,
        t_range: (f64, f64),
        real: bool,
    ) -> Vec<Self> {
        random_ensemble(&grid.0, seed, count, &ensemble_spec(t_range, real))
            .into_iter()
            .map(Self)
            .collect()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::read_scalar_field(&path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_scalar_field(&path, &self.0).map_err(err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid.clone())
    }

    fn values(&self) -> Vec<Complex64> {
        self.0.values.clone()
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    fn l2_norm(&self) -> f64 {
        self.0.l2_norm()
    }

    fn scale(&self, c: Complex64) -> Self {
        Self(ScalarField {
            grid: self.0.grid.clone(),
            values: self.0.values.iter().map(|v| v * c).collect(),
        })
    }

    fn __add__(&self, o: &PyField) -> PyResult<Self> {
        self.check(o)?;
        Ok(Self(&self.0 + &o.0))
    }

    fn __sub__(&self, o: &PyField) -> PyResult<Self> {
        self.check(o)?;
        Ok(Self(&self.0 - &o.0))
    }

    fn __len__(&self) -> usize {
        self.0.values.len()
    }
}

impl PyField {
    fn check(&self, o: &PyField) -> PyResult<()> {
        if self.0.grid != o.0.grid {
            return Err(PyValueError::new_err("fields live on different grids"));
        }
        Ok(())
    }
}

#[pyclass(name = "Form", from_py_object)]
#[derive(Clone)]
pub struct PyForm(FormField);

#[pymethods]
impl PyForm {
    /// Degree-k form from components keyed by `(a, p, e)` in the frame `dr, r dsigma, du`.
    #[staticmethod]
    fn from_components(
        grid: &PyGrid,
        degree: usize,
        components: HashMap<(u8, u8, u8), PyField>,
    ) -> PyResult<Self> {
        let raw = components
            .into_iter()
            .map(|((a, p, e), f)| (Label::new(a, p, e), f.0))
            .collect();
        decompose_form(&grid.0, raw, degree).map(Self).map_err(err)
    }

    /// Real seeded 1-form with one packet per component, scaled by `amp`.
    #[staticmethod]
    #[pyo3(signature = (grid, seed, amp=0.1, t_range=(-0.5, 0.5)))]
    fn random_one_form(grid: &PyGrid, seed: u64, amp: f64, t_range: (f64, f64)) -> PyResult<Self> {
        let g = &grid.0;
        let specs = random_specs(seed, 3, &ensemble_spec(t_range, true), g.m, g.q);
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
        decompose_form(g, raw, 1).map(Self).map_err(err)
    }

    #[getter]
    fn degree(&self) -> Option<usize> {
        self.0.degree
    }

    fn component(&self, label: (u8, u8, u8)) -> PyField {
        PyField(
            self.0
                .component_or_zero(Label::new(label.0, label.1, label.2)),
        )
    }

    fn labels(&self) -> Vec<(u8, u8, u8)> {
        self.0
            .labels()
            .into_iter()
            .map(|l| (l.a, l.p, l.e))
            .collect()
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }
}

#[pyclass(name = "Embedding", from_py_object)]
#[derive(Clone)]
pub struct PyEmbedding(Embedding);

#[pymethods]
impl PyEmbedding {
    /// Cone over the unit circle times a line; `phase=None` picks the calibrating phase.
    #[staticmethod]
    #[pyo3(signature = (phase=None))]
    fn circle_cone(phase: Option<f64>) -> Self {
        let phase =
            phase.unwrap_or_else(|| deformation::calibration_phase(&Embedding::circle_cone(0.0)));
        Self(Embedding::circle_cone(phase))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::read_json(&path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_json(&path, &self.0).map_err(err)
    }

    #[getter]
    fn phase(&self) -> f64 {
        self.0.phase
    }

    fn calibration_phase(&self) -> f64 {
        deformation::calibration_phase(&self.0)
    }

    #[pyo3(signature = (grid, tol=1e-12))]
    fn is_special_lagrangian<'py>(
        &self,
        py: Python<'py>,
        grid: &PyGrid,
        tol: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &deformation::is_special_lagrangian(&self.0, &grid.0, tol).map_err(err)?,
        )
    }

    /// `(P_ImOmega, P_omega)` as a mixed-degree form.
    fn deformation_operator(&self, xi: &PyForm) -> PyResult<PyForm> {
        deformation::deformation_operator(&self.0, &xi.0)
            .map(PyForm)
            .map_err(err)
    }

    #[pyo3(signature = (xi, t, s=3.0, gamma=2.5))]
    fn linearization<'py>(
        &self,
        py: Python<'py>,
        xi: &PyForm,
        t: Vec<f64>,
        s: f64,
        gamma: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &deformation::linearization_fd(&self.0, &xi.0, &t, &weight(s, gamma)?).map_err(err)?,
        )
    }

    #[pyo3(signature = (ensemble, scales=5, s=3.0, gamma=2.5))]
    fn quadratic_remainder<'py>(
        &self,
        py: Python<'py>,
        ensemble: Vec<PyForm>,
        scales: usize,
        s: f64,
        gamma: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let forms: Vec<FormField> = ensemble.into_iter().map(|f| f.0).collect();
        to_py(
            py,
            &deformation::quadratic_remainder(&self.0, &forms, scales, &weight(s, gamma)?)
                .map_err(err)?,
        )
    }
}

#[pyfunction]
#[pyo3(signature = (f, s, shift=0.0))]
fn sobolev_norm(f: &PyField, s: f64, shift: f64) -> PyResult<f64> {
    sobolev::sobolev_norm(&f.0, s, shift).map_err(err)
}

#[pyfunction]
fn cone_norm(f: &PyField, s: f64, gamma: f64) -> PyResult<f64> {
    sobolev::cone_norm_local(&f.0, &weight(s, gamma)?).map_err(err)
}

#[pyfunction]
fn k_norm(f: &PyField, s: f64, gamma: f64) -> PyResult<f64> {
    sobolev::k_norm(&f.0, &weight(s, gamma)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (f, s, gamma, form="global"))]
fn edge_norm(f: &PyField, s: f64, gamma: f64, form: &str) -> PyResult<f64> {
    let form = match form {
        "global" => EdgeNormForm::Global,
        "local" => EdgeNormForm::Local,
        other => return Err(PyValueError::new_err(format!("unknown norm form {other}"))),
    };
    sobolev::edge_norm(&f.0, &weight(s, gamma)?, form).map_err(err)
}

#[pyfunction]
fn group_action(f: &PyField, lam: f64) -> PyResult<PyField> {
    sobolev::group_action(&f.0, lam).map(PyField).map_err(err)
}

/// Roots as `(z, multiplicity, mode)`.
#[pyfunction]
#[pyo3(signature = (op, re, im=(-5.0, 5.0), band_limit=8, degree=None))]
fn indicial_roots(
    op: &str,
    re: (f64, f64),
    im: (f64, f64),
    band_limit: i64,
    degree: Option<usize>,
) -> PyResult<Vec<(Complex64, usize, i64)>> {
    let w = Window::new(re, im).map_err(err)?;
    let roots = symbols::indicial_roots(&operator(op, degree)?, &w, band_limit).map_err(err)?;
    Ok(roots
        .into_iter()
        .map(|r| (r.z, r.multiplicity, r.mode))
        .collect())
}

#[pyfunction]
#[pyo3(signature = (op, gamma, m=1, im=(-5.0, 5.0), band_limit=8, degree=None))]
fn indicial_report<'py>(
    py: Python<'py>,
    op: &str,
    gamma: (f64, f64),
    m: usize,
    im: (f64, f64),
    band_limit: i64,
    degree: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &symbols::indicial_report(&operator(op, degree)?, m, gamma, im, band_limit).map_err(err)?,
    )
}

/// Boundary symbol at `(r, sigma, u, rho, xi, eta)` as nested rows.
#[pyfunction]
#[pyo3(signature = (op, covector, degree=None))]
fn boundary_symbol(
    op: &str,
    covector: (f64, f64, f64, f64, f64, f64),
    degree: Option<usize>,
) -> PyResult<Vec<Vec<Complex64>>> {
    let (r, sigma, u, rho, xi, eta) = covector;
    let m = symbols::boundary_symbol(
        &operator(op, degree)?,
        &Covector {
            r,
            sigma,
            u,
            rho,
            xi,
            eta,
        },
    )
    .map_err(err)?;
    Ok((0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect())
}

#[pyfunction]
#[pyo3(signature = (op, seed, samples=100, degree=None))]
fn check_ellipticity<'py>(
    py: Python<'py>,
    op: &str,
    seed: u64,
    samples: usize,
    degree: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cov = symbols::unit_covectors(seed, samples);
    to_py(
        py,
        &symbols::check_boundary_ellipticity(&operator(op, degree)?, &cov).map_err(err)?,
    )
}

/// Least-squares conormal fit for terms `(p, m_j)` at weight `gamma`.
#[pyfunction]
fn fit_conormal<'py>(
    py: Python<'py>,
    f: &PyField,
    terms: Vec<(Complex64, usize)>,
    gamma: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let o = AsymptoticType::new(terms, gamma, f.0.grid.m).map_err(err)?;
    let fit = fit_conormal_expansion(&f.0, &o).map_err(err)?;
    to_py(py, &fit.to_json_value())
}

#[pyfunction]
#[pyo3(signature = (grid, seed, count, s, gamma, t_range=(4.0, 5.0), space="cone", c_gamma=None))]
#[allow(clippy::too_many_arguments)]
fn check_pointwise<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    seed: u64,
    count: usize,
    s: f64,
    gamma: f64,
    t_range: (f64, f64),
    space: &str,
    c_gamma: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let space = match (space, c_gamma) {
        ("cone", _) => PointwiseSpace::Cone,
        ("edge", Some(c_gamma)) => PointwiseSpace::Edge { c_gamma },
        ("edge", None) => return Err(PyValueError::new_err("edge space needs c_gamma")),
        (other, _) => return Err(PyValueError::new_err(format!("unknown space {other}"))),
    };
    let spec = EnsembleSpec::deep(t_range);
    to_py(
        py,
        &verify::check_pointwise_bound(&grid.0, &spec, seed, count, &weight(s, gamma)?, space)
            .map_err(err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (grid, seed, pairs, s, gamma, t_range=(4.0, 5.0), target="extra-regularity"))]
#[allow(clippy::too_many_arguments)]
fn check_banach_algebra<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    seed: u64,
    pairs: usize,
    s: f64,
    gamma: f64,
    t_range: (f64, f64),
    target: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let target = match target {
        "extra-regularity" => ProductTarget::ExtraRegularity,
        "algebra" => ProductTarget::Algebra,
        other => return Err(PyValueError::new_err(format!("unknown target {other}"))),
    };
    let spec = EnsembleSpec::deep(t_range);
    to_py(
        py,
        &verify::check_banach_algebra(&grid.0, &spec, seed, pairs, &weight(s, gamma)?, target)
            .map_err(err)?,
    )
}

/// Run the command-line interface in-process; returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    edgecalc::cli::run(std::iter::once("edgecalc".to_string()).chain(args))
}

#[pymodule(name = "edgecalc")]
pub fn edgecalc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyForm>()?;
    m.add_class::<PyEmbedding>()?;
    m.add_function(wrap_pyfunction!(sobolev_norm, m)?)?;
    m.add_function(wrap_pyfunction!(cone_norm, m)?)?;
    m.add_function(wrap_pyfunction!(k_norm, m)?)?;
    m.add_function(wrap_pyfunction!(edge_norm, m)?)?;
    m.add_function(wrap_pyfunction!(group_action, m)?)?;
    m.add_function(wrap_pyfunction!(indicial_roots, m)?)?;
    m.add_function(wrap_pyfunction!(indicial_report, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_symbol, m)?)?;
    m.add_function(wrap_pyfunction!(check_ellipticity, m)?)?;
    m.add_function(wrap_pyfunction!(fit_conormal, m)?)?;
    m.add_function(wrap_pyfunction!(check_pointwise, m)?)?;
    m.add_function(wrap_pyfunction!(check_banach_algebra, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
