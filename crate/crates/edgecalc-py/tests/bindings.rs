use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(edgecalc_py::edgecalc_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("edgecalc", module).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        py.run(&code, Some(&globals), None)
            .map_err(|e| e.to_string())
            .unwrap();
    });
}

#[test]
fn field_norms_and_round_trip() {
    run(r#"
g = edgecalc.Grid(t_half=6.0, n_t=32, n_sigma=8, n_u=8)
f = edgecalc.Field.ensemble(g, 2, 1, (-1.0, 1.0))[0]
assert 0 < edgecalc.sobolev_norm(f, 0.5) <= edgecalc.sobolev_norm(f, 1.5)
h = edgecalc.Field.from_values(g, f.values())
assert (h - f).max_abs() == 0.0
try:
    edgecalc.Field.from_values(g, [0j])
    raise AssertionError("length not checked")
except ValueError:
    pass
"#);
}

#[test]
fn roots_and_calibration() {
    run(r#"
roots = edgecalc.indicial_roots("hodge-derham", (-3.0, 3.0), band_limit=0)
assert all(isinstance(z, complex) and m >= 1 for z, m, _ in roots)
emb = edgecalc.Embedding.circle_cone()
g = edgecalc.Grid(t_half=4.0, n_t=32, n_sigma=8, n_u=8)
assert emb.is_special_lagrangian(g)["pass"]
"#);
}
