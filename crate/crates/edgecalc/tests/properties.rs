mod common;

use common::{c, grid};
use edgecalc::ensemble::{random_specs, EnsembleSpec};
use edgecalc::forms::{flat, sharp, wedge, FormField};
use edgecalc::grid::{spectral_derivative, Axis, ScalarField};
use edgecalc::io::{read_scalar_field, to_json_string, write_scalar_field};
use edgecalc::mellin::WeightData;
use edgecalc::operators::{apply, exterior_derivative};
use edgecalc::sobolev::{cone_norm_local, group_action, sobolev_norm};
use edgecalc::symbols::{indicial_report, polynomial_roots};
use num_complex::Complex64;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 12,
        ..ProptestConfig::default()
    }
}

fn one_form(seed: u64) -> FormField {
    let g = grid(6.0, 32, 8, 8);
    let specs = random_specs(seed, 3, &EnsembleSpec::deep((-1.0, 1.0)), 1, 1);
    let mut f = FormField::zeros(&g, 1).unwrap();
    for ((_, comp), s) in f.components.iter_mut().zip(&specs) {
        *comp = s.sample(&g);
    }
    f
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn mixed_derivatives_commute(seed in 0u64..1000) {
        let g = grid(6.0, 32, 8, 8);
        let f = random_specs(seed, 1, &EnsembleSpec::deep((-1.0, 1.0)), 1, 1)[0].sample(&g);
        let d = |f: &ScalarField, a| spectral_derivative(f, a).unwrap().field;
        let su = d(&d(&f, Axis::Sigma(0)), Axis::U(0));
        let us = d(&d(&f, Axis::U(0)), Axis::Sigma(0));
        prop_assert!((&su - &us).max_abs() <= 1e-12 * su.max_abs().max(1.0));
    }

    #[test]
    fn sobolev_norm_is_monotone_in_s(seed in 0u64..1000, s in 0.0f64..3.0, ds in 0.1f64..2.0) {
        let g = grid(8.0, 64, 8, 8);
        let f = random_specs(seed, 1, &EnsembleSpec::deep((-1.0, 1.0)), 1, 1)[0].sample(&g);
        prop_assert!(sobolev_norm(&f, s + ds, 0.0).unwrap() >= sobolev_norm(&f, s, 0.0).unwrap());
    }

    #[test]
    fn cone_norm_is_monotone_in_s(seed in 0u64..1000, gamma in 0.0f64..2.0) {
        let g = grid(10.0, 128, 8, 8).cone_factor();
        let f = random_specs(seed, 1, &EnsembleSpec::deep((-1.0, 1.0)), 1, 0)[0].sample(&g);
        let lo = cone_norm_local(&f, &WeightData::new(1.0, gamma).unwrap()).unwrap();
        let hi = cone_norm_local(&f, &WeightData::new(2.0, gamma).unwrap()).unwrap();
        prop_assert!(hi >= lo);
    }

    #[test]
    fn flat_inverts_sharp(seed in 0u64..1000) {
        let xi = one_form(seed);
        let back = flat(&sharp(&xi).unwrap()).unwrap();
        prop_assert!(back.sub(&xi).unwrap().max_abs() <= 1e-12 * xi.max_abs());
    }

    #[test]
    fn one_forms_anticommute(a in 0u64..1000, b in 0u64..1000) {
        let (x, y) = (one_form(a), one_form(b));
        let sum = wedge(&x, &y).unwrap().add(&wedge(&y, &x).unwrap()).unwrap();
        prop_assert!(sum.max_abs() <= 1e-14 * x.max_abs() * y.max_abs());
    }

    #[test]
    fn group_action_composes(seed in 0u64..1000, a in 0.5f64..2.0, b in 0.5f64..2.0) {
        let g = grid(16.0, 256, 8, 8).cone_factor();
        let f = random_specs(seed, 1, &EnsembleSpec::deep((-0.5, 0.5)), 1, 0)[0].sample(&g);
        let twice = group_action(&group_action(&f, a).unwrap(), b).unwrap();
        let once = group_action(&f, a * b).unwrap();
        prop_assert!((&twice - &once).max_abs() <= 1e-10 * once.max_abs());
    }

    #[test]
    fn real_polynomials_have_conjugate_roots(coeffs in proptest::collection::vec(-2.0f64..2.0, 3..8)) {
        prop_assume!(coeffs.last().unwrap().abs() > 0.1);
        let p: Vec<Complex64> = coeffs.iter().map(|x| c(*x)).collect();
        let roots = polynomial_roots(&p).unwrap();
        let total: usize = roots.iter().map(|r| r.1).sum();
        prop_assert_eq!(total, coeffs.len() - 1);
        for (z, m) in &roots {
            let partner = roots.iter().find(|(w, _)| (w - z.conj()).norm() <= 1e-6 * z.norm().max(1.0));
            prop_assert!(partner.map(|p| p.1 == *m).unwrap_or(false), "no conjugate for {}", z);
        }
    }
}

#[test]
fn d_squared_vanishes() {
    let g = grid(5.0, 256, 16, 16);
    let d = exterior_derivative(1).unwrap();
    let dd = d.compose(&d).unwrap();
    let specs = random_specs(4, 8, &EnsembleSpec::deep((-1.0, 1.0)), 1, 1);
    let mut f = FormField::zeros_full(&g).unwrap();
    for ((_, comp), s) in f.components.iter_mut().zip(&specs) {
        *comp = s.sample(&g);
    }
    let once = apply(&d, &f).unwrap().field;
    let twice = apply(&d, &once).unwrap().field;
    assert!(
        twice.max_abs() <= 1e-9 * once.max_abs(),
        "{:e}",
        twice.max_abs()
    );
    let symbolic = apply(&dd, &f).unwrap().field;
    assert!(symbolic.max_abs() <= 1e-9 * once.max_abs());
}

#[test]
fn reports_serialize_deterministically() {
    let p = edgecalc::operators::hodge_derham_full(1).unwrap();
    let a = indicial_report(&p, 1, (-1.5, 2.5), (-1.0, 1.0), 2).unwrap();
    let b = indicial_report(&p, 1, (-1.5, 2.5), (-1.0, 1.0), 2).unwrap();
    let (ja, jb) = (to_json_string(&a).unwrap(), to_json_string(&b).unwrap());
    assert_eq!(ja, jb);
    let back: edgecalc::symbols::IndicialReport = serde_json::from_str(&ja).unwrap();
    assert_eq!(to_json_string(&back).unwrap(), ja);
}

#[test]
fn field_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(6.0, 32, 8, 8);
    let f = random_specs(8, 1, &EnsembleSpec::deep((-1.0, 1.0)), 1, 1)[0].sample(&g);
    let path = dir.path().join("f.json");
    write_scalar_field(&path, &f).unwrap();
    let back = read_scalar_field(&path).unwrap();
    assert_eq!(back.grid, f.grid);
    assert!((&back - &f).max_abs() == 0.0);
}
