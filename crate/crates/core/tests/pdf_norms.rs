mod common;

use common::{composite_model, composite_oracle, midpoint, simpson};
use parafit::pdf::{Evaluator, PdfTree};
use parafit::variable::{Registry, Variable};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn polynomial_norm_matches_brute_force_midpoint() {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 2.0)).unwrap();
    let coeffs = [1.0, -0.3, 0.7, 0.2];
    let ids: Vec<_> = coeffs
        .iter()
        .enumerate()
        .map(|(k, &c)| reg.add(Variable::parameter(format!("a{k}"), c)).unwrap())
        .collect();
    let mut tree = PdfTree::new();
    let p = tree.polynomial(&reg, "p", x, &ids).unwrap();
    let norm = tree.normalize(p, &reg.snapshot()).unwrap().value;
    let oracle = midpoint(
        |v| coeffs.iter().rev().fold(0.0, |acc, c| acc * v + c),
        0.0,
        2.0,
        10_000_000,
    );
    assert!(rel(norm, oracle) <= 1e-10, "{norm} vs {oracle}");

    let c = reg.add(Variable::parameter("c", 1.0)).unwrap();
    let flat = tree.polynomial(&reg, "flat", x, &[c]).unwrap();
    assert_eq!(tree.normalize(flat, &reg.snapshot()).unwrap().value, 2.0);
}

#[test]
fn analytic_norms_match_midpoint() {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", -1.0, 3.0)).unwrap();
    let mu = reg.add(Variable::parameter("mu", 0.3)).unwrap();
    let sigma = reg.add(Variable::parameter("sigma", 0.45)).unwrap();
    let alpha = reg.add(Variable::parameter("alpha", -1.7)).unwrap();
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, sigma).unwrap();
    let e = tree.exponential(&reg, "e", x, alpha).unwrap();
    let snap = reg.snapshot();
    let ng = tree.normalize(g, &snap).unwrap().value;
    let ne = tree.normalize(e, &snap).unwrap().value;
    let og = midpoint(
        |v| (-(v - 0.3f64).powi(2) / (2.0 * 0.45 * 0.45)).exp(),
        -1.0,
        3.0,
        1_000_000,
    );
    let oe = midpoint(|v| (-1.7 * v).exp(), -1.0, 3.0, 1_000_000);
    assert!(rel(ng, og) < 1e-11, "{ng} vs {og}");
    assert!(rel(ne, oe) < 1e-11, "{ne} vs {oe}");
}

#[test]
fn composite_density_matches_independent_oracle() {
    let m = composite_model();
    let snap = m.reg.snapshot();
    let norms = m.tree.resolve_norms(m.root, &snap).unwrap();
    let eval = Evaluator::new(&m.tree, &snap, &norms);
    let vals: Vec<f64> = m.params.iter().map(|&id| snap.value(id)).collect();
    let oracle = composite_oracle(&vals.try_into().unwrap());
    for i in 0..=100 {
        let v = i as f64 / 100.0;
        let d = eval.density_at(m.root, &[(m.x, v)]).unwrap();
        assert!(rel(d, oracle(v)) < 1e-9, "x={v}: {d} vs {}", oracle(v));
    }
    let total = simpson(
        |v| eval.density_at(m.root, &[(m.x, v)]).unwrap(),
        0.0,
        1.0,
        20_000,
    );
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn product_density_is_normalized_over_the_plane() {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 1.0)).unwrap();
    let y = reg.add(Variable::observable("y", 0.0, 2.0)).unwrap();
    let mu = reg.add(Variable::parameter("mu", 0.5)).unwrap();
    let s = reg.add(Variable::parameter("s", 0.2)).unwrap();
    let a = reg.add(Variable::parameter("a", -0.8)).unwrap();
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, s).unwrap();
    let e = tree.exponential(&reg, "e", y, a).unwrap();
    let p = tree.prod("p", &[g, e]).unwrap();
    let snap = reg.snapshot();
    let norms = tree.resolve_norms(p, &snap).unwrap();
    let eval = Evaluator::new(&tree, &snap, &norms);
    let total = simpson(
        |u| simpson(|v| eval.density_at(p, &[(x, u), (y, v)]).unwrap(), 0.0, 2.0, 400),
        0.0,
        1.0,
        400,
    );
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_gaussian_integrates_to_one(
        t in 0.0f64..1.0,
        sigma in 0.05f64..3.0,
        lo in -2.0f64..0.0,
        width in 0.5f64..4.0,
    ) {
        let mu = lo + t * width;
        let mut reg = Registry::new();
        let x = reg.add(Variable::observable("x", lo, lo + width)).unwrap();
        let m = reg.add(Variable::parameter("mu", mu)).unwrap();
        let s = reg.add(Variable::parameter("s", sigma)).unwrap();
        let mut tree = PdfTree::new();
        let g = tree.gaussian(&reg, "g", x, m, s).unwrap();
        let snap = reg.snapshot();
        let norms = tree.resolve_norms(g, &snap).unwrap();
        let eval = Evaluator::new(&tree, &snap, &norms);
        let total = simpson(|v| eval.density_at(g, &[(x, v)]).unwrap(), lo, lo + width, 4000);
        prop_assert!((total - 1.0).abs() < 1e-7, "{}", total);
    }

    #[test]
    fn normalized_exponential_integrates_to_one(
        alpha in -20.0f64..20.0,
        lo in -1.0f64..1.0,
        width in 0.1f64..3.0,
    ) {
        let mut reg = Registry::new();
        let x = reg.add(Variable::observable("x", lo, lo + width)).unwrap();
        let a = reg.add(Variable::parameter("a", alpha)).unwrap();
        let mut tree = PdfTree::new();
        let e = tree.exponential(&reg, "e", x, a).unwrap();
        let snap = reg.snapshot();
        let norms = tree.resolve_norms(e, &snap).unwrap();
        let eval = Evaluator::new(&tree, &snap, &norms);
        let total = simpson(|v| eval.density_at(e, &[(x, v)]).unwrap(), lo, lo + width, 20_000);
        prop_assert!((total - 1.0).abs() < 1e-8, "{}", total);
    }
}
