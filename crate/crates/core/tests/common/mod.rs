//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use parafit::amplitude::{DalitzPoint, DecayChannel, Pair, Spin};
use parafit::dataset::UnbinnedDataSet;
use parafit::pdf::{PdfId, PdfTree, ResonanceTerm};
use parafit::quadrature::Quadrature;
use parafit::variable::{Registry, VarId, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Midpoint rule with `n` cells, summed with Neumaier compensation.
pub fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for i in 0..n {
        let v = f(a + (i as f64 + 0.5) * h);
        let t = s + v;
        c += if s.abs() >= v.abs() {
            (s - t) + v
        } else {
            (v - t) + s
        };
        s = t;
    }
    (s + c) * h
}

/// Physical-region test built in the mother rest frame: each daughter's
/// energy follows from the invariant mass of the other two, and the three
/// momenta must close into a triangle.
pub fn physical_by_momenta(mother: f64, m: [f64; 3], s12: f64, s13: f64) -> bool {
    let big = mother * mother;
    let s23 = big + m.iter().map(|v| v * v).sum::<f64>() - s12 - s13;
    let energy = |mi: f64, s_other: f64| (big + mi * mi - s_other) / (2.0 * mother);
    let e = [energy(m[0], s23), energy(m[1], s13), energy(m[2], s12)];
    if (0..3).any(|i| e[i] < m[i]) {
        return false;
    }
    let p: Vec<f64> = (0..3).map(|i| (e[i] * e[i] - m[i] * m[i]).sqrt()).collect();
    p[2] <= p[0] + p[1] && p[2] >= (p[0] - p[1]).abs()
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller, one branch.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Truncated gaussian sample by plain rejection.
pub fn gaussian_sample(n: usize, mu: f64, sigma: f64, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = mu + sigma * standard_normal(&mut r);
        if (lo..=hi).contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Truncated exponential `exp(alpha x)` on `[lo, hi]` by CDF inversion.
pub fn exponential_sample(n: usize, alpha: f64, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let (a, b) = ((alpha * lo).exp(), (alpha * hi).exp());
    (0..n)
        .map(|_| {
            let u: f64 = r.gen();
            ((a + u * (b - a)).ln() / alpha).clamp(lo, hi)
        })
        .collect()
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

pub struct Model1d {
    pub reg: Registry,
    pub tree: PdfTree,
    pub root: PdfId,
    pub x: VarId,
    pub params: Vec<VarId>,
}

impl Model1d {
    pub fn dataset(&self, xs: &[f64]) -> UnbinnedDataSet {
        let mut ds = UnbinnedDataSet::new(&self.reg, &[self.x]).unwrap();
        for &v in xs {
            ds.add_event(&[v]).unwrap();
        }
        ds
    }
}

pub fn gaussian_model(mu: f64, sigma: f64, lo: f64, hi: f64) -> Model1d {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", lo, hi)).unwrap();
    let m = reg
        .add(Variable::parameter("mu", mu).with_bounds(lo, hi).with_step(0.01))
        .unwrap();
    let s = reg
        .add(
            Variable::parameter("sigma", sigma)
                .with_bounds(1e-4, hi - lo)
                .with_step(0.01),
        )
        .unwrap();
    let mut tree = PdfTree::new();
    let root = tree.gaussian(&reg, "g", x, m, s).unwrap();
    Model1d {
        reg,
        tree,
        root,
        x,
        params: vec![m, s],
    }
}

pub fn exponential_model(alpha: f64, lo: f64, hi: f64) -> Model1d {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", lo, hi)).unwrap();
    let a = reg
        .add(Variable::parameter("alpha", alpha).with_step(0.1))
        .unwrap();
    let mut tree = PdfTree::new();
    let root = tree.exponential(&reg, "e", x, a).unwrap();
    Model1d {
        reg,
        tree,
        root,
        x,
        params: vec![a],
    }
}

/// `f1 G(mu, sigma) + f2 E(alpha) + (1 - f1 - f2) P(1, c1)` on `[0, 1]`.
pub fn composite_model() -> Model1d {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", 0.0, 1.0)).unwrap();
    let p = |reg: &mut Registry, n: &str, v: f64, lo: f64, hi: f64| {
        reg.add(Variable::parameter(n, v).with_bounds(lo, hi)).unwrap()
    };
    let mu = p(&mut reg, "mu", 0.4, 0.0, 1.0);
    let sigma = p(&mut reg, "sigma", 0.08, 0.01, 1.0);
    let alpha = p(&mut reg, "alpha", -2.0, -10.0, 10.0);
    let c0 = reg.add(Variable::parameter("c0", 1.0).fixed(true)).unwrap();
    let c1 = p(&mut reg, "c1", 0.5, 0.0, 2.0);
    let f1 = p(&mut reg, "f1", 0.5, 0.0, 1.0);
    let f2 = p(&mut reg, "f2", 0.3, 0.0, 1.0);
    let mut tree = PdfTree::new();
    let g = tree.gaussian(&reg, "g", x, mu, sigma).unwrap();
    let e = tree.exponential(&reg, "e", x, alpha).unwrap();
    let poly = tree.polynomial(&reg, "p", x, &[c0, c1]).unwrap();
    let root = tree.add(&reg, "sum", &[g, e, poly], &[f1, f2]).unwrap();
    Model1d {
        reg,
        tree,
        root,
        x,
        params: vec![mu, sigma, alpha, c1, f1, f2],
    }
}

/// Independent evaluation of [`composite_model`]'s normalized density, with
/// each component normalized by Simpson integration.
pub fn composite_oracle(v: &[f64; 6]) -> impl Fn(f64) -> f64 {
    let [mu, sigma, alpha, c1, f1, f2] = *v;
    let g = move |x: f64| (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp();
    let e = move |x: f64| (alpha * x).exp();
    let p = move |x: f64| 1.0 + c1 * x;
    let ng = simpson(g, 0.0, 1.0, 200_000);
    let ne = simpson(e, 0.0, 1.0, 200_000);
    let np = simpson(p, 0.0, 1.0, 2);
    move |x| f1 * g(x) / ng + f2 * e(x) / ne + (1.0 - f1 - f2) * p(x) / np
}

pub struct DalitzModel {
    pub reg: Registry,
    pub tree: PdfTree,
    pub root: PdfId,
    pub s12: VarId,
    pub s13: VarId,
    pub channel: DecayChannel,
    /// (mass, width, magnitude, phase) per term.
    pub terms: Vec<[VarId; 4]>,
}

/// D+ -> K- K+ pi+ style model with three broad-enough resonances.
pub fn dalitz_model(grid: usize) -> DalitzModel {
    let channel = DecayChannel::new(1.86965, 0.493677, 0.493677, 0.13957).unwrap();
    let mut reg = Registry::new();
    let (a, b) = channel.s12_range();
    let (c, d) = channel.s13_range();
    let s12 = reg.add(Variable::observable("s12", a, b)).unwrap();
    let s13 = reg.add(Variable::observable("s13", c, d)).unwrap();
    let specs = [
        ("kstar", Pair::P13, Spin::One, 0.89166, 0.0508, 1.0, 0.0),
        ("a0", Pair::P12, Spin::Zero, 1.2, 0.3, 0.7, 1.1),
        ("kappa", Pair::P23, Spin::Zero, 0.8, 0.4, 0.5, -0.6),
    ];
    let mut terms = Vec::new();
    let mut ids = Vec::new();
    for (i, (name, pair, spin, m, w, mag, ph)) in specs.into_iter().enumerate() {
        let mass = reg
            .add(
                Variable::parameter(format!("{name}_m"), m)
                    .with_bounds(0.1, 3.0)
                    .fixed(true),
            )
            .unwrap();
        let width = reg
            .add(
                Variable::parameter(format!("{name}_w"), w)
                    .with_bounds(0.001, 1.0)
                    .fixed(true),
            )
            .unwrap();
        let magnitude = reg
            .add(
                Variable::parameter(format!("{name}_mag"), mag)
                    .with_bounds(0.0, 10.0)
                    .fixed(i == 0),
            )
            .unwrap();
        let phase = reg
            .add(
                Variable::parameter(format!("{name}_phase"), ph)
                    .with_step(0.1)
                    .fixed(i == 0),
            )
            .unwrap();
        ids.push([mass, width, magnitude, phase]);
        terms.push(ResonanceTerm {
            name: name.into(),
            pair,
            spin,
            mass,
            width,
            magnitude,
            phase,
        });
    }
    let mut tree = PdfTree::new();
    let root = tree
        .dalitz(
            &reg,
            "dalitz",
            s12,
            s13,
            channel,
            terms,
            parafit::amplitude::GridSpec::square(grid),
        )
        .unwrap();
    DalitzModel {
        reg,
        tree,
        root,
        s12,
        s13,
        channel,
        terms: ids,
    }
}

/// Uniform in-boundary points by rejection from the bounding box.
pub fn phase_space_points(ch: &DecayChannel, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut r = rng(seed);
    let (a, b) = ch.s12_range();
    let (c, d) = ch.s13_range();
    let m = [ch.m1, ch.m2, ch.m3];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = r.gen_range(a..b);
        let y = r.gen_range(c..d);
        if physical_by_momenta(ch.mother, m, x, y) {
            out.push((x, y));
        }
    }
    out
}

/// `int ds12 int_{s13-}^{s13+} f` over the exact boundary, composite
/// Gauss-Legendre on both axes.
pub fn boundary_quadrature(ch: &DecayChannel, f: impl Fn(DalitzPoint) -> f64) -> f64 {
    let q = Quadrature {
        nodes: 32,
        panels: 64,
    };
    let (a, b) = ch.s12_range();
    q.integrate(a, b, |x| {
        let (lo, hi) = ch.s13_limits(x).unwrap();
        q.integrate(lo, hi, |y| f(DalitzPoint::new(x, y)))
    })
}
