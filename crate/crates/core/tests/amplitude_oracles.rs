mod common;

use common::{boundary_quadrature, phase_space_points, physical_by_momenta, rng};
use parafit::amplitude::{
    breit_wigner, coefficient, compute_integrals, dalitz_norm, dalitz_norm_complex, resonance_amplitude,
    total_intensity, DalitzGrid, DalitzPoint, DecayChannel, GridSpec, IsobarTerm, Pair, Resonance, Spin,
};
use rand::Rng;

fn d0_to_pi_pi_pi0() -> DecayChannel {
    DecayChannel::new(1.86484, 0.13957, 0.13957, 0.13498).unwrap()
}

fn dplus_to_kkpi() -> DecayChannel {
    DecayChannel::new(1.86965, 0.493677, 0.493677, 0.13957).unwrap()
}

fn res(pair: Pair, spin: Spin, mass: f64, width: f64) -> Resonance {
    Resonance {
        pair,
        spin,
        mass,
        width,
    }
}

#[test]
fn boundary_agrees_with_mother_frame_momenta() {
    let ch = d0_to_pi_pi_pi0();
    let (a, b) = ch.s12_range();
    let (c, d) = ch.s13_range();
    let mut r = rng(2024);
    let mut inside = 0;
    let mut disagreements = 0;
    for _ in 0..1_000_000 {
        let x = r.gen_range(a..b);
        let y = r.gen_range(c..d);
        let oracle = physical_by_momenta(ch.mother, [ch.m1, ch.m2, ch.m3], x, y);
        if oracle != ch.in_boundary(DalitzPoint::new(x, y)) {
            disagreements += 1;
        }
        inside += usize::from(oracle);
    }
    assert_eq!(disagreements, 0);
    assert!(inside > 100_000);
}

#[test]
fn on_pole_breit_wigner_is_purely_imaginary() {
    let (m, g) = (0.77526, 0.1478);
    let z = breit_wigner(m * m, m, g);
    let expected = 1.0 / (m * g);
    assert_eq!(z.re, 0.0);
    assert!(
        (z.im - expected).abs() <= 1e-15 * expected,
        "{} vs {expected}",
        z.im
    );
    assert!((z.im - 8.727265516964636).abs() < 1e-12);
}

/// `cos(theta)` between daughters A and C in the (A, B) rest frame, from
/// explicit energies and momenta.
fn helicity_cosine(ch: &DecayChannel, s_ab: f64, s_ac: f64, ma: f64, mb: f64, mc: f64) -> f64 {
    let m = s_ab.sqrt();
    let ea = (s_ab + ma * ma - mb * mb) / (2.0 * m);
    let ec = (ch.mother * ch.mother - s_ab - mc * mc) / (2.0 * m);
    let pa = (ea * ea - ma * ma).sqrt();
    let pc = (ec * ec - mc * mc).sqrt();
    (ma * ma + mc * mc + 2.0 * ea * ec - s_ac) / (2.0 * pa * pc)
}

#[test]
fn spin_one_amplitude_vanishes_at_right_angle() {
    let ch = dplus_to_kkpi();
    let r = res(Pair::P13, Spin::One, 0.89166, 0.0508);
    let s13 = 0.8;
    let (lo, hi) = {
        // s12 range at fixed s13, scanning inside the boundary.
        let (a, b) = ch.s12_range();
        let pts: Vec<f64> = (0..=20_000)
            .map(|i| a + (b - a) * i as f64 / 20_000.0)
            .filter(|&x| ch.in_boundary(DalitzPoint::new(x, s13)))
            .collect();
        (pts[0], *pts.last().unwrap())
    };
    let f = |s12: f64| helicity_cosine(&ch, s13, s12, ch.m1, ch.m3, ch.m2);
    let (mut a, mut b) = (lo, hi);
    assert!(f(a) * f(b) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if f(a) * f(mid) <= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    let root = 0.5 * (a + b);
    let at_root = resonance_amplitude(&r, DalitzPoint::new(root, s13), &ch).norm();
    let scale = resonance_amplitude(&r, DalitzPoint::new(lo + 0.05 * (hi - lo), s13), &ch).norm();
    assert!(at_root <= 1e-10 * scale, "{at_root} vs {scale}");
}

#[test]
fn two_term_intensity_matches_expansion() {
    let ch = dplus_to_kkpi();
    let r1 = res(Pair::P13, Spin::One, 0.89166, 0.0508);
    let r2 = res(Pair::P12, Spin::Zero, 1.2, 0.3);
    let (c1, c2) = (coefficient(1.3, 0.4), coefficient(0.7, -2.1));
    let terms = [
        IsobarTerm {
            resonance: r1,
            coefficient: c1,
        },
        IsobarTerm {
            resonance: r2,
            coefficient: c2,
        },
    ];
    for (x, y) in phase_space_points(&ch, 100, 5) {
        let p = DalitzPoint::new(x, y);
        let (a1, a2) = (resonance_amplitude(&r1, p, &ch), resonance_amplitude(&r2, p, &ch));
        let expanded =
            (c1 * a1).norm_sqr() + (c2 * a2).norm_sqr() + 2.0 * (c1 * c2.conj() * a1 * a2.conj()).re;
        let direct = total_intensity(&terms, p, &ch);
        assert!(
            (direct - expanded).abs() <= 1e-12 * expanded,
            "{direct} vs {expanded}"
        );
    }
}

fn three_terms() -> Vec<IsobarTerm> {
    vec![
        IsobarTerm {
            resonance: res(Pair::P13, Spin::One, 0.89166, 0.0508),
            coefficient: coefficient(1.0, 0.0),
        },
        IsobarTerm {
            resonance: res(Pair::P12, Spin::Zero, 1.2, 0.3),
            coefficient: coefficient(0.7, 1.1),
        },
        IsobarTerm {
            resonance: res(Pair::P23, Spin::Zero, 0.8, 0.4),
            coefficient: coefficient(0.5, -0.6),
        },
    ]
}

#[test]
fn norm_equals_grid_integral_of_intensity() {
    let ch = dplus_to_kkpi();
    let terms = three_terms();
    let shapes: Vec<_> = terms.iter().map(|t| t.resonance).collect();
    let coeffs: Vec<_> = terms.iter().map(|t| t.coefficient).collect();
    let fps = vec![vec![0u64]; 3];
    let cache = compute_integrals(&shapes, &fps, &ch, GridSpec::square(200), None).unwrap();
    let norm = dalitz_norm(&coeffs, &cache).unwrap();
    let direct = cache.grid().integrate(|p| total_intensity(&terms, p, &ch));
    assert!((norm - direct).abs() <= 1e-10 * direct, "{norm} vs {direct}");
    let z = dalitz_norm_complex(&coeffs, &cache);
    assert!(z.im.abs() <= 1e-10 * z.re);
    for i in 0..3 {
        assert_eq!(cache.get(i, i).im, 0.0);
        for j in 0..3 {
            let (a, b) = (cache.get(i, j), cache.get(j, i).conj());
            assert!(a.re == b.re && a.im == b.im, "{a} vs {b}");
        }
    }
}

#[test]
fn grid_normalized_intensity_integrates_to_one() {
    let ch = dplus_to_kkpi();
    let terms = three_terms();
    let shapes: Vec<_> = terms.iter().map(|t| t.resonance).collect();
    let coeffs: Vec<_> = terms.iter().map(|t| t.coefficient).collect();
    let cache = compute_integrals(&shapes, &vec![vec![0]; 3], &ch, GridSpec::default(), None).unwrap();
    let norm = dalitz_norm(&coeffs, &cache).unwrap();
    let total = boundary_quadrature(&ch, |p| total_intensity(&terms, p, &ch)) / norm;
    assert!((total - 1.0).abs() < 1e-3, "{total}");
    let area = boundary_quadrature(&ch, |_| 1.0);
    let grid_area = DalitzGrid::new(&ch, GridSpec::default()).unwrap().area();
    assert!((grid_area / area - 1.0).abs() < 1e-3, "{grid_area} vs {area}");
}

#[test]
fn single_term_integral_matches_monte_carlo() {
    let ch = dplus_to_kkpi();
    let r = res(Pair::P12, Spin::Zero, 1.2, 0.3);
    let cache = compute_integrals(&[r], &[vec![0]], &ch, GridSpec::default(), None).unwrap();
    let i00 = cache.get(0, 0).re;
    let (a, b) = ch.s12_range();
    let (c, d) = ch.s13_range();
    let mut g = rng(99);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let (x, y) = (g.gen_range(a..b), g.gen_range(c..d));
        let v = if physical_by_momenta(ch.mother, [ch.m1, ch.m2, ch.m3], x, y) {
            resonance_amplitude(&r, DalitzPoint::new(x, y), &ch).norm_sqr()
        } else {
            0.0
        };
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let var = s2 / n as f64 - mean * mean;
    let box_area = ch.box_area();
    let mc = box_area * mean;
    let se = box_area * (var / n as f64).sqrt();
    assert!((i00 - mc).abs() < 3.0 * se, "grid {i00}, mc {mc} +/- {se}");
}
