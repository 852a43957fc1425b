mod common;

use common::{composite_model, composite_oracle, gaussian_model, simpson};
use parafit::amplitude::{
    coefficient, DalitzGrid, DecayChannel, GridSpec, IsobarTerm, Pair, Resonance, Spin,
};
use parafit::error::Error;
use parafit::mcgen::{
    generate_1d, generate_1d_with_stats, generate_dalitz, generate_dalitz_with_stats, GenSpec,
};
use parafit::pdf::PdfTree;
use parafit::variable::{Registry, VarId, Variable};

fn channel() -> DecayChannel {
    DecayChannel::new(1.86965, 0.493677, 0.493677, 0.13957).unwrap()
}

fn dalitz_registry(ch: &DecayChannel) -> (Registry, VarId, VarId) {
    let mut reg = Registry::new();
    let (a, b) = ch.s12_range();
    let (c, d) = ch.s13_range();
    let s12 = reg.add(Variable::observable("s12", a, b)).unwrap();
    let s13 = reg.add(Variable::observable("s13", c, d)).unwrap();
    (reg, s12, s13)
}

#[test]
fn gaussian_sample_mean_is_unbiased() {
    let m = gaussian_model(0.5, 0.1, 0.0, 1.0);
    let n = 100_000;
    let ds = generate_1d(&m.tree, m.root, &m.reg, m.x, &GenSpec::new(n, 17)).unwrap();
    assert_eq!(ds.len(), n);
    let xs = ds.column(m.x).unwrap();
    assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
    let mean = xs.iter().sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 3.0 * 0.1 / (n as f64).sqrt(), "{mean}");
}

#[test]
fn flat_density_accepts_at_inverse_safety() {
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable("x", -2.0, 3.0)).unwrap();
    let c = reg.add(Variable::parameter("c", 1.0)).unwrap();
    let mut tree = PdfTree::new();
    let flat = tree.polynomial(&reg, "flat", x, &[c]).unwrap();
    let (_, stats) = generate_1d_with_stats(&tree, flat, &reg, x, &GenSpec::new(100_000, 2)).unwrap();
    let expected = 1.0 / 1.1;
    assert!(
        (stats.acceptance() / expected - 1.0).abs() < 0.02,
        "{}",
        stats.acceptance()
    );
}

#[test]
fn composite_sample_passes_chi_square() {
    let m = composite_model();
    let n = 100_000;
    let ds = generate_1d(&m.tree, m.root, &m.reg, m.x, &GenSpec::new(n, 23)).unwrap();
    let snap = m.reg.snapshot();
    let vals: Vec<f64> = m.params.iter().map(|&id| snap.value(id)).collect();
    let density = composite_oracle(&vals.try_into().unwrap());
    let bins = 50;
    let mut counts = vec![0.0; bins];
    for &x in ds.column(m.x).unwrap() {
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let mut chi2 = 0.0;
    for (b, &obs) in counts.iter().enumerate() {
        let (lo, hi) = (b as f64 / bins as f64, (b + 1) as f64 / bins as f64);
        let expected = n as f64 * simpson(&density, lo, hi, 200);
        chi2 += (obs - expected).powi(2) / expected;
    }
    let per_dof = chi2 / (bins - 1) as f64;
    assert!(per_dof < 2.0, "chi2/dof = {per_dof}");
}

#[test]
fn same_seed_same_events() {
    let m = composite_model();
    for streams in [1, 4] {
        let spec = GenSpec::new(5_000, 99).with_streams(streams);
        let a = generate_1d(&m.tree, m.root, &m.reg, m.x, &spec).unwrap();
        let b = generate_1d(&m.tree, m.root, &m.reg, m.x, &spec).unwrap();
        let bits = |d: &parafit::dataset::UnbinnedDataSet| -> Vec<u64> {
            d.column(m.x).unwrap().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = generate_1d(
            &m.tree,
            m.root,
            &m.reg,
            m.x,
            &GenSpec::new(5_000, 100).with_streams(streams),
        )
        .unwrap();
        assert_ne!(bits(&a), bits(&c));
    }
}

#[test]
fn dalitz_sample_peaks_at_resonance_band() {
    let ch = channel();
    let (reg, s12, s13) = dalitz_registry(&ch);
    let (mass, width) = (1.2, 0.1);
    let terms = [IsobarTerm {
        resonance: Resonance {
            pair: Pair::P12,
            spin: Spin::Zero,
            mass,
            width,
        },
        coefficient: coefficient(1.0, 0.0),
    }];
    let n = 100_000;
    let ds = generate_dalitz(&terms, &ch, &reg, s12, s13, &GenSpec::new(n, 31)).unwrap();
    assert_eq!(ds.len(), n);
    let (x, y) = (ds.column(s12).unwrap(), ds.column(s13).unwrap());
    assert!(x
        .iter()
        .zip(y)
        .all(|(&a, &b)| ch.in_boundary(parafit::amplitude::DalitzPoint::new(a, b))));

    // Divide out the phase-space length of each s12 slice, leaving |BW|^2.
    let (a, b) = ch.s12_range();
    let bins = 40;
    let w = (b - a) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in x {
        counts[(((v - a) / w) as usize).min(bins - 1)] += 1.0;
    }
    let corrected: Vec<f64> = (0..bins)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let slice = simpson(|s| ch.s13_limits(s).map_or(0.0, |(l, h)| h - l), lo, hi, 200);
            counts[k] / slice
        })
        .collect();
    let peak = (0..bins)
        .max_by(|&i, &j| corrected[i].total_cmp(&corrected[j]))
        .unwrap();
    let center = a + (peak as f64 + 0.5) * w;
    let nearest = (0..bins)
        .min_by(|&i, &j| {
            let ci = (a + (i as f64 + 0.5) * w - mass * mass).abs();
            let cj = (a + (j as f64 + 0.5) * w - mass * mass).abs();
            ci.total_cmp(&cj)
        })
        .unwrap();
    assert_eq!(peak, nearest, "peak bin center {center}, pole {}", mass * mass);
}

#[test]
fn cancelling_terms_exhaust_attempts() {
    let ch = channel();
    let (reg, s12, s13) = dalitz_registry(&ch);
    let r = Resonance {
        pair: Pair::P13,
        spin: Spin::One,
        mass: 0.892,
        width: 0.05,
    };
    let terms = [
        IsobarTerm {
            resonance: r,
            coefficient: coefficient(1.0, 0.0),
        },
        IsobarTerm {
            resonance: r,
            coefficient: coefficient(-1.0, 0.0),
        },
    ];
    let err = generate_dalitz(&terms, &ch, &reg, s12, s13, &GenSpec::new(10, 1)).unwrap_err();
    assert!(matches!(err, Error::AttemptsExhausted(_)), "{err:?}");
}

#[test]
fn phase_space_fraction_matches_grid_area() {
    let ch = channel();
    let (reg, s12, s13) = dalitz_registry(&ch);
    let terms = [IsobarTerm {
        resonance: Resonance {
            pair: Pair::P23,
            spin: Spin::Zero,
            mass: 1.0,
            width: 0.6,
        },
        coefficient: coefficient(1.0, 0.0),
    }];
    let (_, stats) =
        generate_dalitz_with_stats(&terms, &ch, &reg, s12, s13, &GenSpec::new(100_000, 5)).unwrap();
    let (p, se) = stats.region_fraction();
    let mc_area = p * ch.box_area();
    let mc_se = se * ch.box_area();
    let grid_area = DalitzGrid::new(&ch, GridSpec::default()).unwrap().area();
    assert!(
        (mc_area - grid_area).abs() < 3.0 * mc_se,
        "{mc_area} +/- {mc_se} vs {grid_area}"
    );
}
