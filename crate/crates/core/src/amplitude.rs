//! Three-body Dalitz-plot isobar model.
//!
//! The decay `M -> 1 2 3` is described in the invariant-mass-squared plane
//! `(s12, s13)`. Each resonance contributes a fixed-width relativistic
//! Breit-Wigner in its pair's invariant mass, times a Zemach spin factor, and
//! the terms add coherently with complex coefficients.
//!
//! The normalization of `|sum_i c_i A_i|^2` is `sum_ij c_i conj(c_j) I_ij`
//! where `I_ij` integrates `A_i conj(A_j)` over the kinematic region. The
//! [`IntegralCache`] holds that matrix together with each term's amplitude
//! sampled on the integration grid, so a change of one lineshape only
//! recomputes one row and column, and coefficient changes recompute nothing.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::summation::pairwise_sum;

pub type Complex = Complex64;

/// Masses (GeV) of the mother and the three daughters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayChannel {
    pub mother: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl DecayChannel {
    pub fn new(mother: f64, m1: f64, m2: f64, m3: f64) -> Result<Self> {
        let ok = [mother, m1, m2, m3].iter().all(|m| m.is_finite() && *m >= 0.0) && mother > m1 + m2 + m3;
        if !ok {
            return Err(Error::InvalidModel(format!(
                "decay {mother} -> {m1} + {m2} + {m3} is not kinematically allowed"
            )));
        }
        Ok(Self { mother, m1, m2, m3 })
    }

    /// `M^2 + m1^2 + m2^2 + m3^2`, the constant sum of the three invariants.
    pub fn invariant_sum(&self) -> f64 {
        self.mother.powi(2) + self.m1.powi(2) + self.m2.powi(2) + self.m3.powi(2)
    }

    pub fn s23(&self, p: DalitzPoint) -> f64 {
        self.invariant_sum() - p.s12 - p.s13
    }

    pub fn s12_range(&self) -> (f64, f64) {
        ((self.m1 + self.m2).powi(2), (self.mother - self.m3).powi(2))
    }

    pub fn s13_range(&self) -> (f64, f64) {
        ((self.m1 + self.m3).powi(2), (self.mother - self.m2).powi(2))
    }

    /// Area of the `(s12, s13)` bounding box.
    pub fn box_area(&self) -> f64 {
        let (a, b) = self.s12_range();
        let (c, d) = self.s13_range();
        (b - a) * (d - c)
    }

    /// Kinematic limits of `s13` at fixed `s12`, from the daughter energies in
    /// the (1,2) rest frame. `None` outside the `s12` range.
    pub fn s13_limits(&self, s12: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.s12_range();
        if !(s12 >= lo && s12 <= hi) || s12 <= 0.0 {
            return None;
        }
        let m12 = s12.sqrt();
        let (m1s, m2s, m3s) = (self.m1.powi(2), self.m2.powi(2), self.m3.powi(2));
        let e1 = (s12 - m2s + m1s) / (2.0 * m12);
        let e3 = (self.mother.powi(2) - s12 - m3s) / (2.0 * m12);
        let p1 = (e1 * e1 - m1s).max(0.0).sqrt();
        let p3 = (e3 * e3 - m3s).max(0.0).sqrt();
        let esum = (e1 + e3).powi(2);
        Some((esum - (p1 + p3).powi(2), esum - (p1 - p3).powi(2)))
    }

    pub fn in_boundary(&self, p: DalitzPoint) -> bool {
        match self.s13_limits(p.s12) {
            Some((lo, hi)) => p.s13 >= lo && p.s13 <= hi,
            None => false,
        }
    }
}

/// Free-function form of [`DecayChannel::in_boundary`].
pub fn in_boundary(p: DalitzPoint, ch: &DecayChannel) -> bool {
    ch.in_boundary(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DalitzPoint {
    pub s12: f64,
    pub s13: f64,
}

impl DalitzPoint {
    pub fn new(s12: f64, s13: f64) -> Self {
        Self { s12, s13 }
    }
}

/// The daughter pair a resonance decays into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pair {
    P12,
    P13,
    P23,
}

impl Pair {
    pub fn invariant(self, p: DalitzPoint, ch: &DecayChannel) -> f64 {
        match self {
            Pair::P12 => p.s12,
            Pair::P13 => p.s13,
            Pair::P23 => ch.s23(p),
        }
    }
}

impl std::str::FromStr for Pair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "12" => Ok(Pair::P12),
            "13" => Ok(Pair::P13),
            "23" => Ok(Pair::P23),
            _ => Err(Error::InvalidModel(format!("unknown pair `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Zero,
    One,
}

impl TryFrom<u32> for Spin {
    type Error = Error;
    fn try_from(s: u32) -> Result<Self> {
        match s {
            0 => Ok(Spin::Zero),
            1 => Ok(Spin::One),
            _ => Err(Error::InvalidModel(format!("spin {s} is not supported"))),
        }
    }
}

/// Lineshape of one resonance, by value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub pair: Pair,
    pub spin: Spin,
    pub mass: f64,
    pub width: f64,
}

impl Resonance {
    fn same_bits(&self, other: &Resonance) -> bool {
        self.pair == other.pair
            && self.spin == other.spin
            && self.mass.to_bits() == other.mass.to_bits()
            && self.width.to_bits() == other.width.to_bits()
    }
}

/// `1 / (m^2 - s - i m Γ)`.
pub fn breit_wigner(s: f64, mass: f64, width: f64) -> Complex {
    let denom = Complex::new(mass * mass - s, -mass * width);
    denom.inv()
}

/// Zemach spin-1 factor for a resonance in pair (A, B) with bachelor C:
/// `s_AC - s_BC + (M^2 - m_C^2)(m_B^2 - m_A^2) / s_AB`.
///
/// A is the lower-numbered daughter of the pair. In the (A, B) rest frame the
/// factor equals `-4 |p_A| |p_C| cos(theta)`, theta being the angle between
/// A and C, so it vanishes where the helicity angle is 90 degrees.
pub fn zemach_spin1(pair: Pair, p: DalitzPoint, ch: &DecayChannel) -> f64 {
    let s23 = ch.s23(p);
    let (s_ab, s_ac, s_bc, ma, mb, mc) = match pair {
        Pair::P12 => (p.s12, p.s13, s23, ch.m1, ch.m2, ch.m3),
        Pair::P13 => (p.s13, p.s12, s23, ch.m1, ch.m3, ch.m2),
        Pair::P23 => (s23, p.s12, p.s13, ch.m2, ch.m3, ch.m1),
    };
    s_ac - s_bc + (ch.mother.powi(2) - mc * mc) * (mb * mb - ma * ma) / s_ab
}

pub fn resonance_amplitude(r: &Resonance, p: DalitzPoint, ch: &DecayChannel) -> Complex {
    let bw = breit_wigner(r.pair.invariant(p, ch), r.mass, r.width);
    match r.spin {
        Spin::Zero => bw,
        Spin::One => bw * zemach_spin1(r.pair, p, ch),
    }
}

/// `magnitude * exp(i * phase)`.
pub fn coefficient(magnitude: f64, phase: f64) -> Complex {
    Complex::from_polar(magnitude, phase)
}

/// A resonance with its complex coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsobarTerm {
    pub resonance: Resonance,
    pub coefficient: Complex,
}

/// Coherent amplitude `sum_i c_i A_i(p)`.
pub fn coherent_amplitude(terms: &[IsobarTerm], p: DalitzPoint, ch: &DecayChannel) -> Complex {
    terms
        .iter()
        .map(|t| t.coefficient * resonance_amplitude(&t.resonance, p, ch))
        .sum()
}

/// `|sum_i c_i A_i(p)|^2`.
pub fn total_intensity(terms: &[IsobarTerm], p: DalitzPoint, ch: &DecayChannel) -> f64 {
    coherent_amplitude(terms, p, ch).norm_sqr()
}

/// Integration grid resolution: midpoints of an `n12 x n13` partition of the
/// bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub n12: usize,
    pub n13: usize,
}

impl GridSpec {
    pub const MIN_NODES: usize = 32;

    pub fn square(n: usize) -> Self {
        Self { n12: n, n13: n }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::square(400)
    }
}

/// In-boundary grid nodes, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DalitzGrid {
    pub s12: Vec<f64>,
    pub s13: Vec<f64>,
    pub cell_area: f64,
}

impl DalitzGrid {
    pub fn new(ch: &DecayChannel, spec: GridSpec) -> Result<Self> {
        let n_min = spec.n12.min(spec.n13);
        if n_min < GridSpec::MIN_NODES {
            return Err(Error::DegenerateGrid(n_min));
        }
        let (a, b) = ch.s12_range();
        let (c, d) = ch.s13_range();
        let h12 = (b - a) / spec.n12 as f64;
        let h13 = (d - c) / spec.n13 as f64;
        let mut s12 = Vec::new();
        let mut s13 = Vec::new();
        for i in 0..spec.n12 {
            let x = a + (i as f64 + 0.5) * h12;
            for j in 0..spec.n13 {
                let y = c + (j as f64 + 0.5) * h13;
                if ch.in_boundary(DalitzPoint::new(x, y)) {
                    s12.push(x);
                    s13.push(y);
                }
            }
        }
        Ok(Self {
            s12,
            s13,
            cell_area: h12 * h13,
        })
    }

    pub fn len(&self) -> usize {
        self.s12.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s12.is_empty()
    }

    /// Grid estimate of the Dalitz-region area.
    pub fn area(&self) -> f64 {
        self.len() as f64 * self.cell_area
    }

    pub fn points(&self) -> impl Iterator<Item = DalitzPoint> + '_ {
        self.s12
            .iter()
            .zip(&self.s13)
            .map(|(&a, &b)| DalitzPoint::new(a, b))
    }

    /// Midpoint-rule integral of `f` over the region.
    pub fn integrate(&self, f: impl Fn(DalitzPoint) -> f64) -> f64 {
        let vals: Vec<f64> = self.points().map(f).collect();
        pairwise_sum(&vals) * self.cell_area
    }

    fn amplitudes(&self, r: &Resonance, ch: &DecayChannel) -> Vec<Complex> {
        self.points().map(|p| resonance_amplitude(r, p, ch)).collect()
    }
}

/// Per-term change token. The engine uses the generations of a term's mass
/// and width variables.
pub type Fingerprint = Vec<u64>;

/// Hermitian matrix of pairwise overlap integrals `I_ij`.
#[derive(Debug, Clone)]
pub struct IntegralCache {
    n: usize,
    entries: Vec<Complex>,
    shapes: Vec<Resonance>,
    fingerprints: Vec<Fingerprint>,
    channel: DecayChannel,
    spec: GridSpec,
    grid: Arc<DalitzGrid>,
    amplitudes: Vec<Arc<Vec<Complex>>>,
    recomputed: Vec<bool>,
}

impl IntegralCache {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Complex {
        self.entries[i * self.n + j]
    }

    /// Row-major `n x n` entries.
    pub fn entries(&self) -> &[Complex] {
        &self.entries
    }

    pub fn fingerprints(&self) -> &[Fingerprint] {
        &self.fingerprints
    }

    pub fn grid(&self) -> &DalitzGrid {
        &self.grid
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    /// Which terms had their amplitudes re-evaluated when this cache was built.
    pub fn recomputed_terms(&self) -> &[bool] {
        &self.recomputed
    }

    /// Bitwise equality of the integral matrix.
    pub fn same_entries(&self, other: &IntegralCache) -> bool {
        self.n == other.n
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits())
    }
}

fn overlap(a: &[Complex], b: &[Complex], cell_area: f64, diagonal: bool) -> Complex {
    if diagonal {
        let v: Vec<f64> = a.iter().map(|z| z.norm_sqr()).collect();
        return Complex::new(pairwise_sum(&v) * cell_area, 0.0);
    }
    let (re, im): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let z = x * y.conj();
            (z.re, z.im)
        })
        .unzip();
    Complex::new(pairwise_sum(&re) * cell_area, pairwise_sum(&im) * cell_area)
}

/// Builds `I_ij` on the midpoint grid, reusing entries of `prior` for every
/// pair of terms whose lineshape and fingerprint are unchanged.
///
/// Each entry is a fixed-order sum over the grid, so the result is bitwise
/// identical to a computation without `prior`.
pub fn compute_integrals(
    shapes: &[Resonance],
    fingerprints: &[Fingerprint],
    ch: &DecayChannel,
    spec: GridSpec,
    prior: Option<&IntegralCache>,
) -> Result<IntegralCache> {
    assert_eq!(shapes.len(), fingerprints.len());
    let n = shapes.len();
    let prior = prior.filter(|p| p.channel == *ch && p.spec == spec);
    let grid = match prior {
        Some(p) => Arc::clone(&p.grid),
        None => Arc::new(DalitzGrid::new(ch, spec)?),
    };
    let fresh: Vec<bool> = (0..n)
        .map(|i| match prior {
            Some(p) => i < p.n && p.shapes[i].same_bits(&shapes[i]) && p.fingerprints[i] == fingerprints[i],
            None => false,
        })
        .collect();
    let amplitudes: Vec<Arc<Vec<Complex>>> = (0..n)
        .map(|i| match prior {
            Some(p) if fresh[i] => Arc::clone(&p.amplitudes[i]),
            _ => Arc::new(grid.amplitudes(&shapes[i], ch)),
        })
        .collect();
    let mut entries = vec![Complex::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in i..n {
            let v = match prior {
                Some(p) if fresh[i] && fresh[j] => p.get(i, j),
                _ => overlap(&amplitudes[i], &amplitudes[j], grid.cell_area, i == j),
            };
            entries[i * n + j] = v;
            if i != j {
                entries[j * n + i] = v.conj();
            }
        }
    }
    Ok(IntegralCache {
        n,
        entries,
        shapes: shapes.to_vec(),
        fingerprints: fingerprints.to_vec(),
        channel: *ch,
        spec,
        grid,
        amplitudes,
        recomputed: fresh.iter().map(|f| !f).collect(),
    })
}

/// `sum_ij c_i conj(c_j) I_ij` as a complex number; the imaginary part is
/// rounding noise.
pub fn dalitz_norm_complex(coefficients: &[Complex], cache: &IntegralCache) -> Complex {
    assert_eq!(coefficients.len(), cache.len(), "coefficient count mismatch");
    let mut acc = Complex::new(0.0, 0.0);
    for (i, ci) in coefficients.iter().enumerate() {
        for (j, cj) in coefficients.iter().enumerate() {
            acc += ci * cj.conj() * cache.get(i, j);
        }
    }
    acc
}

/// Real normalization of the coherent sum.
pub fn dalitz_norm(coefficients: &[Complex], cache: &IntegralCache) -> Result<f64> {
    let z = dalitz_norm_complex(coefficients, cache);
    debug_assert!(
        z.im.abs() <= 1e-10 * z.re.abs().max(f64::MIN_POSITIVE),
        "imaginary part {} of normalization {}",
        z.im,
        z.re
    );
    if !(z.re > 0.0 && z.re.is_finite()) {
        return Err(Error::NonPositiveNorm(z.re));
    }
    Ok(z.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RHO_MASS: f64 = 0.77526;
    const RHO_WIDTH: f64 = 0.1478;

    fn d0() -> DecayChannel {
        DecayChannel::new(1.86484, 0.13957, 0.13957, 0.13498).unwrap()
    }

    fn massless() -> DecayChannel {
        DecayChannel::new(1.0, 0.0, 0.0, 0.0).unwrap()
    }

    fn rho(pair: Pair, spin: Spin) -> Resonance {
        Resonance {
            pair,
            spin,
            mass: RHO_MASS,
            width: RHO_WIDTH,
        }
    }

    #[test]
    fn channel_must_be_open() {
        assert!(DecayChannel::new(0.3, 0.1, 0.1, 0.1).is_err());
        assert!(DecayChannel::new(1.0, -0.1, 0.1, 0.1).is_err());
    }

    #[test]
    fn massless_boundary() {
        let ch = massless();
        assert!(ch.in_boundary(DalitzPoint::new(0.4, 0.3)));
        let (_, hi) = ch.s13_limits(0.4).unwrap();
        assert!((hi - 0.6).abs() < 1e-15);
        assert!(!ch.in_boundary(DalitzPoint::new(0.4, 0.61)));
        let (_, s12_hi) = ch.s12_range();
        assert!(!ch.in_boundary(DalitzPoint::new(s12_hi + 0.1, 0.1)));
    }

    #[test]
    fn on_pole_breit_wigner() {
        let bw = breit_wigner(RHO_MASS * RHO_MASS, RHO_MASS, RHO_WIDTH);
        // 1 / (m Γ) = 8.727265516964636, computed independently
        assert!(bw.re.abs() < 1e-12);
        assert!((bw.im - 8.727265516964636).abs() < 1e-10);
    }

    #[test]
    fn breit_wigner_modulus_falls_away_from_pole() {
        let m2 = RHO_MASS * RHO_MASS;
        let mut last = f64::INFINITY;
        for k in 0..50 {
            let s = m2 + 0.02 * k as f64;
            let v = breit_wigner(s, RHO_MASS, 2.0).norm();
            assert!(v < last || k == 0);
            last = v;
        }
    }

    #[test]
    fn single_term_intensity_is_modulus_squared() {
        let ch = d0();
        let p = DalitzPoint::new(0.6, 1.2);
        let r = rho(Pair::P12, Spin::One);
        let t = IsobarTerm {
            resonance: r,
            coefficient: coefficient(1.0, 0.0),
        };
        let a = resonance_amplitude(&r, p, &ch);
        assert_eq!(total_intensity(&[t], p, &ch), a.norm_sqr());
    }

    #[test]
    fn opposite_phases_cancel() {
        let ch = d0();
        let r = rho(Pair::P13, Spin::Zero);
        let terms = [
            IsobarTerm {
                resonance: r,
                coefficient: coefficient(1.0, 0.0),
            },
            IsobarTerm {
                resonance: r,
                coefficient: coefficient(1.0, std::f64::consts::PI),
            },
        ];
        let grid = DalitzGrid::new(&ch, GridSpec::square(40)).unwrap();
        for p in grid.points() {
            assert!(total_intensity(&terms, p, &ch) < 1e-25);
        }
    }

    #[test]
    fn spin1_factor_matches_helicity_form() {
        // -4 |p_A||p_C| cos(theta) in the (1,2) rest frame
        let ch = d0();
        let p = DalitzPoint::new(0.7, 1.1);
        let m12 = p.s12.sqrt();
        let e1 = (p.s12 + ch.m1.powi(2) - ch.m2.powi(2)) / (2.0 * m12);
        let e3 = (ch.mother.powi(2) - p.s12 - ch.m3.powi(2)) / (2.0 * m12);
        let p1 = (e1 * e1 - ch.m1.powi(2)).sqrt();
        let p3 = (e3 * e3 - ch.m3.powi(2)).sqrt();
        let cos = (ch.m1.powi(2) + ch.m3.powi(2) + 2.0 * e1 * e3 - p.s13) / (2.0 * p1 * p3);
        let z = zemach_spin1(Pair::P12, p, &ch);
        assert!((z - (-4.0 * p1 * p3 * cos)).abs() < 1e-12);
    }

    #[test]
    fn grid_needs_resolution() {
        assert_eq!(
            DalitzGrid::new(&d0(), GridSpec { n12: 31, n13: 100 }),
            Err(Error::DegenerateGrid(31))
        );
        assert!(matches!(
            compute_integrals(&[], &[], &d0(), GridSpec::square(8), None),
            Err(Error::DegenerateGrid(8))
        ));
    }

    #[test]
    fn integrals_are_hermitian_with_real_diagonal() {
        let ch = d0();
        let shapes = [rho(Pair::P12, Spin::One), rho(Pair::P13, Spin::Zero)];
        let fps = vec![vec![0, 0], vec![0, 0]];
        let c = compute_integrals(&shapes, &fps, &ch, GridSpec::square(64), None).unwrap();
        for i in 0..2 {
            assert_eq!(c.get(i, i).im, 0.0);
            assert!(c.get(i, i).re > 0.0);
            for j in 0..2 {
                assert_eq!(c.get(i, j), c.get(j, i).conj());
            }
        }
    }

    #[test]
    fn unchanged_terms_are_copied() {
        let ch = d0();
        let mut shapes = vec![
            rho(Pair::P12, Spin::One),
            rho(Pair::P13, Spin::One),
            rho(Pair::P23, Spin::Zero),
        ];
        let mut fps = vec![vec![0, 0], vec![0, 0], vec![0, 0]];
        let spec = GridSpec::square(48);
        let first = compute_integrals(&shapes, &fps, &ch, spec, None).unwrap();
        let again = compute_integrals(&shapes, &fps, &ch, spec, Some(&first)).unwrap();
        assert!(again.same_entries(&first));
        assert_eq!(again.recomputed_terms(), &[false, false, false]);

        shapes[1].mass = 0.9;
        fps[1] = vec![1, 0];
        let warm = compute_integrals(&shapes, &fps, &ch, spec, Some(&first)).unwrap();
        assert_eq!(warm.recomputed_terms(), &[false, true, false]);
        let cold = compute_integrals(&shapes, &fps, &ch, spec, None).unwrap();
        assert!(warm.same_entries(&cold));
        assert_eq!(warm.get(0, 2), first.get(0, 2));
    }

    #[test]
    fn norm_is_bilinear_and_phase_invariant() {
        let ch = d0();
        let shapes = [rho(Pair::P12, Spin::Zero), rho(Pair::P13, Spin::One)];
        let fps = vec![vec![0], vec![0]];
        let c = compute_integrals(&shapes, &fps, &ch, GridSpec::square(64), None).unwrap();
        let coeffs = [coefficient(1.0, 0.0), coefficient(0.7, 1.1)];
        let n = dalitz_norm(&coeffs, &c).unwrap();
        let scaled: Vec<_> = coeffs.iter().map(|z| z * 3.0).collect();
        assert!((dalitz_norm(&scaled, &c).unwrap() / n - 9.0).abs() < 1e-12);
        let rotated: Vec<_> = coeffs.iter().map(|z| z * coefficient(1.0, 2.3)).collect();
        assert!((dalitz_norm(&rotated, &c).unwrap() / n - 1.0).abs() < 1e-12);
        assert_eq!(
            dalitz_norm(
                &[coefficient(1.0, 0.0)],
                &compute_integrals(&shapes[..1], &fps[..1], &ch, GridSpec::square(64), None).unwrap()
            )
            .unwrap(),
            c.get(0, 0).re
        );
    }

    #[test]
    fn zero_coefficients_are_rejected() {
        let ch = d0();
        let shapes = [rho(Pair::P12, Spin::Zero)];
        let c = compute_integrals(&shapes, &[vec![0]], &ch, GridSpec::square(40), None).unwrap();
        assert_eq!(
            dalitz_norm(&[Complex::new(0.0, 0.0)], &c),
            Err(Error::NonPositiveNorm(0.0))
        );
    }
}
