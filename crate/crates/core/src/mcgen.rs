//! Toy Monte Carlo by accept-reject.
//!
//! Candidates are drawn uniformly in the observable box and accepted with
//! probability `density / envelope`. The envelope is `envelope_safety` times
//! the largest density seen on a scan. A candidate above the envelope means
//! the scan missed a peak. The rescan climbs from the offending point to the
//! local maximum (compass search), generation restarts once from the same seed
//! with the envelope raised to `envelope_safety` times that maximum, and a
//! second excess fails with [`Error::EnvelopeExceeded`].
//!
//! For Dalitz models the box is the `(s12, s13)` bounding box; points outside
//! the kinematic boundary are discarded before the intensity test. Uniform
//! density in `(s12, s13)` is flat phase space, so no Jacobian is applied.
//!
//! Random numbers come from ChaCha8 ([`rand_chacha::ChaCha8Rng`]) seeded with
//! `seed_from_u64(seed)`. Stream `k` is the same key with ChaCha stream id
//! `k`, so streams never overlap. With `streams > 1` the streams run in
//! parallel and their events are concatenated in stream order; stream `k`
//! produces `n / streams` events, plus one for `k < n % streams`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::amplitude::{total_intensity, DalitzPoint, DecayChannel, IsobarTerm};
use crate::dataset::{DataView, UnbinnedDataSet};
use crate::error::{Error, Result};
use crate::pdf::{NodeKind, PdfId, PdfTree};
use crate::variable::{Registry, VarId};

/// Points in the one-dimensional envelope scan.
pub const SCAN_POINTS_1D: usize = 4096;
/// Nodes per axis of the Dalitz envelope scan.
pub const SCAN_NODES_DALITZ: usize = 256;

const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub n_events: usize,
    pub seed: u64,
    pub envelope_safety: f64,
    pub max_attempts_factor: u64,
    pub streams: usize,
}

impl GenSpec {
    pub fn new(n_events: usize, seed: u64) -> Self {
        Self {
            n_events,
            seed,
            envelope_safety: 1.1,
            max_attempts_factor: 1000,
            streams: 1,
        }
    }

    pub fn with_streams(mut self, streams: usize) -> Self {
        self.streams = streams;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_events == 0 {
            return Err(Error::InvalidModel("n_events must be at least 1".into()));
        }
        if !(self.envelope_safety >= 1.0) || !self.envelope_safety.is_finite() {
            return Err(Error::InvalidModel("envelope_safety must be >= 1".into()));
        }
        if self.streams == 0 || self.max_attempts_factor == 0 {
            return Err(Error::InvalidModel(
                "streams and max_attempts_factor must be positive".into(),
            ));
        }
        Ok(())
    }

    fn stream_sizes(&self) -> Vec<usize> {
        let base = self.n_events / self.streams;
        let extra = self.n_events % self.streams;
        (0..self.streams).map(|k| base + usize::from(k < extra)).collect()
    }
}

/// The generator for stream `k` of `seed`.
pub fn stream_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Counters from one generation run (the successful attempt only).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GenStats {
    /// Candidates drawn in the box.
    pub proposals: u64,
    /// Candidates inside the kinematic region (all of them in 1-D).
    pub in_region: u64,
    pub accepted: u64,
    pub envelope: f64,
    /// Whether the envelope had to be raised and generation restarted.
    pub restarted: bool,
}

impl GenStats {
    pub fn acceptance(&self) -> f64 {
        self.accepted as f64 / self.proposals as f64
    }

    /// Fraction of the box inside the kinematic region, with its binomial
    /// standard error.
    pub fn region_fraction(&self) -> (f64, f64) {
        let n = self.proposals as f64;
        let p = self.in_region as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }
}

/// A box sampler: `inside` filters proposals, `density` scores a batch of
/// points given as columns.
struct Sampler<'a> {
    lower: Vec<f64>,
    upper: Vec<f64>,
    inside: &'a (dyn Fn(&[f64]) -> bool + Sync),
    density: &'a BatchDensity<'a>,
}

type BatchDensity<'a> = dyn Fn(&[Vec<f64>]) -> Result<Vec<f64>> + Sync + 'a;

enum StreamError {
    Exceeded(f64, Vec<f64>),
    Fatal(Error),
}

struct StreamOut {
    columns: Vec<Vec<f64>>,
    stats: GenStats,
}

fn run_stream(
    s: &Sampler<'_>,
    mut rng: ChaCha8Rng,
    n: usize,
    envelope: f64,
    max_attempts: u64,
) -> std::result::Result<StreamOut, StreamError> {
    let dim = s.lower.len();
    let mut columns = vec![Vec::with_capacity(n); dim];
    let mut stats = GenStats {
        envelope,
        ..Default::default()
    };
    let mut point = vec![0.0; dim];
    while columns[0].len() < n {
        let mut cand = vec![Vec::with_capacity(BATCH); dim];
        let mut draws = Vec::with_capacity(BATCH);
        while draws.len() < BATCH && stats.proposals < max_attempts {
            for (p, (lo, hi)) in point.iter_mut().zip(s.lower.iter().zip(&s.upper)) {
                *p = rng.gen_range(*lo..*hi);
            }
            let u: f64 = rng.gen();
            stats.proposals += 1;
            if !(s.inside)(&point) {
                continue;
            }
            stats.in_region += 1;
            for (c, &v) in cand.iter_mut().zip(&point) {
                c.push(v);
            }
            draws.push(u);
        }
        if !draws.is_empty() {
            let dens = (s.density)(&cand).map_err(StreamError::Fatal)?;
            for (i, (&p, &u)) in dens.iter().zip(&draws).enumerate() {
                if p > envelope {
                    let at = (0..dim).map(|d| cand[d][i]).collect();
                    return Err(StreamError::Exceeded(p, at));
                }
                if u * envelope < p && columns[0].len() < n {
                    for d in 0..dim {
                        columns[d].push(cand[d][i]);
                    }
                    stats.accepted += 1;
                }
            }
        }
        if columns[0].len() < n && stats.proposals >= max_attempts {
            return Err(StreamError::Fatal(Error::AttemptsExhausted(stats.proposals)));
        }
    }
    Ok(StreamOut { columns, stats })
}

fn run(s: &Sampler<'_>, spec: &GenSpec, scan_max: f64) -> Result<(Vec<Vec<f64>>, GenStats)> {
    let sizes = spec.stream_sizes();
    let mut envelope = spec.envelope_safety * scan_max;
    if !(envelope > 0.0) || !envelope.is_finite() {
        return Err(Error::AttemptsExhausted(0));
    }
    for attempt in 0..2 {
        let outs: Vec<_> = sizes
            .par_iter()
            .enumerate()
            .map(|(k, &n)| {
                let max_attempts = spec.max_attempts_factor.saturating_mul(n.max(1) as u64);
                run_stream(s, stream_rng(spec.seed, k), n, envelope, max_attempts)
            })
            .collect();
        let mut excess: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut done = Vec::with_capacity(outs.len());
        for o in outs {
            match o {
                Ok(v) => done.push(v),
                Err(StreamError::Exceeded(p, at)) => excess.push((p, at)),
                Err(StreamError::Fatal(e)) => return Err(e),
            }
        }
        if !excess.is_empty() {
            if attempt == 0 {
                let mut peak: f64 = 0.0;
                for (p, at) in excess {
                    peak = peak.max(p).max(climb(s, at, p)?);
                }
                log::warn!("density {peak} above envelope {envelope}; raising envelope and restarting");
                envelope = spec.envelope_safety * peak;
                continue;
            }
            return Err(Error::EnvelopeExceeded);
        }
        let dim = s.lower.len();
        let mut columns = vec![Vec::with_capacity(spec.n_events); dim];
        let mut stats = GenStats {
            envelope,
            restarted: attempt > 0,
            ..Default::default()
        };
        for o in done {
            for (c, src) in columns.iter_mut().zip(&o.columns) {
                c.extend_from_slice(src);
            }
            stats.proposals += o.stats.proposals;
            stats.in_region += o.stats.in_region;
            stats.accepted += o.stats.accepted;
        }
        return Ok((columns, stats));
    }
    unreachable!("the loop returns on its second pass")
}

/// Compass search for the local maximum of the density starting at `at`.
fn climb(s: &Sampler<'_>, mut at: Vec<f64>, mut best: f64) -> Result<f64> {
    let dim = at.len();
    let mut step: Vec<f64> = (0..dim).map(|d| (s.upper[d] - s.lower[d]) / 1024.0).collect();
    let tiny: Vec<f64> = (0..dim).map(|d| (s.upper[d] - s.lower[d]) * 1e-13).collect();
    for _ in 0..10_000 {
        if step.iter().zip(&tiny).all(|(a, b)| a < b) {
            break;
        }
        let mut moved = false;
        for d in 0..dim {
            for sign in [1.0, -1.0] {
                let mut trial = at.clone();
                trial[d] = (trial[d] + sign * step[d]).clamp(s.lower[d], s.upper[d]);
                if !(s.inside)(&trial) {
                    continue;
                }
                let cols: Vec<Vec<f64>> = trial.iter().map(|&v| vec![v]).collect();
                let p = (s.density)(&cols)?[0];
                if p > best {
                    best = p;
                    at = trial;
                    moved = true;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|h| *h *= 0.5);
        }
    }
    Ok(best)
}

fn build_dataset(registry: &Registry, obs: &[VarId], columns: &[Vec<f64>]) -> Result<UnbinnedDataSet> {
    let mut ds = UnbinnedDataSet::new(registry, obs)?;
    let mut row = vec![0.0; obs.len()];
    for i in 0..columns[0].len() {
        for (d, c) in columns.iter().enumerate() {
            row[d] = c[i];
        }
        ds.add_event(&row)?;
    }
    Ok(ds)
}

/// Samples `spec.n_events` events of `root`, a density of the single
/// observable `obs`, at the registry's current parameter values.
pub fn generate_1d(
    tree: &PdfTree,
    root: PdfId,
    registry: &Registry,
    obs: VarId,
    spec: &GenSpec,
) -> Result<UnbinnedDataSet> {
    generate_1d_with_stats(tree, root, registry, obs, spec).map(|(d, _)| d)
}

pub fn generate_1d_with_stats(
    tree: &PdfTree,
    root: PdfId,
    registry: &Registry,
    obs: VarId,
    spec: &GenSpec,
) -> Result<(UnbinnedDataSet, GenStats)> {
    spec.validate()?;
    let node_obs = tree.node(root).observables();
    if node_obs.len() != 1 || node_obs[0].id != obs {
        return Err(Error::InvalidModel(format!(
            "`{}` is not a density of `{}` alone",
            tree.node(root).name(),
            registry.get(obs).name()
        )));
    }
    let var = registry.get(obs);
    let (lo, hi) = (var.lower(), var.upper());
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::UnboundedObservable(var.name().to_string()));
    }
    let snap = registry.snapshot();
    let norms = tree.resolve_norms(root, &snap)?;
    let eval = crate::pdf::Evaluator::new(tree, &snap, &norms);
    let ids = [obs];
    let density = |cols: &[Vec<f64>]| -> Result<Vec<f64>> {
        eval.eval(root, &DataView::new(0, &ids, vec![&cols[0][..]]))
    };
    let scan: Vec<f64> = (0..SCAN_POINTS_1D)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS_1D - 1) as f64)
        .collect();
    let scan_max = density(&[scan])?.into_iter().fold(0.0, f64::max);
    let sampler = Sampler {
        lower: vec![lo],
        upper: vec![hi],
        inside: &|_| true,
        density: &density,
    };
    let (columns, stats) = run(&sampler, spec, scan_max)?;
    Ok((build_dataset(registry, &ids, &columns)?, stats))
}

/// Samples the coherent intensity of `terms` over the Dalitz plot of `ch`.
/// `s12` and `s13` name the output columns and must cover the kinematic box.
pub fn generate_dalitz(
    terms: &[IsobarTerm],
    ch: &DecayChannel,
    registry: &Registry,
    s12: VarId,
    s13: VarId,
    spec: &GenSpec,
) -> Result<UnbinnedDataSet> {
    generate_dalitz_with_stats(terms, ch, registry, s12, s13, spec).map(|(d, _)| d)
}

pub fn generate_dalitz_with_stats(
    terms: &[IsobarTerm],
    ch: &DecayChannel,
    registry: &Registry,
    s12: VarId,
    s13: VarId,
    spec: &GenSpec,
) -> Result<(UnbinnedDataSet, GenStats)> {
    spec.validate()?;
    if terms.is_empty() {
        return Err(Error::InvalidModel(
            "a Dalitz model needs at least one term".into(),
        ));
    }
    let (a12, b12) = ch.s12_range();
    let (a13, b13) = ch.s13_range();
    let intensity = |x: f64, y: f64| total_intensity(terms, DalitzPoint::new(x, y), ch);
    let density = |cols: &[Vec<f64>]| -> Result<Vec<f64>> {
        Ok(cols[0]
            .iter()
            .zip(&cols[1])
            .map(|(&x, &y)| intensity(x, y))
            .collect())
    };
    let inside = |p: &[f64]| ch.in_boundary(DalitzPoint::new(p[0], p[1]));
    let n = SCAN_NODES_DALITZ;
    let mut scan_max: f64 = 0.0;
    for i in 0..n {
        let x = a12 + (b12 - a12) * (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let y = a13 + (b13 - a13) * (j as f64 + 0.5) / n as f64;
            if inside(&[x, y]) {
                scan_max = scan_max.max(intensity(x, y));
            }
        }
    }
    let sampler = Sampler {
        lower: vec![a12, a13],
        upper: vec![b12, b13],
        inside: &inside,
        density: &density,
    };
    let (columns, stats) = run(&sampler, spec, scan_max)?;
    Ok((build_dataset(registry, &[s12, s13], &columns)?, stats))
}

/// Samples a Dalitz node of `tree` at the registry's parameter values.
pub fn generate_dalitz_node(
    tree: &PdfTree,
    node: PdfId,
    registry: &Registry,
    spec: &GenSpec,
) -> Result<UnbinnedDataSet> {
    let NodeKind::Dalitz(d) = tree.node(node).kind() else {
        return Err(Error::InvalidModel(format!(
            "`{}` is not a Dalitz node",
            tree.node(node).name()
        )));
    };
    let terms = d.isobar_terms(&registry.snapshot());
    generate_dalitz(&terms, &d.channel, registry, d.s12, d.s13, spec)
}
