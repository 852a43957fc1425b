//! Batch evaluation backends, likelihood reductions and the normalization
//! cache.
//!
//! Events are cut into fixed blocks by index (`block` events each, default
//! 4096). Each block's `-ln p` terms are added pairwise; block results are
//! then combined exactly. Blocks never depend on which worker ran them, so
//! serial and pooled evaluation agree to the last bit.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::amplitude::{compute_integrals, resonance_amplitude, DalitzPoint, IntegralCache, Resonance};
use crate::dataset::{BinnedDataSet, DataSet, DataView, UnbinnedDataSet};
use crate::error::{Error, Result};
use crate::pdf::{Evaluator, EventAmplitudes, NodeKind, NormalizationValue, Norms, PdfId, PdfTree};
use crate::summation::{blocks, pairwise_sum, ExactSum};
use crate::variable::ParameterSnapshot;

pub const DEFAULT_BLOCK: usize = 4096;

/// Environment variable that overrides the pool size (`0` = all cores).
pub const WORKERS_ENV: &str = "PARAFIT_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendMode {
    Serial,
    Pool,
}

/// Where batch work runs. Cloning shares the thread pool.
#[derive(Debug, Clone)]
pub struct Backend {
    mode: BackendMode,
    workers: usize,
    block: usize,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Default for Backend {
    fn default() -> Self {
        Self::serial()
    }
}

impl Backend {
    pub fn serial() -> Self {
        Self {
            mode: BackendMode::Serial,
            workers: 1,
            block: DEFAULT_BLOCK,
            pool: None,
        }
    }

    /// A dedicated pool of `workers` threads; `0` means one per core.
    pub fn pool(workers: usize) -> Result<Self> {
        let workers = if workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("parafit-worker-{i}"))
            .build()
            .map_err(|e| Error::InvalidBackend(e.to_string()))?;
        Ok(Self {
            mode: BackendMode::Pool,
            workers,
            block: DEFAULT_BLOCK,
            pool: Some(Arc::new(pool)),
        })
    }

    /// Pool sized by `PARAFIT_WORKERS` when it is set, otherwise `fallback`.
    pub fn from_env(fallback: Backend) -> Result<Self> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => {
                let n: usize = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidBackend(format!("{WORKERS_ENV}={v}")))?;
                Self::pool(n).and_then(|b| b.with_block(fallback.block))
            }
            Err(_) => Ok(fallback),
        }
    }

    /// Reduction block size; must be a power of two.
    pub fn with_block(mut self, block: usize) -> Result<Self> {
        if !block.is_power_of_two() {
            return Err(Error::InvalidBackend(format!(
                "block {block} is not a power of two"
            )));
        }
        self.block = block;
        Ok(self)
    }

    pub fn mode(&self) -> BackendMode {
        self.mode
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn block(&self) -> usize {
        self.block
    }

    /// Runs `f(k)` for `k in 0..n`, returning results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            None => (0..n).map(f).collect(),
        }
    }
}

/// Counters for the normalization cache.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheStats {
    pub hits: u64,
    pub recomputes: u64,
    /// Kernel evaluations spent on normalizations (quadrature nodes, grid
    /// amplitudes, or one per analytic form).
    pub kernel_calls: u64,
    pub normalization_time: Duration,
}

#[derive(Debug, Clone)]
struct AmplitudeEntry {
    revision: u64,
    len: usize,
    shapes: Vec<Resonance>,
    fingerprints: Vec<Vec<u64>>,
    columns: EventAmplitudes,
}

/// Per-node normalization slots plus Dalitz integral matrices and per-event
/// amplitude columns. A store belongs to one registry: fingerprints are
/// generation vectors and are only comparable within it.
#[derive(Debug, Clone, Default)]
pub struct CacheStore {
    norms: HashMap<PdfId, NormalizationValue>,
    integrals: HashMap<PdfId, IntegralCache>,
    amplitudes: HashMap<(u64, PdfId), AmplitudeEntry>,
    stats: CacheStats,
}

impl CacheStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = CacheStats::default();
    }

    pub fn clear(&mut self) {
        self.norms.clear();
        self.integrals.clear();
        self.amplitudes.clear();
    }

    pub fn integrals(&self, node: PdfId) -> Option<&IntegralCache> {
        self.integrals.get(&node)
    }

    /// Normalization of `node`, recomputed only when the generations of the
    /// node's own parameters changed since the stored value was made.
    pub fn cached_norm(
        &mut self,
        tree: &PdfTree,
        node: PdfId,
        snap: &ParameterSnapshot,
    ) -> Result<NormalizationValue> {
        let n = tree.node(node);
        let fingerprint = snap.fingerprint(n.parameters());
        if let Some(hit) = self.norms.get(&node).filter(|e| e.fingerprint == fingerprint) {
            self.stats.hits += 1;
            return Ok(hit.clone());
        }
        let start = Instant::now();
        let (value, calls) = match n.kind() {
            NodeKind::Dalitz(spec) => {
                let cache = compute_integrals(
                    &spec.shapes(snap),
                    &spec.fingerprints(snap),
                    &spec.channel,
                    spec.grid,
                    self.integrals.get(&node),
                )?;
                let fresh = cache.recomputed_terms().iter().filter(|r| **r).count();
                let grid_calls = (fresh * cache.grid().len()) as u64;
                let (v, c) = tree.normalize_counted(node, snap, Some(&cache))?;
                self.integrals.insert(node, cache);
                (v, c + grid_calls)
            }
            _ => tree.normalize_counted(node, snap, None)?,
        };
        self.stats.recomputes += 1;
        self.stats.kernel_calls += calls;
        self.stats.normalization_time += start.elapsed();
        let entry = NormalizationValue { value, fingerprint };
        self.norms.insert(node, entry.clone());
        Ok(entry)
    }

    /// Normalizations for every node under `root`.
    pub fn resolve(&mut self, tree: &PdfTree, root: PdfId, snap: &ParameterSnapshot) -> Result<Norms> {
        let mut norms = Norms::new(tree.len());
        for id in tree.subtree(root) {
            norms.set(id, self.cached_norm(tree, id, snap)?.value);
        }
        Ok(norms)
    }

    /// Per-term amplitude columns of every Dalitz node under `root`,
    /// evaluated at the events of `ds`. Columns of terms whose lineshape is
    /// unchanged are reused.
    pub fn resolve_amplitudes(
        &mut self,
        tree: &PdfTree,
        root: PdfId,
        ds: &UnbinnedDataSet,
        snap: &ParameterSnapshot,
        backend: &Backend,
    ) -> Result<HashMap<PdfId, EventAmplitudes>> {
        let mut out = HashMap::new();
        for id in tree.subtree(root) {
            let NodeKind::Dalitz(spec) = tree.node(id).kind() else {
                continue;
            };
            let shapes = spec.shapes(snap);
            let fingerprints = spec.fingerprints(snap);
            let key = (ds.id(), id);
            let prior = self
                .amplitudes
                .get(&key)
                .filter(|e| e.revision == ds.revision() && e.len == ds.len());
            let s12 = ds.column(spec.s12)?;
            let s13 = ds.column(spec.s13)?;
            let mut columns = Vec::with_capacity(shapes.len());
            for (t, shape) in shapes.iter().enumerate() {
                let reuse = prior.and_then(|p| {
                    let same =
                        t < p.shapes.len() && p.shapes[t] == *shape && p.fingerprints[t] == fingerprints[t];
                    same.then(|| Arc::clone(&p.columns[t]))
                });
                let col = match reuse {
                    Some(c) => c,
                    None => Arc::new(amplitude_column(shape, &spec.channel, s12, s13, backend)),
                };
                columns.push(col);
            }
            self.amplitudes.insert(
                key,
                AmplitudeEntry {
                    revision: ds.revision(),
                    len: ds.len(),
                    shapes,
                    fingerprints,
                    columns: columns.clone(),
                },
            );
            out.insert(id, columns);
        }
        Ok(out)
    }
}

fn amplitude_column(
    shape: &Resonance,
    ch: &crate::amplitude::DecayChannel,
    s12: &[f64],
    s13: &[f64],
    backend: &Backend,
) -> Vec<crate::amplitude::Complex> {
    let ranges: Vec<_> = blocks(s12.len(), backend.block()).collect();
    backend
        .map(ranges.len(), |k| {
            ranges[k]
                .clone()
                .map(|i| resonance_amplitude(shape, DalitzPoint::new(s12[i], s13[i]), ch))
                .collect::<Vec<_>>()
        })
        .concat()
}

/// Everything a worker needs besides the events: resolved normalizations and
/// amplitude columns.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub norms: Norms,
    pub amplitudes: HashMap<PdfId, EventAmplitudes>,
}

impl Prepared {
    pub fn evaluator<'a>(&'a self, tree: &'a PdfTree, snap: &'a ParameterSnapshot) -> Evaluator<'a> {
        Evaluator::new(tree, snap, &self.norms).with_amplitudes(&self.amplitudes)
    }
}

/// `-sum ln(p)` over one block, pairwise. `p <= 0` aborts with the event's
/// global index.
pub fn block_nll(eval: &Evaluator<'_>, root: PdfId, view: &DataView<'_>) -> Result<f64> {
    let norm = eval.norm(root);
    let dens = eval.eval(root, view)?;
    let mut terms = Vec::with_capacity(dens.len());
    for (i, d) in dens.into_iter().enumerate() {
        if d <= 0.0 {
            return Err(Error::NonPositiveDensity(view.offset() + i));
        }
        terms.push(-(d / norm).ln());
    }
    Ok(pairwise_sum(&terms))
}

/// Exact accumulation of block sums over `view`. Blocks start at the view's
/// first event, so a view that begins at a multiple of `backend.block()`
/// produces the same blocks as the full dataset.
pub fn nll_accumulate(
    eval: &Evaluator<'_>,
    root: PdfId,
    view: &DataView<'_>,
    backend: &Backend,
) -> Result<ExactSum> {
    let ranges: Vec<_> = blocks(view.len(), backend.block()).collect();
    let sums = backend.map(ranges.len(), |k| {
        block_nll(eval, root, &view.subview(ranges[k].clone()))
    });
    let mut acc = ExactSum::new();
    for s in sums {
        acc.add(s?);
    }
    Ok(acc)
}

/// Owns a backend and a cache store; the stateful entry point for repeated
/// likelihood evaluation.
#[derive(Debug, Clone, Default)]
pub struct Engine {
    backend: Backend,
    store: CacheStore,
}

impl Engine {
    pub fn new(backend: Backend) -> Self {
        Self {
            backend,
            store: CacheStore::new(),
        }
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut CacheStore {
        &mut self.store
    }

    /// Resolves normalizations and amplitude columns for `ds`.
    pub fn prepare(
        &mut self,
        tree: &PdfTree,
        root: PdfId,
        ds: &UnbinnedDataSet,
        snap: &ParameterSnapshot,
    ) -> Result<Prepared> {
        let norms = self.store.resolve(tree, root, snap)?;
        let start = Instant::now();
        let amplitudes = self
            .store
            .resolve_amplitudes(tree, root, ds, snap, &self.backend)?;
        self.store.stats.normalization_time += start.elapsed();
        Ok(Prepared { norms, amplitudes })
    }

    pub fn nll(
        &mut self,
        tree: &PdfTree,
        root: PdfId,
        ds: &UnbinnedDataSet,
        snap: &ParameterSnapshot,
    ) -> Result<f64> {
        check_coverage(tree, root, ds.observable_ids())?;
        if ds.is_empty() {
            return Err(Error::EmptyDataSet);
        }
        let prepared = self.prepare(tree, root, ds, snap)?;
        let eval = prepared.evaluator(tree, snap);
        Ok(nll_accumulate(&eval, root, &ds.full_view(), &self.backend)?.value())
    }

    pub fn binned_nll(
        &mut self,
        tree: &PdfTree,
        root: PdfId,
        ds: &BinnedDataSet,
        snap: &ParameterSnapshot,
    ) -> Result<f64> {
        check_coverage(tree, root, ds.observable_ids())?;
        let norms = self.store.resolve(tree, root, snap)?;
        binned_nll_with(&Evaluator::new(tree, snap, &norms), root, ds, &self.backend)
    }

    /// Unbinned or binned NLL depending on the dataset flavor.
    pub fn objective(
        &mut self,
        tree: &PdfTree,
        root: PdfId,
        data: &DataSet,
        snap: &ParameterSnapshot,
    ) -> Result<f64> {
        match data {
            DataSet::Unbinned(d) => self.nll(tree, root, d, snap),
            DataSet::Binned(d) => self.binned_nll(tree, root, d, snap),
        }
    }
}

pub(crate) fn check_coverage(tree: &PdfTree, root: PdfId, have: &[crate::variable::VarId]) -> Result<()> {
    if tree.node(root).observables().iter().all(|o| have.contains(&o.id)) {
        Ok(())
    } else {
        Err(Error::UnknownObservable)
    }
}

/// Poisson NLL `sum_b (nu_b - n_b ln nu_b)` with
/// `nu_b = N * p(center_b) * volume`. Empty bins with zero expectation add
/// nothing.
pub fn binned_nll_with(
    eval: &Evaluator<'_>,
    root: PdfId,
    ds: &BinnedDataSet,
    backend: &Backend,
) -> Result<f64> {
    let total = ds.total();
    if !(total > 0.0) {
        return Err(Error::EmptyDataSet);
    }
    let centers = ds.center_columns();
    let view = DataView::new(
        0,
        ds.observable_ids(),
        centers.iter().map(Vec::as_slice).collect(),
    );
    let scale = total * ds.bin_volume() / eval.norm(root);
    let contents = ds.contents();
    let ranges: Vec<_> = blocks(view.len(), backend.block()).collect();
    let sums = backend.map(ranges.len(), |k| -> Result<f64> {
        let r = ranges[k].clone();
        let dens = eval.eval(root, &view.subview(r.clone()))?;
        let mut terms = Vec::with_capacity(dens.len());
        for (d, b) in dens.into_iter().zip(r) {
            let nu = scale * d;
            let n = contents[b];
            if nu < 0.0 || !nu.is_finite() || (nu == 0.0 && n > 0.0) {
                return Err(Error::NonPositiveExpectation(b));
            }
            terms.push(if n > 0.0 { nu - n * nu.ln() } else { nu });
        }
        Ok(pairwise_sum(&terms))
    });
    let mut acc = ExactSum::new();
    for s in sums {
        acc.add(s?);
    }
    Ok(acc.value())
}

/// One-shot NLL with a throwaway cache.
pub fn nll(
    tree: &PdfTree,
    root: PdfId,
    ds: &UnbinnedDataSet,
    snap: &ParameterSnapshot,
    backend: &Backend,
) -> Result<f64> {
    Engine::new(backend.clone()).nll(tree, root, ds, snap)
}

/// One-shot binned NLL with a throwaway cache.
pub fn binned_nll(
    tree: &PdfTree,
    root: PdfId,
    ds: &BinnedDataSet,
    snap: &ParameterSnapshot,
    backend: &Backend,
) -> Result<f64> {
    Engine::new(backend.clone()).binned_nll(tree, root, ds, snap)
}
