//! Column-major event storage.
//!
//! [`UnbinnedDataSet`] keeps one contiguous `Vec<f64>` per observable so that
//! kernels stream through a single column at a time. [`BinnedDataSet`] holds
//! uniform-bin contents, row-major over its observables. Both are wrapped by
//! [`DataSet`] so fitting code can pick the variant at runtime.

use std::io::{Read, Write};
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;

use crate::error::{Error, Result};
use crate::variable::{Registry, VarId, VarKind};

static NEXT_DATASET_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_DATASET_ID.fetch_add(1, Ordering::Relaxed)
}

/// What to do with a row that has a value outside its observable's range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangePolicy {
    /// Reject the row with [`Error::OutOfRange`].
    #[default]
    Strict,
    /// Drop the row, count it, and log a warning.
    Lenient,
}

/// Observable binding captured when a dataset is created.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    pub id: VarId,
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl ObservableSpec {
    fn from_registry(registry: &Registry, id: VarId) -> Result<Self> {
        let v = registry.get(id);
        if v.kind() != VarKind::Observable {
            return Err(Error::InvalidVariable(format!(
                "`{}` is not an observable",
                v.name()
            )));
        }
        Ok(Self {
            id,
            name: v.name().to_string(),
            lower: v.lower(),
            upper: v.upper(),
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

fn observable_specs(registry: &Registry, observables: &[VarId]) -> Result<Vec<ObservableSpec>> {
    let mut specs = Vec::with_capacity(observables.len());
    for &id in observables {
        if specs.iter().any(|s: &ObservableSpec| s.id == id) {
            return Err(Error::InvalidVariable("observable listed twice".into()));
        }
        specs.push(ObservableSpec::from_registry(registry, id)?);
    }
    Ok(specs)
}

/// Unbinned events in structure-of-arrays layout.
#[derive(Debug, Clone)]
pub struct UnbinnedDataSet {
    id: u64,
    revision: u64,
    observables: Vec<ObservableSpec>,
    ids: Vec<VarId>,
    columns: Vec<Vec<f64>>,
    policy: RangePolicy,
    rejected: usize,
}

impl UnbinnedDataSet {
    pub fn new(registry: &Registry, observables: &[VarId]) -> Result<Self> {
        let observables = observable_specs(registry, observables)?;
        Ok(Self {
            id: next_id(),
            revision: 0,
            ids: observables.iter().map(|o| o.id).collect(),
            columns: vec![Vec::new(); observables.len()],
            observables,
            policy: RangePolicy::Strict,
            rejected: 0,
        })
    }

    pub fn with_policy(mut self, policy: RangePolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Process-unique identity, used to key per-dataset caches.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Bumped on every append.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn observables(&self) -> &[ObservableSpec] {
        &self.observables
    }

    pub fn observable_ids(&self) -> &[VarId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows dropped by the lenient range policy.
    pub fn rejected_count(&self) -> usize {
        self.rejected
    }

    pub fn add_event(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.observables.len() {
            return Err(Error::ShapeMismatch {
                expected: self.observables.len(),
                got: row.len(),
            });
        }
        if let Some((index, &value)) = row
            .iter()
            .enumerate()
            .find(|(i, x)| !self.observables[*i].contains(**x))
        {
            match self.policy {
                RangePolicy::Strict => return Err(Error::OutOfRange { index, value }),
                RangePolicy::Lenient => {
                    self.rejected += 1;
                    warn!(
                        "dropping event: {} = {} outside [{}, {}]",
                        self.observables[index].name,
                        value,
                        self.observables[index].lower,
                        self.observables[index].upper
                    );
                    return Ok(());
                }
            }
        }
        for (col, &x) in self.columns.iter_mut().zip(row) {
            col.push(x);
        }
        self.revision += 1;
        Ok(())
    }

    pub fn column(&self, obs: VarId) -> Result<&[f64]> {
        self.ids
            .iter()
            .position(|&id| id == obs)
            .map(|i| self.columns[i].as_slice())
            .ok_or(Error::UnknownObservable)
    }

    pub fn row(&self, index: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[index]).collect()
    }

    /// Read-only view over `range` of every column.
    pub fn view(&self, range: Range<usize>) -> DataView<'_> {
        DataView {
            offset: range.start,
            len: range.len(),
            ids: &self.ids,
            columns: self.columns.iter().map(|c| &c[range.clone()]).collect(),
        }
    }

    pub fn full_view(&self) -> DataView<'_> {
        self.view(0..self.len())
    }

    /// Copy of rows `range` as a new dataset (same observables, new identity).
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            id: next_id(),
            revision: 0,
            observables: self.observables.clone(),
            ids: self.ids.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
            policy: self.policy,
            rejected: 0,
        }
    }

    /// Reads comma-separated data whose header names the observables.
    /// Lines starting with `#` are skipped; extra columns are ignored.
    pub fn read_csv<R: Read>(
        reader: R,
        registry: &Registry,
        observables: &[VarId],
        policy: RangePolicy,
    ) -> Result<Self> {
        let mut ds = Self::new(registry, observables)?.with_policy(policy);
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let positions = ds
            .observables
            .iter()
            .map(|o| {
                headers
                    .iter()
                    .position(|h| h == o.name)
                    .ok_or_else(|| Error::Parse(format!("missing column `{}`", o.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut row = vec![0.0; positions.len()];
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            for (slot, &pos) in row.iter_mut().zip(&positions) {
                let field = record
                    .get(pos)
                    .ok_or_else(|| Error::Parse(format!("record {} is missing column {pos}", line + 1)))?;
                *slot = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("record {}: `{field}` is not a number", line + 1)))?;
            }
            ds.add_event(&row)?;
        }
        Ok(ds)
    }

    /// Writes the header and rows in the format [`read_csv`](Self::read_csv)
    /// accepts, using shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        wtr.write_record(self.observables.iter().map(|o| o.name.as_str()))
            .map_err(csv_err)?;
        for i in 0..self.len() {
            wtr.write_record(self.columns.iter().map(|c| c[i].to_string()))
                .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Borrowed columns for a contiguous event range. `offset` is the global
/// index of the first event, used when reporting bad events.
#[derive(Debug, Clone)]
pub struct DataView<'a> {
    offset: usize,
    len: usize,
    ids: &'a [VarId],
    columns: Vec<&'a [f64]>,
}

impl<'a> DataView<'a> {
    pub fn new(offset: usize, ids: &'a [VarId], columns: Vec<&'a [f64]>) -> Self {
        let len = columns.first().map_or(0, |c| c.len());
        debug_assert!(columns.iter().all(|c| c.len() == len));
        Self {
            offset,
            len,
            ids,
            columns,
        }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn column(&self, obs: VarId) -> Result<&'a [f64]> {
        self.ids
            .iter()
            .position(|&id| id == obs)
            .map(|i| self.columns[i])
            .ok_or(Error::UnknownObservable)
    }

    pub fn has(&self, obs: VarId) -> bool {
        self.ids.contains(&obs)
    }

    /// Narrower view; `range` is relative to this view.
    pub fn subview(&self, range: Range<usize>) -> DataView<'a> {
        DataView {
            offset: self.offset + range.start,
            len: range.len(),
            ids: self.ids,
            columns: self.columns.iter().map(|c| &c[range.clone()]).collect(),
        }
    }
}

/// Uniform binning of one observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinAxis {
    pub lower: f64,
    pub upper: f64,
    pub n_bins: usize,
}

impl BinAxis {
    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.n_bins as f64
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lower + (bin as f64 + 0.5) * self.width()
    }

    /// Bin index of `x`; the upper edge belongs to the last bin.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.lower && x <= self.upper) {
            return None;
        }
        let b = ((x - self.lower) / self.width()) as usize;
        Some(b.min(self.n_bins - 1))
    }
}

/// Histogram over uniform bins with contents stored row-major (the last
/// observable varies fastest).
#[derive(Debug, Clone)]
pub struct BinnedDataSet {
    observables: Vec<ObservableSpec>,
    ids: Vec<VarId>,
    axes: Vec<BinAxis>,
    contents: Vec<f64>,
}

impl BinnedDataSet {
    /// Bins each observable's finite range into `n_bins[i]` uniform bins.
    pub fn new(registry: &Registry, observables: &[VarId], n_bins: &[usize]) -> Result<Self> {
        if observables.len() != n_bins.len() {
            return Err(Error::ShapeMismatch {
                expected: observables.len(),
                got: n_bins.len(),
            });
        }
        let specs = observable_specs(registry, observables)?;
        let mut axes = Vec::with_capacity(specs.len());
        for (spec, &n) in specs.iter().zip(n_bins) {
            if n == 0 {
                return Err(Error::InvalidVariable(format!("`{}`: zero bins", spec.name)));
            }
            if !(spec.lower.is_finite() && spec.upper.is_finite()) {
                return Err(Error::UnboundedObservable(spec.name.clone()));
            }
            axes.push(BinAxis {
                lower: spec.lower,
                upper: spec.upper,
                n_bins: n,
            });
        }
        let total = n_bins.iter().product();
        Ok(Self {
            ids: specs.iter().map(|o| o.id).collect(),
            observables: specs,
            axes,
            contents: vec![0.0; total],
        })
    }

    pub fn observables(&self) -> &[ObservableSpec] {
        &self.observables
    }

    pub fn observable_ids(&self) -> &[VarId] {
        &self.ids
    }

    pub fn axes(&self) -> &[BinAxis] {
        &self.axes
    }

    pub fn contents(&self) -> &[f64] {
        &self.contents
    }

    pub fn n_bins(&self) -> usize {
        self.contents.len()
    }

    pub fn total(&self) -> f64 {
        self.contents.iter().sum()
    }

    /// Product of bin widths.
    pub fn bin_volume(&self) -> f64 {
        self.axes.iter().map(BinAxis::width).product()
    }

    pub fn bin_center(&self, obs_index: usize, bin: usize) -> Result<f64> {
        let axis = self.axes.get(obs_index).ok_or(Error::IndexOutOfRange {
            index: obs_index,
            limit: self.axes.len(),
        })?;
        if bin >= axis.n_bins {
            return Err(Error::IndexOutOfRange {
                index: bin,
                limit: axis.n_bins,
            });
        }
        Ok(axis.center(bin))
    }

    pub fn set_content(&mut self, flat_bin: usize, value: f64) -> Result<()> {
        if flat_bin >= self.contents.len() {
            return Err(Error::IndexOutOfRange {
                index: flat_bin,
                limit: self.contents.len(),
            });
        }
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidVariable(format!("bin content {value}")));
        }
        self.contents[flat_bin] = value;
        Ok(())
    }

    /// Adds one count at `row`.
    pub fn fill(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.axes.len() {
            return Err(Error::ShapeMismatch {
                expected: self.axes.len(),
                got: row.len(),
            });
        }
        let mut flat = 0;
        for (index, (axis, &x)) in self.axes.iter().zip(row).enumerate() {
            let b = axis.locate(x).ok_or(Error::OutOfRange { index, value: x })?;
            flat = flat * axis.n_bins + b;
        }
        self.contents[flat] += 1.0;
        Ok(())
    }

    /// Bin-center coordinates for every bin, one column per observable, in
    /// the same flat order as [`contents`](Self::contents).
    pub fn center_columns(&self) -> Vec<Vec<f64>> {
        let n = self.contents.len();
        let mut cols = vec![Vec::with_capacity(n); self.axes.len()];
        for flat in 0..n {
            let mut rem = flat;
            for (d, axis) in self.axes.iter().enumerate().rev() {
                cols[d].push(axis.center(rem % axis.n_bins));
                rem /= axis.n_bins;
            }
        }
        cols
    }
}

/// Either flavor of dataset, chosen at runtime.
#[derive(Debug, Clone)]
pub enum DataSet {
    Unbinned(UnbinnedDataSet),
    Binned(BinnedDataSet),
}

impl DataSet {
    pub fn observable_ids(&self) -> &[VarId] {
        match self {
            DataSet::Unbinned(d) => d.observable_ids(),
            DataSet::Binned(d) => d.observable_ids(),
        }
    }
}

impl From<UnbinnedDataSet> for DataSet {
    fn from(d: UnbinnedDataSet) -> Self {
        DataSet::Unbinned(d)
    }
}

impl From<BinnedDataSet> for DataSet {
    fn from(d: BinnedDataSet) -> Self {
        DataSet::Binned(d)
    }
}
