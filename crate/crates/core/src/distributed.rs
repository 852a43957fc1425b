//! Static dataset sharding and ordered reduction of partial NLL sums.
//!
//! Each shard is a contiguous event range. When the dataset holds at least
//! `W * block` events the boundaries fall on reduction-block boundaries, so
//! every shard sees exactly the blocks the single-process engine would, and
//! the reduced total is bitwise equal to [`crate::engine::nll`].
//!
//! Workers may run in-process ([`evaluate_shards`]) or behind a byte stream
//! ([`Worker`], [`Driver`]) speaking length-prefixed frames:
//!
//! ```text
//! u32 LE length of (tag + payload) | u8 tag | payload: f64 LE values
//! tag 1 = parameter snapshot, 2 = partial sum, 3 = shutdown
//! ```
//!
//! A partial-sum payload is `[shard_index, count, sum, partials...]`, where
//! `partials` is the exact non-overlapping expansion of the shard total.

use std::io::{Read, Write};
use std::ops::Range;

use log::warn;

use crate::dataset::UnbinnedDataSet;
use crate::engine::{nll_accumulate, Backend, Engine};
use crate::error::{Error, Result};
use crate::pdf::{Evaluator, PdfId, PdfTree};
use crate::summation::ExactSum;
use crate::variable::{Registry, VarId};

/// Hard cap on a frame body; anything larger is treated as corruption.
pub const MAX_FRAME_BYTES: u32 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub index: usize,
    pub range: Range<usize>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Splits `n` events into `workers` contiguous shards.
///
/// With `n >= workers * block`, whole blocks are dealt out and only the last
/// block may be short. The last `n_blocks % workers` shards get one extra
/// block, so the short block sits in a longer shard and sizes differ by at
/// most one block. Otherwise the split is per event: the first `n % workers` shards
/// hold `ceil(n / workers)` events and the rest `floor(n / workers)`.
pub fn shard(n: usize, workers: usize, block: usize) -> Vec<Shard> {
    let workers = workers.max(1);
    let block = block.max(1);
    let aligned = n >= workers.saturating_mul(block);
    let (unit, units) = if aligned {
        (block, n.div_ceil(block))
    } else {
        (1, n)
    };
    let base = units / workers;
    let extra = units % workers;
    let mut out = Vec::with_capacity(workers);
    let mut start = 0usize;
    for index in 0..workers {
        let bonus = if aligned {
            index >= workers - extra
        } else {
            index < extra
        };
        let take = base + usize::from(bonus);
        let end = (start + take * unit).min(n);
        out.push(Shard {
            index,
            range: start..end,
        });
        start = end;
    }
    out
}

/// A precomputed shard layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    shards: Vec<Shard>,
    n_events: usize,
}

impl ShardPlan {
    pub fn new(n_events: usize, workers: usize, block: usize) -> Self {
        Self {
            shards: shard(n_events, workers, block),
            n_events,
        }
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialSum {
    pub shard_index: usize,
    pub count: usize,
    /// Correctly rounded shard total.
    pub sum: f64,
    /// Exact expansion of the shard total; empty for hand-built sums.
    pub partials: Vec<f64>,
}

impl PartialSum {
    pub fn new(shard_index: usize, count: usize, sum: f64) -> Self {
        Self {
            shard_index,
            count,
            sum,
            partials: Vec::new(),
        }
    }

    fn from_exact(shard_index: usize, count: usize, acc: &ExactSum) -> Self {
        Self {
            shard_index,
            count,
            sum: acc.value(),
            partials: acc.partials().to_vec(),
        }
    }

    fn exact(&self) -> ExactSum {
        if self.partials.is_empty() {
            ExactSum::from_partials(&[self.sum])
        } else {
            ExactSum::from_partials(&self.partials)
        }
    }
}

/// `-sum ln(p / norm)` over the events of `shard` in `ds`.
pub fn partial_nll(
    shard: &Shard,
    eval: &Evaluator<'_>,
    root: PdfId,
    ds: &UnbinnedDataSet,
    backend: &Backend,
) -> Result<PartialSum> {
    if shard.is_empty() {
        return Ok(PartialSum::from_exact(shard.index, 0, &ExactSum::new()));
    }
    let acc = nll_accumulate(eval, root, &ds.view(shard.range.clone()), backend)?;
    Ok(PartialSum::from_exact(shard.index, shard.len(), &acc))
}

/// Evaluates every shard of `plan` in-process. Shards run concurrently on the
/// backend's pool; blocks inside a shard run in order.
pub fn evaluate_shards(
    eval: &Evaluator<'_>,
    root: PdfId,
    ds: &UnbinnedDataSet,
    plan: &ShardPlan,
    backend: &Backend,
) -> Result<Vec<PartialSum>> {
    let inner = Backend::serial().with_block(backend.block())?;
    let shards = plan.shards();
    backend
        .map(shards.len(), |k| partial_nll(&shards[k], eval, root, ds, &inner))
        .into_iter()
        .collect()
}

/// Combines partial sums in ascending shard order. Every index `0..W` must
/// appear exactly once, where `W` is the number of partials.
pub fn reduce(partials: Vec<PartialSum>) -> Result<f64> {
    let n = partials.len();
    reduce_expected(partials, n)
}

/// Like [`reduce`], but for a known shard count, so a partial set that lacks
/// its highest index is reported as missing.
pub fn reduce_expected(mut partials: Vec<PartialSum>, workers: usize) -> Result<f64> {
    partials.sort_by_key(|p| p.shard_index);
    for w in partials.windows(2) {
        if w[0].shard_index == w[1].shard_index {
            return Err(Error::DuplicateShard(w[0].shard_index));
        }
    }
    if let Some(i) = (0..workers).find(|&i| partials.get(i).map(|p| p.shard_index) != Some(i)) {
        return Err(Error::MissingShard(i));
    }
    if let Some(p) = partials.get(workers) {
        return Err(Error::Protocol(format!(
            "unexpected shard index {}",
            p.shard_index
        )));
    }
    let mut acc = ExactSum::new();
    for p in &partials {
        acc.merge(&p.exact());
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    ParamSnapshot(Vec<f64>),
    PartialSum(PartialSum),
    Shutdown,
}

const TAG_PARAMS: u8 = 1;
const TAG_PARTIAL: u8 = 2;
const TAG_SHUTDOWN: u8 = 3;

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<()> {
    let (tag, payload): (u8, Vec<f64>) = match frame {
        Frame::ParamSnapshot(v) => (TAG_PARAMS, v.clone()),
        Frame::PartialSum(p) => {
            let mut v = Vec::with_capacity(3 + p.partials.len());
            v.push(p.shard_index as f64);
            v.push(p.count as f64);
            v.push(p.sum);
            v.extend_from_slice(&p.partials);
            (TAG_PARTIAL, v)
        }
        Frame::Shutdown => (TAG_SHUTDOWN, Vec::new()),
    };
    let len = 1 + 8 * payload.len();
    if len > MAX_FRAME_BYTES as usize {
        return Err(Error::Protocol(format!("frame of {len} bytes is too large")));
    }
    let mut buf = Vec::with_capacity(4 + len);
    buf.extend_from_slice(&(len as u32).to_le_bytes());
    buf.push(tag);
    for x in payload {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame> {
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_le_bytes(len_bytes);
    if len == 0 || len > MAX_FRAME_BYTES || (len - 1) % 8 != 0 {
        return Err(Error::Protocol(format!("bad frame length {len}")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    let values: Vec<f64> = body[1..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    match body[0] {
        TAG_PARAMS => Ok(Frame::ParamSnapshot(values)),
        TAG_PARTIAL => {
            if values.len() < 3 {
                return Err(Error::Protocol("short partial-sum frame".into()));
            }
            let as_index = |x: f64| -> Result<usize> {
                if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
                    Ok(x as usize)
                } else {
                    Err(Error::Protocol(format!("bad integer field {x}")))
                }
            };
            Ok(Frame::PartialSum(PartialSum {
                shard_index: as_index(values[0])?,
                count: as_index(values[1])?,
                sum: values[2],
                partials: values[3..].to_vec(),
            }))
        }
        TAG_SHUTDOWN if values.is_empty() => Ok(Frame::Shutdown),
        tag => Err(Error::Protocol(format!("unknown frame tag {tag}"))),
    }
}

/// Remote side of the stream protocol: owns one shard of events and a private
/// copy of the model's variables.
pub struct Worker {
    index: usize,
    data: UnbinnedDataSet,
    tree: PdfTree,
    root: PdfId,
    registry: Registry,
    parameters: Vec<VarId>,
    engine: Engine,
}

impl Worker {
    /// `data` is the shard's own events, `parameters` the order in which
    /// snapshot values arrive.
    pub fn new(
        index: usize,
        data: UnbinnedDataSet,
        tree: PdfTree,
        root: PdfId,
        registry: Registry,
        parameters: Vec<VarId>,
        block: usize,
    ) -> Result<Self> {
        Ok(Self {
            index,
            data,
            tree,
            root,
            registry,
            parameters,
            engine: Engine::new(Backend::serial().with_block(block)?),
        })
    }

    fn evaluate(&mut self, values: &[f64]) -> Result<PartialSum> {
        if values.len() != self.parameters.len() {
            return Err(Error::ShapeMismatch {
                expected: self.parameters.len(),
                got: values.len(),
            });
        }
        for (&id, &v) in self.parameters.iter().zip(values) {
            self.registry.set_value(id, v)?;
        }
        let snap = self.registry.snapshot();
        let shard = Shard {
            index: self.index,
            range: 0..self.data.len(),
        };
        if shard.is_empty() {
            return Ok(PartialSum::from_exact(self.index, 0, &ExactSum::new()));
        }
        let prepared = self.engine.prepare(&self.tree, self.root, &self.data, &snap)?;
        let eval = prepared.evaluator(&self.tree, &snap);
        partial_nll(&shard, &eval, self.root, &self.data, self.engine.backend())
    }

    /// Answers snapshots with partial sums until a shutdown frame arrives. A
    /// snapshot the shard cannot evaluate (zero density, bad parameter) is
    /// answered with an infinite sum so the driver's line search backs off.
    pub fn serve<S: Read + Write>(mut self, stream: &mut S) -> Result<()> {
        loop {
            match read_frame(stream)? {
                Frame::ParamSnapshot(values) => {
                    let reply = match self.evaluate(&values) {
                        Ok(p) => p,
                        Err(e) => {
                            warn!("worker {}: {e}", self.index);
                            PartialSum::new(self.index, self.data.len(), f64::INFINITY)
                        }
                    };
                    write_frame(stream, &Frame::PartialSum(reply))?;
                }
                Frame::Shutdown => return Ok(()),
                Frame::PartialSum(_) => return Err(Error::Protocol("worker received a partial sum".into())),
            }
        }
    }
}

/// Driver side of the stream protocol, one stream per shard.
pub struct Driver<S: Read + Write> {
    streams: Vec<S>,
}

impl<S: Read + Write> Driver<S> {
    pub fn new(streams: Vec<S>) -> Self {
        Self { streams }
    }

    pub fn workers(&self) -> usize {
        self.streams.len()
    }

    /// Broadcasts `values`, gathers one partial per worker, reduces.
    pub fn evaluate(&mut self, values: &[f64]) -> Result<f64> {
        let frame = Frame::ParamSnapshot(values.to_vec());
        for s in &mut self.streams {
            write_frame(s, &frame)?;
        }
        let mut partials = Vec::with_capacity(self.streams.len());
        for s in &mut self.streams {
            match read_frame(s)? {
                Frame::PartialSum(p) => partials.push(p),
                other => return Err(Error::Protocol(format!("expected partial sum, got {other:?}"))),
            }
        }
        reduce_expected(partials, self.streams.len())
    }

    pub fn shutdown(mut self) -> Result<()> {
        for s in &mut self.streams {
            write_frame(s, &Frame::Shutdown)?;
        }
        Ok(())
    }
}
