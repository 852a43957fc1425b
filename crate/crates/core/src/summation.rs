//! Deterministic floating-point reductions.
//!
//! Sums over events are done in two levels: a fixed-shape pairwise sum inside
//! each block of `block` consecutive events, then an exact (correctly rounded)
//! combination of the per-block results. The second level makes the total a
//! function of the block sums alone, so any grouping of blocks (threads,
//! shards, remote workers) reproduces the serial answer bit-for-bit.

/// Below this length [`pairwise_sum`] adds sequentially.
const PAIRWISE_LEAF: usize = 8;

/// Recursive pairwise sum with a fixed split at `len / 2`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().fold(0.0, |acc, &x| acc + x);
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Block boundaries `[k*block, min((k+1)*block, n))` over `range`, with blocks
/// aligned to multiples of `block` relative to index 0 of `range`.
pub fn blocks(len: usize, block: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..len.div_ceil(block)).map(move |k| k * block..((k + 1) * block).min(len))
}

/// Exact accumulator for binary64 values.
///
/// Keeps the running total as a list of non-overlapping partials
/// (Shewchuk's expansion). [`value`](Self::value) rounds the exact sum once,
/// to nearest with ties to even, so the result does not depend on the order
/// in which values or other accumulators were added. Non-finite inputs are
/// tracked separately and dominate the result.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
    special: f64,
    has_special: bool,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds an accumulator from its partials (e.g. received over a wire).
    pub fn from_partials(partials: &[f64]) -> Self {
        let mut acc = Self::new();
        for &p in partials {
            acc.add(p);
        }
        acc
    }

    pub fn add(&mut self, mut x: f64) {
        if !x.is_finite() {
            self.special += x;
            self.has_special = true;
            return;
        }
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
        if other.has_special {
            self.special += other.special;
            self.has_special = true;
        }
    }

    /// Non-overlapping components in increasing magnitude.
    pub fn partials(&self) -> &[f64] {
        &self.partials
    }

    pub fn value(&self) -> f64 {
        if self.has_special {
            return self.special;
        }
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // half-way case: the remaining partials decide the rounding direction
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = ExactSum::new();
        acc.extend(iter);
        acc
    }
}
