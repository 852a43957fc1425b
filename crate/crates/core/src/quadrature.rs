//! Composite Gauss-Legendre quadrature.

use std::sync::OnceLock;

use crate::summation::ExactSum;

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for k in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        // Push the rounding residual of sum(w) - 2 into the central weights so
        // constants integrate exactly.
        let mut total = ExactSum::new();
        weights.iter().for_each(|&w| total.add(w));
        total.add(-2.0);
        let r = total.value();
        if n % 2 == 1 {
            weights[n / 2] -= r;
        } else {
            weights[n / 2 - 1] -= 0.5 * r;
            weights[n / 2] -= 0.5 * r;
        }
        Self { nodes, weights }
    }

    /// Shared 64-point rule.
    pub fn default_rule() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(64))
    }
}

/// Panel layout for composite integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrature {
    pub nodes: usize,
    pub panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            nodes: 64,
            panels: 16,
        }
    }
}

impl Quadrature {
    /// Abscissae and weights over `[lo, hi]`, panel by panel.
    pub fn points(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let owned;
        let rule = if self.nodes == 64 {
            GaussLegendre::default_rule()
        } else {
            owned = GaussLegendre::new(self.nodes);
            &owned
        };
        let h = (hi - lo) / self.panels as f64;
        let mut xs = Vec::with_capacity(self.nodes * self.panels);
        let mut ws = Vec::with_capacity(self.nodes * self.panels);
        for p in 0..self.panels {
            let a = lo + p as f64 * h;
            let mid = a + 0.5 * h;
            for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                xs.push(mid + 0.5 * h * z);
                ws.push(0.5 * h * w);
            }
        }
        (xs, ws)
    }

    /// Panel sums are accumulated exactly on the reference weights and
    /// scaled by the half-width afterwards.
    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let owned;
        let rule = if self.nodes == 64 {
            GaussLegendre::default_rule()
        } else {
            owned = GaussLegendre::new(self.nodes);
            &owned
        };
        let h = (hi - lo) / self.panels as f64;
        let mut total = ExactSum::new();
        for p in 0..self.panels {
            let mid = lo + (p as f64 + 0.5) * h;
            let mut panel = ExactSum::new();
            for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                panel.add(w * f(mid + 0.5 * h * z));
            }
            total.add(0.5 * h * panel.value());
        }
        total.value()
    }

    pub fn evaluations(&self) -> u64 {
        (self.nodes * self.panels) as u64
    }
}
