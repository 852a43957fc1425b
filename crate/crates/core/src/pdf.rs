//! Composable probability densities.
//!
//! A [`PdfTree`] is an arena of nodes. Primitive nodes (Gaussian,
//! exponential, polynomial, Dalitz) evaluate an unnormalized kernel over one
//! or two observables. Combination nodes (`add`, `prod`) refer to earlier
//! nodes by [`PdfId`], so the tree is acyclic by construction. Every node has
//! its own normalization slot, keyed by its id.
//!
//! Evaluation is split in two steps: normalizations are resolved first
//! (possibly from a cache, see [`crate::engine::CacheStore`]), then an
//! [`Evaluator`] computes per-event densities over any event range. The
//! evaluator only reads shared state and can be used from many threads.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use crate::amplitude::{
    coefficient, compute_integrals, dalitz_norm, resonance_amplitude, Complex, DalitzPoint, DecayChannel,
    Fingerprint, GridSpec, IntegralCache, IsobarTerm, Pair, Resonance, Spin,
};
use crate::dataset::{DataView, ObservableSpec};
use crate::error::{Error, Result};
use crate::quadrature::Quadrature;
use crate::variable::{ParameterSnapshot, Registry, VarId, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PdfId(pub(crate) usize);

impl PdfId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One resonance of a Dalitz model, bound to registry variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceTerm {
    pub name: String,
    pub pair: Pair,
    pub spin: Spin,
    pub mass: VarId,
    pub width: VarId,
    pub magnitude: VarId,
    pub phase: VarId,
}

impl ResonanceTerm {
    pub fn shape(&self, snap: &ParameterSnapshot) -> Resonance {
        Resonance {
            pair: self.pair,
            spin: self.spin,
            mass: snap.value(self.mass),
            width: snap.value(self.width),
        }
    }

    pub fn coefficient(&self, snap: &ParameterSnapshot) -> Complex {
        coefficient(snap.value(self.magnitude), snap.value(self.phase))
    }

    /// Generations of the variables the lineshape depends on.
    pub fn shape_fingerprint(&self, snap: &ParameterSnapshot) -> Fingerprint {
        snap.fingerprint(&[self.mass, self.width])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DalitzSpec {
    pub s12: VarId,
    pub s13: VarId,
    pub channel: DecayChannel,
    pub terms: Vec<ResonanceTerm>,
    pub grid: GridSpec,
}

impl DalitzSpec {
    pub fn shapes(&self, snap: &ParameterSnapshot) -> Vec<Resonance> {
        self.terms.iter().map(|t| t.shape(snap)).collect()
    }

    pub fn fingerprints(&self, snap: &ParameterSnapshot) -> Vec<Fingerprint> {
        self.terms.iter().map(|t| t.shape_fingerprint(snap)).collect()
    }

    pub fn coefficients(&self, snap: &ParameterSnapshot) -> Vec<Complex> {
        self.terms.iter().map(|t| t.coefficient(snap)).collect()
    }

    /// Lineshapes and coefficients at the snapshot's values.
    pub fn isobar_terms(&self, snap: &ParameterSnapshot) -> Vec<IsobarTerm> {
        self.terms
            .iter()
            .map(|t| IsobarTerm {
                resonance: t.shape(snap),
                coefficient: t.coefficient(snap),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// `exp(-(x - mean)^2 / (2 sigma^2))`
    Gaussian { x: VarId, mean: VarId, sigma: VarId },
    /// `exp(alpha x)`
    Exponential { x: VarId, alpha: VarId },
    /// `sum_k a_k x^k`
    Polynomial { x: VarId, coefficients: Vec<VarId> },
    /// `sum_i f_i child_i / norm_i`, last fraction implied.
    Add {
        children: Vec<PdfId>,
        fractions: Vec<VarId>,
    },
    /// `prod_i child_i / norm_i` over disjoint observables.
    Prod { children: Vec<PdfId> },
    /// Coherent isobar sum over the Dalitz plane.
    Dalitz(DalitzSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdfNode {
    id: PdfId,
    name: String,
    kind: NodeKind,
    observables: Vec<ObservableSpec>,
    parameters: Vec<VarId>,
}

impl PdfNode {
    pub fn id(&self) -> PdfId {
        self.id
    }
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn kind(&self) -> &NodeKind {
        &self.kind
    }
    pub fn observables(&self) -> &[ObservableSpec] {
        &self.observables
    }
    /// This node's own parameters; for every kind these are exactly the
    /// variables its normalization depends on.
    pub fn parameters(&self) -> &[VarId] {
        &self.parameters
    }
    pub fn children(&self) -> &[PdfId] {
        match &self.kind {
            NodeKind::Add { children, .. } | NodeKind::Prod { children } => children,
            _ => &[],
        }
    }
    pub fn is_dalitz(&self) -> bool {
        matches!(self.kind, NodeKind::Dalitz(_))
    }
}

/// A node's normalization together with the parameter generations it was
/// computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationValue {
    pub value: f64,
    pub fingerprint: Vec<u64>,
}

/// Arena of density nodes.
#[derive(Debug, Clone, Default)]
pub struct PdfTree {
    nodes: Vec<PdfNode>,
    quadrature: Quadrature,
}

fn observable(registry: &Registry, id: VarId) -> Result<ObservableSpec> {
    let v = registry.get(id);
    if v.kind() != VarKind::Observable {
        return Err(Error::InvalidModel(format!(
            "`{}` is not an observable",
            v.name()
        )));
    }
    Ok(ObservableSpec {
        id,
        name: v.name().to_string(),
        lower: v.lower(),
        upper: v.upper(),
    })
}

fn require_parameters(registry: &Registry, ids: &[VarId]) -> Result<()> {
    for &id in ids {
        let v = registry.get(id);
        if v.kind() != VarKind::Parameter {
            return Err(Error::InvalidModel(format!("`{}` is not a parameter", v.name())));
        }
    }
    Ok(())
}

impl PdfTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Quadrature used for polynomial normalization (64 nodes x 16 panels
    /// unless changed).
    pub fn set_quadrature(&mut self, q: Quadrature) {
        self.quadrature = q;
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn node(&self, id: PdfId) -> &PdfNode {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        name: String,
        kind: NodeKind,
        observables: Vec<ObservableSpec>,
        parameters: Vec<VarId>,
    ) -> PdfId {
        let id = PdfId(self.nodes.len());
        self.nodes.push(PdfNode {
            id,
            name,
            kind,
            observables,
            parameters,
        });
        id
    }

    fn check_child(&self, id: PdfId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::InvalidModel(format!("unknown node {}", id.0)));
        }
        Ok(())
    }

    pub fn gaussian(
        &mut self,
        registry: &Registry,
        name: impl Into<String>,
        x: VarId,
        mean: VarId,
        sigma: VarId,
    ) -> Result<PdfId> {
        let obs = observable(registry, x)?;
        require_parameters(registry, &[mean, sigma])?;
        Ok(self.push(
            name.into(),
            NodeKind::Gaussian { x, mean, sigma },
            vec![obs],
            vec![mean, sigma],
        ))
    }

    pub fn exponential(
        &mut self,
        registry: &Registry,
        name: impl Into<String>,
        x: VarId,
        alpha: VarId,
    ) -> Result<PdfId> {
        let obs = observable(registry, x)?;
        require_parameters(registry, &[alpha])?;
        Ok(self.push(
            name.into(),
            NodeKind::Exponential { x, alpha },
            vec![obs],
            vec![alpha],
        ))
    }

    /// Coefficients are in increasing power, starting at the constant term.
    pub fn polynomial(
        &mut self,
        registry: &Registry,
        name: impl Into<String>,
        x: VarId,
        coefficients: &[VarId],
    ) -> Result<PdfId> {
        let obs = observable(registry, x)?;
        if coefficients.is_empty() {
            return Err(Error::InvalidModel("polynomial needs a coefficient".into()));
        }
        require_parameters(registry, coefficients)?;
        Ok(self.push(
            name.into(),
            NodeKind::Polynomial {
                x,
                coefficients: coefficients.to_vec(),
            },
            vec![obs],
            coefficients.to_vec(),
        ))
    }

    /// Fraction-weighted sum. `fractions.len()` must be `children.len() - 1`;
    /// the last child gets `1 - sum(fractions)`.
    pub fn add(
        &mut self,
        registry: &Registry,
        name: impl Into<String>,
        children: &[PdfId],
        fractions: &[VarId],
    ) -> Result<PdfId> {
        if children.len() < 2 || fractions.len() + 1 != children.len() {
            return Err(Error::InvalidModel(format!(
                "add needs n >= 2 children and n - 1 fractions, got {} and {}",
                children.len(),
                fractions.len()
            )));
        }
        for &c in children {
            self.check_child(c)?;
        }
        require_parameters(registry, fractions)?;
        let mut sum = 0.0;
        for &f in fractions {
            let v = registry.value(f);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::FractionOutOfRange);
            }
            sum += v;
        }
        if sum > 1.0 {
            return Err(Error::FractionOutOfRange);
        }
        let mut observables: Vec<ObservableSpec> = Vec::new();
        for &c in children {
            for o in &self.nodes[c.0].observables {
                if !observables.iter().any(|e| e.id == o.id) {
                    observables.push(o.clone());
                }
            }
        }
        Ok(self.push(
            name.into(),
            NodeKind::Add {
                children: children.to_vec(),
                fractions: fractions.to_vec(),
            },
            observables,
            fractions.to_vec(),
        ))
    }

    /// Product of components over pairwise disjoint observables.
    pub fn prod(&mut self, name: impl Into<String>, children: &[PdfId]) -> Result<PdfId> {
        if children.is_empty() {
            return Err(Error::InvalidModel("prod needs at least one child".into()));
        }
        let mut observables: Vec<ObservableSpec> = Vec::new();
        for &c in children {
            self.check_child(c)?;
            for o in &self.nodes[c.0].observables {
                if observables.iter().any(|e| e.id == o.id) {
                    return Err(Error::OverlappingObservables);
                }
                observables.push(o.clone());
            }
        }
        Ok(self.push(
            name.into(),
            NodeKind::Prod {
                children: children.to_vec(),
            },
            observables,
            Vec::new(),
        ))
    }

    /// Isobar model over observables `s12` and `s13`.
    pub fn dalitz(
        &mut self,
        registry: &Registry,
        name: impl Into<String>,
        s12: VarId,
        s13: VarId,
        channel: DecayChannel,
        terms: Vec<ResonanceTerm>,
        grid: GridSpec,
    ) -> Result<PdfId> {
        if terms.is_empty() {
            return Err(Error::InvalidModel("Dalitz model has no resonances".into()));
        }
        if grid.n12.min(grid.n13) < GridSpec::MIN_NODES {
            return Err(Error::DegenerateGrid(grid.n12.min(grid.n13)));
        }
        let observables = vec![observable(registry, s12)?, observable(registry, s13)?];
        let mut parameters = Vec::with_capacity(4 * terms.len());
        for t in &terms {
            parameters.extend([t.mass, t.width, t.magnitude, t.phase]);
        }
        require_parameters(registry, &parameters)?;
        for t in &terms {
            if !(registry.value(t.mass) > 0.0 && registry.value(t.width) > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "resonance `{}` needs positive mass and width",
                    t.name
                )));
            }
        }
        Ok(self.push(
            name.into(),
            NodeKind::Dalitz(DalitzSpec {
                s12,
                s13,
                channel,
                terms,
                grid,
            }),
            observables,
            parameters,
        ))
    }

    /// `root` and its descendants, children before parents.
    pub fn subtree(&self, root: PdfId) -> Vec<PdfId> {
        fn visit(tree: &PdfTree, id: PdfId, out: &mut Vec<PdfId>) {
            for &c in tree.node(id).children() {
                visit(tree, c, out);
            }
            if !out.contains(&id) {
                out.push(id);
            }
        }
        let mut out = Vec::new();
        visit(self, root, &mut out);
        out
    }

    /// Every parameter the subtree depends on, in registry order.
    pub fn parameters(&self, root: PdfId) -> Vec<VarId> {
        let mut ids: Vec<VarId> = self
            .subtree(root)
            .into_iter()
            .flat_map(|n| self.node(n).parameters.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Analytic or quadrature normalization of one node, computed from
    /// scratch. Combination nodes do not need their children's values: their
    /// children are normalized individually.
    pub fn normalize(&self, node: PdfId, snap: &ParameterSnapshot) -> Result<NormalizationValue> {
        let (value, _) = self.normalize_counted(node, snap, None)?;
        Ok(NormalizationValue {
            value,
            fingerprint: snap.fingerprint(&self.node(node).parameters),
        })
    }

    /// Returns the normalization and the number of kernel evaluations spent.
    /// Dalitz nodes take their integral matrix from `integrals` when given.
    pub(crate) fn normalize_counted(
        &self,
        node: PdfId,
        snap: &ParameterSnapshot,
        integrals: Option<&IntegralCache>,
    ) -> Result<(f64, u64)> {
        let n = self.node(node);
        let (value, calls) = match &n.kind {
            NodeKind::Gaussian { mean, sigma, .. } => {
                let o = &n.observables[0];
                (
                    gaussian_integral(snap.value(*mean), snap.value(*sigma), o.lower, o.upper),
                    1,
                )
            }
            NodeKind::Exponential { alpha, .. } => {
                let o = &n.observables[0];
                let v = exponential_integral(snap.value(*alpha), o.lower, o.upper)
                    .ok_or_else(|| Error::UnboundedObservable(o.name.clone()))?;
                (v, 1)
            }
            NodeKind::Polynomial { coefficients, .. } => {
                let o = &n.observables[0];
                if !(o.lower.is_finite() && o.upper.is_finite()) {
                    return Err(Error::UnboundedObservable(o.name.clone()));
                }
                let coeffs: Vec<f64> = coefficients.iter().map(|&c| snap.value(c)).collect();
                let v = self
                    .quadrature
                    .integrate(o.lower, o.upper, |x| horner(&coeffs, x));
                (v, self.quadrature.evaluations())
            }
            NodeKind::Add { children, fractions } => {
                let f = completed_fractions(fractions, snap);
                let mut v = 0.0;
                for (fi, &c) in f.iter().zip(children) {
                    v += fi * self.missing_volume(&n.observables, c)?;
                }
                (v, 1)
            }
            NodeKind::Prod { children } => {
                let mut v = 1.0;
                for &c in children {
                    v *= self.missing_volume(&self.node(c).observables, c)?;
                }
                (v, 1)
            }
            NodeKind::Dalitz(spec) => {
                let owned;
                let cache = match integrals {
                    Some(c) => c,
                    None => {
                        owned = compute_integrals(
                            &spec.shapes(snap),
                            &spec.fingerprints(snap),
                            &spec.channel,
                            spec.grid,
                            None,
                        )?;
                        &owned
                    }
                };
                let v = dalitz_norm(&spec.coefficients(snap), cache)?;
                (v, 1)
            }
        };
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveNorm(value));
        }
        Ok((value, calls))
    }

    /// Volume of the observables in `outer` that `child` does not depend on.
    fn missing_volume(&self, outer: &[ObservableSpec], child: PdfId) -> Result<f64> {
        let inner = &self.node(child).observables;
        let mut v = 1.0;
        for o in outer {
            if !inner.iter().any(|i| i.id == o.id) {
                let w = o.upper - o.lower;
                if !w.is_finite() {
                    return Err(Error::UnboundedObservable(o.name.clone()));
                }
                v *= w;
            }
        }
        Ok(v)
    }

    /// Unnormalized density of `node` at every event of `data`, with
    /// normalizations computed from scratch.
    pub fn eval_batch(&self, node: PdfId, data: &DataView<'_>, snap: &ParameterSnapshot) -> Result<Vec<f64>> {
        let norms = self.resolve_norms(node, snap)?;
        Evaluator::new(self, snap, &norms).eval(node, data)
    }

    /// Uncached normalizations for the subtree under `root`.
    pub fn resolve_norms(&self, root: PdfId, snap: &ParameterSnapshot) -> Result<Norms> {
        let mut norms = Norms::new(self.len());
        for id in self.subtree(root) {
            norms.set(id, self.normalize(id, snap)?.value);
        }
        Ok(norms)
    }
}

fn completed_fractions(fractions: &[VarId], snap: &ParameterSnapshot) -> Vec<f64> {
    let mut f: Vec<f64> = fractions.iter().map(|&id| snap.value(id)).collect();
    let rest = 1.0 - f.iter().sum::<f64>();
    f.push(rest);
    f
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// Integral of `exp(-(x - mean)^2 / (2 sigma^2))` over `[lo, hi]`.
///
/// Uses `erfc` on whichever side keeps the difference away from cancellation.
pub fn gaussian_integral(mean: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let scale = sigma * (PI / 2.0).sqrt();
    let a = (lo - mean) / sigma * FRAC_1_SQRT_2;
    let b = (hi - mean) / sigma * FRAC_1_SQRT_2;
    let diff = if a >= 0.0 {
        libm::erfc(a) - libm::erfc(b)
    } else if b <= 0.0 {
        libm::erfc(-b) - libm::erfc(-a)
    } else {
        libm::erf(b) - libm::erf(a)
    };
    scale * diff
}

/// Integral of `exp(alpha x)` over `[lo, hi]`, or `None` when it diverges.
pub fn exponential_integral(alpha: f64, lo: f64, hi: f64) -> Option<f64> {
    if lo.is_finite() && hi.is_finite() {
        if alpha == 0.0 {
            return Some(hi - lo);
        }
        // exp(a lo) * (exp(a (hi - lo)) - 1) / a, stable for small a
        return Some((alpha * lo).exp() * (alpha * (hi - lo)).exp_m1() / alpha);
    }
    if alpha < 0.0 && lo.is_finite() {
        return Some(-(alpha * lo).exp() / alpha);
    }
    if alpha > 0.0 && hi.is_finite() {
        return Some((alpha * hi).exp() / alpha);
    }
    None
}

/// Resolved normalization per node id.
#[derive(Debug, Clone, PartialEq)]
pub struct Norms {
    values: Vec<f64>,
}

impl Norms {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            values: vec![f64::NAN; n_nodes],
        }
    }

    pub fn get(&self, id: PdfId) -> f64 {
        self.values[id.0]
    }

    pub fn set(&mut self, id: PdfId, v: f64) {
        if id.0 >= self.values.len() {
            self.values.resize(id.0 + 1, f64::NAN);
        }
        self.values[id.0] = v;
    }
}

/// Per-term amplitudes of a Dalitz node at every event of one dataset,
/// stored one column per term.
pub type EventAmplitudes = Vec<Arc<Vec<Complex>>>;

/// Read-only evaluation context: tree, parameter values, resolved norms and
/// optional per-event amplitude columns.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'a> {
    tree: &'a PdfTree,
    snap: &'a ParameterSnapshot,
    norms: &'a Norms,
    amplitudes: Option<&'a HashMap<PdfId, EventAmplitudes>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(tree: &'a PdfTree, snap: &'a ParameterSnapshot, norms: &'a Norms) -> Self {
        Self {
            tree,
            snap,
            norms,
            amplitudes: None,
        }
    }

    /// Use cached amplitude columns (indexed by global event index).
    pub fn with_amplitudes(mut self, amps: &'a HashMap<PdfId, EventAmplitudes>) -> Self {
        self.amplitudes = Some(amps);
        self
    }

    pub fn norm(&self, id: PdfId) -> f64 {
        self.norms.get(id)
    }

    pub fn snapshot(&self) -> &'a ParameterSnapshot {
        self.snap
    }

    pub fn tree(&self) -> &'a PdfTree {
        self.tree
    }

    /// Unnormalized density of `node` per event of `data`.
    pub fn eval(&self, node: PdfId, data: &DataView<'_>) -> Result<Vec<f64>> {
        let n = self.tree.node(node);
        let snap = self.snap;
        let mut out = match &n.kind {
            NodeKind::Gaussian { x, mean, sigma } => {
                let (mu, s) = (snap.value(*mean), snap.value(*sigma));
                let k = -0.5 / (s * s);
                data.column(*x)?
                    .iter()
                    .map(|&v| (k * (v - mu) * (v - mu)).exp())
                    .collect()
            }
            NodeKind::Exponential { x, alpha } => {
                let a = snap.value(*alpha);
                data.column(*x)?.iter().map(|&v| (a * v).exp()).collect()
            }
            NodeKind::Polynomial { x, coefficients } => {
                let c: Vec<f64> = coefficients.iter().map(|&id| snap.value(id)).collect();
                let out: Vec<f64> = data.column(*x)?.iter().map(|&v| horner(&c, v)).collect();
                if let Some(i) = out.iter().position(|&v| v < 0.0) {
                    return Err(Error::NegativeDensity(data.offset() + i));
                }
                out
            }
            NodeKind::Add { children, fractions } => {
                let f = completed_fractions(fractions, snap);
                let mut out = vec![0.0; data.len()];
                for (fi, &c) in f.iter().zip(children) {
                    let w = fi / self.norm(c);
                    for (o, v) in out.iter_mut().zip(self.eval(c, data)?) {
                        *o += w * v;
                    }
                }
                out
            }
            NodeKind::Prod { children } => {
                let mut out = vec![1.0; data.len()];
                for &c in children {
                    let inv = 1.0 / self.norm(c);
                    for (o, v) in out.iter_mut().zip(self.eval(c, data)?) {
                        *o *= v * inv;
                    }
                }
                out
            }
            NodeKind::Dalitz(spec) => self.eval_dalitz(node, spec, data)?,
        };
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDensity(data.offset() + i));
        }
        // -0.0 from sign-flipped kernels is still zero density
        for v in &mut out {
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        Ok(out)
    }

    fn eval_dalitz(&self, node: PdfId, spec: &DalitzSpec, data: &DataView<'_>) -> Result<Vec<f64>> {
        let s12 = data.column(spec.s12)?;
        let s13 = data.column(spec.s13)?;
        let coeffs = spec.coefficients(self.snap);
        let ch = &spec.channel;
        let cached = self
            .amplitudes
            .and_then(|m| m.get(&node))
            .filter(|cols| cols.iter().all(|c| c.len() >= data.offset() + data.len()));
        let mut out = Vec::with_capacity(data.len());
        match cached {
            Some(cols) => {
                let start = data.offset();
                for i in 0..data.len() {
                    let p = DalitzPoint::new(s12[i], s13[i]);
                    if !ch.in_boundary(p) {
                        out.push(0.0);
                        continue;
                    }
                    let mut amp = Complex::new(0.0, 0.0);
                    for (c, col) in coeffs.iter().zip(cols) {
                        amp += c * col[start + i];
                    }
                    out.push(amp.norm_sqr());
                }
            }
            None => {
                let shapes = spec.shapes(self.snap);
                for i in 0..data.len() {
                    let p = DalitzPoint::new(s12[i], s13[i]);
                    if !ch.in_boundary(p) {
                        out.push(0.0);
                        continue;
                    }
                    let mut amp = Complex::new(0.0, 0.0);
                    for (c, r) in coeffs.iter().zip(&shapes) {
                        amp += c * resonance_amplitude(r, p, ch);
                    }
                    out.push(amp.norm_sqr());
                }
            }
        }
        Ok(out)
    }

    /// Normalized density of `node` at one point given as `(observable, value)`
    /// pairs.
    pub fn density_at(&self, node: PdfId, point: &[(VarId, f64)]) -> Result<f64> {
        let ids: Vec<VarId> = point.iter().map(|p| p.0).collect();
        let cols: Vec<[f64; 1]> = point.iter().map(|p| [p.1]).collect();
        let view = DataView::new(0, &ids, cols.iter().map(|c| &c[..]).collect());
        Ok(self.eval(node, &view)?[0] / self.norm(node))
    }
}
