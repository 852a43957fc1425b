//! Observables, parameters and the registry that owns them.
//!
//! Every [`Variable`] carries a generation counter that is bumped whenever
//! its stored value changes bit-for-bit. Caches elsewhere in the crate
//! fingerprint themselves with these counters instead of comparing values.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Whether a variable is a data dimension or a fitted quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Observable,
    Parameter,
}

/// Handle to a variable inside a [`Registry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named real quantity: either an observable with a valid range or a
/// parameter with bounds and a finite-difference step.
///
/// Unbounded sides are represented by infinite limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    name: String,
    value: f64,
    lower: f64,
    upper: f64,
    step: f64,
    fixed: bool,
    kind: VarKind,
    generation: u64,
    error: Option<f64>,
}

impl Variable {
    /// An observable with range `[lower, upper]`. Its value is the range midpoint
    /// (or zero when the range is infinite).
    pub fn observable(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        let value = if lower.is_finite() && upper.is_finite() {
            0.5 * (lower + upper)
        } else if lower.is_finite() {
            lower
        } else if upper.is_finite() {
            upper
        } else {
            0.0
        };
        Self {
            name: name.into(),
            value,
            lower,
            upper,
            step: 1.0,
            fixed: true,
            kind: VarKind::Observable,
            generation: 0,
            error: None,
        }
    }

    /// An unbounded free parameter. The step defaults to 10% of |value|, or 0.1
    /// for a zero start.
    pub fn parameter(name: impl Into<String>, value: f64) -> Self {
        let step = if value != 0.0 { 0.1 * value.abs() } else { 0.1 };
        Self {
            name: name.into(),
            value,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            step,
            fixed: false,
            kind: VarKind::Parameter,
            generation: 0,
            error: None,
        }
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn fixed(mut self, fixed: bool) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn value(&self) -> f64 {
        self.value
    }
    pub fn lower(&self) -> f64 {
        self.lower
    }
    pub fn upper(&self) -> f64 {
        self.upper
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn is_fixed(&self) -> bool {
        self.fixed
    }
    pub fn kind(&self) -> VarKind {
        self.kind
    }
    pub fn generation(&self) -> u64 {
        self.generation
    }
    /// Uncertainty written back by the last successful fit.
    pub fn error(&self) -> Option<f64> {
        self.error
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() || self.upper.is_finite()
    }

    /// True when `x` lies inside the bounds. Infinite limits never reject, NaN
    /// always does.
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Stores `x`, bumping the generation iff the bit pattern changes.
    pub fn set_value(&mut self, x: f64) -> Result<()> {
        if !self.contains(x) {
            return Err(Error::OutOfBounds {
                name: self.name.clone(),
                value: x,
                lower: self.lower,
                upper: self.upper,
            });
        }
        if x.to_bits() != self.value.to_bits() {
            self.value = x;
            self.generation += 1;
        }
        Ok(())
    }

    pub fn set_fixed(&mut self, fixed: bool) {
        self.fixed = fixed;
    }

    pub(crate) fn set_error(&mut self, error: Option<f64>) {
        self.error = error;
    }

    fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidVariable(format!("`{}`: {why}", self.name)));
        if self.name.is_empty() {
            return bad("empty name");
        }
        if self.lower.is_nan() || self.upper.is_nan() || self.lower > self.upper {
            return bad("bounds are not ordered");
        }
        if self.kind == VarKind::Parameter {
            if !self.contains(self.value) {
                return bad("start value outside bounds");
            }
            if !self.fixed && !(self.step > 0.0 && self.step.is_finite()) {
                return bad("step must be positive");
            }
        }
        Ok(())
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.name, self.value)?;
        if let Some(e) = self.error {
            write!(f, " ± {e}")?;
        }
        Ok(())
    }
}

/// Owns every variable of a fit. Names are unique.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    vars: Vec<Variable>,
    by_name: HashMap<String, VarId>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, var: Variable) -> Result<VarId> {
        var.validate()?;
        if self.by_name.contains_key(var.name()) {
            return Err(Error::DuplicateName(var.name.clone()));
        }
        let id = VarId(self.vars.len());
        self.by_name.insert(var.name.clone(), id);
        self.vars.push(var);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn get_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.vars[id.0]
    }

    pub fn value(&self, id: VarId) -> f64 {
        self.vars[id.0].value
    }

    pub fn set_value(&mut self, id: VarId, x: f64) -> Result<()> {
        self.vars[id.0].set_value(x)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &Variable)> {
        self.vars.iter().enumerate().map(|(i, v)| (VarId(i), v))
    }

    /// Non-fixed parameters in registry order.
    pub fn free_parameters(&self) -> Vec<VarId> {
        self.iter()
            .filter(|(_, v)| v.kind == VarKind::Parameter && !v.fixed)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn snapshot(&self) -> ParameterSnapshot {
        ParameterSnapshot {
            values: self.vars.iter().map(|v| v.value).collect(),
            generations: self.vars.iter().map(|v| v.generation).collect(),
            free: self.free_parameters(),
        }
    }
}

/// Immutable copy of every variable's value and generation, indexed by
/// [`VarId`], plus the ordered list of free parameters.
///
/// Fixed parameters are captured too because densities need their values;
/// [`ParameterSnapshot::free_values`] gives the free-parameter view.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSnapshot {
    values: Vec<f64>,
    generations: Vec<u64>,
    free: Vec<VarId>,
}

impl ParameterSnapshot {
    pub fn value(&self, id: VarId) -> f64 {
        self.values[id.0]
    }

    pub fn generation(&self, id: VarId) -> u64 {
        self.generations[id.0]
    }

    /// Values of every registry entry in registry order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn generations(&self) -> &[u64] {
        &self.generations
    }

    pub fn free(&self) -> &[VarId] {
        &self.free
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.free.iter().map(|&id| self.value(id)).collect()
    }

    pub fn free_generations(&self) -> Vec<u64> {
        self.free.iter().map(|&id| self.generation(id)).collect()
    }

    /// Generation vector for a subset of variables.
    pub fn fingerprint(&self, ids: &[VarId]) -> Vec<u64> {
        ids.iter().map(|&id| self.generation(id)).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn registry_ab() -> (Registry, VarId, VarId) {
        let mut reg = Registry::new();
        let a = reg.add(Variable::parameter("a", 0.0)).unwrap();
        let b = reg.add(Variable::parameter("b", 2.0)).unwrap();
        (reg, a, b)
    }

    #[test]
    fn changed_value_bumps_generation() {
        let mut v = Variable::parameter("v", 1.0);
        v.generation = 3;
        v.set_value(2.0).unwrap();
        assert_eq!(v.generation(), 4);
        v.set_value(2.0).unwrap();
        assert_eq!(v.generation(), 4);
    }

    #[test]
    fn equal_value_is_not_a_change() {
        let mut v = Variable::parameter("v", 1.0);
        v.generation = 3;
        v.set_value(1.0).unwrap();
        assert_eq!(v.generation(), 3);
    }

    #[test]
    fn bound_violation_leaves_variable_untouched() {
        let mut v = Variable::parameter("v", 0.5).with_bounds(0.0, 1.0);
        let before = v.clone();
        assert!(matches!(v.set_value(2.0), Err(Error::OutOfBounds { .. })));
        assert!(v.set_value(f64::NAN).is_err());
        assert_eq!(v, before);
    }

    #[test]
    fn infinite_bounds_never_reject() {
        let mut v = Variable::parameter("v", 0.0);
        v.set_value(1e300).unwrap();
        v.set_value(-1e300).unwrap();
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut reg = Registry::new();
        reg.add(Variable::parameter("a", 0.0)).unwrap();
        assert_eq!(
            reg.add(Variable::parameter("a", 1.0)),
            Err(Error::DuplicateName("a".into()))
        );
    }

    #[test]
    fn invalid_definitions_rejected() {
        let mut reg = Registry::new();
        assert!(reg.add(Variable::parameter("s", 0.5).with_step(0.0)).is_err());
        assert!(reg
            .add(Variable::parameter("b", 2.0).with_bounds(0.0, 1.0))
            .is_err());
        assert!(reg.add(Variable::observable("x", 1.0, 0.0)).is_err());
        // fixed parameters need no step
        reg.add(Variable::parameter("f", 0.5).with_step(0.0).fixed(true))
            .unwrap();
    }

    #[test]
    fn snapshot_captures_values_and_generations() {
        let (mut reg, a, _) = registry_ab();
        reg.set_value(a, 0.5).unwrap();
        reg.set_value(a, 1.0).unwrap();
        let snap = reg.snapshot();
        assert_eq!(snap.values(), &[1.0, 2.0]);
        assert_eq!(snap.generations(), &[2, 0]);

        reg.set_value(a, 1.5).unwrap();
        let next = reg.snapshot();
        assert_ne!(next.values()[0], snap.values()[0]);
        assert_ne!(next.generations()[0], snap.generations()[0]);
        assert_eq!(next.values()[1], snap.values()[1]);
    }

    #[test]
    fn snapshot_of_empty_registry() {
        let snap = Registry::new().snapshot();
        assert!(snap.is_empty());
        assert!(snap.free_values().is_empty());
    }

    #[test]
    fn snapshot_free_view_skips_fixed_and_observables() {
        let mut reg = Registry::new();
        reg.add(Variable::observable("x", 0.0, 1.0)).unwrap();
        let m = reg.add(Variable::parameter("m", 1.0)).unwrap();
        reg.add(Variable::parameter("k", 3.0).fixed(true)).unwrap();
        let snap = reg.snapshot();
        assert_eq!(snap.free(), &[m]);
        assert_eq!(snap.free_values(), vec![1.0]);
    }

    proptest! {
        #[test]
        fn generation_counts_value_changes(xs in prop::collection::vec(-3i32..3, 0..50)) {
            let mut v = Variable::parameter("p", 0.0);
            let mut changes = 0;
            let mut current = 0.0f64;
            for x in xs {
                let x = x as f64;
                if x.to_bits() != current.to_bits() {
                    changes += 1;
                    current = x;
                }
                v.set_value(x).unwrap();
            }
            prop_assert_eq!(v.generation(), changes);
        }

        #[test]
        fn snapshots_without_changes_are_identical(vals in prop::collection::vec(-1e3f64..1e3, 0..10)) {
            let mut reg = Registry::new();
            for (i, x) in vals.iter().enumerate() {
                reg.add(Variable::parameter(format!("p{i}"), *x)).unwrap();
            }
            prop_assert_eq!(reg.snapshot(), reg.snapshot());
        }
    }
}
