//! Activity models `z: blocks -> [0, inf)` and their truncations.
//!
//! A model is a [`Geometry`] plus an [`ActivityKind`]. Kinds whose value
//! depends only on the scale expose a [`ScaleLaw`], which lets the analytics
//! collapse tree recursions to scalar iterations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blocks::{Block, Geometry};
use crate::error::{Error, Result};
use crate::logreal::LogReal;

/// How a scale-indexed table continues beyond its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    #[default]
    Zero,
    /// Each further scale multiplies the boundary value by `ratio`.
    Geometric(f64),
}

/// A non-negative sequence indexed by scale: finite table plus analytic tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScaleSequence {
    #[serde(default, with = "scale_keys")]
    pub values: BTreeMap<i64, f64>,
    #[serde(default)]
    pub above: Tail,
    #[serde(default)]
    pub below: Tail,
}

impl ScaleSequence {
    pub fn new(values: BTreeMap<i64, f64>, above: Tail, below: Tail) -> Result<Self> {
        let s = Self { values, above, below };
        s.validate()?;
        Ok(s)
    }

    /// The sequence equal to `c` on every scale.
    pub fn constant(c: f64) -> Self {
        Self {
            values: BTreeMap::from([(0, c)]),
            above: Tail::Geometric(1.0),
            below: Tail::Geometric(1.0),
        }
    }

    pub fn from_pairs(pairs: &[(i64, f64)]) -> Self {
        Self { values: pairs.iter().copied().collect(), above: Tail::Zero, below: Tail::Zero }
    }

    pub fn with_above(mut self, t: Tail) -> Self {
        self.above = t;
        self
    }

    pub fn with_below(mut self, t: Tail) -> Self {
        self.below = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (&j, &v) in &self.values {
            if !(v >= 0.0) || v.is_infinite() {
                return Err(Error::Domain(format!("value {v} at scale {j} must be finite and >= 0")));
            }
        }
        for t in [self.above, self.below] {
            if let Tail::Geometric(r) = t {
                if !(r >= 0.0) || r.is_infinite() {
                    return Err(Error::Domain(format!("tail ratio {r} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    fn min_entry(&self) -> Option<(i64, f64)> {
        self.values.iter().next().map(|(&j, &v)| (j, v))
    }

    fn max_entry(&self) -> Option<(i64, f64)> {
        self.values.iter().next_back().map(|(&j, &v)| (j, v))
    }

    pub fn ln_at(&self, j: i64) -> LogReal {
        let (Some((lo, vlo)), Some((hi, vhi))) = (self.min_entry(), self.max_entry()) else {
            return LogReal::Zero;
        };
        if let Some(&v) = self.values.get(&j) {
            return LogReal::from_value(v);
        }
        let (tail, v, steps) = if j > hi {
            (self.above, vhi, j - hi)
        } else if j < lo {
            (self.below, vlo, lo - j)
        } else {
            return LogReal::Zero;
        };
        match tail {
            Tail::Zero => LogReal::Zero,
            Tail::Geometric(r) => LogReal::from_value(v) * LogReal::from_value(r).powf(steps as f64),
        }
    }

    pub fn at(&self, j: i64) -> f64 {
        self.ln_at(j).value()
    }

    /// Smallest scale carrying a nonzero value, if the sequence is bounded below.
    fn lowest(&self) -> Extent {
        match self.min_entry() {
            None => Extent::Empty,
            Some((_, v)) => match self.below {
                Tail::Geometric(r) if r > 0.0 && v > 0.0 => Extent::Unbounded,
                _ => self
                    .values
                    .iter()
                    .find(|(_, &v)| v > 0.0)
                    .map_or(Extent::Empty, |(&j, _)| Extent::At(j)),
            },
        }
    }

    fn highest(&self) -> Extent {
        match self.max_entry() {
            None => Extent::Empty,
            Some((_, v)) => match self.above {
                Tail::Geometric(r) if r > 0.0 && v > 0.0 => Extent::Unbounded,
                _ => self
                    .values
                    .iter()
                    .rev()
                    .find(|(_, &v)| v > 0.0)
                    .map_or(Extent::Empty, |(&j, _)| Extent::At(j)),
            },
        }
    }
}

/// Scale tables are JSON objects whose keys are decimal scale strings.
mod scale_keys {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<i64, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(map.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i64, f64>, D::Error> {
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<i64>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("scale key {k:?} is not an integer")))
            })
            .collect()
    }
}

/// Where the nonzero part of a sequence ends in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    Empty,
    At(i64),
    Unbounded,
}

/// A homogeneous activity reconstructed from prescribed effective activities.
#[derive(Debug, Clone, PartialEq)]
pub struct Designed {
    target: ScaleSequence,
    base_scale: i64,
    /// `prefix[k] = p_{base_scale + k}`, the partial pressures of the design.
    prefix: Vec<f64>,
    branching: f64,
}

/// Scales above the lowest table entry for which design pressures are cached.
const DESIGN_SPAN: usize = 2048;

impl Designed {
    fn new(target: ScaleSequence, geometry: &Geometry) -> Result<Self> {
        target.validate()?;
        if let Tail::Geometric(r) = target.below {
            if r > 0.0 && target.min_entry().is_some_and(|(_, v)| v > 0.0) {
                return Err(Error::Domain(
                    "effective-activity targets must vanish below the table".into(),
                ));
            }
        }
        let b = geometry.branching();
        let base_scale = target.min_entry().map_or(0, |(j, _)| j);
        let mut prefix = Vec::with_capacity(DESIGN_SPAN);
        let mut p = 0.0;
        for k in 0..DESIGN_SPAN {
            let j = base_scale + k as i64;
            let term = target.ln_at(j).ln_1p();
            if let LogReal::Finite(l) = term {
                p += (l - j as f64 * b.ln()).exp();
            }
            prefix.push(p);
        }
        Ok(Self { target, base_scale, prefix, branching: b })
    }

    pub fn target(&self) -> &ScaleSequence {
        &self.target
    }

    /// Partial pressure `p_j` of the design (0 below the table).
    pub fn pressure_through(&self, j: i64) -> f64 {
        if j < self.base_scale {
            return 0.0;
        }
        let k = (j - self.base_scale) as usize;
        self.prefix[k.min(DESIGN_SPAN - 1)]
    }

    /// Full design pressure when the target has no upper tail.
    pub fn pressure(&self) -> f64 {
        self.prefix[DESIGN_SPAN - 1]
    }

    fn ln_z_shifted(&self, j: i64, shift: f64) -> LogReal {
        let zh = self.target.ln_at(j);
        match zh {
            LogReal::Finite(l) => {
                let coef = self.pressure_through(j - 1) - shift;
                LogReal::from_ln(l + self.branching.powf(j as f64) * coef)
            }
            other => other,
        }
    }
}

/// The kinds of activity model.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivityKind {
    /// Scale-wise constant activity `z_j`.
    Homogeneous(ScaleSequence),
    /// Homogeneous activity whose effective activities equal a prescribed table.
    Designed(Box<Designed>),
    /// `z_j = exp(b^j mu - b^(alpha j) J)` for `j >= 0`, zero below, with `b = M^d`.
    Parametric { mu: f64, coupling: f64, alpha: f64 },
    /// Finitely many explicit values over a constant default.
    Explicit { entries: BTreeMap<Block, f64>, default: f64 },
    /// Activity `lambda_j` on the `j`-th step of the staircase partition of the
    /// unit cube and zero elsewhere. Step `j` is the first child of the cube
    /// `C_j`, where `C_0` is the unit cube and `C_{j+1}` is the last child of `C_j`.
    Staircase(ScaleSequence),
    VolumeTruncated { inner: Box<ActivityKind>, window: Block },
    ScaleTruncated { inner: Box<ActivityKind>, depth: i64 },
}

/// An activity model: geometry plus kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityModel {
    geometry: Geometry,
    kind: ActivityKind,
}

/// Scale-only activity on a region of the tree, with an optional floor below
/// which it vanishes.
#[derive(Debug, Clone, Copy)]
pub struct ScaleLaw<'a> {
    pub source: LawSource<'a>,
    pub floor: Option<i64>,
    branching: f64,
    alpha_branching: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum LawSource<'a> {
    Zero,
    Constant(f64),
    Sequence(&'a ScaleSequence),
    Designed(&'a Designed),
    Parametric { mu: f64, coupling: f64, alpha: f64 },
}

impl PartialEq for LawSource<'_> {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (LawSource::Zero, LawSource::Zero) => true,
            (LawSource::Constant(a), LawSource::Constant(b)) => a.to_bits() == b.to_bits(),
            (LawSource::Sequence(a), LawSource::Sequence(b)) => std::ptr::eq(*a, *b),
            (LawSource::Designed(a), LawSource::Designed(b)) => std::ptr::eq(*a, *b),
            (
                LawSource::Parametric { mu: a, coupling: c, alpha: x },
                LawSource::Parametric { mu: b, coupling: d, alpha: y },
            ) => a.to_bits() == b.to_bits() && c.to_bits() == d.to_bits() && x.to_bits() == y.to_bits(),
            _ => false,
        }
    }
}

impl PartialEq for ScaleLaw<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.floor == other.floor
    }
}

/// Large-scale behaviour of the activity, used for tail envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperForm {
    /// No activity above the given scale.
    ZeroAbove(i64),
    /// `ln z_j <= a + slope * j + b^j mu - b^(alpha j) J` for `j >= from`.
    Envelope { from: i64, a: f64, slope: f64, mu: f64, coupling: f64, alpha: f64 },
    /// Effective activities are known exactly and continue geometrically
    /// from `(from, value)` with ratio `ratio` (0 means they stop).
    Effective { from: i64, value: f64, ratio: f64 },
}

impl<'a> ScaleLaw<'a> {
    fn new(source: LawSource<'a>, geometry: &Geometry) -> Self {
        let (alpha, b) = match source {
            LawSource::Parametric { alpha, .. } => (alpha, geometry.branching()),
            _ => (1.0, geometry.branching()),
        };
        Self { source, floor: None, branching: b, alpha_branching: b.powf(alpha) }
    }

    pub fn with_floor(mut self, floor: i64) -> Self {
        self.floor = Some(self.floor.map_or(floor, |f| f.max(floor)));
        self
    }

    pub fn branching(&self) -> f64 {
        self.branching
    }

    pub fn is_zero(&self) -> bool {
        match self.source {
            LawSource::Zero => true,
            LawSource::Constant(c) => c == 0.0,
            _ => self.lowest() == Extent::Empty,
        }
    }

    /// `ln z_j`.
    pub fn ln_z(&self, j: i64) -> LogReal {
        self.ln_z_shifted(j, 0.0)
    }

    /// `ln z_j - b^j * shift`, evaluated without cancellation where possible.
    pub fn ln_z_shifted(&self, j: i64, shift: f64) -> LogReal {
        if self.floor.is_some_and(|f| j < f) {
            return LogReal::Zero;
        }
        let bj = self.branching.powf(j as f64);
        let sub = |z: LogReal| match z {
            LogReal::Finite(l) if shift != 0.0 => LogReal::from_ln(l - bj * shift),
            other => other,
        };
        match self.source {
            LawSource::Zero => LogReal::Zero,
            LawSource::Constant(c) => sub(LogReal::from_value(c)),
            LawSource::Sequence(s) => sub(s.ln_at(j)),
            LawSource::Designed(d) => d.ln_z_shifted(j, shift),
            LawSource::Parametric { mu, coupling, .. } => {
                if j < 0 {
                    LogReal::Zero
                } else {
                    LogReal::from_ln(bj * (mu - shift) - self.alpha_branching.powf(j as f64) * coupling)
                }
            }
        }
    }

    /// The effective activity at `j` when it is known in closed form, which
    /// is the case for designed laws not cut by a floor.
    pub fn exact_effective(&self, j: i64) -> Option<LogReal> {
        match self.source {
            LawSource::Designed(d) if self.floor.is_none_or(|f| f <= d.base_scale) => {
                Some(if self.floor.is_some_and(|f| j < f) { LogReal::Zero } else { d.target.ln_at(j) })
            }
            _ => None,
        }
    }

    /// Lowest scale with nonzero activity.
    pub fn lowest(&self) -> Extent {
        let raw = match self.source {
            LawSource::Zero => Extent::Empty,
            LawSource::Constant(0.0) => Extent::Empty,
            LawSource::Constant(_) => Extent::Unbounded,
            LawSource::Sequence(s) => s.lowest(),
            LawSource::Designed(d) => d.target.lowest(),
            LawSource::Parametric { .. } => Extent::At(0),
        };
        match (raw, self.floor) {
            (Extent::Unbounded, Some(f)) => Extent::At(f),
            (Extent::At(j), Some(f)) => {
                if j >= f {
                    Extent::At(j)
                } else if self.highest_raw() == Extent::Unbounded
                    || matches!(self.highest_raw(), Extent::At(h) if h >= f)
                {
                    Extent::At(f)
                } else {
                    Extent::Empty
                }
            }
            (other, _) => other,
        }
    }

    fn highest_raw(&self) -> Extent {
        match self.source {
            LawSource::Zero => Extent::Empty,
            LawSource::Constant(0.0) => Extent::Empty,
            LawSource::Constant(_) => Extent::Unbounded,
            LawSource::Sequence(s) => s.highest(),
            LawSource::Designed(d) => d.target.highest(),
            LawSource::Parametric { .. } => Extent::Unbounded,
        }
    }

    /// Highest scale with nonzero activity.
    pub fn highest(&self) -> Extent {
        match (self.highest_raw(), self.floor) {
            (Extent::At(h), Some(f)) if h < f => Extent::Empty,
            (h, _) => h,
        }
    }

    /// Whether `sum_{k >= 0} b^k z_{s-k}` is finite, i.e. whether a block of
    /// scale `s` governed by this law has a finite partition function.
    pub fn mass_below_converges(&self) -> bool {
        if self.floor.is_some() {
            return true;
        }
        match self.source {
            LawSource::Zero | LawSource::Parametric { .. } | LawSource::Designed(_) => true,
            LawSource::Constant(c) => c == 0.0,
            LawSource::Sequence(s) => match (s.below, s.min_entry()) {
                (Tail::Geometric(r), Some((_, v))) if r > 0.0 && v > 0.0 => r * self.branching < 1.0,
                _ => true,
            },
        }
    }

    /// Geometric ratio and boundary `(scale, value)` of an infinite lower tail.
    pub fn lower_tail(&self) -> Option<(i64, f64, f64)> {
        if self.floor.is_some() {
            return None;
        }
        match self.source {
            LawSource::Constant(c) if c > 0.0 => Some((0, c, 1.0)),
            LawSource::Sequence(s) => match (s.below, s.min_entry()) {
                (Tail::Geometric(r), Some((j, v))) if r > 0.0 && v > 0.0 => Some((j, v, r)),
                _ => None,
            },
            _ => None,
        }
    }

    /// Large-scale form of the activity.
    pub fn upper_form(&self) -> UpperForm {
        let linear = |seq: &ScaleSequence, mu: f64| match seq.highest() {
            Extent::Empty => UpperForm::ZeroAbove(i64::MIN),
            Extent::At(h) => UpperForm::ZeroAbove(h),
            Extent::Unbounded => {
                let (j, v) = seq.max_entry().expect("unbounded tail has an entry");
                let Tail::Geometric(r) = seq.above else { unreachable!("unbounded tail is geometric") };
                UpperForm::Envelope {
                    from: j,
                    a: v.ln() - j as f64 * r.ln(),
                    slope: r.ln(),
                    mu,
                    coupling: 0.0,
                    alpha: 0.5,
                }
            }
        };
        match self.source {
            LawSource::Zero => UpperForm::ZeroAbove(i64::MIN),
            LawSource::Constant(0.0) => UpperForm::ZeroAbove(i64::MIN),
            LawSource::Constant(c) => {
                UpperForm::Envelope { from: i64::MIN, a: c.ln(), slope: 0.0, mu: 0.0, coupling: 0.0, alpha: 0.5 }
            }
            LawSource::Sequence(s) => linear(s, 0.0),
            LawSource::Designed(d) if self.exact_effective(0).is_some() => match d.target.max_entry() {
                None => UpperForm::ZeroAbove(i64::MIN),
                Some((j, v)) => match d.target.above {
                    Tail::Geometric(r) if r > 0.0 && v > 0.0 => UpperForm::Effective { from: j, value: v, ratio: r },
                    _ => UpperForm::Effective { from: j, value: v, ratio: 0.0 },
                },
            },
            LawSource::Designed(d) => linear(&d.target, d.pressure()),
            LawSource::Parametric { mu, coupling, alpha } => {
                UpperForm::Envelope { from: 0, a: 0.0, slope: 0.0, mu, coupling, alpha }
            }
        }
    }

    /// Closed-form stability threshold `limsup b^-j ln z_j`.
    pub fn theta_star(&self) -> f64 {
        match self.source {
            LawSource::Parametric { mu, .. } => mu,
            LawSource::Designed(d) => match d.target.highest() {
                Extent::Unbounded => d.pressure(),
                _ => f64::NEG_INFINITY,
            },
            _ => match self.highest() {
                Extent::Unbounded => 0.0,
                _ => f64::NEG_INFINITY,
            },
        }
    }
}

impl ActivityModel {
    pub fn new(geometry: Geometry, kind: ActivityKind) -> Result<Self> {
        let m = Self { geometry, kind };
        m.validate_kind(&m.kind)?;
        Ok(m)
    }

    pub fn homogeneous(geometry: Geometry, seq: ScaleSequence) -> Result<Self> {
        Self::new(geometry, ActivityKind::Homogeneous(seq))
    }

    pub fn parametric(geometry: Geometry, mu: f64, coupling: f64, alpha: f64) -> Result<Self> {
        Self::new(geometry, ActivityKind::Parametric { mu, coupling, alpha })
    }

    pub fn explicit(geometry: Geometry, entries: BTreeMap<Block, f64>, default: f64) -> Result<Self> {
        Self::new(geometry, ActivityKind::Explicit { entries, default })
    }

    pub fn staircase(geometry: Geometry, lambdas: ScaleSequence) -> Result<Self> {
        Self::new(geometry, ActivityKind::Staircase(lambdas))
    }

    /// The zero activity.
    pub fn zero(geometry: Geometry) -> Self {
        Self { geometry, kind: ActivityKind::Homogeneous(ScaleSequence::default()) }
    }

    /// Homogeneous `z ≡ c` on scales `>= -n`, the standard small test system.
    pub fn constant_truncated(geometry: Geometry, c: f64, n: i64) -> Self {
        Self::zero(geometry).with_kind(ActivityKind::ScaleTruncated {
            inner: Box::new(ActivityKind::Homogeneous(ScaleSequence::constant(c))),
            depth: n,
        })
    }

    fn with_kind(mut self, kind: ActivityKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn kind(&self) -> &ActivityKind {
        &self.kind
    }

    fn validate_kind(&self, kind: &ActivityKind) -> Result<()> {
        match kind {
            ActivityKind::Homogeneous(s) | ActivityKind::Staircase(s) => s.validate(),
            ActivityKind::Designed(_) => Ok(()),
            ActivityKind::Parametric { mu, coupling, alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
                }
                if !mu.is_finite() || !coupling.is_finite() {
                    return Err(Error::Domain("mu and J must be finite".into()));
                }
                Ok(())
            }
            ActivityKind::Explicit { entries, default } => {
                if !(*default >= 0.0) || default.is_infinite() {
                    return Err(Error::Domain(format!("default activity {default} must be finite and >= 0")));
                }
                for (b, &v) in entries {
                    if !self.geometry.admits(b) {
                        return Err(Error::DimensionMismatch { expected: self.geometry.dim(), got: b.dim() });
                    }
                    if !(v >= 0.0) || v.is_infinite() {
                        return Err(Error::Domain(format!("activity {v} at {b} must be finite and >= 0")));
                    }
                }
                Ok(())
            }
            ActivityKind::VolumeTruncated { inner, window } => {
                if !self.geometry.admits(window) {
                    return Err(Error::DimensionMismatch { expected: self.geometry.dim(), got: window.dim() });
                }
                self.validate_kind(inner)
            }
            ActivityKind::ScaleTruncated { inner, .. } => self.validate_kind(inner),
        }
    }

    /// Homogeneous model whose effective activities are the given targets.
    pub fn from_effective(geometry: Geometry, target: ScaleSequence) -> Result<Self> {
        let d = Designed::new(target, &geometry)?;
        Ok(Self { geometry, kind: ActivityKind::Designed(Box::new(d)) })
    }

    /// `z_Λ`: the activity restricted to blocks inside `window`.
    pub fn truncate_volume(&self, window: &Block) -> Result<Self> {
        if !self.geometry.admits(window) {
            return Err(Error::DimensionMismatch { expected: self.geometry.dim(), got: window.dim() });
        }
        Ok(self.clone().with_kind(ActivityKind::VolumeTruncated {
            inner: Box::new(self.kind.clone()),
            window: window.clone(),
        }))
    }

    /// `z^(n)`: the activity restricted to scales `>= -n`.
    pub fn truncate_scale(&self, n: i64) -> Self {
        self.clone().with_kind(ActivityKind::ScaleTruncated { inner: Box::new(self.kind.clone()), depth: n })
    }

    /// `ln z(b)`.
    pub fn activity(&self, b: &Block) -> LogReal {
        self.activity_of(&self.kind, b)
    }

    /// Plain-real activity with an overflow flag.
    pub fn activity_value(&self, b: &Block) -> (f64, bool) {
        self.activity(b).value_checked()
    }

    fn activity_of(&self, kind: &ActivityKind, b: &Block) -> LogReal {
        match kind {
            ActivityKind::Explicit { entries, default } => {
                LogReal::from_value(entries.get(b).copied().unwrap_or(*default))
            }
            ActivityKind::Staircase(l) => match self.staircase_step(b) {
                Some(j) => l.ln_at(j),
                None => LogReal::Zero,
            },
            ActivityKind::VolumeTruncated { inner, window } => {
                if self.geometry.contains(window, b) {
                    self.activity_of(inner, b)
                } else {
                    LogReal::Zero
                }
            }
            ActivityKind::ScaleTruncated { inner, depth } => {
                if b.scale < -depth {
                    LogReal::Zero
                } else {
                    self.activity_of(inner, b)
                }
            }
            _ => self.global_law_of(kind).expect("scale-only kind").ln_z(b.scale),
        }
    }

    /// Index of the staircase step equal to `b`, if any.
    fn staircase_step(&self, b: &Block) -> Option<i64> {
        if b.scale >= 0 {
            return None;
        }
        let k = (-b.scale - 1) as u32;
        let m = self.geometry.base() as u128;
        let target = m.checked_pow(k + 1)?.checked_sub(m)?;
        b.index.iter().all(|&i| i == target).then_some(k as i64)
    }

    /// Whether `b` is one of the chain cubes `C_k` or an ancestor of `C_0`.
    fn staircase_chain(&self, b: &Block) -> bool {
        if b.scale >= 0 {
            return b.index.iter().all(|&i| i == 0);
        }
        let k = (-b.scale) as u32;
        match (self.geometry.base() as u128).checked_pow(k) {
            Some(p) => b.index.iter().all(|&i| i == p - 1),
            None => false,
        }
    }

    /// Scale law valid on the whole space, when the model is homogeneous.
    pub fn global_law(&self) -> Option<ScaleLaw<'_>> {
        self.global_law_of(&self.kind)
    }

    fn global_law_of<'a>(&'a self, kind: &'a ActivityKind) -> Option<ScaleLaw<'a>> {
        let g = &self.geometry;
        match kind {
            ActivityKind::Homogeneous(s) => Some(ScaleLaw::new(LawSource::Sequence(s), g)),
            ActivityKind::Designed(d) => Some(ScaleLaw::new(LawSource::Designed(d), g)),
            ActivityKind::Parametric { mu, coupling, alpha } => Some(ScaleLaw::new(
                LawSource::Parametric { mu: *mu, coupling: *coupling, alpha: *alpha },
                g,
            )),
            ActivityKind::Explicit { entries, default } if entries.is_empty() => {
                Some(ScaleLaw::new(LawSource::Constant(*default), g))
            }
            ActivityKind::ScaleTruncated { inner, depth } => {
                self.global_law_of(inner).map(|l| l.with_floor(-depth))
            }
            _ => None,
        }
    }

    /// Scale law governing `b` and all of its descendants, if one exists.
    pub fn law_below(&self, b: &Block) -> Option<ScaleLaw<'_>> {
        self.law_below_of(&self.kind, b)
    }

    fn law_below_of<'a>(&'a self, kind: &'a ActivityKind, b: &Block) -> Option<ScaleLaw<'a>> {
        let g = &self.geometry;
        match kind {
            ActivityKind::Explicit { entries, default } => {
                if entries.keys().any(|e| g.contains(b, e)) {
                    None
                } else {
                    Some(ScaleLaw::new(LawSource::Constant(*default), g))
                }
            }
            ActivityKind::Staircase(_) => {
                if self.staircase_chain(b) || self.staircase_step(b).is_some() {
                    None
                } else {
                    Some(ScaleLaw::new(LawSource::Zero, g))
                }
            }
            ActivityKind::VolumeTruncated { inner, window } => {
                if g.contains(window, b) {
                    self.law_below_of(inner, b)
                } else if g.contains(b, window) {
                    None
                } else {
                    Some(ScaleLaw::new(LawSource::Zero, g))
                }
            }
            ActivityKind::ScaleTruncated { inner, depth } => {
                self.law_below_of(inner, b).map(|l| l.with_floor(-depth))
            }
            _ => self.global_law_of(kind),
        }
    }

    /// Lowest scale carrying activity inside `b` (inclusive).
    pub fn lowest_active_below(&self, b: &Block) -> Extent {
        self.lowest_below_of(&self.kind, b)
    }

    fn lowest_below_of(&self, kind: &ActivityKind, b: &Block) -> Extent {
        if let Some(law) = self.law_below_of(kind, b) {
            return match law.lowest() {
                Extent::At(j) if j > b.scale => Extent::Empty,
                e => e,
            };
        }
        let g = &self.geometry;
        match kind {
            ActivityKind::Explicit { entries, default } => {
                if *default > 0.0 {
                    Extent::Unbounded
                } else {
                    entries
                        .iter()
                        .filter(|(e, &v)| v > 0.0 && g.contains(b, e))
                        .map(|(e, _)| e.scale)
                        .min()
                        .map_or(Extent::Empty, Extent::At)
                }
            }
            ActivityKind::Staircase(l) => {
                // steps inside b are S_j for j >= first
                let first = if b.scale >= 0 { 0 } else { -b.scale };
                if let Some(j) = self.staircase_step(b) {
                    return if l.at(j) > 0.0 { Extent::At(b.scale) } else { Extent::Empty };
                }
                match l.highest() {
                    Extent::Unbounded => Extent::Unbounded,
                    Extent::Empty => Extent::Empty,
                    Extent::At(h) if h < first => Extent::Empty,
                    Extent::At(h) => Extent::At(-h - 1),
                }
            }
            ActivityKind::VolumeTruncated { inner, window } => {
                if g.contains(b, window) {
                    self.lowest_below_of(inner, window)
                } else {
                    Extent::Empty
                }
            }
            ActivityKind::ScaleTruncated { inner, depth } => match self.lowest_below_of(inner, b) {
                Extent::Unbounded => Extent::At(-depth),
                Extent::At(j) => Extent::At(j.max(-depth)),
                Extent::Empty => Extent::Empty,
            },
            _ => unreachable!("scale-only kinds always have a law"),
        }
    }

    /// Whether `sum_{B ⊂ b} z(B) < inf`, equivalently `Ξ_b < inf`.
    pub fn mass_converges_below(&self, b: &Block) -> bool {
        self.mass_of(&self.kind, b)
    }

    fn mass_of(&self, kind: &ActivityKind, b: &Block) -> bool {
        if let Some(law) = self.law_below_of(kind, b) {
            return law.mass_below_converges();
        }
        let g = &self.geometry;
        match kind {
            ActivityKind::Explicit { default, .. } => *default == 0.0,
            ActivityKind::Staircase(l) => {
                self.staircase_step(b).is_some()
                    || match (l.above, l.max_entry()) {
                        (Tail::Geometric(r), Some((_, v))) if r > 0.0 && v > 0.0 => r < 1.0,
                        _ => true,
                    }
            }
            ActivityKind::VolumeTruncated { inner, window } => {
                !g.contains(b, window) || self.mass_of(inner, window)
            }
            ActivityKind::ScaleTruncated { .. } => true,
            _ => unreachable!(),
        }
    }

    /// Highest scale with nonzero activity anywhere, if bounded.
    pub fn top_active_scale(&self) -> Extent {
        self.top_of(&self.kind)
    }

    fn top_of(&self, kind: &ActivityKind) -> Extent {
        match kind {
            ActivityKind::Explicit { entries, default } => {
                if *default > 0.0 {
                    Extent::Unbounded
                } else {
                    entries
                        .iter()
                        .filter(|(_, &v)| v > 0.0)
                        .map(|(e, _)| e.scale)
                        .max()
                        .map_or(Extent::Empty, Extent::At)
                }
            }
            ActivityKind::Staircase(l) => match first_positive_step(l) {
                Some(j) => Extent::At(-j - 1),
                None => Extent::Empty,
            },
            ActivityKind::VolumeTruncated { inner, window } => match self.top_of(inner) {
                Extent::Empty => Extent::Empty,
                Extent::Unbounded => Extent::At(window.scale),
                Extent::At(h) => Extent::At(h.min(window.scale)),
            },
            ActivityKind::ScaleTruncated { inner, depth } => match self.top_of(inner) {
                Extent::At(h) if h < -depth => Extent::Empty,
                e => e,
            },
            _ => self.global_law_of(kind).map_or(Extent::Unbounded, |l| l.highest()),
        }
    }

    /// Whether every block has an infinite partition function.
    pub fn everywhere_infinite(&self) -> bool {
        match &self.kind {
            ActivityKind::Explicit { default, .. } => *default > 0.0,
            _ => self.global_law().is_some_and(|l| !l.mass_below_converges()),
        }
    }

    /// Serializable description of the model.
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec { dim: self.geometry.dim(), base: self.geometry.base(), body: kind_to_body(&self.kind) }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let geometry = Geometry::new(spec.dim, spec.base)?;
        let kind = body_to_kind(&spec.body, &geometry)?;
        Self::new(geometry, kind)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("model serializes")
    }
}

/// Smallest step index `j >= 0` with `lambda_j > 0`.
fn first_positive_step(l: &ScaleSequence) -> Option<i64> {
    let last = l.max_entry().map_or(0, |(j, _)| j.max(0)) + 1;
    (0..=last).find(|&j| l.at(j) > 0.0)
}

/// JSON document describing a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "d", default = "one")]
    pub dim: usize,
    #[serde(rename = "M", default = "two")]
    pub base: u32,
    #[serde(flatten)]
    pub body: ModelBody,
}

fn one() -> usize {
    1
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Homogeneous {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activity: Option<ScaleSequence>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        effective: Option<ScaleSequence>,
    },
    Parametric {
        mu: f64,
        #[serde(rename = "J")]
        coupling: f64,
        alpha: f64,
    },
    Explicit {
        #[serde(default)]
        entries: BTreeMap<Block, f64>,
        #[serde(default)]
        default: f64,
    },
    Staircase {
        lambdas: ScaleSequence,
    },
    VolumeTruncated {
        window: Block,
        inner: Box<ModelBody>,
    },
    ScaleTruncated {
        depth: i64,
        inner: Box<ModelBody>,
    },
}

fn kind_to_body(kind: &ActivityKind) -> ModelBody {
    match kind {
        ActivityKind::Homogeneous(s) => ModelBody::Homogeneous { activity: Some(s.clone()), effective: None },
        ActivityKind::Designed(d) => ModelBody::Homogeneous { activity: None, effective: Some(d.target.clone()) },
        ActivityKind::Parametric { mu, coupling, alpha } => {
            ModelBody::Parametric { mu: *mu, coupling: *coupling, alpha: *alpha }
        }
        ActivityKind::Explicit { entries, default } => {
            ModelBody::Explicit { entries: entries.clone(), default: *default }
        }
        ActivityKind::Staircase(l) => ModelBody::Staircase { lambdas: l.clone() },
        ActivityKind::VolumeTruncated { inner, window } => {
            ModelBody::VolumeTruncated { window: window.clone(), inner: Box::new(kind_to_body(inner)) }
        }
        ActivityKind::ScaleTruncated { inner, depth } => {
            ModelBody::ScaleTruncated { depth: *depth, inner: Box::new(kind_to_body(inner)) }
        }
    }
}

fn body_to_kind(body: &ModelBody, g: &Geometry) -> Result<ActivityKind> {
    Ok(match body {
        ModelBody::Homogeneous { activity, effective } => match (activity, effective) {
            (Some(a), None) => ActivityKind::Homogeneous(a.clone()),
            (None, Some(e)) => ActivityKind::Designed(Box::new(Designed::new(e.clone(), g)?)),
            _ => {
                return Err(Error::Parse(
                    "homogeneous model needs exactly one of \"activity\" or \"effective\"".into(),
                ))
            }
        },
        ModelBody::Parametric { mu, coupling, alpha } => {
            ActivityKind::Parametric { mu: *mu, coupling: *coupling, alpha: *alpha }
        }
        ModelBody::Explicit { entries, default } => {
            ActivityKind::Explicit { entries: entries.clone(), default: *default }
        }
        ModelBody::Staircase { lambdas } => ActivityKind::Staircase(lambdas.clone()),
        ModelBody::VolumeTruncated { window, inner } => ActivityKind::VolumeTruncated {
            inner: Box::new(body_to_kind(inner, g)?),
            window: window.clone(),
        },
        ModelBody::ScaleTruncated { depth, inner } => {
            ActivityKind::ScaleTruncated { inner: Box::new(body_to_kind(inner, g)?), depth: *depth }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> Geometry {
        Geometry::default()
    }

    fn blk(s: &str) -> Block {
        s.parse().unwrap()
    }

    #[test]
    fn parametric_values() {
        let m = ActivityModel::parametric(g1(), 0.0, 0.0, 0.5).unwrap();
        assert_eq!(m.activity(&blk("0:(0)")), LogReal::ONE);
        assert_eq!(m.activity(&blk("-1:(0)")), LogReal::Zero);
        let m = ActivityModel::parametric(Geometry::new(2, 2).unwrap(), 1.0, 2.0, 0.5).unwrap();
        // exp(4^3 * 1 - 4^1.5 * 2) = exp(64 - 16)
        assert!((m.activity(&blk("3:(5,1)")).ln() - 48.0).abs() < 1e-12);
        assert!(ActivityModel::parametric(g1(), 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn parametric_does_not_overflow() {
        let m = ActivityModel::parametric(Geometry::new(2, 2).unwrap(), 1.0, 0.0, 0.5).unwrap();
        let z = m.activity(&blk("40:(0,0)"));
        assert!(z.is_finite());
        let (v, overflow) = m.activity_value(&blk("40:(0,0)"));
        assert!(v.is_infinite() && overflow);
    }

    #[test]
    fn truncations() {
        let m = ActivityModel::homogeneous(g1(), ScaleSequence::constant(1.0)).unwrap();
        let w = blk("0:(0)");
        let mv = m.truncate_volume(&w).unwrap();
        assert_eq!(mv.activity(&blk("0:(1)")), LogReal::Zero);
        assert_eq!(mv.activity(&w), m.activity(&w));
        let ms = m.truncate_scale(2);
        assert_eq!(ms.activity(&blk("-3:(0)")), LogReal::Zero);
        assert_eq!(ms.activity(&blk("-2:(0)")), LogReal::ONE);
    }

    #[test]
    fn sequence_tails() {
        let s = ScaleSequence::from_pairs(&[(0, 1.0)]).with_below(Tail::Geometric(0.25));
        assert!((s.at(-2) - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(s.at(1), 0.0);
        let law = ScaleLaw::new(LawSource::Sequence(&s), &g1());
        assert!(law.mass_below_converges());
        let s2 = ScaleSequence::from_pairs(&[(0, 1.0)]).with_below(Tail::Geometric(1.0));
        let law2 = ScaleLaw::new(LawSource::Sequence(&s2), &g1());
        assert!(!law2.mass_below_converges());
        assert_eq!(law2.highest(), Extent::At(0));
        assert_eq!(law2.lowest(), Extent::Unbounded);
    }

    #[test]
    fn design_examples() {
        let zero = ActivityModel::from_effective(g1(), ScaleSequence::default()).unwrap();
        assert_eq!(zero.activity(&blk("3:(0)")), LogReal::Zero);
        let one = ActivityModel::from_effective(g1(), ScaleSequence::from_pairs(&[(0, 1.0)])).unwrap();
        assert!((one.activity(&blk("0:(0)")).value() - 1.0).abs() < 1e-15);
        let two = ActivityModel::from_effective(g1(), ScaleSequence::from_pairs(&[(0, 1.0), (1, 1.0)])).unwrap();
        assert!((two.activity(&blk("1:(0)")).value() - 4.0).abs() < 1e-12);
        let bad = ScaleSequence::from_pairs(&[(0, -1.0)]);
        assert!(ActivityModel::from_effective(g1(), bad).is_err());
    }

    #[test]
    fn staircase_steps() {
        let m = ActivityModel::staircase(g1(), ScaleSequence::constant(1.0).with_below(Tail::Zero)).unwrap();
        assert_eq!(m.activity(&blk("-1:(0)")), LogReal::ONE);
        assert_eq!(m.activity(&blk("-2:(2)")), LogReal::ONE);
        assert_eq!(m.activity(&blk("-3:(6)")), LogReal::ONE);
        assert_eq!(m.activity(&blk("-2:(3)")), LogReal::Zero);
        assert_eq!(m.activity(&blk("-1:(1)")), LogReal::Zero);
        assert!(m.law_below(&blk("-2:(3)")).is_none());
        assert!(m.law_below(&blk("-2:(1)")).unwrap().is_zero());
        assert!(!m.mass_converges_below(&blk("0:(0)")));
        assert!(m.mass_converges_below(&blk("-1:(0)")));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"d":1,"M":2,"kind":"homogeneous","activity":{"values":{"0":1.0},"below":{"geometric":0.25}}}"#;
        let m = ActivityModel::from_json(text).unwrap();
        assert!((m.activity(&blk("-1:(1)")).value() - 0.25).abs() < 1e-15);
        let back = ActivityModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let p = r#"{"kind":"parametric","mu":-1,"J":1,"alpha":0.5}"#;
        let m = ActivityModel::from_json(p).unwrap();
        assert_eq!(m.geometry().dim(), 1);
        let nested = r#"{"kind":"scale_truncated","depth":2,"inner":{"kind":"explicit","entries":{"-1:(0)":2.0},"default":1.0}}"#;
        let m = ActivityModel::from_json(nested).unwrap();
        assert_eq!(m.activity(&blk("-3:(0)")), LogReal::Zero);
        assert!((m.activity(&blk("-1:(0)")).value() - 2.0).abs() < 1e-15);
        assert!(ActivityModel::from_json(r#"{"kind":"homogeneous"}"#).is_err());
    }
}
