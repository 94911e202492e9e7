//! Existence and uniqueness diagnostics: the two summability conditions and
//! the ancestor-chain sums behind them.

use serde::{Deserialize, Serialize};

use super::engine::{Depth, Engine, ScaleRecursion};
use super::pressure::series_upper_ln;
use crate::activities::{ActivityKind, ActivityModel, Extent, UpperForm};
use crate::blocks::Block;
use crate::error::{Error, Result};
use crate::logreal::LogReal;

/// Outcome of a summability check along an ancestor chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Holds,
    Fails { certificate: String },
    Undecided { reason: String },
}

/// Effective activities of the strict ancestors of an anchor block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub anchor: Block,
    /// `(scale, ẑ)` for every evaluated ancestor, lowest first.
    pub terms: Vec<(i64, LogReal)>,
    pub sum_zhat: LogReal,
    /// `Σ ln(1 + ẑ)` over the evaluated ancestors.
    pub sum_log1p: LogReal,
    /// Upper bound on `Σ ẑ` over the ancestors beyond the last term.
    pub tail_bound: LogReal,
    pub status: ChainStatus,
}

impl ChainReport {
    fn new(anchor: &Block) -> Self {
        Self {
            anchor: anchor.clone(),
            terms: Vec::new(),
            sum_zhat: LogReal::Zero,
            sum_log1p: LogReal::Zero,
            tail_bound: LogReal::Zero,
            status: ChainStatus::Holds,
        }
    }

    fn push(&mut self, scale: i64, zhat: LogReal) {
        self.terms.push((scale, zhat));
        self.sum_zhat = self.sum_zhat + zhat;
        self.sum_log1p = self.sum_log1p + zhat.ln_1p();
    }

    pub fn holds(&self) -> bool {
        self.status == ChainStatus::Holds
    }

    pub fn last_scale(&self) -> i64 {
        self.terms.last().map_or(self.anchor.scale, |t| t.0)
    }
}

/// Controls for ancestor-chain summation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOptions {
    /// Stop once the certified tail is below `tol` times the accumulated sum.
    pub tol: f64,
    /// Highest scale examined before giving up.
    pub j_max: i64,
    /// Partial sums above this with non-decreasing terms certify divergence.
    pub threshold: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { tol: 1e-12, j_max: 512, threshold: 1e6 }
    }
}

/// Largest scale at which `b^j` stays comfortably inside `f64`.
pub fn scale_cap(branching: f64) -> i64 {
    (690.0 / branching.ln()).floor() as i64
}

/// Sums `ẑ` over the strict ancestors of `anchor`.
pub fn ancestor_chain(model: &ActivityModel, anchor: &Block, depth: Depth, opts: ChainOptions) -> Result<ChainReport> {
    if !model.geometry().admits(anchor) {
        return Err(Error::DimensionMismatch { expected: model.geometry().dim(), got: anchor.dim() });
    }
    if let Some(law) = model.global_law() {
        return scalar_chain(ScaleRecursion::new(law, depth), anchor, opts);
    }
    let top = model.top_active_scale();
    let bounded_top = match top {
        Extent::Empty => Some(anchor.scale),
        Extent::At(h) => Some(h.max(anchor.scale)),
        Extent::Unbounded => None,
    };
    if let Some(h) = bounded_top {
        let mut report = ChainReport::new(anchor);
        let mut engine = Engine::new(model, depth);
        let g = model.geometry();
        let mut a = anchor.clone();
        while a.scale < h {
            a = g.parent(&a)?;
            let zh = engine.zhat(&a)?;
            report.push(a.scale, zh);
        }
        return Ok(report);
    }
    if depth == Depth::Limit && model.everywhere_infinite() {
        return Ok(ChainReport::new(anchor));
    }
    Err(Error::Refused(
        "ancestor sums need a homogeneous envelope or bounded activity; \
         this model provides neither"
            .into(),
    ))
}

/// Ancestor chain for a homogeneous model: every ancestor at scale `k`
/// has effective activity `ẑ_k`.
pub fn scalar_chain(mut rec: ScaleRecursion<'_>, anchor: &Block, opts: ChainOptions) -> Result<ChainReport> {
    let mut report = ChainReport::new(anchor);
    if rec.is_infinite() {
        return Ok(report);
    }
    let law = *rec.law();
    let b = law.branching();
    let cap = scale_cap(b).min(opts.j_max);
    let form = law.upper_form();
    let mut k = anchor.scale;
    loop {
        k += 1;
        if k > cap {
            report.status = ChainStatus::Undecided {
                reason: format!("no tail certificate up to scale {cap}"),
            };
            return Ok(report);
        }
        let row = rec.row(k);
        report.push(k, row.zhat);

        match form {
            UpperForm::ZeroAbove(h) if k >= h => return Ok(report),
            UpperForm::Effective { from, value, ratio } if k >= from => {
                if ratio == 0.0 {
                    return Ok(report);
                }
                if ratio >= 1.0 && value > 0.0 {
                    report.status = ChainStatus::Fails {
                        certificate: format!(
                            "effective activities continue geometrically from scale {from} with ratio {ratio} >= 1"
                        ),
                    };
                    return Ok(report);
                }
                let tail = LogReal::from_value(value)
                    * LogReal::from_value(ratio).powf((k + 1 - from) as f64)
                    / LogReal::from_value(1.0 - ratio);
                if small_enough(tail, report.sum_log1p, opts.tol) {
                    report.tail_bound = tail;
                    return Ok(report);
                }
            }
            UpperForm::Envelope { from, a, slope, mu, coupling, alpha } if k >= from.saturating_sub(1) => {
                if let Some(tail) = envelope_tail(row.pressure, k + 1, a, slope, mu, coupling, alpha, b) {
                    if small_enough(tail, report.sum_log1p, opts.tol) {
                        report.tail_bound = tail;
                        return Ok(report);
                    }
                }
                if row.pressure == 0.0 && mu == 0.0 && coupling == 0.0 && k >= from {
                    // nothing below: ẑ_l = z_l = exp(a + slope l) for l > k
                    let r = slope.exp();
                    if r >= 1.0 {
                        report.status = ChainStatus::Fails {
                            certificate: format!("undamped activities grow geometrically with ratio {r} >= 1"),
                        };
                        return Ok(report);
                    }
                    let tail = LogReal::from_ln(a + slope * (k + 1) as f64) / LogReal::from_value(1.0 - r);
                    if small_enough(tail, report.sum_log1p, opts.tol) {
                        report.tail_bound = tail;
                        return Ok(report);
                    }
                }
            }
            _ => {}
        }

        if report.sum_zhat.ln() > opts.threshold.ln() && non_decreasing_tail(&report.terms, 3) {
            report.status = ChainStatus::Fails {
                certificate: format!(
                    "partial sum exceeds {:e} at scale {k} with non-decreasing terms",
                    opts.threshold
                ),
            };
            return Ok(report);
        }
    }
}

fn small_enough(tail: LogReal, sum: LogReal, tol: f64) -> bool {
    if tail.is_zero() {
        return true;
    }
    match sum {
        LogReal::Zero => tail.ln() < -745.0,
        s => tail.ln() <= tol.ln() + s.ln(),
    }
}

fn non_decreasing_tail(terms: &[(i64, LogReal)], n: usize) -> bool {
    terms.len() > n && terms[terms.len() - n - 1..].windows(2).all(|w| w[1].1 >= w[0].1)
}

/// Bound on `Σ_{l >= k0} ẑ_l` when `ln z_l <= a + slope l + b^l mu - b^(alpha l) J`
/// and the partial pressures satisfy `p_{l-1} >= p` for `l >= k0`.
#[allow(clippy::too_many_arguments)]
fn envelope_tail(p: f64, k0: i64, a: f64, slope: f64, mu: f64, coupling: f64, alpha: f64, b: f64) -> Option<LogReal> {
    let gap = p - mu;
    if !(gap > 0.0) || !gap.is_finite() {
        return None;
    }
    let k = k0 as f64;
    let bk = b.powf(k);
    let linear_nonpositive = slope <= 0.0 && a + slope * k <= 0.0;
    let r = if linear_nonpositive && coupling >= 0.0 {
        gap
    } else {
        if k < 1.0 / b.ln() {
            return None;
        }
        let extra = (a.abs() + slope.abs() * k + (-coupling).max(0.0) * b.powf(alpha * k)) / bk;
        if extra > gap / 2.0 {
            return None;
        }
        gap / 2.0
    };
    Some(LogReal::from_ln(series_upper_ln(r, b, k0)))
}

/// Verdict on the first summability condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConditionI {
    Holds { detail: String },
    Fails { witness: Block, detail: String },
    Undecided { reason: String },
}

/// Verdict on the second summability condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConditionII {
    Holds { sum: f64, tail_bound: f64, last_scale: i64 },
    Fails { certificate: String },
    Undecided { reason: String },
}

/// Combined existence verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    UniqueGibbsMeasure,
    Fragmentation,
    Condensation,
    Undecided,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::UniqueGibbsMeasure => "unique Gibbs measure",
            Verdict::Fragmentation => "fragmentation",
            Verdict::Condensation => "condensation",
            Verdict::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub condition_i: ConditionI,
    pub condition_ii: ConditionII,
    pub verdict: Verdict,
}

/// Whether every cube with infinite partition function has finite-Ξ subcubes
/// of infinite total activity.
pub fn check_condition_i(model: &ActivityModel) -> ConditionI {
    let g = model.geometry();
    let origin = g.origin_block(0);
    if let Some(law) = model.global_law() {
        return if law.mass_below_converges() {
            ConditionI::Holds { detail: "every block has a finite partition function".into() }
        } else {
            ConditionI::Fails {
                witness: origin,
                detail: "sum over j >= 0 of b^j z_{-j} diverges, so every block has an infinite \
                         partition function and no finite-Ξ subcube carries activity"
                    .into(),
            }
        };
    }
    match model.kind() {
        ActivityKind::Explicit { default, .. } if *default > 0.0 => ConditionI::Fails {
            witness: origin,
            detail: "a positive default activity gives every block an infinite partition function".into(),
        },
        ActivityKind::Explicit { .. } => {
            ConditionI::Holds { detail: "finitely many active blocks; all partition functions are finite".into() }
        }
        ActivityKind::Staircase(_) => staircase_condition_i(model),
        ActivityKind::VolumeTruncated { inner, window } => {
            if model.mass_converges_below(window) {
                ConditionI::Holds { detail: "every block has a finite partition function".into() }
            } else if matches!(**inner, ActivityKind::Staircase(_)) {
                staircase_condition_i(model)
            } else {
                ConditionI::Fails {
                    witness: window.clone(),
                    detail: "the window has infinite partition function and so do all of its subcubes".into(),
                }
            }
        }
        ActivityKind::ScaleTruncated { .. } => {
            ConditionI::Holds { detail: "scale truncation makes every partition function finite".into() }
        }
        _ => ConditionI::Undecided { reason: "unsupported model kind".into() },
    }
}

fn staircase_condition_i(model: &ActivityModel) -> ConditionI {
    if model.mass_converges_below(&model.geometry().origin_block(0)) {
        ConditionI::Holds { detail: "every block has a finite partition function".into() }
    } else {
        ConditionI::Holds {
            detail: "the cubes along the staircase chain have infinite partition function, \
                     but the steps inside each of them have finite partition function and \
                     infinite total activity"
                .into(),
        }
    }
}

/// Whether `Σ_{B' ⊋ anchor} ẑ(B') < inf`.
pub fn check_condition_ii(model: &ActivityModel, anchor: &Block, depth: Depth, opts: ChainOptions) -> ConditionII {
    match ancestor_chain(model, anchor, depth, opts) {
        Ok(r) => match r.status {
            ChainStatus::Holds => ConditionII::Holds {
                sum: r.sum_zhat.value(),
                tail_bound: r.tail_bound.value(),
                last_scale: r.last_scale(),
            },
            ChainStatus::Fails { certificate } => ConditionII::Fails { certificate },
            ChainStatus::Undecided { reason } => ConditionII::Undecided { reason },
        },
        Err(e) => ConditionII::Undecided { reason: e.to_string() },
    }
}

/// Both conditions and the resulting verdict.
pub fn existence_report(model: &ActivityModel) -> ExistenceReport {
    let condition_i = check_condition_i(model);
    let anchor = model.geometry().origin_block(0);
    let condition_ii = check_condition_ii(model, &anchor, Depth::Limit, ChainOptions::default());
    let verdict = match (&condition_i, &condition_ii) {
        (ConditionI::Fails { .. }, _) => Verdict::Fragmentation,
        (ConditionI::Holds { .. }, ConditionII::Fails { .. }) => Verdict::Condensation,
        (ConditionI::Holds { .. }, ConditionII::Holds { .. }) => Verdict::UniqueGibbsMeasure,
        _ => Verdict::Undecided,
    };
    ExistenceReport { condition_i, condition_ii, verdict }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activities::{ScaleSequence, Tail};
    use crate::blocks::Geometry;

    fn g() -> Geometry {
        Geometry::default()
    }

    #[test]
    fn verdicts_for_reference_models() {
        let gas = ActivityModel::parametric(g(), -1.0, 0.0, 0.5).unwrap();
        assert_eq!(existence_report(&gas).verdict, Verdict::UniqueGibbsMeasure);

        let frag = ActivityModel::homogeneous(
            g(),
            ScaleSequence::from_pairs(&[(0, 1.0)]).with_below(Tail::Geometric(1.0)),
        )
        .unwrap();
        let rep = existence_report(&frag);
        assert_eq!(rep.verdict, Verdict::Fragmentation);
        assert!(matches!(rep.condition_i, ConditionI::Fails { .. }));
        // an infinite partition function forces condition (ii)
        assert!(matches!(rep.condition_ii, ConditionII::Holds { .. }));

        let cond = ActivityModel::from_effective(
            g(),
            ScaleSequence::from_pairs(&[(0, 1.0)]).with_above(Tail::Geometric(1.0)),
        )
        .unwrap();
        assert_eq!(existence_report(&cond).verdict, Verdict::Condensation);

        let zero = ActivityModel::zero(g());
        let rep = existence_report(&zero);
        assert_eq!(rep.verdict, Verdict::UniqueGibbsMeasure);
        assert!(matches!(rep.condition_ii, ConditionII::Holds { sum, .. } if sum == 0.0));
    }

    #[test]
    fn geometric_tail_certificate() {
        let m = ActivityModel::homogeneous(
            g(),
            ScaleSequence::from_pairs(&[(0, 1.0)]).with_below(Tail::Geometric(0.25)),
        )
        .unwrap();
        assert!(matches!(check_condition_i(&m), ConditionI::Holds { .. }));
    }

    #[test]
    fn staircase_example_holds() {
        let lam = ScaleSequence::from_pairs(&[(0, 1.0)]).with_above(Tail::Geometric(1.0));
        let m = ActivityModel::staircase(g(), lam).unwrap();
        let mut e = Engine::new(&m, Depth::Limit);
        assert!(e.xi(&g().origin_block(0)).unwrap().is_infinite());
        let rep = existence_report(&m);
        assert!(matches!(rep.condition_i, ConditionI::Holds { .. }));
        assert_eq!(rep.verdict, Verdict::UniqueGibbsMeasure);
    }

    #[test]
    fn explicit_default_under_scale_truncation_is_refused() {
        let m = ActivityModel::explicit(g(), Default::default(), 0.5).unwrap();
        let entries = [("-1:(0)".parse().unwrap(), 1.0)].into_iter().collect();
        let m2 = ActivityModel::explicit(g(), entries, 0.5).unwrap().truncate_scale(3);
        assert!(matches!(check_condition_i(&m), ConditionI::Fails { .. }));
        let r = ancestor_chain(&m2, &"0:(0)".parse().unwrap(), Depth::Limit, ChainOptions::default());
        assert!(matches!(r, Err(Error::Refused(_))));
    }

    #[test]
    fn parametric_chain_terminates_quickly() {
        let m = ActivityModel::parametric(g(), -1.0, 1.0, 0.5).unwrap();
        let r = ancestor_chain(&m, &g().origin_block(-1), Depth::Limit, ChainOptions::default()).unwrap();
        assert!(r.holds());
        assert!(r.last_scale() < 20);
        let ii = check_condition_ii(&m, &g().origin_block(-1), Depth::Limit, ChainOptions::default());
        assert!(matches!(ii, ConditionII::Holds { .. }));
    }
}
