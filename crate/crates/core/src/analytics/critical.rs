//! Critical chemical potential of the parametric family by bisection on the
//! summability of effective activities.

use serde::{Deserialize, Serialize};

use super::engine::{Depth, ScaleRecursion};
use super::existence::{scalar_chain, ChainOptions, ChainReport, ChainStatus};
use crate::activities::ActivityModel;
use crate::blocks::Geometry;
use crate::error::{Error, Result};
use crate::logreal::LogReal;

/// A yes/no answer that may be withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "answer", rename_all = "snake_case")]
pub enum Decision {
    Yes,
    No,
    Undecided { reason: String },
}

impl Decision {
    pub fn label(&self) -> &'static str {
        match self {
            Decision::Yes => "true",
            Decision::No => "false",
            Decision::Undecided { .. } => "undecided",
        }
    }
}

/// One evaluation of the summability predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateEval {
    pub mu: f64,
    pub holds: bool,
    /// Scale limit at which the verdict was reached.
    pub j_max: i64,
    pub status: ChainStatus,
    /// `Σ ẑ` over the evaluated scales.
    pub sum: LogReal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalOptions {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    /// Successive scale limits tried before an undecided chain counts as failing.
    pub j_limits: [i64; 4],
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self { lo: -50.0, hi: 50.0, tol: 1e-6, j_limits: [64, 128, 256, 512] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalReport {
    pub coupling: f64,
    pub alpha: f64,
    /// `+inf` when the predicate holds on the whole bracket.
    #[serde(with = "crate::logreal::extended")]
    pub mu_c: f64,
    /// Largest `μ` seen with a summable chain.
    #[serde(with = "crate::logreal::extended")]
    pub lo: f64,
    /// Smallest `μ` seen without one.
    #[serde(with = "crate::logreal::extended")]
    pub hi: f64,
    pub gibbs_at_mu_c: Decision,
    pub trace: Vec<PredicateEval>,
    /// `(μ, Σ ẑ)` while approaching `lo` from below.
    pub approach: Vec<(f64, f64)>,
}

impl CriticalReport {
    /// Once sorted by `μ`, the predicate never switches back to holding.
    pub fn trace_is_monotone(&self) -> bool {
        let mut t: Vec<_> = self.trace.iter().map(|e| (e.mu, e.holds)).collect();
        t.sort_by(|a, b| a.0.total_cmp(&b.0));
        t.windows(2).all(|w| w[0].1 || !w[1].1)
    }
}

fn chain_at(g: Geometry, coupling: f64, alpha: f64, mu: f64, j_max: i64) -> Result<ChainReport> {
    let model = ActivityModel::parametric(g, mu, coupling, alpha)?;
    let law = model.global_law().expect("parametric models are homogeneous");
    let opts = ChainOptions { j_max, ..ChainOptions::default() };
    scalar_chain(ScaleRecursion::new(law, Depth::Limit), &g.origin_block(-1), opts)
}

/// Whether `Σ_j ẑ_j(μ)` is certified finite, escalating the scale limit
/// before treating an undecided chain as failing.
pub fn summability_predicate(g: Geometry, coupling: f64, alpha: f64, mu: f64, limits: &[i64]) -> Result<PredicateEval> {
    let mut last = None;
    for &j_max in limits {
        let chain = chain_at(g, coupling, alpha, mu, j_max)?;
        let decided = !matches!(chain.status, ChainStatus::Undecided { .. });
        let eval = PredicateEval { mu, holds: chain.holds(), j_max, status: chain.status, sum: chain.sum_zhat };
        if decided {
            return Ok(eval);
        }
        last = Some(eval);
    }
    last.ok_or_else(|| Error::Domain("no scale limits supplied".into()))
}

pub fn critical_mu(g: Geometry, coupling: f64, alpha: f64, tol: f64) -> Result<CriticalReport> {
    critical_mu_with(g, coupling, alpha, CriticalOptions { tol, ..CriticalOptions::default() })
}

pub fn critical_mu_with(g: Geometry, coupling: f64, alpha: f64, opts: CriticalOptions) -> Result<CriticalReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if !(opts.tol > 0.0) || !(opts.lo < opts.hi) {
        return Err(Error::Domain("need tol > 0 and lo < hi".into()));
    }
    let eval = |mu: f64| summability_predicate(g, coupling, alpha, mu, &opts.j_limits);
    let mut trace = Vec::new();
    let top = eval(opts.hi)?;
    let top_holds = top.holds;
    trace.push(top);
    if top_holds {
        return Ok(CriticalReport {
            coupling,
            alpha,
            mu_c: f64::INFINITY,
            lo: opts.hi,
            hi: f64::INFINITY,
            gibbs_at_mu_c: Decision::Undecided {
                reason: format!("summable up to the bracket cap mu = {}", opts.hi),
            },
            trace,
            approach: Vec::new(),
        });
    }
    let bottom = eval(opts.lo)?;
    let bottom_holds = bottom.holds;
    trace.push(bottom);
    if !bottom_holds {
        let scanned: Vec<String> = trace.iter().map(|e| format!("{}: {:?}", e.mu, e.status)).collect();
        return Err(Error::Bracket(format!("the predicate fails at both ends; scanned {}", scanned.join("; "))));
    }
    let (mut lo, mut hi) = (opts.lo, opts.hi);
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = eval(mid)?;
        if e.holds {
            lo = mid;
        } else {
            hi = mid;
        }
        trace.push(e);
    }
    let (gibbs_at_mu_c, approach) = gibbs_at_critical(g, coupling, alpha, lo, opts)?;
    Ok(CriticalReport { coupling, alpha, mu_c: 0.5 * (lo + hi), lo, hi, gibbs_at_mu_c, trace, approach })
}

/// Looks at `Σ ẑ(μ)` along `μ = lo - tol 4^k`. A bounded limit as `μ ↑ μ_c`
/// indicates summability at the critical point; growth that keeps pace with
/// the approach indicates the opposite.
fn gibbs_at_critical(g: Geometry, coupling: f64, alpha: f64, lo: f64, opts: CriticalOptions) -> Result<(Decision, Vec<(f64, f64)>)> {
    let mut approach = Vec::new();
    for k in (0..6).rev() {
        let mu = lo - opts.tol * 4f64.powi(k);
        let e = summability_predicate(g, coupling, alpha, mu, &opts.j_limits)?;
        if !e.holds {
            return Ok((
                Decision::Undecided { reason: format!("the predicate failed at mu = {mu} below the bracket") },
                approach,
            ));
        }
        approach.push((mu, e.sum.value()));
    }
    let sums: Vec<f64> = approach.iter().map(|a| a.1).collect();
    let increments: Vec<f64> = sums.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = sums.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(f64::MIN_POSITIVE);
    // each step quarters the distance to the bracket, so a sum with a finite
    // limit and bounded slope sees its increments shrink by about 4
    let ratios: Vec<f64> = increments.windows(2).map(|w| w[1] / w[0]).collect();
    let decision = if sums.iter().any(|s| !s.is_finite()) {
        Decision::No
    } else if increments.iter().all(|d| d.abs() <= 1e-9 * scale)
        || (increments.iter().all(|&d| d > 0.0) && ratios.iter().all(|&r| r <= 0.5))
    {
        Decision::Yes
    } else if increments.iter().all(|&d| d > 0.0) && ratios.iter().all(|&r| r >= 0.75) {
        Decision::No
    } else {
        Decision::Undecided {
            reason: format!("sums {sums:?} neither settle nor grow steadily as mu approaches {lo}"),
        }
    };
    Ok((decision, approach))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_has_no_finite_critical_point() {
        let r = critical_mu(Geometry::default(), 0.0, 0.5, 1e-6).unwrap();
        assert_eq!(r.mu_c, f64::INFINITY);
    }

    #[test]
    fn deep_gas_phase_is_summable() {
        let e = summability_predicate(Geometry::default(), 1.0, 0.5, -10.0, &[64]).unwrap();
        assert!(e.holds);
    }

    #[test]
    fn bisection_trace_is_monotone() {
        let r = critical_mu(Geometry::default(), 4.0, 0.5, 1e-6).unwrap();
        assert!(r.mu_c.is_finite() && r.mu_c > 0.0, "{}", r.mu_c);
        assert!(r.hi - r.lo <= 1e-6);
        assert!(r.trace_is_monotone());
    }
}
