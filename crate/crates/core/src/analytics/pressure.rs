//! Pressure, stability threshold, tail ratios `R_j` and decay profiles of
//! homogeneous models.

use serde::{Deserialize, Serialize};

use super::engine::{Depth, ScaleRecursion};
use super::existence::{scalar_chain, ChainOptions, ChainStatus};
use crate::activities::{ActivityModel, LawSource};
use crate::error::{Error, Result};
use crate::logreal::{log_add_exp, LogReal};

/// `ln` of the upper bound `e^{-r b^j} (1 + 1/(r ln(b) b^j))`.
pub fn series_upper_ln(r: f64, b: f64, j: i64) -> f64 {
    let x = r * b.powf(j as f64);
    -x + (1.0 / (x * b.ln())).ln_1p()
}

/// Tail sum `Σ_{k >= j} e^{-r b^k}` with its two bounds, all in log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesBounds {
    pub r: f64,
    pub b: f64,
    pub j: i64,
    pub ln_lower: f64,
    pub ln_sum: f64,
    pub ln_upper: f64,
}

impl SeriesBounds {
    pub fn lower(&self) -> f64 {
        self.ln_lower.exp()
    }

    pub fn sum(&self) -> f64 {
        self.ln_sum.exp()
    }

    pub fn upper(&self) -> f64 {
        self.ln_upper.exp()
    }

    /// `lower <= sum <= upper`, allowing for rounding in the last place.
    pub fn ordered(&self) -> bool {
        let slack = 4.0 * f64::EPSILON * self.ln_sum.abs().max(1.0);
        self.ln_lower <= self.ln_sum + slack && self.ln_sum <= self.ln_upper + slack
    }
}

/// Evaluates the tail sum by direct log-domain summation together with the
/// lower bound (its first term) and the closed-form upper bound.
pub fn series_summand_bounds(r: f64, b: f64, j: i64) -> Result<SeriesBounds> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("r = {r} must be positive")));
    }
    if !(b > 1.0) || !b.is_finite() {
        return Err(Error::Domain(format!("b = {b} must exceed 1")));
    }
    let ln_lower = -r * b.powf(j as f64);
    let mut ln_sum = f64::NEG_INFINITY;
    let mut k = j;
    loop {
        let t = -r * b.powf(k as f64);
        ln_sum = log_add_exp(ln_sum, t);
        // once r b^k > 1 the terms shrink faster than geometrically
        if r * b.powf(k as f64) > 1.0 && t < ln_sum - 40.0 {
            break;
        }
        k += 1;
        if !t.is_finite() {
            break;
        }
    }
    Ok(SeriesBounds { r, b, j, ln_lower, ln_sum, ln_upper: series_upper_ln(r, b, j) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureRow {
    pub scale: i64,
    pub zhat: LogReal,
    pub partial: f64,
}

/// Partial pressures, extrapolated pressure and stability threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureProfile {
    pub rows: Vec<PressureRow>,
    /// Limit `p`; `+inf` when partition functions are infinite.
    #[serde(with = "crate::logreal::extended")]
    pub pressure: f64,
    /// Upper bound on `p - p_last` from the certified effective-activity tail.
    pub tail_bound: f64,
    pub tail_certified: bool,
    #[serde(with = "crate::logreal::extended")]
    pub theta_star: f64,
}

/// Lowest scale reported in profiles of models with infinite lower tails.
const PROFILE_FLOOR: i64 = -64;

pub fn pressure_profile(model: &ActivityModel, tol: f64) -> Result<PressureProfile> {
    let law = model
        .global_law()
        .ok_or_else(|| Error::Domain("pressure profiles need a homogeneous or parametric model".into()))?;
    let theta_star = law.theta_star();
    let mut rec = ScaleRecursion::new(law, Depth::Limit);
    if rec.is_infinite() {
        return Ok(PressureProfile {
            rows: Vec::new(),
            pressure: f64::INFINITY,
            tail_bound: 0.0,
            tail_certified: true,
            theta_star,
        });
    }
    if law.is_zero() {
        return Ok(PressureProfile { rows: Vec::new(), pressure: 0.0, tail_bound: 0.0, tail_certified: true, theta_star });
    }
    let first = rec.start().max(PROFILE_FLOOR);
    let anchor = model.geometry().origin_block(first - 1);
    let opts = ChainOptions { tol, ..ChainOptions::default() };
    let chain = scalar_chain(rec.clone(), &anchor, opts)?;
    let b = law.branching();
    let mut last = chain.last_scale();
    let mut tail_certified = chain.holds();
    let mut tail_bound = if tail_certified {
        (chain.tail_bound.ln() - (last + 1) as f64 * b.ln()).exp()
    } else {
        f64::NAN
    };
    if !tail_certified {
        // keep iterating until the increments are negligible
        let cap = super::existence::scale_cap(b);
        while last < cap {
            last += 1;
            let row = rec.row(last);
            let inc = row.pressure - rec.row(last - 1).pressure;
            if inc.abs() < tol * row.pressure.abs().max(1.0) {
                break;
            }
        }
        tail_bound = f64::NAN;
        tail_certified = false;
    }
    let rows: Vec<PressureRow> = (first..=last)
        .map(|j| {
            let r = rec.row(j);
            PressureRow { scale: j, zhat: r.zhat, partial: r.pressure }
        })
        .collect();
    let pressure = rows.last().map_or(0.0, |r| r.partial);
    Ok(PressureProfile { rows, pressure, tail_bound, tail_certified, theta_star })
}

/// `R_j = ∏_{k >= j} (1 + ẑ_k) - 1` for a homogeneous model.
pub fn tail_ratio_r(model: &ActivityModel, j: i64, tol: f64) -> Result<LogReal> {
    let law = model
        .global_law()
        .ok_or_else(|| Error::Domain("R_j needs a homogeneous or parametric model".into()))?;
    let rec = ScaleRecursion::new(law, Depth::Limit);
    let chain = scalar_chain(rec, &model.geometry().origin_block(j - 1), ChainOptions { tol, ..Default::default() })?;
    if !chain.holds() {
        return Err(Error::Refused(format!("effective activities are not certified summable: {:?}", chain.status)));
    }
    Ok(chain.sum_log1p.exp_m1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub scale: i64,
    pub zhat: LogReal,
    pub ratio: LogReal,
    /// `b^-j ln R_j`.
    #[serde(with = "crate::logreal::extended")]
    pub scaled_log_ratio: f64,
    /// `(1 + R_j) Σ_{k >= j} ẑ_k`.
    pub upper: LogReal,
    /// `ln R_j + b^j (p - θ*) + b^(α j) J`, for parametric models.
    pub residual: Option<LogReal>,
}

impl DecayRow {
    /// `ẑ_j <= R_j <= (1 + R_j) Σ_{k >= j} ẑ_k`, up to rounding.
    pub fn sandwich_holds(&self) -> bool {
        let slack = 1e-12;
        self.zhat.ln() <= self.ratio.ln() + slack && self.ratio.ln() <= self.upper.ln() + slack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub rows: Vec<DecayRow>,
    #[serde(with = "crate::logreal::extended")]
    pub pressure: f64,
    #[serde(with = "crate::logreal::extended")]
    pub theta_star: f64,
    /// Limit of `b^-j ln R_j`.
    #[serde(with = "crate::logreal::extended")]
    pub target: f64,
}

/// Rows `j_min..=j_max` of the decay table.
pub fn decay_profile(model: &ActivityModel, j_min: i64, j_max: i64, tol: f64) -> Result<DecayProfile> {
    let law = model
        .global_law()
        .ok_or_else(|| Error::Domain("decay profiles need a homogeneous or parametric model".into()))?;
    if j_max < j_min {
        return Err(Error::Domain(format!("empty scale range {j_min}..={j_max}")));
    }
    let profile = pressure_profile(model, tol)?;
    let mut rec = ScaleRecursion::new(law, Depth::Limit);
    let opts = ChainOptions { tol, ..Default::default() };
    let chain = scalar_chain(rec.clone(), &model.geometry().origin_block(j_max), opts)?;
    if chain.status != ChainStatus::Holds {
        return Err(Error::Refused(format!("effective activities are not certified summable: {:?}", chain.status)));
    }
    let last = chain.last_scale().max(j_max + 1);
    let ln_b = law.branching().ln();
    let zh: Vec<LogReal> = (j_min..=last).map(|k| rec.row(k).zhat).collect();
    let n = zh.len();
    // suffix sums over k >= j: Σ ln(1+ẑ_k), Σ ẑ_k, Σ b^{j-k} ln(1+ẑ_k)
    let mut s_log1p = vec![LogReal::Zero; n + 1];
    let mut s_zhat = vec![LogReal::Zero; n + 1];
    let mut s_weighted = vec![LogReal::Zero; n + 1];
    for i in (0..n).rev() {
        s_log1p[i] = s_log1p[i + 1] + zh[i].ln_1p();
        s_zhat[i] = s_zhat[i + 1] + zh[i];
        s_weighted[i] = zh[i].ln_1p() + s_weighted[i + 1] * LogReal::from_ln(-ln_b);
    }
    let parametric = matches!(law.source, LawSource::Parametric { .. });
    let mut rows = Vec::new();
    for (i, j) in (j_min..=j_max).enumerate() {
        let ratio = s_log1p[i].exp_m1();
        let upper = (LogReal::ONE + ratio) * s_zhat[i];
        let residual = parametric.then(|| {
            // ln R_j = ln ẑ_j + ln(1 + u) with u = (1 + ẑ_j) R_{j+1} / ẑ_j, and
            // b^j (p - p_{j-1}) = Σ_{k >= j} b^{j-k} ln(1 + ẑ_k)
            let r_next = s_log1p[i + 1].exp_m1();
            let u = (LogReal::ONE + zh[i]) * r_next / zh[i];
            s_weighted[i] + u.ln_1p()
        });
        rows.push(DecayRow {
            scale: j,
            zhat: zh[i],
            ratio,
            scaled_log_ratio: ratio.ln() * (-(j as f64) * ln_b).exp(),
            upper,
            residual,
        });
    }
    Ok(DecayProfile {
        rows,
        pressure: profile.pressure,
        theta_star: profile.theta_star,
        target: profile.theta_star - profile.pressure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activities::ScaleSequence;
    use crate::blocks::Geometry;

    fn g() -> Geometry {
        Geometry::default()
    }

    #[test]
    fn lemma_bounds_reference_row() {
        let s = series_summand_bounds(1.0, 2.0, 0).unwrap();
        let direct: f64 = (0..12).map(|k| (-(2f64.powi(k))).exp()).sum();
        assert!((s.sum() - direct).abs() < 1e-15);
        assert!((s.lower() - (-1f64).exp()).abs() < 1e-15);
        assert!((s.upper() - (-1f64).exp() * (1.0 + 1.0 / 2f64.ln())).abs() < 1e-15);
        assert!(s.ordered());
        assert!(series_summand_bounds(0.0, 2.0, 0).is_err());
        assert!(series_summand_bounds(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn pressure_examples() {
        let zero = ActivityModel::zero(g());
        let p = pressure_profile(&zero, 1e-12).unwrap();
        assert_eq!(p.pressure, 0.0);
        assert_eq!(p.theta_star, f64::NEG_INFINITY);

        let one = ActivityModel::from_effective(g(), ScaleSequence::from_pairs(&[(0, 1.0)])).unwrap();
        let p = pressure_profile(&one, 1e-12).unwrap();
        assert!((p.pressure - 2f64.ln()).abs() < 1e-15);

        let gas = ActivityModel::parametric(g(), -1.0, 0.0, 0.5).unwrap();
        let p = pressure_profile(&gas, 1e-12).unwrap();
        assert_eq!(p.theta_star, -1.0);
        assert!(p.pressure > -1.0 && p.tail_certified);
        assert!(p.rows.windows(2).all(|w| w[1].partial >= w[0].partial));
    }

    #[test]
    fn r_examples() {
        let one = ActivityModel::from_effective(g(), ScaleSequence::from_pairs(&[(0, 1.0)])).unwrap();
        assert!((tail_ratio_r(&one, 0, 1e-12).unwrap().value() - 1.0).abs() < 1e-15);
        assert_eq!(tail_ratio_r(&one, 1, 1e-12).unwrap(), LogReal::Zero);
        let d = decay_profile(&one, 0, 3, 1e-12).unwrap();
        assert_eq!(d.rows[1].ratio, LogReal::Zero);
    }

    #[test]
    fn sandwich_on_parametric_grid() {
        for mu in [-2.0, -1.0, -0.5] {
            for coupling in [0.0, 0.5, 1.0] {
                let m = ActivityModel::parametric(g(), mu, coupling, 0.5).unwrap();
                let d = decay_profile(&m, 0, 12, 1e-12).unwrap();
                assert!(d.rows.iter().all(|r| r.sandwich_holds()), "mu={mu} J={coupling}");
                assert!(d.rows.windows(2).all(|w| w[1].ratio <= w[0].ratio));
            }
        }
    }
}
