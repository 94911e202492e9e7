//! Partition functions and effective activities in the log domain.
//!
//! Scale-only regions of the tree are handled by [`ScaleRecursion`], which
//! tracks the partial pressures `p_j = b^-j ln Ξ_j` instead of `ln Ξ_j` so
//! that `ln ẑ_j = ln z_j - b^j p_{j-1}` can be formed without cancellation.
//! Everything else goes through the memoized per-block [`Engine`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::activities::{ActivityModel, Extent, ScaleLaw};
use crate::blocks::Block;
use crate::error::{Error, Result};
use crate::logreal::LogReal;

/// Truncation depth for computations: `z^(n)` or the untruncated limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depth {
    /// Keep scales `>= -n`.
    Truncated(i64),
    /// No scale truncation.
    Limit,
}

impl Depth {
    pub fn floor(self) -> Option<i64> {
        match self {
            Depth::Truncated(n) => Some(-n),
            Depth::Limit => None,
        }
    }
}

/// Per-scale quantities of a homogeneous region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRow {
    pub scale: i64,
    pub ln_z: LogReal,
    pub zhat: LogReal,
    pub xi: LogReal,
    /// `b^-j ln Ξ_j`; `+inf` when `Ξ_j` is infinite.
    pub pressure: f64,
}

/// Relative size of the neglected lower tail when a recursion over an
/// infinite geometric tail is started at a finite scale.
const LOWER_TAIL_EPS: f64 = 1e-18;
const MAX_LOWER_START: i64 = 200_000;

/// Bottom-up scalar iteration `ẑ_j = z_j e^{-b^j p_{j-1}}`,
/// `p_j = p_{j-1} + b^-j ln(1 + ẑ_j)`.
#[derive(Debug, Clone)]
pub struct ScaleRecursion<'a> {
    law: ScaleLaw<'a>,
    start: i64,
    infinite: bool,
    rows: Vec<ScaleRow>,
    ln_b: f64,
}

impl<'a> ScaleRecursion<'a> {
    pub fn new(law: ScaleLaw<'a>, depth: Depth) -> Self {
        let law = match depth.floor() {
            Some(f) => law.with_floor(f),
            None => law,
        };
        let b = law.branching();
        let infinite = !law.mass_below_converges();
        let start = match law.lowest() {
            Extent::Empty => i64::MAX,
            Extent::At(s) => s,
            Extent::Unbounded => match law.lower_tail() {
                Some((j0, v0, r)) if !infinite => {
                    let rb = r * b;
                    let need = LOWER_TAIL_EPS * (1.0 - rb) * v0.ln_1p().min(1.0) / v0.max(1.0);
                    let k = (need.ln() / rb.ln()).ceil().clamp(0.0, MAX_LOWER_START as f64) as i64;
                    j0 - k
                }
                _ => i64::MIN,
            },
        };
        Self { law, start, infinite, rows: Vec::new(), ln_b: b.ln() }
    }

    pub fn law(&self) -> &ScaleLaw<'a> {
        &self.law
    }

    /// First scale at which the iteration is started (`i64::MAX` if inactive).
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Whether every block of the region has an infinite partition function.
    pub fn is_infinite(&self) -> bool {
        self.infinite
    }

    pub fn row(&mut self, j: i64) -> ScaleRow {
        if self.infinite {
            return ScaleRow {
                scale: j,
                ln_z: self.law.ln_z(j),
                zhat: LogReal::Zero,
                xi: LogReal::Infinite,
                pressure: f64::INFINITY,
            };
        }
        if j < self.start {
            let z = self.law.ln_z(j);
            let l1p = z.ln_1p();
            return ScaleRow {
                scale: j,
                ln_z: z,
                zhat: z,
                xi: LogReal::ONE + z,
                pressure: (l1p.ln() - j as f64 * self.ln_b).exp(),
            };
        }
        while self.start + (self.rows.len() as i64) <= j {
            let k = self.start + self.rows.len() as i64;
            let p_prev = self.rows.last().map_or(0.0, |r| r.pressure);
            let row = self.step(k, p_prev);
            self.rows.push(row);
        }
        self.rows[(j - self.start) as usize]
    }

    fn step(&self, k: i64, p_prev: f64) -> ScaleRow {
        let ln_z = self.law.ln_z(k);
        let zhat = self.law.exact_effective(k).unwrap_or_else(|| self.law.ln_z_shifted(k, p_prev));
        let inc = match zhat.ln_1p() {
            LogReal::Finite(l) => (l - k as f64 * self.ln_b).exp(),
            LogReal::Zero => 0.0,
            LogReal::Infinite => f64::INFINITY,
        };
        let pressure = p_prev + inc;
        let xi = if pressure == 0.0 {
            LogReal::ONE
        } else {
            LogReal::from_ln((pressure.ln() + k as f64 * self.ln_b).exp())
        };
        ScaleRow { scale: k, ln_z, zhat, xi, pressure }
    }
}

/// Result of an untruncated partition-function evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitValue {
    pub value: LogReal,
    pub converged: bool,
    pub depth_used: Option<i64>,
    pub certificate: String,
}

/// Increment below which depth doubling is considered converged.
pub const DOUBLING_TOL: f64 = 1e-12;
/// `ln Ξ` above which a doubling run is declared divergent.
pub const DIVERGENCE_LOG: f64 = 1e6;
const MAX_DOUBLING_DEPTH: i64 = 1024;

/// Memoizing evaluator of `Ξ` and `ẑ` for one model.
pub struct Engine<'m> {
    model: &'m ActivityModel,
    depth: Depth,
    memo: HashMap<(Block, Depth), LogReal>,
    laws: Vec<(ScaleLaw<'m>, Depth, ScaleRecursion<'m>)>,
}

impl<'m> Engine<'m> {
    pub fn new(model: &'m ActivityModel, depth: Depth) -> Self {
        Self { model, depth, memo: HashMap::new(), laws: Vec::new() }
    }

    pub fn model(&self) -> &'m ActivityModel {
        self.model
    }

    pub fn depth(&self) -> Depth {
        self.depth
    }

    fn law_row(&mut self, law: ScaleLaw<'m>, depth: Depth, j: i64) -> ScaleRow {
        if let Some(pos) = self.laws.iter().position(|(l, d, _)| *l == law && *d == depth) {
            return self.laws[pos].2.row(j);
        }
        let mut rec = ScaleRecursion::new(law, depth);
        let row = rec.row(j);
        self.laws.push((law, depth, rec));
        row
    }

    fn check(&self, b: &Block) -> Result<()> {
        if !self.model.geometry().admits(b) {
            return Err(Error::DimensionMismatch { expected: self.model.geometry().dim(), got: b.dim() });
        }
        Ok(())
    }

    /// Activity of `b` under the engine's truncation.
    pub fn activity(&self, b: &Block) -> LogReal {
        match self.depth.floor() {
            Some(f) if b.scale < f => LogReal::Zero,
            _ => self.model.activity(b),
        }
    }

    /// Partition function `Ξ_b`.
    pub fn xi(&mut self, b: &Block) -> Result<LogReal> {
        self.check(b)?;
        self.xi_at(b, self.depth)
    }

    fn xi_at(&mut self, b: &Block, depth: Depth) -> Result<LogReal> {
        if let Some(f) = depth.floor() {
            if b.scale < f {
                return Ok(LogReal::ONE);
            }
        }
        if let Some(law) = self.model.law_below(b) {
            return Ok(self.law_row(law, depth, b.scale).xi);
        }
        if let Some(&v) = self.memo.get(&(b.clone(), depth)) {
            return Ok(v);
        }
        let v = match depth {
            Depth::Truncated(_) => {
                let z = match depth.floor() {
                    Some(f) if b.scale < f => LogReal::Zero,
                    _ => self.model.activity(b),
                };
                let mut prod = LogReal::ONE;
                for c in self.model.geometry().children(b)? {
                    prod = prod * self.xi_at(&c, depth)?;
                }
                z + prod
            }
            Depth::Limit => self.limit(b)?.value,
        };
        self.memo.insert((b.clone(), depth), v);
        Ok(v)
    }

    /// Untruncated `Ξ_b` with the certificate used to obtain it.
    pub fn limit(&mut self, b: &Block) -> Result<LimitValue> {
        self.check(b)?;
        if let Some(law) = self.model.law_below(b) {
            let row = self.law_row(law, Depth::Limit, b.scale);
            let rec = &self.laws.iter().find(|(l, d, _)| *l == law && *d == Depth::Limit).expect("cached").2;
            let certificate = if rec.is_infinite() {
                "closed form: the activity mass below the block diverges".to_string()
            } else {
                "scale-only recursion".to_string()
            };
            let depth_used = match rec.start() {
                i64::MAX | i64::MIN => None,
                s => Some((-s).max(-b.scale)),
            };
            return Ok(LimitValue { value: row.xi, converged: true, depth_used, certificate });
        }
        if !self.model.mass_converges_below(b) {
            return Ok(LimitValue {
                value: LogReal::Infinite,
                converged: true,
                depth_used: None,
                certificate: "closed form: the activity mass below the block diverges".into(),
            });
        }
        match self.model.lowest_active_below(b) {
            Extent::Empty => Ok(LimitValue {
                value: LogReal::ONE,
                converged: true,
                depth_used: Some(-b.scale),
                certificate: "no activity inside the block".into(),
            }),
            Extent::At(s) => {
                let n = -s;
                let value = self.xi_at(b, Depth::Truncated(n))?;
                Ok(LimitValue {
                    value,
                    converged: true,
                    depth_used: Some(n),
                    certificate: "exact: all activity lies at or above the truncation scale".into(),
                })
            }
            Extent::Unbounded => self.doubling(b),
        }
    }

    fn doubling(&mut self, b: &Block) -> Result<LimitValue> {
        let mut n = (-b.scale).max(0) + 1;
        let mut prev = self.xi_at(b, Depth::Truncated(n))?.ln();
        while n < MAX_DOUBLING_DEPTH {
            n *= 2;
            let cur = self.xi_at(b, Depth::Truncated(n))?.ln();
            if cur > DIVERGENCE_LOG {
                return Ok(LimitValue {
                    value: LogReal::Infinite,
                    converged: true,
                    depth_used: Some(n),
                    certificate: format!("ln Ξ exceeded {DIVERGENCE_LOG:e} at depth {n}"),
                });
            }
            if (cur - prev).abs() < DOUBLING_TOL * cur.abs().max(1.0) {
                return Ok(LimitValue {
                    value: LogReal::from_ln(cur),
                    converged: true,
                    depth_used: Some(n),
                    certificate: "depth doubling converged".into(),
                });
            }
            prev = cur;
        }
        Ok(LimitValue {
            value: LogReal::from_ln(prev),
            converged: false,
            depth_used: Some(n),
            certificate: "depth doubling did not converge".into(),
        })
    }

    /// Effective activity `ẑ(b) = z(b) / ∏ Ξ_child`.
    pub fn zhat(&mut self, b: &Block) -> Result<LogReal> {
        self.check(b)?;
        let depth = self.depth;
        if let Some(f) = depth.floor() {
            if b.scale < f {
                return Ok(LogReal::Zero);
            }
        }
        if let Some(law) = self.model.law_below(b) {
            return Ok(self.law_row(law, depth, b.scale).zhat);
        }
        let z = self.model.activity(b);
        if z.is_zero() {
            return Ok(LogReal::Zero);
        }
        let mut prod = LogReal::ONE;
        for c in self.model.geometry().children(b)? {
            prod = prod * self.xi_at(&c, depth)?;
            if prod.is_infinite() {
                return Ok(LogReal::Zero);
            }
        }
        Ok(z / prod)
    }

    /// Occupation ratio `ρ̂(b) = ẑ/(1+ẑ)`.
    pub fn rho(&mut self, b: &Block) -> Result<f64> {
        Ok(self.zhat(b)?.odds_to_probability())
    }

    /// `ln ρ̂(b)`.
    pub fn ln_rho(&mut self, b: &Block) -> Result<f64> {
        Ok(ln_rho_of(self.zhat(b)?))
    }

    /// The alternative form `ρ̂(b) = z(b) / Ξ_b`.
    pub fn rho_direct(&mut self, b: &Block) -> Result<f64> {
        let z = self.activity(b);
        let xi = self.xi(b)?;
        Ok((z / xi).value().min(1.0))
    }
}

/// `ln(x/(1+x))` for a log-domain `x`.
pub fn ln_rho_of(zhat: LogReal) -> f64 {
    match zhat {
        LogReal::Zero => f64::NEG_INFINITY,
        LogReal::Infinite => 0.0,
        LogReal::Finite(l) => l - crate::logreal::log_add_exp(0.0, l),
    }
}
