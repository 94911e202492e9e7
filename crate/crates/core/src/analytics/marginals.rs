//! Marginals of the hierarchical measure and covariance factorizations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::engine::{ln_rho_of, Depth, Engine};
use super::existence::{ancestor_chain, ChainOptions};
use crate::activities::ActivityModel;
use crate::blocks::{Block, Geometry};
use crate::error::{Error, Result};
use crate::logreal::LogReal;

/// Where the measure lives: inside a window block, or on all of the orthant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Volume {
    Finite(Block),
    Infinite,
}

/// Sums over an upward-closed set of blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Closure {
    /// `Σ ln(1 + ẑ)`.
    log1p: LogReal,
    /// `Σ ẑ`.
    zhat: LogReal,
    /// Bound on the part of `Σ ẑ` not evaluated term by term.
    tail: LogReal,
}

impl Closure {
    /// `∏ (1 + ẑ) - 1`.
    fn ratio(&self) -> LogReal {
        self.log1p.exp_m1()
    }
}

/// Shared state for evaluating ancestor products under one model and volume.
struct Marginals<'m> {
    engine: Engine<'m>,
    volume: Volume,
    opts: ChainOptions,
}

impl<'m> Marginals<'m> {
    fn new(model: &'m ActivityModel, volume: &Volume, depth: Depth) -> Result<Self> {
        if let Volume::Finite(w) = volume {
            check_dim(model.geometry(), w)?;
        }
        Ok(Self { engine: Engine::new(model, depth), volume: volume.clone(), opts: ChainOptions::default() })
    }

    fn geometry(&self) -> &'m Geometry {
        self.engine.model().geometry()
    }

    /// Whether `b` can be occupied at all.
    fn admissible(&self, b: &Block) -> bool {
        let inside = match &self.volume {
            Volume::Finite(w) => self.geometry().contains(w, b),
            Volume::Infinite => true,
        };
        inside && self.engine.depth().floor().is_none_or(|f| b.scale >= f)
    }

    /// Parents of `blocks` that lie in the volume.
    fn parents(&self, blocks: &[Block]) -> Result<Vec<Block>> {
        let g = self.geometry();
        let mut out = Vec::new();
        for b in blocks {
            let p = g.parent(b)?;
            let keep = match &self.volume {
                Volume::Finite(w) => g.contains(w, &p),
                Volume::Infinite => true,
            };
            if keep {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Every block containing some seed, up to `top` inclusive.
    fn explicit_up_to(&self, seeds: &[Block], top: i64) -> Result<BTreeSet<Block>> {
        let g = self.geometry();
        let mut set = BTreeSet::new();
        for s in seeds {
            let mut a = s.clone();
            while set.insert(a.clone()) && a.scale < top {
                a = g.parent(&a)?;
            }
        }
        Ok(set)
    }

    /// Blocks containing some seed, with the infinite part summarized by the
    /// common ancestor above all seeds.
    fn closure_sets(&self, seeds: &[Block]) -> Result<(BTreeSet<Block>, Option<Block>)> {
        if seeds.is_empty() {
            return Ok((BTreeSet::new(), None));
        }
        match &self.volume {
            Volume::Finite(w) => Ok((self.explicit_up_to(seeds, w.scale)?, None)),
            Volume::Infinite => {
                let g = self.geometry();
                let mut top = seeds[0].clone();
                for s in &seeds[1..] {
                    top = g.lowest_common_block(&top, s)?;
                }
                Ok((self.explicit_up_to(seeds, top.scale)?, Some(top)))
            }
        }
    }

    fn closure(&mut self, seeds: &[Block]) -> Result<Closure> {
        let (set, top) = self.closure_sets(seeds)?;
        self.sum_over(&set, top.as_ref())
    }

    /// Sums over `set` plus, when given, all strict ancestors of `top`.
    fn sum_over(&mut self, set: &BTreeSet<Block>, top: Option<&Block>) -> Result<Closure> {
        let mut acc = Closure { log1p: LogReal::Zero, zhat: LogReal::Zero, tail: LogReal::Zero };
        for a in set {
            let zh = self.engine.zhat(a)?;
            acc.log1p = acc.log1p + zh.ln_1p();
            acc.zhat = acc.zhat + zh;
        }
        if let Some(top) = top {
            let model = self.engine.model();
            let chain = ancestor_chain(model, top, self.engine.depth(), self.opts)?;
            if !chain.holds() {
                return Err(Error::Refused(format!(
                    "the effective activities above {top} are not certified summable ({:?}); \
                     the infinite-volume measure is unavailable",
                    chain.status
                )));
            }
            acc.log1p = acc.log1p + chain.sum_log1p;
            acc.zhat = acc.zhat + chain.sum_zhat;
            acc.tail = chain.tail_bound;
        }
        Ok(acc)
    }
}

fn check_dim(g: &Geometry, b: &Block) -> Result<()> {
    if g.admits(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: g.dim(), got: b.dim() })
    }
}

/// Whether the blocks are pairwise disjoint.
pub fn is_disjoint_family(g: &Geometry, blocks: &[Block]) -> bool {
    blocks.iter().enumerate().all(|(i, a)| blocks[i + 1..].iter().all(|b| !g.overlaps(a, b)))
}

/// Probability of `{ω ⊃ blocks}` together with its log and the bound on the
/// neglected ancestor tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub probability: f64,
    #[serde(with = "crate::logreal::extended")]
    pub ln_probability: f64,
    /// Bound on `|ln P - ln_probability|` from the truncated ancestor chain.
    pub tail_bound: f64,
}

fn canonical(g: &Geometry, blocks: &[Block]) -> Result<Vec<Block>> {
    for b in blocks {
        check_dim(g, b)?;
    }
    let set: BTreeSet<Block> = blocks.iter().cloned().collect();
    Ok(set.into_iter().collect())
}

fn marginal_in(ctx: &mut Marginals<'_>, blocks: &[Block]) -> Result<Marginal> {
    let zero = Marginal { probability: 0.0, ln_probability: f64::NEG_INFINITY, tail_bound: 0.0 };
    if !is_disjoint_family(ctx.geometry(), blocks) || !blocks.iter().all(|b| ctx.admissible(b)) {
        return Ok(zero);
    }
    let mut ln_p = 0.0;
    for b in blocks {
        ln_p += ln_rho_of(ctx.engine.zhat(b)?);
    }
    if ln_p == f64::NEG_INFINITY {
        return Ok(zero);
    }
    let parents = ctx.parents(blocks)?;
    let anc = ctx.closure(&parents)?;
    ln_p -= anc.log1p.value();
    Ok(Marginal { probability: ln_p.exp(), ln_probability: ln_p, tail_bound: anc.tail.value() })
}

/// `P(ω ⊃ blocks)` with diagnostics.
pub fn marginal(model: &ActivityModel, blocks: &[Block], volume: &Volume, depth: Depth) -> Result<Marginal> {
    let blocks = canonical(model.geometry(), blocks)?;
    let mut ctx = Marginals::new(model, volume, depth)?;
    marginal_in(&mut ctx, &blocks)
}

/// `P(ω ⊃ blocks)` under the hierarchical measure.
pub fn exact_marginal(model: &ActivityModel, blocks: &[Block], volume: &Volume, depth: Depth) -> Result<f64> {
    Ok(marginal(model, blocks, volume, depth)?.probability)
}

/// `ln P(ω ⊃ blocks)`.
pub fn ln_exact_marginal(model: &ActivityModel, blocks: &[Block], volume: &Volume, depth: Depth) -> Result<f64> {
    Ok(marginal(model, blocks, volume, depth)?.ln_probability)
}

/// Probability that no block containing `b` (including `b`) is occupied.
pub fn chain_vacancy(model: &ActivityModel, b: &Block, volume: &Volume, depth: Depth) -> Result<f64> {
    check_dim(model.geometry(), b)?;
    let mut ctx = Marginals::new(model, volume, depth)?;
    if let Volume::Finite(w) = volume {
        if !model.geometry().contains(w, b) {
            return Err(Error::Domain(format!("{b} lies outside the window {w}")));
        }
    }
    let c = ctx.closure(std::slice::from_ref(b))?;
    Ok((-c.log1p.value()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Identical,
    Nested,
    Disjoint,
}

/// Covariance of the occupation indicators of two blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCovariance {
    pub relation: Relation,
    pub p1: f64,
    pub p2: f64,
    pub p_both: f64,
    /// `P(both) - P1 P2` from the joint marginal.
    pub cov: f64,
    /// The same covariance through the factorization.
    pub factored: f64,
    /// `R` over the lowest common block, for disjoint pairs.
    pub ratio: Option<LogReal>,
    pub lcs: i64,
    pub distance: f64,
}

impl PairCovariance {
    pub fn discrepancy(&self) -> f64 {
        (self.cov - self.factored).abs()
    }
}

pub fn pair_covariance(model: &ActivityModel, b1: &Block, b2: &Block, volume: &Volume, depth: Depth) -> Result<PairCovariance> {
    let g = model.geometry();
    check_dim(g, b1)?;
    check_dim(g, b2)?;
    if let Volume::Finite(w) = volume {
        for b in [b1, b2] {
            if !g.contains(w, b) {
                return Err(Error::Domain(format!("{b} lies outside the window {w}")));
            }
        }
    }
    let mut ctx = Marginals::new(model, volume, depth)?;
    let p1 = marginal_in(&mut ctx, std::slice::from_ref(b1))?.probability;
    let p2 = marginal_in(&mut ctx, std::slice::from_ref(b2))?.probability;
    let lcs = g.lcs(b1, b2)?;
    let distance = g.hierarchical_distance(b1, b2)?;
    if b1 == b2 {
        let v = p1 * (1.0 - p1);
        return Ok(PairCovariance {
            relation: Relation::Identical,
            p1,
            p2,
            p_both: p1,
            cov: v,
            factored: v,
            ratio: None,
            lcs,
            distance,
        });
    }
    let pair = [b1.clone(), b2.clone()];
    let p_both = marginal_in(&mut ctx, &pair)?.probability;
    if g.overlaps(b1, b2) {
        return Ok(PairCovariance {
            relation: Relation::Nested,
            p1,
            p2,
            p_both,
            cov: p_both - p1 * p2,
            factored: -p1 * p2,
            ratio: None,
            lcs,
            distance,
        });
    }
    let top = g.lowest_common_block(b1, b2)?;
    let ratio = ctx.closure(std::slice::from_ref(&top))?.ratio();
    let factored = if p1 == 0.0 || p2 == 0.0 { 0.0 } else { p1 * p2 * ratio.value() };
    Ok(PairCovariance {
        relation: Relation::Disjoint,
        p1,
        p2,
        p_both,
        cov: p_both - p1 * p2,
        factored,
        ratio: Some(ratio),
        lcs,
        distance,
    })
}

/// One inequality of the covariance bound chain, as `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl Inequality {
    fn new(name: &str, lhs: LogReal, rhs: LogReal) -> Self {
        Self { name: name.into(), lhs: lhs.ln(), rhs: rhs.ln() }
    }

    /// Compares in log form with a relative slack of `1e-12`.
    pub fn holds(&self) -> bool {
        self.lhs == f64::NEG_INFINITY || self.lhs <= self.rhs + 1e-12 * self.rhs.abs().max(1.0)
    }
}

/// Covariance of `{ω ⊃ 𝓑}` and `{ω ⊃ 𝓑'}` for disjoint finite families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigCovariance {
    pub p1: f64,
    pub p2: f64,
    pub p_union: f64,
    pub cov: f64,
    /// `1_Δ P P' (1 + R(𝓑''))`.
    pub factored_union: f64,
    pub factored_cov: f64,
    /// The minimal common strict ancestors `𝓑''`.
    pub lowest: Vec<Block>,
    pub ratio: Option<LogReal>,
    /// Minimal pairwise hierarchical distance.
    pub distance: f64,
    pub inequalities: Vec<Inequality>,
}

impl ConfigCovariance {
    pub fn discrepancy(&self) -> f64 {
        (self.p_union - self.factored_union).abs()
    }

    pub fn bound_check(&self) -> bool {
        self.inequalities.iter().all(Inequality::holds)
    }
}

/// Minimal elements of a family, i.e. blocks containing no other member.
fn minimal(g: &Geometry, set: &BTreeSet<Block>) -> Vec<Block> {
    set.iter().filter(|a| !set.iter().any(|b| b != *a && g.contains(a, b))).cloned().collect()
}

pub fn config_covariance(
    model: &ActivityModel,
    set1: &[Block],
    set2: &[Block],
    volume: &Volume,
    depth: Depth,
) -> Result<ConfigCovariance> {
    let g = model.geometry();
    let s1 = canonical(g, set1)?;
    let s2 = canonical(g, set2)?;
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::Domain("both families must be non-empty".into()));
    }
    if let Some(b) = s1.iter().find(|b| s2.contains(b)) {
        return Err(Error::Domain(format!("the families share {b}")));
    }
    let mut ctx = Marginals::new(model, volume, depth)?;
    let p1 = marginal_in(&mut ctx, &s1)?.probability;
    let p2 = marginal_in(&mut ctx, &s2)?.probability;
    let union: Vec<Block> = s1.iter().chain(&s2).cloned().collect();
    let union = canonical(g, &union)?;
    let p_union = marginal_in(&mut ctx, &union)?.probability;
    let mut distance = f64::INFINITY;
    for a in &s1 {
        for b in &s2 {
            distance = distance.min(g.hierarchical_distance(a, b)?);
        }
    }
    let mut out = ConfigCovariance {
        p1,
        p2,
        p_union,
        cov: p_union - p1 * p2,
        factored_union: 0.0,
        factored_cov: -p1 * p2,
        lowest: Vec::new(),
        ratio: None,
        distance,
        inequalities: Vec::new(),
    };
    if !is_disjoint_family(g, &union) || p1 == 0.0 || p2 == 0.0 {
        return Ok(out);
    }

    // strict ancestors of each family below the common top; everything above
    // the top belongs to both
    let top_scale = match volume {
        Volume::Finite(w) => w.scale,
        Volume::Infinite => {
            let mut top = union[0].clone();
            for b in &union[1..] {
                top = g.lowest_common_block(&top, b)?;
            }
            top.scale
        }
    };
    let a1 = ctx.explicit_up_to(&ctx.parents(&s1)?, top_scale)?;
    let a2 = ctx.explicit_up_to(&ctx.parents(&s2)?, top_scale)?;
    let common: BTreeSet<Block> = a1.intersection(&a2).cloned().collect();
    let lowest = minimal(g, &common);
    let joint = ctx.closure(&lowest)?;
    let ratio = joint.ratio();
    out.factored_union = p1 * p2 * (LogReal::ONE + ratio).value();
    out.factored_cov = out.factored_union - p1 * p2;

    let n = LogReal::from_value(lowest.len() as f64);
    let mut max_single_sum = LogReal::Zero;
    let mut max_single_ratio = LogReal::Zero;
    let mut prod_single = LogReal::ONE;
    for b in &lowest {
        let c = ctx.closure(std::slice::from_ref(b))?;
        max_single_sum = max_single_sum.max(c.zhat + c.tail);
        max_single_ratio = max_single_ratio.max(c.ratio());
        prod_single = prod_single * (LogReal::ONE + c.ratio());
    }
    let smaller = s1.len().min(s2.len()) as f64;
    out.inequalities = vec![
        Inequality::new("sum <= R", joint.zhat, ratio),
        Inequality::new("R <= (1+R) (sum + tail)", ratio, (LogReal::ONE + ratio) * (joint.zhat + joint.tail)),
        Inequality::new("sum <= |B''| max single sum", joint.zhat, n * max_single_sum),
        Inequality::new("1 <= |B''|", LogReal::ONE, n),
        Inequality::new("|B''| <= min(|B|, |B'|)", n, LogReal::from_value(smaller)),
        Inequality::new("1+R <= prod (1+R(B))", LogReal::ONE + ratio, prod_single),
        Inequality::new(
            "prod (1+R(B)) <= max (1+R(B))^|B''|",
            prod_single,
            (LogReal::ONE + max_single_ratio).powf(lowest.len() as f64),
        ),
    ];
    out.lowest = lowest;
    out.ratio = Some(ratio);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activities::ScaleSequence;

    fn small() -> (ActivityModel, Volume, Depth) {
        let g = Geometry::default();
        (ActivityModel::homogeneous(g, ScaleSequence::constant(1.0)).unwrap(), Volume::Finite(g.origin_block(0)), Depth::Truncated(2))
    }

    fn q(i: u128) -> Block {
        Block::new(-2, vec![i])
    }

    #[test]
    fn reference_marginals() {
        let (m, v, d) = small();
        assert!((exact_marginal(&m, &[q(0)], &v, d).unwrap() - 5.0 / 13.0).abs() < 1e-15);
        assert!((exact_marginal(&m, &[q(0), q(2)], &v, d).unwrap() - 2.0 / 13.0).abs() < 1e-15);
        assert!((exact_marginal(&m, &[Block::new(0, vec![0])], &v, d).unwrap() - 1.0 / 26.0).abs() < 1e-15);
        assert_eq!(exact_marginal(&m, &[q(0), Block::new(-1, vec![0])], &v, d).unwrap(), 0.0);
        assert_eq!(exact_marginal(&m, &[Block::new(-3, vec![0])], &v, d).unwrap(), 0.0);
        assert_eq!(exact_marginal(&m, &[Block::new(0, vec![1])], &v, d).unwrap(), 0.0);
        assert_eq!(exact_marginal(&m, &[], &v, d).unwrap(), 1.0);
    }

    #[test]
    fn reference_pair_covariances() {
        let (m, v, d) = small();
        let c = pair_covariance(&m, &q(0), &q(2), &v, d).unwrap();
        assert_eq!(c.relation, Relation::Disjoint);
        assert!((c.cov - 1.0 / 169.0).abs() < 1e-15);
        assert!(c.discrepancy() < 1e-15);
        assert!((c.ratio.unwrap().value() - 1.0 / 25.0).abs() < 1e-15);

        let same_half = pair_covariance(&m, &q(0), &q(1), &v, d).unwrap();
        assert!((same_half.ratio.unwrap().value() - (1.25 * 26.0 / 25.0 - 1.0)).abs() < 1e-15);
        assert!(same_half.discrepancy() < 1e-15);

        let nested = pair_covariance(&m, &q(0), &Block::new(-1, vec![0]), &v, d).unwrap();
        assert_eq!(nested.relation, Relation::Nested);
        assert_eq!(nested.p_both, 0.0);
        assert_eq!(nested.cov, nested.factored);

        let var = pair_covariance(&m, &q(0), &q(0), &v, d).unwrap();
        assert!((var.cov - 5.0 / 13.0 * 8.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn configuration_covariance_reference() {
        let (m, v, d) = small();
        let c = config_covariance(&m, &[q(0), q(1)], &[Block::new(-1, vec![1])], &v, d).unwrap();
        assert_eq!(c.lowest, vec![Block::new(0, vec![0])]);
        assert!(c.discrepancy() < 1e-15);
        assert!(c.bound_check(), "{:?}", c.inequalities);

        let single = config_covariance(&m, &[q(0)], &[q(2)], &v, d).unwrap();
        let pair = pair_covariance(&m, &q(0), &q(2), &v, d).unwrap();
        assert!((single.cov - pair.cov).abs() < 1e-15);

        let overlapping = config_covariance(&m, &[q(0)], &[Block::new(-1, vec![0])], &v, d).unwrap();
        assert_eq!(overlapping.p_union, 0.0);
        assert!(config_covariance(&m, &[q(0)], &[q(0)], &v, d).is_err());
    }

    #[test]
    fn infinite_volume_matches_large_window_limit() {
        let g = Geometry::default();
        let m = ActivityModel::parametric(g, -1.0, 0.0, 0.5).unwrap();
        let b = Block::new(0, vec![3]);
        let inf = marginal(&m, std::slice::from_ref(&b), &Volume::Infinite, Depth::Limit).unwrap();
        let fin = exact_marginal(&m, &[b], &Volume::Finite(g.origin_block(30)), Depth::Limit).unwrap();
        assert!((inf.probability - fin).abs() < 1e-12);
        assert!(inf.tail_bound < 1e-12);
    }

    #[test]
    fn infinite_volume_refused_without_summability() {
        let g = Geometry::default();
        let m = ActivityModel::from_effective(g, ScaleSequence::constant(1.0).with_below(crate::activities::Tail::Zero)).unwrap();
        let b = Block::new(0, vec![0]);
        assert!(matches!(exact_marginal(&m, &[b], &Volume::Infinite, Depth::Limit), Err(Error::Refused(_))));
    }

    #[test]
    fn designed_chain_vacancy_halves_per_ancestor() {
        let g = Geometry::default();
        let seq = ScaleSequence::constant(1.0).with_below(crate::activities::Tail::Zero);
        let m = ActivityModel::from_effective(g, seq).unwrap();
        let b = Block::new(0, vec![0]);
        for a in 1..=6 {
            let w = g.origin_block(a - 1);
            let v = chain_vacancy(&m, &b, &Volume::Finite(w), Depth::Limit).unwrap();
            assert!((v - 0.5f64.powi(a as i32)).abs() < 1e-14);
        }
    }
}
