//! Brute-force enumeration of small truncated systems and verifiers for the
//! identities a Gibbs measure must satisfy.
//!
//! Blocks of a system are numbered breadth-first from the window, and a
//! configuration is stored as a bit mask over those numbers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::activities::ActivityModel;
use crate::analytics::{chain_vacancy, exact_marginal, partition_function, Depth, Engine, Volume};
use crate::blocks::{Block, Geometry};
use crate::error::{Error, Result};
use crate::logreal::{log_add_exp, LogReal};
use crate::sampler::RatioTable;

/// Default bound on the number of enumerated configurations.
pub const SUPPORT_CAP: f64 = 1e7;

/// Largest block count for which superset sums use a dense table.
pub const DENSE_BLOCK_LIMIT: usize = 22;

/// The blocks of a window down to a depth floor.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub geometry: Geometry,
    pub window: Block,
    pub depth: i64,
    pub blocks: Vec<Block>,
    index: HashMap<Block, usize>,
    children: Vec<Vec<usize>>,
    /// Strict ancestors of each block.
    ancestors: Vec<u128>,
    /// Each block with all its descendants.
    subtree: Vec<u128>,
}

impl System {
    pub fn new(geometry: Geometry, window: &Block, depth: i64) -> Result<Self> {
        if !geometry.admits(window) {
            return Err(Error::DimensionMismatch { expected: geometry.dim(), got: window.dim() });
        }
        if -depth > window.scale {
            return Err(Error::Domain(format!("depth floor {} lies above the window {window}", -depth)));
        }
        let levels = (window.scale + depth + 1) as u32;
        let total: f64 = (0..levels).map(|k| geometry.branching().powi(k as i32)).sum();
        if total > 128.0 {
            return Err(Error::CapExceeded { size: total, cap: 128.0 });
        }
        let mut blocks = vec![window.clone()];
        let mut parent = vec![usize::MAX];
        let mut i = 0;
        while i < blocks.len() {
            if blocks[i].scale > -depth {
                for c in geometry.children(&blocks[i])? {
                    blocks.push(c);
                    parent.push(i);
                }
            }
            i += 1;
        }
        let n = blocks.len();
        let mut children = vec![Vec::new(); n];
        let mut ancestors = vec![0u128; n];
        for k in 1..n {
            children[parent[k]].push(k);
            ancestors[k] = ancestors[parent[k]] | (1u128 << parent[k]);
        }
        let mut subtree = vec![0u128; n];
        for k in (0..n).rev() {
            subtree[k] |= 1u128 << k;
            if k > 0 {
                let s = subtree[k];
                subtree[parent[k]] |= s;
            }
        }
        let index = blocks.iter().cloned().enumerate().map(|(k, b)| (b, k)).collect();
        Ok(Self { geometry, window: window.clone(), depth, blocks, index, children, ancestors, subtree })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn index_of(&self, b: &Block) -> Option<usize> {
        self.index.get(b).copied()
    }

    /// Blocks meeting block `k`: its ancestors, itself and its descendants.
    fn overlapping(&self, k: usize) -> u128 {
        self.ancestors[k] | self.subtree[k]
    }

    pub fn blocks_of(&self, mask: u128) -> Vec<Block> {
        let mut v: Vec<Block> = (0..self.len()).filter(|k| mask >> k & 1 == 1).map(|k| self.blocks[k].clone()).collect();
        v.sort();
        v
    }

    pub fn mask_of(&self, blocks: &[Block]) -> Option<u128> {
        blocks.iter().try_fold(0u128, |m, b| self.index_of(b).map(|k| m | 1u128 << k))
    }

    /// Whether the blocks of `mask` are pairwise disjoint.
    pub fn is_hard_core(&self, mask: u128) -> bool {
        (0..self.len()).filter(|k| mask >> k & 1 == 1).all(|k| mask & self.ancestors[k] == 0)
    }

    /// `c(B) = 1 + ∏ c(children)`, the number of hard-core subsets.
    pub fn support_size(&self) -> f64 {
        self.count(0)
    }

    fn count(&self, k: usize) -> f64 {
        1.0 + self.children[k].iter().map(|&c| self.count(c)).product::<f64>()
    }
}

/// Every hard-core configuration of a system with its probability.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub system: System,
    pub support: Vec<u128>,
    pub weights: Vec<f64>,
    /// `ln` of the total unnormalized weight.
    pub log_partition: f64,
    lookup: HashMap<u128, usize>,
}

impl ExactDistribution {
    /// Enumerates with per-block log weights for "occupied" and for
    /// "unoccupied, children free".
    fn build(system: System, occupied: &[f64], vacant: &[f64], cap: f64) -> Result<Self> {
        let size = system.support_size();
        if size > cap {
            return Err(Error::CapExceeded { size, cap });
        }
        let list = expand(&system, 0, occupied, vacant);
        let log_partition = list.iter().fold(f64::NEG_INFINITY, |acc, c| log_add_exp(acc, c.1));
        let support: Vec<u128> = list.iter().map(|c| c.0).collect();
        let weights = list.iter().map(|c| (c.1 - log_partition).exp()).collect();
        let lookup = support.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        Ok(Self { system, support, weights, log_partition, lookup })
    }

    pub fn probability(&self, mask: u128) -> f64 {
        self.lookup.get(&mask).map_or(0.0, |&i| self.weights[i])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn configuration(&self, i: usize) -> Vec<Block> {
        self.system.blocks_of(self.support[i])
    }

    /// `P(ω ⊃ blocks)` by summing the support.
    pub fn marginal(&self, blocks: &[Block]) -> f64 {
        match self.system.mask_of(blocks) {
            Some(m) => self.support.iter().zip(&self.weights).filter(|(s, _)| *s & m == m).map(|(_, w)| w).sum(),
            None => 0.0,
        }
    }
}

fn expand(s: &System, k: usize, occupied: &[f64], vacant: &[f64]) -> Vec<(u128, f64)> {
    let mut below: Vec<(u128, f64)> = vec![(0, vacant[k])];
    for &c in &s.children[k] {
        let sub = expand(s, c, occupied, vacant);
        below = below.iter().flat_map(|&(m, w)| sub.iter().map(move |&(m2, w2)| (m | m2, w + w2))).collect();
    }
    let mut out = Vec::with_capacity(below.len() + 1);
    out.push((1u128 << k, occupied[k]));
    out.extend(below);
    out
}

/// The truncated Gibbs distribution of `window`, weights `∏ z(B)`.
pub fn enumerate(model: &ActivityModel, window: &Block, depth: i64) -> Result<ExactDistribution> {
    enumerate_with_cap(model, window, depth, SUPPORT_CAP)
}

pub fn enumerate_with_cap(model: &ActivityModel, window: &Block, depth: i64, cap: f64) -> Result<ExactDistribution> {
    let system = System::new(*model.geometry(), window, depth)?;
    let engine = Engine::new(model, Depth::Truncated(depth));
    let mut occupied = Vec::with_capacity(system.len());
    for b in &system.blocks {
        let z = engine.activity(b);
        if z.is_infinite() {
            return Err(Error::Domain(format!("activity of {b} is infinite")));
        }
        occupied.push(z.ln());
    }
    let vacant = vec![0.0; system.len()];
    ExactDistribution::build(system, &occupied, &vacant, cap)
}

/// The hierarchical measure of a ratio function on a finite system.
pub fn enumerate_hierarchical(
    g: Geometry,
    window: &Block,
    depth: i64,
    ratio: impl Fn(&Block) -> f64,
) -> Result<ExactDistribution> {
    let system = System::new(g, window, depth)?;
    let mut occupied = Vec::with_capacity(system.len());
    let mut vacant = Vec::with_capacity(system.len());
    for b in &system.blocks {
        let r = ratio(b);
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("ratio {r} of {b} is not a probability")));
        }
        occupied.push(r.ln());
        vacant.push((-r).ln_1p());
    }
    ExactDistribution::build(system, &occupied, &vacant, SUPPORT_CAP)
}

/// Worst violation found by a verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub check: String,
    pub max_residual: f64,
    pub worst_case_block: Option<Block>,
    pub worst_case_event: Vec<Block>,
}

impl VerifierReport {
    fn new(check: &str) -> Self {
        Self { check: check.into(), max_residual: 0.0, worst_case_block: None, worst_case_event: Vec::new() }
    }

    fn record(&mut self, residual: f64, s: &System, k: usize, event: u128) {
        if residual > self.max_residual || residual.is_nan() {
            self.max_residual = residual;
            self.worst_case_block = Some(s.blocks[k].clone());
            self.worst_case_event = s.blocks_of(event);
        }
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_residual < threshold
    }
}

fn gnz_block(dist: &ExactDistribution, k: usize, z: f64, report: &mut VerifierReport) {
    let s = &dist.system;
    let meets = s.overlapping(k);
    for (&eta, &w) in dist.support.iter().zip(&dist.weights) {
        if eta & meets != 0 {
            continue;
        }
        let lhs = dist.probability(eta | 1u128 << k);
        report.record((lhs - z * w).abs(), s, k, eta);
    }
}

/// `P(ω ∋ B, ω∖{B} = η) = z(B) P(ω ∩ I_B = ∅, ω∖{B} = η)` for every block and
/// every occupancy pattern `η` of the other blocks.
pub fn verify_gnz(dist: &ExactDistribution, model: &ActivityModel) -> VerifierReport {
    let engine = Engine::new(model, Depth::Truncated(dist.system.depth));
    verify_gnz_with(dist, |b| engine.activity(b).value())
}

pub fn verify_gnz_with(dist: &ExactDistribution, z: impl Fn(&Block) -> f64) -> VerifierReport {
    let mut report = VerifierReport::new("gnz");
    for k in 0..dist.system.len() {
        gnz_block(dist, k, z(&dist.system.blocks[k]), &mut report);
    }
    report
}

/// GNZ residual restricted to one block.
pub fn gnz_residual_at(dist: &ExactDistribution, b: &Block, z: f64) -> Result<VerifierReport> {
    let k = dist.system.index_of(b).ok_or_else(|| Error::Domain(format!("{b} is not part of the system")))?;
    let mut report = VerifierReport::new("gnz");
    gnz_block(dist, k, z, &mut report);
    Ok(report)
}

/// `P(ω ∋ B, ω∖𝔹_B = ξ) = ρ̂(B) P(ω ∩ 𝔸*_B = ∅, ω∖𝔹_B = ξ)` for every block
/// and every pattern `ξ` outside the subtree of `B`.
pub fn verify_topdown(dist: &ExactDistribution, ratio: impl Fn(&Block) -> f64) -> VerifierReport {
    let s = &dist.system;
    let mut report = VerifierReport::new("topdown");
    for k in 0..s.len() {
        let inside = s.subtree[k];
        let mut outside: HashMap<u128, f64> = HashMap::new();
        for (&m, &w) in dist.support.iter().zip(&dist.weights) {
            *outside.entry(m & !inside).or_default() += w;
        }
        let r = ratio(&s.blocks[k]);
        let mut patterns: Vec<_> = outside.into_iter().collect();
        patterns.sort_by_key(|p| p.0);
        for (xi, p_xi) in patterns {
            let lhs = if xi & s.ancestors[k] == 0 { dist.probability(xi | 1u128 << k) } else { 0.0 };
            let rhs = if xi & s.ancestors[k] == 0 { r * p_xi } else { 0.0 };
            report.record((lhs - rhs).abs(), s, k, xi);
        }
    }
    report
}

/// `P(ω ⊃ 𝓑) = 1_Δ ρ̂^𝓑 (1-ρ̂)^{𝔸*_𝓑}` for every `𝓑` in the support, with the
/// left side obtained by summing over supersets.
pub fn verify_hierarchical_formula(dist: &ExactDistribution, ratio: impl Fn(&Block) -> f64) -> Result<VerifierReport> {
    let s = &dist.system;
    let n = s.len();
    if n > DENSE_BLOCK_LIMIT {
        return Err(Error::CapExceeded { size: n as f64, cap: DENSE_BLOCK_LIMIT as f64 });
    }
    let mut table = vec![0.0f64; 1usize << n];
    for (&m, &w) in dist.support.iter().zip(&dist.weights) {
        table[m as usize] += w;
    }
    for bit in 0..n {
        let step = 1usize << bit;
        for m in 0..table.len() {
            if m & step == 0 {
                table[m] += table[m | step];
            }
        }
    }
    let ratios: Vec<f64> = s.blocks.iter().map(&ratio).collect();
    let mut report = VerifierReport::new("hierarchical_formula");
    for &m in &dist.support {
        let ancestors = (0..n).filter(|k| m >> k & 1 == 1).fold(0u128, |a, k| a | s.ancestors[k]);
        let mut ln_rhs = 0.0;
        for k in 0..n {
            if m >> k & 1 == 1 {
                ln_rhs += ratios[k].ln();
            } else if ancestors >> k & 1 == 1 {
                ln_rhs += (-ratios[k]).ln_1p();
            }
        }
        let rhs = if s.is_hard_core(m) { ln_rhs.exp() } else { 0.0 };
        let k = (0..n).find(|k| m >> k & 1 == 1).unwrap_or(0);
        report.record((table[m as usize] - rhs).abs(), s, k, m);
    }
    Ok(report)
}

/// The ratio function `p` on every block.
pub fn mandelbrot_distribution(g: Geometry, p: f64, window: &Block, depth: i64) -> Result<ExactDistribution> {
    enumerate_hierarchical(g, window, depth, |_| p)
}

/// GNZ residual of truncated Mandelbrot percolation at the window, measured
/// against the activity `p/(1-p)` under which floor blocks satisfy the
/// identity exactly.
pub fn mandelbrot_violation(g: Geometry, p: f64, window: &Block, depth: i64) -> Result<VerifierReport> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p = {p} must lie in (0, 1)")));
    }
    let dist = mandelbrot_distribution(g, p, window, depth)?;
    let mut r = gnz_residual_at(&dist, window, p / (1.0 - p))?;
    r.check = "mandelbrot_gnz".into();
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentationRow {
    pub depth: i64,
    pub xi: LogReal,
    /// `P(ω ∋ B)`.
    pub occupied: f64,
    /// `P(ω ∩ 𝔹_B ≠ ∅)`.
    pub subtree_occupied: f64,
    /// `P(ω = ∅) = 1/Ξ`.
    pub empty: f64,
}

/// Occupation probabilities of `block` as the depth grows.
pub fn fragmentation_table(model: &ActivityModel, window: &Block, block: &Block, depths: &[i64]) -> Result<Vec<FragmentationRow>> {
    let g = model.geometry();
    if !g.contains(window, block) {
        return Err(Error::Domain(format!("{block} lies outside the window {window}")));
    }
    let volume = Volume::Finite(window.clone());
    let mut rows = Vec::new();
    for &n in depths {
        let xi = partition_function(model, window, n)?;
        let occupied = exact_marginal(model, std::slice::from_ref(block), &volume, Depth::Truncated(n))?;
        let xi_b = partition_function(model, block, n)?;
        let free = if block == window {
            1.0
        } else {
            chain_vacancy(model, &g.parent(block)?, &volume, Depth::Truncated(n))?
        };
        let subtree_occupied = free * -(LogReal::ONE / xi_b).value() + free;
        rows.push(FragmentationRow { depth: n, xi, occupied, subtree_occupied, empty: (LogReal::ONE / xi).value() });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensationRow {
    pub window: Block,
    /// Number of blocks containing `B` inside the window, `B` included.
    pub ancestors: i64,
    /// `P_Λ(ω ∋ B)`.
    pub occupied: f64,
    /// `P_Λ(ω ∩ 𝔸_B ≠ ∅)`.
    pub chain_occupied: f64,
}

/// Occupation probabilities of `block` and its ancestor chain as the window grows.
pub fn condensation_table(model: &ActivityModel, block: &Block, windows: &[Block]) -> Result<Vec<CondensationRow>> {
    let g = model.geometry();
    let mut rows = Vec::new();
    for w in windows {
        if !g.contains(w, block) {
            return Err(Error::Domain(format!("{block} lies outside the window {w}")));
        }
        let volume = Volume::Finite(w.clone());
        let occupied = exact_marginal(model, std::slice::from_ref(block), &volume, Depth::Limit)?;
        let vacant = chain_vacancy(model, block, &volume, Depth::Limit)?;
        rows.push(CondensationRow { window: w.clone(), ancestors: w.scale - block.scale + 1, occupied, chain_occupied: 1.0 - vacant });
    }
    Ok(rows)
}

/// A small system on which the verifiers run.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub model: ActivityModel,
    pub window: Block,
    pub depth: i64,
}

impl Fixture {
    pub fn new(name: &str, model: ActivityModel, window: Block, depth: i64) -> Self {
        Self { name: name.into(), model, window, depth }
    }
}

fn explicit_entries(g: Geometry, window: &Block, depth: i64) -> Result<std::collections::BTreeMap<Block, f64>> {
    let system = System::new(g, window, depth)?;
    Ok(system.blocks.iter().enumerate().map(|(k, b)| (b.clone(), 0.25 + 0.5 * ((k * 7) % 5) as f64)).collect())
}

/// Homogeneous, parametric, designed and explicit activities in dimensions 1
/// and 2 with depths up to 3.
pub fn default_matrix() -> Result<Vec<Fixture>> {
    use crate::activities::ScaleSequence;
    let g1 = Geometry::default();
    let g2 = Geometry::new(2, 2)?;
    let g3 = Geometry::new(1, 3)?;
    let ones = |g| ActivityModel::homogeneous(g, ScaleSequence::constant(1.0));
    let mut m = Vec::new();
    for n in 0..=3 {
        m.push(Fixture::new(&format!("d1 z=1 depth {n}"), ones(g1)?, g1.origin_block(0), n));
    }
    m.push(Fixture::new("d1 z=0.3 depth 2 window 1:(1)", ActivityModel::homogeneous(g1, ScaleSequence::constant(0.3))?, Block::new(1, vec![1]), 2));
    m.push(Fixture::new("d1 parametric depth 2", ActivityModel::parametric(g1, -1.0, 1.0, 0.5)?, g1.origin_block(1), 2));
    m.push(Fixture::new("d1 designed zhat=1 depth 1", ActivityModel::from_effective(g1, ScaleSequence::from_pairs(&[(-1, 1.0), (0, 1.0)]).with_above(crate::activities::Tail::Geometric(1.0)))?, g1.origin_block(1), 1));
    m.push(Fixture::new(
        "d1 explicit depth 3",
        ActivityModel::explicit(g1, explicit_entries(g1, &g1.origin_block(0), 3)?, 0.0)?,
        g1.origin_block(0),
        3,
    ));
    m.push(Fixture::new("d1 M=3 z=1 depth 2", ones(g3)?, g3.origin_block(0), 2));
    m.push(Fixture::new("d2 z=1 depth 1", ones(g2)?, g2.origin_block(0), 1));
    m.push(Fixture::new("d2 z=1 depth 2", ones(g2)?, g2.origin_block(0), 2));
    m.push(Fixture::new("d2 parametric depth 1", ActivityModel::parametric(g2, -0.5, 1.0, 0.5)?, g2.origin_block(0), 1));
    m.push(Fixture::new(
        "d2 explicit depth 2",
        ActivityModel::explicit(g2, explicit_entries(g2, &g2.origin_block(0), 2)?, 0.0)?,
        g2.origin_block(0),
        2,
    ));
    Ok(m)
}

/// Outcome of one check in the verifier suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub system: String,
    pub report: VerifierReport,
    /// The check is meant to find a violation.
    pub expect_violation: bool,
    pub passed: bool,
}

/// Residual threshold of the verifier suite.
pub const SUITE_THRESHOLD: f64 = 1e-12;

/// Runs the three verifiers on every fixture, then the Mandelbrot
/// demonstration. With `inject_perturbation` a top-down check against ratios
/// shifted by 0.1 on one block is added; it is not expected to pass.
pub fn run_suite(fixtures: &[Fixture], inject_perturbation: bool) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    let mut push = |system: &str, report: VerifierReport, expect_violation: bool| {
        let passed = if expect_violation { report.max_residual > 0.1 } else { report.passes(SUITE_THRESHOLD) };
        out.push(SuiteResult { system: system.into(), report, expect_violation, passed });
    };
    for f in fixtures {
        let dist = enumerate(&f.model, &f.window, f.depth)?;
        let table = RatioTable::gibbs(&f.model, &f.window, f.depth)?;
        push(&f.name, verify_gnz(&dist, &f.model), false);
        push(&f.name, verify_topdown(&dist, |b| table.ratio(b)), false);
        push(&f.name, verify_hierarchical_formula(&dist, |b| table.ratio(b))?, false);
    }
    let g = Geometry::default();
    push("mandelbrot p=1/2 depth 2", mandelbrot_violation(g, 0.5, &g.origin_block(0), 2)?, true);
    if inject_perturbation {
        let model = ActivityModel::homogeneous(g, crate::activities::ScaleSequence::constant(1.0))?;
        let window = g.origin_block(0);
        let dist = enumerate(&model, &window, 2)?;
        let table = RatioTable::gibbs(&model, &window, 2)?;
        let target = Block::new(-1, vec![1]);
        let mut report = verify_topdown(&dist, |b| table.ratio(b) + if *b == target { 0.1 } else { 0.0 });
        report.check = "topdown_perturbed".into();
        push("d1 z=1 depth 2, ratio +0.1 at -1:(1)", report, false);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activities::ScaleSequence;

    fn ones(g: Geometry) -> ActivityModel {
        ActivityModel::homogeneous(g, ScaleSequence::constant(1.0)).unwrap()
    }

    #[test]
    fn support_sizes() {
        let g1 = Geometry::default();
        let g2 = Geometry::new(2, 2).unwrap();
        let w = g1.origin_block(0);
        let d = enumerate(&ones(g1), &w, 2).unwrap();
        assert_eq!(d.len(), 26);
        assert!(d.weights.iter().all(|&x| (x - 1.0 / 26.0).abs() < 1e-15));
        assert!((d.log_partition - 26f64.ln()).abs() < 1e-14);
        assert_eq!(enumerate(&ones(g1), &w, 0).unwrap().len(), 2);
        assert_eq!(enumerate(&ones(g2), &g2.origin_block(0), 1).unwrap().len(), 17);
        let big = System::new(g2, &g2.origin_block(0), 2).unwrap();
        assert_eq!(big.support_size(), 83522.0);
        assert!(matches!(enumerate_with_cap(&ones(g2), &g2.origin_block(0), 2, 1e3), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn verifiers_accept_gibbs_and_catch_perturbations() {
        let g = Geometry::default();
        let m = ones(g);
        let w = g.origin_block(0);
        let d = enumerate(&m, &w, 2).unwrap();
        let t = RatioTable::gibbs(&m, &w, 2).unwrap();
        assert!(verify_gnz(&d, &m).passes(1e-12));
        assert!(verify_topdown(&d, |b| t.ratio(b)).passes(1e-12));
        assert!(verify_hierarchical_formula(&d, |b| t.ratio(b)).unwrap().passes(1e-12));

        let target = Block::new(-1, vec![1]);
        let bad = verify_topdown(&d, |b| t.ratio(b) + if *b == target { 0.1 } else { 0.0 });
        assert!(bad.max_residual > 0.01);
        assert_eq!(bad.worst_case_block, Some(target));
    }

    #[test]
    fn default_suite_passes_and_perturbation_fails() {
        let results = run_suite(&default_matrix().unwrap(), true).unwrap();
        let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
        assert_eq!(failed.len(), 1, "{failed:?}");
        assert_eq!(failed[0].report.check, "topdown_perturbed");
    }

    #[test]
    fn zero_activity_is_trivially_consistent() {
        let g = Geometry::default();
        let m = ActivityModel::zero(g);
        let d = enumerate(&m, &g.origin_block(0), 2).unwrap();
        assert_eq!(d.probability(0), 1.0);
        assert_eq!(verify_gnz(&d, &m).max_residual, 0.0);
        assert_eq!(verify_topdown(&d, |_| 0.0).max_residual, 0.0);
    }

    #[test]
    fn mandelbrot_top_residual_closed_form() {
        let g = Geometry::default();
        let w = g.origin_block(0);
        for (n, blocks) in [(1, 3), (2, 7), (3, 15)] {
            let r = mandelbrot_violation(g, 0.5, &w, n).unwrap();
            let expect = 0.5 - 0.5 * 0.5f64.powi(blocks - 1);
            assert!((r.max_residual - expect).abs() < 1e-15, "n={n}");
        }
    }

    #[test]
    fn fragmentation_sequence() {
        let g = Geometry::default();
        let m = ActivityModel::homogeneous(g, ScaleSequence::from_pairs(&[(0, 1.0)]).with_below(crate::activities::Tail::Geometric(1.0)))
            .unwrap();
        let w = g.origin_block(0);
        let rows = fragmentation_table(&m, &w, &w, &[0, 1, 2, 3]).unwrap();
        let expect = [2.0, 5.0, 26.0, 677.0];
        for (r, x) in rows.iter().zip(expect) {
            assert!((r.occupied - 1.0 / x).abs() < 1e-15);
            assert!((r.subtree_occupied - (1.0 - 1.0 / x)).abs() < 1e-15);
        }
    }

    #[test]
    fn table_matches_enumeration_for_inner_block() {
        let g = Geometry::default();
        let m = ones(g);
        let w = g.origin_block(0);
        let q = Block::new(-1, vec![0]);
        let row = &fragmentation_table(&m, &w, &q, &[2]).unwrap()[0];
        let d = enumerate(&m, &w, 2).unwrap();
        let sub = d.system.subtree[d.system.index_of(&q).unwrap()];
        let brute: f64 = d.support.iter().zip(&d.weights).filter(|(s, _)| *s & sub != 0).map(|(_, w)| w).sum();
        assert!((row.subtree_occupied - brute).abs() < 1e-15);
        assert!((row.occupied - d.marginal(&[q])).abs() < 1e-15);
    }
}
