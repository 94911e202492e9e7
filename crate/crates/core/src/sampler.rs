//! Exact samplers for the hierarchical measure, Mandelbrot percolation and
//! the Bernoulli-max construction, plus a parallel Monte Carlo harness.
//!
//! Sample `i` of a run with root seed `s` draws from ChaCha8 stream `i` keyed
//! by `s`, so results do not depend on how samples are spread over threads.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activities::ActivityModel;
use crate::analytics::{ancestor_chain, marginals::is_disjoint_family, ChainOptions, Depth, Engine};
use crate::blocks::{Block, Geometry};
use crate::error::{Error, Result};
use crate::logreal::LogReal;

/// Generator for sample `index` under root `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Largest per-block ratio table built for inhomogeneous models.
pub const MAX_TABLE_BLOCKS: usize = 1 << 22;

/// Ancestor scan stops once the remaining coverage probability is below this.
pub const CHAIN_TAIL_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub window: Block,
    pub depth: i64,
    pub seed: u64,
    pub sample: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covered_by_ancestor: Option<i64>,
    pub blocks: Vec<Block>,
}

impl Configuration {
    /// Checks disjointness, window containment and the depth floor.
    pub fn validate(&self, g: &Geometry) -> Result<()> {
        for b in &self.blocks {
            if !g.admits(b) {
                return Err(Error::DimensionMismatch { expected: g.dim(), got: b.dim() });
            }
            if !g.contains(&self.window, b) {
                return Err(Error::Domain(format!("{b} lies outside the window {}", self.window)));
            }
            if b.scale < -self.depth {
                return Err(Error::Domain(format!("{b} lies below the depth floor {}", -self.depth)));
            }
        }
        if !is_disjoint_family(g, &self.blocks) {
            return Err(Error::Domain("configuration contains overlapping blocks".into()));
        }
        if self.covered_by_ancestor.is_some() && !self.blocks.is_empty() {
            return Err(Error::Domain("a covered window cannot contain blocks".into()));
        }
        Ok(())
    }

    /// Whether every block of `probe` is present.
    pub fn contains_all(&self, probe: &[Block]) -> bool {
        probe.iter().all(|b| self.blocks.binary_search(b).is_ok())
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty() && self.covered_by_ancestor.is_none()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("configurations serialize")
    }
}

/// Occupation ratios for the blocks of one window down to a depth floor.
#[derive(Debug, Clone, PartialEq)]
pub enum RatioTable {
    Constant(f64),
    /// `values[i]` is the ratio at scale `top - i`.
    PerScale { top: i64, values: Vec<f64> },
    PerBlock(HashMap<Block, f64>),
}

impl RatioTable {
    /// Ratios `ρ̂` of the model truncated to `window` and scales `>= -depth`.
    pub fn gibbs(model: &ActivityModel, window: &Block, depth: i64) -> Result<Self> {
        let g = model.geometry();
        if !g.admits(window) {
            return Err(Error::DimensionMismatch { expected: g.dim(), got: window.dim() });
        }
        let floor = -depth;
        let mut engine = Engine::new(model, Depth::Truncated(depth));
        if model.law_below(window).is_some() {
            let mut values = Vec::new();
            let mut b = window.clone();
            while b.scale >= floor {
                values.push(engine.rho(&b)?);
                if b.scale == floor {
                    break;
                }
                b = g.children(&b)?.swap_remove(0);
            }
            return Ok(RatioTable::PerScale { top: window.scale, values });
        }
        let levels = (window.scale - floor + 1).max(0) as u32;
        let branching = g.branching();
        let total = (0..levels).map(|k| branching.powi(k as i32)).sum::<f64>();
        if total > MAX_TABLE_BLOCKS as f64 {
            return Err(Error::CapExceeded { size: total, cap: MAX_TABLE_BLOCKS as f64 });
        }
        let mut map = HashMap::new();
        let mut level = vec![window.clone()];
        for _ in 0..levels {
            let mut next = Vec::new();
            for b in &level {
                map.insert(b.clone(), engine.rho(b)?);
                if b.scale > floor {
                    next.extend(g.children(b)?);
                }
            }
            level = next;
        }
        Ok(RatioTable::PerBlock(map))
    }

    pub fn ratio(&self, b: &Block) -> f64 {
        match self {
            RatioTable::Constant(p) => *p,
            RatioTable::PerScale { top, values } => {
                usize::try_from(top - b.scale).ok().and_then(|i| values.get(i)).copied().unwrap_or(0.0)
            }
            RatioTable::PerBlock(map) => map.get(b).copied().unwrap_or(0.0),
        }
    }

    /// Every block of the window down to `-depth` with its ratio.
    pub fn tabulate(&self, g: &Geometry, window: &Block, depth: i64) -> Result<BTreeMap<Block, f64>> {
        let mut out = BTreeMap::new();
        let mut level = vec![window.clone()];
        while !level.is_empty() {
            let mut next = Vec::new();
            for b in level {
                if b.scale > -depth {
                    next.extend(g.children(&b)?);
                }
                let r = self.ratio(&b);
                out.insert(b, r);
            }
            level = next;
        }
        Ok(out)
    }
}

fn draw(rng: &mut ChaCha8Rng, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.gen::<f64>() < p
    }
}

fn descend(g: &Geometry, table: &RatioTable, b: &Block, floor: i64, rng: &mut ChaCha8Rng, out: &mut Vec<Block>) {
    if draw(rng, table.ratio(b)) {
        out.push(b.clone());
        return;
    }
    if b.scale > floor {
        for c in g.children(b).expect("children of a block inside a validated window") {
            descend(g, table, &c, floor, rng, out);
        }
    }
}

/// Pruned top-down sample driven by an arbitrary ratio table.
pub fn sample_top_down(g: &Geometry, table: &RatioTable, window: &Block, depth: i64, seed: u64, sample: u64) -> Configuration {
    let mut rng = sample_rng(seed, sample);
    let mut blocks = Vec::new();
    descend(g, table, window, -depth, &mut rng, &mut blocks);
    blocks.sort();
    Configuration { window: window.clone(), depth, seed, sample, covered_by_ancestor: None, blocks }
}

/// One draw from the truncated Gibbs measure of `window`.
pub fn sample_gibbs(model: &ActivityModel, window: &Block, depth: i64, seed: u64) -> Result<Configuration> {
    let table = RatioTable::gibbs(model, window, depth)?;
    Ok(sample_top_down(model.geometry(), &table, window, depth, seed, 0))
}

/// Mandelbrot percolation: every visited block is kept with probability `p`.
pub fn sample_mandelbrot(g: &Geometry, p: f64, window: &Block, depth: i64, seed: u64) -> Result<Configuration> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} must lie in [0, 1]")));
    }
    Ok(sample_top_down(g, &RatioTable::Constant(p), window, depth, seed, 0))
}

/// Independent Bernoulli draws on every listed block, keeping the maximal
/// occupied ones.
pub fn sample_bernoulli_max(
    g: &Geometry,
    ratios: &BTreeMap<Block, f64>,
    window: &Block,
    depth: i64,
    seed: u64,
    sample: u64,
) -> Configuration {
    let mut rng = sample_rng(seed, sample);
    let occupied: Vec<&Block> = ratios.iter().filter(|(_, &p)| draw(&mut rng, p)).map(|(b, _)| b).collect();
    let mut blocks: Vec<Block> = occupied
        .iter()
        .filter(|b| !occupied.iter().any(|a| a != *b && g.contains(a, b)))
        .map(|b| (*b).clone())
        .collect();
    blocks.sort();
    Configuration { window: window.clone(), depth, seed, sample, covered_by_ancestor: None, blocks }
}

/// Coverage law of the strict ancestors of a window in infinite volume.
#[derive(Debug, Clone, PartialEq)]
pub struct AncestorLaw {
    /// `P(no strict ancestor is occupied)`.
    pub vacant: f64,
    /// `(k, P(the ancestor at scale k is occupied))`, lowest first.
    pub occupied: Vec<(i64, f64)>,
}

impl AncestorLaw {
    pub fn new(model: &ActivityModel, window: &Block, depth: i64) -> Result<Self> {
        let chain = ancestor_chain(model, window, Depth::Truncated(depth), ChainOptions::default())?;
        if !chain.holds() {
            return Err(Error::Refused(format!(
                "the ancestor sums above {window} are not certified summable ({:?})",
                chain.status
            )));
        }
        let n = chain.terms.len();
        // suffix sums of ln(1 + ẑ) over strictly higher scales
        let mut above = vec![LogReal::Zero; n + 1];
        for i in (0..n).rev() {
            above[i] = above[i + 1] + chain.terms[i].1.ln_1p();
        }
        let occupied = chain
            .terms
            .iter()
            .enumerate()
            .map(|(i, &(k, zh))| (k, zh.odds_to_probability() * (-above[i + 1].value()).exp()))
            .collect();
        Ok(Self { vacant: (-above[0].value()).exp(), occupied })
    }

    pub fn covered_probability(&self) -> f64 {
        1.0 - self.vacant
    }

    /// Inverse-CDF draw of the occupied ancestor scale, if any.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Option<i64> {
        let u: f64 = rng.gen();
        if u < self.vacant {
            return None;
        }
        let mut acc = self.vacant;
        let mut remaining = 1.0 - self.vacant;
        for &(k, q) in &self.occupied {
            acc += q;
            remaining -= q;
            if u < acc || remaining < CHAIN_TAIL_EPS {
                return Some(k);
            }
        }
        self.occupied.last().map(|t| t.0)
    }
}

/// One draw from the infinite-volume measure seen through `window`.
pub fn sample_gibbs_infinite(model: &ActivityModel, window: &Block, depth: i64, seed: u64) -> Result<Configuration> {
    let law = AncestorLaw::new(model, window, depth)?;
    let table = RatioTable::gibbs(model, window, depth)?;
    Ok(sample_infinite_with(model.geometry(), &law, &table, window, depth, seed, 0))
}

fn sample_infinite_with(
    g: &Geometry,
    law: &AncestorLaw,
    table: &RatioTable,
    window: &Block,
    depth: i64,
    seed: u64,
    sample: u64,
) -> Configuration {
    let mut rng = sample_rng(seed, sample);
    if let Some(k) = law.draw(&mut rng) {
        return Configuration {
            window: window.clone(),
            depth,
            seed,
            sample,
            covered_by_ancestor: Some(k),
            blocks: Vec::new(),
        };
    }
    let mut blocks = Vec::new();
    descend(g, table, window, -depth, &mut rng, &mut blocks);
    blocks.sort();
    Configuration { window: window.clone(), depth, seed, sample, covered_by_ancestor: None, blocks }
}

/// Which construction a batch run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    TopDown,
    BernoulliMax,
    Infinite,
    Mandelbrot { p: f64 },
}

/// A prepared sampler: ratios and ancestor law are computed once.
pub struct Sampler {
    geometry: Geometry,
    window: Block,
    depth: i64,
    kind: SamplerKind,
    table: RatioTable,
    listed: BTreeMap<Block, f64>,
    ancestors: Option<AncestorLaw>,
}

impl Sampler {
    pub fn new(model: &ActivityModel, window: &Block, depth: i64, kind: SamplerKind) -> Result<Self> {
        if -depth > window.scale {
            return Err(Error::Domain(format!("depth floor {} lies above the window {window}", -depth)));
        }
        let g = *model.geometry();
        let table = match kind {
            SamplerKind::Mandelbrot { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Domain(format!("p = {p} must lie in [0, 1]")));
                }
                RatioTable::Constant(p)
            }
            _ => RatioTable::gibbs(model, window, depth)?,
        };
        let listed = match kind {
            SamplerKind::BernoulliMax => table.tabulate(&g, window, depth)?,
            _ => BTreeMap::new(),
        };
        let ancestors = match kind {
            SamplerKind::Infinite => Some(AncestorLaw::new(model, window, depth)?),
            _ => None,
        };
        Ok(Self { geometry: g, window: window.clone(), depth, kind, table, listed, ancestors })
    }

    pub fn kind(&self) -> &SamplerKind {
        &self.kind
    }

    pub fn ratios(&self) -> &RatioTable {
        &self.table
    }

    pub fn ancestor_law(&self) -> Option<&AncestorLaw> {
        self.ancestors.as_ref()
    }

    pub fn sample(&self, seed: u64, index: u64) -> Configuration {
        let (g, w, d) = (&self.geometry, &self.window, self.depth);
        match (&self.kind, &self.ancestors) {
            (SamplerKind::BernoulliMax, _) => sample_bernoulli_max(g, &self.listed, w, d, seed, index),
            (SamplerKind::Infinite, Some(law)) => sample_infinite_with(g, law, &self.table, w, d, seed, index),
            _ => sample_top_down(g, &self.table, w, d, seed, index),
        }
    }

    /// Samples `0..n`, in index order.
    pub fn sample_many(&self, n: u64, seed: u64, workers: usize) -> Result<Vec<Configuration>> {
        Ok(pool(workers)?.install(|| (0..n).into_par_iter().map(|i| self.sample(seed, i)).collect()))
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))
}

/// A finite block set whose joint occupation is counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub name: String,
    pub blocks: Vec<Block>,
}

impl Probe {
    pub fn new(name: impl Into<String>, blocks: &[Block]) -> Self {
        let mut blocks = blocks.to_vec();
        blocks.sort();
        blocks.dedup();
        Self { name: name.into(), blocks }
    }
}

/// Aggregated hit counts of a batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub count: u64,
    pub probes: Vec<Probe>,
    pub hits: Vec<u64>,
    pub empty: u64,
    pub covered: u64,
}

impl SampleBatch {
    fn frequency(&self, k: u64) -> (f64, f64) {
        let n = self.count as f64;
        let p = k as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }

    /// Estimate and binomial standard error for probe `i`.
    pub fn estimate(&self, i: usize) -> (f64, f64) {
        self.frequency(self.hits[i])
    }

    pub fn empty_frequency(&self) -> (f64, f64) {
        self.frequency(self.empty)
    }

    pub fn covered_frequency(&self) -> (f64, f64) {
        self.frequency(self.covered)
    }

    /// `probe,hits,n,estimate,stderr` rows, ending with the empty and covered counts.
    pub fn to_csv(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            probe: &'a str,
            hits: u64,
            n: u64,
            estimate: f64,
            stderr: f64,
        }
        let named = self.probes.iter().map(|p| p.name.as_str()).zip(self.hits.iter().copied());
        let tail = [("empty", self.empty), ("covered", self.covered)];
        let mut w = csv::Writer::from_writer(Vec::new());
        for (probe, hits) in named.chain(tail) {
            let (estimate, stderr) = self.frequency(hits);
            w.serialize(Row { probe, hits, n: self.count, estimate, stderr }).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// Draws `n` samples on `workers` threads and counts probe hits. The counts
/// are sums of integers, so they do not depend on the worker count.
pub fn estimate(sampler: &Sampler, n: u64, probes: &[Probe], seed: u64, workers: usize) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::Domain("the sample count must be at least 1".into()));
    }
    let width = probes.len() + 2;
    let counts = pool(workers)?.install(|| {
        (0..n)
            .into_par_iter()
            .fold(
                || vec![0u64; width],
                |mut acc, i| {
                    let c = sampler.sample(seed, i);
                    for (j, p) in probes.iter().enumerate() {
                        acc[j] += c.contains_all(&p.blocks) as u64;
                    }
                    acc[width - 2] += c.is_empty() as u64;
                    acc[width - 1] += c.covered_by_ancestor.is_some() as u64;
                    acc
                },
            )
            .reduce(|| vec![0u64; width], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
    });
    Ok(SampleBatch {
        count: n,
        probes: probes.to_vec(),
        hits: counts[..probes.len()].to_vec(),
        empty: counts[width - 2],
        covered: counts[width - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activities::{ScaleSequence, Tail};

    fn g() -> Geometry {
        Geometry::default()
    }

    fn ones() -> ActivityModel {
        ActivityModel::homogeneous(g(), ScaleSequence::constant(1.0)).unwrap()
    }

    #[test]
    fn deterministic_and_valid() {
        let m = ones();
        let w = g().origin_block(0);
        let s = Sampler::new(&m, &w, 2, SamplerKind::TopDown).unwrap();
        for i in 0..200 {
            let c = s.sample(7, i);
            assert_eq!(c, s.sample(7, i));
            c.validate(&g()).unwrap();
            assert!(c.blocks.iter().all(|b| b.scale >= -2));
        }
        assert_eq!(sample_gibbs(&m, &w, 2, 3).unwrap(), s.sample(3, 0));
    }

    #[test]
    fn degenerate_ratios() {
        let w = g().origin_block(0);
        let zero = ActivityModel::zero(g());
        assert!(sample_gibbs(&zero, &w, 4, 1).unwrap().blocks.is_empty());
        assert!(sample_mandelbrot(&g(), 0.0, &w, 4, 1).unwrap().blocks.is_empty());
        assert_eq!(sample_mandelbrot(&g(), 1.0, &w, 4, 1).unwrap().blocks, vec![w.clone()]);
        assert!(sample_mandelbrot(&g(), 1.5, &w, 4, 1).is_err());

        let inner = Block::new(-1, vec![0]);
        let ratios = BTreeMap::from([(w.clone(), 1.0), (inner, 1.0)]);
        assert_eq!(sample_bernoulli_max(&g(), &ratios, &w, 1, 0, 0).blocks, vec![w]);
    }

    #[test]
    fn per_block_table_for_explicit_models() {
        let w = g().origin_block(0);
        let half = Block::new(-1, vec![1]);
        let m = ActivityModel::explicit(g(), BTreeMap::from([(half.clone(), 3.0)]), 1.0).unwrap();
        let table = RatioTable::gibbs(&m, &w, 3).unwrap();
        assert!(matches!(table, RatioTable::PerBlock(_)));
        // quarters below the half have Ξ = 1 + 2^2 = 5, so ẑ = 3/25
        assert!((table.ratio(&half) - 3.0 / 28.0).abs() < 1e-15);
        assert!((table.ratio(&Block::new(-1, vec![0])) - 1.0 / 26.0).abs() < 1e-15);
        assert_eq!(table.tabulate(&g(), &w, 3).unwrap().len(), 15);
    }

    #[test]
    fn counts_do_not_depend_on_workers() {
        let m = ones();
        let w = g().origin_block(0);
        let s = Sampler::new(&m, &w, 2, SamplerKind::TopDown).unwrap();
        let probes = [Probe::new("q0", &[Block::new(-2, vec![0])])];
        let a = estimate(&s, 5000, &probes, 11, 1).unwrap();
        let b = estimate(&s, 5000, &probes, 11, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn two_step_chain_coverage() {
        let c: f64 = 0.3;
        let zh = c / (1.0 - c);
        let seq = ScaleSequence::from_pairs(&[(1, zh), (2, zh)]).with_below(Tail::Zero);
        let m = ActivityModel::from_effective(g(), seq).unwrap();
        let law = AncestorLaw::new(&m, &g().origin_block(0), 0).unwrap();
        assert!((law.covered_probability() - (c + (1.0 - c) * c)).abs() < 1e-15);
        let total: f64 = law.vacant + law.occupied.iter().map(|t| t.1).sum::<f64>();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_sampler_refuses_without_summability() {
        let seq = ScaleSequence::constant(1.0).with_below(Tail::Zero);
        let m = ActivityModel::from_effective(g(), seq).unwrap();
        let r = Sampler::new(&m, &g().origin_block(0), 0, SamplerKind::Infinite);
        assert!(matches!(r, Err(Error::Refused(_))));
    }
}
