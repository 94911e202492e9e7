//! The `hiercubes` command line.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::activities::ActivityModel;
use crate::analytics::{
    critical_mu, decay_profile, existence_report, pair_covariance, pressure_profile, Decision, Depth, Engine, Relation,
    Verdict, Volume,
};
use crate::blocks::{Block, Geometry};
use crate::error::{Error, Result};
use crate::oracle::{condensation_table, default_matrix, fragmentation_table, run_suite, System};
use crate::render::render_svg;
use crate::sampler::{estimate, Probe, Sampler, SamplerKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_UNDECIDED: i32 = 3;

/// Largest tree drawn in the per-block table of `analyze`.
const BLOCK_TABLE_LIMIT: usize = 4096;
/// Largest number of SVG files written by `sample`.
const SVG_LIMIT: u64 = 64;

#[derive(Debug, Parser)]
#[command(name = "hiercubes", version, about = "Hard-core gas of hierarchical cubes: analytics, oracles and samplers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Existence verdict, pressure profile and effective activities.
    Analyze(Common),
    /// Exact samples as JSON lines, with optional SVG pictures and probe estimates.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        sampler: Option<SamplerChoice>,
        /// Ratio of the Mandelbrot sampler.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Pair covariances and decay of `R_j`.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        j_min: Option<i64>,
        #[arg(long)]
        j_max: Option<i64>,
    },
    /// Critical chemical potential of the parametric family.
    Critical {
        #[command(flatten)]
        common: Common,
        #[arg(long = "coupling", short = 'J')]
        coupling: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Runs the verifier suite on small enumerated systems.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Adds a fixture with a perturbed occupation ratio, which must fail.
        #[arg(long)]
        inject_perturbation: bool,
    },
    /// Fragmentation and condensation tables for one block.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        block: Option<Block>,
        /// Number of enclosing windows in the condensation table.
        #[arg(long)]
        levels: Option<i64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerChoice {
    TopDown,
    BernoulliMax,
    Infinite,
    Mandelbrot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Flags shared by every command. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Run configuration as a JSON document.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Activity model as a JSON document.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub depth: Option<i64>,
    /// Window block, written `j:(m1,...,md)`.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<Block>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Probe as blocks separated by `;`; repeatable.
    #[arg(long = "probe", allow_hyphen_values = true)]
    pub probes: Vec<String>,
}

/// Settings of a run after merging the config file with the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<Vec<Format>>,
    pub seed: Option<u64>,
    pub depth: Option<i64>,
    pub window: Option<Block>,
    pub samples: Option<u64>,
    pub tol: Option<f64>,
    pub workers: Option<usize>,
    pub probes: Vec<Vec<Block>>,
    pub j_max: Option<i64>,
    pub sampler: Option<SamplerChoice>,
    pub p: Option<f64>,
}

impl RunConfig {
    pub fn load(common: &Common) -> Result<Self> {
        let mut c = match &common.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => {$( if common.$f.is_some() { c.$f = common.$f.clone(); } )*};
        }
        over!(model, out, format, seed, depth, window, samples, tol, workers);
        if !common.probes.is_empty() {
            c.probes = common.probes.iter().map(|p| parse_probe(p)).collect::<Result<_>>()?;
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.tol.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Domain("--tol must be positive".into()));
        }
        if self.samples == Some(0) {
            return Err(Error::Domain("--samples must be at least 1".into()));
        }
        if self.depth.is_some_and(|d| d < 0) {
            return Err(Error::Domain("--depth must be non-negative".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Domain("--workers must be at least 1".into()));
        }
        Ok(())
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn formats(&self) -> BTreeSet<Format> {
        self.format.clone().unwrap_or_else(|| vec![Format::Csv, Format::Json]).into_iter().collect()
    }

    fn wants(&self, f: Format) -> bool {
        self.formats().contains(&f)
    }

    fn model(&self) -> Result<ActivityModel> {
        let path = self.model.as_ref().ok_or_else(|| Error::Domain("--model is required".into()))?;
        ActivityModel::from_json(&fs::read_to_string(path)?)
    }

    fn window(&self, g: &Geometry) -> Result<Block> {
        let w = self.window.clone().unwrap_or_else(|| g.origin_block(0));
        if !g.admits(&w) {
            return Err(Error::DimensionMismatch { expected: g.dim(), got: w.dim() });
        }
        Ok(w)
    }

    fn depth(&self) -> i64 {
        self.depth.unwrap_or(3)
    }

    fn tol(&self) -> f64 {
        self.tol.unwrap_or(1e-12)
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Domain("--seed is required for sampling".into()))
    }
}

fn parse_probe(s: &str) -> Result<Vec<Block>> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(|p| p.parse()).collect()
}

fn probe_name(blocks: &[Block]) -> String {
    blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(";")
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// JSON number, with the infinities spelled `"+inf"` and `"-inf"`.
fn extended(x: f64) -> Value {
    if x == f64::INFINITY {
        json!("+inf")
    } else if x == f64::NEG_INFINITY {
        json!("-inf")
    } else {
        json!(x)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Refused(_) | Error::Undecided(_) | Error::CapExceeded { .. } | Error::Bracket(_) => EXIT_UNDECIDED,
        _ => EXIT_ERROR,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Analyze(common) => analyze(&RunConfig::load(&common)?),
        Command::Sample { common, sampler, p } => {
            let mut c = RunConfig::load(&common)?;
            c.sampler = sampler.or(c.sampler);
            c.p = p.or(c.p);
            sample(&c)
        }
        Command::Correlate { common, j_min, j_max } => {
            let mut c = RunConfig::load(&common)?;
            c.j_max = j_max.or(c.j_max);
            correlate(&c, j_min.unwrap_or(1))
        }
        Command::Critical { common, coupling, alpha, dim } => critical(&RunConfig::load(&common)?, coupling, alpha, dim),
        Command::Validate { common, inject_perturbation } => validate(&RunConfig::load(&common)?, inject_perturbation),
        Command::Diagnose { common, block, levels } => diagnose(&RunConfig::load(&common)?, block, levels),
    }
}

fn analyze(c: &RunConfig) -> Result<i32> {
    let model = c.model()?;
    let g = *model.geometry();
    let window = c.window(&g)?;
    let depth = c.depth();
    let dir = c.out_dir()?;
    let report = existence_report(&model);
    println!("verdict: {}", report.verdict.label());
    if c.wants(Format::Json) {
        let doc = json!({ "verdict": report.verdict.label(), "report": report });
        write(&dir, "existence_report.json", &to_json(&doc))?;
    }
    if c.wants(Format::Csv) {
        if model.global_law().is_some() {
            #[derive(Serialize)]
            struct Row {
                scale: i64,
                ln_zhat: f64,
                partial_pressure: f64,
            }
            let profile = pressure_profile(&model, c.tol())?;
            let rows = profile.rows.iter().map(|r| Row { scale: r.scale, ln_zhat: r.zhat.ln(), partial_pressure: r.partial });
            write(&dir, "pressure_profile.csv", &to_csv(rows)?)?;
            if c.wants(Format::Json) {
                let summary = json!({
                    "pressure": extended(profile.pressure),
                    "theta_star": extended(profile.theta_star),
                    "tail_bound": profile.tail_bound,
                    "tail_certified": profile.tail_certified,
                });
                write(&dir, "pressure_summary.json", &to_json(&summary))?;
            }
        }
        write(&dir, "block_table.csv", &block_table(&model, &window, depth)?)?;
    }
    Ok(if report.verdict == Verdict::Undecided { EXIT_UNDECIDED } else { EXIT_OK })
}

/// Activities, effective activities and ratios on the window tree, or on its
/// leftmost chain when the tree is large.
fn block_table(model: &ActivityModel, window: &Block, depth: i64) -> Result<String> {
    let g = model.geometry();
    let levels = (window.scale + depth + 1).max(1);
    let size: f64 = (0..levels).map(|k| g.branching().powi(k as i32)).sum();
    let blocks: Vec<Block> = if size <= BLOCK_TABLE_LIMIT as f64 && size <= 128.0 {
        System::new(*g, window, depth)?.blocks
    } else {
        let mut chain = vec![window.clone()];
        while chain.last().is_some_and(|b| b.scale > -depth) {
            let next = g.children(chain.last().expect("non-empty"))?.remove(0);
            chain.push(next);
        }
        chain
    };
    /// Entries the limit engine refuses are left empty.
    #[derive(Serialize)]
    struct Row {
        block: Block,
        scale: i64,
        ln_z: f64,
        ln_zhat_limit: Option<f64>,
        rho_limit: Option<f64>,
        ln_zhat_truncated: Option<f64>,
        rho_truncated: Option<f64>,
    }
    let mut limit = Engine::new(model, Depth::Limit);
    let mut truncated = Engine::new(model, Depth::Truncated(depth));
    let rows = blocks.into_iter().map(|b| Row {
        scale: b.scale,
        ln_z: model.activity(&b).ln(),
        ln_zhat_limit: limit.zhat(&b).ok().map(|z| z.ln()),
        rho_limit: limit.rho(&b).ok(),
        ln_zhat_truncated: truncated.zhat(&b).ok().map(|z| z.ln()),
        rho_truncated: truncated.rho(&b).ok(),
        block: b,
    });
    to_csv(rows)
}

fn build_sampler(c: &RunConfig, model: &ActivityModel, window: &Block) -> Result<Sampler> {
    let kind = match c.sampler.unwrap_or(SamplerChoice::TopDown) {
        SamplerChoice::TopDown => SamplerKind::TopDown,
        SamplerChoice::BernoulliMax => SamplerKind::BernoulliMax,
        SamplerChoice::Infinite => SamplerKind::Infinite,
        SamplerChoice::Mandelbrot => {
            SamplerKind::Mandelbrot { p: c.p.ok_or_else(|| Error::Domain("--p is required for the Mandelbrot sampler".into()))? }
        }
    };
    Sampler::new(model, window, c.depth(), kind)
}

fn sample(c: &RunConfig) -> Result<i32> {
    let model = c.model()?;
    let g = *model.geometry();
    let window = c.window(&g)?;
    let seed = c.seed()?;
    let n = c.samples.unwrap_or(1);
    let dir = c.out_dir()?;
    let sampler = build_sampler(c, &model, &window)?;
    let configs = sampler.sample_many(n, seed, c.workers())?;
    if c.wants(Format::Json) {
        let mut s = String::new();
        for conf in &configs {
            s.push_str(&conf.to_json());
            s.push('\n');
        }
        write(&dir, "samples.jsonl", &s)?;
    }
    if c.wants(Format::Svg) {
        for conf in configs.iter().take(SVG_LIMIT as usize) {
            write(&dir, &format!("sample_{:04}.svg", conf.sample), &render_svg(&g, conf)?)?;
        }
    }
    if c.wants(Format::Csv) && !c.probes.is_empty() {
        let probes: Vec<Probe> = c.probes.iter().map(|p| Probe::new(probe_name(p), p)).collect();
        let batch = estimate(&sampler, n, &probes, seed, c.workers())?;
        write(&dir, "estimates.csv", &batch.to_csv())?;
    }
    println!("wrote {n} samples to {}", dir.display());
    Ok(EXIT_OK)
}

/// Monte Carlo covariance of two indicators from joint counts, with a
/// delta-method standard error.
fn mc_covariance(n: u64, n1: u64, n2: u64, n12: u64) -> (f64, f64) {
    let nf = n as f64;
    let (m1, m2) = (n1 as f64 / nf, n2 as f64 / nf);
    let cov = n12 as f64 / nf - m1 * m2;
    let cells = [
        (n12, 1.0 - m1 - m2),
        (n1 - n12, -m2),
        (n2 - n12, -m1),
        (n - n1 - n2 + n12, 0.0),
    ];
    let mean: f64 = cells.iter().map(|&(k, f)| k as f64 * f).sum::<f64>() / nf;
    let var: f64 = cells.iter().map(|&(k, f)| k as f64 * (f - mean).powi(2)).sum::<f64>() / nf;
    (cov, (var / nf).sqrt())
}

fn correlate(c: &RunConfig, j_min: i64) -> Result<i32> {
    let model = c.model()?;
    let g = *model.geometry();
    let window = c.window(&g)?;
    let depth = c.depth();
    let dir = c.out_dir()?;
    let volume = Volume::Finite(window.clone());
    let pairs: Vec<(Block, Block)> = c
        .probes
        .iter()
        .map(|p| match p.as_slice() {
            [a, b] => Ok((a.clone(), b.clone())),
            _ => Err(Error::Parse(format!("correlate probes need exactly two blocks, got {}", probe_name(p)))),
        })
        .collect::<Result<_>>()?;
    let mc = match (c.samples, pairs.is_empty()) {
        (Some(n), false) => {
            let sampler = build_sampler(c, &model, &window)?;
            let mut probes = Vec::new();
            for (a, b) in &pairs {
                probes.push(Probe::new("a", std::slice::from_ref(a)));
                probes.push(Probe::new("b", std::slice::from_ref(b)));
                probes.push(Probe::new("ab", &[a.clone(), b.clone()]));
            }
            Some(estimate(&sampler, n, &probes, c.seed()?, c.workers())?)
        }
        _ => None,
    };
    #[derive(Serialize)]
    struct Row {
        block1: Block,
        block2: Block,
        relation: Relation,
        lcs: i64,
        distance: f64,
        p1: f64,
        p2: f64,
        cov_exact: f64,
        cov_factored: f64,
        ratio: Option<f64>,
        cov_mc: Option<f64>,
        cov_mc_stderr: Option<f64>,
    }
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (i, (a, b)) in pairs.iter().enumerate() {
        let pc = pair_covariance(&model, a, b, &volume, Depth::Truncated(depth))?;
        let mc = mc.as_ref().map(|batch| {
            let h = &batch.hits[3 * i..3 * i + 3];
            mc_covariance(batch.count, h[0], h[1], h[2])
        });
        table.push(Row {
            block1: a.clone(),
            block2: b.clone(),
            relation: pc.relation,
            lcs: pc.lcs,
            distance: pc.distance,
            p1: pc.p1,
            p2: pc.p2,
            cov_exact: pc.cov,
            cov_factored: pc.factored,
            ratio: pc.ratio.map(|r| r.value()),
            cov_mc: mc.map(|m| m.0),
            cov_mc_stderr: mc.map(|m| m.1),
        });
        rows.push(pc);
    }
    if c.wants(Format::Csv) && !pairs.is_empty() {
        write(&dir, "covariance.csv", &to_csv(table)?)?;
    }
    if c.wants(Format::Json) && !pairs.is_empty() {
        write(&dir, "covariance.json", &to_json(&rows))?;
    }
    let mut code = EXIT_OK;
    if model.global_law().is_some() {
        match decay_profile(&model, j_min, c.j_max.unwrap_or(20), c.tol()) {
            Ok(profile) => {
                #[derive(Serialize)]
                struct Row {
                    scale: i64,
                    ln_zhat: f64,
                    ln_ratio: f64,
                    scaled_log_ratio: f64,
                    target: f64,
                    ln_upper: f64,
                    sandwich: bool,
                    residual: Option<f64>,
                    ln_residual: Option<f64>,
                }
                let table = profile.rows.iter().map(|r| Row {
                    scale: r.scale,
                    ln_zhat: r.zhat.ln(),
                    ln_ratio: r.ratio.ln(),
                    scaled_log_ratio: r.scaled_log_ratio,
                    target: profile.target,
                    ln_upper: r.upper.ln(),
                    sandwich: r.sandwich_holds(),
                    residual: r.residual.map(|x| x.value()),
                    ln_residual: r.residual.map(|x| x.ln()),
                });
                if c.wants(Format::Csv) {
                    write(&dir, "decay.csv", &to_csv(table)?)?;
                }
                if c.wants(Format::Json) {
                    write(&dir, "decay.json", &to_json(&profile))?;
                }
            }
            Err(e) if exit_code(&e) == EXIT_UNDECIDED => {
                eprintln!("decay table: {e}");
                code = EXIT_UNDECIDED;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(code)
}

fn critical(c: &RunConfig, coupling: Option<f64>, alpha: Option<f64>, dim: Option<usize>) -> Result<i32> {
    let from_model = match &c.model {
        Some(_) => Some(c.model()?.to_spec()),
        None => None,
    };
    let (mut d, mut j, mut a) = (1usize, None, None);
    if let Some(spec) = &from_model {
        d = spec.dim;
        if let crate::activities::ModelBody::Parametric { coupling, alpha, .. } = spec.body {
            j = Some(coupling);
            a = Some(alpha);
        }
    }
    let d = dim.unwrap_or(d);
    let j = coupling.or(j).ok_or_else(|| Error::Domain("--coupling is required".into()))?;
    let a = alpha.or(a).ok_or_else(|| Error::Domain("--alpha is required".into()))?;
    let g = Geometry::new(d, 2)?;
    let tol = c.tol.unwrap_or(1e-6);
    let report = critical_mu(g, j, a, tol)?;
    let mu_c = extended(report.mu_c);
    let gibbs = match &report.gibbs_at_mu_c {
        Decision::Undecided { reason } => json!({ "flag": "undecided", "reason": reason }),
        other => json!({ "flag": other.label() }),
    };
    let trace: Vec<Value> = report
        .trace
        .iter()
        .map(|e| json!({ "mu": e.mu, "holds": e.holds, "j_max": e.j_max, "status": e.status, "sum_zhat": e.sum.value() }))
        .collect();
    let doc = json!({
        "d": d,
        "J": j,
        "alpha": a,
        "tol": tol,
        "mu_c": mu_c,
        "lo": report.lo,
        "hi": extended(report.hi),
        "gibbs_at_mu_c": gibbs,
        "approach": report.approach,
        "trace": trace,
    });
    println!("mu_c: {}", if report.mu_c.is_finite() { report.mu_c.to_string() } else { "+inf".into() });
    let dir = c.out_dir()?;
    write(&dir, "critical.json", &to_json(&doc))?;
    Ok(EXIT_OK)
}

fn validate(c: &RunConfig, inject: bool) -> Result<i32> {
    let results = run_suite(&default_matrix()?, inject)?;
    let mut failed = 0;
    for r in &results {
        let tag = match (r.passed, r.expect_violation) {
            (true, true) => "PASS (violation detected, expected)",
            (true, false) => "PASS",
            (false, _) => "FAIL",
        };
        if !r.passed {
            failed += 1;
        }
        println!("{tag:<36} {:<22} {:<40} max_residual={:e}", r.report.check, r.system, r.report.max_residual);
    }
    if c.out.is_some() && c.wants(Format::Json) {
        write(&c.out_dir()?, "validation.json", &to_json(&results))?;
    }
    println!("{} checks, {failed} failed", results.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VALIDATION })
}

fn diagnose(c: &RunConfig, block: Option<Block>, levels: Option<i64>) -> Result<i32> {
    let model = c.model()?;
    let g = *model.geometry();
    let window = c.window(&g)?;
    let block = block.unwrap_or_else(|| window.clone());
    let dir = c.out_dir()?;
    let shallowest = (-block.scale).max(0);
    let depths: Vec<i64> = (shallowest..=c.depth().max(shallowest)).collect();
    let windows: Vec<Block> = (0..=levels.unwrap_or(10))
        .map(|k| g.ancestor_at(&block, block.scale + k))
        .collect::<Result<_>>()?;
    let mut code = EXIT_OK;
    let mut doc = serde_json::Map::new();
    match fragmentation_table(&model, &window, &block, &depths) {
        Ok(rows) => {
            #[derive(Serialize)]
            struct Row {
                depth: i64,
                ln_xi: f64,
                occupied: f64,
                subtree_occupied: f64,
                empty: f64,
            }
            let table = rows.iter().map(|r| Row {
                depth: r.depth,
                ln_xi: r.xi.ln(),
                occupied: r.occupied,
                subtree_occupied: r.subtree_occupied,
                empty: r.empty,
            });
            if c.wants(Format::Csv) {
                write(&dir, "fragmentation.csv", &to_csv(table)?)?;
            }
            doc.insert("fragmentation".into(), serde_json::to_value(&rows)?);
        }
        Err(e) => {
            code = exit_code(&e).max(code);
            doc.insert("fragmentation_error".into(), json!(e.to_string()));
        }
    }
    match condensation_table(&model, &block, &windows) {
        Ok(rows) => {
            if c.wants(Format::Csv) {
                write(&dir, "condensation.csv", &to_csv(&rows)?)?;
            }
            doc.insert("condensation".into(), serde_json::to_value(&rows)?);
        }
        Err(e) => {
            code = exit_code(&e).max(code);
            doc.insert("condensation_error".into(), json!(e.to_string()));
        }
    }
    doc.insert("existence".into(), serde_json::to_value(existence_report(&model))?);
    if c.wants(Format::Json) {
        write(&dir, "diagnose.json", &to_json(&Value::Object(doc)))?;
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"seed": 5, "depth": 2, "samples": 10}"#).unwrap();
        let common = Common { config: Some(path), seed: Some(9), ..Common::default() };
        let c = RunConfig::load(&common).unwrap();
        assert_eq!((c.seed, c.depth, c.samples), (Some(9), Some(2), Some(10)));
    }

    #[test]
    fn rejects_bad_tolerance() {
        let common = Common { tol: Some(0.0), ..Common::default() };
        assert!(RunConfig::load(&common).is_err());
    }

    #[test]
    fn probes_parse() {
        let p = parse_probe("-1:(0); -1:(1)").unwrap();
        assert_eq!(p, vec![Block::new(-1, vec![0]), Block::new(-1, vec![1])]);
    }

    #[test]
    fn mc_covariance_of_independent_counts() {
        let (cov, se) = mc_covariance(100, 50, 50, 25);
        assert_eq!(cov, 0.0);
        assert!(se > 0.0);
    }
}
