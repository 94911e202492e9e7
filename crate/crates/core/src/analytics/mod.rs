//! Partition functions, effective activities, existence conditions,
//! pressure and correlation analytics.

pub mod critical;
pub mod engine;
pub mod existence;
pub mod marginals;
pub mod pressure;

pub use critical::{critical_mu, critical_mu_with, summability_predicate, CriticalOptions, CriticalReport, Decision};
pub use engine::{Depth, Engine, LimitValue};
pub use existence::{
    ancestor_chain, check_condition_i, check_condition_ii, existence_report, ChainOptions, ChainReport, ChainStatus,
    ConditionI, ConditionII, ExistenceReport, Verdict,
};
pub use marginals::{
    chain_vacancy, config_covariance, exact_marginal, ln_exact_marginal, marginal, pair_covariance, ConfigCovariance,
    Marginal, PairCovariance, Relation, Volume,
};
pub use pressure::{decay_profile, pressure_profile, series_summand_bounds, tail_ratio_r, DecayProfile, PressureProfile};

use crate::activities::ActivityModel;
use crate::blocks::Block;
use crate::error::Result;
use crate::logreal::LogReal;

/// `Ξ_window` with activity restricted to scales `>= -n`.
pub fn partition_function(model: &ActivityModel, window: &Block, n: i64) -> Result<LogReal> {
    Engine::new(model, Depth::Truncated(n)).xi(window)
}

/// Untruncated `Ξ_window` with its convergence certificate.
pub fn partition_function_limit(model: &ActivityModel, window: &Block) -> Result<LimitValue> {
    Engine::new(model, Depth::Limit).limit(window)
}

pub fn effective_activity(model: &ActivityModel, b: &Block, depth: Depth) -> Result<LogReal> {
    Engine::new(model, depth).zhat(b)
}

/// `ρ̂(b) = ẑ/(1+ẑ)`, in `[0, 1]`.
pub fn occupation_ratio(model: &ActivityModel, b: &Block, depth: Depth) -> Result<f64> {
    Engine::new(model, depth).rho(b)
}
