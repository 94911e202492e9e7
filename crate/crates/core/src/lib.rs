#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activities;
pub mod analytics;
pub mod blocks;
pub mod cli;
pub mod error;
pub mod logreal;
pub mod oracle;
pub mod render;
pub mod sampler;
