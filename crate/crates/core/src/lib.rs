// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actions;
pub mod baseline;
pub mod config;
pub mod demand;
pub mod error;
pub mod io;
pub mod mcs;
pub mod network;
pub mod optimizer;
pub mod oracle;
pub mod plan;
pub mod report;
pub mod scenario;
pub mod utility;
