//! Rate-distortion-cost computation for block sources whose decoder buys
//! side information through actions.
//!
//! The pipeline is: describe a [`problem::Problem`], pick a
//! [`codetree::CodetreeSet`], reduce it to [`solver::PairMetrics`], then
//! solve, trace or target with the [`solver`] functions. [`simulator`]
//! checks achievability with random codebooks.

pub mod acceptance;
pub mod closed_forms;
pub mod codetree;
pub mod info;
pub mod problem;
pub mod radix;
pub mod report;
pub mod simulator;
pub mod solver;
