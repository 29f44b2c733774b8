//! Non-dominated combinatorial site ranking.
//!
//! Sites are scored by how often they appear on the first Pareto front when
//! every non-empty subset of the objectives is considered in turn. The
//! per-site score needs no objective weights; a per-objective contribution
//! vector explains it. The [`predictor`] module fits lookup-table and
//! feedforward surrogates of the objectives, score and contributions.
//!
//! Pipeline: [`dataset`] (parse, dedup, scale) -> [`ranking`] (sweep over
//! [`combinatorics`] subsets using [`pareto`] fronts, with [`checkpoint`]ed
//! progress) -> [`predictor`].

pub mod checkpoint;
pub mod combinatorics;
pub mod dataset;
pub mod error;
pub mod pareto;
pub mod predictor;
pub mod ranking;
pub mod report;
pub mod synthetic;

pub use error::{Error, Result};
