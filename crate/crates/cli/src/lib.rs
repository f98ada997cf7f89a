//! Command-line harness around `mfbm-core`: Monte-Carlo tables, the
//! convergence study and a graph-structured high-dimensional example.

pub mod commands;
pub mod experiment;
pub mod graph;
