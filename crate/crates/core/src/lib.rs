//! Simulator for distributed primal decomposition on constraint-coupled
//! linear programs over random time-varying graphs.
//!
//! Agents hold private LPs linked by a shared coupling constraint. Each
//! round a random subset of edges is active, every agent solves its relaxed
//! local LP for its current allocation, and neighbors exchange multipliers
//! to move the allocations. The block subgradient method on edge variables
//! and a dual subgradient baseline run on the same activation replay.

pub mod baseline;
pub mod bench;
pub mod blocksub;
pub mod dpd;
pub mod graph;
pub mod local;
pub mod lpsolve;
pub mod model;
pub mod trace;
