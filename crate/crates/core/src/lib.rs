//! Constraint-driven graph generation.
//!
//! Graphs are modeled as extended adjacency matrices (node types on the
//! diagonal, undirected edges in the strict lower triangle). A policy
//! trained with clipped-surrogate policy gradients learns to edit random
//! matrices into graphs that satisfy a declared constraint set.

pub mod baselines;
pub mod cli;
pub mod bench;
pub mod composer;
pub mod constraints;
pub mod error;
pub mod env;
pub mod export;
pub mod graph;
pub mod learner;
pub mod nn;

pub use constraints::{ConstraintSet, ViolationReport};
pub use error::{Error, Result};
pub use graph::{action_to_cell, cell_to_action, init_random, triang, CellIndex, GraphConfig, GraphState, NodeType, TypeCode};
