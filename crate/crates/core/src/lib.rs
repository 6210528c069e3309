//! Monte-Carlo tree search biased by learned action habits.
//!
//! * [`tangram`]: the Sticky Tangram construction task.
//! * [`habits`]: the hierarchical Dirichlet process sequence model over action tokens.
//! * [`planner`]: MCTS with the habit term and open-loop chunk expansions.
//! * [`taskgen`]: certified silhouette generation and complexity matching.
//! * [`harness`]: the training, budget and ambiguity experiments.

pub mod habits;
pub mod harness;
pub mod planner;
pub mod tangram;
pub mod taskgen;
