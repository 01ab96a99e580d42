//! Predictive two-phase scheduling for multi-user wireless VR.
//!
//! Each interval has a proactive phase, spent on packets the user will likely
//! want next, and a deadline phase for wanted packets that were not sent ahead.
//! [`offline`] solves the expected-QoE problem by dual decomposition on the
//! proactive budget. [`online`] learns the same price from realized demand.
//! [`knapsack`] is the variant with byte budgets and whole-frame resolutions.
//! [`sim`] runs the grid mobility model over many users and replications.

pub mod cli;
pub mod error;
pub mod knapsack;
pub mod mobility;
pub mod model;
pub mod offline;
pub mod online;
pub mod sim;
