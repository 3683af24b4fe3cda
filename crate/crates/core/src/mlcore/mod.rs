//! Learning primitives: boosted trees and dense networks trained with Adam.

pub mod adam;
pub mod boost;
pub mod nn;
pub mod tree;

pub use adam::AdamState;
pub use boost::{fit_boosted, fit_boosted_with_history, BoostParams, BoostedModel, Objective};
pub use nn::{Activation, DenseLayer, DenseNetwork, ForwardTrace, Gradients};
pub use tree::{RegressionTree, TreeNode};
