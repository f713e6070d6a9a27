//! Compiles trained surrogate models (feed-forward neural networks and
//! gradient-boosted tree ensembles) into optimization problems.
//!
//! The pipeline is: [`ingest`] a model, propagate interval [`bounds`],
//! [`formulations::formulate`] it into an [`problem::OptProblem`], then either
//! [`emit`] a solver file or solve it with the built-in exact [`solver`].

pub mod bounds;
pub mod emit;
pub mod formulations;
pub mod gen;
pub mod ingest;
pub mod model;
pub mod numfmt;
pub mod problem;
pub mod solver;

pub use model::{
    gbt_predict, nn_forward, Activation, Interval, Layer, ModelError, NetworkDefinition, OffsetScaling, TreeEnsemble,
    TreeNode,
};
