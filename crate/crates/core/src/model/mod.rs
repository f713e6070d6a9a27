//! In-memory surrogate models: layered neural networks and gradient-boosted
//! tree ensembles.
//!
//! Every value here is validated at construction and immutable afterwards.
//! Exact forward evaluation ([`NetworkDefinition::forward`],
//! [`TreeEnsemble::predict`]) is the ground truth that every formulation is
//! checked against.

mod activation;
mod ensemble;
mod network;

pub use activation::{sigmoid, softplus, Activation};
pub use ensemble::{Tree, TreeEnsemble, TreeNode};
pub use network::{
    conv_as_sparse_affine, Conv2dLayer, DenseLayer, ForwardTrace, Layer, LayerKind, NetworkDefinition, OffsetScaling,
    SparseAffine,
};

use thiserror::Error;

/// Closed interval `[lo, hi]` over the reals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

impl From<(f64, f64)> for Interval {
    fn from((lo, hi): (f64, f64)) -> Self {
        Self { lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("network has no layers")]
    EmptyNetwork,
    #[error("input size must be positive")]
    EmptyInput,
    #[error("layer {layer}: {what} has length {found}, expected {expected}")]
    DimensionMismatch {
        layer: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("input has length {found}, expected {expected}")]
    InputLength { expected: usize, found: usize },
    #[error("bound {index}: lower bound {lb} exceeds upper bound {ub}")]
    InvertedBound { index: usize, lb: f64, ub: f64 },
    #[error("bound {index} is not finite")]
    InfiniteBound { index: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("layer {layer}: invalid convolution: {reason}")]
    InvalidConv { layer: usize, reason: String },
    #[error("scaling: {what} has length {found}, expected {expected}")]
    ScalingLength {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("scaling: {what}[{index}] is zero")]
    ZeroScalingFactor { what: &'static str, index: usize },
    #[error("ensemble must have at least one feature")]
    NoFeatures,
    #[error("tree {tree}: tree has no nodes")]
    EmptyTree { tree: usize },
    #[error("tree {tree}, node {node}: child id {child} out of bounds ({len} nodes)")]
    ChildOutOfRange {
        tree: usize,
        node: usize,
        child: usize,
        len: usize,
    },
    #[error("tree {tree}, node {node}: cyclic child reference to node {child}")]
    Cycle { tree: usize, node: usize, child: usize },
    #[error("tree {tree}, node {node}: node {child} has more than one parent")]
    SharedNode { tree: usize, node: usize, child: usize },
    #[error("tree {tree}, node {node}: unreachable from the root")]
    Unreachable { tree: usize, node: usize },
    #[error("tree {tree}, node {node}: feature index {feature} out of range ({n_features} features)")]
    FeatureOutOfRange {
        tree: usize,
        node: usize,
        feature: usize,
        n_features: usize,
    },
}

pub(crate) fn check_finite(values: &[f64], what: impl FnOnce() -> String) -> Result<(), ModelError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { what: what() })
    }
}

/// Exact forward pass of `net` at raw input `x`.
pub fn nn_forward(net: &NetworkDefinition, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    net.forward(x)
}

/// Ensemble prediction at `x`.
pub fn gbt_predict(ens: &TreeEnsemble, x: &[f64]) -> Result<f64, ModelError> {
    ens.predict(x)
}
