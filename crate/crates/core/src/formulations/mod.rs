//! Compilers from surrogate models to [`OptProblem`]s.
//!
//! Variable names follow one scheme across every kind:
//!
//! | name | meaning |
//! |------|---------|
//! | `x[i]` | raw input |
//! | `xs[i]` | scaled input (only with scaling) |
//! | `zhat[l][i]` | pre-activation of neuron `i` in layer `l` |
//! | `z[l][i]` | post-activation |
//! | `q[l][i]` | ReLU indicator, 1 when active |
//! | `zp[l][i][k]` | partition auxiliary for class `k` |
//! | `y[j]` | raw output (only with scaling or reduced space) |
//!
//! Neurons whose activation is the identity on their whole pre-activation
//! range (linear layers, ReLUs with `lo >= 0`) get only a `z` variable. ReLUs
//! with `hi <= 0` get a `z` fixed at zero and no rows at all.

mod gbt;
mod network;
mod objective;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::bounds::{default_partitions, propagate_bounds, BoundsError};
use crate::model::{Activation, Interval, LayerKind, ModelError, NetworkDefinition, TreeEnsemble};
use crate::problem::{ConstraintCounts, OptProblem, ProblemError};

pub use gbt::{formulate_gbt, gbt_forward_assignment, GbtOptions, DEFAULT_EPSILON};
pub use network::forward_assignment;
pub use objective::{adversarial_problem, link_objective, ObjectiveSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FormulationKind {
    FullSpaceSmooth,
    ReducedSpaceSmooth,
    ReluBigM,
    ReluComplementarity,
    /// Number of partition classes per neuron.
    ReluPartition(usize),
    GbtBigM,
}

impl FormulationKind {
    /// The five network kinds, with `partitions` classes for the partition
    /// formulation.
    pub fn network_kinds(partitions: usize) -> [FormulationKind; 5] {
        [
            FormulationKind::FullSpaceSmooth,
            FormulationKind::ReducedSpaceSmooth,
            FormulationKind::ReluBigM,
            FormulationKind::ReluComplementarity,
            FormulationKind::ReluPartition(partitions),
        ]
    }

    /// CLI spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            FormulationKind::FullSpaceSmooth => "fullspace",
            FormulationKind::ReducedSpaceSmooth => "reducedspace",
            FormulationKind::ReluBigM => "bigm",
            FormulationKind::ReluComplementarity => "complementarity",
            FormulationKind::ReluPartition(_) => "partition",
            FormulationKind::GbtBigM => "gbt",
        }
    }

    /// Parses a CLI kind name; `partitions` only matters for `partition`.
    pub fn from_cli(name: &str, partitions: usize) -> Option<Self> {
        Some(match name {
            "fullspace" => FormulationKind::FullSpaceSmooth,
            "reducedspace" => FormulationKind::ReducedSpaceSmooth,
            "bigm" => FormulationKind::ReluBigM,
            "complementarity" => FormulationKind::ReluComplementarity,
            "partition" => FormulationKind::ReluPartition(partitions),
            "gbt" => FormulationKind::GbtBigM,
            _ => return None,
        })
    }

    pub fn is_smooth(self) -> bool {
        matches!(
            self,
            FormulationKind::FullSpaceSmooth | FormulationKind::ReducedSpaceSmooth
        )
    }

    pub fn is_relu(self) -> bool {
        matches!(
            self,
            FormulationKind::ReluBigM | FormulationKind::ReluComplementarity | FormulationKind::ReluPartition(_)
        )
    }

    /// Whether networks with this activation can use this kind.
    pub fn accepts(self, act: Activation) -> bool {
        match self {
            FormulationKind::GbtBigM => false,
            k if k.is_smooth() => act.is_smooth(),
            _ => matches!(act, Activation::Linear | Activation::Relu),
        }
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormulationKind::ReluPartition(n) => write!(f, "ReluPartition({n})"),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

impl FromStr for FormulationKind {
    type Err = String;

    /// Accepts the CLI names, with `partition:N` for a class count.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, n) = match s.split_once(':') {
            Some((name, n)) => (name, n.parse().map_err(|_| format!("bad partition count `{n}`"))?),
            None => (s, 2),
        };
        Self::from_cli(name, n).ok_or_else(|| format!("unknown formulation kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("{kind} does not support the {activation} activation (layer {layer})")]
    IncompatibleActivation {
        kind: FormulationKind,
        layer: usize,
        activation: Activation,
    },
    #[error("{kind} supports dense layers only; layer {layer} is a convolution")]
    DenseOnly { kind: FormulationKind, layer: usize },
    #[error("{0} applies to tree ensembles, not networks")]
    WrongModel(FormulationKind),
    #[error("{0} applies to networks; tree ensembles use the gbt formulation")]
    NotForEnsembles(FormulationKind),
    #[error("partition count must be at least 1")]
    ZeroPartitions,
    #[error("input {index} has an infinite bound; formulations need a finite input box")]
    UnboundedInput { index: usize },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("objective: {0}")]
    Objective(String),
    #[error("unknown interface name `{0}`; use x[i] or y[j]")]
    UnknownName(String),
    #[error("label {label} is out of range for {outputs} outputs")]
    LabelOutOfRange { label: usize, outputs: usize },
    #[error("true and target labels are both {0}")]
    SameLabel(usize),
    #[error("radius must be finite and nonnegative, got {0}")]
    BadRadius(f64),
    #[error("epsilon must be finite and nonnegative, got {0}")]
    BadEpsilon(f64),
    #[error("reference input coordinate {index} = {value} lies outside its bounds")]
    OutsideBounds { index: usize, value: f64 },
}

/// How a neuron is encoded, decided from its pre-activation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NeuronClass {
    /// `z = zhat`, a single equality.
    Identity,
    /// ReLU with `hi <= 0`: `z = 0`, no rows.
    Inactive,
    /// ReLU straddling zero.
    Unstable,
    /// Smooth nonlinear activation.
    Smooth,
}

pub(crate) fn classify(act: Activation, pre: Interval) -> NeuronClass {
    match act {
        Activation::Linear => NeuronClass::Identity,
        Activation::Relu if pre.hi <= 0.0 => NeuronClass::Inactive,
        Activation::Relu if pre.lo >= 0.0 => NeuronClass::Identity,
        Activation::Relu => NeuronClass::Unstable,
        _ => NeuronClass::Smooth,
    }
}

fn check_network(net: &NetworkDefinition, kind: FormulationKind) -> Result<(), FormulationError> {
    if kind == FormulationKind::GbtBigM {
        return Err(FormulationError::WrongModel(kind));
    }
    if kind == FormulationKind::ReluPartition(0) {
        return Err(FormulationError::ZeroPartitions);
    }
    for (layer, l) in net.layers().iter().enumerate() {
        if !kind.accepts(l.activation) {
            return Err(FormulationError::IncompatibleActivation {
                kind,
                layer,
                activation: l.activation,
            });
        }
        if matches!(kind, FormulationKind::ReluPartition(_)) && !l.is_dense() {
            return Err(FormulationError::DenseOnly { kind, layer });
        }
    }
    if let Some(index) = net.input_bounds().iter().position(|b| !b.is_finite()) {
        return Err(FormulationError::UnboundedInput { index });
    }
    Ok(())
}

/// Compiles `net` into an optimization problem whose feasible set, projected
/// onto inputs and outputs, is the graph of the network over its input box.
/// The objective is left at zero; see [`link_objective`].
pub fn formulate(net: &NetworkDefinition, kind: FormulationKind) -> Result<OptProblem, FormulationError> {
    check_network(net, kind)?;
    network::build(net, kind)
}

/// Row and binary counts that [`formulate`] produces, from closed-form
/// per-neuron formulas. Let `E` be the neurons that need a pre-activation
/// equality (everything except fixed-off ReLUs), `m` the unstable ReLUs,
/// `S` the scaling rows (inputs plus outputs, when scaling is attached)
/// and `O` the outputs:
///
/// | kind | linear rows | nonlinear | complementarity | binaries |
/// |------|-------------|-----------|-----------------|----------|
/// | full space | `E + S` | smooth neurons | 0 | 0 |
/// | reduced space | 0 | `O` | 0 | 0 |
/// | big-M | `E + 4m + S` | 0 | 0 | `m` |
/// | complementarity | `E + 2m + S` | 0 | `m` | 0 |
/// | partition | `(E - m) + sum(3 + 4 N_i) + S` | 0 | 0 | `m` |
///
/// where `N_i = min(N, fan-in)` for each unstable neuron.
pub fn expected_counts(net: &NetworkDefinition, kind: FormulationKind) -> Result<ConstraintCounts, FormulationError> {
    check_network(net, kind)?;
    let outputs = net.output_size();
    if kind == FormulationKind::ReducedSpaceSmooth {
        return Ok(ConstraintCounts {
            nonlinear: outputs,
            ..Default::default()
        });
    }
    let bounds = propagate_bounds(net)?;
    let (mut e, mut m, mut smooth, mut partition_rows) = (0, 0, 0, 0);
    for (layer, lb) in net.layers().iter().zip(&bounds.layers) {
        let fan_in = layer.input_size();
        for pre in &lb.pre {
            match classify(layer.activation, *pre) {
                NeuronClass::Inactive => {}
                NeuronClass::Identity => e += 1,
                NeuronClass::Smooth => {
                    e += 1;
                    smooth += 1;
                }
                NeuronClass::Unstable => {
                    e += 1;
                    m += 1;
                    if let FormulationKind::ReluPartition(n) = kind {
                        partition_rows += 3 + 4 * n.min(fan_in);
                    }
                }
            }
        }
    }
    let s = if net.scaling().is_some() {
        net.input_size() + outputs
    } else {
        0
    };
    Ok(match kind {
        FormulationKind::FullSpaceSmooth => ConstraintCounts {
            linear: e + s,
            nonlinear: smooth,
            ..Default::default()
        },
        FormulationKind::ReluBigM => ConstraintCounts {
            linear: e + 4 * m + s,
            binaries: m,
            ..Default::default()
        },
        FormulationKind::ReluComplementarity => ConstraintCounts {
            linear: e + 2 * m + s,
            complementarity: m,
            ..Default::default()
        },
        FormulationKind::ReluPartition(_) => ConstraintCounts {
            linear: e - m + partition_rows + s,
            binaries: m,
            ..Default::default()
        },
        FormulationKind::ReducedSpaceSmooth | FormulationKind::GbtBigM => unreachable!("handled above"),
    })
}

/// Partition classes used for neuron `i` of a dense layer.
pub(crate) fn neuron_partitions(net: &NetworkDefinition, layer: usize, neuron: usize, n: usize) -> Vec<Vec<usize>> {
    match &net.layers()[layer].kind {
        LayerKind::Dense(d) => default_partitions(&d.weights()[neuron], n),
        LayerKind::Conv2d(_) => unreachable!("partition formulation rejects convolutions"),
    }
}

/// Model accepted by the compiler front door.
pub enum Surrogate<'a> {
    Network(&'a NetworkDefinition),
    Ensemble(&'a TreeEnsemble),
}

/// Dispatches on model type; `epsilon` only applies to ensembles.
pub fn formulate_any(
    model: Surrogate<'_>,
    kind: FormulationKind,
    epsilon: f64,
) -> Result<OptProblem, FormulationError> {
    match model {
        Surrogate::Network(net) => formulate(net, kind),
        Surrogate::Ensemble(ens) if kind == FormulationKind::GbtBigM => formulate_gbt(ens, &GbtOptions { epsilon }),
        Surrogate::Ensemble(_) => Err(FormulationError::NotForEnsembles(kind)),
    }
}

#[cfg(test)]
mod tests;
