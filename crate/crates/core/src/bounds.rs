//! Forward interval arithmetic over a network.
//!
//! The resulting per-neuron intervals supply the big-M constants and the
//! partial-sum bounds used by the ReLU formulations. Bounds are computed in
//! the same accumulation order as the forward pass so that sampled neuron
//! values are contained exactly, without tolerance.

use serde::Serialize;
use thiserror::Error;

use crate::model::{Interval, NetworkDefinition, SparseAffine};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("input bound {index} is not finite")]
    InfiniteInput { index: usize },
    #[error("partition class {class} is empty")]
    EmptyClass { class: usize },
    #[error("partition is not a disjoint cover of {len} indices: {reason}")]
    NotACover { len: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerBounds {
    pub pre: Vec<Interval>,
    pub post: Vec<Interval>,
}

/// Interval bounds for every neuron, in scaled units, plus the input box
/// (scaled) and output box (raw units).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalBounds {
    pub input: Vec<Interval>,
    pub layers: Vec<LayerBounds>,
    pub output: Vec<Interval>,
}

impl IntervalBounds {
    /// Post-activation bounds feeding layer `layer`.
    pub fn incoming(&self, layer: usize) -> &[Interval] {
        if layer == 0 {
            &self.input
        } else {
            &self.layers[layer - 1].post
        }
    }
}

/// Bounds of `b + sum_j w_j x_j` for each output of `affine`, with
/// `x_j` in `incoming[j]`.
pub fn affine_bounds(affine: &SparseAffine, incoming: &[Interval]) -> Vec<Interval> {
    affine
        .rows
        .iter()
        .zip(&affine.bias)
        .map(|(row, b)| {
            let (mut lo, mut hi) = (*b, *b);
            for (j, w) in row {
                let (a, c) = (w * incoming[*j].lo, w * incoming[*j].hi);
                lo += a.min(c);
                hi += a.max(c);
            }
            Interval::new(lo, hi)
        })
        .collect()
}

pub fn propagate_bounds(net: &NetworkDefinition) -> Result<IntervalBounds, BoundsError> {
    if let Some(index) = net.input_bounds().iter().position(|b| !b.is_finite()) {
        return Err(BoundsError::InfiniteInput { index });
    }
    let input = net.scaled_input_bounds();
    let mut layers: Vec<LayerBounds> = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let incoming = layers.last().map_or(input.as_slice(), |l| l.post.as_slice());
        let pre = affine_bounds(&layer.affine(), incoming);
        let act = layer.activation;
        let post = pre
            .iter()
            .map(|iv| Interval::new(act.apply(iv.lo), act.apply(iv.hi)))
            .collect();
        layers.push(LayerBounds { pre, post });
    }
    let last = &layers.last().expect("network has layers").post;
    let output = match net.scaling() {
        Some(s) => last
            .iter()
            .enumerate()
            .map(|(j, iv)| s.unscale_output_interval(j, *iv))
            .collect(),
        None => last.clone(),
    };
    Ok(IntervalBounds { input, layers, output })
}

/// Bounds on each partial sum `v_k = sum_{i in S_k} w_i x_i`.
pub fn partition_sum_bounds(
    weights: &[f64],
    incoming: &[Interval],
    partitions: &[Vec<usize>],
) -> Result<Vec<Interval>, BoundsError> {
    let len = weights.len();
    let mut covered = vec![false; len];
    for (class, members) in partitions.iter().enumerate() {
        if members.is_empty() {
            return Err(BoundsError::EmptyClass { class });
        }
        for &i in members {
            if i >= len {
                return Err(BoundsError::NotACover {
                    len,
                    reason: format!("index {i} out of range"),
                });
            }
            if std::mem::replace(&mut covered[i], true) {
                return Err(BoundsError::NotACover {
                    len,
                    reason: format!("index {i} appears twice"),
                });
            }
        }
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(BoundsError::NotACover {
            len,
            reason: format!("index {i} is missing"),
        });
    }
    Ok(partitions
        .iter()
        .map(|members| {
            let (mut lo, mut hi) = (0.0, 0.0);
            for &i in members {
                let (a, c) = (weights[i] * incoming[i].lo, weights[i] * incoming[i].hi);
                lo += a.min(c);
                hi += a.max(c);
            }
            Interval::new(lo, hi)
        })
        .collect())
}

/// Sorts positions by weight (ties by position) and cuts them into
/// `min(n, len)` contiguous classes of near-equal size; the first
/// `len % classes` classes get one extra member.
pub fn default_partitions(weights: &[f64], n: usize) -> Vec<Vec<usize>> {
    let len = weights.len();
    let classes = n.clamp(1, len.max(1));
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|a, b| weights[*a].total_cmp(&weights[*b]).then(a.cmp(b)));
    let base = len / classes;
    let extra = len % classes;
    let mut out = Vec::with_capacity(classes);
    let mut start = 0;
    for k in 0..classes {
        let size = base + usize::from(k < extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    out
}
