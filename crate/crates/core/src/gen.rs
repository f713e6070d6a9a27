//! Seeded random model generators used by tests, benches and `verify`.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Activation, Interval, Layer, NetworkDefinition, OffsetScaling, TreeEnsemble, TreeNode};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub layers: (usize, usize),
    pub width: (usize, usize),
    pub inputs: (usize, usize),
    pub outputs: (usize, usize),
    /// Activations drawn for hidden layers.
    pub hidden: Vec<Activation>,
    /// Activations drawn for the last layer.
    pub last: Vec<Activation>,
    /// Upper limit on the total number of ReLU neurons.
    pub max_relus: usize,
    /// Probability that the first layer is a convolution (needs >= 4 inputs).
    pub conv_probability: f64,
}

impl NetworkSpec {
    /// Hidden ReLU layers, linear or ReLU output layer.
    pub fn relu() -> Self {
        Self {
            layers: (1, 3),
            width: (1, 6),
            inputs: (1, 3),
            outputs: (1, 1),
            hidden: vec![Activation::Relu],
            last: vec![Activation::Linear, Activation::Relu],
            max_relus: 12,
            conv_probability: 0.0,
        }
    }

    pub fn smooth() -> Self {
        let acts = vec![
            Activation::Linear,
            Activation::Sigmoid,
            Activation::Tanh,
            Activation::Softplus,
        ];
        Self {
            layers: (1, 3),
            width: (1, 8),
            inputs: (1, 4),
            outputs: (1, 3),
            hidden: acts.clone(),
            last: acts,
            max_relus: 0,
            conv_probability: 0.0,
        }
    }

    pub fn any_activation() -> Self {
        Self {
            hidden: Activation::ALL.to_vec(),
            last: Activation::ALL.to_vec(),
            max_relus: usize::MAX,
            conv_probability: 0.3,
            ..Self::smooth()
        }
    }
}

fn uniform(rng: &mut TestRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..=hi)
}

/// Random box with `lb < 0 < ub`.
pub fn random_box(rng: &mut TestRng, n: usize) -> Vec<Interval> {
    (0..n)
        .map(|_| Interval::new(uniform(rng, -1.5, -0.2), uniform(rng, 0.2, 1.5)))
        .collect()
}

pub fn random_point(rng: &mut TestRng, bounds: &[Interval]) -> Vec<f64> {
    bounds.iter().map(|b| uniform(rng, b.lo, b.hi)).collect()
}

/// Random dense (occasionally convolutional) network.
///
/// When the spec draws ReLU activations, the first ReLU layer's first neuron
/// gets a zero bias; since the input box straddles zero, that neuron's
/// pre-activation interval always straddles zero too.
pub fn random_network(rng: &mut TestRng, spec: &NetworkSpec) -> NetworkDefinition {
    let n_layers = rng.random_range(spec.layers.0..=spec.layers.1);
    let mut n_in = rng.random_range(spec.inputs.0..=spec.inputs.1);
    let mut layers = Vec::with_capacity(n_layers);

    let use_conv = spec.conv_probability > 0.0 && n_layers > 1 && rng.random_bool(spec.conv_probability);
    if use_conv {
        n_in = 9;
    }
    let input_bounds = random_box(rng, n_in);

    let mut relus = 0;
    let mut seen_relu = false;
    let mut width = n_in;
    for l in 0..n_layers {
        let last = l + 1 == n_layers;
        let mut act = *if last { &spec.last } else { &spec.hidden }
            .choose(rng)
            .expect("nonempty activation list");
        if last && !seen_relu && spec.hidden == [Activation::Relu] {
            act = Activation::Relu;
        }
        let mut out = if last {
            rng.random_range(spec.outputs.0..=spec.outputs.1)
        } else {
            rng.random_range(spec.width.0..=spec.width.1)
        };
        if act == Activation::Relu {
            let left = spec.max_relus.saturating_sub(relus);
            if left == 0 {
                act = Activation::Linear;
            } else {
                out = out.min(left);
            }
        }
        if l == 0 && use_conv {
            let oc = rng.random_range(1..=2);
            let kernel: Vec<f64> = (0..oc * 4).map(|_| uniform(rng, -1.0, 1.0)).collect();
            let mut bias: Vec<f64> = (0..oc).map(|_| uniform(rng, -0.3, 0.3)).collect();
            if act == Activation::Relu && oc * 4 > spec.max_relus.saturating_sub(relus) {
                act = Activation::Linear;
            }
            if act == Activation::Relu {
                bias[0] = 0.0;
                seen_relu = true;
                relus += oc * 4;
            }
            let layer = Layer::conv2d(kernel, [oc, 1, 2, 2], bias, [1, 3, 3], [1, 1], act).expect("valid conv");
            width = layer.output_size();
            layers.push(layer);
            continue;
        }
        let weights: Vec<Vec<f64>> = (0..out)
            .map(|_| (0..width).map(|_| uniform(rng, -1.0, 1.0)).collect())
            .collect();
        let mut bias: Vec<f64> = (0..out).map(|_| uniform(rng, -0.5, 0.5)).collect();
        if act == Activation::Relu {
            if !seen_relu && l == 0 {
                bias[0] = 0.0;
            }
            seen_relu = true;
            relus += out;
        }
        layers.push(Layer::dense(weights, bias, act).expect("valid dense"));
        width = out;
    }
    NetworkDefinition::new(input_bounds, None, layers).expect("generated network is valid")
}

/// Same network with a random nontrivial scaling attached. Input bounds stay
/// in raw units. Input offsets lie strictly inside the box, so a box that
/// straddles zero still does after scaling.
pub fn with_random_scaling(rng: &mut TestRng, net: &NetworkDefinition) -> NetworkDefinition {
    let factor = |rng: &mut TestRng| {
        let f = uniform(rng, 0.5, 2.0);
        if rng.random_bool(0.3) {
            -f
        } else {
            f
        }
    };
    let n_in = net.input_size();
    let n_out = net.output_size();
    let scaling = OffsetScaling::new(
        net.input_bounds()
            .iter()
            .map(|b| uniform(rng, 0.5 * b.lo.max(-2.0), 0.5 * b.hi.min(2.0)))
            .collect(),
        (0..n_in).map(|_| factor(rng)).collect(),
        (0..n_out).map(|_| uniform(rng, -1.0, 1.0)).collect(),
        (0..n_out).map(|_| factor(rng)).collect(),
    )
    .expect("nonzero factors");
    NetworkDefinition::new(net.input_bounds().to_vec(), Some(scaling), net.layers().to_vec())
        .expect("dimensions unchanged")
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub trees: (usize, usize),
    pub max_depth: usize,
    pub features: (usize, usize),
    /// Upper limit on distinct `(feature, threshold)` pairs.
    pub max_thresholds: usize,
    /// Thresholds are drawn from this many evenly spaced interior grid
    /// points per feature.
    pub grid: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            trees: (1, 5),
            max_depth: 3,
            features: (1, 3),
            max_thresholds: 12,
            grid: 6,
        }
    }
}

/// Random ensemble whose thresholds sit on a coarse grid, so every cell of
/// the threshold grid is at least `width / (grid + 1)` wide.
pub fn random_ensemble(rng: &mut TestRng, spec: &EnsembleSpec) -> TreeEnsemble {
    let n_features = rng.random_range(spec.features.0..=spec.features.1);
    let bounds: Vec<Interval> = (0..n_features)
        .map(|_| {
            let lo = uniform(rng, -1.0, 0.0);
            Interval::new(lo, lo + uniform(rng, 0.5, 2.0))
        })
        .collect();
    let pool_size = rng.random_range(1..=spec.max_thresholds);
    let mut pool: Vec<(usize, f64)> = Vec::new();
    for _ in 0..pool_size {
        let f = rng.random_range(0..n_features);
        let k = rng.random_range(1..=spec.grid) as f64;
        let b = bounds[f];
        let t = b.lo + k / (spec.grid as f64 + 1.0) * b.width();
        if !pool.contains(&(f, t)) {
            pool.push((f, t));
        }
    }
    let n_trees = rng.random_range(spec.trees.0..=spec.trees.1);
    let trees = (0..n_trees)
        .map(|_| {
            let depth = rng.random_range(1..=spec.max_depth);
            let mut nodes = Vec::new();
            grow(rng, &pool, depth, &mut nodes);
            nodes
        })
        .collect();
    TreeEnsemble::new(n_features, uniform(rng, -0.5, 0.5), trees, bounds).expect("generated ensemble is valid")
}

fn grow(rng: &mut TestRng, pool: &[(usize, f64)], depth: usize, nodes: &mut Vec<TreeNode>) -> usize {
    let id = nodes.len();
    if depth == 0 || (id > 0 && rng.random_bool(0.25)) {
        nodes.push(TreeNode::Leaf {
            value: uniform(rng, -1.0, 1.0),
        });
        return id;
    }
    let &(feature, threshold) = pool.choose(rng).expect("nonempty pool");
    nodes.push(TreeNode::Leaf { value: 0.0 });
    let left = grow(rng, pool, depth - 1, nodes);
    let right = grow(rng, pool, depth - 1, nodes);
    nodes[id] = TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}
