//! Reading and writing the JSON exchange formats for networks and tree
//! ensembles.
//!
//! Network file:
//!
//! ```json
//! {"format_version": 1, "input_size": 2, "input_bounds": [[-1, 1], [0, 2]],
//!  "scaling": {"input_offset": [..], "input_factor": [..],
//!              "output_offset": [..], "output_factor": [..]},
//!  "layers": [{"type": "dense", "weights": [[..]], "bias": [..], "activation": "relu"},
//!             {"type": "conv2d", "kernel": [[[[..]]]], "bias": [..],
//!              "input_shape": [C, H, W], "strides": [sh, sw], "activation": "tanh"}]}
//! ```
//!
//! Ensemble file:
//!
//! ```json
//! {"format_version": 1, "n_features": 2, "base_score": 0.5,
//!  "feature_bounds": [[0, 1], [0, 1]],
//!  "trees": [{"nodes": [{"feature": 0, "threshold": 0.5, "left": 1, "right": 2},
//!                       {"leaf": 1.0}, {"leaf": 2.0}]}]}
//! ```
//!
//! Unknown top-level keys are reported as warnings. Every model invariant is
//! checked before a value is returned.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{
    Activation, Interval, Layer, LayerKind, ModelError, NetworkDefinition, OffsetScaling, TreeEnsemble, TreeNode,
};
use crate::numfmt::g17;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("{path}: {source}")]
    Model {
        path: String,
        #[source]
        source: ModelError,
    },
}

impl ParseError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::Field {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// A parsed model plus non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct ParseReport<T> {
    pub model: T,
    pub warnings: Vec<String>,
}

/// Either kind of model, for callers that accept both file types.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Network(NetworkDefinition),
    Ensemble(TreeEnsemble),
}

fn parse_json(text: &str) -> Result<Value, ParseError> {
    serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses either format, deciding by the presence of a `trees` key.
pub fn parse_model(text: &str) -> Result<ParseReport<AnyModel>, ParseError> {
    let root = parse_json(text)?;
    let is_ensemble = root.as_object().is_some_and(|o| o.contains_key("trees"));
    if is_ensemble {
        let r = ensemble_from_value(&root)?;
        Ok(ParseReport {
            model: AnyModel::Ensemble(r.model),
            warnings: r.warnings,
        })
    } else {
        let r = network_from_value(&root)?;
        Ok(ParseReport {
            model: AnyModel::Network(r.model),
            warnings: r.warnings,
        })
    }
}

pub fn parse_network(text: &str) -> Result<ParseReport<NetworkDefinition>, ParseError> {
    network_from_value(&parse_json(text)?)
}

pub fn parse_ensemble(text: &str) -> Result<ParseReport<TreeEnsemble>, ParseError> {
    ensemble_from_value(&parse_json(text)?)
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ParseError> {
    v.as_object()
        .ok_or_else(|| ParseError::field(path, "expected an object"))
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, ParseError> {
    obj.get(key)
        .ok_or_else(|| ParseError::field(join(path, key), "missing required field"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn number(v: &Value, path: &str) -> Result<f64, ParseError> {
    let x = v.as_f64().ok_or_else(|| ParseError::field(path, "expected a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ParseError::field(path, "number is not finite"))
    }
}

fn count(v: &Value, path: &str) -> Result<usize, ParseError> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| ParseError::field(path, "expected a nonnegative integer"))
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, ParseError> {
    v.as_array().ok_or_else(|| ParseError::field(path, "expected an array"))
}

fn numbers(v: &Value, path: &str) -> Result<Vec<f64>, ParseError> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{path}[{i}]")))
        .collect()
}

fn matrix(v: &Value, path: &str) -> Result<Vec<Vec<f64>>, ParseError> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, row)| numbers(row, &format!("{path}[{i}]")))
        .collect()
}

fn fixed<const N: usize>(v: &Value, path: &str) -> Result<[usize; N], ParseError> {
    let items = array(v, path)?;
    if items.len() != N {
        return Err(ParseError::field(
            path,
            format!("expected {N} entries, found {}", items.len()),
        ));
    }
    let mut out = [0; N];
    for (i, item) in items.iter().enumerate() {
        out[i] = count(item, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

fn bounds(v: &Value, path: &str) -> Result<Vec<Interval>, ParseError> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let p = format!("{path}[{i}]");
            let pair = numbers(pair, &p)?;
            match pair.as_slice() {
                [lo, hi] if lo <= hi => Ok(Interval::new(*lo, *hi)),
                [lo, hi] => Err(ParseError::field(
                    p,
                    format!("lower bound {lo} exceeds upper bound {hi}"),
                )),
                _ => Err(ParseError::field(p, "expected [lb, ub]")),
            }
        })
        .collect()
}

fn check_version(obj: &Map<String, Value>) -> Result<(), ParseError> {
    let version = count(required(obj, "format_version", "")?, "format_version")?;
    if version as u64 != FORMAT_VERSION {
        return Err(ParseError::field(
            "format_version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}

fn unknown_keys(obj: &Map<String, Value>, known: &[&str], warnings: &mut Vec<String>) {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            warnings.push(format!("ignoring unknown top-level key `{key}`"));
        }
    }
}

fn network_from_value(root: &Value) -> Result<ParseReport<NetworkDefinition>, ParseError> {
    let obj = object(root, "")?;
    check_version(obj)?;
    let mut warnings = Vec::new();
    unknown_keys(
        obj,
        &["format_version", "input_size", "input_bounds", "scaling", "layers"],
        &mut warnings,
    );

    let input_size = count(required(obj, "input_size", "")?, "input_size")?;
    if input_size == 0 {
        return Err(ParseError::field("input_size", "must be positive"));
    }
    let input_bounds = bounds(required(obj, "input_bounds", "")?, "input_bounds")?;
    if input_bounds.len() != input_size {
        return Err(ParseError::field(
            "input_bounds",
            format!("expected {input_size} bounds, found {}", input_bounds.len()),
        ));
    }

    let scaling = match obj.get("scaling") {
        None | Some(Value::Null) => {
            warnings.push("no scaling block; inputs and outputs are used unscaled".into());
            None
        }
        Some(v) => {
            let s = object(v, "scaling")?;
            let field = |k: &str| -> Result<Vec<f64>, ParseError> {
                numbers(required(s, k, "scaling")?, &format!("scaling.{k}"))
            };
            Some(
                OffsetScaling::new(
                    field("input_offset")?,
                    field("input_factor")?,
                    field("output_offset")?,
                    field("output_factor")?,
                )
                .map_err(|source| ParseError::Model {
                    path: "scaling".into(),
                    source,
                })?,
            )
        }
    };

    let layer_values = array(required(obj, "layers", "")?, "layers")?;
    if layer_values.is_empty() {
        return Err(ParseError::field("layers", "network has no layers"));
    }
    let layers = layer_values
        .iter()
        .enumerate()
        .map(|(i, v)| layer_from_value(v, &format!("layers[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;

    let model = NetworkDefinition::new(input_bounds, scaling, layers).map_err(|source| {
        let path = match &source {
            ModelError::DimensionMismatch { layer, .. } | ModelError::InvalidConv { layer, .. } => {
                format!("layers[{layer}]")
            }
            ModelError::ScalingLength { .. } => "scaling".into(),
            _ => String::new(),
        };
        ParseError::Model { path, source }
    })?;
    Ok(ParseReport { model, warnings })
}

fn layer_from_value(v: &Value, path: &str) -> Result<Layer, ParseError> {
    let obj = object(v, path)?;
    let kind = required(obj, "type", path)?
        .as_str()
        .ok_or_else(|| ParseError::field(join(path, "type"), "expected a string"))?;
    let activation = match obj.get("activation") {
        None => Activation::Linear,
        Some(a) => {
            let p = join(path, "activation");
            let name = a.as_str().ok_or_else(|| ParseError::field(&p, "expected a string"))?;
            name.parse().map_err(|e: String| ParseError::field(p, e))?
        }
    };
    let bias = numbers(required(obj, "bias", path)?, &join(path, "bias"))?;
    let model_err = |source| ParseError::Model {
        path: path.to_string(),
        source,
    };
    match kind {
        "dense" => {
            let weights = matrix(required(obj, "weights", path)?, &join(path, "weights"))?;
            Layer::dense(weights, bias, activation).map_err(model_err)
        }
        "conv2d" => {
            let kpath = join(path, "kernel");
            let (kernel, shape) = kernel_from_value(required(obj, "kernel", path)?, &kpath)?;
            let input_shape = fixed::<3>(required(obj, "input_shape", path)?, &join(path, "input_shape"))?;
            let strides = match obj.get("strides") {
                Some(s) => fixed::<2>(s, &join(path, "strides"))?,
                None => [1, 1],
            };
            Layer::conv2d(kernel, shape, bias, input_shape, strides, activation).map_err(model_err)
        }
        other => Err(ParseError::field(
            join(path, "type"),
            format!("unknown layer type `{other}`"),
        )),
    }
}

/// Reads a nested `[out][in][kh][kw]` array, requiring a rectangular shape.
fn kernel_from_value(v: &Value, path: &str) -> Result<(Vec<f64>, [usize; 4]), ParseError> {
    let mut flat = Vec::new();
    let mut shape = [0usize; 4];
    let outs = array(v, path)?;
    shape[0] = outs.len();
    for (o, ov) in outs.iter().enumerate() {
        let po = format!("{path}[{o}]");
        let ins = array(ov, &po)?;
        for (c, cv) in ins.iter().enumerate() {
            let pc = format!("{po}[{c}]");
            let rows = matrix(cv, &pc)?;
            let dims = [ins.len(), rows.len(), rows.first().map_or(0, Vec::len)];
            if o == 0 && c == 0 {
                shape[1..].copy_from_slice(&dims);
            } else if dims != shape[1..] {
                return Err(ParseError::field(pc, "kernel is not rectangular"));
            }
            for row in &rows {
                if row.len() != shape[3] {
                    return Err(ParseError::field(&pc, "kernel is not rectangular"));
                }
                flat.extend_from_slice(row);
            }
        }
        if ins.len() != shape[1] {
            return Err(ParseError::field(po, "kernel is not rectangular"));
        }
    }
    if shape.contains(&0) {
        return Err(ParseError::field(path, "kernel has an empty dimension"));
    }
    Ok((flat, shape))
}

fn ensemble_from_value(root: &Value) -> Result<ParseReport<TreeEnsemble>, ParseError> {
    let obj = object(root, "")?;
    check_version(obj)?;
    let mut warnings = Vec::new();
    unknown_keys(
        obj,
        &["format_version", "n_features", "base_score", "feature_bounds", "trees"],
        &mut warnings,
    );
    let n_features = count(required(obj, "n_features", "")?, "n_features")?;
    let base_score = match obj.get("base_score") {
        Some(v) => number(v, "base_score")?,
        None => 0.0,
    };
    let feature_bounds = bounds(required(obj, "feature_bounds", "")?, "feature_bounds")?;
    if feature_bounds.len() != n_features {
        return Err(ParseError::field(
            "feature_bounds",
            format!("expected {n_features} bounds, found {}", feature_bounds.len()),
        ));
    }
    let trees = array(required(obj, "trees", "")?, "trees")?
        .iter()
        .enumerate()
        .map(|(t, tv)| {
            let tpath = format!("trees[{t}]");
            let tobj = object(tv, &tpath)?;
            let npath = join(&tpath, "nodes");
            array(required(tobj, "nodes", &tpath)?, &npath)?
                .iter()
                .enumerate()
                .map(|(n, nv)| node_from_value(nv, &format!("{npath}[{n}]")))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let model = TreeEnsemble::new(n_features, base_score, trees, feature_bounds).map_err(|source| {
        let path = match &source {
            ModelError::Cycle { tree, node, .. }
            | ModelError::SharedNode { tree, node, .. }
            | ModelError::ChildOutOfRange { tree, node, .. }
            | ModelError::Unreachable { tree, node }
            | ModelError::FeatureOutOfRange { tree, node, .. } => format!("trees[{tree}].nodes[{node}]"),
            ModelError::EmptyTree { tree } => format!("trees[{tree}]"),
            _ => String::new(),
        };
        ParseError::Model { path, source }
    })?;
    Ok(ParseReport { model, warnings })
}

fn node_from_value(v: &Value, path: &str) -> Result<TreeNode, ParseError> {
    let obj = object(v, path)?;
    if let Some(leaf) = obj.get("leaf") {
        if obj.len() != 1 {
            return Err(ParseError::field(path, "leaf node must only contain `leaf`"));
        }
        return Ok(TreeNode::Leaf {
            value: number(leaf, &join(path, "leaf"))?,
        });
    }
    Ok(TreeNode::Split {
        feature: count(required(obj, "feature", path)?, &join(path, "feature"))?,
        threshold: number(required(obj, "threshold", path)?, &join(path, "threshold"))?,
        left: count(required(obj, "left", path)?, &join(path, "left"))?,
        right: count(required(obj, "right", path)?, &join(path, "right"))?,
    })
}

struct JsonOut(String);

impl JsonOut {
    fn nums(&mut self, v: &[f64]) {
        self.0.push('[');
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                self.0.push_str(", ");
            }
            self.0.push_str(&g17(*x));
        }
        self.0.push(']');
    }

    fn bounds(&mut self, b: &[Interval]) {
        self.0.push('[');
        for (i, iv) in b.iter().enumerate() {
            if i > 0 {
                self.0.push_str(", ");
            }
            self.nums(&[iv.lo, iv.hi]);
        }
        self.0.push(']');
    }
}

/// Serializes a network; numbers carry 17 significant digits so the file
/// parses back to the identical model.
pub fn write_network(net: &NetworkDefinition) -> String {
    let mut out = JsonOut(String::new());
    out.0.push_str("{\n  \"format_version\": 1,\n");
    out.0.push_str(&format!(
        "  \"input_size\": {},\n  \"input_bounds\": ",
        net.input_size()
    ));
    out.bounds(net.input_bounds());
    out.0.push_str(",\n");
    if let Some(s) = net.scaling() {
        out.0.push_str("  \"scaling\": {\n");
        for (i, (key, v)) in [
            ("input_offset", s.input_offset()),
            ("input_factor", s.input_factor()),
            ("output_offset", s.output_offset()),
            ("output_factor", s.output_factor()),
        ]
        .into_iter()
        .enumerate()
        {
            out.0.push_str(&format!("    \"{key}\": "));
            out.nums(v);
            out.0.push_str(if i < 3 { ",\n" } else { "\n" });
        }
        out.0.push_str("  },\n");
    }
    out.0.push_str("  \"layers\": [\n");
    for (i, layer) in net.layers().iter().enumerate() {
        out.0.push_str("    {");
        match &layer.kind {
            LayerKind::Dense(d) => {
                out.0.push_str("\"type\": \"dense\", \"weights\": [");
                for (r, row) in d.weights().iter().enumerate() {
                    if r > 0 {
                        out.0.push_str(", ");
                    }
                    out.nums(row);
                }
                out.0.push_str("], \"bias\": ");
                out.nums(d.bias());
            }
            LayerKind::Conv2d(c) => {
                let [oc, ic, kh, kw] = c.kernel_shape();
                out.0.push_str("\"type\": \"conv2d\", \"kernel\": [");
                let mut chunks = c.kernel().chunks(kw);
                for o in 0..oc {
                    out.0.push_str(if o > 0 { ", [" } else { "[" });
                    for ch in 0..ic {
                        out.0.push_str(if ch > 0 { ", [" } else { "[" });
                        for r in 0..kh {
                            if r > 0 {
                                out.0.push_str(", ");
                            }
                            out.nums(chunks.next().expect("kernel length matches shape"));
                        }
                        out.0.push(']');
                    }
                    out.0.push(']');
                }
                out.0.push_str("], \"bias\": ");
                out.nums(c.bias());
                let [ch, h, w] = c.input_shape();
                let [sh, sw] = c.strides();
                out.0.push_str(&format!(
                    ", \"input_shape\": [{ch}, {h}, {w}], \"strides\": [{sh}, {sw}]"
                ));
            }
        }
        out.0
            .push_str(&format!(", \"activation\": \"{}\"}}", layer.activation.name()));
        out.0.push_str(if i + 1 < net.layers().len() { ",\n" } else { "\n" });
    }
    out.0.push_str("  ]\n}\n");
    out.0
}

pub fn write_ensemble(ens: &TreeEnsemble) -> String {
    let mut out = JsonOut(String::new());
    out.0.push_str("{\n  \"format_version\": 1,\n");
    out.0.push_str(&format!(
        "  \"n_features\": {},\n  \"base_score\": {},\n  \"feature_bounds\": ",
        ens.n_features(),
        g17(ens.base_score())
    ));
    out.bounds(ens.feature_bounds());
    out.0.push_str(",\n  \"trees\": [\n");
    for (t, tree) in ens.trees().iter().enumerate() {
        out.0.push_str("    {\"nodes\": [");
        for (n, node) in tree.nodes().iter().enumerate() {
            if n > 0 {
                out.0.push_str(", ");
            }
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => out.0.push_str(&format!(
                    "{{\"feature\": {feature}, \"threshold\": {}, \"left\": {left}, \"right\": {right}}}",
                    g17(threshold)
                )),
                TreeNode::Leaf { value } => out.0.push_str(&format!("{{\"leaf\": {}}}", g17(value))),
            }
        }
        out.0.push_str("]}");
        out.0.push_str(if t + 1 < ens.trees().len() { ",\n" } else { "\n" });
    }
    out.0.push_str("  ]\n}\n");
    out.0
}
