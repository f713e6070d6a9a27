use super::{check_finite, Activation, Interval, ModelError};

/// Affine transformation applied to inputs before the first layer and its
/// inverse applied to the last layer's outputs.
///
/// `x_scaled = (x - input_offset) / input_factor` and
/// `y = y_scaled * output_factor + output_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetScaling {
    input_offset: Vec<f64>,
    input_factor: Vec<f64>,
    output_offset: Vec<f64>,
    output_factor: Vec<f64>,
}

impl OffsetScaling {
    pub fn new(
        input_offset: Vec<f64>,
        input_factor: Vec<f64>,
        output_offset: Vec<f64>,
        output_factor: Vec<f64>,
    ) -> Result<Self, ModelError> {
        for (what, v) in [
            ("input_offset", &input_offset),
            ("input_factor", &input_factor),
            ("output_offset", &output_offset),
            ("output_factor", &output_factor),
        ] {
            check_finite(v, || format!("scaling.{what}"))?;
        }
        if input_factor.len() != input_offset.len() {
            return Err(ModelError::ScalingLength {
                what: "input_factor",
                expected: input_offset.len(),
                found: input_factor.len(),
            });
        }
        if output_factor.len() != output_offset.len() {
            return Err(ModelError::ScalingLength {
                what: "output_factor",
                expected: output_offset.len(),
                found: output_factor.len(),
            });
        }
        for (what, v) in [("input_factor", &input_factor), ("output_factor", &output_factor)] {
            if let Some(index) = v.iter().position(|f| *f == 0.0) {
                return Err(ModelError::ZeroScalingFactor { what, index });
            }
        }
        Ok(Self {
            input_offset,
            input_factor,
            output_offset,
            output_factor,
        })
    }

    pub fn input_offset(&self) -> &[f64] {
        &self.input_offset
    }
    pub fn input_factor(&self) -> &[f64] {
        &self.input_factor
    }
    pub fn output_offset(&self) -> &[f64] {
        &self.output_offset
    }
    pub fn output_factor(&self) -> &[f64] {
        &self.output_factor
    }

    pub fn scale_input(&self, i: usize, x: f64) -> f64 {
        (x - self.input_offset[i]) / self.input_factor[i]
    }

    pub fn unscale_input(&self, i: usize, xs: f64) -> f64 {
        xs * self.input_factor[i] + self.input_offset[i]
    }

    pub fn unscale_output(&self, j: usize, ys: f64) -> f64 {
        ys * self.output_factor[j] + self.output_offset[j]
    }

    pub fn scale_output(&self, j: usize, y: f64) -> f64 {
        (y - self.output_offset[j]) / self.output_factor[j]
    }

    /// Image of a raw input interval in scaled units.
    pub fn scale_input_interval(&self, i: usize, iv: Interval) -> Interval {
        order(self.scale_input(i, iv.lo), self.scale_input(i, iv.hi))
    }

    pub fn unscale_output_interval(&self, j: usize, iv: Interval) -> Interval {
        order(self.unscale_output(j, iv.lo), self.unscale_output(j, iv.hi))
    }
}

fn order(a: f64, b: f64) -> Interval {
    if a <= b {
        Interval::new(a, b)
    } else {
        Interval::new(b, a)
    }
}

/// Fully connected layer, `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self, ModelError> {
        Self::validated(weights, bias, 0)
    }

    fn validated(weights: Vec<Vec<f64>>, bias: Vec<f64>, layer: usize) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::DimensionMismatch {
                layer,
                what: "weights",
                expected: 1,
                found: 0,
            });
        }
        let cols = weights[0].len();
        if cols == 0 {
            return Err(ModelError::DimensionMismatch {
                layer,
                what: "weights[0]",
                expected: 1,
                found: 0,
            });
        }
        if let Some(row) = weights.iter().find(|r| r.len() != cols) {
            return Err(ModelError::DimensionMismatch {
                layer,
                what: "weights row",
                expected: cols,
                found: row.len(),
            });
        }
        if bias.len() != weights.len() {
            return Err(ModelError::DimensionMismatch {
                layer,
                what: "bias",
                expected: weights.len(),
                found: bias.len(),
            });
        }
        for row in &weights {
            check_finite(row, || format!("layers[{layer}].weights"))?;
        }
        check_finite(&bias, || format!("layers[{layer}].bias"))?;
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
    pub fn input_size(&self) -> usize {
        self.weights[0].len()
    }
    pub fn output_size(&self) -> usize {
        self.weights.len()
    }
}

/// Two-dimensional convolution with valid padding.
///
/// Inputs and outputs are flattened channel-major: index `c*H*W + h*W + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dLayer {
    /// Row-major `out_channels x in_channels x kh x kw`.
    kernel: Vec<f64>,
    kernel_shape: [usize; 4],
    bias: Vec<f64>,
    input_shape: [usize; 3],
    strides: [usize; 2],
}

impl Conv2dLayer {
    pub fn new(
        kernel: Vec<f64>,
        kernel_shape: [usize; 4],
        bias: Vec<f64>,
        input_shape: [usize; 3],
        strides: [usize; 2],
    ) -> Result<Self, ModelError> {
        Self::validated(kernel, kernel_shape, bias, input_shape, strides, 0)
    }

    fn validated(
        kernel: Vec<f64>,
        kernel_shape: [usize; 4],
        bias: Vec<f64>,
        input_shape: [usize; 3],
        strides: [usize; 2],
        layer: usize,
    ) -> Result<Self, ModelError> {
        let invalid = |reason: String| ModelError::InvalidConv { layer, reason };
        let [oc, ic, kh, kw] = kernel_shape;
        let [c, h, w] = input_shape;
        if kernel_shape.contains(&0) {
            return Err(invalid(format!("kernel shape {kernel_shape:?} has a zero dimension")));
        }
        if input_shape.contains(&0) {
            return Err(invalid(format!("input shape {input_shape:?} has a zero dimension")));
        }
        if strides.contains(&0) {
            return Err(invalid("strides must be positive".into()));
        }
        if ic != c {
            return Err(invalid(format!("kernel expects {ic} input channels, input has {c}")));
        }
        if kh > h || kw > w {
            return Err(invalid(format!("kernel {kh}x{kw} larger than input {h}x{w}")));
        }
        if kernel.len() != oc * ic * kh * kw {
            return Err(ModelError::DimensionMismatch {
                layer,
                what: "kernel",
                expected: oc * ic * kh * kw,
                found: kernel.len(),
            });
        }
        if bias.len() != oc {
            return Err(ModelError::DimensionMismatch {
                layer,
                what: "bias",
                expected: oc,
                found: bias.len(),
            });
        }
        check_finite(&kernel, || format!("layers[{layer}].kernel"))?;
        check_finite(&bias, || format!("layers[{layer}].bias"))?;
        Ok(Self {
            kernel,
            kernel_shape,
            bias,
            input_shape,
            strides,
        })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }
    pub fn kernel_shape(&self) -> [usize; 4] {
        self.kernel_shape
    }
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }
    pub fn strides(&self) -> [usize; 2] {
        self.strides
    }

    /// `(out_channels, out_h, out_w)`.
    pub fn output_shape(&self) -> [usize; 3] {
        let [oc, _, kh, kw] = self.kernel_shape;
        let [_, h, w] = self.input_shape;
        let [sh, sw] = self.strides;
        [oc, (h - kh) / sh + 1, (w - kw) / sw + 1]
    }

    pub fn input_size(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_size(&self) -> usize {
        self.output_shape().iter().product()
    }

    fn kernel_at(&self, o: usize, c: usize, i: usize, j: usize) -> f64 {
        let [_, ic, kh, kw] = self.kernel_shape;
        self.kernel[((o * ic + c) * kh + i) * kw + j]
    }

    /// Direct convolution. Accumulates bias first, then taps in
    /// `(in_channel, row, col)` order, the same order as the sparse expansion.
    fn convolve(&self, x: &[f64]) -> Vec<f64> {
        let [oc, ic, kh, kw] = self.kernel_shape;
        let [_, h, w] = self.input_shape;
        let [_, oh, ow] = self.output_shape();
        let [sh, sw] = self.strides;
        let mut out = Vec::with_capacity(oc * oh * ow);
        for o in 0..oc {
            for r in 0..oh {
                for s in 0..ow {
                    let mut acc = self.bias[o];
                    for c in 0..ic {
                        for i in 0..kh {
                            for j in 0..kw {
                                let pixel = x[c * h * w + (r * sh + i) * w + (s * sw + j)];
                                acc += self.kernel_at(o, c, i, j) * pixel;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }
}

/// Sparse representation of `out = A x + b`, one coefficient list per output.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffine {
    pub in_dim: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub bias: Vec<f64>,
}

impl SparseAffine {
    pub fn out_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().fold(*b, |acc, (j, w)| acc + w * x[*j]))
            .collect()
    }

    /// Dense `out x in` matrix.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; self.in_dim];
                for (j, w) in row {
                    dense[*j] += w;
                }
                dense
            })
            .collect()
    }
}

/// Expand a convolution into the equivalent sparse linear layer over the
/// flattened input.
pub fn conv_as_sparse_affine(layer: &Conv2dLayer) -> SparseAffine {
    let [oc, ic, kh, kw] = layer.kernel_shape;
    let [_, h, w] = layer.input_shape;
    let [_, oh, ow] = layer.output_shape();
    let [sh, sw] = layer.strides;
    let mut rows = Vec::with_capacity(oc * oh * ow);
    let mut bias = Vec::with_capacity(oc * oh * ow);
    for o in 0..oc {
        for r in 0..oh {
            for s in 0..ow {
                let mut row = Vec::with_capacity(ic * kh * kw);
                for c in 0..ic {
                    for i in 0..kh {
                        for j in 0..kw {
                            let col = c * h * w + (r * sh + i) * w + (s * sw + j);
                            row.push((col, layer.kernel_at(o, c, i, j)));
                        }
                    }
                }
                rows.push(row);
                bias.push(layer.bias[o]);
            }
        }
    }
    SparseAffine {
        in_dim: layer.input_size(),
        rows,
        bias,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Dense(DenseLayer),
    Conv2d(Conv2dLayer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl Layer {
    pub fn dense(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Result<Self, ModelError> {
        Ok(Self {
            kind: LayerKind::Dense(DenseLayer::new(weights, bias)?),
            activation,
        })
    }

    pub fn conv2d(
        kernel: Vec<f64>,
        kernel_shape: [usize; 4],
        bias: Vec<f64>,
        input_shape: [usize; 3],
        strides: [usize; 2],
        activation: Activation,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            kind: LayerKind::Conv2d(Conv2dLayer::new(kernel, kernel_shape, bias, input_shape, strides)?),
            activation,
        })
    }

    pub fn input_size(&self) -> usize {
        match &self.kind {
            LayerKind::Dense(d) => d.input_size(),
            LayerKind::Conv2d(c) => c.input_size(),
        }
    }

    pub fn output_size(&self) -> usize {
        match &self.kind {
            LayerKind::Dense(d) => d.output_size(),
            LayerKind::Conv2d(c) => c.output_size(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.kind, LayerKind::Dense(_))
    }

    /// The layer's affine part as a sparse map. Dense layers keep every
    /// entry, zeros included.
    pub fn affine(&self) -> SparseAffine {
        match &self.kind {
            LayerKind::Dense(d) => SparseAffine {
                in_dim: d.input_size(),
                rows: d
                    .weights
                    .iter()
                    .map(|row| row.iter().copied().enumerate().collect())
                    .collect(),
                bias: d.bias.clone(),
            },
            LayerKind::Conv2d(c) => conv_as_sparse_affine(c),
        }
    }

    /// Pre-activation values for `x`.
    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            LayerKind::Dense(d) => d
                .weights
                .iter()
                .zip(&d.bias)
                .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
                .collect(),
            LayerKind::Conv2d(c) => c.convolve(x),
        }
    }
}

/// Per-layer values recorded during a forward pass, in scaled units.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Raw input as given.
    pub input: Vec<f64>,
    /// Input after scaling (equal to `input` when the net has no scaling).
    pub scaled_input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
    /// Network output in raw units.
    pub output: Vec<f64>,
}

/// A layered feed-forward network plus the input box it is optimized over.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDefinition {
    input_bounds: Vec<Interval>,
    scaling: Option<OffsetScaling>,
    layers: Vec<Layer>,
}

impl NetworkDefinition {
    /// Validates layer chaining, bound ordering and scaling dimensions.
    /// Infinite input bounds are accepted here and rejected by the
    /// formulations that need them.
    pub fn new(
        input_bounds: Vec<Interval>,
        scaling: Option<OffsetScaling>,
        layers: Vec<Layer>,
    ) -> Result<Self, ModelError> {
        if input_bounds.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if layers.is_empty() {
            return Err(ModelError::EmptyNetwork);
        }
        for (index, b) in input_bounds.iter().enumerate() {
            if b.lo.is_nan() || b.hi.is_nan() {
                return Err(ModelError::NonFinite {
                    what: format!("input_bounds[{index}]"),
                });
            }
            if b.lo > b.hi {
                return Err(ModelError::InvertedBound {
                    index,
                    lb: b.lo,
                    ub: b.hi,
                });
            }
        }
        let mut width = input_bounds.len();
        let mut checked = Vec::with_capacity(layers.len());
        for (index, layer) in layers.into_iter().enumerate() {
            // Re-run validation so errors carry the real layer index.
            let kind = match layer.kind {
                LayerKind::Dense(d) => LayerKind::Dense(DenseLayer::validated(d.weights, d.bias, index)?),
                LayerKind::Conv2d(c) => LayerKind::Conv2d(Conv2dLayer::validated(
                    c.kernel,
                    c.kernel_shape,
                    c.bias,
                    c.input_shape,
                    c.strides,
                    index,
                )?),
            };
            let layer = Layer {
                kind,
                activation: layer.activation,
            };
            if layer.input_size() != width {
                return Err(ModelError::DimensionMismatch {
                    layer: index,
                    what: "layer input",
                    expected: width,
                    found: layer.input_size(),
                });
            }
            width = layer.output_size();
            checked.push(layer);
        }
        if let Some(s) = &scaling {
            if s.input_offset.len() != input_bounds.len() {
                return Err(ModelError::ScalingLength {
                    what: "input_offset",
                    expected: input_bounds.len(),
                    found: s.input_offset.len(),
                });
            }
            if s.output_offset.len() != width {
                return Err(ModelError::ScalingLength {
                    what: "output_offset",
                    expected: width,
                    found: s.output_offset.len(),
                });
            }
        }
        Ok(Self {
            input_bounds,
            scaling,
            layers: checked,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_bounds.len()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_size)
    }

    pub fn input_bounds(&self) -> &[Interval] {
        &self.input_bounds
    }

    pub fn scaling(&self) -> Option<&OffsetScaling> {
        self.scaling.as_ref()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Total number of neurons across all layers.
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Layer::output_size).sum()
    }

    /// Copy of this network with a different input box.
    pub fn with_input_bounds(&self, input_bounds: Vec<Interval>) -> Result<Self, ModelError> {
        Self::new(input_bounds, self.scaling.clone(), self.layers.clone())
    }

    /// Checks that every input bound is finite.
    pub fn require_finite_bounds(&self) -> Result<(), ModelError> {
        match self.input_bounds.iter().position(|b| !b.is_finite()) {
            Some(index) => Err(ModelError::InfiniteBound { index }),
            None => Ok(()),
        }
    }

    /// Scaled input box (the raw box when no scaling is attached).
    pub fn scaled_input_bounds(&self) -> Vec<Interval> {
        match &self.scaling {
            Some(s) => self
                .input_bounds
                .iter()
                .enumerate()
                .map(|(i, b)| s.scale_input_interval(i, *b))
                .collect(),
            None => self.input_bounds.clone(),
        }
    }

    /// Exact forward pass in raw units.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.trace(x).map(|t| t.output)
    }

    /// Forward pass that records every intermediate value.
    pub fn trace(&self, x: &[f64]) -> Result<ForwardTrace, ModelError> {
        if x.len() != self.input_size() {
            return Err(ModelError::InputLength {
                expected: self.input_size(),
                found: x.len(),
            });
        }
        let scaled_input: Vec<f64> = match &self.scaling {
            Some(s) => x.iter().enumerate().map(|(i, v)| s.scale_input(i, *v)).collect(),
            None => x.to_vec(),
        };
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = scaled_input.clone();
        for layer in &self.layers {
            let z = layer.pre_activation(&current);
            current = z.iter().map(|v| layer.activation.apply(*v)).collect();
            pre.push(z);
            post.push(current.clone());
        }
        let output = match &self.scaling {
            Some(s) => current
                .iter()
                .enumerate()
                .map(|(j, v)| s.unscale_output(j, *v))
                .collect(),
            None => current,
        };
        Ok(ForwardTrace {
            input: x.to_vec(),
            scaled_input,
            pre,
            post,
            output,
        })
    }

    /// Equivalent network where every convolution is replaced by its dense
    /// expansion.
    pub fn to_dense_equivalent(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|layer| match &layer.kind {
                LayerKind::Dense(_) => layer.clone(),
                LayerKind::Conv2d(c) => {
                    let affine = conv_as_sparse_affine(c);
                    Layer {
                        kind: LayerKind::Dense(DenseLayer {
                            weights: affine.to_dense(),
                            bias: affine.bias,
                        }),
                        activation: layer.activation,
                    }
                }
            })
            .collect();
        Self {
            input_bounds: self.input_bounds.clone(),
            scaling: self.scaling.clone(),
            layers,
        }
    }
}
