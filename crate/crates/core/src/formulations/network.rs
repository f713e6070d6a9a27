use super::{classify, neuron_partitions, FormulationError, FormulationKind, NeuronClass};
use crate::bounds::{partition_sum_bounds, propagate_bounds, IntervalBounds};
use crate::model::{Activation, Interval, LayerKind, NetworkDefinition};
use crate::problem::{Expr, Func, OptProblem, Sense, VarId};

fn func(act: Activation) -> Option<Func> {
    match act {
        Activation::Sigmoid => Some(Func::Sigmoid),
        Activation::Tanh => Some(Func::Tanh),
        Activation::Softplus => Some(Func::Softplus),
        Activation::Linear | Activation::Relu => None,
    }
}

pub(super) fn build(net: &NetworkDefinition, kind: FormulationKind) -> Result<OptProblem, FormulationError> {
    let bounds = propagate_bounds(net)?;
    let mut p = OptProblem::new();
    let x = net
        .input_bounds()
        .iter()
        .enumerate()
        .map(|(i, b)| p.continuous(format!("x[{i}]"), b.lo, b.hi))
        .collect::<Result<Vec<_>, _>>()?;
    if kind == FormulationKind::ReducedSpaceSmooth {
        return reduced_space(net, &bounds, p, x);
    }

    let mut incoming = match net.scaling() {
        None => x.clone(),
        Some(s) => {
            let mut xs = Vec::with_capacity(x.len());
            for (i, &xi) in x.iter().enumerate() {
                let v = p.continuous(format!("xs[{i}]"), bounds.input[i].lo, bounds.input[i].hi)?;
                let fac = s.input_factor()[i];
                p.add_linear(
                    format!("c_scale_in_{i}"),
                    vec![(v, fac), (xi, -1.0)],
                    Sense::Eq,
                    -s.input_offset()[i],
                )?;
                xs.push(v);
            }
            xs
        }
    };

    for (l, (layer, lb)) in net.layers().iter().zip(&bounds.layers).enumerate() {
        let affine = layer.affine();
        let mut post = Vec::with_capacity(affine.out_dim());
        for (i, (row, &b)) in affine.rows.iter().zip(&affine.bias).enumerate() {
            let inputs: Vec<(VarId, f64)> = row.iter().map(|&(j, w)| (incoming[j], w)).collect();
            let pre = lb.pre[i];
            let z = match classify(layer.activation, pre) {
                NeuronClass::Inactive => p.continuous(format!("z[{l}][{i}]"), 0.0, 0.0)?,
                NeuronClass::Identity => {
                    let z = p.continuous(format!("z[{l}][{i}]"), lb.post[i].lo, lb.post[i].hi)?;
                    pre_row(&mut p, l, i, z, &inputs, b)?;
                    z
                }
                NeuronClass::Smooth => {
                    let zhat = p.continuous(format!("zhat[{l}][{i}]"), pre.lo, pre.hi)?;
                    pre_row(&mut p, l, i, zhat, &inputs, b)?;
                    let z = p.continuous(format!("z[{l}][{i}]"), lb.post[i].lo, lb.post[i].hi)?;
                    let f = func(layer.activation).expect("smooth activation");
                    p.add_nonlinear(
                        format!("c_act_{l}_{i}"),
                        Expr::var(z) - Expr::var(zhat).apply(f),
                        Sense::Eq,
                        0.0,
                    )?;
                    z
                }
                NeuronClass::Unstable => match kind {
                    FormulationKind::ReluBigM => big_m(&mut p, l, i, pre, &inputs, b)?,
                    FormulationKind::ReluComplementarity => complementarity(&mut p, l, i, pre, &inputs, b)?,
                    FormulationKind::ReluPartition(n) => {
                        let LayerKind::Dense(dense) = &layer.kind else {
                            unreachable!("checked dense")
                        };
                        let classes = neuron_partitions(net, l, i, n);
                        let sums = partition_sum_bounds(&dense.weights()[i], bounds.incoming(l), &classes)?;
                        partition(&mut p, l, i, pre, &inputs, b, &classes, &sums)?
                    }
                    _ => unreachable!("checked activation compatibility"),
                },
            };
            post.push(z);
        }
        incoming = post;
    }

    let outputs = match net.scaling() {
        None => incoming,
        Some(s) => {
            let mut ys = Vec::with_capacity(incoming.len());
            for (j, &z) in incoming.iter().enumerate() {
                let y = p.continuous(format!("y[{j}]"), bounds.output[j].lo, bounds.output[j].hi)?;
                p.add_linear(
                    format!("c_scale_out_{j}"),
                    vec![(y, 1.0), (z, -s.output_factor()[j])],
                    Sense::Eq,
                    s.output_offset()[j],
                )?;
                ys.push(y);
            }
            ys
        }
    };
    p.set_interface(x, outputs)?;
    Ok(p)
}

/// `target - sum w_j in_j = b`
fn pre_row(
    p: &mut OptProblem,
    l: usize,
    i: usize,
    target: VarId,
    inputs: &[(VarId, f64)],
    b: f64,
) -> Result<(), FormulationError> {
    let mut terms = vec![(target, 1.0)];
    terms.extend(inputs.iter().map(|&(v, w)| (v, -w)));
    p.add_linear(format!("c_pre_{l}_{i}"), terms, Sense::Eq, b)?;
    Ok(())
}

fn big_m(
    p: &mut OptProblem,
    l: usize,
    i: usize,
    pre: Interval,
    inputs: &[(VarId, f64)],
    b: f64,
) -> Result<VarId, FormulationError> {
    let zhat = p.continuous(format!("zhat[{l}][{i}]"), pre.lo, pre.hi)?;
    pre_row(p, l, i, zhat, inputs, b)?;
    let z = p.continuous(format!("z[{l}][{i}]"), 0.0, pre.hi)?;
    let q = p.binary(format!("q[{l}][{i}]"))?;
    p.add_linear(format!("c_relu_{l}_{i}_nonneg"), vec![(z, 1.0)], Sense::Ge, 0.0)?;
    p.add_linear(
        format!("c_relu_{l}_{i}_above"),
        vec![(z, 1.0), (zhat, -1.0)],
        Sense::Ge,
        0.0,
    )?;
    // z <= zhat - lo (1 - q)
    p.add_linear(
        format!("c_relu_{l}_{i}_off"),
        vec![(z, 1.0), (zhat, -1.0), (q, -pre.lo)],
        Sense::Le,
        -pre.lo,
    )?;
    // z <= hi q
    p.add_linear(
        format!("c_relu_{l}_{i}_on"),
        vec![(z, 1.0), (q, -pre.hi)],
        Sense::Le,
        0.0,
    )?;
    Ok(z)
}

fn complementarity(
    p: &mut OptProblem,
    l: usize,
    i: usize,
    pre: Interval,
    inputs: &[(VarId, f64)],
    b: f64,
) -> Result<VarId, FormulationError> {
    let zhat = p.continuous(format!("zhat[{l}][{i}]"), pre.lo, pre.hi)?;
    pre_row(p, l, i, zhat, inputs, b)?;
    let z = p.continuous(format!("z[{l}][{i}]"), 0.0, pre.hi)?;
    p.add_linear(format!("c_relu_{l}_{i}_nonneg"), vec![(z, 1.0)], Sense::Ge, 0.0)?;
    p.add_linear(
        format!("c_relu_{l}_{i}_above"),
        vec![(z, 1.0), (zhat, -1.0)],
        Sense::Ge,
        0.0,
    )?;
    p.add_complementarity(format!("c_compl_{l}_{i}"), Expr::var(z), Expr::var(z) - Expr::var(zhat))?;
    Ok(z)
}

/// Partition encoding with `q = 1` meaning active. `zp[k]` stands for
/// `q * v_k`, where `v_k` is the partial sum over class `k`.
#[allow(clippy::too_many_arguments)]
fn partition(
    p: &mut OptProblem,
    l: usize,
    i: usize,
    pre: Interval,
    inputs: &[(VarId, f64)],
    b: f64,
    classes: &[Vec<usize>],
    sums: &[Interval],
) -> Result<VarId, FormulationError> {
    let z = p.continuous(format!("z[{l}][{i}]"), 0.0, pre.hi)?;
    let q = p.binary(format!("q[{l}][{i}]"))?;
    let zp = sums
        .iter()
        .enumerate()
        .map(|(k, s)| p.continuous(format!("zp[{l}][{i}][{k}]"), s.lo.min(0.0), s.hi.max(0.0)))
        .collect::<Result<Vec<_>, _>>()?;
    let zp_terms = |coef: f64| zp.iter().map(move |&v| (v, coef));
    let v_terms = |k: usize, coef: f64| classes[k].iter().map(move |&m| (inputs[m].0, coef * inputs[m].1));

    let mut out = vec![(z, 1.0)];
    out.extend(zp_terms(-1.0));
    out.push((q, -b));
    p.add_linear(format!("c_part_{l}_{i}_out"), out, Sense::Eq, 0.0)?;

    let mut act: Vec<_> = zp_terms(1.0).collect();
    act.push((q, b));
    p.add_linear(format!("c_part_{l}_{i}_act"), act, Sense::Ge, 0.0)?;

    // sum (v_k - zp_k) + (1 - q) b <= 0
    let mut inact: Vec<_> = (0..classes.len()).flat_map(|k| v_terms(k, 1.0)).collect();
    inact.extend(zp_terms(-1.0));
    inact.push((q, -b));
    p.add_linear(format!("c_part_{l}_{i}_inact"), inact, Sense::Le, -b)?;

    for (k, s) in sums.iter().enumerate() {
        p.add_linear(
            format!("c_part_{l}_{i}_lo_{k}"),
            vec![(zp[k], 1.0), (q, -s.lo)],
            Sense::Ge,
            0.0,
        )?;
        p.add_linear(
            format!("c_part_{l}_{i}_hi_{k}"),
            vec![(zp[k], 1.0), (q, -s.hi)],
            Sense::Le,
            0.0,
        )?;
        // (1 - q) L <= v_k - zp_k <= (1 - q) U
        let mut rest: Vec<_> = v_terms(k, 1.0).collect();
        rest.push((zp[k], -1.0));
        let mut lo = rest.clone();
        lo.push((q, s.lo));
        p.add_linear(format!("c_part_{l}_{i}_rlo_{k}"), lo, Sense::Ge, s.lo)?;
        rest.push((q, s.hi));
        p.add_linear(format!("c_part_{l}_{i}_rhi_{k}"), rest, Sense::Le, s.hi)?;
    }
    Ok(z)
}

/// One nonlinear equality per output, `y_j = f_j(x)`, with the network and
/// its scaling substituted in. The expression mirrors the forward pass
/// operation by operation, so it evaluates bit-identically.
fn reduced_space(
    net: &NetworkDefinition,
    bounds: &IntervalBounds,
    mut p: OptProblem,
    x: Vec<VarId>,
) -> Result<OptProblem, FormulationError> {
    let mut current: Vec<Expr> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| match net.scaling() {
            Some(s) => (Expr::var(v) - Expr::constant(s.input_offset()[i])) / Expr::constant(s.input_factor()[i]),
            None => Expr::var(v),
        })
        .collect();
    for layer in net.layers() {
        let affine = layer.affine();
        current = affine
            .rows
            .iter()
            .zip(&affine.bias)
            .map(|(row, &b)| {
                let pre = row
                    .iter()
                    .filter(|(_, w)| *w != 0.0)
                    .fold(Expr::constant(b), |acc, &(j, w)| {
                        acc + Expr::constant(w) * current[j].clone()
                    });
                match func(layer.activation) {
                    Some(f) => pre.apply(f),
                    None => pre,
                }
            })
            .collect();
    }
    let mut ys = Vec::with_capacity(current.len());
    for (j, e) in current.into_iter().enumerate() {
        let e = match net.scaling() {
            Some(s) => e * Expr::constant(s.output_factor()[j]) + Expr::constant(s.output_offset()[j]),
            None => e,
        };
        let y = p.continuous(format!("y[{j}]"), bounds.output[j].lo, bounds.output[j].hi)?;
        p.add_nonlinear(format!("c_out_{j}"), Expr::var(y) - e, Sense::Eq, 0.0)?;
        ys.push(y);
    }
    p.set_interface(x, ys)?;
    Ok(p)
}

/// Splits `name[a][b]` into `("name", [a, b])`.
pub(crate) fn parse_indexed(name: &str) -> Option<(&str, Vec<usize>)> {
    let open = name.find('[')?;
    let (base, mut rest) = name.split_at(open);
    let mut idx = Vec::new();
    while let Some(r) = rest.strip_prefix('[') {
        let close = r.find(']')?;
        idx.push(r[..close].parse().ok()?);
        rest = &r[close + 1..];
    }
    rest.is_empty().then_some((base, idx))
}

/// Assignment for every variable of a problem built by [`super::formulate`]
/// from `net`, taken from the exact forward pass at raw input `x`. ReLU
/// indicators are 1 exactly when the pre-activation is positive. Variables
/// with unrecognized names get NaN.
pub fn forward_assignment(
    p: &OptProblem,
    net: &NetworkDefinition,
    kind: FormulationKind,
    x: &[f64],
) -> Result<Vec<f64>, FormulationError> {
    let trace = net.trace(x)?;
    let incoming = |l: usize| -> &[f64] {
        if l == 0 {
            &trace.scaled_input
        } else {
            &trace.post[l - 1]
        }
    };
    let value = |name: &str| -> Option<f64> {
        let (base, idx) = parse_indexed(name)?;
        Some(match (base, idx.as_slice()) {
            ("x", [i]) => *trace.input.get(*i)?,
            ("xs", [i]) => *trace.scaled_input.get(*i)?,
            ("y", [j]) => *trace.output.get(*j)?,
            ("zhat", [l, i]) => *trace.pre.get(*l)?.get(*i)?,
            ("z", [l, i]) => *trace.post.get(*l)?.get(*i)?,
            ("q", [l, i]) => f64::from(u8::from(*trace.pre.get(*l)?.get(*i)? > 0.0)),
            ("zp", [l, i, k]) => {
                let FormulationKind::ReluPartition(n) = kind else {
                    return None;
                };
                if *trace.pre.get(*l)?.get(*i)? <= 0.0 {
                    return Some(0.0);
                }
                let LayerKind::Dense(d) = &net.layers().get(*l)?.kind else {
                    return None;
                };
                let w = &d.weights()[*i];
                let inc = incoming(*l);
                neuron_partitions(net, *l, *i, n)
                    .get(*k)?
                    .iter()
                    .fold(0.0, |acc, &m| acc + w[m] * inc[m])
            }
            _ => return None,
        })
    };
    Ok(p.variables()
        .iter()
        .map(|v| value(&v.name).unwrap_or(f64::NAN))
        .collect())
}
