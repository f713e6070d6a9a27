use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::{json, Value};
use surrogate_core::bounds::propagate_bounds;
use surrogate_core::emit::{emit, Format};
use surrogate_core::formulations::{
    adversarial_problem, formulate_any, forward_assignment, gbt_forward_assignment, link_objective, FormulationError,
    FormulationKind, ObjectiveSpec, Surrogate,
};
use surrogate_core::gen;
use surrogate_core::ingest::{parse_model, AnyModel};
use surrogate_core::model::LayerKind;
use surrogate_core::problem::{ObjectiveSense, OptProblem};
use surrogate_core::solver::{
    check_feasibility, gbt_cell_oracle, relu_pattern_oracle, solve, OutputObjective, SolveOptions, SolveResult,
    SolveStatus, DEFAULT_NODE_LIMIT,
};
use surrogate_core::{Activation, Interval, NetworkDefinition, TreeEnsemble};

use crate::{CliError, Command, ExitCode, KindArgs, NODE_LIMIT_ENV, SAT_MARGIN};

pub(crate) struct Context<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

type CmdResult = Result<ExitCode, CliError>;

pub(crate) fn dispatch(cmd: Command, ctx: &mut Context<'_>) -> CmdResult {
    match cmd {
        Command::Inspect { model, json } => inspect(&load(&model, ctx)?, json, ctx),
        Command::Bounds { model, json } => bounds(&load(&model, ctx)?, json, ctx),
        Command::Formulate { model, kind, json } => formulate_cmd(&load(&model, ctx)?, &kind, json, ctx),
        Command::Emit {
            model,
            kind,
            format,
            out,
            sense,
            objective,
        } => {
            let m = load(&model, ctx)?;
            let format = Format::from_str(&format).map_err(CliError::usage)?;
            let mut p = build(&m, &kind, ctx)?;
            if let Some(sense) = sense {
                p = link_objective(p, &ObjectiveSpec::parse(sense.into(), &objective)?)?;
            }
            let text = emit(&p, format)?;
            std::fs::write(&out, text).map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
            writeln!(ctx.out, "wrote {}", out.display())?;
            Ok(ExitCode::Ok)
        }
        Command::Solve {
            model,
            kind,
            sense,
            objective,
            json,
        } => {
            let m = load(&model, ctx)?;
            let spec = ObjectiveSpec::parse(sense.into(), &objective)?;
            solve_cmd(&m, &kind, &spec, json, ctx)
        }
        Command::Verify {
            model,
            kind,
            samples,
            seed,
            tol,
            json,
        } => verify(&load(&model, ctx)?, &kind, samples, seed, tol, json, ctx),
        Command::Adversarial {
            model,
            input,
            true_label,
            target,
            radius,
            json,
        } => {
            let m = load(&model, ctx)?;
            let text =
                std::fs::read_to_string(&input).map_err(|e| CliError::io(format!("{}: {e}", input.display())))?;
            let x0: Vec<f64> = serde_json::from_str(&text)
                .map_err(|e| CliError::parse(format!("{}: expected a JSON array of numbers: {e}", input.display())))?;
            adversarial(&m, &x0, true_label, target, radius, json, ctx)
        }
        Command::Oracle {
            model,
            sense,
            objective,
            json,
        } => {
            let m = load(&model, ctx)?;
            let spec = ObjectiveSpec::parse(sense.into(), &objective)?;
            oracle(&m, &spec, json, ctx)
        }
    }
}

fn load(path: &Path, ctx: &mut Context<'_>) -> Result<AnyModel, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let report = parse_model(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    for w in &report.warnings {
        writeln!(ctx.err, "warning: {w}")?;
    }
    Ok(report.model)
}

fn surrogate(m: &AnyModel) -> Surrogate<'_> {
    match m {
        AnyModel::Network(n) => Surrogate::Network(n),
        AnyModel::Ensemble(e) => Surrogate::Ensemble(e),
    }
}

fn build(m: &AnyModel, kind: &KindArgs, ctx: &mut Context<'_>) -> Result<OptProblem, CliError> {
    let p = formulate_any(surrogate(m), kind.kind(), kind.epsilon)?;
    for w in p.warnings() {
        writeln!(ctx.err, "warning: {w}")?;
    }
    Ok(p)
}

fn node_limit() -> Result<usize, CliError> {
    match std::env::var(NODE_LIMIT_ENV) {
        Err(_) => Ok(DEFAULT_NODE_LIMIT),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::usage(format!("{NODE_LIMIT_ENV} must be a positive integer, got `{v}`"))),
    }
}

fn run_solver(p: &OptProblem) -> Result<SolveResult, CliError> {
    let opts = SolveOptions {
        node_limit: node_limit()?,
    };
    Ok(solve(p, &opts)?)
}

fn print_json(ctx: &mut Context<'_>, v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).expect("values serialize");
    writeln!(ctx.out, "{text}")?;
    Ok(())
}

fn list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
    format!("[{}]", parts.join(", "))
}

fn interval(iv: &Interval) -> String {
    format!("[{:?}, {:?}]", iv.lo, iv.hi)
}

fn inspect(m: &AnyModel, json: bool, ctx: &mut Context<'_>) -> CmdResult {
    match m {
        AnyModel::Network(net) => {
            let layers: Vec<Value> = net
                .layers()
                .iter()
                .map(|l| {
                    let kind = match &l.kind {
                        LayerKind::Dense(_) => "dense",
                        LayerKind::Conv2d(_) => "conv2d",
                    };
                    json!({
                        "type": kind,
                        "inputs": l.input_size(),
                        "outputs": l.output_size(),
                        "activation": l.activation.name(),
                    })
                })
                .collect();
            if json {
                return print_json(
                    ctx,
                    &json!({
                        "model": "network",
                        "inputs": net.input_size(),
                        "outputs": net.output_size(),
                        "neurons": net.neuron_count(),
                        "scaled": net.scaling().is_some(),
                        "input_bounds": net.input_bounds(),
                        "layers": layers,
                    }),
                )
                .map(|_| ExitCode::Ok);
            }
            writeln!(ctx.out, "network")?;
            writeln!(ctx.out, "inputs   {}", net.input_size())?;
            writeln!(ctx.out, "outputs  {}", net.output_size())?;
            writeln!(ctx.out, "neurons  {}", net.neuron_count())?;
            writeln!(
                ctx.out,
                "scaling  {}",
                if net.scaling().is_some() { "yes" } else { "no" }
            )?;
            writeln!(ctx.out, "layer  type    in     out    activation")?;
            for (i, l) in layers.iter().enumerate() {
                writeln!(
                    ctx.out,
                    "{i:<6} {:<7} {:<6} {:<6} {}",
                    l["type"].as_str().unwrap_or(""),
                    l["inputs"].as_u64().unwrap_or(0),
                    l["outputs"].as_u64().unwrap_or(0),
                    l["activation"].as_str().unwrap_or("")
                )?;
            }
        }
        AnyModel::Ensemble(ens) => {
            let leaves: usize = ens.trees().iter().map(|t| t.leaves().len()).sum();
            let depth = ens.trees().iter().map(|t| t.depth()).max().unwrap_or(0);
            if json {
                return print_json(
                    ctx,
                    &json!({
                        "model": "ensemble",
                        "features": ens.n_features(),
                        "trees": ens.trees().len(),
                        "splits": ens.split_count(),
                        "leaves": leaves,
                        "max_depth": depth,
                        "base_score": ens.base_score(),
                        "feature_bounds": ens.feature_bounds(),
                    }),
                )
                .map(|_| ExitCode::Ok);
            }
            writeln!(ctx.out, "ensemble")?;
            writeln!(ctx.out, "features    {}", ens.n_features())?;
            writeln!(ctx.out, "trees       {}", ens.trees().len())?;
            writeln!(ctx.out, "splits      {}", ens.split_count())?;
            writeln!(ctx.out, "leaves      {leaves}")?;
            writeln!(ctx.out, "max depth   {depth}")?;
            writeln!(ctx.out, "base score  {:?}", ens.base_score())?;
        }
    }
    Ok(ExitCode::Ok)
}

fn relu_status(act: Activation, pre: &Interval) -> &'static str {
    match act {
        Activation::Relu if pre.lo >= 0.0 => "active",
        Activation::Relu if pre.hi <= 0.0 => "inactive",
        Activation::Relu => "unstable",
        _ => "-",
    }
}

/// Output range of an ensemble from the extreme leaf of every tree.
fn ensemble_range(ens: &TreeEnsemble) -> Interval {
    ens.trees().iter().fold(Interval::point(ens.base_score()), |acc, t| {
        let values: Vec<f64> = t.leaves().iter().filter_map(|&id| t.leaf_value(id)).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(acc.lo + lo, acc.hi + hi)
    })
}

fn bounds(m: &AnyModel, json: bool, ctx: &mut Context<'_>) -> CmdResult {
    let net = match m {
        AnyModel::Network(net) => net,
        AnyModel::Ensemble(ens) => {
            let range = ensemble_range(ens);
            if json {
                print_json(ctx, &json!({ "output": [range] }))?;
            } else {
                writeln!(ctx.out, "output 0  {}", interval(&range))?;
            }
            return Ok(ExitCode::Ok);
        }
    };
    let b = propagate_bounds(net).map_err(FormulationError::from)?;
    if json {
        print_json(ctx, &serde_json::to_value(&b).expect("bounds serialize"))?;
        return Ok(ExitCode::Ok);
    }
    writeln!(
        ctx.out,
        "layer  neuron  pre                                        post                                       status"
    )?;
    for (l, (layer, lb)) in net.layers().iter().zip(&b.layers).enumerate() {
        for (i, (pre, post)) in lb.pre.iter().zip(&lb.post).enumerate() {
            writeln!(
                ctx.out,
                "{l:<6} {i:<7} {:<42} {:<42} {}",
                interval(pre),
                interval(post),
                relu_status(layer.activation, pre)
            )?;
        }
    }
    for (j, iv) in b.output.iter().enumerate() {
        writeln!(ctx.out, "output {j}  {}", interval(iv))?;
    }
    Ok(ExitCode::Ok)
}

fn formulate_cmd(m: &AnyModel, kind: &KindArgs, json: bool, ctx: &mut Context<'_>) -> CmdResult {
    let p = build(m, kind, ctx)?;
    let c = p.counts();
    if json {
        print_json(
            ctx,
            &json!({
                "kind": kind.kind().cli_name(),
                "variables": p.num_vars(),
                "counts": c,
                "warnings": p.warnings(),
            }),
        )?;
        return Ok(ExitCode::Ok);
    }
    writeln!(ctx.out, "kind             {}", kind.kind())?;
    writeln!(ctx.out, "variables        {}", p.num_vars())?;
    writeln!(ctx.out, "binaries         {}", c.binaries)?;
    writeln!(ctx.out, "linear rows      {}", c.linear)?;
    writeln!(ctx.out, "nonlinear rows   {}", c.nonlinear)?;
    writeln!(ctx.out, "complementarity  {}", c.complementarity)?;
    Ok(ExitCode::Ok)
}

fn interface_values(p: &OptProblem, r: &SolveResult) -> (Vec<f64>, Vec<f64>) {
    let pick = |vs: &[surrogate_core::problem::VarId]| vs.iter().map(|&v| r.value(v).unwrap_or(f64::NAN)).collect();
    (pick(p.input_vars()), pick(p.output_vars()))
}

fn solve_cmd(m: &AnyModel, kind: &KindArgs, spec: &ObjectiveSpec, json: bool, ctx: &mut Context<'_>) -> CmdResult {
    let p = link_objective(build(m, kind, ctx)?, spec)?;
    let r = run_solver(&p)?;
    let (x, y) = interface_values(&p, &r);
    if json {
        print_json(
            ctx,
            &json!({
                "status": r.status.name(),
                "objective": r.objective,
                "x": if r.assignment.is_empty() { Value::Null } else { json!(x) },
                "y": if r.assignment.is_empty() { Value::Null } else { json!(y) },
                "assignment": p
                    .variables()
                    .iter()
                    .zip(&r.assignment)
                    .map(|(var, v)| (var.name.clone(), json!(v)))
                    .collect::<serde_json::Map<_, _>>(),
                "stats": r.stats,
            }),
        )?;
    } else {
        match r.objective {
            Some(v) => writeln!(ctx.out, "{} {v:?}", r.status)?,
            None => writeln!(ctx.out, "{}", r.status)?,
        }
        if !r.assignment.is_empty() {
            writeln!(ctx.out, "inputs  {}", list(&x))?;
            writeln!(ctx.out, "outputs {}", list(&y))?;
            writeln!(ctx.out, "assignment")?;
            for (var, v) in p.variables().iter().zip(&r.assignment) {
                writeln!(ctx.out, "  {} = {v:?}", var.name)?;
            }
        }
        writeln!(ctx.out, "nodes {}", r.stats.nodes)?;
        writeln!(ctx.out, "simplex iterations {}", r.stats.simplex_iterations)?;
    }
    if r.status != SolveStatus::Optimal {
        return Err(CliError::solver(format!("solver stopped with status {}", r.status)));
    }
    Ok(ExitCode::Ok)
}

/// True when some coordinate falls strictly between a threshold and the
/// threshold plus `eps`, where the relaxed split makes both branches
/// infeasible.
fn in_epsilon_band(x: &[f64], thresholds: &[Vec<f64>], eps: f64) -> bool {
    x.iter()
        .zip(thresholds)
        .any(|(v, ts)| ts.iter().any(|t| *v > *t && *v < t + eps))
}

#[allow(clippy::too_many_arguments)]
fn verify(
    m: &AnyModel,
    kind: &KindArgs,
    samples: usize,
    seed: u64,
    tol: f64,
    json: bool,
    ctx: &mut Context<'_>,
) -> CmdResult {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(CliError::usage(format!(
            "tolerance must be finite and nonnegative, got {tol}"
        )));
    }
    let p = build(m, kind, ctx)?;
    let mut rng = gen::rng(seed);
    let (points, thresholds) = match m {
        AnyModel::Network(net) => {
            let pts: Vec<Vec<f64>> = (0..samples)
                .map(|_| gen::random_point(&mut rng, net.input_bounds()))
                .collect();
            (pts, Vec::new())
        }
        AnyModel::Ensemble(ens) => {
            let pts = (0..samples)
                .map(|_| gen::random_point(&mut rng, ens.feature_bounds()))
                .collect();
            (pts, ens.thresholds())
        }
    };
    let k = kind.kind();
    let checked: Vec<Option<(f64, f64, Vec<String>)>> = points
        .par_iter()
        .map(|x| -> Result<_, FormulationError> {
            let a = match m {
                AnyModel::Network(net) => forward_assignment(&p, net, k, x)?,
                AnyModel::Ensemble(ens) => {
                    if in_epsilon_band(x, &thresholds, kind.epsilon) {
                        return Ok(None);
                    }
                    gbt_forward_assignment(&p, ens, x)?
                }
            };
            let r = check_feasibility(&p, &a);
            let bad = r.violated(tol).into_iter().map(str::to_string).collect();
            Ok(Some((r.max_violation, r.max_product, bad)))
        })
        .collect::<Result<_, _>>()?;

    let skipped = checked.iter().filter(|c| c.is_none()).count();
    let mut max_violation: f64 = 0.0;
    let mut max_product: f64 = 0.0;
    let mut failing = 0;
    let mut rows: Vec<String> = Vec::new();
    for (v, prod, bad) in checked.into_iter().flatten() {
        // NaN compares false, so it is counted as a failure explicitly.
        let ok = v <= tol && prod <= tol;
        max_violation = if v.is_nan() { f64::NAN } else { max_violation.max(v) };
        max_product = max_product.max(prod);
        if !ok {
            failing += 1;
            for r in bad {
                if !rows.contains(&r) {
                    rows.push(r);
                }
            }
        }
    }
    let pass = failing == 0;
    if json {
        print_json(
            ctx,
            &json!({
                "samples": samples,
                "checked": samples - skipped,
                "skipped": skipped,
                "failing": failing,
                "max_violation": max_violation,
                "max_product": max_product,
                "violated_rows": rows,
                "pass": pass,
            }),
        )?;
    } else {
        writeln!(ctx.out, "samples        {samples}")?;
        writeln!(ctx.out, "checked        {}", samples - skipped)?;
        if skipped > 0 {
            writeln!(ctx.out, "skipped        {skipped} (inside the split epsilon band)")?;
        }
        writeln!(ctx.out, "max violation  {max_violation:?}")?;
        writeln!(ctx.out, "max product    {max_product:?}")?;
        if !rows.is_empty() {
            writeln!(ctx.out, "violated rows  {}", rows.join(" "))?;
        }
        writeln!(ctx.out, "{}", if pass { "PASS" } else { "FAIL" })?;
    }
    Ok(if pass { ExitCode::Ok } else { ExitCode::Failure })
}

fn network(m: &AnyModel, what: FormulationKind) -> Result<&NetworkDefinition, CliError> {
    match m {
        AnyModel::Network(net) => Ok(net),
        AnyModel::Ensemble(_) => Err(FormulationError::NotForEnsembles(what).into()),
    }
}

#[allow(clippy::too_many_arguments)]
fn adversarial(
    m: &AnyModel,
    x0: &[f64],
    true_label: usize,
    target: usize,
    radius: f64,
    json: bool,
    ctx: &mut Context<'_>,
) -> CmdResult {
    let net = network(m, FormulationKind::ReluBigM)?;
    let p = adversarial_problem(net, x0, true_label, target, radius)?;
    let r = run_solver(&p)?;
    let margin = match (r.status, r.objective) {
        (SolveStatus::Optimal, Some(v)) => v,
        _ => return Err(CliError::solver(format!("solver stopped with status {}", r.status))),
    };
    let (x, _) = interface_values(&p, &r);
    let scores = net.forward(&x).map_err(FormulationError::from)?;
    let sat = margin > SAT_MARGIN;
    if json {
        print_json(
            ctx,
            &json!({
                "result": if sat { "SAT" } else { "UNSAT" },
                "margin": margin,
                "input": x,
                "scores": scores,
                "nodes": r.stats.nodes,
            }),
        )?;
    } else {
        writeln!(ctx.out, "{} margin {margin:?}", if sat { "SAT" } else { "UNSAT" })?;
        writeln!(ctx.out, "input  {}", list(&x))?;
        writeln!(ctx.out, "scores {}", list(&scores))?;
    }
    Ok(ExitCode::Ok)
}

/// Output coefficients of an objective that mentions only `y[j]`.
fn output_coefs(spec: &ObjectiveSpec, outputs: usize) -> Result<Vec<f64>, CliError> {
    let mut coefs = vec![0.0; outputs];
    for (name, c) in &spec.terms {
        let j = name
            .strip_prefix("y[")
            .and_then(|s| s.strip_suffix(']'))
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|j| *j < outputs)
            .ok_or_else(|| {
                CliError::usage(format!(
                    "oracle objectives may only use y[0]..y[{}], got `{name}`",
                    outputs - 1
                ))
            })?;
        coefs[j] += c;
    }
    Ok(coefs)
}

fn oracle(m: &AnyModel, spec: &ObjectiveSpec, json: bool, ctx: &mut Context<'_>) -> CmdResult {
    let res = match m {
        AnyModel::Network(net) => {
            let coefs = output_coefs(spec, net.output_size())?;
            relu_pattern_oracle(
                net,
                &OutputObjective {
                    sense: spec.sense,
                    coefs,
                },
            )?
        }
        AnyModel::Ensemble(ens) => {
            let c = output_coefs(spec, 1)?[0];
            // Optimizing c*y in one sense is optimizing y in the other when c < 0.
            let sense = match (spec.sense, c < 0.0) {
                (s, false) => s,
                (ObjectiveSense::Maximize, true) => ObjectiveSense::Minimize,
                (ObjectiveSense::Minimize, true) => ObjectiveSense::Maximize,
            };
            let mut r = gbt_cell_oracle(ens, sense)?;
            r.value *= c;
            r
        }
    };
    let value = res.value + spec.constant;
    if json {
        print_json(
            ctx,
            &json!({
                "value": value,
                "argument": res.argument,
                "enumerated": res.enumerated,
                "feasible": res.feasible,
            }),
        )?;
    } else {
        writeln!(ctx.out, "value      {value:?}")?;
        writeln!(ctx.out, "argument   {}", list(&res.argument))?;
        writeln!(ctx.out, "enumerated {}", res.enumerated)?;
        writeln!(ctx.out, "feasible   {}", res.feasible)?;
    }
    Ok(ExitCode::Ok)
}
