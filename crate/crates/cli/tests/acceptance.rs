//! Acceptance suite: nine property checks against independent oracles.
//! Prints one PASS/FAIL line per criterion and exits nonzero on any FAIL.
//!
//!     cargo test --test acceptance

// `!(err <= tol)` is deliberate: a NaN error must fail.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::time::{Duration, Instant};

use surrogate_core::bounds::{default_partitions, partition_sum_bounds, propagate_bounds};
use surrogate_core::emit::{emit, parse, EmitError, Format};
use surrogate_core::formulations::{
    expected_counts, formulate, formulate_any, formulate_gbt, forward_assignment, link_objective, FormulationError,
    FormulationKind, GbtOptions, ObjectiveSpec, Surrogate, DEFAULT_EPSILON,
};
use surrogate_core::gen::{self, EnsembleSpec, NetworkSpec};
use surrogate_core::ingest::{parse_model, AnyModel};
use surrogate_core::model::LayerKind;
use surrogate_core::problem::{count_constraints, ObjectiveSense, OptProblem};
use surrogate_core::solver::{
    check_feasibility, gbt_cell_oracle, relu_pattern_oracle, solve, OutputObjective, SolveOptions, SolveStatus,
};
use surrogate_core::{Activation, NetworkDefinition};

type Outcome = Result<String, String>;

/// Name, check, and optional runtime limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn bundled_models() -> Vec<(String, AnyModel)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(models_dir())
        .expect("models directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with("adv_input"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let model = parse_model(&text).unwrap_or_else(|e| panic!("{name}: {e}")).model;
            (name, model)
        })
        .collect()
}

/// Kinds that accept `net`, found by attempting each one.
fn compatible(net: &NetworkDefinition, partitions: usize) -> Result<Vec<(FormulationKind, OptProblem)>, String> {
    let mut out = Vec::new();
    for kind in FormulationKind::network_kinds(partitions) {
        match formulate(net, kind) {
            Ok(p) => out.push((kind, p)),
            Err(FormulationError::IncompatibleActivation { .. } | FormulationError::DenseOnly { .. }) => {}
            Err(e) => return Err(format!("{kind}: {e}")),
        }
    }
    Ok(out)
}

fn optimum(p: OptProblem, spec: &ObjectiveSpec) -> Result<f64, String> {
    let p = link_objective(p, spec).map_err(|e| e.to_string())?;
    let r = solve(&p, &SolveOptions::default()).map_err(|e| e.to_string())?;
    match (r.status, r.objective) {
        (SolveStatus::Optimal, Some(v)) => Ok(v),
        (s, _) => Err(format!("solver status {s}")),
    }
}

fn max_y0() -> ObjectiveSpec {
    ObjectiveSpec::single(ObjectiveSense::Maximize, "y[0]")
}

/// ReLU and linear layers at the smooth family's sizes, with convolutions.
fn piecewise_linear() -> NetworkSpec {
    NetworkSpec {
        hidden: vec![Activation::Relu, Activation::Linear],
        last: vec![Activation::Relu, Activation::Linear],
        max_relus: usize::MAX,
        conv_probability: 0.3,
        ..NetworkSpec::smooth()
    }
}

fn forward_feasibility() -> Outcome {
    let mut checks = 0usize;
    let (mut worst_smooth, mut worst_pwl) = (0.0f64, 0.0f64);
    for seed in 0..200 {
        let mut rng = gen::rng(10_000 + seed);
        // Alternate between the smooth family and the piecewise-linear family
        // so every net has at least one kind that accepts it.
        let spec = if seed % 2 == 0 {
            NetworkSpec::smooth()
        } else {
            piecewise_linear()
        };
        let mut net = gen::random_network(&mut rng, &spec);
        if seed % 4 < 2 {
            net = gen::with_random_scaling(&mut rng, &net);
        }
        let kinds = compatible(&net, 2)?;
        if kinds.is_empty() {
            return Err(format!("seed {seed}: no compatible formulation"));
        }
        for _ in 0..50 {
            let x = gen::random_point(&mut rng, net.input_bounds());
            for (kind, p) in &kinds {
                let a = forward_assignment(p, &net, *kind, &x).map_err(|e| e.to_string())?;
                let r = check_feasibility(p, &a);
                let residual = r.max_violation.max(r.max_product);
                let tol = if kind.is_smooth() { 1e-10 } else { 1e-7 };
                if !(residual <= tol) {
                    return Err(format!("seed {seed} {kind}: residual {residual:e} > {tol:e}"));
                }
                if kind.is_smooth() {
                    worst_smooth = worst_smooth.max(residual);
                } else {
                    worst_pwl = worst_pwl.max(residual);
                }
                checks += 1;
            }
        }
    }
    Ok(format!(
        "{checks} checks, max residual smooth {worst_smooth:e}, piecewise-linear {worst_pwl:e}"
    ))
}

fn relu_nets() -> Vec<NetworkDefinition> {
    (0..200)
        .map(|seed| {
            let mut rng = gen::rng(20_000 + seed);
            let net = gen::random_network(&mut rng, &NetworkSpec::relu());
            if seed % 5 == 0 {
                gen::with_random_scaling(&mut rng, &net)
            } else {
                net
            }
        })
        .collect()
}

fn cross_formulation_optimum() -> Outcome {
    let mut worst = 0.0f64;
    for (seed, net) in relu_nets().iter().enumerate() {
        let oracle = relu_pattern_oracle(net, &OutputObjective::maximize(vec![1.0]))
            .map_err(|e| format!("seed {seed}: {e}"))?
            .value;
        for kind in [
            FormulationKind::ReluBigM,
            FormulationKind::ReluPartition(1),
            FormulationKind::ReluPartition(2),
            FormulationKind::ReluPartition(3),
        ] {
            let p = formulate(net, kind).map_err(|e| e.to_string())?;
            let v = optimum(p, &max_y0()).map_err(|e| format!("seed {seed} {kind}: {e}"))?;
            let gap = (v - oracle).abs();
            if !(gap <= 1e-6) {
                return Err(format!("seed {seed} {kind}: {v} vs oracle {oracle}"));
            }
            worst = worst.max(gap);
        }
    }
    Ok(format!("200 nets x 4 formulations, max gap {worst:e}"))
}

fn gbt_correctness() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = gen::rng(30_000 + seed);
        let ens = gen::random_ensemble(&mut rng, &EnsembleSpec::default());
        for sense in [ObjectiveSense::Maximize, ObjectiveSense::Minimize] {
            let oracle = gbt_cell_oracle(&ens, sense).map_err(|e| e.to_string())?.value;
            let p = formulate_gbt(&ens, &GbtOptions::default()).map_err(|e| e.to_string())?;
            let v = optimum(p, &ObjectiveSpec::single(sense, "y[0]"))?;
            let gap = (v - oracle).abs();
            if !(gap <= 1e-9) {
                return Err(format!("seed {seed} {sense:?}: {v} vs oracle {oracle}"));
            }
            worst = worst.max(gap);
        }
    }
    Ok(format!("100 ensembles, both senses, max gap {worst:e}"))
}

fn constraint_counts() -> Outcome {
    let mut compared = 0;
    for (seed, net) in relu_nets().iter().enumerate() {
        let mut rows = Vec::new();
        for kind in [
            FormulationKind::ReluComplementarity,
            FormulationKind::ReluBigM,
            FormulationKind::ReluPartition(2),
        ] {
            let got = count_constraints(&formulate(net, kind).map_err(|e| e.to_string())?);
            let want = expected_counts(net, kind).map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!("seed {seed} {kind}: {got:?} vs formula {want:?}"));
            }
            rows.push(got.total_rows());
            compared += 1;
        }
        if !(rows[0] < rows[1] && rows[1] < rows[2]) {
            return Err(format!(
                "seed {seed}: complementarity {} big-M {} partition {}",
                rows[0], rows[1], rows[2]
            ));
        }
    }
    Ok(format!("{compared} count comparisons, ordering holds on all 200 nets"))
}

fn bound_soundness() -> Outcome {
    let mut samples = 0usize;
    let mut identities = 0usize;
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = gen::rng(40_000 + seed);
        let mut net = gen::random_network(&mut rng, &NetworkSpec::any_activation());
        if seed % 3 == 0 {
            net = gen::with_random_scaling(&mut rng, &net);
        }
        let b = propagate_bounds(&net).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let x = gen::random_point(&mut rng, net.input_bounds());
            let t = net.trace(&x).map_err(|e| e.to_string())?;
            let outside = t.scaled_input.iter().zip(&b.input).any(|(v, iv)| !iv.contains(*v))
                || b.layers.iter().enumerate().any(|(l, lb)| {
                    lb.pre.iter().zip(&t.pre[l]).any(|(iv, v)| !iv.contains(*v))
                        || lb.post.iter().zip(&t.post[l]).any(|(iv, v)| !iv.contains(*v))
                })
                || t.output.iter().zip(&b.output).any(|(v, iv)| !iv.contains(*v));
            if outside {
                return Err(format!("seed {seed}: sample {x:?} escapes its bounds"));
            }
            samples += 1;
        }
        for (l, layer) in net.layers().iter().enumerate() {
            let LayerKind::Dense(d) = &layer.kind else { continue };
            for (i, w) in d.weights().iter().enumerate() {
                let pre = b.layers[l].pre[i];
                for n in 1..=3 {
                    let parts = default_partitions(w, n);
                    let sums = partition_sum_bounds(w, b.incoming(l), &parts).map_err(|e| e.to_string())?;
                    let lo: f64 = sums.iter().map(|s| s.lo).sum();
                    let hi: f64 = sums.iter().map(|s| s.hi).sum();
                    let gap = (lo - (pre.lo - d.bias()[i]))
                        .abs()
                        .max((hi - (pre.hi - d.bias()[i])).abs());
                    if !(gap <= 1e-9) {
                        return Err(format!("seed {seed} layer {l} neuron {i} N={n}: gap {gap:e}"));
                    }
                    worst = worst.max(gap);
                    identities += 1;
                }
            }
        }
    }
    Ok(format!(
        "{samples} samples contained, {identities} partition-sum identities, max gap {worst:e}"
    ))
}

fn gradient_checks() -> Outcome {
    let h = 1e-6;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let mut seed = 0;
    while checked < 100 {
        let mut rng = gen::rng(50_000 + seed);
        seed += 1;
        let net = gen::random_network(&mut rng, &NetworkSpec::smooth());
        let p = formulate(&net, FormulationKind::ReducedSpaceSmooth).map_err(|e| e.to_string())?;
        let x = gen::random_point(&mut rng, net.input_bounds());
        let base = forward_assignment(&p, &net, FormulationKind::ReducedSpaceSmooth, &x).map_err(|e| e.to_string())?;
        for c in p.nonlinear_constraints() {
            if checked == 100 {
                break;
            }
            let grad = c.expr.grad(&base).map_err(|e| e.to_string())?;
            for v in c.expr.vars() {
                let mut a = base.clone();
                a[v.0] = base[v.0] + h;
                let up = c.expr.eval(&a).map_err(|e| e.to_string())?;
                a[v.0] = base[v.0] - h;
                let down = c.expr.eval(&a).map_err(|e| e.to_string())?;
                let fd = (up - down) / (2.0 * h);
                let g = grad.get(&v).copied().unwrap_or(0.0);
                let rel = (g - fd).abs() / fd.abs().max(1.0);
                if !(rel <= 1e-6) {
                    return Err(format!("seed {} {} d/d{}: {g} vs {fd}", seed - 1, c.name, p.name_of(v)));
                }
                worst = worst.max(rel);
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} output expressions from {seed} nets, max relative error {worst:e}"
    ))
}

fn emitter_integrity() -> Outcome {
    let mut files = 0;
    let mut round_trips = 0;
    let mut worst = 0.0f64;
    for (name, model) in bundled_models() {
        let kinds: Vec<FormulationKind> = match &model {
            AnyModel::Network(net) => compatible(net, 2)?.into_iter().map(|(k, _)| k).collect(),
            AnyModel::Ensemble(_) => vec![FormulationKind::GbtBigM],
        };
        let surrogate = || match &model {
            AnyModel::Network(n) => Surrogate::Network(n),
            AnyModel::Ensemble(e) => Surrogate::Ensemble(e),
        };
        for kind in kinds {
            let build = || -> Result<OptProblem, String> {
                let p = formulate_any(surrogate(), kind, DEFAULT_EPSILON).map_err(|e| e.to_string())?;
                link_objective(p, &max_y0()).map_err(|e| e.to_string())
            };
            let (first, second) = (build()?, build()?);
            for format in Format::ALL {
                let a = match emit(&first, format) {
                    Ok(text) => text,
                    Err(EmitError::Unsupported { .. }) => continue,
                    Err(e) => return Err(format!("{name} {kind} {format}: {e}")),
                };
                let b = emit(&second, format).map_err(|e| e.to_string())?;
                if a != b || emit(&first, format).map_err(|e| e.to_string())? != a {
                    return Err(format!("{name} {kind} {format}: re-emission differs"));
                }
                files += 1;
            }
            if !first.is_linear() || !first.complementarity_pairs().is_empty() {
                continue;
            }
            let text = emit(&first, Format::Lp).map_err(|e| e.to_string())?;
            let parsed = parse(&text, Format::Lp).map_err(|e| format!("{name} {kind}: {e}"))?;
            let solve_value = |p: &OptProblem| -> Result<f64, String> {
                let r = solve(p, &SolveOptions::default()).map_err(|e| e.to_string())?;
                r.objective.ok_or_else(|| format!("{name} {kind}: status {}", r.status))
            };
            let (want, got) = (solve_value(&first)?, solve_value(&parsed)?);
            let gap = (want - got).abs();
            if !(gap <= 1e-9) {
                return Err(format!("{name} {kind}: LP round trip {got} vs {want}"));
            }
            worst = worst.max(gap);
            round_trips += 1;
        }
    }
    Ok(format!(
        "{files} files re-emitted identically, {round_trips} LP round trips, max gap {worst:e}"
    ))
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("surrogate-compiler").chain(args.iter().copied());
    let code = surrogate_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn adversarial_demo() -> Outcome {
    let started = Instant::now();
    let net_path = models_dir().join("adversarial_net.json");
    let net = match parse_model(&std::fs::read_to_string(&net_path).unwrap()).unwrap().model {
        AnyModel::Network(n) => n,
        AnyModel::Ensemble(_) => return Err("adversarial_net.json is not a network".into()),
    };
    let net_arg = net_path.to_string_lossy().into_owned();
    let (mut sat, mut unsat) = (0, 0);
    for i in 0..5 {
        let input = models_dir().join(format!("adv_input_{i}.json"));
        let x0: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(&input).unwrap()).unwrap();
        let scores = net.forward(&x0).unwrap();
        let truth = (0..scores.len())
            .max_by(|a, b| scores[*a].total_cmp(&scores[*b]))
            .unwrap();
        let target = (truth + 1 + i % 2) % scores.len();
        for radius in [0.0, 0.1, 0.25, 0.5] {
            let boxed: Vec<_> = x0
                .iter()
                .zip(net.input_bounds())
                .map(|(v, b)| surrogate_core::Interval::new((v - radius).max(b.lo), (v + radius).min(b.hi)))
                .collect();
            let local = net.with_input_bounds(boxed).unwrap();
            let mut coefs = vec![0.0; scores.len()];
            coefs[target] = 1.0;
            coefs[truth] = -1.0;
            let margin = relu_pattern_oracle(&local, &OutputObjective::maximize(coefs))
                .map_err(|e| e.to_string())?
                .value;
            let expected = if margin > surrogate_cli::SAT_MARGIN {
                "SAT"
            } else {
                "UNSAT"
            };
            let (code, out, err) = cli(&[
                "adversarial",
                &net_arg,
                "--input",
                &input.to_string_lossy(),
                "--true",
                &truth.to_string(),
                "--target",
                &target.to_string(),
                "--radius",
                &radius.to_string(),
            ]);
            let got = out.split_whitespace().next().unwrap_or("");
            if code != 0 || got != expected {
                return Err(format!(
                    "input {i} radius {radius}: cli `{}` (exit {code}, {}) vs oracle margin {margin}",
                    out.lines().next().unwrap_or(""),
                    err.trim()
                ));
            }
            if expected == "SAT" {
                sat += 1;
            } else {
                unsat += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(10) {
        return Err(format!("20 cases took {elapsed:.2?}"));
    }
    Ok(format!("20 cases agree ({sat} SAT, {unsat} UNSAT) in {elapsed:.2?}"))
}

fn scaling_correctness() -> Outcome {
    let mut nets: Vec<(String, NetworkDefinition)> = (0..50)
        .map(|seed| {
            let mut rng = gen::rng(60_000 + seed);
            let base = gen::random_network(&mut rng, &NetworkSpec::relu());
            (format!("seed {seed}"), gen::with_random_scaling(&mut rng, &base))
        })
        .collect();
    for (name, model) in bundled_models() {
        if let AnyModel::Network(n) = model {
            if n.scaling().is_some()
                && n.layers()
                    .iter()
                    .all(|l| matches!(l.activation, Activation::Relu | Activation::Linear))
            {
                nets.push((name, n));
            }
        }
    }
    let mut worst = 0.0f64;
    for (name, scaled) in &nets {
        let s = scaled.scaling().unwrap();
        // The same layers with scaling stripped, over the scaled input box.
        let inner = NetworkDefinition::new(scaled.scaled_input_bounds(), None, scaled.layers().to_vec())
            .map_err(|e| e.to_string())?;
        for j in 0..scaled.output_size() {
            for sense in [ObjectiveSense::Maximize, ObjectiveSense::Minimize] {
                let composed = ObjectiveSpec {
                    sense,
                    terms: vec![(format!("y[{j}]"), s.output_factor()[j])],
                    constant: s.output_offset()[j],
                };
                let want = optimum(
                    formulate(&inner, FormulationKind::ReluBigM).map_err(|e| e.to_string())?,
                    &composed,
                )?;
                let raw = ObjectiveSpec::single(sense, format!("y[{j}]"));
                let got = optimum(
                    formulate(scaled, FormulationKind::ReluBigM).map_err(|e| e.to_string())?,
                    &raw,
                )?;
                let gap = (got - want).abs();
                if !(gap <= 1e-8) {
                    return Err(format!("{name} y[{j}] {sense:?}: {got} vs composed {want}"));
                }
                worst = worst.max(gap);
            }
        }
    }
    Ok(format!("{} scaled nets, both senses, max gap {worst:e}", nets.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("forward-pass feasibility", forward_feasibility, Some(60)),
        ("cross-formulation optimum", cross_formulation_optimum, Some(300)),
        ("tree ensemble optimum", gbt_correctness, Some(120)),
        ("constraint counts", constraint_counts, None),
        ("bound soundness", bound_soundness, None),
        ("gradient checks", gradient_checks, None),
        ("emitter integrity", emitter_integrity, None),
        ("adversarial decisions", adversarial_demo, Some(10)),
        ("scaling composition", scaling_correctness, None),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let mut outcome = check();
        let elapsed = started.elapsed();
        if let (Ok(detail), Some(secs)) = (&outcome, limit) {
            if elapsed > Duration::from_secs(*secs) {
                outcome = Err(format!("{detail}; took {elapsed:.2?}, limit {secs}s"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
