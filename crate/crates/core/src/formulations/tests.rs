use proptest::prelude::*;

use super::*;
use crate::gen::{self, EnsembleSpec, NetworkSpec};
use crate::model::{Layer, OffsetScaling, TreeNode};
use crate::problem::{count_constraints, Expr, ObjectiveSense, Sense};
use crate::solver::{
    check_feasibility, gbt_cell_oracle, relu_pattern_oracle, solve, OutputObjective, SolveOptions, SolveStatus,
};

fn net(layers: Vec<Layer>, bounds: &[(f64, f64)]) -> NetworkDefinition {
    NetworkDefinition::new(bounds.iter().map(|b| Interval::from(*b)).collect(), None, layers).unwrap()
}

fn dense(w: Vec<Vec<f64>>, b: Vec<f64>, act: Activation) -> Layer {
    Layer::dense(w, b, act).unwrap()
}

fn optimum(p: OptProblem, spec: &ObjectiveSpec) -> f64 {
    let p = link_objective(p, spec).unwrap();
    let r = solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    r.objective.unwrap()
}

fn max_y(j: usize) -> ObjectiveSpec {
    ObjectiveSpec::single(ObjectiveSense::Maximize, format!("y[{j}]"))
}

fn min_y(j: usize) -> ObjectiveSpec {
    ObjectiveSpec::single(ObjectiveSense::Minimize, format!("y[{j}]"))
}

fn compatible_kinds(net: &NetworkDefinition) -> Vec<FormulationKind> {
    [
        FormulationKind::FullSpaceSmooth,
        FormulationKind::ReducedSpaceSmooth,
        FormulationKind::ReluBigM,
        FormulationKind::ReluComplementarity,
        FormulationKind::ReluPartition(1),
        FormulationKind::ReluPartition(2),
        FormulationKind::ReluPartition(3),
    ]
    .into_iter()
    .filter(|k| check_network(net, *k).is_ok())
    .collect()
}

#[test]
fn identity_net_is_y_equals_x() {
    let id = net(
        vec![dense(vec![vec![1.0]], vec![0.0], Activation::Linear)],
        &[(-1.0, 2.0)],
    );
    for kind in compatible_kinds(&id) {
        assert_eq!(compatible_kinds(&id).len(), 7);
        let p = formulate(&id, kind).unwrap();
        if kind == FormulationKind::ReducedSpaceSmooth {
            let c = &p.nonlinear_constraints()[0];
            for x in [-1.0, 0.3, 2.0] {
                let a = forward_assignment(&p, &id, kind, &[x]).unwrap();
                assert_eq!(a[p.output_vars()[0].0], x);
                assert_eq!(c.expr.eval(&a).unwrap(), 0.0);
            }
            continue;
        }
        assert_eq!(optimum(p.clone(), &max_y(0)), 2.0, "{kind}");
        assert_eq!(optimum(p.clone(), &min_y(0)), -1.0, "{kind}");
        // y - x is identically zero
        let diff = ObjectiveSpec::parse(ObjectiveSense::Maximize, "y[0] - x[0]").unwrap();
        assert_eq!(optimum(p.clone(), &diff), 0.0);
        let diff = ObjectiveSpec::parse(ObjectiveSense::Minimize, "y[0] - x[0]").unwrap();
        assert_eq!(optimum(p, &diff), 0.0);
    }
}

#[test]
fn single_neuron_counts() {
    let relu = net(
        vec![dense(vec![vec![1.0]], vec![0.0], Activation::Relu)],
        &[(-1.0, 1.0)],
    );
    let c = count_constraints(&formulate(&relu, FormulationKind::ReluBigM).unwrap());
    assert_eq!((c.linear, c.binaries, c.nonlinear, c.complementarity), (5, 1, 0, 0));
    let c = count_constraints(&formulate(&relu, FormulationKind::ReluComplementarity).unwrap());
    assert_eq!((c.linear, c.binaries, c.complementarity), (3, 0, 1));
    let c = count_constraints(&formulate(&relu, FormulationKind::ReluPartition(4)).unwrap());
    assert_eq!((c.linear, c.binaries), (7, 1), "N clamps to the fan-in of 1");

    let sig = net(
        vec![dense(vec![vec![1.0]], vec![0.0], Activation::Sigmoid)],
        &[(-1.0, 1.0)],
    );
    let p = formulate(&sig, FormulationKind::FullSpaceSmooth).unwrap();
    let c = count_constraints(&p);
    assert_eq!((c.linear, c.nonlinear), (1, 1));
    let names = |v: crate::problem::VarId| p.name_of(v).to_string();
    assert_eq!(
        p.nonlinear_constraints()[0].expr.display(&names).to_string(),
        "z[0][0] - sigmoid(zhat[0][0])"
    );
}

#[test]
fn max_relu_is_one() {
    let relu = net(
        vec![dense(vec![vec![1.0]], vec![0.0], Activation::Relu)],
        &[(-1.0, 1.0)],
    );
    for kind in [
        FormulationKind::ReluBigM,
        FormulationKind::ReluComplementarity,
        FormulationKind::ReluPartition(1),
    ] {
        let p = formulate(&relu, kind).unwrap();
        assert_eq!(optimum(p.clone(), &max_y(0)), 1.0);
        assert_eq!(optimum(p, &min_y(0)), 0.0);
    }
}

#[test]
fn kind_compatibility_is_enforced() {
    let relu = net(
        vec![dense(vec![vec![1.0]], vec![0.0], Activation::Relu)],
        &[(-1.0, 1.0)],
    );
    assert!(matches!(
        formulate(&relu, FormulationKind::FullSpaceSmooth),
        Err(FormulationError::IncompatibleActivation { layer: 0, .. })
    ));
    let tanh = net(
        vec![dense(vec![vec![1.0]], vec![0.0], Activation::Tanh)],
        &[(-1.0, 1.0)],
    );
    assert!(formulate(&tanh, FormulationKind::ReluBigM).is_err());
    let mixed = net(
        vec![
            dense(vec![vec![1.0]], vec![0.0], Activation::Relu),
            dense(vec![vec![1.0]], vec![0.0], Activation::Tanh),
        ],
        &[(-1.0, 1.0)],
    );
    for kind in FormulationKind::network_kinds(2) {
        assert!(formulate(&mixed, kind).is_err(), "{kind}");
    }
    let conv = net(
        vec![
            Layer::conv2d(
                vec![1.0; 4],
                [1, 1, 2, 2],
                vec![0.0],
                [1, 2, 2],
                [1, 1],
                Activation::Relu,
            )
            .unwrap(),
            dense(vec![vec![1.0]], vec![0.0], Activation::Linear),
        ],
        &[(-1.0, 1.0); 4],
    );
    assert!(matches!(
        formulate(&conv, FormulationKind::ReluPartition(2)),
        Err(FormulationError::DenseOnly { layer: 0, .. })
    ));
    assert!(formulate(&conv, FormulationKind::ReluBigM).is_ok());
    assert_eq!(
        formulate(&relu, FormulationKind::ReluPartition(0)).unwrap_err(),
        FormulationError::ZeroPartitions
    );
    let open = relu
        .with_input_bounds(vec![Interval::new(f64::NEG_INFINITY, 1.0)])
        .unwrap();
    assert!(matches!(
        formulate(&open, FormulationKind::ReluBigM),
        Err(FormulationError::UnboundedInput { index: 0 })
    ));
}

#[test]
fn stable_neurons_get_no_binary() {
    let n = net(
        vec![dense(vec![vec![1.0], vec![1.0]], vec![2.0, -2.0], Activation::Relu)],
        &[(-1.0, 1.0)],
    );
    let p = formulate(&n, FormulationKind::ReluBigM).unwrap();
    let c = count_constraints(&p);
    // active neuron: one equality; inactive neuron: fixed at zero
    assert_eq!((c.linear, c.binaries), (1, 0));
    let z = p.var_by_name("z[0][1]").unwrap();
    assert_eq!((p.variable(z).lb, p.variable(z).ub), (0.0, 0.0));
    assert_eq!(optimum(p, &max_y(0)), 3.0);
}

#[test]
fn counts_match_closed_form_and_order() {
    for seed in 0..100 {
        let mut rng = gen::rng(seed);
        let mut n = gen::random_network(&mut rng, &NetworkSpec::relu());
        if seed % 3 == 0 {
            n = gen::with_random_scaling(&mut rng, &n);
        }
        let count = |k| count_constraints(&formulate(&n, k).unwrap());
        for kind in compatible_kinds(&n) {
            assert_eq!(count(kind), expected_counts(&n, kind).unwrap(), "seed {seed} {kind}");
        }
        let compl = count(FormulationKind::ReluComplementarity).total_rows();
        let bigm = count(FormulationKind::ReluBigM).total_rows();
        let part = count(FormulationKind::ReluPartition(2)).total_rows();
        assert!(compl < bigm && bigm < part, "seed {seed}: {compl} {bigm} {part}");
    }
    for seed in 0..60 {
        let mut rng = gen::rng(1000 + seed);
        let n = gen::random_network(&mut rng, &NetworkSpec::any_activation());
        for kind in compatible_kinds(&n) {
            let got = count_constraints(&formulate(&n, kind).unwrap());
            assert_eq!(got, expected_counts(&n, kind).unwrap(), "seed {seed} {kind}");
        }
    }
}

fn assert_forward_feasible(seed: u64, scaled: bool) {
    let mut rng = gen::rng(seed);
    let spec = if seed.is_multiple_of(2) {
        NetworkSpec::relu()
    } else {
        NetworkSpec::any_activation()
    };
    let mut n = gen::random_network(&mut rng, &spec);
    if scaled {
        n = gen::with_random_scaling(&mut rng, &n);
    }
    let kinds = compatible_kinds(&n);
    let problems: Vec<_> = kinds.iter().map(|k| formulate(&n, *k).unwrap()).collect();
    for _ in 0..10 {
        let x = gen::random_point(&mut rng, n.input_bounds());
        for (kind, p) in kinds.iter().zip(&problems) {
            let a = forward_assignment(p, &n, *kind, &x).unwrap();
            let report = check_feasibility(p, &a);
            let tol = if kind.is_smooth() { 1e-10 } else { 1e-8 };
            assert!(
                report.max_violation <= tol,
                "seed {seed} {kind}: {:?}",
                report.violated(tol)
            );
            assert!(report.max_product <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_pass_is_feasible(seed in 0u64..1_000_000, scaled in any::<bool>()) {
        assert_forward_feasible(seed, scaled);
    }

    #[test]
    fn reduced_space_matches_forward(seed in 0u64..1_000_000) {
        let mut rng = gen::rng(seed);
        let base = gen::random_network(&mut rng, &NetworkSpec::smooth());
        let n = gen::with_random_scaling(&mut rng, &base);
        let p = formulate(&n, FormulationKind::ReducedSpaceSmooth).unwrap();
        prop_assert_eq!(p.nonlinear_constraints().len(), n.output_size());
        for _ in 0..5 {
            let x = gen::random_point(&mut rng, n.input_bounds());
            let y = n.forward(&x).unwrap();
            let mut a = x.clone();
            a.resize(p.num_vars(), 0.0);
            for (j, c) in p.nonlinear_constraints().iter().enumerate() {
                // c is y_j - f_j(x); with y_j = 0 it evaluates to -f_j(x)
                let f = -c.expr.eval(&a).unwrap();
                prop_assert!((f - y[j]).abs() <= 1e-10 * (1.0 + y[j].abs()));
            }
        }
    }
}

#[test]
fn perturbing_one_neuron_flags_its_rows() {
    let mut rng = gen::rng(7);
    let n = gen::random_network(&mut rng, &NetworkSpec::smooth());
    let p = formulate(&n, FormulationKind::FullSpaceSmooth).unwrap();
    let x = gen::random_point(&mut rng, n.input_bounds());
    let mut a = forward_assignment(&p, &n, FormulationKind::FullSpaceSmooth, &x).unwrap();
    let z = p.var_by_name("z[0][0]").unwrap();
    a[z.0] += 0.1;
    let report = check_feasibility(&p, &a);
    let mut expected: Vec<String> = p
        .linear_constraints()
        .iter()
        .filter(|c| c.terms.iter().any(|(v, _)| *v == z))
        .map(|c| c.name.clone())
        .chain(
            p.nonlinear_constraints()
                .iter()
                .filter(|c| c.expr.vars().contains(&z))
                .map(|c| c.name.clone()),
        )
        .collect();
    expected.sort();
    let mut flagged: Vec<String> = report.violated(1e-9).into_iter().map(String::from).collect();
    flagged.sort();
    // a row can lose z only by exact cancellation, which random weights avoid
    assert_eq!(flagged, expected);
    assert!(!flagged.is_empty());
}

#[test]
fn fixed_input_pins_the_output() {
    for seed in 0..25 {
        let mut rng = gen::rng(300 + seed);
        let n = gen::random_network(&mut rng, &NetworkSpec::relu());
        let x = gen::random_point(&mut rng, n.input_bounds());
        let y = n.forward(&x).unwrap();
        for kind in [FormulationKind::ReluBigM, FormulationKind::ReluPartition(2)] {
            let mut p = formulate(&n, kind).unwrap();
            for (i, v) in p.input_vars().to_vec().into_iter().enumerate() {
                p.add_linear(format!("fix_{i}"), vec![(v, 1.0)], Sense::Eq, x[i])
                    .unwrap();
            }
            for (j, yj) in y.iter().enumerate() {
                let hi = optimum(p.clone(), &max_y(j));
                let lo = optimum(p.clone(), &min_y(j));
                assert!((hi - yj).abs() <= 1e-6 && (lo - yj).abs() <= 1e-6, "seed {seed} {kind}");
            }
        }
    }
}

#[test]
fn relu_kinds_agree_with_pattern_oracle() {
    for seed in 0..40 {
        let mut rng = gen::rng(500 + seed);
        let mut n = gen::random_network(&mut rng, &NetworkSpec::relu());
        if seed % 4 == 0 {
            n = gen::with_random_scaling(&mut rng, &n);
        }
        let oracle = relu_pattern_oracle(&n, &OutputObjective::maximize(vec![1.0]))
            .unwrap()
            .value;
        for kind in [
            FormulationKind::ReluBigM,
            FormulationKind::ReluComplementarity,
            FormulationKind::ReluPartition(1),
            FormulationKind::ReluPartition(2),
            FormulationKind::ReluPartition(3),
        ] {
            let v = optimum(formulate(&n, kind).unwrap(), &max_y(0));
            assert!((v - oracle).abs() <= 1e-6, "seed {seed} {kind}: {v} vs {oracle}");
        }
    }
}

#[test]
fn big_m_constants_are_load_bearing() {
    // One neuron with pre-activation range [-1, 2].
    let n = net(
        vec![dense(vec![vec![1.5]], vec![0.5], Activation::Relu)],
        &[(-1.0, 1.0)],
    );
    let p = formulate(&n, FormulationKind::ReluBigM).unwrap();
    let rebuild = |row: &str, scale: f64| {
        let mut q = OptProblem::new();
        for v in p.variables() {
            q.add_var(v.name.clone(), v.domain, v.lb, v.ub).unwrap();
        }
        for c in p.linear_constraints() {
            let (terms, rhs) = if c.name == row {
                // shrink the big-M constant by 10%
                let m = p.var_by_name("q[0][0]").unwrap();
                let terms = c
                    .terms
                    .iter()
                    .map(|&(v, a)| (v, if v == m { a * scale } else { a }))
                    .collect();
                let rhs = if c.rhs != 0.0 { c.rhs * scale } else { 0.0 };
                (terms, rhs)
            } else {
                (c.terms.clone(), c.rhs)
            };
            q.add_linear(c.name.clone(), terms, c.sense, rhs).unwrap();
        }
        q
    };
    for row in ["c_relu_0_0_off", "c_relu_0_0_on"] {
        let q = rebuild(row, 0.9);
        let broken = [-1.0, 1.0].iter().any(|&x| {
            let a = forward_assignment(&p, &n, FormulationKind::ReluBigM, &[x]).unwrap();
            check_feasibility(&q, &a).max_violation > 1e-9
        });
        assert!(broken, "{row}");
        let q = rebuild(row, 1.0);
        for x in [-1.0, 1.0] {
            let a = forward_assignment(&p, &n, FormulationKind::ReluBigM, &[x]).unwrap();
            assert!(check_feasibility(&q, &a).max_violation <= 1e-12);
        }
    }
}

#[test]
fn scaling_composes_with_the_unscaled_net() {
    for seed in 0..30 {
        let mut rng = gen::rng(800 + seed);
        let base = gen::random_network(&mut rng, &NetworkSpec::relu());
        let scaled = gen::with_random_scaling(&mut rng, &base);
        let s = scaled.scaling().unwrap().clone();
        // Unscaled net over the scaled box, objective fac * y + off.
        let inner = base.with_input_bounds(scaled.scaled_input_bounds()).unwrap();
        let fac = s.output_factor()[0];
        let spec = ObjectiveSpec {
            sense: ObjectiveSense::Maximize,
            terms: vec![("y[0]".into(), fac)],
            constant: s.output_offset()[0],
        };
        let expected = optimum(formulate(&inner, FormulationKind::ReluBigM).unwrap(), &spec);
        let got = optimum(formulate(&scaled, FormulationKind::ReluBigM).unwrap(), &max_y(0));
        assert!((got - expected).abs() <= 1e-8, "seed {seed}: {got} vs {expected}");
    }
}

#[test]
fn scaling_rows_are_linear_equalities() {
    let s = OffsetScaling::new(vec![1.0], vec![2.0], vec![-1.0], vec![4.0]).unwrap();
    let n = NetworkDefinition::new(
        vec![Interval::new(-3.0, 5.0)],
        Some(s),
        vec![dense(vec![vec![1.0]], vec![0.0], Activation::Linear)],
    )
    .unwrap();
    let p = formulate(&n, FormulationKind::ReluBigM).unwrap();
    assert!(p.var_by_name("xs[0]").is_some());
    assert_eq!(p.counts().linear, 3);
    // y = 4 * (x - 1) / 2 - 1 = 2x - 3
    assert_eq!(optimum(p.clone(), &max_y(0)), 7.0);
    assert_eq!(optimum(p, &min_y(0)), -9.0);
    let r = formulate(&n, FormulationKind::ReducedSpaceSmooth).unwrap();
    assert_eq!(r.counts().total_rows(), 1);
}

fn stump() -> TreeEnsemble {
    TreeEnsemble::new(
        1,
        0.0,
        vec![vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            TreeNode::Leaf { value: 1.0 },
            TreeNode::Leaf { value: 2.0 },
        ]],
        vec![Interval::new(0.0, 1.0)],
    )
    .unwrap()
}

#[test]
fn stump_optima() {
    let p = formulate_gbt(&stump(), &GbtOptions::default()).unwrap();
    let hi = link_objective(p.clone(), &max_y(0)).unwrap();
    let r = solve(&hi, &SolveOptions::default()).unwrap();
    assert_eq!(r.objective, Some(2.0));
    assert!(r.value(p.input_vars()[0]).unwrap() >= 0.5 + DEFAULT_EPSILON - 1e-12);
    assert_eq!(optimum(p, &min_y(0)), 1.0);
}

#[test]
fn constant_ensemble_is_fixed() {
    let ens = TreeEnsemble::new(
        1,
        0.3,
        vec![vec![TreeNode::Leaf { value: 0.7 }]],
        vec![Interval::new(-1.0, 1.0)],
    )
    .unwrap();
    let p = formulate_gbt(&ens, &GbtOptions::default()).unwrap();
    assert_eq!(p.warnings().len(), 1);
    assert_eq!(optimum(p.clone(), &max_y(0)), 1.0);
    assert_eq!(optimum(p, &min_y(0)), 1.0);
}

#[test]
fn out_of_range_threshold_warns_and_stays_exact() {
    let ens = TreeEnsemble::new(
        1,
        0.0,
        vec![vec![
            TreeNode::Split {
                feature: 0,
                threshold: 3.0,
                left: 1,
                right: 2,
            },
            TreeNode::Leaf { value: 1.0 },
            TreeNode::Leaf { value: 5.0 },
        ]],
        vec![Interval::new(0.0, 1.0)],
    )
    .unwrap();
    let p = formulate_gbt(&ens, &GbtOptions::default()).unwrap();
    assert_eq!(p.warnings().len(), 1);
    assert_eq!(optimum(p, &max_y(0)), 1.0);
}

#[test]
fn gbt_matches_cell_oracle() {
    for seed in 0..60 {
        let mut rng = gen::rng(2000 + seed);
        let ens = gen::random_ensemble(&mut rng, &EnsembleSpec::default());
        let p = formulate_gbt(&ens, &GbtOptions::default()).unwrap();
        for sense in [ObjectiveSense::Maximize, ObjectiveSense::Minimize] {
            let expected = gbt_cell_oracle(&ens, sense).unwrap().value;
            let got = optimum(p.clone(), &ObjectiveSpec::single(sense, "y[0]"));
            assert!((got - expected).abs() <= 1e-9, "seed {seed}: {got} vs {expected}");
        }
    }
}

#[test]
fn gbt_forward_assignment_is_feasible() {
    for seed in 0..60 {
        let mut rng = gen::rng(3000 + seed);
        let ens = gen::random_ensemble(&mut rng, &EnsembleSpec::default());
        let p = formulate_gbt(&ens, &GbtOptions::default()).unwrap();
        let thresholds = ens.thresholds();
        for _ in 0..20 {
            let x = gen::random_point(&mut rng, ens.feature_bounds());
            let in_band = x
                .iter()
                .zip(&thresholds)
                .any(|(v, ts)| ts.iter().any(|t| *v > *t && *v < t + DEFAULT_EPSILON));
            if in_band {
                continue;
            }
            let a = gbt_forward_assignment(&p, &ens, &x).unwrap();
            let report = check_feasibility(&p, &a);
            assert!(
                report.max_violation <= 1e-12,
                "seed {seed}: {:?}",
                report.violated(1e-12)
            );
        }
    }
}

#[test]
fn objective_spec_parsing() {
    let s = ObjectiveSpec::parse(ObjectiveSense::Maximize, "2*y[0] + 3*y[1]").unwrap();
    assert_eq!(s.terms, vec![("y[0]".into(), 2.0), ("y[1]".into(), 3.0)]);
    let s = ObjectiveSpec::parse(ObjectiveSense::Maximize, "y[1]-y[0]").unwrap();
    assert_eq!(s.terms, vec![("y[1]".into(), 1.0), ("y[0]".into(), -1.0)]);
    assert_eq!(s.to_string(), "maximize y[1] - y[0]");
    let s = ObjectiveSpec::parse(ObjectiveSense::Minimize, "-1e-1*x[0] + 2.5").unwrap();
    assert_eq!(s.terms, vec![("x[0]".into(), -0.1)]);
    assert_eq!(s.constant, 2.5);
    assert!(ObjectiveSpec::parse(ObjectiveSense::Minimize, "").is_err());
    assert!(ObjectiveSpec::parse(ObjectiveSense::Minimize, "y[0] +").is_err());
    assert!(ObjectiveSpec::parse(ObjectiveSense::Minimize, "foo").is_err());

    let id = net(
        vec![dense(vec![vec![1.0]], vec![0.0], Activation::Linear)],
        &[(-1.0, 1.0)],
    );
    let p = formulate(&id, FormulationKind::ReluBigM).unwrap();
    assert_eq!(
        link_objective(p.clone(), &max_y(3)).unwrap_err(),
        FormulationError::UnknownName("y[3]".into())
    );
    assert!(link_objective(p.clone(), &ObjectiveSpec::single(ObjectiveSense::Maximize, "z[0][0]")).is_err());
    let linked = link_objective(p, &max_y(0)).unwrap();
    let r = solve(&linked, &SolveOptions::default()).unwrap();
    assert_eq!(r.objective, Some(1.0));
    assert_eq!(r.value(linked.input_vars()[0]), Some(1.0));
}

#[test]
fn output_difference_matches_oracle() {
    for seed in 0..20 {
        let mut rng = gen::rng(4000 + seed);
        let spec = NetworkSpec {
            outputs: (2, 3),
            ..NetworkSpec::relu()
        };
        let n = gen::random_network(&mut rng, &spec);
        let p = formulate(&n, FormulationKind::ReluBigM).unwrap();
        let got = optimum(p, &ObjectiveSpec::parse(ObjectiveSense::Maximize, "y[1]-y[0]").unwrap());
        let mut coefs = vec![0.0; n.output_size()];
        coefs[0] = -1.0;
        coefs[1] = 1.0;
        let expected = relu_pattern_oracle(&n, &OutputObjective::maximize(coefs))
            .unwrap()
            .value;
        assert!((got - expected).abs() <= 1e-6, "seed {seed}");
    }
}

fn image_net() -> NetworkDefinition {
    // 2x2 "image", three classes
    net(
        vec![
            dense(
                vec![
                    vec![0.8, -0.5, 0.3, 0.1],
                    vec![-0.4, 0.9, -0.2, 0.6],
                    vec![0.5, 0.5, -0.7, -0.3],
                ],
                vec![0.05, -0.1, 0.0],
                Activation::Relu,
            ),
            dense(
                vec![vec![1.0, -0.5, 0.4], vec![-0.6, 1.1, 0.2], vec![0.3, 0.2, -0.9]],
                vec![0.0, 0.1, -0.05],
                Activation::Linear,
            ),
        ],
        &[(0.0, 1.0); 4],
    )
}

#[test]
fn adversarial_examples() {
    let n = image_net();
    let x0 = [0.2, 0.7, 0.4, 0.9];
    let y0 = n.forward(&x0).unwrap();
    let p = adversarial_problem(&n, &x0, 0, 1, 0.0).unwrap();
    assert_eq!(p.counts().binaries, 0);
    let v = solve(&p, &SolveOptions::default()).unwrap().objective.unwrap();
    assert!((v - (y0[1] - y0[0])).abs() <= 1e-9);

    for r in [0.1, 0.3] {
        let p = adversarial_problem(&n, &x0, 0, 2, r).unwrap();
        let got = solve(&p, &SolveOptions::default()).unwrap().objective.unwrap();
        let boxed: Vec<_> = x0
            .iter()
            .map(|v| Interval::new((v - r).max(0.0), (v + r).min(1.0)))
            .collect();
        let local = n.with_input_bounds(boxed).unwrap();
        let expected = relu_pattern_oracle(&local, &OutputObjective::maximize(vec![-1.0, 0.0, 1.0]))
            .unwrap()
            .value;
        assert!((got - expected).abs() <= 1e-6);
    }

    let whole = optimum(
        formulate(&n, FormulationKind::ReluBigM).unwrap(),
        &ObjectiveSpec::margin(2, 0),
    );
    let big = adversarial_problem(&n, &x0, 0, 2, 5.0).unwrap();
    assert_eq!(solve(&big, &SolveOptions::default()).unwrap().objective.unwrap(), whole);

    assert_eq!(
        adversarial_problem(&n, &x0, 1, 1, 0.1).unwrap_err(),
        FormulationError::SameLabel(1)
    );
    assert!(matches!(
        adversarial_problem(&n, &x0, 0, 3, 0.1),
        Err(FormulationError::LabelOutOfRange { label: 3, .. })
    ));
    assert!(adversarial_problem(&n, &x0, 0, 1, -0.1).is_err());
    assert!(adversarial_problem(&n, &[2.0, 0.0, 0.0, 0.0], 0, 1, 0.1).is_err());
}

#[test]
fn kind_names_round_trip() {
    for kind in FormulationKind::network_kinds(3)
        .into_iter()
        .chain([FormulationKind::GbtBigM])
    {
        assert_eq!(FormulationKind::from_cli(kind.cli_name(), 3), Some(kind));
    }
    assert_eq!("partition:4".parse(), Ok(FormulationKind::ReluPartition(4)));
    assert!("lstm".parse::<FormulationKind>().is_err());
    assert_eq!(FormulationKind::ReluPartition(2).to_string(), "ReluPartition(2)");
    let _ = Expr::constant(0.0);
}
