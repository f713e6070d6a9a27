use std::path::PathBuf;
use std::process::Command;

use surrogate_cli::run;
use surrogate_core::formulations::FormulationKind;

fn model(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name);
    p.to_string_lossy().into_owned()
}

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("surrogate-compiler").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn first_value(out: &str) -> f64 {
    let line = out.lines().next().unwrap();
    line.split_whitespace().last().unwrap().parse().unwrap()
}

fn oracle_value(out: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with("value")).unwrap();
    line.split_whitespace().last().unwrap().parse().unwrap()
}

#[test]
fn stump_maximum_is_the_right_leaf() {
    let o = cli(&["solve", &model("stump.json"), "--kind", "gbt", "--sense", "max"]);
    assert_eq!(o.code, 0, "{}", o.err);
    assert_eq!(o.out.lines().next(), Some("Optimal 2.0"));
    let o = cli(&["solve", &model("stump.json"), "--kind", "gbt", "--sense", "min"]);
    assert_eq!(o.out.lines().next(), Some("Optimal 1.0"));
}

#[test]
fn help_and_version_exit_zero() {
    let o = cli(&["--help"]);
    assert_eq!(o.code, 0);
    assert!(o.out.contains("Usage"));
    let o = cli(&["--version"]);
    assert_eq!(o.code, 0);
    assert!(o.out.starts_with("surrogate-compiler "));
}

#[test]
fn usage_errors_exit_two() {
    let relu = model("relu_small.json");
    let adv = model("adversarial_net.json");
    let x0 = model("adv_input_0.json");
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["solve", &relu, "--kind", "bogus", "--sense", "max"],
        vec!["solve", &relu, "--kind", "bigm"],
        vec![
            "solve",
            &relu,
            "--kind",
            "bigm",
            "--sense",
            "max",
            "--objective",
            "y[7]",
        ],
        vec!["solve", &relu, "--kind", "bigm", "--sense", "max", "--objective", "2*"],
        vec!["formulate", &relu, "--kind", "partition", "--partitions", "0"],
        vec![
            "adversarial",
            &adv,
            "--input",
            &x0,
            "--true",
            "0",
            "--target",
            "0",
            "--radius",
            "0.1",
        ],
        vec![
            "adversarial",
            &adv,
            "--input",
            &x0,
            "--true",
            "0",
            "--target",
            "9",
            "--radius",
            "0.1",
        ],
        vec![
            "adversarial",
            &adv,
            "--input",
            &x0,
            "--true",
            "0",
            "--target",
            "1",
            "--radius",
            "-1",
        ],
        vec!["oracle", &relu, "--sense", "max", "--objective", "x[0]"],
    ];
    for args in cases {
        let o = cli(&args);
        assert_eq!(o.code, 2, "{args:?}: {}", o.err);
        assert!(o.err.contains("error[usage]:"), "{args:?}: {}", o.err);
    }
}

#[test]
fn parse_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"layers\": [").unwrap();
    let bad = bad.to_string_lossy().into_owned();
    let o = cli(&["inspect", &bad]);
    assert_eq!(o.code, 3, "{}", o.err);
    assert!(o.err.starts_with("error[parse]:"));

    let missing = dir.path().join("missing.json").to_string_lossy().into_owned();
    let o = cli(&["inspect", &missing]);
    assert_eq!(o.code, 1);
    assert!(o.err.starts_with("error[io]:"));

    let not_array = dir.path().join("x.json");
    std::fs::write(&not_array, "{\"x\": 1}").unwrap();
    let o = cli(&[
        "adversarial",
        &model("adversarial_net.json"),
        "--input",
        &not_array.to_string_lossy(),
        "--true",
        "0",
        "--target",
        "1",
        "--radius",
        "0.1",
    ]);
    assert_eq!(o.code, 3, "{}", o.err);
}

#[test]
fn formulation_errors_exit_four() {
    let o = cli(&["formulate", &model("conv_relu.json"), "--kind", "partition"]);
    assert_eq!(o.code, 4);
    assert!(o.err.contains("error[formulation]:"), "{}", o.err);
    let o = cli(&["formulate", &model("relu_small.json"), "--kind", "fullspace"]);
    assert_eq!(o.code, 4);
    let o = cli(&["formulate", &model("tanh_net.json"), "--kind", "bigm"]);
    assert_eq!(o.code, 4);
    let o = cli(&["formulate", &model("gbt_small.json"), "--kind", "bigm"]);
    assert_eq!(o.code, 4);
    let o = cli(&["formulate", &model("relu_small.json"), "--kind", "gbt"]);
    assert_eq!(o.code, 4);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.lp").to_string_lossy().into_owned();
    let o = cli(&[
        "emit",
        &model("tanh_net.json"),
        "--kind",
        "fullspace",
        "--format",
        "lp",
        "--out",
        &out,
    ]);
    assert_eq!(o.code, 4);
    assert!(o.err.contains("nlp"), "{}", o.err);
}

#[test]
fn solver_errors_exit_five() {
    let o = cli(&[
        "solve",
        &model("tanh_net.json"),
        "--kind",
        "fullspace",
        "--sense",
        "max",
    ]);
    assert_eq!(o.code, 5);
    assert!(o.err.contains("error[solver]:"), "{}", o.err);
}

#[test]
fn verify_passes_on_every_compatible_kind() {
    for (m, kinds) in [
        ("relu_small.json", &["bigm", "complementarity", "partition"][..]),
        ("scaled_relu.json", &["bigm", "complementarity", "partition"][..]),
        ("conv_relu.json", &["bigm", "complementarity"][..]),
        ("tanh_net.json", &["fullspace", "reducedspace"][..]),
        ("gbt_small.json", &["gbt"][..]),
        ("stump.json", &["gbt"][..]),
    ] {
        for k in kinds {
            let o = cli(&["verify", &model(m), "--kind", k, "--samples", "50"]);
            assert_eq!(o.code, 0, "{m} {k}: {}{}", o.out, o.err);
            assert!(o.out.ends_with("PASS\n"));
        }
    }
}

#[test]
fn negative_tolerance_is_rejected() {
    let o = cli(&["verify", &model("relu_small.json"), "--kind", "bigm", "--tol", "-1"]);
    assert_eq!(o.code, 2);
}

#[test]
fn solve_matches_oracle_on_piecewise_linear_models() {
    for m in [
        "relu_small.json",
        "scaled_relu.json",
        "conv_relu.json",
        "adversarial_net.json",
    ] {
        for (sense, objective) in [("max", "y[0]"), ("min", "y[0]"), ("max", "-y[0] + 3")] {
            let o = cli(&["oracle", &model(m), "--sense", sense, "--objective", objective]);
            assert_eq!(o.code, 0, "{m}: {}", o.err);
            let want = oracle_value(&o.out);
            for kind in ["bigm", "complementarity"] {
                let s = cli(&[
                    "solve",
                    &model(m),
                    "--kind",
                    kind,
                    "--sense",
                    sense,
                    "--objective",
                    objective,
                ]);
                assert_eq!(s.code, 0, "{m} {kind}: {}", s.err);
                let got = first_value(&s.out);
                assert!(
                    (got - want).abs() <= 1e-6,
                    "{m} {kind} {sense} {objective}: {got} vs {want}"
                );
            }
        }
    }
    for m in ["gbt_small.json", "stump.json"] {
        for (sense, objective) in [("max", "y[0]"), ("min", "y[0]"), ("min", "-2*y[0] + 1")] {
            let want = oracle_value(&cli(&["oracle", &model(m), "--sense", sense, "--objective", objective]).out);
            let s = cli(&[
                "solve",
                &model(m),
                "--kind",
                "gbt",
                "--sense",
                sense,
                "--objective",
                objective,
            ]);
            assert!((first_value(&s.out) - want).abs() <= 1e-9, "{m} {sense} {objective}");
        }
    }
}

#[test]
fn switching_only_the_kind_flag_changes_the_formulation() {
    let relu = model("relu_small.json");
    let mut values = Vec::new();
    for kind in FormulationKind::network_kinds(2).iter().filter(|k| k.is_relu()) {
        let o = cli(&["solve", &relu, "--kind", kind.cli_name(), "--sense", "max"]);
        assert_eq!(o.code, 0, "{kind}: {}", o.err);
        values.push(first_value(&o.out));
    }
    assert!(values.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-6), "{values:?}");
    for p in ["1", "3"] {
        let o = cli(&[
            "solve",
            &relu,
            "--kind",
            "partition",
            "--partitions",
            p,
            "--sense",
            "max",
        ]);
        assert!((first_value(&o.out) - values[0]).abs() <= 1e-6);
    }
}

#[test]
fn emit_writes_every_format_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    for (m, kind, formats) in [
        ("relu_small.json", "bigm", &["lp", "mps", "nlp"][..]),
        ("tanh_net.json", "fullspace", &["nlp"][..]),
        ("gbt_small.json", "gbt", &["lp", "mps", "nlp"][..]),
    ] {
        for f in formats {
            let a = dir.path().join(format!("a.{f}"));
            let b = dir.path().join(format!("b.{f}"));
            for path in [&a, &b] {
                let path = path.to_string_lossy().into_owned();
                let o = cli(&[
                    "emit",
                    &model(m),
                    "--kind",
                    kind,
                    "--format",
                    f,
                    "--out",
                    &path,
                    "--sense",
                    "max",
                ]);
                assert_eq!(o.code, 0, "{m} {f}: {}", o.err);
                assert_eq!(o.out, format!("wrote {path}\n"));
            }
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }
}

#[test]
fn adversarial_reports_sat_or_unsat() {
    let adv = model("adversarial_net.json");
    let x0 = model("adv_input_0.json");
    let o = cli(&[
        "adversarial",
        &adv,
        "--input",
        &x0,
        "--true",
        "0",
        "--target",
        "1",
        "--radius",
        "0",
    ]);
    assert_eq!(o.code, 0, "{}", o.err);
    assert!(o.out.starts_with("UNSAT margin "), "{}", o.out);
    let o = cli(&[
        "adversarial",
        &adv,
        "--input",
        &x0,
        "--true",
        "0",
        "--target",
        "1",
        "--radius",
        "1",
    ]);
    assert!(o.out.starts_with("SAT margin "), "{}", o.out);
}

#[test]
fn json_reports_parse() {
    let relu = model("relu_small.json");
    for args in [
        vec!["inspect", &relu, "--json"],
        vec!["bounds", &relu, "--json"],
        vec!["formulate", &relu, "--kind", "bigm", "--json"],
        vec!["solve", &relu, "--kind", "bigm", "--sense", "max", "--json"],
        vec!["verify", &relu, "--kind", "bigm", "--json"],
        vec!["oracle", &relu, "--sense", "max", "--json"],
    ] {
        let o = cli(&args);
        assert_eq!(o.code, 0, "{args:?}");
        let v: serde_json::Value = serde_json::from_str(&o.out).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        assert!(v.is_object());
    }
}

#[test]
fn node_limit_comes_from_the_environment() {
    let exe = env!("CARGO_BIN_EXE_surrogate-compiler");
    let run = |limit: &str| {
        Command::new(exe)
            .args(["solve", &model("relu_small.json"), "--kind", "bigm", "--sense", "max"])
            .env("SURROGATE_COMPILER_NODE_LIMIT", limit)
            .output()
            .unwrap()
    };
    let bad = run("lots");
    assert_eq!(bad.status.code(), Some(2));
    let tight = run("1");
    assert_eq!(tight.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&tight.stdout).starts_with("NodeLimit"));
    let fine = run("1000");
    assert_eq!(fine.status.code(), Some(0));
}
