use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aggglm::{AggregateSummary, FamilyKind, GlmFamily};

fn aggglm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggglm"))
        .args(args)
        .env_remove("AGGGLM_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = aggglm(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn read_column(file: &str, column: usize) -> Vec<f64> {
    fs::read_to_string(file)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(column).unwrap().parse().unwrap())
        .collect()
}

fn simulated(dir: &Path, family: &str) -> String {
    let data = path(dir, "d.csv");
    ok(&[
        "simulate", "--family", family, "--n", "150", "--d", "3", "--seed", "3", "--out", &data,
    ]);
    data
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(aggglm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(aggglm(&["fit", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(
        aggglm(&["simulate", "--family", "gamma", "--out", "x"])
            .status
            .code(),
        Some(2)
    );
    let out = aggglm(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn validation_errors_exit_1_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "bad.csv");
    fs::write(&data, "a,b,y\n1,2,3\n4,oops,6\n").unwrap();
    let out = aggglm(&[
        "aggregate",
        "--data",
        &data,
        "--target",
        "y",
        "--bins",
        "2",
        "--out",
        &path(dir.path(), "s.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 3") && msg.contains("'b'"), "{msg}");

    // Bins beyond the sample size.
    fs::write(&data, "a,y\n1,2\n3,4\n").unwrap();
    let out = aggglm(&[
        "aggregate",
        "--data",
        &data,
        "--target",
        "y",
        "--bins",
        "5",
        "--out",
        &path(dir.path(), "s.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));

    // Negative targets for a Poisson permutation test.
    fs::write(&data, "a,y\n1,-2\n3,4\n").unwrap();
    let out = aggglm(&[
        "permtest",
        "--data",
        &data,
        "--target",
        "y",
        "--family",
        "poisson",
        "--perms",
        "3",
        "--out",
        &path(dir.path(), "pt"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain"));
}

#[test]
fn aggregate_then_fit_satisfies_the_summary_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for family in ["gaussian", "poisson", "bernoulli"] {
        let data = simulated(dir.path(), family);
        let summary = path(dir.path(), "s.json");
        ok(&[
            "aggregate",
            "--data",
            &data,
            "--target",
            "y",
            "--bins",
            "5",
            "--out",
            &summary,
        ]);
        let fit = path(dir.path(), "fit");
        ok(&[
            "fit",
            "--data",
            &data,
            "--target",
            "y",
            "--summary",
            &summary,
            "--family",
            family,
            "--out",
            &fit,
        ]);

        let s: AggregateSummary<f64> =
            serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
        let mut z = read_column(&path(dir.path(), "fit/imputed.csv"), 1);
        let kind: FamilyKind = family.parse().unwrap();
        s.validate(z.len(), &GlmFamily::new(kind)).unwrap();
        z.sort_by(|a, b| a.total_cmp(b));
        for c in &s.blocks[0].constraints {
            assert_eq!(z[c.rank - 1], c.value, "{family}");
        }

        let state: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(path(dir.path(), "fit/fit_state.json")).unwrap(),
        )
        .unwrap();
        let keys: Vec<&String> = state.as_object().unwrap().keys().collect();
        assert_eq!(
            keys,
            [
                "beta",
                "converged",
                "iterations",
                "lambda",
                "loss_trajectory"
            ]
        );
        let losses: Vec<f64> = state["loss_trajectory"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{family}");
        assert_eq!(read_column(&path(dir.path(), "fit/beta.csv"), 1).len(), 3);
    }
}

#[test]
fn block_column_produces_blockwise_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "d.csv");
    fs::write(&data, "x,y,g\n1,5,A\n2,3,A\n3,1,B\n4,2,B\n5,9,B\n").unwrap();
    let summary = path(dir.path(), "s.json");
    ok(&[
        "aggregate",
        "--data",
        &data,
        "--target",
        "y",
        "--block",
        "g",
        "--bins",
        "1",
        "--drop-extremes",
        "--out",
        &summary,
    ]);
    let s: AggregateSummary<f64> =
        serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s.blocks.len(), 2);
    assert_eq!(s.blocks[0].rows, vec![0, 1]);
    assert_eq!(s.blocks[1].rows, vec![2, 3, 4]);
    // Median ranks: round up for the even block.
    assert_eq!(
        (
            s.blocks[0].constraints[0].rank,
            s.blocks[0].constraints[0].value
        ),
        (1, 3.0)
    );
    assert_eq!(
        (
            s.blocks[1].constraints[0].rank,
            s.blocks[1].constraints[0].value
        ),
        (2, 2.0)
    );

    let fit = path(dir.path(), "fit");
    ok(&[
        "fit",
        "--data",
        &data,
        "--target",
        "y",
        "--block",
        "g",
        "--summary",
        &summary,
        "--family",
        "gaussian",
        "--intercept",
        "--out",
        &fit,
    ]);
    let names: Vec<String> = fs::read_to_string(path(dir.path(), "fit/beta.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_owned())
        .collect();
    assert_eq!(names, ["intercept", "x"]);
}

#[test]
fn edges_summary_and_histogram_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path(), "poisson");
    let summary = path(dir.path(), "s.json");
    ok(&[
        "aggregate",
        "--data",
        &data,
        "--target",
        "y",
        "--edges",
        "0.5,1.5,2.5",
        "--out",
        &summary,
    ]);
    let s: AggregateSummary<f64> =
        serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(s.blocks[0]
        .constraints
        .iter()
        .all(|c| [0.5, 1.5, 2.5].contains(&c.value)));

    let fit = path(dir.path(), "fit");
    ok(&[
        "fit",
        "--data",
        &data,
        "--target",
        "y",
        "--summary",
        &summary,
        "--family",
        "poisson",
        "--out",
        &fit,
    ]);
    let hist = path(dir.path(), "h.csv");
    ok(&[
        "hist",
        "--data",
        &data,
        "--target",
        "y",
        "--imputed",
        &path(dir.path(), "fit/imputed.csv"),
        "--edges",
        "0.5,1.5,2.5",
        "--out",
        &hist,
    ]);
    let text = fs::read_to_string(&hist).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(
        rows[0],
        ["bin", "lower", "upper", "true_count", "recovered_count"]
    );
    assert_eq!(rows.len(), 1 + 4);
    let count = |r: &Vec<&str>, i: usize| r[i].parse::<usize>().unwrap();
    let total = |i| rows[1..].iter().map(|r| count(r, i)).sum::<usize>();
    assert_eq!(total(3), total(4));
    // Each pinned cumulative count c at edge e satisfies
    // #(z_hat < e) <= c <= #(z_hat <= e): values clamped onto an edge may
    // land on either side of a half-open bin boundary.
    let z = read_column(&path(dir.path(), "fit/imputed.csv"), 1);
    for c in &s.blocks[0].constraints {
        let below = z.iter().filter(|&&v| v < c.value).count();
        let at_or_below = z.iter().filter(|&&v| v <= c.value).count();
        assert!(below < c.rank && c.rank <= at_or_below, "{c:?}");
    }
}

#[test]
fn permtest_outputs_and_seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path(), "gaussian");
    let out_flag = path(dir.path(), "a");
    ok(&[
        "permtest", "--data", &data, "--target", "y", "--family", "gaussian", "--perms", "19",
        "--seed", "4", "--out", &out_flag,
    ]);
    let out_env = path(dir.path(), "b");
    let status = Command::new(env!("CARGO_BIN_EXE_aggglm"))
        .args([
            "permtest", "--data", &data, "--target", "y", "--family", "gaussian", "--perms", "19",
            "--out", &out_env,
        ])
        .env("AGGGLM_SEED", "4")
        .status()
        .unwrap();
    assert!(status.success());
    let a = fs::read(PathBuf::from(&out_flag).join("permtest.json")).unwrap();
    let b = fs::read(PathBuf::from(&out_env).join("permtest.json")).unwrap();
    assert_eq!(a, b);

    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let nulls = v["null_errors"].as_array().unwrap();
    assert_eq!(nulls.len(), 19);
    let obs = v["observed_error"].as_f64().unwrap();
    let hits = nulls
        .iter()
        .filter(|e| e.as_f64().unwrap() <= obs * (1.0 + 1e-9))
        .count();
    assert_eq!(v["p_value"].as_f64().unwrap(), (1 + hits) as f64 / 20.0);
    assert_eq!(
        read_column(&path(dir.path(), "a/null_errors.csv"), 1).len(),
        19
    );
}

#[test]
fn curve_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "cv");
    ok(&[
        "curve", "--family", "gaussian", "--n", "80", "--d", "2", "--bins", "2,5", "--folds", "4",
        "--seeds", "2", "--out", &out,
    ]);
    let curve = fs::read_to_string(path(dir.path(), "cv/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2 * 2 * 4);
    let summary = fs::read_to_string(path(dir.path(), "cv/curve_summary.csv")).unwrap();
    let labels: Vec<&str> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(labels, ["2", "5", "full"]);
    assert_eq!(
        fs::read_to_string(path(dir.path(), "cv/baseline.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 2 * 4
    );
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path(dir.path(), "cv/curve.json")).unwrap())
            .unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);

    // Sweep over an existing dataset.
    let data = simulated(dir.path(), "poisson");
    ok(&[
        "curve", "--data", &data, "--target", "y", "--family", "poisson", "--bins", "3", "--folds",
        "3", "--seeds", "1", "--out", &out,
    ]);
}

#[test]
fn simulated_dataset_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path(), "gaussian");
    let ds = aggglm::read_dataset(
        &data,
        &aggglm::DatasetOptions {
            target: Some("y".into()),
            ..Default::default()
        },
    )
    .unwrap();
    let sim = aggglm::simulate_glm::<f64>(
        &aggglm::SimulationConfig::new(FamilyKind::Gaussian, 3).with_size(150, 3),
    )
    .unwrap();
    assert_eq!(ds.x, sim.x.into_inner());
    assert_eq!(ds.target.unwrap(), sim.z);
}
