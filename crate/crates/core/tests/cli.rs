use std::fs;
use std::path::Path;

use collapsar::cli::svg::polylines;
use collapsar::cli::{run_cli, MANIFEST_FILE};

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["collapsar".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out-dir".into());
    argv.push(dir.display().to_string());
    run_cli(argv)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn last_row(csv: &str) -> Vec<String> {
    csv.lines().last().unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn constraints_without_flags_lists_seven_rows() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["constraints"]), 0);
    let csv = read(dir.path(), "constraints.csv");
    assert_eq!(csv.lines().next().unwrap(), "name,tau_m_s,tau_E_s,r,kappa_bound,reference_r");
    assert_eq!(csv.lines().count(), 8);
    let neutron = csv.lines().find(|l| l.starts_with("Neutron")).unwrap();
    let r: f64 = neutron.split(',').nth(3).unwrap().parse().unwrap();
    assert!((r / 1.1739e10 - 1.0).abs() < 1e-4, "{r}");

    let json: serde_json::Value = serde_json::from_str(&read(dir.path(), "constraints.json")).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for row in rows {
        for key in ["name", "tau_m_s", "tau_E_s", "r", "kappa_bound"] {
            assert!(row.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn collapse_example_converges_to_q() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["collapse", "--g", "1", "--q", "1", "--p0-re", "0.1", "--p0-im", "0", "--t-max", "10"];
    assert_eq!(run(dir.path(), &args), 0);
    let csv = read(dir.path(), "trajectory.csv");
    assert_eq!(csv.lines().next().unwrap(), "t,re_p,im_p,branch_sign,event");
    let last = last_row(&csv);
    let t: f64 = last[0].parse().unwrap();
    let re: f64 = last[1].parse().unwrap();
    let im: f64 = last[2].parse().unwrap();
    assert_eq!(t, 10.0);
    assert!(((re - 1.0).powi(2) + im * im).sqrt() < 1e-6, "{re} {im}");
    assert!(csv.lines().any(|l| l.ends_with(",converged")));

    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert_eq!(summary["outcome"], "plus");
    for name in ["p_t.svg", "psi_abs.svg", "collapsing_potential.svg", "collapsing_force.svg", "psi_snapshots.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn symmetric_collapse_records_the_pole() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(dir.path(), &["collapse", "--p0-re", "0", "--p0-im", "0.5", "--method", "analytic", "--format", "csv"]),
        0
    );
    let csv = read(dir.path(), "trajectory.csv");
    let last = last_row(&csv);
    let t: f64 = last[0].parse().unwrap();
    assert!((t - 0.5 * 5f64.ln()).abs() < 1e-8);
    assert_eq!(last[4], "singularity");
}

#[test]
fn potential_plot_has_minima_at_plus_minus_q() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["collapse", "--q", "1.7", "--format", "svg"]), 0);
    let lines = polylines(&read(dir.path(), "collapsing_potential.svg"));
    assert_eq!(lines.len(), 1);
    let pts = &lines[0];
    let n = pts.len();
    // pixel y grows downward, so minima of V are maxima of y
    let deepest = |range: std::ops::Range<usize>| {
        range.max_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1)).unwrap()
    };
    let (left, right) = (deepest(0..n / 2), deepest(n / 2..n));
    let p_of = |i: usize| -2.0 + 4.0 * i as f64 / (n - 1) as f64;
    let spacing = 4.0 / (n - 1) as f64;
    assert!((p_of(left) + 1.0).abs() <= spacing, "{}", p_of(left));
    assert!((p_of(right) - 1.0).abs() <= spacing, "{}", p_of(right));
}

#[test]
fn born_summary_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["born", "--trials", "10000", "--seed", "42"];
    assert_eq!(run(a.path(), &args), 0);
    assert_eq!(run(b.path(), &[&args[..], &["--execution", "serial"]].concat()), 0);
    assert_eq!(read(a.path(), "born_summary.json"), read(b.path(), "born_summary.json"));
    assert_eq!(read(a.path(), "born_counts.csv"), read(b.path(), "born_counts.csv"));
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["collapse", "--p0-re", "-0.3", "--p0-im", "0.2", "--t-max", "4"],
        &["born", "--trials", "500", "--seed", "9", "--distribution", "gaussian"],
        &["scaling", "--q-list", "0.5,1,2", "--delta", "0.001"],
        &["evolve-free", "--n", "128", "--t-max", "0.01"],
    ];
    for args in cases {
        assert_eq!(run(first.path(), args), 0, "{args:?}");
        let manifest = first.path().join(MANIFEST_FILE);
        let replay = [args[0], "--config", manifest.to_str().unwrap()];
        assert_eq!(run(second.path(), &replay), 0, "{args:?}");
        for entry in fs::read_dir(first.path()).unwrap() {
            let name = entry.unwrap().file_name().into_string().unwrap();
            if name == MANIFEST_FILE {
                continue;
            }
            assert_eq!(read(first.path(), &name), read(second.path(), &name), "{args:?}: {name}");
        }
    }
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "command = \"born\"\ntrials = 300\nseed = 5\n").unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&out, &["born", "--config", config.to_str().unwrap(), "--trials", "200"]), 0);
    let summary: serde_json::Value = serde_json::from_str(&read(&out, "born_summary.json")).unwrap();
    assert_eq!(summary["n_trials"], 200);
    assert_eq!(summary["seed"], 5);
    // a file written for another subcommand is refused
    assert_eq!(run(&out, &["collapse", "--config", config.to_str().unwrap()]), 1);
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["born", "--trials", "0"][..],
        &["collapse", "--g", "-1"],
        &["collapse", "--delta", "2"],
        &["scaling", "--g-list", "1,2"],
        &["combined", "--scheme", "reference"],
        &["evolve-free", "--x-min", "1", "--x-max", "0"],
        &["collapse", "--no-such-flag"],
    ] {
        assert_eq!(run(dir.path(), args), 1, "{args:?}");
    }
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(dir.path(), &["equivalence", "--cases", "narrow-gaussian", "--t-max", "0.05"]),
        2
    );
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(run_cli(["collapsar", "--help"]), 0);
}
