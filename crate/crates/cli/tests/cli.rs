use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/problems").join(format!("{name}.json"))
}

fn kinoplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinoplan")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect())
        .collect()
}

/// Column index of `name` in the header of a TSV file.
fn column(path: &Path, name: &str) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split('\t').position(|c| c == name).unwrap()
}

#[test]
fn plan_writes_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = kinoplan(&["plan", s(&problem("pendulum")), "--seed", "3", "--out", s(out), "--atlas-dump"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["trajectory.tsv", "stats.tsv", "atlas.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let stats = std::fs::read_to_string(a.join("stats.tsv")).unwrap();
    assert!(stats.starts_with("samples\tcharts\t"));
    assert!(stats.contains("\ttrue\n"));
    let atlas: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("atlas.json")).unwrap()).unwrap();
    assert!(atlas["charts"].as_array().unwrap().len() >= 2);
}

#[test]
fn planned_trajectory_replays_to_the_goal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = kinoplan(&["plan", s(&problem("pendulum")), "--out", s(out)]);
    assert_eq!(o.status.code(), Some(0));
    let traj = out.join("trajectory.tsv");

    let o = kinoplan(&["simulate", s(&problem("pendulum")), s(&traj), "--out", s(out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let series = out.join("series.tsv");
    let res = column(&series, "residual");
    let data = rows(&series);
    let last = data.last().unwrap();
    let goal = [0.0, 1.0, 0.0, 0.0];
    let dist = (1..5).map(|i| (last[i] - goal[i - 1]).powi(2)).sum::<f64>().sqrt();
    assert!(dist <= 10.0 * 0.1, "endpoint {dist} from the goal");
    assert!(data.iter().all(|r| r[res] <= 1e-8));

    let rk4_dir = out.join("rk4");
    let o = kinoplan(&["simulate", s(&problem("pendulum")), s(&traj), "--out", s(&rk4_dir), "--integrator", "rk4-ode"]);
    assert_eq!(o.status.code(), Some(0));
    let data = rows(&rk4_dir.join("series.tsv"));
    let first = data.first().unwrap()[res];
    let peak = data.iter().map(|r| r[res]).fold(0.0, f64::max);
    assert!(peak > 1e-8 && peak > 100.0 * first.max(1e-16));
}

#[test]
fn zero_action_from_equilibrium_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("rest.tsv");
    std::fs::write(&traj, "t\tq0\tq1\tqdot0\tqdot1\tu0\n0.0\t0.0\t-1.0\t0.0\t0.0\t0.0\n1.0\t0.0\t-1.0\t0.0\t0.0\t0.0\n").unwrap();
    let o = kinoplan(&["simulate", s(&problem("pendulum")), s(&traj), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let data = rows(&dir.path().join("series.tsv"));
    assert!(data.len() > 1);
    for r in &data {
        for (a, b) in r[1..5].iter().zip([0.0, -1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn malformed_problem_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(problem("pendulum")).unwrap().replace("\"beta\"", "\"bta\"");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text).unwrap();
    let o = kinoplan(&["plan", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bta"), "{err}");

    let text = std::fs::read_to_string(problem("pendulum")).unwrap().replace("\"tau_max\": 6.0", "\"tau_max\": -6.0");
    std::fs::write(&bad, text).unwrap();
    let o = kinoplan(&["plan", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tau_max"));
}

#[test]
fn iteration_cap_exits_with_partial_stats() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinoplan(&["plan", s(&problem("fivebar")), "--max-iter", "1", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let stats = std::fs::read_to_string(dir.path().join("stats.tsv")).unwrap();
    assert!(stats.lines().nth(1).unwrap().ends_with("\t1\tfalse"), "{stats}");
    assert!(!dir.path().join("trajectory.tsv").exists());
}

#[test]
fn bench_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinoplan(&["bench", s(&problem("pendulum")), "--seeds", "2", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("bench.tsv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("6.0\t1\t1\t"));

    let o = kinoplan(&["bench", s(&problem("fivebar")), "--seeds", "1-2", "--tau", "0.1,0.05", "--max-iter", "1", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let table = std::fs::read_to_string(dir.path().join("bench.tsv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().skip(1).all(|l| l.split('\t').nth(2) == Some("0")));
}
