use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TWO_PACKET: &str = "values = [10.0, 1.0]
stationary = [1.0]
probs = [[0.5, 1.0]]

[budgets]
total_slots = 2
proactive_slots = 1
deadline_slots = 1
";

const SMALL_EXPERIMENT: &str = r#"
[[scenario]]
num_users = 2
q_true = 0.7
intervals = 40
burn_in = 5
replications = 3
budgets = { slots = { total_slots = 40, proactive_slots = 36, deadline_slots = 4 } }

[[scenario]]
num_users = 2
q_true = 0.7
intervals = 40
burn_in = 5
replications = 3
policy = "MaxV"
budgets = { slots = { total_slots = 40, proactive_slots = 36, deadline_slots = 4 } }
"#;

fn predsched(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_predsched")).args(args).current_dir(cwd).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn offline_two_packet_instance() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write(dir.path(), "p.toml", TWO_PACKET);
    let out = dir.path().join("out");
    let o = predsched(&["offline", s(&problem), "--out", s(&out)], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan = json(&out.join("plan.json"));
    assert!((plan["objective"].as_f64().unwrap() - 6.0).abs() < 1e-3);
    assert!((plan["oracle_objective"].as_f64().unwrap() - 6.0).abs() < 1e-9);
    assert!(plan["oracle_gap"].as_f64().unwrap() < 1e-3);
    let log = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("iter,lambda,dual"));
    assert!(log.lines().count() > 1);
}

#[test]
fn offline_empty_packet_list() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write(
        dir.path(),
        "p.toml",
        "values = []\nstationary = [0.5, 0.5]\nprobs = [[], []]\nstates = [\"a\", \"b\"]\n[budgets]\ntotal_slots = 3\nproactive_slots = 1\ndeadline_slots = 2\n",
    );
    let o = predsched(&["offline", s(&problem), "--out", "res"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan = json(&dir.path().join("res/plan.json"));
    assert_eq!(plan["objective"].as_f64(), Some(0.0));
    assert_eq!(plan["lambda"].as_f64(), Some(0.0));
    assert_eq!(plan["states"], serde_json::json!(["a", "b"]));
}

#[test]
fn malformed_files_exit_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("broken.toml", "values = [10.0, \n"),
        ("unknown.toml", &format!("{TWO_PACKET}colour = 3\n")),
        ("ragged.toml", &TWO_PACKET.replace("[[0.5, 1.0]]", "[[0.5]]")),
        ("split.toml", &TWO_PACKET.replace("deadline_slots = 1", "deadline_slots = 2")),
        ("notstochastic.toml", &TWO_PACKET.replace("stationary = [1.0]", "stationary = [0.7]")),
    ];
    for (name, text) in cases {
        let p = write(dir.path(), name, text);
        let out = dir.path().join(format!("out-{name}"));
        let o = predsched(&["offline", s(&p), "--out", s(&out)], dir.path());
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name} produced output");
    }
    let o = predsched(&["offline", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = predsched(&["simulate", "missing.toml", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["simulate"],
        vec!["simulate", "--preset", "fig9"],
        vec!["simulate", "--preset", "fig5", "--strict"],
        vec!["knapsack-demo", "--sudden-turn", "sideways"],
        vec!["knapsack-demo", "--budget-deadline", "-5"],
    ] {
        let o = predsched(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let experiment = write(dir.path(), "e.toml", &SMALL_EXPERIMENT.replace("burn_in = 5", "burn_in = 40"));
    let o = predsched(&["simulate", s(&experiment)], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("summary.csv").exists());
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write(dir.path(), "p.toml", TWO_PACKET);
    let blocker = write(dir.path(), "blocker", "");
    let o = predsched(&["offline", s(&problem), "--out", s(&blocker.join("sub"))], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_writes_golden_headers_in_scenario_order() {
    let dir = tempfile::tempdir().unwrap();
    let experiment = write(dir.path(), "e.toml", SMALL_EXPERIMENT);
    let o = predsched(&["simulate", s(&experiment), "--seed", "1", "--out", "res", "--traces"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("res/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "policy,q,num_users,N1,mean_qoe,stddev,error_model");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("Predictive,0.7,2,36,"));
    assert!(lines[2].starts_with("MaxV,0.7,2,36,"));
    assert!(lines[1].ends_with(",none"));
    for field in lines[1].split(',').skip(4).take(2) {
        let digits = field.trim_start_matches(['-', '0', '.']).chars().filter(char::is_ascii_digit).count();
        assert!(digits <= 6, "{field}");
    }
    let conv = fs::read_to_string(dir.path().join("res/convergence.csv")).unwrap();
    assert_eq!(conv.lines().next(), Some("interval,mean,stddev,lambda"));
    assert_eq!(conv.lines().count(), 41);
    assert!(conv.lines().nth(1).unwrap().starts_with("1,"));
    assert!(!summary.contains('\r'));
    let traces = fs::read_to_string(dir.path().join("res/traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 80);
    let first: serde_json::Value = serde_json::from_str(traces.lines().next().unwrap()).unwrap();
    assert_eq!(first["scenario"], 0);
    assert!(first["proactive_sent"].as_array().unwrap().len() <= 36);
}

#[test]
fn presets_have_expected_grids() {
    let dir = tempfile::tempdir().unwrap();
    let fast = ["--replications", "1", "--intervals", "6", "--burn-in", "1", "--seed", "0"];
    let mut args = vec!["simulate", "--preset", "fig2", "--out", "fig2"];
    args.extend(fast);
    assert!(predsched(&args, dir.path()).status.success());
    let summary = fs::read_to_string(dir.path().join("fig2/summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 72);
    let policies: Vec<&str> = rows[..4].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(policies, ["Predictive", "MaxPV", "MaxP", "MaxV"]);
    assert!(rows[0].starts_with("Predictive,0.3,10,36,"));
    assert!(rows[71].starts_with("MaxV,0.8,20,36,"));

    let mut args = vec!["simulate", "--preset", "fig3", "--out", "fig3"];
    args.extend(fast);
    assert!(predsched(&args, dir.path()).status.success());
    let summary = fs::read_to_string(dir.path().join("fig3/summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|r| r.ends_with(",uniform0.1")));
}

#[test]
fn knapsack_demo_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = predsched(&["knapsack-demo", "--intervals", "200"], dir.path());
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["proactive"][0]["location"], "forward");
    assert_eq!(report["proactive"][0]["resolution"], "2K");
    for k in 1..4 {
        assert_eq!(report["proactive"][k]["resolution"], "null");
    }
    assert_eq!(report["deadline_after_turn"]["realized"], "left");
    assert_eq!(report["deadline_after_turn"]["upgrade"], "1024p");
    assert_eq!(report["even_split"]["resolution"], "1024p");

    let o = predsched(&["knapsack-demo", "--budget-proactive", "0", "--out", "k"], dir.path());
    assert!(o.status.success());
    let report = json(&dir.path().join("k/knapsack.json"));
    for k in 0..4 {
        assert_eq!(report["proactive"][k]["resolution"], "null");
    }
}
