use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use imbal::cli::{run, EXIT_INPUT, EXIT_OK, EXIT_RUNTIME};
use imbal::io::load_demand_csv;
use imbal::lpformat::parse_lp;
use imbal_core::milp::Relation;
use imbal_core::simulator::{generate_synthetic_fleet, standard_start, ClusterSpec};

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn imbal(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("imbal").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// A one-day campaign on a 16-customer fleet, fast enough for every test.
const SMALL: &[&str] = &[
    "--set", "fleet.clusters=10:44:8,6:44:25",
    "--set", "fleet.days=5",
    "--set", "campaign.warmup_days=4",
    "--set", "svr.train_days=3",
    "--set", "campaign.horizon_days=1",
    "--set", "scenarios.count=5",
    "--set", "svr.c=10",
    "--set", "svr.gamma_scale=0.1",
    "--set", "svr.epsilon=0.01",
    "--set", "mcmc.iterations=20000",
];

fn simulate(out: &Path, mode: &str, extra: &[&str]) -> Outcome {
    let out = out.to_string_lossy().into_owned();
    let mut args = vec!["simulate", "--mode", mode, "--out", &out, "--seed", "3"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    imbal(&args)
}

fn read_json(path: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn datagen_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let r = imbal(&["datagen", "--out", &out, "--set", "fleet.clusters=20:44:8", "--set", "fleet.days=34"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let text = fs::read_to_string(dir.path().join("demand.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 20 * 34 * 48);
    assert!(r.stdout.contains("20 customers"));
}

#[test]
fn datagen_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let r = imbal(&["datagen", "--out", &out, "--seed", "11", "--set", "fleet.clusters=3:30:5,2:50:20", "--set", "fleet.days=3"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let loaded = load_demand_csv(&dir.path().join("demand.csv")).unwrap();
    let clusters = [
        ClusterSpec {
            count: 3,
            base_scale_kwh: 30.0,
            noise_dsd_kwh: 5.0,
        },
        ClusterSpec {
            count: 2,
            base_scale_kwh: 50.0,
            noise_dsd_kwh: 20.0,
        },
    ];
    let direct = generate_synthetic_fleet(&clusters, 3, standard_start(), 11).unwrap();
    assert_eq!(loaded, direct);
}

#[test]
fn datagen_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    for (d, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = d.path().to_string_lossy().into_owned();
        assert_eq!(imbal(&["datagen", "--out", &out, "--seed", seed, "--set", "fleet.days=2"]).code, EXIT_OK);
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("demand.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn datagen_rejects_bad_cluster_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let r = imbal(&["datagen", "--out", &out, "--set", "fleet.clusters=0:44:8"]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("fleet.clusters"), "{}", r.stderr);
}

#[test]
fn form_groups_finds_two_planted_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    assert_eq!(imbal(&["datagen", "--out", &out, "--seed", "2"]).code, EXIT_OK);
    let csv = dir.path().join("demand.csv").to_string_lossy().into_owned();
    let r = imbal(&["form-groups", "--demand", &csv, "--out", &out, "--seed", "2"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let groups = read_json(dir.path().join("groups.json"));
    let groups = groups.as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0]["start"], 1);
    assert_eq!(groups[0]["end"], 57);
    assert_eq!(groups[1]["customer_ids"].as_array().unwrap().len(), 20);
    assert!(groups[0]["capacity_bound_kwh"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("posterior_1_77.csv").exists());
}

#[test]
fn form_groups_single_customer() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    let mut text = String::from("timestamp,customer_id,kwh\n");
    for i in 0..96 {
        text.push_str(&format!("2013-01-{:02}T{:02}:{:02}:00,solo,{}\n", 1 + i / 48, (i % 48) / 2, (i % 2) * 30, 1 + i % 5));
    }
    fs::write(&csv, text).unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let r = imbal(&["form-groups", "--demand", &csv.to_string_lossy(), "--out", &out]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let groups = read_json(dir.path().join("groups.json"));
    assert_eq!(groups.as_array().unwrap().len(), 1);
    assert_eq!(groups[0]["customer_ids"][0], "solo");
}

#[test]
fn form_groups_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let r = imbal(&["form-groups", "--demand", "/nonexistent/demand.csv", "--out", &out]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("/nonexistent/demand.csv"));
}

#[test]
fn form_groups_reports_csv_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "timestamp,customer_id,kwh\n2013-01-01T00:00:00,a,1\n2013-01-01T00:30:00,a,-4\n").unwrap();
    let r = imbal(&["form-groups", "--demand", &csv.to_string_lossy()]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("bad.csv:3"), "{}", r.stderr);
}

#[test]
fn nobattery_with_perfect_contract_costs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "nobattery", &["--set", "campaign.contract_error=0"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let s = read_json(dir.path().join("summary_nobattery.json"));
    assert_eq!(s["total_cost"], 0.0);
    assert_eq!(s["periods"], 48);
    let trace = fs::read_to_string(dir.path().join("trace_nobattery.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "period,sp,dm,pred,p,soc,im,ic,cum_ic");
    assert_eq!(trace.lines().count(), 49);
}

#[test]
fn sweep_writes_one_row_per_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "sweep", &["--set", "sweep.capacities_kwh=0,80,160,320"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0], "capacity_kwh,pct_of_basic");
    assert_eq!(rows[1], "0,100");
    let pct: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(pct[3] < pct[0]);
    assert_eq!(r.stdout.lines().count(), 4);
}

#[test]
fn sswcd_and_deterministic_write_traces_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["sswcd", "deterministic"] {
        let r = simulate(dir.path(), mode, &[]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        assert!(r.stdout.starts_with(mode), "{}", r.stdout);
    }
    let s = read_json(dir.path().join("summary_sswcd.json"));
    let d = read_json(dir.path().join("summary_deterministic.json"));
    assert_eq!(s["basic_cost"], d["basic_cost"]);
    assert!(s["total_cost"].as_f64().unwrap() < s["basic_cost"].as_f64().unwrap());
    assert!(s["runtime_s"].is_null() && d["runtime_s"].is_null());
    let errors = fs::read_to_string(dir.path().join("prediction_errors.csv")).unwrap();
    assert_eq!(errors.lines().next().unwrap(), "period,lag,actual,predicted,error");
    let scen = fs::read_to_string(dir.path().join("scenarios_192.csv")).unwrap();
    assert_eq!(scen.lines().count(), 1 + 5 * 8);
}

#[test]
fn timing_adds_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "nobattery", &["--set", "output.timing=true"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let s = read_json(dir.path().join("summary_nobattery.json"));
    assert!(s["runtime_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(simulate(d.path(), "sswcd", &[]).code, EXIT_OK);
    }
    let (ca, cb) = (dir_contents(a.path()), dir_contents(b.path()));
    assert_eq!(ca.keys().collect::<Vec<_>>(), cb.keys().collect::<Vec<_>>());
    assert_eq!(ca, cb);
}

#[test]
fn solver_failure_exits_3_with_a_parseable_dump() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(
        dir.path(),
        "sswcd",
        &["--set", "scheduler.relax_segments=false", "--set", "scheduler.node_limit=1"],
    );
    assert_eq!(r.code, EXIT_RUNTIME, "{}", r.stderr);
    let dump = dir.path().join("failed_window_192.lp");
    assert!(r.stderr.contains(&dump.to_string_lossy().into_owned()), "{}", r.stderr);
    let model = parse_lp(&fs::read_to_string(&dump).unwrap()).unwrap();
    assert!(!model.problem.binaries().is_empty());
}

#[test]
fn group_index_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "sswcd", &["--set", "groups.index=7"]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("groups.index"));
}

#[test]
fn short_demand_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "sswcd", &["--set", "fleet.days=4"]);
    assert_eq!(r.code, EXIT_INPUT, "{}", r.stderr);
}

/// Best knapsack value by enumerating every subset of the parsed items.
fn knapsack_oracle(text: &str) -> f64 {
    let m = parse_lp(text).unwrap();
    let lp = &m.problem.lp;
    let row = &lp.constraints()[0];
    assert_eq!(row.relation, Relation::Le);
    let n = lp.num_vars();
    let mut weight = vec![0.0; n];
    for &(j, w) in &row.coeffs {
        weight[j] = w;
    }
    (0u32..1 << n)
        .filter(|mask| (0..n).filter(|j| mask >> j & 1 == 1).map(|j| weight[j]).sum::<f64>() <= row.rhs)
        .map(|mask| (0..n).filter(|j| mask >> j & 1 == 1).map(|j| -lp.objective()[j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn solve_knapsack_matches_enumeration() {
    let path = fixture("knapsack.lp");
    let best = knapsack_oracle(&fs::read_to_string(&path).unwrap());
    assert_eq!(best, 36.0);
    let r = imbal(&["solve", &path]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let mut lines = r.stdout.lines();
    assert_eq!(lines.next(), Some("status: optimal"));
    let obj: f64 = lines.next().unwrap().strip_prefix("objective: ").unwrap().parse().unwrap();
    assert!((obj - best).abs() < 1e-9, "{obj}");
    assert!(r.stdout.contains("\na = "));
}

#[test]
fn solve_infeasible_fixture() {
    let r = imbal(&["solve", &fixture("infeasible.lp")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(r.stdout.trim(), "status: infeasible");
}

#[test]
fn solve_empty_and_missing_files() {
    let r = imbal(&["solve", &fixture("empty.lp")]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("missing objective"));
    assert_eq!(imbal(&["solve", "/nonexistent.lp"]).code, EXIT_INPUT);
}

#[test]
fn config_file_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "seed = 1\nscenarios.count = 0\n").unwrap();
    let r = imbal(&["datagen", "--config", &cfg.to_string_lossy()]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("run.cfg:2") && r.stderr.contains("scenarios.count"), "{}", r.stderr);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "fleet.clusters = 4:30:5\nfleet.days = 9\n").unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let r = imbal(&["datagen", "--config", &cfg.to_string_lossy(), "--set", "fleet.days=2", "--out", &out]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let text = fs::read_to_string(dir.path().join("demand.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 2 * 48);
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(imbal(&["frobnicate"]).code, EXIT_INPUT);
    assert_eq!(imbal(&["simulate", "--mode", "fast"]).code, EXIT_INPUT);
    let r = imbal(&["--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.contains("form-groups"));
}
