use std::path::Path;
use std::process::{Command, Output};

fn swarmlift(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swarmlift"));
    cmd.args(args).env_remove("SWARMLIFT_OUT");
    if let Some(dir) = out_env {
        cmd.env("SWARMLIFT_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn simulate_writes_trace_metrics_and_resolved_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().display().to_string();
    let o = swarmlift(
        &["simulate", "--preset", "fig6-unplug40s", "--seed", "7", "--out", &out],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("fig6-unplug40s/dissipative/seed-7");
    for f in ["header.json", "trace.ndjson", "metrics.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let header: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("header.json")).unwrap()).unwrap();
    assert_eq!(header["spec"]["seed"], 7);
    assert_eq!(header["events"].as_array().unwrap().len(), 1);
}

#[test]
fn seed_fixes_trace_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = dir.path().display().to_string();
        let o = swarmlift(
            &["simulate", "--preset", "five-robot-5kg", "--seed", "3", "--out", &out],
            None,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &Path| std::fs::read(d.join("five-robot-5kg/dissipative/seed-3/trace.ndjson")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn output_root_comes_from_env_unless_flag_given() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let cfg = write(env_dir.path(), "short.toml", "name = \"short\"\nduration = 0.5\n");
    let o = swarmlift(&["simulate", "--config", &cfg], Some(env_dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_dir.path().join("short/dissipative/seed-0/trace.ndjson").is_file());

    let flag = flag_dir.path().display().to_string();
    let o = swarmlift(&["simulate", "--config", &cfg, "--out", &flag], Some(env_dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(flag_dir.path().join("short/dissipative/seed-0/trace.ndjson").is_file());
}

#[test]
fn missing_config_exits_2_naming_the_file() {
    let o = swarmlift(&["simulate", "--config", "/no/such/scenario.toml"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/scenario.toml"), "{}", stderr(&o));
}

#[test]
fn blowup_exits_3_naming_the_tick() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "stiff.toml", "duration = 1.0\n[cable]\nstiffness = 1e12\n");
    let out = tmp.path().display().to_string();
    let o = swarmlift(&["simulate", "--config", &cfg, "--out", &out], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("tick"), "{}", stderr(&o));
}

#[test]
fn validate_echoes_resolved_spec_with_units() {
    let o = swarmlift(&["validate", "--preset", "converge-4"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("name = \"converge-4\""));
    assert!(text.contains("perception_range"));
    assert!(text.contains("# team.thrust_limit"));
}

#[test]
fn validate_lists_every_violated_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "duration = -1.0\n[team]\nmass = -2.0\n");
    let o = swarmlift(&["validate", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("team.mass"), "{err}");
    assert!(err.contains("duration"), "{err}");
}

#[test]
fn unknown_controller_lists_valid_names() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ctl.toml", "controller = \"pid\"\n");
    let o = swarmlift(&["validate", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["dissipative", "formation", "leader"] {
        assert!(err.contains(name), "{err}");
    }
    let o = swarmlift(&["simulate", "--preset", "converge-4", "--controller", "pid"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("formation"));
}

#[test]
fn presets_prints_machine_readable_list() {
    let o = swarmlift(&["presets"], None);
    assert!(o.status.success());
    let list: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let names: Vec<&str> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"fig6-unplug40s"));
    assert!(names.contains(&"fig5b-capability"));
}

#[test]
fn bench_single_column_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "quick.toml",
        "name = \"quick\"\nduration = 2.0\n[metrics]\nwarmup = 0.5\n",
    );
    let matrix = write(
        tmp.path(),
        "matrix.toml",
        "scenarios = [\"quick.toml\"]\ncontrollers = [\"dissipative\"]\nrepeats = 1\n",
    );
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run).display().to_string();
        let o = swarmlift(&["bench", "--config", &matrix, "--out", &out, "--workers", "2"], None);
        assert!(o.status.success(), "{}", stderr(&o));
        let bench = tmp.path().join(run).join("bench");
        let runs = std::fs::read_to_string(bench.join("runs.csv")).unwrap();
        assert_eq!(runs.lines().count(), 2);
        assert!(runs.starts_with("scenario,controller,seed,ok,median_error"));
        tables.push((
            std::fs::read(bench.join("cells.csv")).unwrap(),
            stdout(&o).lines().next().unwrap().to_string(),
        ));
    }
    assert_eq!(tables[0], tables[1]);
    assert!(tables[0].1.contains("dissipative"));
    assert!(!tables[0].1.contains("leader"));
}

#[test]
fn bench_failures_warn_unless_strict() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "stiff.toml",
        "name = \"stiff\"\nduration = 0.5\n[cable]\nstiffness = 1e12\n",
    );
    let matrix = write(tmp.path(), "m.toml", "scenarios = [\"stiff.toml\"]\nrepeats = 2\n");
    let out = tmp.path().join("o").display().to_string();
    let o = swarmlift(&["bench", "--config", &matrix, "--out", &out, "--traces"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("6 of 6 runs failed"), "{}", stderr(&o));
    let o = swarmlift(&["bench", "--config", &matrix, "--out", &out, "--strict"], None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bench_traces_flag_writes_per_run_directories() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "quick.toml",
        "name = \"quick\"\nduration = 1.0\n[metrics]\nwarmup = 0.2\n",
    );
    let matrix = write(
        tmp.path(),
        "m.toml",
        "scenarios = [\"quick.toml\"]\ncontrollers = [\"leader\"]\nrepeats = 2\nseed_base = 5\n",
    );
    let out = tmp.path().join("o").display().to_string();
    let o = swarmlift(&["bench", "--config", &matrix, "--out", &out, "--traces"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = tmp.path().join("o/bench/traces/quick/leader/seed-6");
    assert!(run.join("trace.ndjson").is_file());
    assert!(run.join("metrics.json").is_file());
}
