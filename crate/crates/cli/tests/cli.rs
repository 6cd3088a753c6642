use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roccet-lab"))
        .args(args)
        .env_remove("ROCCET_LAB_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "-o", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    lab(&args)
}

#[test]
fn run_writes_the_three_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run_into(&out, &["--builtin", "bw-halving", "--algo", "roccet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trace.csv", "events.json", "summary.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(csv.starts_with("# roccet-lab trace v1\n"));
    let events: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("events.json")).unwrap()).unwrap();
    assert_eq!(events["flows"][0]["algo"], "roccet");
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_roccet-lab"))
        .args(["run", "--builtin", "steady", "--set", "horizon_s=2"])
        .env("ROCCET_LAB_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("trace.csv").is_file());
}

#[test]
fn unknown_builtin_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_into(tmp.path(), &["--builtin", "no-such-thing"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("unknown scenario"), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[unknown-scenario]: "));
}

#[test]
fn invalid_input_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    for extra in [
        &["--builtin", "steady", "--set", "no_such_key=1"][..],
        &["--builtin", "steady", "--set", "buffer_bdp=0.1"],
        &["--builtin", "steady", "--set", "novalue"],
        &["--builtin", "steady", "--algo", "vegas"],
        &["--scenario", "/nonexistent/scenario.toml"],
        &[],
    ] {
        let o = run_into(tmp.path(), extra);
        assert_eq!(o.status.code(), Some(1), "{extra:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error["), "{extra:?}");
    }
}

#[test]
fn unwritable_output_is_a_runtime_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run_into(&blocker.join("sub"), &["--builtin", "steady", "--set", "horizon_s=1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[io]: "));
}

#[test]
fn override_is_echoed_in_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_into(
        tmp.path(),
        &["--builtin", "bw-halving", "--set", "roccet.alpha=0.5", "--seed", "9"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    let (_, config) = summary.split_once("[resolved config]\n").unwrap();
    let resolved: toml::Value = toml::from_str(config).unwrap();
    assert_eq!(resolved["roccet"]["alpha"].as_float(), Some(0.5));
    assert_eq!(resolved["seed"].as_integer(), Some(9));
    let csv = fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "# alpha = 0.5"));
}

#[test]
fn scenario_file_round_trips_through_the_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("a");
    let o = run_into(&first, &["--builtin", "steady", "--set", "horizon_s=5", "--algo", "roccet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(first.join("summary.txt")).unwrap();
    let (_, config) = summary.split_once("[resolved config]\n").unwrap();
    let file = tmp.path().join("resolved.toml");
    fs::write(&file, config).unwrap();
    let second = tmp.path().join("b");
    let o = run_into(&second, &["--scenario", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("trace.csv")).unwrap(),
        fs::read(second.join("trace.csv")).unwrap()
    );
}

#[test]
fn same_invocation_gives_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["--builtin", "frozen-cwnd", "--set", "horizon_s=8", "--seed", "3"];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_into(&a, &args).status.code(), Some(0));
    assert_eq!(run_into(&b, &args).status.code(), Some(0));
    for f in ["trace.csv", "events.json", "summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn report_compares_roccet_and_cubic() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, c) = (tmp.path().join("roccet"), tmp.path().join("cubic"));
    assert_eq!(run_into(&r, &["--builtin", "bw-halving", "--algo", "roccet"]).status.code(), Some(0));
    assert_eq!(run_into(&c, &["--builtin", "bw-halving", "--algo", "cubic"]).status.code(), Some(0));
    let o = lab(&[
        "report",
        r.join("trace.csv").to_str().unwrap(),
        c.join("trace.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    let header: Vec<&str> = lines[0].split_whitespace().collect();
    assert_eq!(header, ["metric", "roccet", "cubic"]);
    let row = |name: &str| -> Vec<String> {
        let l = lines.iter().find(|l| l.starts_with(name)).unwrap();
        l.split_whitespace().skip(1).map(String::from).collect()
    };
    for name in ["srtt_p25_ms", "srtt_p50_ms", "srtt_p75_ms", "srtt_max_ms", "gput_p50_mbps"] {
        assert_eq!(row(name).len(), 2, "{name}");
    }
    let ce = row("roccet_ce");
    assert!(ce[0].parse::<usize>().unwrap() >= 1);
    assert_eq!(ce[1], "0");
    // Columns are right-aligned to a common width.
    let widths: Vec<usize> = lines.iter().map(|l| l.len()).collect();
    assert!(widths.iter().all(|&w| w == widths[0]), "{text}");

    let json = lab(&["report", "--format", "json", r.join("trace.csv").to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(doc[0]["input"], "roccet");
    assert!(doc[0]["ce_counts"]["0"]["roccet_ce"].as_u64().unwrap() >= 1);
}

#[test]
fn report_rejects_a_malformed_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("broken.csv");
    fs::write(
        &path,
        "# roccet-lab trace v1\ntime_ms,flow_id,cwnd_seg,srtt_ms,goodput_mbps,queue_seg\n\
         10.000,0,10.000,40.000,1.000000,0\n20.000,0,oops,40.000,1.000000,0\n",
    )
    .unwrap();
    let o = lab(&["report", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[malformed-trace]: "), "{err}");
    assert!(err.contains("broken.csv") && err.contains("row 4"), "{err}");
}

#[test]
fn report_names_an_empty_window() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("empty.csv");
    fs::write(
        &path,
        "# roccet-lab trace v1\ntime_ms,flow_id,cwnd_seg,srtt_ms,goodput_mbps,queue_seg\n",
    )
    .unwrap();
    let o = lab(&["report", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[empty-window]: "), "{err}");
    assert!(err.contains("window ["), "{err}");
}

#[test]
fn sweep_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&[
        "sweep",
        "--builtin",
        "roccet-intra",
        "-o",
        tmp.path().to_str().unwrap(),
        "--reps",
        "1",
        "--set",
        "horizon_s=5",
        "--max-buffer-bdp",
        "16",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("# roccet-lab sweep v1\n"));
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(body[0].starts_with("cell,repetition,seed,n_flows,buffer,"));
    // 7 flow counts x 5 buffers, one row per flow: (2 + ... + 8) * 5.
    assert_eq!(body.len() - 1, 35 * 5);
    let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    assert!(summary.contains("jain_mean"));
    assert!(summary.contains("horizon_s = 5"));
}

#[test]
fn list_scenarios_names_every_builtin() {
    let o = lab(&["list-scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in [
        "steady",
        "bw-halving",
        "frozen-cwnd",
        "fairness-10x40",
        "fairness-50x30",
        "slow-start-deep",
        "roccet-intra",
        "defensiveness",
        "fairness-matrix",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}
