//! `roccet-lab`: run scenarios and sweeps, and compare traces.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 on a runtime fault.
//! Failures print one line `error[<kind>]: <message>` to stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lab::cc::{Algorithm, CeKind};
use lab::harness::builtin::{builtin_scenario_toml, BUILTIN_SCENARIOS, BUILTIN_SWEEPS};
use lab::harness::scenario::{apply_overrides, parse_override};
use lab::harness::sweep::write_results_csv;
use lab::harness::{builtin_sweep, run_sweep, CellResult, ScenarioSpec, SweepSpec};
use lab::metrics::{bandwidth_share, share_table, summarize, FlowSummary, TextTable, DEFAULT_WARMUP_FRACTION};
use lab::netsim::trace::{read_trace_csv, read_trace_file};
use lab::netsim::{self, TraceSet};
use lab::LabError;

const SWEEP_MAGIC: &str = "# roccet-lab sweep v1";

#[derive(Debug, Parser)]
#[command(name = "roccet-lab", version, about = "Congestion-control simulation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv, events.json and summary.txt.
    Run(RunArgs),
    /// Run a parameter sweep and write results.csv and summary.txt.
    Sweep(SweepArgs),
    /// Compare trace files side by side.
    Report(ReportArgs),
    /// List builtin scenarios and sweeps.
    ListScenarios,
}

#[derive(Debug, Args)]
struct Source {
    /// Builtin name (see list-scenarios).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    builtin: Option<String>,
    /// TOML file.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(short, long, env = "ROCCET_LAB_OUT", default_value = "out")]
    out: PathBuf,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path override, e.g. `roccet.alpha=0.5` or `flows.0.count=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
    /// Run every flow with this algorithm.
    #[arg(long)]
    algo: Option<Algorithm>,
    /// Fraction of the run skipped before percentiles are taken.
    #[arg(long, default_value_t = DEFAULT_WARMUP_FRACTION)]
    warmup: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    common: Common,
    /// Repetitions per axis point.
    #[arg(long)]
    reps: Option<u32>,
    /// Extend the buffer axis by doubling up to this many BDP (e.g. 64).
    #[arg(long, value_name = "BDP")]
    max_buffer_bdp: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Trace CSV files; CE counts come from a sibling events.json.
    #[arg(required = true, value_name = "TRACE")]
    traces: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WARMUP_FRACTION)]
    warmup: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

struct Failure {
    kind: String,
    message: String,
    code: u8,
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure {
            kind: e.kind().to_string(),
            message: e.to_string(),
            code: if e.is_user_error() { 1 } else { 2 },
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        LabError::Io(e).into()
    }
}

impl Failure {
    fn context(mut self, what: &Path) -> Self {
        self.message = format!("{}: {}", what.display(), self.message);
        self
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let mut lines = text.lines();
            let first = lines.next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            for l in lines.filter(|l| !l.trim().is_empty()) {
                eprintln!("  {}", l.trim_end());
            }
            return ExitCode::from(1);
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
        Command::ListScenarios => cmd_list(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let one_line = f.message.split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error[{}]: {}", f.kind, one_line);
            ExitCode::from(f.code)
        }
    }
}

fn parse_overrides(common: &Common) -> CliResult<Vec<(String, String)>> {
    let mut out = common
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = common.seed {
        out.push(("seed".into(), seed.to_string()));
    }
    Ok(out)
}

fn check_warmup(fraction: f64) -> CliResult {
    if (0.0..1.0).contains(&fraction) {
        Ok(())
    } else {
        Err(LabError::Validation(format!("--warmup must be in [0, 1), got {fraction}")).into())
    }
}

fn read_source_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| {
        Failure::from(LabError::Config(format!("cannot read {}: {e}", path.display())))
    })
}

fn resolve_scenario(args: &RunArgs) -> CliResult<ScenarioSpec> {
    let text = match (&args.source.builtin, &args.source.scenario) {
        (Some(name), _) => builtin_scenario_toml(name)?.to_string(),
        (None, Some(path)) => read_source_text(path)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let mut value: toml::Value =
        toml::from_str(&text).map_err(|e| LabError::Config(e.message().to_string()))?;
    apply_overrides(&mut value, &parse_overrides(&args.common)?)?;
    let mut spec = ScenarioSpec::from_value(value)?;
    if let Some(algo) = args.algo {
        spec.set_algo(algo);
    }
    Ok(spec)
}

fn create_out(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::from(e).context(dir))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> CliResult {
    let file = File::create(path).map_err(|e| Failure::from(e).context(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::from(e).context(path))
}

fn config_block(out: &mut String, title: &str, config: &str) {
    let _ = writeln!(out, "[{title}]");
    out.push_str(config);
    if !config.ends_with('\n') {
        out.push('\n');
    }
}

fn cmd_run(args: RunArgs) -> CliResult {
    check_warmup(args.warmup)?;
    let spec = resolve_scenario(&args)?;
    let trace = netsim::run(&spec)?;
    let out = &args.common.out;
    create_out(out)?;

    let csv = trace.to_csv_string();
    let trace_path = out.join("trace.csv");
    write_file(&trace_path, |w| w.write_all(csv.as_bytes()))?;
    write_file(&out.join("events.json"), |w| {
        trace.write_events_json(&mut *w)?;
        writeln!(w)
    })?;

    let rows = read_trace_csv(csv.as_bytes(), &trace_path.display().to_string())?;
    let summaries = summarize(&rows, args.warmup)?;
    let entry = Entry {
        label: spec.name.clone(),
        flows: summaries,
        ce_counts: Some(ce_counts_of(&trace)),
    };
    let mut text = comparison_table(&[entry]).render();
    text.push('\n');
    text.push_str(&share_table(&bandwidth_share(&trace, None)?));
    text.push('\n');
    config_block(&mut text, "resolved config", &trace.config);
    write_file(&out.join("summary.txt"), |w| w.write_all(text.as_bytes()))?;
    print!("{text}");
    Ok(())
}

fn resolve_sweep(args: &SweepArgs) -> CliResult<SweepSpec> {
    let mut spec = match (&args.source.builtin, &args.source.scenario) {
        (Some(name), _) => builtin_sweep(name)?,
        (None, Some(path)) => SweepSpec::from_toml_str(&read_source_text(path)?)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    spec.override_base(&parse_overrides(&args.common)?)?;
    if let Some(reps) = args.reps {
        if reps == 0 {
            return Err(LabError::Validation("--reps must be at least 1".into()).into());
        }
        spec.repetitions = reps;
    }
    if let Some(max) = args.max_buffer_bdp {
        spec.extend_buffer_axis(max);
    }
    Ok(spec)
}

fn sweep_config(spec: &SweepSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name = {:?}", spec.name);
    let _ = writeln!(s, "repetitions = {}", spec.repetitions);
    if let Some(g) = spec.harm_group {
        let _ = writeln!(s, "harm_group = {g}");
    }
    for a in &spec.axes {
        let values: Vec<String> = a.values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "axis {} ({}) = [{}]", a.label(), a.path, values.join(", "));
    }
    s.push_str("[base]\n");
    s.push_str(&toml::to_string(&spec.base).unwrap_or_default());
    s
}

fn sweep_summary(spec: &SweepSpec, results: &[CellResult]) -> TextTable {
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.label().to_string()).collect();
    if header.is_empty() {
        header.push("point".into());
    }
    header.extend(["reps", "jain_mean", "jain_min", "harm_mean"].map(String::from));
    let mut t = TextTable::new(header);
    let mut groups: Vec<(Vec<String>, Vec<&CellResult>)> = Vec::new();
    for r in results {
        let key: Vec<String> = r.point.iter().map(|(_, v)| v.clone()).collect();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    for (key, rs) in groups {
        let n = rs.len() as f64;
        let jain: Vec<f64> = rs.iter().map(|r| r.share.jain_index).collect();
        let harms: Vec<f64> = rs.iter().filter_map(|r| r.share.harm).collect();
        let mut row = if key.is_empty() { vec!["-".to_string()] } else { key };
        row.push(rs.len().to_string());
        row.push(format!("{:.4}", jain.iter().sum::<f64>() / n));
        row.push(format!("{:.4}", jain.iter().copied().fold(f64::INFINITY, f64::min)));
        row.push(if harms.is_empty() {
            "-".into()
        } else {
            format!("{:.4}", harms.iter().sum::<f64>() / harms.len() as f64)
        });
        t.push(row);
    }
    t
}

fn cmd_sweep(args: SweepArgs) -> CliResult {
    let spec = resolve_sweep(&args)?;
    let results = run_sweep(&spec)?;
    let out = &args.common.out;
    create_out(out)?;
    let config = sweep_config(&spec);

    let mut csv = Vec::new();
    writeln!(csv, "{SWEEP_MAGIC}")?;
    for line in config.lines() {
        writeln!(csv, "# {line}")?;
    }
    write_results_csv(&spec, &results, &mut csv)?;
    write_file(&out.join("results.csv"), |w| w.write_all(&csv))?;

    let mut text = sweep_summary(&spec, &results).render();
    text.push('\n');
    config_block(&mut text, "resolved config", &config);
    write_file(&out.join("summary.txt"), |w| w.write_all(text.as_bytes()))?;
    print!("{text}");
    Ok(())
}

struct Entry {
    label: String,
    flows: Vec<FlowSummary>,
    /// Per flow, counts in `CeKind::ALL` order.
    ce_counts: Option<BTreeMap<u32, [usize; 3]>>,
}

fn ce_counts_of(trace: &TraceSet) -> BTreeMap<u32, [usize; 3]> {
    trace
        .flows
        .iter()
        .map(|f| (f.flow_id, CeKind::ALL.map(|k| f.ce_count(k))))
        .collect()
}

/// Reads CE counts from an events.json document.
fn ce_counts_from_events(path: &Path) -> CliResult<BTreeMap<u32, [usize; 3]>> {
    let bad = |why: String| {
        Failure::from(LabError::Config(format!("events file {}: {why}", path.display())))
    };
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let flows = doc["flows"]
        .as_array()
        .ok_or_else(|| bad("missing flows array".into()))?;
    let mut out = BTreeMap::new();
    for f in flows {
        let id = f["flow_id"]
            .as_u64()
            .ok_or_else(|| bad("flow without flow_id".into()))? as u32;
        let mut counts = [0usize; 3];
        for rec in f["ce_log"].as_array().into_iter().flatten() {
            let kind = rec["kind"].as_str().unwrap_or("");
            if let Some(i) = CeKind::ALL.iter().position(|k| k.as_str() == kind) {
                counts[i] += 1;
            }
        }
        out.insert(id, counts);
    }
    Ok(out)
}

fn input_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    if stem == "trace" {
        if let Some(dir) = path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
            return dir.to_string();
        }
    }
    stem.to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// One column per (input, flow), one row per metric.
fn comparison_table(entries: &[Entry]) -> TextTable {
    let mut header = vec!["metric".to_string()];
    for e in entries {
        for f in &e.flows {
            header.push(if e.flows.len() == 1 {
                e.label.clone()
            } else {
                format!("{}/{}", e.label, f.flow_id)
            });
        }
    }
    let mut t = TextTable::new(header);
    let cols = || entries.iter().flat_map(|e| e.flows.iter().map(move |f| (e, f)));
    let quart = |name: &str, pick: &dyn Fn(&FlowSummary) -> Option<f64>| {
        let mut row = vec![name.to_string()];
        row.extend(cols().map(|(_, f)| fmt_opt(pick(f))));
        row
    };
    t.push(quart("srtt_p25_ms", &|f| f.srtt_ms.map(|q| q.p25)));
    t.push(quart("srtt_p50_ms", &|f| f.srtt_ms.map(|q| q.p50)));
    t.push(quart("srtt_p75_ms", &|f| f.srtt_ms.map(|q| q.p75)));
    t.push(quart("srtt_max_ms", &|f| f.srtt_ms.map(|q| q.max)));
    t.push(quart("gput_p25_mbps", &|f| Some(f.goodput_mbps.p25)));
    t.push(quart("gput_p50_mbps", &|f| Some(f.goodput_mbps.p50)));
    t.push(quart("gput_p75_mbps", &|f| Some(f.goodput_mbps.p75)));
    t.push(quart("gput_max_mbps", &|f| Some(f.goodput_mbps.max)));
    for (i, kind) in CeKind::ALL.iter().enumerate() {
        let mut row = vec![kind.as_str().to_string()];
        row.extend(cols().map(|(e, f)| {
            e.ce_counts
                .as_ref()
                .and_then(|m| m.get(&f.flow_id))
                .map(|c| c[i].to_string())
                .unwrap_or_else(|| "-".into())
        }));
        t.push(row);
    }
    let mut row = vec!["samples".to_string()];
    row.extend(cols().map(|(_, f)| f.samples.to_string()));
    t.push(row);
    t
}

fn cmd_report(args: ReportArgs) -> CliResult {
    check_warmup(args.warmup)?;
    let mut entries = Vec::new();
    for path in &args.traces {
        let rows = read_trace_file(path)?;
        let flows = summarize(&rows, args.warmup).map_err(|e| Failure::from(e).context(path))?;
        let events = path.with_file_name("events.json");
        let ce_counts = if events.is_file() {
            Some(ce_counts_from_events(&events)?)
        } else {
            None
        };
        entries.push(Entry {
            label: input_label(path),
            flows,
            ce_counts,
        });
    }
    let labels: Vec<&str> = entries.iter().map(|e| e.label.as_str()).collect();
    let duplicated = (1..labels.len()).any(|i| labels[..i].contains(&labels[i]));
    if duplicated {
        for (e, p) in entries.iter_mut().zip(&args.traces) {
            e.label = p.display().to_string();
        }
    }
    match args.format {
        Format::Text => print!("{}", comparison_table(&entries).render()),
        Format::Json => {
            let doc: Vec<serde_json::Value> = entries
                .iter()
                .map(|e| {
                    serde_json::json!({
                        "input": e.label,
                        "flows": e.flows,
                        "ce_counts": e.ce_counts.as_ref().map(|m| {
                            m.iter()
                                .map(|(id, c)| {
                                    let kinds: BTreeMap<&str, usize> =
                                        CeKind::ALL.iter().map(|k| k.as_str()).zip(*c).collect();
                                    (id.to_string(), kinds)
                                })
                                .collect::<BTreeMap<_, _>>()
                        }),
                    })
                })
                .collect();
            let text = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
            println!("{text}");
        }
    }
    Ok(())
}

fn cmd_list() -> CliResult {
    let mut t = TextTable::new(["name", "kind", "detail"]);
    for (name, text) in BUILTIN_SCENARIOS {
        let spec = ScenarioSpec::from_toml_str(text)?;
        let algos: Vec<&str> = spec.flows.iter().map(|g| g.algo.as_str()).collect();
        t.push([
            name.to_string(),
            "scenario".to_string(),
            format!(
                "{} Mbit/s x {} ms, {} BDP, {} s, {} flow(s): {}",
                spec.link.rate_mbps,
                spec.link.rtt.as_millis(),
                spec.buffer_bdp,
                spec.horizon.as_secs(),
                spec.total_flows(),
                algos.join("+")
            ),
        ]);
    }
    for (name, _) in BUILTIN_SWEEPS {
        let spec = builtin_sweep(name)?;
        let axes: Vec<&str> = spec.axes.iter().map(|a| a.label()).collect();
        t.push([
            name.to_string(),
            "sweep".to_string(),
            format!("{} runs over {}", spec.run_count(), axes.join(" x ")),
        ]);
    }
    print!("{}", t.render());
    Ok(())
}
