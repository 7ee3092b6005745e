use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use swarmlift::matrix::{self, comparison_table, run_matrix, MatrixEntry};
use swarmlift::metrics::{compute_metrics, TrackingMode};
use swarmlift::{presets, simulate, ControllerKind, ScenarioError, ScenarioSpec};

const OUT_ENV: &str = "SWARMLIFT_OUT";
const DEFAULT_OUT: &str = "runs";

#[derive(Parser)]
#[command(
    name = "swarmlift",
    version,
    about = "Cable-suspended payload transport by flying robot teams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace and metrics.
    Simulate(SimulateArgs),
    /// Run a seeded benchmark matrix and print the controller comparison.
    Bench(BenchArgs),
    /// Check a scenario file and print it with every default resolved.
    Validate(ValidateArgs),
    /// List the built-in scenarios as JSON.
    Presets,
}

#[derive(Args)]
struct Source {
    /// Built-in scenario name (see `swarmlift presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario controller.
    #[arg(long)]
    controller: Option<String>,
    /// Output root; defaults to $SWARMLIFT_OUT, then `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario names; `fig5` expands to the four-panel matrix. Repeatable.
    #[arg(long = "preset", conflicts_with = "config")]
    presets: Vec<String>,
    /// Matrix TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated controller names.
    #[arg(long = "controllers", alias = "controller", value_delimiter = ',')]
    controllers: Vec<String>,
    /// Seeded repeats per cell.
    #[arg(long)]
    repeats: Option<usize>,
    /// First seed; repeat k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Also write every run's trace and metrics.
    #[arg(long)]
    traces: bool,
    /// Exit with status 3 if any run failed.
    #[arg(long)]
    strict: bool,
    /// Output root; defaults to $SWARMLIFT_OUT, then `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario TOML file.
    path: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "path")]
    preset: Option<String>,
}

/// Matrix file layout.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    /// Preset names, `fig5`, or scenario file paths relative to the matrix file.
    scenarios: Vec<String>,
    #[serde(default)]
    controllers: Vec<String>,
    #[serde(default)]
    repeats: Option<usize>,
    #[serde(default)]
    seed_base: Option<u64>,
}

enum Failure {
    /// Bad flags or configuration; exit 2.
    Config(String),
    /// The simulation failed or output could not be written; exit 3.
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Run(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Presets => cmd_presets(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn parse_controller(name: &str) -> Result<ControllerKind, Failure> {
    ControllerKind::parse(name).ok_or_else(|| {
        let valid: Vec<&str> = ControllerKind::ALL.iter().map(|k| k.name()).collect();
        Failure::Config(format!(
            "unknown controller `{name}`; valid names: {}",
            valid.join(", ")
        ))
    })
}

fn load_scenario(preset: Option<&str>, config: Option<&Path>) -> Result<ScenarioSpec, Failure> {
    let spec = match (preset, config) {
        (Some(name), _) => presets::get(name)?,
        (None, Some(path)) => ScenarioSpec::load(path)?,
        (None, None) => return Err(Failure::Config("give --preset NAME or --config FILE".into())),
    };
    spec.validate()?;
    Ok(spec)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut spec = load_scenario(a.source.preset.as_deref(), a.source.config.as_deref())?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(name) = &a.controller {
        spec.controller = parse_controller(name)?;
    }
    let dir = out_root(a.out)
        .join(&spec.name)
        .join(spec.controller.name())
        .join(format!("seed-{}", spec.seed));
    let trace = simulate(&spec).map_err(|e| Failure::Run(e.to_string()))?;
    trace.write_dir(&dir).map_err(|e| Failure::Run(e.to_string()))?;
    match compute_metrics(&trace, TrackingMode::default()) {
        Ok(m) => {
            write_json(&dir.join("metrics.json"), &m)?;
            let s = &m.tracking.summary;
            println!(
                "{}: median tracking error {:.4} m (max {:.4} m), convergence {}",
                dir.display(),
                s.median,
                s.max,
                m.convergence_time
                    .map_or("not reached".into(), |t| format!("at {t:.2} s"))
            );
        }
        Err(e) => println!("{}: no metrics ({e})", dir.display()),
    }
    Ok(())
}

fn expand(name: &str) -> Vec<String> {
    if name == "fig5" {
        let mut names: Vec<String> = Vec::new();
        for (_, cells) in presets::FIG5_PANELS {
            for c in *cells {
                if !names.iter().any(|n| n == c) {
                    names.push(c.to_string());
                }
            }
        }
        names
    } else {
        vec![name.to_string()]
    }
}

fn resolve_scenario(item: &str, base: Option<&Path>) -> Result<Vec<ScenarioSpec>, Failure> {
    let specs = if item.ends_with(".toml") {
        let path = base.map_or_else(|| PathBuf::from(item), |b| b.join(item));
        vec![ScenarioSpec::load(&path)?]
    } else {
        expand(item)
            .iter()
            .map(|n| presets::get(n))
            .collect::<Result<Vec<_>, _>>()?
    };
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let (items, file_controllers, file_repeats, file_seed, base) = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            let m: MatrixFile =
                toml::from_str(&text).map_err(|e| Failure::Config(format!("cannot parse {}: {e}", path.display())))?;
            (
                m.scenarios,
                m.controllers,
                m.repeats,
                m.seed_base,
                path.parent().map(Path::to_path_buf),
            )
        }
        None if a.presets.is_empty() => (vec!["fig5".to_string()], Vec::new(), None, None, None),
        None => (a.presets.clone(), Vec::new(), None, None, None),
    };
    let controller_names = if a.controllers.is_empty() {
        file_controllers
    } else {
        a.controllers.clone()
    };
    let controllers: Vec<ControllerKind> = if controller_names.is_empty() {
        ControllerKind::ALL.to_vec()
    } else {
        controller_names
            .iter()
            .map(|n| parse_controller(n))
            .collect::<Result<_, _>>()?
    };
    let repeats = a.repeats.or(file_repeats).unwrap_or(10);
    if repeats == 0 {
        return Err(Failure::Config("repeats must be at least 1".into()));
    }
    let seed_base = a.seed.or(file_seed).unwrap_or(0);

    let mut entries = Vec::new();
    for item in &items {
        for scenario in resolve_scenario(item, base.as_deref())? {
            for &controller in &controllers {
                entries.push(MatrixEntry {
                    scenario: scenario.clone(),
                    controller,
                    repeats,
                    seed_base,
                });
            }
        }
    }
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let dir = out_root(a.out).join("bench");
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
    let traces = a.traces.then(|| dir.join("traces"));
    let result = run_matrix(&entries, workers, traces.as_deref());

    let create = |name: &str| {
        let path = dir.join(name);
        std::fs::File::create(&path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
    };
    matrix::write_runs_csv(&result.runs, create("runs.csv")?).map_err(|e| Failure::Run(e.to_string()))?;
    matrix::write_cells_csv(&result.cells, create("cells.csv")?).map_err(|e| Failure::Run(e.to_string()))?;
    let table = comparison_table(&result);
    std::fs::write(dir.join("comparison.txt"), &table).map_err(|e| Failure::Run(e.to_string()))?;
    print!("{table}");
    println!("wrote {}", dir.display());

    let failures = result.failures();
    if failures > 0 {
        eprintln!(
            "warning: {failures} of {} runs failed (see runs.csv)",
            result.runs.len()
        );
        if a.strict {
            return Err(Failure::Run(format!("{failures} runs failed")));
        }
    }
    Ok(())
}

/// Units of every scalar scenario key, printed by `validate`.
const UNITS: &[(&str, &str)] = &[
    ("seed", "integer"),
    ("duration", "s"),
    ("dt", "s"),
    ("control_decimation", "physics steps"),
    ("log_decimation", "physics steps"),
    ("gravity", "m/s²"),
    ("team.n_robots", "count"),
    ("team.mass", "kg"),
    ("team.thrust_limit", "N"),
    ("team.capability", "[lo, hi] N"),
    ("cable.nominal_length", "m"),
    ("cable.uncertainty", "m"),
    ("cable.stiffness", "N/m"),
    ("cable.damping", "N·s/m"),
    ("payload.mass", "kg"),
    ("formation.h_c", "m"),
    ("formation.node_radius", "m"),
    ("formation.perception_range", "m"),
    ("formation.hysteresis", "m"),
    ("formation.initial_jitter", "m"),
    ("formation.initial_speed", "m/s"),
    ("formation.disk_height", "m"),
    ("gains.k_ij", "N/m"),
    ("gains.c_ij", "N·s/m"),
    ("gains.k_i", "N/m"),
    ("gains.c_i", "N·s/m"),
    ("gains.f_c", "N·s/m"),
    ("tracking.kp", "1/s²"),
    ("tracking.kv", "1/s"),
    ("tracking.max_accel", "m/s²"),
    ("baseline.kp", "1/s²"),
    ("baseline.kv", "1/s"),
    ("baseline.edge_k", "1/s²"),
    ("baseline.edge_c", "1/s"),
    ("baseline.load_gain", "1/s²"),
    ("baseline.max_accel", "m/s²"),
    ("reference.waypoints", "m"),
    ("reference.cruise_speed", "m/s"),
    ("reference.max_accel", "m/s²"),
    ("reference.hold", "s"),
    ("wind.mean", "m/s"),
    ("wind.gust_std", "m/s"),
    ("wind.correlation_time", "s"),
    ("wind.robot_drag", "N·s/m"),
    ("wind.payload_drag", "N·s/m"),
    ("events.time", "s"),
    ("metrics.warmup", "s"),
    ("metrics.convergence_window", "s"),
];

fn cmd_validate(a: ValidateArgs) -> Result<(), Failure> {
    let spec = match (&a.preset, &a.path) {
        (Some(name), _) => presets::get(name)?,
        (None, Some(path)) => ScenarioSpec::load(path)?,
        (None, None) => return Err(Failure::Config("give a scenario file or --preset NAME".into())),
    };
    if let Err(ScenarioError::Invalid(violations)) = spec.validate() {
        let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(Failure::Config(format!("invalid scenario:\n{}", lines.join("\n"))));
    }
    print!("{}", spec.to_toml());
    println!("\n# units");
    for (key, unit) in UNITS {
        println!("# {key:<28} {unit}");
    }
    Ok(())
}

fn cmd_presets() -> Result<(), Failure> {
    let list: Vec<serde_json::Value> = presets::NAMES
        .iter()
        .map(|name| {
            let s = presets::get(name).expect("listed presets exist");
            serde_json::json!({
                "name": name,
                "robots": s.team.n_robots,
                "payload_kg": s.payload.mass,
                "duration_s": s.duration,
                "perception_range_m": s.formation.perception_range,
                "events": s.events.len(),
            })
        })
        .collect();
    println!("{}", serde_json::to_string_pretty(&list).expect("serializable"));
    Ok(())
}
