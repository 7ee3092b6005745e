//! Seeded benchmark matrices: every (scenario, controller, repeat) cell run
//! independently, then summarized per cell.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::ControllerKind;
use crate::metrics::{compute_metrics, quantile, RunMetrics, TrackingMode};
use crate::scenario::{presets, ScenarioSpec};
use crate::sim::simulate;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEntry {
    pub scenario: ScenarioSpec,
    pub controller: ControllerKind,
    pub repeats: usize,
    pub seed_base: u64,
}

/// One line of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub ok: bool,
    pub median_error: Option<f64>,
    pub mean_error: Option<f64>,
    pub max_error: Option<f64>,
    pub iqr_error: Option<f64>,
    pub convergence_time: Option<f64>,
    pub hull_residual: Option<f64>,
    pub tension_imbalance: Option<f64>,
    pub error: String,
}

/// One line of `cells.csv`: statistics of the per-run median tracking errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub scenario: String,
    pub controller: ControllerKind,
    pub runs: usize,
    pub failures: usize,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatrixResult {
    pub runs: Vec<RunRow>,
    pub cells: Vec<CellRow>,
}

impl MatrixResult {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| !r.ok).count()
    }

    pub fn cell(&self, scenario: &str, controller: ControllerKind) -> Option<&CellRow> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.controller == controller)
    }
}

/// Entries for the four-panel cable/capability/load/perception benchmark.
pub fn fig5_entries(controllers: &[ControllerKind], repeats: usize, seed_base: u64) -> Vec<MatrixEntry> {
    let mut names: Vec<&str> = Vec::new();
    for (_, cells) in presets::FIG5_PANELS {
        for c in *cells {
            if !names.contains(c) {
                names.push(c);
            }
        }
    }
    let mut entries = Vec::new();
    for name in names {
        let base = presets::get(name).expect("panel presets exist");
        for &controller in controllers {
            let mut scenario = base.clone();
            scenario.controller = controller;
            entries.push(MatrixEntry {
                scenario,
                controller,
                repeats,
                seed_base,
            });
        }
    }
    entries
}

fn run_one(entry: &MatrixEntry, seed: u64, traces: Option<&Path>) -> (RunRow, Option<RunMetrics>) {
    let mut spec = entry.scenario.clone();
    spec.controller = entry.controller;
    spec.seed = seed;
    let mut row = RunRow {
        scenario: spec.name.clone(),
        controller: entry.controller,
        seed,
        ok: false,
        median_error: None,
        mean_error: None,
        max_error: None,
        iqr_error: None,
        convergence_time: None,
        hull_residual: None,
        tension_imbalance: None,
        error: String::new(),
    };
    let trace = match simulate(&spec) {
        Ok(t) => t,
        Err(e) => {
            row.error = e.to_string();
            return (row, None);
        }
    };
    let metrics = match compute_metrics(&trace, TrackingMode::default()) {
        Ok(m) => m,
        Err(e) => {
            row.error = e.to_string();
            return (row, None);
        }
    };
    if let Some(dir) = traces {
        let dir = dir
            .join(&spec.name)
            .join(entry.controller.name())
            .join(format!("seed-{seed}"));
        if let Err(e) = trace.write_dir(&dir).and_then(|_| {
            let text = serde_json::to_string(&metrics).expect("metrics serialize");
            std::fs::write(dir.join("metrics.json"), text).map_err(|source| crate::trace::TraceError::Io {
                path: dir.display().to_string(),
                source,
            })
        }) {
            row.error = e.to_string();
            return (row, Some(metrics));
        }
    }
    let s = &metrics.tracking.summary;
    row.ok = true;
    row.median_error = Some(s.median);
    row.mean_error = Some(s.mean);
    row.max_error = Some(s.max);
    row.iqr_error = Some(s.iqr);
    row.convergence_time = metrics.convergence_time;
    row.hull_residual = metrics.hull.as_ref().map(|h| h.residual);
    row.tension_imbalance = Some(metrics.tension_stats.imbalance);
    (row, Some(metrics))
}

/// Runs every cell with seeds `seed_base + k`, on `workers` threads.
/// Failed runs are recorded and the matrix continues. Output order depends
/// only on the entries, never on scheduling.
pub fn run_matrix(entries: &[MatrixEntry], workers: usize, traces: Option<&Path>) -> MatrixResult {
    use rayon::prelude::*;
    let jobs: Vec<(usize, u64)> = entries
        .iter()
        .enumerate()
        .flat_map(|(i, e)| (0..e.repeats as u64).map(move |k| (i, e.seed_base + k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let runs: Vec<RunRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| run_one(&entries[i], seed, traces).0)
            .collect()
    });
    let cells = entries
        .iter()
        .map(|e| {
            let rows: Vec<&RunRow> = runs
                .iter()
                .filter(|r| r.scenario == e.scenario.name && r.controller == e.controller)
                .collect();
            let mut medians: Vec<f64> = rows.iter().filter_map(|r| r.median_error).collect();
            medians.sort_by(f64::total_cmp);
            let stat = |p: f64| (!medians.is_empty()).then(|| quantile(&medians, p));
            CellRow {
                scenario: e.scenario.name.clone(),
                controller: e.controller,
                runs: rows.len(),
                failures: rows.iter().filter(|r| !r.ok).count(),
                median: stat(0.5),
                q25: stat(0.25),
                q75: stat(0.75),
                min: stat(0.0),
                max: stat(1.0),
                mean: (!medians.is_empty()).then(|| medians.iter().sum::<f64>() / medians.len() as f64),
            }
        })
        .collect();
    MatrixResult { runs, cells }
}

fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: scenario, controller, seed, ok, median_error, mean_error,
/// max_error, iqr_error, convergence_time, hull_residual, tension_imbalance,
/// error. Empty fields mean "not available".
pub fn write_runs_csv<W: Write>(rows: &[RunRow], out: W) -> csv::Result<()> {
    write_csv(rows, out)
}

/// Columns: scenario, controller, runs, failures, median, q25, q75, min, max,
/// mean (all over per-run median tracking errors, m).
pub fn write_cells_csv<W: Write>(rows: &[CellRow], out: W) -> csv::Result<()> {
    write_csv(rows, out)
}

/// Human-readable comparison: one line per scenario, cell medians side by
/// side and the dissipative improvement over each baseline.
pub fn comparison_table(result: &MatrixResult) -> String {
    let mut scenarios: Vec<&str> = Vec::new();
    for c in &result.cells {
        if !scenarios.contains(&c.scenario.as_str()) {
            scenarios.push(&c.scenario);
        }
    }
    let controllers: Vec<ControllerKind> = ControllerKind::ALL
        .into_iter()
        .filter(|k| result.cells.iter().any(|c| c.controller == *k))
        .collect();
    let mut out = format!("{:<18}", "scenario");
    for k in &controllers {
        out += &format!(" {:>12}", k.name());
    }
    out += "   improvement\n";
    for s in scenarios {
        out += &format!("{s:<18}");
        let med = |k: ControllerKind| result.cell(s, k).and_then(|c| c.median);
        for &k in &controllers {
            match med(k) {
                Some(m) => out += &format!(" {m:>12.4}"),
                None => out += &format!(" {:>12}", "-"),
            }
        }
        if let Some(d) = med(ControllerKind::Dissipative) {
            for k in [ControllerKind::Formation, ControllerKind::Leader] {
                if let Some(b) = med(k) {
                    out += &format!("   vs {}: {:+.1}%", k.name(), 100.0 * (b - d) / b);
                }
            }
        }
        out.push('\n');
    }
    out
}
