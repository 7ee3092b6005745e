//! Run traces: a JSON header with the resolved scenario and drawn samples, plus
//! one JSON record per logged tick (newline-delimited).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{FormationTemplate, ReferenceSample};
use crate::model::{FormationCenter, RestLengths, VirtualNode};
use crate::scenario::{ScenarioInstance, ScenarioSpec};
use crate::Vec3;

pub const SCHEMA_VERSION: u32 = 1;
pub const HEADER_FILE: &str = "header.json";
pub const TRACE_FILE: &str = "trace.ndjson";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub id: usize,
    pub mass: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Acceleration command before saturation, m/s².
    pub command: Vec3,
    /// Acceleration realized over the following step, m/s².
    pub acceleration: Vec3,
    /// Cable force on the robot, N.
    pub tension: Vec3,
    pub alive: bool,
    pub attached: bool,
    /// Absent for detached robots.
    pub node: Option<VirtualNode>,
    /// Formation center as this robot estimates it (dissipative only).
    pub center_estimate: Option<FormationCenter>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadRecord {
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Distance-floor substitutions in the controllers this tick.
    pub guarded: u32,
    /// Robots whose thrust was clipped this tick.
    pub saturated: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub tick: u64,
    pub t: f64,
    pub robots: Vec<RobotRecord>,
    pub payload: PayloadRecord,
    pub reference: ReferenceSample,
    /// Centroid of the attached robots' nodes.
    pub center: Option<FormationCenter>,
    /// Perception links among attached robots, `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// Air velocity, m/s.
    pub wind: Vec3,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedEvent {
    pub tick: u64,
    pub t: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub generator: String,
    pub spec: ScenarioSpec,
    pub instance: ScenarioInstance,
    /// Rest lengths captured at lock and at each join.
    pub rest: RestLengths,
    /// Payload-to-node distances at lock, one per robot (None for joiners).
    pub payload_node_rest: Vec<Option<f64>>,
    pub template: FormationTemplate,
    pub events: Vec<AppliedEvent>,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: schema version {found}, expected {expected}")]
    Schema { path: String, found: u32, expected: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

impl Trace {
    pub fn write_records<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            out.write_all(r.to_line().as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Writes `header.json` and `trace.ndjson` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), TraceError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let header_path = dir.join(HEADER_FILE);
        let header = serde_json::to_string_pretty(&self.header).expect("header serializes");
        std::fs::write(&header_path, header + "\n").map_err(io_err(&header_path))?;
        let trace_path = dir.join(TRACE_FILE);
        let file = File::create(&trace_path).map_err(io_err(&trace_path))?;
        self.write_records(BufWriter::new(file)).map_err(io_err(&trace_path))
    }

    pub fn read_dir(dir: &Path) -> Result<Self, TraceError> {
        let header_path = dir.join(HEADER_FILE);
        let text = std::fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
        let header: TraceHeader = serde_json::from_str(&text).map_err(|e| TraceError::Parse {
            path: header_path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        check_schema(&header_path, header.schema_version)?;
        let trace_path = dir.join(TRACE_FILE);
        let file = File::open(&trace_path).map_err(io_err(&trace_path))?;
        let records = read_records(BufReader::new(file), &trace_path)?;
        Ok(Self { header, records })
    }
}

fn check_schema(path: &Path, found: u32) -> Result<(), TraceError> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(TraceError::Schema {
            path: path.display().to_string(),
            found,
            expected: SCHEMA_VERSION,
        })
    }
}

pub fn read_records<R: BufRead>(input: R, path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            path: path.display().to_string(),
            line: k + 1,
            message: e.to_string(),
        })?;
        check_schema(path, rec.schema_version)?;
        records.push(rec);
    }
    Ok(records)
}
