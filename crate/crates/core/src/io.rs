//! On-disk formats.
//!
//! Every artifact is a single UTF-8 file: one line `# {json header}` followed
//! by a CSV body with a header row. Column orders are fixed (see `FORMATS.md`).
//! Derived files list the SHA-256 digests of the files they were computed from.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::sensor::CountRecord;
use crate::smoother::SmoothedTimeline;
use crate::trajectory::{JumpEvent, TrajectoryRecord};

pub const FORMAT_VERSION: u32 = 1;

pub const TRAJECTORY_COLUMNS: [&str; 3] = ["t", "n", "p_up"];
pub const COUNT_COLUMNS: [&str; 2] = ["bin_index", "count"];
pub const TIMELINE_COLUMNS: [&str; 4] = ["t", "P_filter", "P_PQS", "assigned_state"];
pub const LIKELIHOOD_COLUMNS: [&str; 3] = ["t", "omega", "log_likelihood"];
pub const HISTOGRAM_COLUMNS: [&str; 4] = ["left_edge", "right_edge", "count", "fitted_count"];

/// Input file name to SHA-256 hex digest.
pub type Digests = BTreeMap<String, String>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Digest entry keyed by the file name.
pub fn digest_entry(path: &Path) -> Result<(String, String)> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((name, file_digest(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| format_err(path, e.to_string())
}

/// Writes `# header` and a CSV body.
pub fn write_table<H, R>(path: &Path, header: &H, columns: &[&str], rows: R) -> Result<()>
where
    H: Serialize,
    R: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let json = serde_json::to_string(header).map_err(|e| format_err(path, e.to_string()))?;
    writeln!(out, "# {json}").map_err(io_err(path))?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns).map_err(csv_err(path))?;
        for row in rows {
            w.write_record(&row).map_err(csv_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads a file written by [`write_table`], checking the column names.
pub fn read_table<H: DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<(H, Vec<csv::StringRecord>)> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(io_err(path))?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| format_err(path, "missing '# {json}' header line"))?;
    let header: H = serde_json::from_str(json.trim_end()).map_err(|e| format_err(path, format!("header: {e}")))?;
    let mut csv_reader = csv::Reader::from_reader(reader);
    let names = csv_reader.headers().map_err(csv_err(path))?.clone();
    if names.iter().ne(columns.iter().copied()) {
        return Err(format_err(path, format!("expected columns {columns:?}, found {:?}", names.iter().collect::<Vec<_>>())));
    }
    let rows = csv_reader.records().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err(path))?;
    Ok((header, rows))
}

fn field<T: std::str::FromStr>(path: &Path, row: &csv::StringRecord, i: usize) -> Result<T> {
    let s = row.get(i).ok_or_else(|| format_err(path, format!("row has no column {i}")))?;
    s.parse()
        .map_err(|_| format_err(path, format!("cannot parse '{s}' in column {i}")))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut s = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(|e| format_err(path, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub kind: String,
    pub format_version: u32,
    pub params: ModelParams,
    pub seed: u64,
    pub duration: f64,
    pub events: Vec<JumpEvent>,
}

pub fn write_trajectory(path: &Path, traj: &TrajectoryRecord) -> Result<()> {
    let header = TrajectoryHeader {
        kind: "trajectory".into(),
        format_version: FORMAT_VERSION,
        params: traj.params,
        seed: traj.seed,
        duration: traj.duration,
        events: traj.events.clone(),
    };
    let rows = (0..traj.n_steps()).map(|i| {
        vec![
            traj.time(i).to_string(),
            u8::from(traj.occupied[i]).to_string(),
            traj.p_up[i].to_string(),
        ]
    });
    write_table(path, &header, &TRAJECTORY_COLUMNS, rows)
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryRecord> {
    let (h, rows): (TrajectoryHeader, _) = read_table(path, &TRAJECTORY_COLUMNS)?;
    if h.kind != "trajectory" {
        return Err(format_err(path, format!("expected a trajectory file, found '{}'", h.kind)));
    }
    let mut occupied = Vec::with_capacity(rows.len());
    let mut p_up = Vec::with_capacity(rows.len());
    for row in &rows {
        occupied.push(match field::<u8>(path, row, 1)? {
            0 => false,
            1 => true,
            n => return Err(format_err(path, format!("occupation must be 0 or 1, got {n}"))),
        });
        p_up.push(field(path, row, 2)?);
    }
    let traj = TrajectoryRecord {
        params: h.params,
        seed: h.seed,
        duration: h.duration,
        events: h.events,
        p_up,
        occupied,
    };
    traj.check_invariants().map_err(|e| format_err(path, e.to_string()))?;
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountHeader {
    pub kind: String,
    pub format_version: u32,
    /// τ [µs]
    pub bin_dt: f64,
    pub r0: f64,
    pub r1: f64,
    pub seed: u64,
    /// µs
    pub duration: f64,
    #[serde(default)]
    pub inputs: Digests,
}

pub fn write_counts(path: &Path, record: &CountRecord, inputs: Digests) -> Result<()> {
    let header = CountHeader {
        kind: "counts".into(),
        format_version: FORMAT_VERSION,
        bin_dt: record.bin_dt,
        r0: record.r0,
        r1: record.r1,
        seed: record.seed,
        duration: record.duration(),
        inputs,
    };
    let rows = record.counts.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.to_string()]);
    write_table(path, &header, &COUNT_COLUMNS, rows)
}

pub fn read_counts(path: &Path) -> Result<(CountRecord, CountHeader)> {
    let (h, rows): (CountHeader, _) = read_table(path, &COUNT_COLUMNS)?;
    if h.kind != "counts" {
        return Err(format_err(path, format!("expected a count record, found '{}'", h.kind)));
    }
    let mut counts = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if field::<usize>(path, row, 0)? != i {
            return Err(format_err(path, format!("bin indices must run 0, 1, 2, ...; row {i} is out of order")));
        }
        counts.push(field(path, row, 1)?);
    }
    Ok((CountRecord::new(h.bin_dt, counts, h.r0, h.r1, h.seed), h))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineHeader {
    pub kind: String,
    pub format_version: u32,
    pub bin_dt: f64,
    pub threshold: f64,
    pub params: ModelParams,
    pub log_likelihood: f64,
    pub inputs: Digests,
}

pub fn write_timeline(path: &Path, timeline: &SmoothedTimeline, params: &ModelParams, threshold: f64, inputs: Digests) -> Result<()> {
    let header = TimelineHeader {
        kind: "timeline".into(),
        format_version: FORMAT_VERSION,
        bin_dt: timeline.bin_dt,
        threshold,
        params: *params,
        log_likelihood: timeline.log_likelihood,
        inputs,
    };
    let times = timeline.times();
    let rows = (0..timeline.len()).map(move |k| {
        vec![
            times[k].to_string(),
            timeline.filter[k].to_string(),
            timeline.pqs[k].to_string(),
            u8::from(timeline.pqs[k] > threshold).to_string(),
        ]
    });
    write_table(path, &header, &TIMELINE_COLUMNS, rows)
}

/// Reads the filter and smoothed probabilities back; effects are not stored.
pub fn read_timeline(path: &Path) -> Result<(SmoothedTimeline, TimelineHeader)> {
    let (h, rows): (TimelineHeader, _) = read_table(path, &TIMELINE_COLUMNS)?;
    if h.kind != "timeline" {
        return Err(format_err(path, format!("expected a timeline, found '{}'", h.kind)));
    }
    let mut filter = Vec::with_capacity(rows.len());
    let mut pqs = Vec::with_capacity(rows.len());
    for row in &rows {
        filter.push(field(path, row, 1)?);
        pqs.push(field(path, row, 2)?);
    }
    let timeline = SmoothedTimeline {
        bin_dt: h.bin_dt,
        filter,
        pqs,
        effects: None,
        log_likelihood: h.log_likelihood,
    };
    Ok((timeline, h))
}

/// Standard file names inside a run directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentBundle {
    pub root: PathBuf,
}

impl ExperimentBundle {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn trajectory(&self) -> PathBuf {
        self.root.join("trajectory.csv")
    }

    pub fn counts(&self) -> PathBuf {
        self.root.join("counts.csv")
    }

    pub fn timeline(&self) -> PathBuf {
        self.root.join("timeline.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn likelihood(&self) -> PathBuf {
        self.root.join("likelihood.csv")
    }

    pub fn dwell_report(&self) -> PathBuf {
        self.root.join("dwell.json")
    }

    pub fn dwell_histogram(&self) -> PathBuf {
        self.root.join("dwell_histogram.csv")
    }
}
