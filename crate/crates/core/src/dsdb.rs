//! Design space database: evaluated design points keyed by canonical key.
//!
//! Storage is an append-only JSON-lines log. Opening replays the log with
//! last-write-wins into an in-memory index; every `put` appends one line.
//! Reads go through a `RwLock` and never wait on the file writer.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{CostRange, ParametersSet};

#[derive(Debug, Error)]
pub enum DsdbError {
    #[error("dsdb I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{path}:{line}: malformed record: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("record key `{stored}` does not match its assignments (`{expected}`)")]
    KeyMismatch { stored: String, expected: String },
    #[error("no ground-truth design point has cost in {0}")]
    EmptyRange(CostRange),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultSource {
    Gem5,
    DsdbReplay,
    Synthetic,
}

/// Metric keys stored in [`EvalResult::components`].
pub mod metric {
    pub const MISS_RATE: &str = "R_miss";
    pub const P_DYN: &str = "P_dyn";
    pub const P_GATE: &str = "P_gate";
    pub const P_SUB: &str = "P_sub";
}

/// Performance (hit rate) and cost (watts) of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub perf: f64,
    pub cost: f64,
    pub components: BTreeMap<String, f64>,
    pub source: ResultSource,
}

impl EvalResult {
    /// Builds a result from a miss rate and the three power components:
    /// perf = 1 - miss, cost = dynamic + gate leakage + subthreshold leakage.
    pub fn from_components(
        miss_rate: f64,
        p_dyn: f64,
        p_gate: f64,
        p_sub: f64,
        source: ResultSource,
    ) -> Self {
        let components = BTreeMap::from([
            (metric::MISS_RATE.to_string(), miss_rate),
            (metric::P_DYN.to_string(), p_dyn),
            (metric::P_GATE.to_string(), p_gate),
            (metric::P_SUB.to_string(), p_sub),
        ]);
        EvalResult {
            perf: 1.0 - miss_rate,
            cost: p_dyn + p_gate + p_sub,
            components,
            source,
        }
    }

    /// Checks the record invariants; returns a description of the first
    /// violation.
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.perf) {
            return Err(format!("perf {} outside [0, 1]", self.perf));
        }
        if !(self.cost >= 0.0 && self.cost.is_finite()) {
            return Err(format!("cost {} is not a non-negative number", self.cost));
        }
        let parts = [metric::P_DYN, metric::P_GATE, metric::P_SUB]
            .map(|k| self.components.get(k).copied());
        if let [Some(a), Some(b), Some(c)] = parts {
            if (a + b + c - self.cost).abs() > 1e-9 {
                return Err(format!(
                    "cost {} differs from component sum {}",
                    self.cost,
                    a + b + c
                ));
            }
        }
        Ok(())
    }
}

/// One DSDB row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub key: String,
    pub set: ParametersSet,
    pub result: EvalResult,
    pub created_at: DateTime<Utc>,
}

impl DesignPoint {
    pub fn new(set: ParametersSet, result: EvalResult) -> Self {
        Self::at(set, result, Utc::now())
    }

    pub fn at(set: ParametersSet, result: EvalResult, created_at: DateTime<Utc>) -> Self {
        DesignPoint {
            key: set.canonical_key(),
            set,
            result,
            created_at,
        }
    }

    pub fn perf(&self) -> f64 {
        self.result.perf
    }

    pub fn cost(&self) -> f64 {
        self.result.cost
    }
}

/// On-disk line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub key: String,
    pub assignments: ParametersSet,
    pub perf: f64,
    pub cost: f64,
    pub components: BTreeMap<String, f64>,
    pub source: ResultSource,
    pub created_at: DateTime<Utc>,
}

impl From<&DesignPoint> for Record {
    fn from(p: &DesignPoint) -> Self {
        Record {
            key: p.key.clone(),
            assignments: p.set.clone(),
            perf: p.result.perf,
            cost: p.result.cost,
            components: p.result.components.clone(),
            source: p.result.source,
            created_at: p.created_at,
        }
    }
}

impl TryFrom<Record> for DesignPoint {
    type Error = DsdbError;

    fn try_from(r: Record) -> Result<Self, Self::Error> {
        let expected = r.assignments.canonical_key();
        if expected != r.key {
            return Err(DsdbError::KeyMismatch {
                stored: r.key,
                expected,
            });
        }
        Ok(DesignPoint {
            key: r.key,
            set: r.assignments,
            result: EvalResult {
                perf: r.perf,
                cost: r.cost,
                components: r.components,
                source: r.source,
            },
            created_at: r.created_at,
        })
    }
}

pub fn encode_record(point: &DesignPoint) -> String {
    serde_json::to_string(&Record::from(point)).expect("records always serialize")
}

pub fn decode_record(line: &str) -> Result<DesignPoint, DsdbError> {
    let record: Record = serde_json::from_str(line).map_err(|e| DsdbError::Record {
        path: String::new(),
        line: 0,
        message: e.to_string(),
    })?;
    DesignPoint::try_from(record)
}

/// Reads every record of a JSON-lines file in order. Blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<DesignPoint>, DsdbError> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let point = decode_record(&line).map_err(|e| DsdbError::Record {
            path: path.display().to_string(),
            line: i + 1,
            message: match e {
                DsdbError::Record { message, .. } => message,
                other => other.to_string(),
            },
        })?;
        points.push(point);
    }
    Ok(points)
}

#[derive(Default)]
struct Index {
    order: Vec<String>,
    points: std::collections::HashMap<String, DesignPoint>,
}

impl Index {
    fn insert(&mut self, point: DesignPoint) {
        if !self.points.contains_key(&point.key) {
            self.order.push(point.key.clone());
        }
        self.points.insert(point.key.clone(), point);
    }
}

pub struct Dsdb {
    path: Option<PathBuf>,
    index: RwLock<Index>,
    writer: Mutex<Option<BufWriter<File>>>,
}

impl Dsdb {
    /// A database that lives only in memory.
    pub fn in_memory() -> Self {
        Dsdb {
            path: None,
            index: RwLock::new(Index::default()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (or creates) a log-backed database, replaying existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DsdbError> {
        let path = path.as_ref().to_path_buf();
        let mut index = Index::default();
        if path.exists() {
            for point in read_records(&path)? {
                index.insert(point);
            }
        } else if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Dsdb {
            path: Some(path),
            index: RwLock::new(index),
            writer: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Stores a point, overwriting any earlier point with the same key.
    pub fn put(&self, point: DesignPoint) -> Result<(), DsdbError> {
        self.put_all(std::iter::once(point))
    }

    pub fn put_all(&self, points: impl IntoIterator<Item = DesignPoint>) -> Result<(), DsdbError> {
        let mut writer = self.writer.lock().expect("dsdb writer poisoned");
        let points: Vec<DesignPoint> = points.into_iter().collect();
        if let Some(w) = writer.as_mut() {
            for p in &points {
                w.write_all(encode_record(p).as_bytes())?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        let mut index = self.index.write().expect("dsdb index poisoned");
        for p in points {
            index.insert(p);
        }
        Ok(())
    }

    /// Exact-key lookup.
    pub fn get(&self, key: &str) -> Option<DesignPoint> {
        self.index
            .read()
            .expect("dsdb index poisoned")
            .points
            .get(key)
            .cloned()
    }

    pub fn get_set(&self, set: &ParametersSet) -> Option<DesignPoint> {
        self.get(&set.canonical_key())
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("dsdb index poisoned").order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of every stored point in first-insertion order.
    pub fn snapshot(&self) -> Vec<DesignPoint> {
        let index = self.index.read().expect("dsdb index poisoned");
        index
            .order
            .iter()
            .map(|k| index.points[k].clone())
            .collect()
    }

    /// Writes one line per stored key (no superseded records).
    pub fn export(&self, path: impl AsRef<Path>) -> Result<usize, DsdbError> {
        let points = self.snapshot();
        let mut out = BufWriter::new(File::create(path)?);
        for p in &points {
            out.write_all(encode_record(p).as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(points.len())
    }

    /// Merges the records of another log file into this database.
    pub fn import(&self, path: impl AsRef<Path>) -> Result<usize, DsdbError> {
        let points = read_records(path.as_ref())?;
        let n = points.len();
        self.put_all(points)?;
        Ok(n)
    }

    pub fn frontier(&self) -> Vec<FrontierPoint> {
        skyline(&self.snapshot())
    }

    pub fn best_under_cost(&self, range: CostRange) -> Vec<DesignPoint> {
        best_under_cost(&self.snapshot(), range)
    }

    pub fn perf_ratio(&self, p_dse: f64, range: CostRange) -> Result<f64, DsdbError> {
        perf_ratio(p_dse, &self.snapshot(), range)
    }
}

impl std::fmt::Debug for Dsdb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dsdb")
            .field("path", &self.path)
            .field("len", &self.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub cost: f64,
    pub perf: f64,
    pub key: String,
}

/// `a` dominates `b`: no more expensive, no worse, and strictly better in
/// at least one of the two.
pub fn dominates(a_cost: f64, a_perf: f64, b_cost: f64, b_perf: f64) -> bool {
    a_cost <= b_cost && a_perf >= b_perf && (a_cost < b_cost || a_perf > b_perf)
}

/// Non-dominated points in (cost ascending, perf descending), sorted by
/// cost. Points sharing an identical (cost, perf) pair are all kept.
pub fn skyline(points: &[DesignPoint]) -> Vec<FrontierPoint> {
    let mut order: Vec<&DesignPoint> = points.iter().collect();
    order.sort_by(|a, b| {
        a.cost()
            .total_cmp(&b.cost())
            .then(b.perf().total_cmp(&a.perf()))
            .then_with(|| a.key.cmp(&b.key))
    });

    let mut frontier = Vec::new();
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // Each run of equal cost starts with its highest perf.
        let cost = order[i].cost();
        let group_max = order[i].perf();
        let mut j = i;
        while j < order.len() && order[j].cost() == cost {
            let p = order[j];
            if p.perf() == group_max && group_max > best_cheaper {
                frontier.push(FrontierPoint {
                    cost: p.cost(),
                    perf: p.perf(),
                    key: p.key.clone(),
                });
            }
            j += 1;
        }
        best_cheaper = best_cheaper.max(group_max);
        i = j;
    }
    frontier
}

/// All points in `range` that reach the maximum in-range perf. Ties use
/// exact float equality.
pub fn best_under_cost(points: &[DesignPoint], range: CostRange) -> Vec<DesignPoint> {
    let in_range = || points.iter().filter(|p| range.contains(p.cost()));
    let Some(max) = in_range().map(DesignPoint::perf).reduce(f64::max) else {
        return Vec::new();
    };
    in_range().filter(|p| p.perf() == max).cloned().collect()
}

/// `p_dse` divided by the best achievable perf within `range`. Matching
/// the optimum is a ratio of 1 even when the optimum is 0.
pub fn perf_ratio(p_dse: f64, points: &[DesignPoint], range: CostRange) -> Result<f64, DsdbError> {
    let best = best_under_cost(points, range);
    let target = best.first().ok_or(DsdbError::EmptyRange(range))?.perf();
    Ok(ratio_to(p_dse, target))
}

pub fn ratio_to(p_dse: f64, target: f64) -> f64 {
    if p_dse == target {
        1.0
    } else {
        p_dse / target
    }
}

/// Ratio above which a found point counts as realistic.
pub const REALISTIC_RATIO: f64 = 0.97;
