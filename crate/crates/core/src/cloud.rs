//! Cloud application layer: persist uplinked readings, answer
//! time-range/node queries, and raise threshold alarms.
//!
//! The store is the gateway sink format itself: append-only NDJSON with an
//! in-memory index rebuilt on load. Ingestion is idempotent on
//! (node_id, rx_timestamp_ms) because the frame carries no sequence number;
//! receive time is the only identity available.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("StoreUnavailable: {0}")]
    StoreUnavailable(String),
    #[error("BadRange: t_from {from_ms} ms exceeds t_to {to_ms} ms")]
    BadRange { from_ms: u64, to_ms: u64 },
    #[error("InvalidRule: {0}")]
    InvalidRule(String),
}

/// One decoded, timestamped record as persisted by the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub node_id: u8,
    pub rx_timestamp_ms: Option<u64>,
    pub ax_mg: i64,
    pub ay_mg: i64,
    pub az_mg: i64,
    pub temp_c: f64,
    pub pressure_kpa: f64,
    pub rssi_dbm: Option<f64>,
}

impl Reading {
    pub fn accel_magnitude_mg(&self) -> f64 {
        let (x, y, z) = (self.ax_mg as f64, self.ay_mg as f64, self.az_mg as f64);
        (x * x + y * y + z * z).sqrt()
    }

    fn dedup_key(&self) -> (u8, Option<u64>) {
        (self.node_id, self.rx_timestamp_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineRejection {
    pub line_number: usize,
    pub reason: String,
}

/// Ingestion counters. Duplicate lines count as accepted (they are
/// well-formed and already present) but do not change the store.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IngestStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rejections: Vec<LineRejection>,
}

/// Reading store: optional NDJSON file backing plus the in-memory index.
#[derive(Debug, Default)]
pub struct ReadingStore {
    path: Option<PathBuf>,
    readings: Vec<Reading>,
    keys: HashSet<(u8, Option<u64>)>,
}

impl ReadingStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create) a file-backed store and rebuild the index from any
    /// existing lines. Lines that fail to parse are skipped here; they were
    /// rejected when first presented.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self {
            path: Some(path.clone()),
            ..Self::default()
        };
        match std::fs::read_to_string(&path) {
            Ok(contents) => {
                for line in contents.lines() {
                    if let Ok(reading) = serde_json::from_str::<Reading>(line) {
                        if store.keys.insert(reading.dedup_key()) {
                            store.readings.push(reading);
                        }
                    }
                }
                Ok(store)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(store),
            Err(e) => Err(StoreError::StoreUnavailable(format!(
                "{}: {e}",
                path.display()
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn readings(&self) -> &[Reading] {
        &self.readings
    }

    /// Ingest gateway-format NDJSON lines. Well-formed lines become
    /// readings; re-ingesting a line already in the store changes nothing;
    /// malformed lines are counted rejected with the parse reason.
    pub fn ingest_lines<'a>(
        &mut self,
        lines: impl IntoIterator<Item = &'a str>,
    ) -> Result<IngestStats, StoreError> {
        let mut stats = IngestStats::default();
        let mut appended: Vec<String> = Vec::new();
        for (index, line) in lines.into_iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Reading>(line) {
                Ok(reading) => {
                    stats.accepted += 1;
                    if self.keys.insert(reading.dedup_key()) {
                        self.readings.push(reading);
                        appended.push(line.to_string());
                    }
                }
                Err(e) => {
                    stats.rejected += 1;
                    stats.rejections.push(LineRejection {
                        line_number: index + 1,
                        reason: e.to_string(),
                    });
                }
            }
        }
        if let Some(path) = &self.path {
            if !appended.is_empty() {
                let mut file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| {
                        StoreError::StoreUnavailable(format!("{}: {e}", path.display()))
                    })?;
                let mut batch = appended.join("\n");
                batch.push('\n');
                file.write_all(batch.as_bytes()).map_err(|e| {
                    StoreError::StoreUnavailable(format!("{}: {e}", path.display()))
                })?;
            }
        }
        Ok(stats)
    }
}

/// Readings with a timestamp in [t_from_ms, t_to_ms], optionally filtered
/// by node, ordered by timestamp then node ID. Untimestamped readings never
/// match a time range.
pub fn query(
    store: &ReadingStore,
    node_id: Option<u8>,
    t_from_ms: u64,
    t_to_ms: u64,
) -> Result<Vec<Reading>, StoreError> {
    if t_from_ms > t_to_ms {
        return Err(StoreError::BadRange {
            from_ms: t_from_ms,
            to_ms: t_to_ms,
        });
    }
    let mut out: Vec<Reading> = store
        .readings
        .iter()
        .filter(|r| {
            r.rx_timestamp_ms
                .is_some_and(|ts| ts >= t_from_ms && ts <= t_to_ms)
        })
        .filter(|r| node_id.is_none_or(|id| r.node_id == id))
        .cloned()
        .collect();
    out.sort_by_key(|r| (r.rx_timestamp_ms, r.node_id));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmMetric {
    AccelMagnitudeMg,
    TempC,
    PressureKpa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparator {
    fn holds(&self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
        }
    }
}

fn default_enabled() -> bool {
    true
}

/// A threshold rule, optionally scoped to one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmRule {
    pub metric: AlarmMetric,
    pub comparator: Comparator,
    pub threshold: f64,
    #[serde(default)]
    pub node_id: Option<u8>,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

impl AlarmRule {
    pub fn validate(&self) -> Result<(), StoreError> {
        if !self.threshold.is_finite() {
            return Err(StoreError::InvalidRule(format!(
                "threshold {} must be finite",
                self.threshold
            )));
        }
        Ok(())
    }

    fn metric_value(&self, reading: &Reading) -> f64 {
        match self.metric {
            AlarmMetric::AccelMagnitudeMg => reading.accel_magnitude_mg(),
            AlarmMetric::TempC => reading.temp_c,
            AlarmMetric::PressureKpa => reading.pressure_kpa,
        }
    }
}

/// Load an alarm rules file: a JSON list of rules, validated.
pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<AlarmRule>, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| StoreError::StoreUnavailable(format!("{}: {e}", path.display())))?;
    let rules: Vec<AlarmRule> = serde_json::from_str(&text)
        .map_err(|e| StoreError::InvalidRule(format!("{}: {e}", path.display())))?;
    for rule in &rules {
        rule.validate()?;
    }
    Ok(rules)
}

/// One rule violation by one reading.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alarm {
    pub rule_index: usize,
    pub metric: AlarmMetric,
    pub comparator: Comparator,
    pub threshold: f64,
    pub observed: f64,
    pub reading: Reading,
    pub fired_at_ms: Option<u64>,
}

/// Evaluate every enabled rule against every reading: exactly one alarm per
/// violating (rule, reading) pair, ordered by rule then store order.
pub fn evaluate_alarms(store: &ReadingStore, rules: &[AlarmRule]) -> Vec<Alarm> {
    let mut alarms = Vec::new();
    for (rule_index, rule) in rules.iter().enumerate() {
        if !rule.enabled {
            continue;
        }
        for reading in store.readings() {
            if rule.node_id.is_some_and(|id| id != reading.node_id) {
                continue;
            }
            let observed = rule.metric_value(reading);
            if rule.comparator.holds(observed, rule.threshold) {
                alarms.push(Alarm {
                    rule_index,
                    metric: rule.metric,
                    comparator: rule.comparator,
                    threshold: rule.threshold,
                    observed,
                    reading: reading.clone(),
                    fired_at_ms: reading.rx_timestamp_ms,
                });
            }
        }
    }
    alarms
}
