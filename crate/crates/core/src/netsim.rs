//! Deterministic discrete-event simulator of the star network: nodes 6-9
//! transmitting to the single gateway over the PHY channel, with
//! collision/capture semantics.
//!
//! Determinism is a hard requirement: one master seed derives a per-node
//! jitter substream, events are processed in (time, node_id, kind) order,
//! and identical scenarios produce byte-identical reports.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{RxMeta, WireFrame, FRAME_LEN};
use crate::node::{Currents, NodeConfig, NodeError, NodeState, SensorReadings};
use crate::phy::{receive_decision, time_on_air_s, PathLossModel, PhyError, RadioParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ScenarioInvalid: {0}")]
    ScenarioInvalid(String),
    #[error("ScenarioIo: {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("ScenarioParse: {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("StimulusParse: {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Phy(#[from] PhyError),
}

fn default_wake_period_s() -> f64 {
    60.0
}

fn default_jitter_s() -> f64 {
    2.0
}

fn default_battery_mah() -> f64 {
    2000.0
}

fn default_active_window_s() -> f64 {
    0.05
}

/// One node's entry in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioNode {
    pub node_id: u8,
    pub distance_m: f64,
    #[serde(default = "default_wake_period_s")]
    pub wake_period_s: f64,
    #[serde(default = "default_jitter_s")]
    pub jitter_s: f64,
    /// Offset of the first wake; staggering these avoids synchronized
    /// transmissions.
    #[serde(default)]
    pub first_wake_s: f64,
    /// CSV trace of physical inputs; absent means a quiet zero stimulus.
    #[serde(default)]
    pub stimulus_csv: Option<PathBuf>,
    #[serde(default)]
    pub currents: Currents,
    #[serde(default = "default_battery_mah")]
    pub battery_mah: f64,
    #[serde(default = "default_active_window_s")]
    pub active_window_s: f64,
}

impl ScenarioNode {
    pub fn new(node_id: u8, distance_m: f64) -> Self {
        Self {
            node_id,
            distance_m,
            wake_period_s: default_wake_period_s(),
            jitter_s: default_jitter_s(),
            first_wake_s: 0.0,
            stimulus_csv: None,
            currents: Currents::default(),
            battery_mah: default_battery_mah(),
            active_window_s: default_active_window_s(),
        }
    }

    fn node_config(&self, radio: RadioParams) -> NodeConfig {
        NodeConfig {
            node_id: self.node_id,
            wake_period_s: self.wake_period_s,
            jitter_s: self.jitter_s,
            radio,
            currents: self.currents,
            battery_mah: self.battery_mah,
            active_window_s: self.active_window_s,
        }
    }
}

/// A full simulation scenario. All nodes share one channel parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(default)]
    pub path_loss: PathLossModel,
    pub nodes: Vec<ScenarioNode>,
}

impl Scenario {
    /// Load a scenario from a JSON file. Relative stimulus CSV paths are
    /// resolved against the scenario file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut scenario: Scenario =
            serde_json::from_str(&text).map_err(|source| SimError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        if let Some(dir) = path.parent() {
            for node in &mut scenario.nodes {
                if let Some(csv_path) = &node.stimulus_csv {
                    if csv_path.is_relative() {
                        node.stimulus_csv = Some(dir.join(csv_path));
                    }
                }
            }
        }
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 {
            return Err(SimError::ScenarioInvalid(format!(
                "duration_s {} must be positive",
                self.duration_s
            )));
        }
        self.radio
            .validate()
            .map_err(|e| SimError::ScenarioInvalid(format!("radio: {e}")))?;
        self.path_loss
            .validate()
            .map_err(|e| SimError::ScenarioInvalid(format!("path_loss: {e}")))?;
        let mut seen = std::collections::HashSet::new();
        for node in &self.nodes {
            if !seen.insert(node.node_id) {
                return Err(SimError::ScenarioInvalid(format!(
                    "nodes: duplicate node_id {}",
                    node.node_id
                )));
            }
            node.node_config(self.radio)
                .validate()
                .map_err(|e| SimError::ScenarioInvalid(format!("nodes[{}]: {e}", node.node_id)))?;
            if !node.distance_m.is_finite() || node.distance_m < self.path_loss.reference_distance_m
            {
                return Err(SimError::ScenarioInvalid(format!(
                    "nodes[{}]: distance_m {} below the path-loss reference distance {}",
                    node.node_id, node.distance_m, self.path_loss.reference_distance_m
                )));
            }
            if !node.first_wake_s.is_finite() || node.first_wake_s < 0.0 {
                return Err(SimError::ScenarioInvalid(format!(
                    "nodes[{}]: first_wake_s {} must be non-negative",
                    node.node_id, node.first_wake_s
                )));
            }
        }
        Ok(())
    }
}

/// One row of a stimulus CSV.
#[derive(Debug, Clone, Copy, Deserialize)]
struct StimulusRow {
    t_s: f64,
    ax_g: f64,
    ay_g: f64,
    az_g: f64,
    temp_c: f64,
    pressure_kpa: f64,
}

/// Time-indexed physical input trace, sampled with zero-order hold.
#[derive(Debug, Clone, Default)]
pub struct StimulusTrace {
    rows: Vec<(f64, SensorReadings)>,
}

impl StimulusTrace {
    /// Quiet trace: all inputs zero at all times.
    pub fn quiet() -> Self {
        Self::default()
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|source| SimError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let mut rows = Vec::new();
        for record in reader.deserialize::<StimulusRow>() {
            let row = record.map_err(|source| SimError::Csv {
                path: path.display().to_string(),
                source,
            })?;
            rows.push((
                row.t_s,
                SensorReadings {
                    ax_g: row.ax_g,
                    ay_g: row.ay_g,
                    az_g: row.az_g,
                    temp_c: row.temp_c,
                    pressure_kpa: row.pressure_kpa,
                },
            ));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { rows })
    }

    /// Value at time `t`: the latest row at or before `t`, clamped to the
    /// first row before the trace starts; zeros for an empty trace.
    pub fn sample(&self, t: f64) -> SensorReadings {
        match self.rows.partition_point(|(row_t, _)| *row_t <= t) {
            0 => self.rows.first().map(|(_, r)| *r).unwrap_or_default(),
            n => self.rows[n - 1].1,
        }
    }
}

/// Event kinds, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SimEventKind {
    NodeWake,
    TxStart,
    TxEnd,
    RxDeliver,
    RxCollision,
}

/// One entry of the simulation's event log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEvent {
    pub time_s: f64,
    pub kind: SimEventKind,
    pub node_id: u8,
}

/// A transmission window at the gateway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxWindow {
    pub node_id: u8,
    pub start_s: f64,
    pub end_s: f64,
    pub rssi_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxDisposition {
    Delivered,
    Collided,
}

/// Strict interval overlap; frames that only touch endpoints do not
/// interfere.
fn windows_overlap(a: &TxWindow, b: &TxWindow) -> bool {
    a.start_s < b.end_s && b.start_s < a.end_s
}

fn is_captured(index: usize, windows: &[TxWindow], capture_threshold_db: f64) -> bool {
    let this = &windows[index];
    windows
        .iter()
        .enumerate()
        .filter(|(j, other)| *j != index && windows_overlap(this, other))
        .all(|(_, other)| this.rssi_dbm - other.rssi_dbm >= capture_threshold_db)
}

/// Capture-effect resolution: a frame is delivered iff its RSSI exceeds
/// every overlapping frame's RSSI by at least the capture threshold; all
/// others collide. A frame with no overlap is delivered vacuously.
pub fn collision_outcomes(windows: &[TxWindow], capture_threshold_db: f64) -> Vec<TxDisposition> {
    (0..windows.len())
        .map(|i| {
            if is_captured(i, windows, capture_threshold_db) {
                TxDisposition::Delivered
            } else {
                TxDisposition::Collided
            }
        })
        .collect()
}

/// Per-node outcome counters and energy total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeReport {
    pub sent: u64,
    pub delivered: u64,
    pub collided: u64,
    pub out_of_range: u64,
    pub energy_mah: f64,
    pub distance_m: f64,
    pub rssi_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Totals {
    pub sent: u64,
    pub delivered: u64,
    pub collided: u64,
    pub out_of_range: u64,
}

/// One delivered frame in the report timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeliveryRecord {
    pub time_s: f64,
    pub node_id: u8,
    pub rssi_dbm: f64,
    pub rx_timestamp_ms: u64,
}

/// Delivery/collision/energy summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub duration_s: f64,
    pub seed: u64,
    pub nodes: BTreeMap<String, NodeReport>,
    pub totals: Totals,
    pub delivery_ratio: f64,
    pub deliveries: Vec<DeliveryRecord>,
}

impl SimReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// A frame that reached the gateway, with its reception metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub wire: WireFrame,
    pub meta: RxMeta,
}

/// Full simulation output: the report plus the raw deliveries and event log.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub report: SimReport,
    pub received: Vec<ReceivedFrame>,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Wake { cycle: u64 },
    TxStart { tx: usize },
    TxEnd { tx: usize },
}

impl Pending {
    fn rank(&self) -> u8 {
        match self {
            Pending::Wake { .. } => 0,
            Pending::TxStart { .. } => 1,
            Pending::TxEnd { .. } => 2,
        }
    }
}

/// Queue entry ordered by (time, node_id, kind); ties cannot reorder across
/// runs because the ordering is total.
#[derive(Debug, Clone, Copy)]
struct QueueEntry {
    time_s: f64,
    node_id: u8,
    node_index: usize,
    pending: Pending,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time_s
            .total_cmp(&other.time_s)
            .then(self.node_id.cmp(&other.node_id))
            .then(self.pending.rank().cmp(&other.pending.rank()))
    }
}

struct NodeSim {
    cfg: NodeConfig,
    first_wake_s: f64,
    distance_m: f64,
    rssi_dbm: f64,
    in_range: bool,
    trace: StimulusTrace,
    state: NodeState,
    rng: ChaCha8Rng,
    delivered: u64,
    collided: u64,
    out_of_range: u64,
}

struct SimWindow {
    window: TxWindow,
    wire: WireFrame,
    in_range: bool,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive each node's jitter substream from the single scenario seed, so
/// draws are independent of event processing order.
fn node_seed(seed: u64, node_id: u8) -> u64 {
    splitmix64(seed ^ (u64::from(node_id) << 32))
}

/// Run a scenario, returning the report plus the frames the gateway
/// received and the full event log.
pub fn run_scenario_full(scenario: &Scenario) -> Result<SimOutput, SimError> {
    scenario.validate()?;
    let toa_s = time_on_air_s(&scenario.radio, FRAME_LEN)?;

    let mut nodes = Vec::with_capacity(scenario.nodes.len());
    for node_spec in &scenario.nodes {
        let reception =
            receive_decision(&scenario.radio, &scenario.path_loss, node_spec.distance_m)?;
        let trace = match &node_spec.stimulus_csv {
            Some(path) => StimulusTrace::from_csv_path(path)?,
            None => StimulusTrace::quiet(),
        };
        nodes.push(NodeSim {
            cfg: node_spec.node_config(scenario.radio),
            first_wake_s: node_spec.first_wake_s,
            distance_m: node_spec.distance_m,
            rssi_dbm: reception.rssi_dbm(),
            in_range: reception.is_received(),
            trace,
            state: NodeState::new(),
            rng: ChaCha8Rng::seed_from_u64(node_seed(scenario.seed, node_spec.node_id)),
            delivered: 0,
            collided: 0,
            out_of_range: 0,
        });
    }

    let mut queue: BinaryHeap<Reverse<QueueEntry>> = BinaryHeap::new();
    for (index, node) in nodes.iter_mut().enumerate() {
        let jitter = node.rng.random::<f64>() * node.cfg.jitter_s;
        let t0 = node.first_wake_s + jitter;
        if t0 < scenario.duration_s {
            queue.push(Reverse(QueueEntry {
                time_s: t0,
                node_id: node.cfg.node_id,
                node_index: index,
                pending: Pending::Wake { cycle: 0 },
            }));
        }
    }

    let mut windows: Vec<SimWindow> = Vec::new();
    let mut events: Vec<SimEvent> = Vec::new();
    let mut deliveries: Vec<DeliveryRecord> = Vec::new();
    let mut received: Vec<ReceivedFrame> = Vec::new();

    while let Some(Reverse(entry)) = queue.pop() {
        let node = &mut nodes[entry.node_index];
        match entry.pending {
            Pending::Wake { cycle } => {
                let t = entry.time_s;
                events.push(SimEvent {
                    time_s: t,
                    kind: SimEventKind::NodeWake,
                    node_id: entry.node_id,
                });

                // Sleep/Init -> Sample -> Encode -> Transmit; the frame is
                // emitted when the node enters Transmit at t + window.
                let w = node.cfg.active_window_s;
                let mut emitted = None;
                for now in [t, t + w / 2.0, t + w] {
                    let stimulus = node.trace.sample(now);
                    if let Some(wire) = node.state.step(&node.cfg, &stimulus, now)? {
                        emitted = Some(wire);
                    }
                }
                let wire = emitted.ok_or_else(|| {
                    SimError::ScenarioInvalid(format!(
                        "nodes[{}]: cycle produced no frame",
                        entry.node_id
                    ))
                })?;

                let tx = windows.len();
                windows.push(SimWindow {
                    window: TxWindow {
                        node_id: entry.node_id,
                        start_s: t + w,
                        end_s: t + w + toa_s,
                        rssi_dbm: node.rssi_dbm,
                    },
                    wire,
                    in_range: node.in_range,
                });
                queue.push(Reverse(QueueEntry {
                    time_s: t + w,
                    node_id: entry.node_id,
                    node_index: entry.node_index,
                    pending: Pending::TxStart { tx },
                }));
                queue.push(Reverse(QueueEntry {
                    time_s: t + w + toa_s,
                    node_id: entry.node_id,
                    node_index: entry.node_index,
                    pending: Pending::TxEnd { tx },
                }));

                let jitter = node.rng.random::<f64>() * node.cfg.jitter_s;
                let t_next =
                    node.first_wake_s + node.cfg.wake_period_s * (cycle + 1) as f64 + jitter;
                if t_next < scenario.duration_s {
                    queue.push(Reverse(QueueEntry {
                        time_s: t_next,
                        node_id: entry.node_id,
                        node_index: entry.node_index,
                        pending: Pending::Wake { cycle: cycle + 1 },
                    }));
                }
            }
            Pending::TxStart { .. } => {
                events.push(SimEvent {
                    time_s: entry.time_s,
                    kind: SimEventKind::TxStart,
                    node_id: entry.node_id,
                });
            }
            Pending::TxEnd { tx } => {
                let t = entry.time_s;
                // Transmit -> Sleep: the TX and nominal-sleep debits land
                // here.
                let stimulus = node.trace.sample(t);
                node.state.step(&node.cfg, &stimulus, t)?;
                events.push(SimEvent {
                    time_s: t,
                    kind: SimEventKind::TxEnd,
                    node_id: entry.node_id,
                });

                if !windows[tx].in_range {
                    node.out_of_range += 1;
                    continue;
                }
                // Every window overlapping this one has already started
                // (its TxStart time is strictly before this TxEnd), so the
                // scan over the registered windows is complete. Windows are
                // start-sorted and share one duration (single channel
                // parameter set), so the overlap candidates form the
                // contiguous range with start in (start - toa, end).
                let this = windows[tx].window;
                let lo = windows.partition_point(|w| w.window.start_s <= this.start_s - toa_s);
                let hi = windows.partition_point(|w| w.window.start_s < this.end_s);
                let captured = (lo..hi).filter(|&j| j != tx).all(|j| {
                    this.rssi_dbm - windows[j].window.rssi_dbm
                        >= scenario.path_loss.capture_threshold_db
                });
                if captured {
                    node.delivered += 1;
                    let rx_timestamp_ms = (t * 1000.0).round() as u64;
                    events.push(SimEvent {
                        time_s: t,
                        kind: SimEventKind::RxDeliver,
                        node_id: entry.node_id,
                    });
                    deliveries.push(DeliveryRecord {
                        time_s: t,
                        node_id: entry.node_id,
                        rssi_dbm: this.rssi_dbm,
                        rx_timestamp_ms,
                    });
                    received.push(ReceivedFrame {
                        wire: windows[tx].wire,
                        meta: RxMeta::new(rx_timestamp_ms, this.rssi_dbm),
                    });
                } else {
                    node.collided += 1;
                    events.push(SimEvent {
                        time_s: t,
                        kind: SimEventKind::RxCollision,
                        node_id: entry.node_id,
                    });
                }
            }
        }
    }

    let mut report_nodes = BTreeMap::new();
    let mut totals = Totals::default();
    for node in &nodes {
        let sent = node.state.frames_sent;
        totals.sent += sent;
        totals.delivered += node.delivered;
        totals.collided += node.collided;
        totals.out_of_range += node.out_of_range;
        report_nodes.insert(
            node.cfg.node_id.to_string(),
            NodeReport {
                sent,
                delivered: node.delivered,
                collided: node.collided,
                out_of_range: node.out_of_range,
                energy_mah: node.state.consumed_mah,
                distance_m: node.distance_m,
                rssi_dbm: node.rssi_dbm,
            },
        );
    }
    let delivery_ratio = if totals.sent > 0 {
        totals.delivered as f64 / totals.sent as f64
    } else {
        0.0
    };

    Ok(SimOutput {
        report: SimReport {
            duration_s: scenario.duration_s,
            seed: scenario.seed,
            nodes: report_nodes,
            totals,
            delivery_ratio,
            deliveries,
        },
        received,
        events,
    })
}

/// Run a scenario and return only the report.
pub fn run_scenario(scenario: &Scenario) -> Result<SimReport, SimError> {
    Ok(run_scenario_full(scenario)?.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeSweepRow {
    pub distance_m: f64,
    pub delivery_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeSweepReport {
    pub rows: Vec<RangeSweepRow>,
    /// The largest tested distance still delivering every frame: the
    /// in-model analogue of a staged field range test's final figure.
    pub max_full_delivery_m: Option<f64>,
}

/// Replay a single-node scenario at each distance and tabulate the
/// delivery ratio.
pub fn range_sweep(template: &Scenario, distances: &[f64]) -> Result<RangeSweepReport, SimError> {
    if template.nodes.len() != 1 {
        return Err(SimError::ScenarioInvalid(format!(
            "range sweep requires a single-node scenario template, got {} nodes",
            template.nodes.len()
        )));
    }
    let mut rows = Vec::with_capacity(distances.len());
    for &distance_m in distances {
        let mut scenario = template.clone();
        scenario.nodes[0].distance_m = distance_m;
        let report = run_scenario(&scenario)?;
        rows.push(RangeSweepRow {
            distance_m,
            delivery_ratio: report.delivery_ratio,
        });
    }
    let max_full_delivery_m = rows
        .iter()
        .filter(|row| row.delivery_ratio == 1.0)
        .map(|row| row.distance_m)
        .fold(None, |acc: Option<f64>, d| {
            Some(acc.map_or(d, |m| m.max(d)))
        });
    Ok(RangeSweepReport {
        rows,
        max_full_delivery_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::frame::decode_frame;
    use crate::node::energy_per_cycle_mah;

    fn quiet_node(node_id: u8, distance_m: f64, first_wake_s: f64) -> ScenarioNode {
        ScenarioNode {
            jitter_s: 0.0,
            first_wake_s,
            ..ScenarioNode::new(node_id, distance_m)
        }
    }

    fn star4() -> Scenario {
        Scenario {
            duration_s: 600.0,
            seed: 42,
            radio: RadioParams::default(),
            path_loss: PathLossModel::default(),
            nodes: vec![
                quiet_node(6, 100.0, 0.0),
                quiet_node(7, 100.0, 15.0),
                quiet_node(8, 100.0, 30.0),
                quiet_node(9, 100.0, 45.0),
            ],
        }
    }

    #[test]
    fn staggered_star_delivers_everything() {
        let report = run_scenario(&star4()).unwrap();
        assert_eq!(report.delivery_ratio, 1.0);
        for (id, node) in &report.nodes {
            assert_eq!(node.sent, 10, "node {id}");
            assert_eq!(node.delivered, 10, "node {id}");
            assert_eq!(node.collided, 0);
            assert_eq!(node.out_of_range, 0);
        }
        assert_eq!(report.deliveries.len(), 40);
    }

    #[test]
    fn identical_wake_times_collide_completely() {
        let scenario = Scenario {
            duration_s: 600.0,
            seed: 1,
            radio: RadioParams::default(),
            path_loss: PathLossModel::default(),
            nodes: vec![quiet_node(6, 100.0, 0.0), quiet_node(7, 100.0, 0.0)],
        };
        let report = run_scenario(&scenario).unwrap();
        assert_eq!(report.totals.delivered, 0);
        assert_eq!(report.totals.collided, report.totals.sent);
        assert_eq!(report.delivery_ratio, 0.0);
    }

    #[test]
    fn far_node_with_steep_exponent_is_out_of_range() {
        // At 6 km with exponent 4.0 the path loss (~176 dB) exceeds the
        // 170 dB budget, so every frame lands below sensitivity.
        let scenario = Scenario {
            duration_s: 300.0,
            seed: 2,
            radio: RadioParams::default(),
            path_loss: PathLossModel {
                exponent: 4.0,
                ..PathLossModel::default()
            },
            nodes: vec![quiet_node(6, 6000.0, 0.0)],
        };
        let report = run_scenario(&scenario).unwrap();
        let node = &report.nodes["6"];
        assert!(node.sent > 0);
        assert_eq!(node.out_of_range, node.sent);
        assert_eq!(node.delivered, 0);
        assert_eq!(node.collided, 0);
    }

    #[test]
    fn single_node_never_collides() {
        for seed in 0..10 {
            let scenario = Scenario {
                duration_s: 240.0,
                seed,
                radio: RadioParams::default(),
                path_loss: PathLossModel::default(),
                nodes: vec![ScenarioNode {
                    wake_period_s: 5.0,
                    jitter_s: 2.0,
                    ..ScenarioNode::new(6, 200.0)
                }],
            };
            let report = run_scenario(&scenario).unwrap();
            assert_eq!(report.nodes["6"].collided, 0, "seed {seed}");
        }
    }

    #[test]
    fn determinism_same_seed_same_bytes() {
        let scenario = star4();
        let a = run_scenario(&scenario).unwrap().to_json_string();
        let b = run_scenario(&scenario).unwrap().to_json_string();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_changes_only_jittered_timing() {
        let base = Scenario {
            duration_s: 600.0,
            seed: 10,
            radio: RadioParams::default(),
            path_loss: PathLossModel::default(),
            nodes: vec![ScenarioNode {
                jitter_s: 1.0,
                ..ScenarioNode::new(6, 100.0)
            }],
        };
        let reseeded = Scenario {
            seed: 11,
            ..base.clone()
        };
        let a = run_scenario(&base).unwrap();
        let b = run_scenario(&reseeded).unwrap();
        assert_eq!(a.totals.sent, b.totals.sent);
        assert_eq!(a.totals.delivered, b.totals.delivered);
        let times_differ = a
            .deliveries
            .iter()
            .zip(&b.deliveries)
            .any(|(x, y)| x.time_s != y.time_s);
        assert!(times_differ, "jitter streams should differ across seeds");
    }

    #[test]
    fn simulated_energy_matches_closed_form() {
        let output = run_scenario_full(&star4()).unwrap();
        for node in &star4().nodes {
            let cfg = node.node_config(RadioParams::default());
            let per_cycle = energy_per_cycle_mah(&cfg).unwrap();
            let report = &output.report.nodes[&node.node_id.to_string()];
            let expected = per_cycle * report.sent as f64;
            assert!(
                (report.energy_mah - expected).abs() < 1e-6,
                "node {}: {} vs {}",
                node.node_id,
                report.energy_mah,
                expected
            );
        }
    }

    #[test]
    fn received_frames_decode_to_their_nodes() {
        let output = run_scenario_full(&star4()).unwrap();
        assert_eq!(output.received.len(), 40);
        for rx in &output.received {
            let frame = decode_frame(rx.wire.as_ref()).unwrap();
            assert!((6..=9).contains(&frame.node_id));
            assert!(rx.meta.rx_timestamp_ms.is_some());
        }
        // arrival order is time order
        let mut last = 0;
        for rx in &output.received {
            let ts = rx.meta.rx_timestamp_ms.unwrap();
            assert!(ts >= last);
            last = ts;
        }
    }

    #[test]
    fn event_log_is_time_ordered() {
        let output = run_scenario_full(&star4()).unwrap();
        for pair in output.events.windows(2) {
            assert!(pair[0].time_s <= pair[1].time_s);
        }
    }

    #[test]
    fn collision_rule_examples() {
        let base = TxWindow {
            node_id: 6,
            start_s: 0.0,
            end_s: 1.0,
            rssi_dbm: -70.0,
        };

        // two frames, 10 dB apart: stronger delivered, weaker collided
        let windows = [
            base,
            TxWindow {
                node_id: 7,
                rssi_dbm: -80.0,
                ..base
            },
        ];
        assert_eq!(
            collision_outcomes(&windows, 6.0),
            vec![TxDisposition::Delivered, TxDisposition::Collided]
        );

        // equal power: both collide
        let windows = [base, TxWindow { node_id: 7, ..base }];
        assert_eq!(
            collision_outcomes(&windows, 6.0),
            vec![TxDisposition::Collided, TxDisposition::Collided]
        );

        // exactly at the threshold: the margin is inclusive
        let windows = [
            base,
            TxWindow {
                node_id: 7,
                rssi_dbm: -76.0,
                ..base
            },
        ];
        assert_eq!(
            collision_outcomes(&windows, 6.0)[0],
            TxDisposition::Delivered
        );

        // single frame, rule vacuous
        assert_eq!(
            collision_outcomes(&[base], 6.0),
            vec![TxDisposition::Delivered]
        );

        // disjoint windows never interfere
        let windows = [
            base,
            TxWindow {
                node_id: 7,
                start_s: 1.0,
                end_s: 2.0,
                ..base
            },
        ];
        assert_eq!(
            collision_outcomes(&windows, 6.0),
            vec![TxDisposition::Delivered, TxDisposition::Delivered]
        );
    }

    #[test]
    fn capture_delivers_the_stronger_frame() {
        // nodes at 100 m and 200 m: 28*log10(2) ~= 8.4 dB apart, above the
        // 6 dB capture threshold
        let scenario = Scenario {
            duration_s: 600.0,
            seed: 3,
            radio: RadioParams::default(),
            path_loss: PathLossModel::default(),
            nodes: vec![quiet_node(6, 100.0, 0.0), quiet_node(7, 200.0, 0.0)],
        };
        let report = run_scenario(&scenario).unwrap();
        let near = &report.nodes["6"];
        let far = &report.nodes["7"];
        assert_eq!(near.delivered, near.sent);
        assert_eq!(far.collided, far.sent);
    }

    #[test]
    fn range_sweep_default_model_covers_deployment_distances() {
        let template = Scenario {
            duration_s: 300.0,
            seed: 4,
            radio: RadioParams::default(),
            path_loss: PathLossModel::default(),
            nodes: vec![quiet_node(6, 100.0, 0.0)],
        };
        let sweep = range_sweep(&template, &[100.0, 500.0, 1000.0, 5000.0]).unwrap();
        assert!(sweep.rows.iter().all(|row| row.delivery_ratio == 1.0));
        assert_eq!(sweep.max_full_delivery_m, Some(5000.0));
    }

    #[test]
    fn range_sweep_steep_exponent_shows_cutoff() {
        let template = Scenario {
            duration_s: 300.0,
            seed: 5,
            radio: RadioParams::default(),
            path_loss: PathLossModel {
                exponent: 4.0,
                ..PathLossModel::default()
            },
            nodes: vec![quiet_node(6, 100.0, 0.0)],
        };
        let sweep = range_sweep(&template, &[100.0, 500.0, 1000.0, 5000.0]).unwrap();
        assert_eq!(sweep.rows[2].delivery_ratio, 1.0); // 1 km still in budget
        assert_eq!(sweep.rows[3].delivery_ratio, 0.0); // 5 km beyond it
        assert_eq!(sweep.max_full_delivery_m, Some(1000.0));
    }

    #[test]
    fn emission_rate_matches_wake_period_over_long_horizon() {
        let scenario = Scenario {
            duration_s: 3600.0,
            seed: 12,
            radio: RadioParams::default(),
            path_loss: PathLossModel::default(),
            nodes: vec![ScenarioNode {
                jitter_s: 2.0,
                ..ScenarioNode::new(6, 100.0)
            }],
        };
        let report = run_scenario(&scenario).unwrap();
        // one frame per wake period regardless of jitter
        assert_eq!(report.nodes["6"].sent, 60);
    }

    #[test]
    fn parallel_runs_of_the_same_scenario_agree() {
        // whole scenarios are embarrassingly parallel; determinism must
        // survive running them on separate threads
        let reference = run_scenario(&star4()).unwrap().to_json_string();
        let handles: Vec<_> = (0..4)
            .map(|_| std::thread::spawn(|| run_scenario(&star4()).unwrap().to_json_string()))
            .collect();
        for handle in handles {
            assert_eq!(handle.join().unwrap(), reference);
        }
    }

    #[test]
    fn delivery_ratio_non_increasing_in_distance() {
        let template = Scenario {
            duration_s: 300.0,
            seed: 6,
            radio: RadioParams::default(),
            path_loss: PathLossModel {
                exponent: 4.0,
                ..PathLossModel::default()
            },
            nodes: vec![quiet_node(6, 100.0, 0.0)],
        };
        let distances: Vec<f64> = (1..=40).map(|i| 250.0 * f64::from(i)).collect();
        let sweep = range_sweep(&template, &distances).unwrap();
        for pair in sweep.rows.windows(2) {
            assert!(
                pair[1].delivery_ratio <= pair[0].delivery_ratio,
                "ratio increased from {} m to {} m",
                pair[0].distance_m,
                pair[1].distance_m
            );
        }
    }

    #[test]
    fn range_sweep_empty_distances_is_empty() {
        let template = Scenario {
            duration_s: 60.0,
            seed: 0,
            radio: RadioParams::default(),
            path_loss: PathLossModel::default(),
            nodes: vec![quiet_node(6, 100.0, 0.0)],
        };
        let sweep = range_sweep(&template, &[]).unwrap();
        assert!(sweep.rows.is_empty());
        assert_eq!(sweep.max_full_delivery_m, None);
    }

    #[test]
    fn range_sweep_requires_single_node() {
        let err = range_sweep(&star4(), &[100.0]).unwrap_err();
        assert!(matches!(err, SimError::ScenarioInvalid(_)));
    }

    #[test]
    fn scenario_validation_diagnostics() {
        let mut scenario = star4();
        scenario.duration_s = 0.0;
        assert!(matches!(
            scenario.validate(),
            Err(SimError::ScenarioInvalid(msg)) if msg.contains("duration_s")
        ));

        let mut scenario = star4();
        scenario.nodes[1].node_id = 6;
        assert!(matches!(
            scenario.validate(),
            Err(SimError::ScenarioInvalid(msg)) if msg.contains("duplicate node_id 6")
        ));

        let mut scenario = star4();
        scenario.nodes[0].distance_m = 0.1;
        assert!(matches!(
            scenario.validate(),
            Err(SimError::ScenarioInvalid(msg)) if msg.contains("reference distance")
        ));
    }

    #[test]
    fn empty_scenario_yields_empty_report() {
        let scenario = Scenario {
            duration_s: 60.0,
            seed: 0,
            radio: RadioParams::default(),
            path_loss: PathLossModel::default(),
            nodes: vec![],
        };
        let report = run_scenario(&scenario).unwrap();
        assert!(report.nodes.is_empty());
        assert_eq!(report.totals.sent, 0);
        assert_eq!(report.delivery_ratio, 0.0);
    }

    #[test]
    fn stimulus_trace_zero_order_hold() {
        let trace = StimulusTrace {
            rows: vec![
                (
                    0.0,
                    SensorReadings {
                        temp_c: 10.0,
                        ..Default::default()
                    },
                ),
                (
                    5.0,
                    SensorReadings {
                        temp_c: 20.0,
                        ..Default::default()
                    },
                ),
            ],
        };
        assert_eq!(trace.sample(-1.0).temp_c, 10.0); // clamped to first row
        assert_eq!(trace.sample(0.0).temp_c, 10.0);
        assert_eq!(trace.sample(4.999).temp_c, 10.0);
        assert_eq!(trace.sample(5.0).temp_c, 20.0);
        assert_eq!(trace.sample(100.0).temp_c, 20.0);
        assert_eq!(
            StimulusTrace::quiet().sample(3.0),
            SensorReadings::default()
        );
    }
}
