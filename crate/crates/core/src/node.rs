//! Sensor-node duty cycle: init -> (sample -> encode -> transmit -> sleep)*
//! with an energy ledger that predicts battery life.
//!
//! Each call to [`NodeState::step`] completes the current phase and advances
//! to the next, debiting the ledger by phase duration times phase current.
//! The sleep debit is applied on entering Sleep using the nominal remainder
//! of the wake period, so the ledger stays equal to the closed-form
//! per-cycle prediction regardless of wake jitter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{
    encode_frame, FrameError, TelemetryFrame, WireFrame, FRAME_LEN, NODE_GATEWAY_ID, NODE_ID_MAX,
    NODE_ID_MIN, PRESSURE_CENTI_MAX, TEMP_CENTI_MAX, TEMP_CENTI_MIN,
};
use crate::phy::{time_on_air_s, PhyError, RadioParams};
use crate::sensors::{Adxl362Model, SensorError};

pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error("ClockRegression: now {now_s} s is earlier than {prev_s} s")]
    ClockRegression { prev_s: f64, now_s: f64 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Codec(#[from] FrameError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

/// Supply currents drawn in each phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Currents {
    pub tx_ma: f64,
    pub listen_ma: f64,
    pub sleep_ua: f64,
    pub sensor_ua: f64,
}

impl Default for Currents {
    fn default() -> Self {
        Self {
            tx_ma: 120.0,
            listen_ma: 15.0,
            sleep_ua: 20.0,
            sensor_ua: 2.0,
        }
    }
}

/// Per-node configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub node_id: u8,
    pub wake_period_s: f64,
    /// Uniform wake jitter bound in seconds; 0 forces exact periods.
    pub jitter_s: f64,
    pub radio: RadioParams,
    pub currents: Currents,
    pub battery_mah: f64,
    /// Combined sample+encode window at listen current.
    pub active_window_s: f64,
}

impl NodeConfig {
    pub fn new(node_id: u8) -> Self {
        Self {
            node_id,
            wake_period_s: 60.0,
            jitter_s: 2.0,
            radio: RadioParams::default(),
            currents: Currents::default(),
            battery_mah: 2000.0,
            active_window_s: 0.05,
        }
    }

    /// Time on air of one full telemetry frame under this node's radio.
    pub fn frame_time_on_air_s(&self) -> Result<f64, PhyError> {
        time_on_air_s(&self.radio, FRAME_LEN)
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if !(NODE_ID_MIN..=NODE_ID_MAX).contains(&self.node_id) {
            return Err(NodeError::InvalidConfig(format!(
                "node_id {} outside {NODE_ID_MIN}..={NODE_ID_MAX}",
                self.node_id
            )));
        }
        self.radio.validate()?;
        if !self.jitter_s.is_finite() || self.jitter_s < 0.0 {
            return Err(NodeError::InvalidConfig(format!(
                "jitter_s {} must be non-negative",
                self.jitter_s
            )));
        }
        if !self.active_window_s.is_finite() || self.active_window_s <= 0.0 {
            return Err(NodeError::InvalidConfig(format!(
                "active_window_s {} must be positive",
                self.active_window_s
            )));
        }
        let c = &self.currents;
        let current_ok = |v: f64| v.is_finite() && v > 0.0;
        if !current_ok(c.tx_ma)
            || !current_ok(c.listen_ma)
            || !current_ok(c.sleep_ua)
            || !current_ok(c.sensor_ua)
        {
            return Err(NodeError::InvalidConfig(
                "all currents must be positive".to_string(),
            ));
        }
        if !self.battery_mah.is_finite() || self.battery_mah <= 0.0 {
            return Err(NodeError::InvalidConfig(format!(
                "battery_mah {} must be positive",
                self.battery_mah
            )));
        }
        let toa = self.frame_time_on_air_s()?;
        if !self.wake_period_s.is_finite() || self.wake_period_s <= toa {
            return Err(NodeError::InvalidConfig(format!(
                "wake_period_s {} must exceed the frame time on air {toa}",
                self.wake_period_s
            )));
        }
        // Stronger bound than the ToA check alone: the active window and the
        // jitter must also fit inside the period, or phases of consecutive
        // cycles would interleave and a single node could overlap itself.
        if self.wake_period_s <= self.active_window_s + toa + self.jitter_s {
            return Err(NodeError::InvalidConfig(format!(
                "wake_period_s {} must exceed active_window_s + ToA + jitter_s = {}",
                self.wake_period_s,
                self.active_window_s + toa + self.jitter_s
            )));
        }
        Ok(())
    }
}

/// Sleep-phase current in mA: MCU stop mode plus sensor quiescent draw.
fn sleep_current_ma(c: &Currents) -> f64 {
    (c.sleep_ua + c.sensor_ua) / 1000.0
}

/// Nominal sleep duration of one cycle in seconds.
fn nominal_sleep_s(cfg: &NodeConfig, toa_s: f64) -> f64 {
    (cfg.wake_period_s - cfg.active_window_s - toa_s).max(0.0)
}

/// Charge drawn per cycle in mAh:
/// TX leg + sleep remainder + the sample/encode window at listen current.
pub fn energy_per_cycle_mah(cfg: &NodeConfig) -> Result<f64, PhyError> {
    let toa = cfg.frame_time_on_air_s()?;
    let tx = cfg.currents.tx_ma * toa / SECONDS_PER_HOUR;
    let active = cfg.currents.listen_ma * cfg.active_window_s / SECONDS_PER_HOUR;
    let sleep = sleep_current_ma(&cfg.currents) * nominal_sleep_s(cfg, toa) / SECONDS_PER_HOUR;
    Ok(tx + active + sleep)
}

/// Predicted battery life in days at the configured wake period.
pub fn battery_life_days(cfg: &NodeConfig) -> Result<f64, PhyError> {
    let cycles_per_day = SECONDS_PER_DAY / cfg.wake_period_s;
    Ok(cfg.battery_mah / (energy_per_cycle_mah(cfg)? * cycles_per_day))
}

/// Duty-cycle phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Init,
    Sample,
    Encode,
    Transmit,
    Sleep,
}

/// Engineering-unit readings presented to the node each cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorReadings {
    pub ax_g: f64,
    pub ay_g: f64,
    pub az_g: f64,
    pub temp_c: f64,
    pub pressure_kpa: f64,
}

/// Per-node runtime state: phase machine, energy ledger, last frame.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub phase: Phase,
    pub consumed_mah: f64,
    pub frames_sent: u64,
    pub last_frame: Option<TelemetryFrame>,
    accel: Adxl362Model,
    pending: Option<TelemetryFrame>,
    last_now_s: Option<f64>,
}

impl Default for NodeState {
    fn default() -> Self {
        Self::new()
    }
}

impl NodeState {
    pub fn new() -> Self {
        Self {
            phase: Phase::Init,
            consumed_mah: 0.0,
            frames_sent: 0,
            last_frame: None,
            accel: Adxl362Model::new(),
            pending: None,
            last_now_s: None,
        }
    }

    fn debit(&mut self, current_ma: f64, duration_s: f64) {
        self.consumed_mah += current_ma * duration_s / SECONDS_PER_HOUR;
    }

    /// Quantize readings into a telemetry frame. Acceleration goes through
    /// the accelerometer model's counts; temperature and pressure are
    /// clamped to the sensor ranges and scaled to centi units.
    fn capture(
        &mut self,
        cfg: &NodeConfig,
        stimulus: &SensorReadings,
    ) -> Result<TelemetryFrame, NodeError> {
        self.accel
            .set_stimulus_g(stimulus.ax_g, stimulus.ay_g, stimulus.az_g);
        let (rx, ry, rz) = self.accel.read_xyz()?;
        let scale = self.accel.scale_mg_per_lsb();
        let to_mg = |raw: i16| (f64::from(raw) * scale).round() as i32;

        let temp_centi = (stimulus.temp_c * 100.0)
            .round()
            .clamp(f64::from(TEMP_CENTI_MIN), f64::from(TEMP_CENTI_MAX))
            as i16;
        let pressure_centi = (stimulus.pressure_kpa * 100.0)
            .round()
            .clamp(0.0, f64::from(PRESSURE_CENTI_MAX)) as u16;

        Ok(TelemetryFrame {
            gateway_id: NODE_GATEWAY_ID,
            node_id: cfg.node_id,
            reserved: 0,
            accel_x_mg: to_mg(rx),
            accel_y_mg: to_mg(ry),
            accel_z_mg: to_mg(rz),
            temp_centi_c: temp_centi,
            pressure_centi_kpa: pressure_centi,
        })
    }

    /// Complete the current phase and advance. Returns the encoded wire
    /// frame exactly when the node enters Transmit.
    ///
    /// Call cadence per cycle, for a wake at time `t` with active window `w`
    /// and frame time-on-air `toa`:
    /// `step(t)` leaves Sleep (or Init), `step(t + w/2)` completes sampling,
    /// `step(t + w)` completes encoding and starts transmitting,
    /// `step(t + w + toa)` completes the transmission and enters Sleep.
    pub fn step(
        &mut self,
        cfg: &NodeConfig,
        stimulus: &SensorReadings,
        now_s: f64,
    ) -> Result<Option<WireFrame>, NodeError> {
        if let Some(prev_s) = self.last_now_s {
            if now_s < prev_s {
                return Err(NodeError::ClockRegression { prev_s, now_s });
            }
        }
        self.last_now_s = Some(now_s);

        match self.phase {
            Phase::Init => {
                self.accel.init_sequence()?;
                self.phase = Phase::Sample;
                Ok(None)
            }
            Phase::Sleep => {
                self.phase = Phase::Sample;
                Ok(None)
            }
            Phase::Sample => {
                self.debit(cfg.currents.listen_ma, cfg.active_window_s / 2.0);
                self.pending = Some(self.capture(cfg, stimulus)?);
                self.phase = Phase::Encode;
                Ok(None)
            }
            Phase::Encode => {
                self.debit(cfg.currents.listen_ma, cfg.active_window_s / 2.0);
                let frame = self.pending.take().ok_or_else(|| {
                    NodeError::InvalidConfig("encode reached without a sampled frame".to_string())
                })?;
                let wire = encode_frame(&frame)?;
                self.frames_sent += 1;
                self.last_frame = Some(frame);
                self.phase = Phase::Transmit;
                Ok(Some(wire))
            }
            Phase::Transmit => {
                let toa = cfg.frame_time_on_air_s()?;
                self.debit(cfg.currents.tx_ma, toa);
                // Pre-debit the nominal sleep remainder here so a completed
                // cycle always equals the closed-form prediction.
                self.debit(sleep_current_ma(&cfg.currents), nominal_sleep_s(cfg, toa));
                self.phase = Phase::Sleep;
                Ok(None)
            }
        }
    }
}
