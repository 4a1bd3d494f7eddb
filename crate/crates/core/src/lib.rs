//! railmon: a desk-scale LoRa railroad-track condition-monitoring stack.
//!
//! The crate covers the full pipeline of the deployed system:
//!
//! - [`frame`] — bit-exact telemetry frame codec and JSON conversion
//! - [`phy`] — LoRa symbol/rate/time-on-air math, link budget, path loss
//! - [`sensors`] — behavioral accelerometer, temperature, pressure and ADC
//!   models
//! - [`node`] — the sensor-node duty cycle with its energy ledger
//! - [`gateway`] — frame validation, JSON conversion and the uplink sink
//! - [`netsim`] — deterministic discrete-event star-network simulator
//! - [`cloud`] — reading store, queries and threshold alarms

pub mod cloud;
pub mod frame;
pub mod gateway;
pub mod netsim;
pub mod node;
pub mod phy;
pub mod sensors;

pub use frame::{decode_frame, encode_frame, frame_to_json, RxMeta, TelemetryFrame, WireFrame};
pub use netsim::{run_scenario, run_scenario_full, Scenario, SimReport};
pub use phy::{PathLossModel, RadioParams};
