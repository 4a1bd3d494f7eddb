//! Telemetry frame codec.
//!
//! Fixed-length binary frames carry one sample of three-axis acceleration,
//! temperature and barometric pressure from a sensor node to the gateway.
//! The layout is:
//!
//! ```text
//! offset  size  field
//! 0       2     header 0xA5 0x7E
//! 2       1     gateway_id (0x10 on node-produced frames)
//! 3       1     node_id (6..=9)
//! 4       1     reserved
//! 5       4     accel X, signed 32-bit little-endian, milli-g
//! 9       4     accel Y, signed 32-bit little-endian, milli-g
//! 13      4     accel Z, signed 32-bit little-endian, milli-g
//! 17      2     temperature, signed 16-bit little-endian, centi-degC
//! 19      2     pressure, unsigned 16-bit little-endian, centi-kPa
//! ```
//!
//! 21 octets total, no checksum. Multi-byte integers are little-endian.

use std::fmt::Write as _;

use thiserror::Error;

/// Total wire length of one frame in octets.
pub const FRAME_LEN: usize = 21;

/// Two-byte synchronization header.
pub const FRAME_HEADER: [u8; 2] = [0xA5, 0x7E];

/// Gateway/remote device ID stamped on every node-produced frame.
pub const NODE_GATEWAY_ID: u8 = 0x10;

/// Smallest valid sensor node ID.
pub const NODE_ID_MIN: u8 = 6;

/// Largest valid sensor node ID.
pub const NODE_ID_MAX: u8 = 9;

/// Temperature sensor range, hundredths of a degree Celsius.
pub const TEMP_CENTI_MIN: i16 = -5000;
pub const TEMP_CENTI_MAX: i16 = 15000;

/// Pressure sensor ceiling, hundredths of a kPa (0-100 kPa range).
pub const PRESSURE_CENTI_MAX: u16 = 10000;

/// Errors raised by the frame codec.
///
/// Display strings start with the error name so callers can surface it
/// verbatim (the CLI prints them on stderr).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("BadHeader: expected A5 7E, found {found:02X?}")]
    BadHeader { found: [u8; 2] },
    #[error("BadLength: expected {FRAME_LEN} octets, got {actual}")]
    BadLength { actual: usize },
    #[error("InvalidNodeId: node id {node_id} outside {NODE_ID_MIN}..={NODE_ID_MAX}")]
    InvalidNodeId { node_id: u8 },
    #[error("RangeError: {field} value {value} outside sensor range")]
    RangeError { field: &'static str, value: i32 },
}

/// Decoded form of the on-air frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TelemetryFrame {
    pub gateway_id: u8,
    pub node_id: u8,
    pub reserved: u8,
    pub accel_x_mg: i32,
    pub accel_y_mg: i32,
    pub accel_z_mg: i32,
    pub temp_centi_c: i16,
    pub pressure_centi_kpa: u16,
}

impl TelemetryFrame {
    /// All-zero readings for the given node, addressed to the fixed gateway.
    pub fn zero(node_id: u8) -> Self {
        Self {
            gateway_id: NODE_GATEWAY_ID,
            node_id,
            reserved: 0,
            accel_x_mg: 0,
            accel_y_mg: 0,
            accel_z_mg: 0,
            temp_centi_c: 0,
            pressure_centi_kpa: 0,
        }
    }
}

/// Encoded frame, always exactly [`FRAME_LEN`] octets with a valid header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireFrame {
    bytes: [u8; FRAME_LEN],
}

impl WireFrame {
    pub fn as_bytes(&self) -> &[u8; FRAME_LEN] {
        &self.bytes
    }

    /// Uppercase hex, no separators (the CLI wire representation).
    pub fn to_hex(&self) -> String {
        hex::encode_upper(self.bytes)
    }
}

impl AsRef<[u8]> for WireFrame {
    fn as_ref(&self) -> &[u8] {
        &self.bytes
    }
}

fn check_node_id(node_id: u8) -> Result<(), FrameError> {
    if (NODE_ID_MIN..=NODE_ID_MAX).contains(&node_id) {
        Ok(())
    } else {
        Err(FrameError::InvalidNodeId { node_id })
    }
}

/// Encode a frame into its 21-octet wire form.
///
/// Rejects node IDs outside 6..=9 and temperature/pressure values outside
/// the physical sensor ranges. No checksum is appended.
pub fn encode_frame(frame: &TelemetryFrame) -> Result<WireFrame, FrameError> {
    check_node_id(frame.node_id)?;
    if !(TEMP_CENTI_MIN..=TEMP_CENTI_MAX).contains(&frame.temp_centi_c) {
        return Err(FrameError::RangeError {
            field: "temp_centi_c",
            value: i32::from(frame.temp_centi_c),
        });
    }
    if frame.pressure_centi_kpa > PRESSURE_CENTI_MAX {
        return Err(FrameError::RangeError {
            field: "pressure_centi_kpa",
            value: i32::from(frame.pressure_centi_kpa),
        });
    }

    let mut bytes = [0u8; FRAME_LEN];
    bytes[0..2].copy_from_slice(&FRAME_HEADER);
    bytes[2] = frame.gateway_id;
    bytes[3] = frame.node_id;
    bytes[4] = frame.reserved;
    bytes[5..9].copy_from_slice(&frame.accel_x_mg.to_le_bytes());
    bytes[9..13].copy_from_slice(&frame.accel_y_mg.to_le_bytes());
    bytes[13..17].copy_from_slice(&frame.accel_z_mg.to_le_bytes());
    bytes[17..19].copy_from_slice(&frame.temp_centi_c.to_le_bytes());
    bytes[19..21].copy_from_slice(&frame.pressure_centi_kpa.to_le_bytes());
    Ok(WireFrame { bytes })
}

/// Decode a wire frame. Inverse of [`encode_frame`] for every valid frame.
///
/// Only the length, header and node ID are validated; the frame carries no
/// checksum, so payload corruption passes through undetected.
pub fn decode_frame(wire: &[u8]) -> Result<TelemetryFrame, FrameError> {
    if wire.len() != FRAME_LEN {
        return Err(FrameError::BadLength { actual: wire.len() });
    }
    if wire[0..2] != FRAME_HEADER {
        return Err(FrameError::BadHeader {
            found: [wire[0], wire[1]],
        });
    }
    let node_id = wire[3];
    check_node_id(node_id)?;

    Ok(TelemetryFrame {
        gateway_id: wire[2],
        node_id,
        reserved: wire[4],
        accel_x_mg: i32::from_le_bytes(wire[5..9].try_into().unwrap()),
        accel_y_mg: i32::from_le_bytes(wire[9..13].try_into().unwrap()),
        accel_z_mg: i32::from_le_bytes(wire[13..17].try_into().unwrap()),
        temp_centi_c: i16::from_le_bytes(wire[17..19].try_into().unwrap()),
        pressure_centi_kpa: u16::from_le_bytes(wire[19..21].try_into().unwrap()),
    })
}

/// Reception metadata attached by the gateway. Both fields are absent when a
/// frame is replayed offline rather than received from the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RxMeta {
    pub rx_timestamp_ms: Option<u64>,
    pub rssi_dbm: Option<f64>,
}

impl RxMeta {
    pub fn new(rx_timestamp_ms: u64, rssi_dbm: f64) -> Self {
        Self {
            rx_timestamp_ms: Some(rx_timestamp_ms),
            rssi_dbm: Some(rssi_dbm),
        }
    }

    /// Metadata for offline replay: no timestamp, no RSSI.
    pub fn absent() -> Self {
        Self::default()
    }
}

/// Format a centi-unit fixed-point value as a decimal with exactly two
/// fractional digits, e.g. 2500 -> "25.00", -5 -> "-0.05".
fn centi_to_decimal(value: i32) -> String {
    let sign = if value < 0 { "-" } else { "" };
    let abs = value.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

fn json_opt_u64(value: Option<u64>) -> String {
    match value {
        Some(v) => v.to_string(),
        None => "null".to_string(),
    }
}

fn json_opt_f64(value: Option<f64>) -> String {
    match value {
        // serde_json renders f64 via ryu (shortest round-trip form), which
        // keeps parse-then-reserialize byte-identical.
        Some(v) => serde_json::to_string(&v).expect("finite f64"),
        None => "null".to_string(),
    }
}

/// Render a frame as the single-line JSON object the gateway uplinks.
///
/// Key order is fixed and the output is deterministic: identical inputs
/// produce identical byte strings. Temperature and pressure are scaled to
/// engineering units with exactly two fractional digits.
pub fn frame_to_json(frame: &TelemetryFrame, meta: &RxMeta) -> String {
    let mut out = String::with_capacity(160);
    write!(
        out,
        "{{\"gateway_id\":{},\"node_id\":{},\"ax_mg\":{},\"ay_mg\":{},\"az_mg\":{},\
         \"temp_c\":{},\"pressure_kpa\":{},\"rx_timestamp_ms\":{},\"rssi_dbm\":{}}}",
        frame.gateway_id,
        frame.node_id,
        frame.accel_x_mg,
        frame.accel_y_mg,
        frame.accel_z_mg,
        centi_to_decimal(i32::from(frame.temp_centi_c)),
        centi_to_decimal(i32::from(frame.pressure_centi_kpa)),
        json_opt_u64(meta.rx_timestamp_ms),
        json_opt_f64(meta.rssi_dbm),
    )
    .expect("write to String cannot fail");
    out
}
