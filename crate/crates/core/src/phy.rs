//! LoRa physical-layer math: symbol time, air bit rate, time-on-air,
//! link budget, log-distance path loss and the reception decision.
//!
//! All operations are pure functions over immutable parameter records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Carrier frequency used by the link, Hz.
pub const DEFAULT_FREQUENCY_HZ: u64 = 433_000_000;

/// Serial rate between gateway MCU and uplink modem, recorded constant.
pub const GATEWAY_SERIAL_BAUD: u32 = 115_200;

/// Receive timeout configuration constant (symbols); no effect on the math.
pub const RECEIVE_TIMEOUT_SYMBOLS: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("InvalidSpreadingFactor: SF {sf} outside 6..=12")]
    InvalidSpreadingFactor { sf: u8 },
    #[error("InvalidCodingRate: denominator {denominator} outside 5..=8 (CR = 4/denominator)")]
    InvalidCodingRate { denominator: u8 },
    #[error("InvalidBandwidth: bandwidth must be positive")]
    InvalidBandwidth,
    #[error("InvalidPreamble: preamble must be at least one symbol")]
    InvalidPreamble,
    #[error("DegenerateParams: SF - 2*DE = {effective_sf} must be positive")]
    DegenerateParams { effective_sf: i64 },
    #[error("DomainError: distance {distance_m} m below reference distance {reference_m} m")]
    DomainError { distance_m: f64, reference_m: f64 },
    #[error("InvalidPathLoss: {reason}")]
    InvalidPathLoss { reason: String },
}

/// Radio parameter set governing all PHY math.
///
/// Defaults are the deployed configuration: SF12 over 500 kHz with CR 4/5,
/// 8 preamble symbols, explicit header, radio CRC on, +22 dBm into a
/// -148 dBm receiver at 433 MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioParams {
    pub spreading_factor: u8,
    pub bandwidth_hz: u32,
    /// CR = 4/denominator; the link uses 4/5.
    pub coding_rate_denominator: u8,
    pub preamble_symbols: u32,
    pub explicit_header: bool,
    pub radio_crc_on: bool,
    pub low_data_rate_opt: bool,
    pub tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub frequency_hz: u64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            spreading_factor: 12,
            bandwidth_hz: 500_000,
            coding_rate_denominator: 5,
            preamble_symbols: 8,
            explicit_header: true,
            radio_crc_on: true,
            // T_sym = 8.192 ms < 16 ms at SF12/BW500, so the optimization
            // stays off by default.
            low_data_rate_opt: false,
            tx_power_dbm: 22.0,
            rx_sensitivity_dbm: -148.0,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), PhyError> {
        if !(6..=12).contains(&self.spreading_factor) {
            return Err(PhyError::InvalidSpreadingFactor {
                sf: self.spreading_factor,
            });
        }
        if !(5..=8).contains(&self.coding_rate_denominator) {
            return Err(PhyError::InvalidCodingRate {
                denominator: self.coding_rate_denominator,
            });
        }
        if self.bandwidth_hz == 0 {
            return Err(PhyError::InvalidBandwidth);
        }
        if self.preamble_symbols == 0 {
            return Err(PhyError::InvalidPreamble);
        }
        Ok(())
    }

    fn chips_per_symbol(&self) -> f64 {
        f64::from(1u32 << self.spreading_factor)
    }
}

/// Symbol duration in seconds: 2^SF / BW.
pub fn symbol_time_s(p: &RadioParams) -> f64 {
    p.chips_per_symbol() / f64::from(p.bandwidth_hz)
}

/// Instantaneous air bit rate in bits/second: SF * (BW / 2^SF) * 4/CR_den.
pub fn air_bit_rate_bps(p: &RadioParams) -> f64 {
    let symbol_rate = f64::from(p.bandwidth_hz) / p.chips_per_symbol();
    f64::from(p.spreading_factor) * symbol_rate * 4.0 / f64::from(p.coding_rate_denominator)
}

/// Ceiling division for a possibly negative numerator (denominator > 0).
fn ceil_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b) + i64::from(a.rem_euclid(b) != 0)
}

/// Time on air for a payload of `payload_len_bytes`, in seconds.
///
/// Symbol accounting per the SX127x convention:
/// `n_payload = 8 + max(ceil((8*PL - 4*SF + 28 + 16*CRC - 20*IH) / (4*(SF - 2*DE))) * CR_den, 0)`
/// with IH = 0 for an explicit header, DE = 1 with low-data-rate optimization,
/// plus a preamble of `preamble_symbols + 4.25` symbols.
pub fn time_on_air_s(p: &RadioParams, payload_len_bytes: usize) -> Result<f64, PhyError> {
    let sf = i64::from(p.spreading_factor);
    let de = i64::from(p.low_data_rate_opt);
    let ih = i64::from(!p.explicit_header);
    let crc = i64::from(p.radio_crc_on);
    let effective_sf = sf - 2 * de;
    if effective_sf <= 0 {
        return Err(PhyError::DegenerateParams { effective_sf });
    }

    let pl = payload_len_bytes as i64;
    let numerator = 8 * pl - 4 * sf + 28 + 16 * crc - 20 * ih;
    let denominator = 4 * effective_sf;
    let coded_symbols = ceil_div(numerator, denominator) * i64::from(p.coding_rate_denominator);
    let payload_symbols = 8 + coded_symbols.max(0);

    let t_sym = symbol_time_s(p);
    let preamble_symbols = f64::from(p.preamble_symbols) + 4.25;
    Ok((preamble_symbols + payload_symbols as f64) * t_sym)
}

/// Link budget in dB: transmit power minus receiver sensitivity.
pub fn link_budget_db(p: &RadioParams) -> f64 {
    p.tx_power_dbm - p.rx_sensitivity_dbm
}

/// Free-space path loss in dB at `distance_m` meters and `frequency_hz` Hz:
/// 20*log10(d) + 20*log10(f) - 147.55.
pub fn free_space_path_loss_db(distance_m: f64, frequency_hz: f64) -> f64 {
    20.0 * distance_m.log10() + 20.0 * frequency_hz.log10() - 147.55
}

/// Log-distance path loss channel:
/// PL(d) = PL(d0) + 10 * n * log10(d / d0).
///
/// The default reference loss is the free-space loss at 1 m and 433 MHz
/// (~25.18 dB) with exponent 2.8, an open-rail/suburban value. The capture
/// threshold feeds the simulator's collision rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossModel {
    pub reference_distance_m: f64,
    pub reference_loss_db: f64,
    pub exponent: f64,
    pub capture_threshold_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self::free_space_reference(DEFAULT_FREQUENCY_HZ as f64)
    }
}

impl PathLossModel {
    /// Reference loss initialized from the free-space formula at 1 m.
    pub fn free_space_reference(frequency_hz: f64) -> Self {
        Self {
            reference_distance_m: 1.0,
            reference_loss_db: free_space_path_loss_db(1.0, frequency_hz),
            exponent: 2.8,
            capture_threshold_db: 6.0,
        }
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        if !self.exponent.is_finite() || self.exponent <= 0.0 {
            return Err(PhyError::InvalidPathLoss {
                reason: format!("exponent {} must be positive and finite", self.exponent),
            });
        }
        if !self.reference_loss_db.is_finite() || self.reference_loss_db < 0.0 {
            return Err(PhyError::InvalidPathLoss {
                reason: format!(
                    "reference loss {} dB must be non-negative",
                    self.reference_loss_db
                ),
            });
        }
        if !self.reference_distance_m.is_finite() || self.reference_distance_m <= 0.0 {
            return Err(PhyError::InvalidPathLoss {
                reason: format!(
                    "reference distance {} m must be positive",
                    self.reference_distance_m
                ),
            });
        }
        Ok(())
    }
}

/// Path loss in dB at `distance_m`; the distance must be at or beyond the
/// model's reference distance.
pub fn path_loss_db(m: &PathLossModel, distance_m: f64) -> Result<f64, PhyError> {
    if distance_m < m.reference_distance_m {
        return Err(PhyError::DomainError {
            distance_m,
            reference_m: m.reference_distance_m,
        });
    }
    Ok(m.reference_loss_db + 10.0 * m.exponent * (distance_m / m.reference_distance_m).log10())
}

/// Outcome of evaluating a transmission at the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reception {
    Received { rssi_dbm: f64 },
    Lost { rssi_dbm: f64 },
}

impl Reception {
    pub fn is_received(&self) -> bool {
        matches!(self, Reception::Received { .. })
    }

    pub fn rssi_dbm(&self) -> f64 {
        match *self {
            Reception::Received { rssi_dbm } | Reception::Lost { rssi_dbm } => rssi_dbm,
        }
    }
}

/// RSSI = tx power - path loss; received iff RSSI >= sensitivity (inclusive).
pub fn receive_decision(
    p: &RadioParams,
    m: &PathLossModel,
    distance_m: f64,
) -> Result<Reception, PhyError> {
    let rssi_dbm = p.tx_power_dbm - path_loss_db(m, distance_m)?;
    if rssi_dbm >= p.rx_sensitivity_dbm {
        Ok(Reception::Received { rssi_dbm })
    } else {
        Ok(Reception::Lost { rssi_dbm })
    }
}
