//! Behavioral models of the node's sensors and ADC.
//!
//! The accelerometer model replays the SPI init/read path (device-ID check,
//! soft reset, ODR configuration, measurement mode) over a small register
//! map; the temperature and pressure models are the analog transfer
//! functions read back through the ADC model.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("UnknownRegister: no register at address {address:#04X}")]
    UnknownRegister { address: u8 },
    #[error("NotMeasuring: accelerometer is in standby")]
    NotMeasuring,
    #[error("RangeError: {what} {value} outside [{min}, {max}]")]
    RangeError {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
}

/// Register addresses exercised by the init/read path.
pub mod adxl_reg {
    /// Analog Devices device ID, reads 0xAD.
    pub const DEVID_AD: u8 = 0x00;
    pub const XDATA_L: u8 = 0x0E;
    pub const XDATA_H: u8 = 0x0F;
    pub const YDATA_L: u8 = 0x10;
    pub const YDATA_H: u8 = 0x11;
    pub const ZDATA_L: u8 = 0x12;
    pub const ZDATA_H: u8 = 0x13;
    /// Writing 0x52 ('R') resets the part.
    pub const SOFT_RESET: u8 = 0x1F;
    pub const FIFO_CONTROL: u8 = 0x28;
    /// Range bits 7:6, ODR bits 2:0.
    pub const FILTER_CTL: u8 = 0x2C;
    /// Measurement mode when bits 1:0 == 0b10.
    pub const POWER_CTL: u8 = 0x2D;
}

/// SPI command octets (register-map convention).
pub const SPI_CMD_WRITE: u8 = 0x0A;
pub const SPI_CMD_READ: u8 = 0x0B;

/// Validated bus configuration, recorded as constants: SPI mode 0 at the
/// 72 MHz master clock divided by 8, under the part's 10 MHz limit.
pub const SPI_MODE_CPOL: u8 = 0;
pub const SPI_MODE_CPHA: u8 = 0;
pub const SPI_CLOCK_HZ: u32 = 72_000_000 / 8;
pub const ADXL_SPI_MAX_CLOCK_HZ: u32 = 10_000_000;
const _: () = assert!(SPI_CLOCK_HZ <= ADXL_SPI_MAX_CLOCK_HZ);

pub const SOFT_RESET_KEY: u8 = 0x52;

/// FILTER_CTL reset value: +/-2 g range, ODR 100 Hz.
const FILTER_CTL_DEFAULT: u8 = 0x13;

const DEVID_AD_VALUE: u8 = 0xAD;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdxlMode {
    Standby,
    Measurement,
}

/// Three-axis accelerometer register model.
///
/// FIFO and interrupts are permanently off: the deployed firmware closes the
/// FIFO buffer and polls the data registers, so neither is modeled beyond
/// the FIFO_CONTROL register accepting writes.
#[derive(Debug, Clone)]
pub struct Adxl362Model {
    filter_ctl: u8,
    power_ctl: u8,
    fifo_control: u8,
    data: [u8; 6],
    stimulus_g: [f64; 3],
}

impl Default for Adxl362Model {
    fn default() -> Self {
        Self::new()
    }
}

impl Adxl362Model {
    /// Power-on state: standby, FIFO off, +/-2 g at ODR 100 Hz.
    pub fn new() -> Self {
        Self {
            filter_ctl: FILTER_CTL_DEFAULT,
            power_ctl: 0x00,
            fifo_control: 0x00,
            data: [0; 6],
            stimulus_g: [0.0; 3],
        }
    }

    pub fn mode(&self) -> AdxlMode {
        if self.power_ctl & 0b11 == 0b10 {
            AdxlMode::Measurement
        } else {
            AdxlMode::Standby
        }
    }

    /// Output data rate from FILTER_CTL bits 2:0.
    pub fn odr_hz(&self) -> f64 {
        match self.filter_ctl & 0b111 {
            0b000 => 12.5,
            0b001 => 25.0,
            0b010 => 50.0,
            0b011 => 100.0,
            0b100 => 200.0,
            _ => 400.0,
        }
    }

    /// Milli-g per LSB from the FILTER_CTL range bits (1 mg/LSB at +/-2 g).
    pub fn scale_mg_per_lsb(&self) -> f64 {
        match (self.filter_ctl >> 6) & 0b11 {
            0b00 => 1.0,
            0b01 => 2.0,
            _ => 4.0,
        }
    }

    /// Drive the physical input seen by the sensor, in g.
    pub fn set_stimulus_g(&mut self, x: f64, y: f64, z: f64) {
        self.stimulus_g = [x, y, z];
    }

    fn read_register(&self, address: u8) -> Result<u8, SensorError> {
        use adxl_reg::*;
        match address {
            DEVID_AD => Ok(DEVID_AD_VALUE),
            XDATA_L..=ZDATA_H => Ok(self.data[(address - XDATA_L) as usize]),
            SOFT_RESET => Ok(0x00),
            FIFO_CONTROL => Ok(self.fifo_control),
            FILTER_CTL => Ok(self.filter_ctl),
            POWER_CTL => Ok(self.power_ctl),
            _ => Err(SensorError::UnknownRegister { address }),
        }
    }

    fn write_register(&mut self, address: u8, value: u8) -> Result<(), SensorError> {
        use adxl_reg::*;
        match address {
            // DEVID and the data registers are read-only; writes land on the
            // bus but do not change the part.
            DEVID_AD | XDATA_L..=ZDATA_H => Ok(()),
            SOFT_RESET => {
                if value == SOFT_RESET_KEY {
                    *self = Self::new();
                }
                Ok(())
            }
            FIFO_CONTROL => {
                self.fifo_control = value;
                Ok(())
            }
            FILTER_CTL => {
                self.filter_ctl = value;
                Ok(())
            }
            POWER_CTL => {
                self.power_ctl = value;
                Ok(())
            }
            _ => Err(SensorError::UnknownRegister { address }),
        }
    }

    /// One SPI transaction: command octet, start address, then data octets.
    ///
    /// Reads return one octet per requested octet with address
    /// auto-increment; writes store `data` at consecutive addresses and
    /// return nothing.
    pub fn spi_transaction(
        &mut self,
        command: u8,
        address: u8,
        data: &[u8],
    ) -> Result<Vec<u8>, SensorError> {
        match command {
            SPI_CMD_READ => {
                let count = data.len().max(1);
                (0..count)
                    .map(|i| self.read_register(address.wrapping_add(i as u8)))
                    .collect()
            }
            SPI_CMD_WRITE => {
                for (i, value) in data.iter().enumerate() {
                    self.write_register(address.wrapping_add(i as u8), *value)?;
                }
                Ok(Vec::new())
            }
            _ => Err(SensorError::UnknownRegister { address: command }),
        }
    }

    /// The firmware init sequence: soft reset, ODR to 100 Hz, FIFO off,
    /// then measurement mode. Leaves the part sampling.
    pub fn init_sequence(&mut self) -> Result<(), SensorError> {
        self.spi_transaction(SPI_CMD_WRITE, adxl_reg::SOFT_RESET, &[SOFT_RESET_KEY])?;
        self.spi_transaction(SPI_CMD_WRITE, adxl_reg::FILTER_CTL, &[FILTER_CTL_DEFAULT])?;
        self.spi_transaction(SPI_CMD_WRITE, adxl_reg::FIFO_CONTROL, &[0x00])?;
        self.spi_transaction(SPI_CMD_WRITE, adxl_reg::POWER_CTL, &[0b10])?;
        Ok(())
    }

    /// Sample the current stimulus as signed 16-bit counts at the configured
    /// scale, updating the data registers. Fails in standby.
    pub fn read_xyz(&mut self) -> Result<(i16, i16, i16), SensorError> {
        if self.mode() != AdxlMode::Measurement {
            return Err(SensorError::NotMeasuring);
        }
        let scale = self.scale_mg_per_lsb();
        let mut counts = [0i16; 3];
        for (i, g) in self.stimulus_g.iter().enumerate() {
            let raw = (g * 1000.0 / scale).round();
            counts[i] = raw.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
            let le = counts[i].to_le_bytes();
            self.data[2 * i] = le[0];
            self.data[2 * i + 1] = le[1];
        }
        Ok((counts[0], counts[1], counts[2]))
    }
}

/// Analog temperature sensor: output voltage linearly inversely proportional
/// to temperature. Constants are datasheet-typical and fixed here so tests
/// are deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lmt85Model {
    /// Output at 0 degC, volts.
    pub v0_volts: f64,
    /// Negative slope, volts per degC.
    pub slope_v_per_c: f64,
}

pub const LMT85_TEMP_MIN_C: f64 = -50.0;
pub const LMT85_TEMP_MAX_C: f64 = 150.0;

impl Default for Lmt85Model {
    fn default() -> Self {
        Self {
            v0_volts: 1.8639,
            slope_v_per_c: -0.0082,
        }
    }
}

impl Lmt85Model {
    /// Output voltage at `temp_c`. Strictly decreasing in temperature.
    pub fn voltage(&self, temp_c: f64) -> Result<f64, SensorError> {
        if !(LMT85_TEMP_MIN_C..=LMT85_TEMP_MAX_C).contains(&temp_c) {
            return Err(SensorError::RangeError {
                what: "temperature degC",
                value: temp_c,
                min: LMT85_TEMP_MIN_C,
                max: LMT85_TEMP_MAX_C,
            });
        }
        Ok(self.v0_volts + self.slope_v_per_c * temp_c)
    }

    /// Algebraic inverse of [`Lmt85Model::voltage`].
    pub fn temperature_from_voltage(&self, volts: f64) -> f64 {
        (volts - self.v0_volts) / self.slope_v_per_c
    }
}

/// Ratiometric pressure sensor: 0.5 V at 0 kPa up to 4.5 V at 100 kPa,
/// linear in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureSensorModel {
    pub v_min_volts: f64,
    pub v_max_volts: f64,
    pub kpa_max: f64,
}

impl Default for PressureSensorModel {
    fn default() -> Self {
        Self {
            v_min_volts: 0.5,
            v_max_volts: 4.5,
            kpa_max: 100.0,
        }
    }
}

impl PressureSensorModel {
    pub fn voltage(&self, kpa: f64) -> Result<f64, SensorError> {
        if !(0.0..=self.kpa_max).contains(&kpa) {
            return Err(SensorError::RangeError {
                what: "pressure kPa",
                value: kpa,
                min: 0.0,
                max: self.kpa_max,
            });
        }
        let span = self.v_max_volts - self.v_min_volts;
        Ok(self.v_min_volts + kpa / self.kpa_max * span)
    }

    /// Exact inverse of [`PressureSensorModel::voltage`] for in-range inputs.
    pub fn kpa_from_voltage(&self, volts: f64) -> f64 {
        (volts - self.v_min_volts) / (self.v_max_volts - self.v_min_volts) * self.kpa_max
    }
}

/// Successive-approximation ADC: 12-bit against a 3.3 V reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcModel {
    pub resolution_bits: u8,
    pub vref_volts: f64,
}

impl Default for AdcModel {
    fn default() -> Self {
        Self {
            resolution_bits: 12,
            vref_volts: 3.3,
        }
    }
}

impl AdcModel {
    pub fn max_code(&self) -> u16 {
        ((1u32 << self.resolution_bits) - 1) as u16
    }

    /// Quantize a voltage: round(volts / vref * (2^bits - 1)), clamped to
    /// the code range. Inputs beyond vref saturate at full scale, which is
    /// exactly what happens when the 4.5 V pressure output meets a 3.3 V
    /// reference.
    pub fn sample(&self, volts: f64) -> u16 {
        let max = f64::from(self.max_code());
        (volts / self.vref_volts * max).round().clamp(0.0, max) as u16
    }

    pub fn code_to_volts(&self, code: u16) -> f64 {
        f64::from(code.min(self.max_code())) / f64::from(self.max_code()) * self.vref_volts
    }
}
