//! Sensor physics: magnet/sensor distance, inverse-cube flux, ratiometric
//! Hall voltage with rail clamping, cross-talk, ADC quantization and the
//! static IMU model.
//!
//! Flux is kept in abstract "flux units": the Hall sensitivity is volts per
//! flux unit and the dipole coefficient is flux units times cubic meters.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;
use thiserror::Error;

use crate::error::ConfigError;
use crate::hand::{
    canonical_joint_order, scaled_geometry, validate_pose, AnthropometricProfile, HandPose, Joint,
    PoseViolation, RomTable, Wrist, JOINT_COUNT,
};

/// Number of IMU channels (ax, ay, az, gx, gy, gz).
pub const IMU_CHANNELS: usize = 6;
/// Total channels in a sensor frame.
pub const FRAME_CHANNELS: usize = JOINT_COUNT + IMU_CHANNELS;
/// Minimum allowed spacing between two sensors in a layout, meters.
pub const MIN_SENSOR_SPACING: f64 = 0.015;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("flexion angle {0} outside [0, 180]")]
    AngleOutOfRange(f64),
    #[error("distance {0} must be positive")]
    NonPositiveDistance(f64),
    #[error("invalid pose: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPose(Vec<PoseViolation>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetPairGeometry {
    /// Magnet/sensor gap at full extension, meters.
    pub gap: f64,
    /// Mount height above the joint axis, meters.
    pub mount_height: f64,
    /// Dipole coefficient, flux units * m^3.
    pub dipole_coeff: f64,
}

impl MagnetPairGeometry {
    pub fn new(gap: f64, mount_height: f64, dipole_coeff: f64) -> Result<Self, ConfigError> {
        if !(gap > 0.0 && mount_height > 0.0 && dipole_coeff > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "magnet geometry must be positive (gap {gap}, height {mount_height}, coeff {dipole_coeff})"
            )));
        }
        Ok(Self {
            gap,
            mount_height,
            dipole_coeff,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HallSensorModel {
    pub vcc: f64,
    /// Volts per flux unit.
    pub sensitivity: f64,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
    /// Gaussian output noise, volts (standard deviation).
    pub noise_sigma: f64,
}

impl Default for HallSensorModel {
    fn default() -> Self {
        Self {
            vcc: 3.3,
            sensitivity: 1.6e-6,
            clamp_lo: 0.33,
            clamp_hi: 2.97,
            noise_sigma: 0.005,
        }
    }
}

impl HallSensorModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.vcc > 0.0
            && 0.0 <= self.clamp_lo
            && self.clamp_lo < self.clamp_hi
            && self.clamp_hi <= self.vcc
            && self.sensitivity > 0.0
            && self.noise_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!("invalid hall model {self:?}")))
        }
    }

    /// Flux magnitude equivalent to one standard deviation of output noise.
    pub fn noise_floor_flux(&self) -> f64 {
        self.noise_sigma / self.sensitivity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcModel {
    pub bits: u32,
    pub vref: f64,
}

impl Default for AdcModel {
    fn default() -> Self {
        Self {
            bits: 10,
            vref: 5.0,
        }
    }
}

impl AdcModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if (8..=16).contains(&self.bits) && self.vref > 0.0 {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!("invalid adc model {self:?}")))
        }
    }

    pub fn max_code(&self) -> u16 {
        ((1u32 << self.bits) - 1) as u16
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuModel {
    /// Full-scale acceleration, multiples of g.
    pub accel_range: f64,
    /// Full-scale angular rate, deg/s.
    pub gyro_range: f64,
    pub accel_noise: f64,
    pub gyro_noise: f64,
}

impl Default for ImuModel {
    fn default() -> Self {
        Self {
            accel_range: 2.0,
            gyro_range: 250.0,
            accel_noise: 0.02,
            gyro_noise: 1.0,
        }
    }
}

impl ImuModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.accel_range > 0.0
            && self.gyro_range > 0.0
            && self.accel_noise >= 0.0
            && self.gyro_noise >= 0.0
        {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!("invalid imu model {self:?}")))
        }
    }
}

/// Per-joint magnet geometry and inter-sensor distances, canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveLayout {
    geometry: [MagnetPairGeometry; JOINT_COUNT],
    distances: Vec<Vec<f64>>,
}

impl GloveLayout {
    pub fn new(
        geometry: [MagnetPairGeometry; JOINT_COUNT],
        distances: Vec<Vec<f64>>,
    ) -> Result<Self, ConfigError> {
        let n = JOINT_COUNT;
        if distances.len() != n || distances.iter().any(|r| r.len() != n) {
            return Err(ConfigError::Invalid("distance matrix must be 14x14".into()));
        }
        for i in 0..n {
            if distances[i][i] != 0.0 {
                return Err(ConfigError::Invalid(format!("distance[{i}][{i}] must be 0")));
            }
            for j in 0..n {
                if distances[i][j] != distances[j][i] {
                    return Err(ConfigError::Invalid(format!(
                        "distance matrix not symmetric at ({i}, {j})"
                    )));
                }
                if i != j && !(distances[i][j] >= MIN_SENSOR_SPACING) {
                    return Err(ConfigError::Invalid(format!(
                        "sensors {i} and {j} closer than {MIN_SENSOR_SPACING} m"
                    )));
                }
            }
        }
        Ok(Self {
            geometry,
            distances,
        })
    }

    pub fn from_positions(
        geometry: [MagnetPairGeometry; JOINT_COUNT],
        positions: &[[f64; 2]],
    ) -> Result<Self, ConfigError> {
        if positions.len() != JOINT_COUNT {
            return Err(ConfigError::Invalid(format!(
                "expected {JOINT_COUNT} sensor positions, got {}",
                positions.len()
            )));
        }
        let distances = positions
            .iter()
            .map(|a| {
                positions
                    .iter()
                    .map(|b| (a[0] - b[0]).hypot(a[1] - b[1]))
                    .collect()
            })
            .collect();
        Self::new(geometry, distances)
    }

    pub fn geometry(&self) -> &[MagnetPairGeometry; JOINT_COUNT] {
        &self.geometry
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i][j]
    }

    /// Same geometry with every inter-sensor distance multiplied by `factor`.
    pub fn with_distances_scaled(&self, factor: f64) -> Result<Self, ConfigError> {
        let distances = self
            .distances
            .iter()
            .map(|r| r.iter().map(|d| d * factor).collect())
            .collect();
        Self::new(self.geometry, distances)
    }
}

/// Every model needed to turn a pose into a raw frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveModel {
    pub hall: HallSensorModel,
    pub adc: AdcModel,
    pub imu: ImuModel,
    pub layout: GloveLayout,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GloveFile {
    hall: HallSensorModel,
    adc: AdcModel,
    imu: ImuModel,
    magnet: MagnetFile,
    mount_height: MountHeights,
    layout: LayoutFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MagnetFile {
    gap: f64,
    dipole_coeff: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MountHeights {
    mcp: f64,
    pip: f64,
    dip: f64,
    thumb_ip: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    positions: Vec<[f64; 2]>,
}

pub const DEFAULT_GLOVE: &str = include_str!("../config/glove.toml");

impl GloveModel {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: GloveFile = toml::from_str(text)?;
        file.hall.validate()?;
        file.adc.validate()?;
        file.imu.validate()?;
        let mut geometry = Vec::with_capacity(JOINT_COUNT);
        for joint in canonical_joint_order() {
            let h = match joint.joint() {
                Joint::Mcp => file.mount_height.mcp,
                Joint::Pip => file.mount_height.pip,
                Joint::Dip => file.mount_height.dip,
                Joint::Ip => file.mount_height.thumb_ip,
            };
            geometry.push(MagnetPairGeometry::new(
                file.magnet.gap,
                h,
                file.magnet.dipole_coeff,
            )?);
        }
        let geometry: [MagnetPairGeometry; JOINT_COUNT] = geometry.try_into().unwrap();
        let layout = GloveLayout::from_positions(geometry, &file.layout.positions)?;
        Ok(Self {
            hall: file.hall,
            adc: file.adc,
            imu: file.imu,
            layout,
        })
    }

    /// Same models with every noise source disabled.
    pub fn noiseless(&self) -> Self {
        let mut m = self.clone();
        m.hall.noise_sigma = 0.0;
        m.imu.accel_noise = 0.0;
        m.imu.gyro_noise = 0.0;
        m
    }
}

impl Default for GloveModel {
    fn default() -> Self {
        Self::from_toml(DEFAULT_GLOVE).expect("shipped glove.toml is valid")
    }
}

/// One raw sample as streamed by the glove: 14 ADC codes (C0..C13) then
/// ax, ay, az (g) and gx, gy, gz (deg/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub codes: [u16; JOINT_COUNT],
    pub imu: [f64; IMU_CHANNELS],
}

impl SensorFrame {
    /// All 20 channels as reals, in stream order.
    pub fn channels(&self) -> [f64; FRAME_CHANNELS] {
        let mut out = [0.0; FRAME_CHANNELS];
        for (o, c) in out.iter_mut().zip(self.codes.iter()) {
            *o = f64::from(*c);
        }
        out[JOINT_COUNT..].copy_from_slice(&self.imu);
        out
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        z * sigma
    } else {
        0.0
    }
}

/// Chord model: `gap + 2 h sin(theta / 2)`, theta in degrees.
pub fn magnet_sensor_distance(theta: f64, geom: &MagnetPairGeometry) -> Result<f64, PhysicsError> {
    if !(0.0..=180.0).contains(&theta) {
        return Err(PhysicsError::AngleOutOfRange(theta));
    }
    Ok(geom.gap + 2.0 * geom.mount_height * (theta.to_radians() / 2.0).sin())
}

/// Inverse-cube flux density `coeff / d^3`.
pub fn flux_density(d: f64, coeff: f64) -> Result<f64, PhysicsError> {
    if !(d > 0.0) {
        return Err(PhysicsError::NonPositiveDistance(d));
    }
    Ok(coeff / (d * d * d))
}

/// Ratiometric output `0.5 Vcc + k B + noise`, clamped to the rails.
pub fn hall_voltage<R: Rng + ?Sized>(
    own_flux: f64,
    crosstalk_flux: f64,
    model: &HallSensorModel,
    rng: &mut R,
) -> f64 {
    let noise = gaussian(rng, model.noise_sigma);
    let v = 0.5 * model.vcc + model.sensitivity * (own_flux + crosstalk_flux) + noise;
    v.clamp(model.clamp_lo, model.clamp_hi)
}

/// Contribution of every other magnet to sensor `sensor_index`.
pub fn cross_talk_flux(sensor_index: usize, layout: &GloveLayout) -> f64 {
    layout
        .geometry
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != sensor_index)
        .map(|(j, g)| {
            let d = layout.distance(sensor_index, j);
            g.dipole_coeff / (d * d * d)
        })
        .sum()
}

pub fn adc_sample(v: f64, adc: &AdcModel) -> u16 {
    let max = f64::from(adc.max_code());
    let code = (v / adc.vref * max).round();
    if code.is_nan() {
        return 0;
    }
    code.clamp(0.0, max) as u16
}

/// Gravity reaction in the sensor frame for intrinsic Z(yaw), Y(pitch),
/// X(roll) rotations, in g. Yaw does not change the result.
pub fn gravity_in_sensor_frame(wrist: Wrist) -> [f64; 3] {
    let (sr, cr) = wrist.roll.to_radians().sin_cos();
    let (sp, cp) = wrist.pitch.to_radians().sin_cos();
    [-sp, cp * sr, cp * cr]
}

/// Static IMU reading: gravity plus noise on the accelerometer, noise only
/// on the gyroscope. Values are clamped to the configured full scale.
pub fn imu_sample<R: Rng + ?Sized>(
    wrist: Wrist,
    model: &ImuModel,
    rng: &mut R,
) -> [f64; IMU_CHANNELS] {
    let g = gravity_in_sensor_frame(wrist);
    let mut out = [0.0; IMU_CHANNELS];
    for axis in 0..3 {
        let a = g[axis] + gaussian(rng, model.accel_noise);
        out[axis] = a.clamp(-model.accel_range, model.accel_range);
    }
    for axis in 0..3 {
        let w = gaussian(rng, model.gyro_noise);
        out[3 + axis] = w.clamp(-model.gyro_range, model.gyro_range);
    }
    out
}

/// Levels of the S3..S0 select lines addressing mux channel `channel`.
pub fn mux_select_bits(channel: u8) -> [bool; 4] {
    [
        channel & 0b1000 != 0,
        channel & 0b0100 != 0,
        channel & 0b0010 != 0,
        channel & 0b0001 != 0,
    ]
}

/// Select-line pattern as a string, e.g. `"0101"` for channel 5.
pub fn mux_select_pattern(channel: u8) -> String {
    mux_select_bits(channel)
        .iter()
        .map(|b| if *b { '1' } else { '0' })
        .collect()
}

/// Result of one sequential scan over C0..C13.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuxScan {
    pub voltages: [f64; JOINT_COUNT],
    pub codes: [u16; JOINT_COUNT],
}

impl MuxScan {
    pub fn select_patterns() -> [[bool; 4]; JOINT_COUNT] {
        let mut out = [[false; 4]; JOINT_COUNT];
        for (ch, o) in out.iter_mut().enumerate() {
            *o = mux_select_bits(ch as u8);
        }
        out
    }
}

pub fn mux_scan<R: Rng + ?Sized>(
    pose: &HandPose,
    profile: &AnthropometricProfile,
    model: &GloveModel,
    rom: &RomTable,
    rng: &mut R,
) -> Result<MuxScan, PhysicsError> {
    validate_pose(pose, rom).map_err(PhysicsError::InvalidPose)?;
    let mut voltages = [0.0; JOINT_COUNT];
    let mut codes = [0u16; JOINT_COUNT];
    for channel in 0..JOINT_COUNT {
        let geom = scaled_geometry(&model.layout.geometry[channel], profile);
        let d = magnet_sensor_distance(pose.angles[channel], &geom)?;
        let own = flux_density(d, geom.dipole_coeff)?;
        let cross = cross_talk_flux(channel, &model.layout);
        let v = hall_voltage(own, cross, &model.hall, rng);
        voltages[channel] = v;
        codes[channel] = adc_sample(v, &model.adc);
    }
    Ok(MuxScan { voltages, codes })
}

/// Full data-collection step: Hall scan followed by the IMU read.
pub fn simulate_frame<R: Rng + ?Sized>(
    pose: &HandPose,
    profile: &AnthropometricProfile,
    model: &GloveModel,
    rom: &RomTable,
    rng: &mut R,
) -> Result<SensorFrame, PhysicsError> {
    let scan = mux_scan(pose, profile, model, rom, rng)?;
    let imu = imu_sample(pose.wrist, &model.imu, rng);
    Ok(SensorFrame {
        codes: scan.codes,
        imu,
    })
}

/// [`simulate_frame`] with a fresh random stream seeded by `seed`.
pub fn simulate_frame_seeded(
    pose: &HandPose,
    profile: &AnthropometricProfile,
    model: &GloveModel,
    rom: &RomTable,
    seed: u64,
) -> Result<SensorFrame, PhysicsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_frame(pose, profile, model, rom, &mut rng)
}
