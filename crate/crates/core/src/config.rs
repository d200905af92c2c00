//! Scenario, predictor, training, and tracker configuration.
//!
//! Everything loads from one TOML file; missing sections fall back to the
//! defaults below. A canonical byte encoding of the data-generating fields
//! feeds a SHA-256 digest that dataset files and experiment tables embed so
//! that artifacts produced under different configurations cannot be mixed up.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::tensornet::LayerSpec;
use crate::Result;

/// Uniform linear array description for one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_tx_antennas: usize,
    pub num_rx_antennas: usize,
    /// Element spacing as a fraction of the carrier wavelength.
    pub antenna_spacing_wavelengths: f64,
    pub carrier_frequency_hz: f64,
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tx_antennas < 1 || self.num_rx_antennas < 1 {
            return Err(Error::config("antenna counts must be >= 1"));
        }
        if !(self.antenna_spacing_wavelengths.is_finite() && self.antenna_spacing_wavelengths > 0.0)
        {
            return Err(Error::config("antenna spacing must be finite and positive"));
        }
        if !(self.carrier_frequency_hz.is_finite() && self.carrier_frequency_hz > 0.0) {
            return Err(Error::config("carrier frequency must be finite and positive"));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        299_792_458.0 / self.carrier_frequency_hz
    }

    pub fn antennas(&self, side: Side) -> usize {
        match side {
            Side::Tx => self.num_tx_antennas,
            Side::Rx => self.num_rx_antennas,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tx,
    Rx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Stationary,
    NonStationary,
}

/// Dual-band channel and mobility parameters.
///
/// Defaults are the paired channel profile: 3.5 GHz / 28 GHz carriers, 15 far
/// clusters of 20 paths per band, 50 m / 30 m visible regions, 6 deg / 1.9 deg
/// AoD spreads, 10 ns / 3 ns delay spreads (carried but unused by the
/// narrowband channel form), 2 dB / 4 dB shadow fading, and 8x1 / 32x1 arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub low_band: ArrayConfig,
    pub mm_band: ArrayConfig,
    pub cell_radius_m: f64,
    /// Minimum BS distance for user and scatterer placement, keeps free-space
    /// pathloss well defined.
    pub min_range_m: f64,
    pub num_far_clusters: usize,
    pub paths_per_cluster: usize,
    pub visible_region_radius_low_m: f64,
    pub visible_region_radius_mm_m: f64,
    pub cluster_aod_spread_low_rad: f64,
    pub cluster_aod_spread_mm_rad: f64,
    pub cluster_aoa_spread_low_rad: f64,
    pub cluster_aoa_spread_mm_rad: f64,
    /// Inert under the narrowband channel form; carried for completeness.
    pub cluster_delay_spread_low_s: f64,
    pub cluster_delay_spread_mm_s: f64,
    pub shadow_fading_std_low_db: f64,
    pub shadow_fading_std_mm_db: f64,
    /// `f64::INFINITY` suppresses all clusters (pure line-of-sight limit).
    pub ricean_k_low_db: f64,
    pub ricean_k_mm_db: f64,
    pub snr_db: f64,
    /// Per-axis std of the scatterer position noise that decorrelates the
    /// mmWave cluster angles from the low-band ones.
    pub angle_perturbation_std_m: f64,
    pub low_csi_period_s: f64,
    pub scenario_kind: ScenarioKind,
    pub local_cluster_radius_m: f64,
    pub speed_range_stationary_mps: [f64; 2],
    pub speed_range_non_stationary_mps: [f64; 2],
    pub accel_range_mps2: [f64; 2],
    /// Cadence of the low-band tracking snapshots consumed by the EKF.
    pub track_interval_s: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            low_band: ArrayConfig {
                num_tx_antennas: 8,
                num_rx_antennas: 1,
                antenna_spacing_wavelengths: 0.5,
                carrier_frequency_hz: 3.5e9,
            },
            mm_band: ArrayConfig {
                num_tx_antennas: 32,
                num_rx_antennas: 1,
                antenna_spacing_wavelengths: 0.5,
                carrier_frequency_hz: 28.0e9,
            },
            cell_radius_m: 100.0,
            min_range_m: 5.0,
            num_far_clusters: 15,
            paths_per_cluster: 20,
            visible_region_radius_low_m: 50.0,
            visible_region_radius_mm_m: 30.0,
            cluster_aod_spread_low_rad: 6.0_f64.to_radians(),
            cluster_aod_spread_mm_rad: 1.9_f64.to_radians(),
            // AoA spreads default to the AoD figures; with single-antenna
            // users the arrival side does not affect the channel.
            cluster_aoa_spread_low_rad: 6.0_f64.to_radians(),
            cluster_aoa_spread_mm_rad: 1.9_f64.to_radians(),
            cluster_delay_spread_low_s: 10.0e-9,
            cluster_delay_spread_mm_s: 3.0e-9,
            shadow_fading_std_low_db: 2.0,
            shadow_fading_std_mm_db: 4.0,
            ricean_k_low_db: 8.0,
            ricean_k_mm_db: 20.0,
            snr_db: 20.0,
            angle_perturbation_std_m: 0.8,
            low_csi_period_s: 0.2,
            scenario_kind: ScenarioKind::Stationary,
            local_cluster_radius_m: 2.0,
            speed_range_stationary_mps: [8.0, 12.0],
            speed_range_non_stationary_mps: [25.0, 30.0],
            accel_range_mps2: [-5.0, 5.0],
            track_interval_s: 0.02,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.low_band.validate()?;
        self.mm_band.validate()?;
        for (name, v) in [
            ("cell_radius_m", self.cell_radius_m),
            ("min_range_m", self.min_range_m),
            ("visible_region_radius_low_m", self.visible_region_radius_low_m),
            ("visible_region_radius_mm_m", self.visible_region_radius_mm_m),
            ("low_csi_period_s", self.low_csi_period_s),
            ("track_interval_s", self.track_interval_s),
            ("local_cluster_radius_m", self.local_cluster_radius_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be finite and positive")));
            }
        }
        if self.min_range_m >= self.cell_radius_m {
            return Err(Error::config("min_range_m must be below cell_radius_m"));
        }
        if self.paths_per_cluster == 0 {
            return Err(Error::config("paths_per_cluster must be >= 1"));
        }
        // Infinity is allowed (cluster-free limit); NaN is not.
        if self.ricean_k_low_db.is_nan() || self.ricean_k_mm_db.is_nan() {
            return Err(Error::config("ricean K factors must not be NaN"));
        }
        if self.speed_range_stationary_mps[0] > self.speed_range_stationary_mps[1]
            || self.speed_range_non_stationary_mps[0] > self.speed_range_non_stationary_mps[1]
            || self.accel_range_mps2[0] > self.accel_range_mps2[1]
        {
            return Err(Error::config("range bounds must be ordered"));
        }
        Ok(())
    }

    /// Noise-free pure-LOS variant used by geometry sanity checks.
    pub fn los_only(mut self) -> Self {
        self.ricean_k_low_db = f64::INFINITY;
        self.ricean_k_mm_db = f64::INFINITY;
        self
    }

    fn digest_bytes(&self, out: &mut Vec<u8>) {
        for band in [&self.low_band, &self.mm_band] {
            out.extend_from_slice(&(band.num_tx_antennas as u64).to_le_bytes());
            out.extend_from_slice(&(band.num_rx_antennas as u64).to_le_bytes());
            out.extend_from_slice(&band.antenna_spacing_wavelengths.to_le_bytes());
            out.extend_from_slice(&band.carrier_frequency_hz.to_le_bytes());
        }
        for v in [
            self.cell_radius_m,
            self.min_range_m,
            self.visible_region_radius_low_m,
            self.visible_region_radius_mm_m,
            self.cluster_aod_spread_low_rad,
            self.cluster_aod_spread_mm_rad,
            self.cluster_aoa_spread_low_rad,
            self.cluster_aoa_spread_mm_rad,
            self.cluster_delay_spread_low_s,
            self.cluster_delay_spread_mm_s,
            self.shadow_fading_std_low_db,
            self.shadow_fading_std_mm_db,
            self.ricean_k_low_db,
            self.ricean_k_mm_db,
            self.snr_db,
            self.angle_perturbation_std_m,
            self.low_csi_period_s,
            self.local_cluster_radius_m,
            self.speed_range_stationary_mps[0],
            self.speed_range_stationary_mps[1],
            self.speed_range_non_stationary_mps[0],
            self.speed_range_non_stationary_mps[1],
            self.accel_range_mps2[0],
            self.accel_range_mps2[1],
            self.track_interval_s,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.num_far_clusters as u64).to_le_bytes());
        out.extend_from_slice(&(self.paths_per_cluster as u64).to_le_bytes());
        out.push(match self.scenario_kind {
            ScenarioKind::Stationary => 0,
            ScenarioKind::NonStationary => 1,
        });
    }
}

/// Grouped-LSTM predictor hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// Number of prior CSI updates fed to the model (m).
    pub history_len: usize,
    /// Number of per-period prediction instants (Gamma).
    pub interpolation_factor: usize,
    pub num_beams: usize,
    pub layers: Vec<LayerSpec>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            history_len: 5,
            interpolation_factor: 4,
            num_beams: 32,
            layers: LayerSpec::classifier_stack(32),
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_len < 1 {
            return Err(Error::config("history_len must be >= 1"));
        }
        if self.interpolation_factor < 1 {
            return Err(Error::config("interpolation_factor must be >= 1"));
        }
        if self.num_beams < 1 {
            return Err(Error::config("num_beams must be >= 1"));
        }
        Ok(())
    }

    fn digest_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.history_len as u64).to_le_bytes());
        out.extend_from_slice(&(self.interpolation_factor as u64).to_le_bytes());
        out.extend_from_slice(&(self.num_beams as u64).to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u64).to_le_bytes());
        for l in &self.layers {
            l.digest_bytes(out);
        }
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 40,
            batch_size: 64,
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

/// EKF baseline tunables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfConfig {
    /// Per-second process noise for [angle, angular velocity, angular accel].
    pub process_noise: [f64; 3],
    /// Initial state variance for [angle, angular velocity, angular accel].
    pub init_variance: [f64; 3],
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            process_noise: [1e-6, 1e-4, 1e-2],
            init_variance: [0.01, 0.25, 1.0],
        }
    }
}

/// Dataset extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatagenConfig {
    pub num_samples: usize,
    /// Non-overlapping history windows extracted per episode.
    pub windows_per_episode: usize,
    /// Random evaluation query instants generated per sample window.
    pub queries_per_sample: usize,
    pub train_fraction: f64,
    /// When set, each episode draws its low-band Ricean K uniformly from this
    /// list instead of using the fixed scenario value.
    pub ricean_k_low_set_db: Option<Vec<f64>>,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            num_samples: 10_240,
            windows_per_episode: 2,
            queries_per_sample: 4,
            train_fraction: 0.8,
            ricean_k_low_set_db: None,
        }
    }
}

impl DatagenConfig {
    fn digest_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.num_samples as u64).to_le_bytes());
        out.extend_from_slice(&(self.windows_per_episode as u64).to_le_bytes());
        out.extend_from_slice(&(self.queries_per_sample as u64).to_le_bytes());
        out.extend_from_slice(&self.train_fraction.to_le_bytes());
        match &self.ricean_k_low_set_db {
            None => out.push(0),
            Some(set) => {
                out.push(1);
                out.extend_from_slice(&(set.len() as u64).to_le_bytes());
                for v in set {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
}

/// Top-level configuration bundle; one TOML file holds all sections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub predictor: PredictorConfig,
    pub training: TrainingConfig,
    pub ekf: EkfConfig,
    pub datagen: DatagenConfig,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| Error::config(format!("bad config file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("cannot serialize config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.predictor.validate()?;
        if self.training.batch_size == 0 || self.training.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical encoding of every field that affects
    /// generated data. Training-schedule fields are deliberately excluded.
    pub fn digest(&self) -> [u8; 32] {
        let mut bytes = Vec::with_capacity(512);
        self.scenario.digest_bytes(&mut bytes);
        self.predictor.digest_bytes(&mut bytes);
        self.datagen.digest_bytes(&mut bytes);
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(&bytes));
        out
    }

    /// Shrinks dataset and schedule for quick desk-scale runs.
    pub fn desk_scale(mut self) -> Self {
        self.datagen.num_samples = 2_048;
        self.training.epochs = 15;
        self
    }
}

pub fn digest_hex(digest: &[u8; 32]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults_load_exactly() {
        let s = ScenarioConfig::default();
        assert_eq!(s.low_band.carrier_frequency_hz, 3.5e9);
        assert_eq!(s.mm_band.carrier_frequency_hz, 28.0e9);
        assert_eq!(s.num_far_clusters, 15);
        assert_eq!(s.paths_per_cluster, 20);
        assert_eq!(s.visible_region_radius_low_m, 50.0);
        assert_eq!(s.visible_region_radius_mm_m, 30.0);
        assert_eq!(s.cluster_aod_spread_low_rad, 6.0_f64.to_radians());
        assert_eq!(s.cluster_aod_spread_mm_rad, 1.9_f64.to_radians());
        assert_eq!(s.cluster_delay_spread_low_s, 10.0e-9);
        assert_eq!(s.cluster_delay_spread_mm_s, 3.0e-9);
        assert_eq!(s.shadow_fading_std_low_db, 2.0);
        assert_eq!(s.shadow_fading_std_mm_db, 4.0);
        assert_eq!(s.low_band.num_tx_antennas, 8);
        assert_eq!(s.low_band.num_rx_antennas, 1);
        assert_eq!(s.mm_band.num_tx_antennas, 32);
        assert_eq!(s.mm_band.num_rx_antennas, 1);
        assert_eq!(s.ricean_k_mm_db, 20.0);
        assert_eq!(s.snr_db, 20.0);
        assert_eq!(s.angle_perturbation_std_m, 0.8);
        assert_eq!(s.low_csi_period_s, 0.2);
        assert_eq!(s.cell_radius_m, 100.0);
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let cfg = Config::default();
        let dir = std::env::temp_dir().join(format!("beamsim-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.toml");
        cfg.save(&path).unwrap();
        let loaded = Config::load(&path).unwrap();
        assert_eq!(cfg, loaded);
        assert_eq!(cfg.digest(), loaded.digest());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn digest_tracks_scenario_changes() {
        let base = Config::default();
        let mut other = Config::default();
        other.scenario.ricean_k_low_db = 0.0;
        assert_ne!(base.digest(), other.digest());
        // Schedule changes must not invalidate datasets.
        let mut sched = Config::default();
        sched.training.epochs = 3;
        assert_eq!(base.digest(), sched.digest());
    }

    #[test]
    fn infinite_k_is_valid_nan_is_not() {
        let cfg = ScenarioConfig::default().los_only();
        assert!(cfg.validate().is_ok());
        let mut bad = ScenarioConfig::default();
        bad.ricean_k_low_db = f64::NAN;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn desk_scale_shrinks_schedule_only() {
        let cfg = Config::default().desk_scale();
        assert_eq!(cfg.datagen.num_samples, 2_048);
        assert_eq!(cfg.training.epochs, 15);
        assert_eq!(cfg.scenario, ScenarioConfig::default());
    }
}
