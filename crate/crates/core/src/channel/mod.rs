//! Time-varying dual-band geometric channel model.
//!
//! A channel realization is a line-of-sight path plus a set of scatterer
//! clusters, each contributing a bundle of sub-paths with per-path complex
//! gains and small angular offsets around the cluster center:
//!
//! `H = sqrt(MN/rho_los) a_los a_rx(theta) a_tx(phi)^H
//!      + sum_c sqrt(MN/rho_c) sum_l (a_cl / sqrt(L_c)) a_rx(theta_c + theta_cl) a_tx(phi_c + phi_cl)^H`
//!
//! Clusters carry visible regions: a cluster contributes only while the user
//! is inside its region. The mmWave band shares the low-band line-of-sight
//! angles exactly and perturbs the far-cluster scatterer positions, which is
//! what couples the two bands and makes low-band history informative about
//! mmWave beams.

pub mod episode;
pub mod geometry;

use num_complex::Complex64;

use crate::config::{ArrayConfig, Side};
use crate::error::Error;
use crate::Result;

pub use episode::{generate_episode, CsiUpdate, Episode, EpisodePlan, PeriodData, QueryPoint};
pub use geometry::{derive_mmwave_geometry, step_trajectory, BandGeometry, UEState};

/// Small dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Low,
    Mm,
}

/// One propagation sub-path inside a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent {
    pub complex_gain: Complex64,
    pub aoa_offset_rad: f64,
    pub aod_offset_rad: f64,
}

/// A scatterer cluster materialized at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub pathloss_linear: f64,
    pub center_aoa_rad: f64,
    pub center_aod_rad: f64,
    pub paths: Vec<PathComponent>,
    pub scatterer_position_m: [f64; 2],
    pub visible_region_center_m: [f64; 2],
    pub visible_region_radius_m: f64,
    pub is_local: bool,
}

/// Line-of-sight term of the channel equation.
#[derive(Debug, Clone, PartialEq)]
pub struct LosPath {
    pub complex_gain: Complex64,
    pub aoa_rad: f64,
    pub aod_rad: f64,
    pub pathloss_linear: f64,
}

/// Channel matrix at one instant together with its angular-domain transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub matrix: CMat,
    pub angular: CMat,
    pub time_s: f64,
    pub band: Band,
}

impl ChannelSnapshot {
    pub fn from_matrix(matrix: CMat, time_s: f64, band: Band) -> Self {
        let angular = to_angular_domain(&matrix);
        ChannelSnapshot { matrix, angular, time_s, band }
    }

    /// Real/imaginary feature planes of the angular-domain matrix, flattened
    /// to `[2, rows*cols]`.
    pub fn angular_features(&self) -> Vec<f64> {
        let n = self.angular.data.len();
        let mut out = vec![0.0; 2 * n];
        for (i, v) in self.angular.data.iter().enumerate() {
            out[i] = v.re;
            out[n + i] = v.im;
        }
        out
    }
}

/// ULA response vector; entry `i` is `(1/sqrt(count)) exp(j 2 pi i (d/lambda) sin(angle))`.
pub fn steering_vector(angle_rad: f64, array: &ArrayConfig, side: Side) -> Vec<Complex64> {
    let count = array.antennas(side);
    let norm = 1.0 / (count as f64).sqrt();
    let phase_step = 2.0 * std::f64::consts::PI * array.antenna_spacing_wavelengths * angle_rad.sin();
    (0..count)
        .map(|i| Complex64::from_polar(norm, phase_step * i as f64))
        .collect()
}

/// Assembles the channel matrix from a line-of-sight path and the currently
/// active clusters. The caller is responsible for visible-region filtering.
pub fn assemble_channel(los: &LosPath, clusters: &[Cluster], array: &ArrayConfig) -> Result<CMat> {
    let (n, m) = (array.num_rx_antennas, array.num_tx_antennas);
    let mn = (m * n) as f64;
    if !(los.pathloss_linear.is_finite() && los.pathloss_linear > 0.0) {
        return Err(Error::invalid("LOS pathloss must be finite and positive"));
    }
    let mut h = CMat::zeros(n, m);
    let mut add_term = |amplitude: Complex64, aoa: f64, aod: f64| {
        let a_rx = steering_vector(aoa, array, Side::Rx);
        let a_tx = steering_vector(aod, array, Side::Tx);
        for (r, arx) in a_rx.iter().enumerate() {
            for (c, atx) in a_tx.iter().enumerate() {
                *h.at_mut(r, c) += amplitude * arx * atx.conj();
            }
        }
    };
    add_term((mn / los.pathloss_linear).sqrt() * los.complex_gain, los.aoa_rad, los.aod_rad);
    for cluster in clusters {
        if !(cluster.pathloss_linear.is_finite() && cluster.pathloss_linear > 0.0) {
            return Err(Error::invalid("cluster pathloss must be finite and positive"));
        }
        if cluster.paths.is_empty() {
            return Err(Error::invalid("cluster must carry at least one path"));
        }
        let scale = (mn / cluster.pathloss_linear).sqrt() / (cluster.paths.len() as f64).sqrt();
        for path in &cluster.paths {
            add_term(
                scale * path.complex_gain,
                cluster.center_aoa_rad + path.aoa_offset_rad,
                cluster.center_aod_rad + path.aod_offset_rad,
            );
        }
    }
    Ok(h)
}

/// Unitary DFT matrix of size `k`: entry `(n, j) = (1/sqrt(k)) exp(-j 2 pi n j / k)`.
fn dft_matrix(k: usize) -> CMat {
    let mut f = CMat::zeros(k, k);
    let norm = 1.0 / (k as f64).sqrt();
    for n in 0..k {
        for j in 0..k {
            let phase = -2.0 * std::f64::consts::PI * (n * j) as f64 / k as f64;
            *f.at_mut(n, j) = Complex64::from_polar(norm, phase);
        }
    }
    f
}

/// Angular-domain transform `H_ag = F_N H F_M^H`; unitary, so norm-preserving
/// and invertible.
pub fn to_angular_domain(h: &CMat) -> CMat {
    let f_n = dft_matrix(h.rows);
    let f_m = dft_matrix(h.cols);
    // A = F_N * H
    let mut a = CMat::zeros(h.rows, h.cols);
    for r in 0..h.rows {
        for c in 0..h.cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..h.rows {
                acc += f_n.at(r, k) * h.at(k, c);
            }
            *a.at_mut(r, c) = acc;
        }
    }
    // H_ag = A * F_M^H  (entry (k, c) of F_M^H is conj(F_M[c, k]))
    let mut out = CMat::zeros(h.rows, h.cols);
    for r in 0..h.rows {
        for c in 0..h.cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..h.cols {
                acc += a.at(r, k) * f_m.at(c, k).conj();
            }
            *out.at_mut(r, c) = acc;
        }
    }
    out
}

/// Inverse of [`to_angular_domain`].
pub fn from_angular_domain(h_ag: &CMat) -> CMat {
    let f_n = dft_matrix(h_ag.rows);
    let f_m = dft_matrix(h_ag.cols);
    // H = F_N^H * H_ag * F_M
    let mut a = CMat::zeros(h_ag.rows, h_ag.cols);
    for r in 0..h_ag.rows {
        for c in 0..h_ag.cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..h_ag.rows {
                acc += f_n.at(k, r).conj() * h_ag.at(k, c);
            }
            *a.at_mut(r, c) = acc;
        }
    }
    let mut out = CMat::zeros(h_ag.rows, h_ag.cols);
    for r in 0..h_ag.rows {
        for c in 0..h_ag.cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..h_ag.cols {
                acc += a.at(r, k) * f_m.at(k, c);
            }
            *out.at_mut(r, c) = acc;
        }
    }
    out
}

/// Rescales cluster powers by a single common factor so that
/// `los_power / sum(cluster powers) = 10^(k_db/10)` exactly.
/// `k_db = +inf` yields all-zero cluster powers (pure line-of-sight limit).
pub fn apply_ricean_scaling(los_power: f64, cluster_powers: &[f64], k_db: f64) -> Result<Vec<f64>> {
    if !(los_power.is_finite() && los_power > 0.0) {
        return Err(Error::invalid("LOS power must be finite and positive"));
    }
    if cluster_powers.is_empty() {
        return Err(Error::invalid("at least one cluster power required"));
    }
    let total: f64 = cluster_powers.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::invalid("cluster powers must sum to a positive value"));
    }
    if k_db == f64::INFINITY {
        return Ok(vec![0.0; cluster_powers.len()]);
    }
    let factor = los_power * 10f64.powf(-k_db / 10.0) / total;
    Ok(cluster_powers.iter().map(|p| p * factor).collect())
}

/// Free-space pathloss `(4 pi d f / c)^2`, distance floored at 1 m.
pub fn free_space_pathloss(distance_m: f64, carrier_hz: f64) -> f64 {
    let d = distance_m.max(1.0);
    let x = 4.0 * std::f64::consts::PI * d * carrier_hz / 299_792_458.0;
    x * x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn test_array(m: usize, n: usize) -> ArrayConfig {
        ArrayConfig {
            num_tx_antennas: m,
            num_rx_antennas: n,
            antenna_spacing_wavelengths: 0.5,
            carrier_frequency_hz: 3.5e9,
        }
    }

    #[test]
    fn steering_at_broadside_is_uniform() {
        let v = steering_vector(0.0, &test_array(4, 1), Side::Tx);
        for e in &v {
            assert_abs_diff_eq!(e.re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(e.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_at_endfire_flips_sign() {
        let v = steering_vector(std::f64::consts::FRAC_PI_2, &test_array(2, 1), Side::Tx);
        let s = 1.0 / 2.0_f64.sqrt();
        assert_abs_diff_eq!(v[0].re, s, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1].re, -s, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1].im, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn steering_is_unit_norm_on_a_fine_grid() {
        let arr = test_array(32, 1);
        let mut angle = -std::f64::consts::PI;
        while angle < std::f64::consts::PI {
            let v = steering_vector(angle, &arr, Side::Tx);
            let norm: f64 = v.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "norm {norm} at angle {angle}");
            angle += 0.01;
        }
    }

    #[test]
    fn los_only_channel_expands_by_hand() {
        // M=2, N=1, unit gain and pathloss, zero angles: every entry is
        // sqrt(MN) * 1/sqrt(N) * 1/sqrt(M) = 1.
        let los = LosPath {
            complex_gain: Complex64::new(1.0, 0.0),
            aoa_rad: 0.0,
            aod_rad: 0.0,
            pathloss_linear: 1.0,
        };
        let h = assemble_channel(&los, &[], &test_array(2, 1)).unwrap();
        assert_eq!(h.rows, 1);
        assert_eq!(h.cols, 2);
        for c in 0..2 {
            assert_abs_diff_eq!(h.at(0, c).re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h.at(0, c).im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_path_cluster_reproduces_los_formula() {
        let angle_aoa = 0.3;
        let angle_aod = -0.7;
        let arr = test_array(4, 2);
        let los = LosPath {
            complex_gain: Complex64::new(1.0, 0.0),
            aoa_rad: angle_aoa,
            aod_rad: angle_aod,
            pathloss_linear: 2.5,
        };
        let as_los = assemble_channel(&los, &[], &arr).unwrap();

        let far_los = LosPath {
            complex_gain: Complex64::new(1.0, 0.0),
            aoa_rad: 0.0,
            aod_rad: 0.0,
            pathloss_linear: f64::MAX, // negligible
        };
        let cluster = Cluster {
            pathloss_linear: 2.5,
            center_aoa_rad: angle_aoa,
            center_aod_rad: angle_aod,
            paths: vec![PathComponent {
                complex_gain: Complex64::new(1.0, 0.0),
                aoa_offset_rad: 0.0,
                aod_offset_rad: 0.0,
            }],
            scatterer_position_m: [0.0, 0.0],
            visible_region_center_m: [0.0, 0.0],
            visible_region_radius_m: 1.0,
            is_local: false,
        };
        let as_cluster = assemble_channel(&far_los, &[cluster], &arr).unwrap();
        for (a, b) in as_los.data.iter().zip(&as_cluster.data) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-9);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-9);
        }
    }

    #[test]
    fn two_orthogonal_terms_give_rank_two() {
        // Angles on the DFT grid of a 4-antenna array are orthogonal.
        let arr = test_array(4, 2);
        let los = LosPath {
            complex_gain: Complex64::new(1.0, 0.0),
            aoa_rad: 0.0,
            aod_rad: 0.0,
            pathloss_linear: 1.0,
        };
        let second_angle = (2.0 / 4.0_f64).asin();
        let cluster = Cluster {
            pathloss_linear: 1.0,
            center_aoa_rad: (2.0 / 2.0_f64 - 2.0).asin(),
            center_aod_rad: second_angle,
            paths: vec![PathComponent {
                complex_gain: Complex64::new(1.0, 0.0),
                aoa_offset_rad: 0.0,
                aod_offset_rad: 0.0,
            }],
            scatterer_position_m: [0.0, 0.0],
            visible_region_center_m: [0.0, 0.0],
            visible_region_radius_m: 1.0,
            is_local: false,
        };
        let h = assemble_channel(&los, &[cluster], &arr).unwrap();
        // Rank via the 2x2 Gram matrix H H^H: two positive eigenvalues.
        let mut g = [[Complex64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                for k in 0..4 {
                    g[r][c] += h.at(r, k) * h.at(c, k).conj();
                }
            }
        }
        let tr = g[0][0].re + g[1][1].re;
        let det = (g[0][0] * g[1][1] - g[0][1] * g[1][0]).re;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let (e1, e2) = (tr / 2.0 + disc, tr / 2.0 - disc);
        assert!(e1 > 1e-6 && e2 > 1e-6, "eigenvalues {e1} {e2} should both be positive");
    }

    #[test]
    fn assemble_rejects_bad_pathloss() {
        let los = LosPath {
            complex_gain: Complex64::new(1.0, 0.0),
            aoa_rad: 0.0,
            aod_rad: 0.0,
            pathloss_linear: 0.0,
        };
        assert!(assemble_channel(&los, &[], &test_array(2, 1)).is_err());
    }

    #[test]
    fn angular_transform_of_identity_is_identity() {
        let mut h = CMat::zeros(4, 4);
        for i in 0..4 {
            *h.at_mut(i, i) = Complex64::new(1.0, 0.0);
        }
        let ag = to_angular_domain(&h);
        for r in 0..4 {
            for c in 0..4 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ag.at(r, c).re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(ag.at(r, c).im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn grid_steering_concentrates_in_one_bin() {
        let arr = test_array(8, 4);
        // sin(angle) = 2n/K lies exactly on the DFT grid.
        let aod = (2.0 * 3.0 / 8.0_f64).asin();
        let aoa = (2.0 * 1.0 / 4.0_f64).asin();
        let a_rx = steering_vector(aoa, &arr, Side::Rx);
        let a_tx = steering_vector(aod, &arr, Side::Tx);
        let mut h = CMat::zeros(4, 8);
        for r in 0..4 {
            for c in 0..8 {
                *h.at_mut(r, c) = a_rx[r] * a_tx[c].conj();
            }
        }
        let ag = to_angular_domain(&h);
        let mut unit_entries = 0;
        for v in &ag.data {
            let mag = v.norm();
            if mag > 1e-9 {
                assert_abs_diff_eq!(mag, 1.0, epsilon = 1e-9);
                unit_entries += 1;
            }
        }
        assert_eq!(unit_entries, 1, "exactly one angular bin should light up");
    }

    #[test]
    fn angular_round_trip_recovers_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut h = CMat::zeros(3, 5);
        for v in h.data.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let back = from_angular_domain(&to_angular_domain(&h));
        for (a, b) in h.data.iter().zip(&back.data) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-10);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-10);
        }
    }

    #[test]
    fn ricean_scaling_examples() {
        let scaled = apply_ricean_scaling(2.0, &[1.0, 3.0], 0.0).unwrap();
        assert_abs_diff_eq!(scaled.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
        // Proportions preserved.
        assert_abs_diff_eq!(scaled[1] / scaled[0], 3.0, epsilon = 1e-12);

        let scaled = apply_ricean_scaling(5.0, &[1.0, 1.0], 20.0).unwrap();
        assert_abs_diff_eq!(scaled.iter().sum::<f64>(), 0.05, epsilon = 1e-12);

        let silent = apply_ricean_scaling(1.0, &[4.0], f64::INFINITY).unwrap();
        assert_eq!(silent, vec![0.0]);

        assert!(apply_ricean_scaling(1.0, &[0.0, 0.0], 3.0).is_err());
        assert!(apply_ricean_scaling(1.0, &[], 3.0).is_err());
    }
}
