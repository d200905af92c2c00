//! EKF beam tracker with angle / angular-velocity / angular-acceleration
//! state.
//!
//! The filter measures the complex sample received through one low-band beam
//! pair every tracking interval: `y = g * a_tx(theta)^H f + noise`, with the
//! beam re-selected toward the predicted angle before each measurement and
//! the complex path gain `g` re-estimated by least squares after each update.
//! At a mmWave query instant the tracked angle is propagated ballistically
//! and mapped to the nearest mmWave codebook beam (both bands share the
//! line-of-sight angle).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::beams::{dft_codebook, Codebook};
use crate::channel::episode::{episode_rng, Episode};
use crate::channel::geometry::wrap_angle;
use crate::channel::CMat;
use crate::config::{ArrayConfig, Config, Side};
use crate::Result;

/// Stream tag so the tracker's measurement noise is independent of the
/// episode-generation stream.
const EKF_SEED_TAG: u64 = 0x8f1c_2a9d_5e47_3b61;

/// Gain magnitudes below this leave the path-gain estimate untouched; the
/// beam is pointing too far away for a least-squares refresh to mean much.
const MIN_RESPONSE_FOR_GAIN: f64 = 0.05;

/// The filter never assumes measurements better than this SNR. Without a
/// noise floor the Kalman gain grows past the linearization's trust region
/// and the update overshoots on near-noiseless data.
const MAX_FILTER_SNR_DB: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    /// `[angle, angular velocity, angular acceleration]`
    pub state: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    pub last_update_s: f64,
}

impl EkfState {
    pub fn new(angle: f64, init_variance: [f64; 3], time_s: f64) -> Self {
        let mut covariance = [[0.0; 3]; 3];
        for i in 0..3 {
            covariance[i][i] = init_variance[i];
        }
        EkfState { state: [wrap_angle(angle), 0.0, 0.0], covariance, last_update_s: time_s }
    }

    pub fn symmetrize(&mut self) {
        for i in 0..3 {
            for j in i + 1..3 {
                let v = 0.5 * (self.covariance[i][j] + self.covariance[j][i]);
                self.covariance[i][j] = v;
                self.covariance[j][i] = v;
            }
        }
    }

    /// Positive-definiteness via leading principal minors.
    pub fn covariance_is_pd(&self) -> bool {
        let p = &self.covariance;
        let m1 = p[0][0];
        let m2 = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let m3 = p[0][0] * (p[1][1] * p[2][2] - p[1][2] * p[2][1])
            - p[0][1] * (p[1][0] * p[2][2] - p[1][2] * p[2][0])
            + p[0][2] * (p[1][0] * p[2][1] - p[1][1] * p[2][0]);
        m1 > 0.0 && m2 > 0.0 && m3 > 0.0
    }

    /// Ballistic angle extrapolation without touching the filter.
    pub fn angle_at(&self, t_s: f64) -> f64 {
        let dt = t_s - self.last_update_s;
        wrap_angle(self.state[0] + self.state[1] * dt + 0.5 * self.state[2] * dt * dt)
    }
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Constant-acceleration propagation: `x <- F x`, `P <- F P F^T + Q dt`.
pub fn ekf_predict(state: &EkfState, dt_s: f64, process_noise_per_s: [f64; 3]) -> EkfState {
    assert!(dt_s > 0.0);
    let f = [[1.0, dt_s, 0.5 * dt_s * dt_s], [0.0, 1.0, dt_s], [0.0, 0.0, 1.0]];
    let x = &state.state;
    let new_x = [
        wrap_angle(x[0] + x[1] * dt_s + 0.5 * x[2] * dt_s * dt_s),
        x[1] + x[2] * dt_s,
        x[2],
    ];
    let ft = {
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = f[j][i];
            }
        }
        t
    };
    let mut p = mat_mul(&mat_mul(&f, &state.covariance), &ft);
    for i in 0..3 {
        p[i][i] += process_noise_per_s[i] * dt_s;
    }
    let mut out = EkfState {
        state: new_x,
        covariance: p,
        last_update_s: state.last_update_s + dt_s,
    };
    out.symmetrize();
    out
}

/// Transmit-side beam response `a_tx(angle)^H f` and its angle derivative.
pub fn beam_response(angle: f64, array: &ArrayConfig, beam: &[Complex64]) -> (Complex64, Complex64) {
    let m = array.num_tx_antennas;
    let norm = 1.0 / (m as f64).sqrt();
    let c0 = 2.0 * std::f64::consts::PI * array.antenna_spacing_wavelengths;
    let (sin_t, cos_t) = (angle.sin(), angle.cos());
    let mut s = Complex64::new(0.0, 0.0);
    let mut ds = Complex64::new(0.0, 0.0);
    for (k, f_k) in beam.iter().enumerate() {
        let conj_a = Complex64::from_polar(norm, -c0 * k as f64 * sin_t);
        let term = conj_a * f_k;
        s += term;
        ds += Complex64::new(0.0, -c0 * k as f64 * cos_t) * term;
    }
    (s, ds)
}

/// Measurement update on the real/imaginary-stacked received sample.
/// A near-singular innovation covariance skips the update and inflates the
/// covariance instead, signalling divergence to the caller.
pub fn ekf_update(
    state: &EkfState,
    measurement: Complex64,
    beam: &[Complex64],
    array: &ArrayConfig,
    gain: Complex64,
    measurement_noise_var: f64,
) -> (EkfState, bool) {
    let mut st = *state;
    let (s, ds) = beam_response(st.state[0], array, beam);
    let predicted = gain * s;
    let jac = gain * ds;
    // 2x3 Jacobian has non-zeros only in the angle column.
    let h = [jac.re, jac.im];
    let p = &st.covariance;
    let r = measurement_noise_var / 2.0;
    // S = H P H^T + R with H = [h0, 0, 0; h1, 0, 0]
    let p00 = p[0][0];
    let s00 = h[0] * p00 * h[0] + r;
    let s01 = h[0] * p00 * h[1];
    let s10 = h[1] * p00 * h[0];
    let s11 = h[1] * p00 * h[1] + r;
    let det = s00 * s11 - s01 * s10;
    if !det.is_finite() || det.abs() < 1e-300 {
        for i in 0..3 {
            st.covariance[i][i] *= 2.0;
        }
        st.symmetrize();
        return (st, true);
    }
    let inv = [[s11 / det, -s01 / det], [-s10 / det, s00 / det]];
    // K = P H^T S^-1: P H^T is the 3x2 matrix with columns P[:,0] * h.
    let pc = [p[0][0], p[1][0], p[2][0]];
    let mut k = [[0.0; 2]; 3];
    for i in 0..3 {
        let pht = [pc[i] * h[0], pc[i] * h[1]];
        k[i][0] = pht[0] * inv[0][0] + pht[1] * inv[1][0];
        k[i][1] = pht[0] * inv[0][1] + pht[1] * inv[1][1];
    }
    let resid = [measurement.re - predicted.re, measurement.im - predicted.im];
    for i in 0..3 {
        st.state[i] += k[i][0] * resid[0] + k[i][1] * resid[1];
    }
    st.state[0] = wrap_angle(st.state[0]);
    // P <- (I - K H) P; K H has non-zeros only in the first column.
    let kh = [k[0][0] * h[0] + k[0][1] * h[1], k[1][0] * h[0] + k[1][1] * h[1], k[2][0] * h[0] + k[2][1] * h[1]];
    let mut new_p = st.covariance;
    for i in 0..3 {
        for j in 0..3 {
            new_p[i][j] -= kh[i] * p[0][j];
        }
    }
    st.covariance = new_p;
    st.symmetrize();
    (st, false)
}

/// Measured sample through a beam: `w^H H f` for the trivial single-antenna
/// receive side. Noise is drawn at the true SNR; the returned variance is the
/// floored one the filter should assume.
fn measure(h: &CMat, beam: &[Complex64], snr_db: f64, rng: &mut impl Rng) -> (Complex64, f64) {
    let mut y = Complex64::new(0.0, 0.0);
    let w = 1.0 / (h.rows as f64).sqrt();
    for r in 0..h.rows {
        for c in 0..h.cols {
            y += w * h.at(r, c) * beam[c];
        }
    }
    let mean_power = h.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / h.data.len() as f64;
    let var = mean_power * 10f64.powf(-snr_db / 10.0);
    let sigma = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    let filter_var = mean_power * 10f64.powf(-snr_db.min(MAX_FILTER_SNR_DB) / 10.0);
    (y + Complex64::new(re * sigma, im * sigma), filter_var)
}

/// Episode-level tracker.
#[derive(Debug, Clone)]
pub struct EkfTracker {
    pub state: EkfState,
    pub gain: Complex64,
    pub process_noise: [f64; 3],
    pub low_codebook: Codebook,
}

impl EkfTracker {
    /// Bootstraps from a full low-band sweep on the first track snapshot.
    pub fn init(
        first: &CMat,
        array: &ArrayConfig,
        init_variance: [f64; 3],
        process_noise: [f64; 3],
        snr_db: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let low_codebook = dft_codebook(array, array.num_tx_antennas, Side::Tx)?;
        let mut best = (0usize, f64::NEG_INFINITY, Complex64::new(0.0, 0.0));
        for (i, beam) in low_codebook.beams.iter().enumerate() {
            let (y, _) = measure(first, beam, snr_db, rng);
            if y.norm() > best.1 {
                best = (i, y.norm(), y);
            }
        }
        let angle = low_codebook.beam_angle(best.0);
        let (s, _) = beam_response(angle, array, &low_codebook.beams[best.0]);
        let gain = if s.norm() > MIN_RESPONSE_FOR_GAIN { best.2 / s } else { best.2 };
        Ok(EkfTracker {
            state: EkfState::new(angle, init_variance, 0.0),
            gain,
            process_noise,
            low_codebook,
        })
    }

    /// Starts from a known angle and path gain (no bootstrap sweep).
    pub fn init_at(
        angle: f64,
        gain: Complex64,
        array: &ArrayConfig,
        init_variance: [f64; 3],
        process_noise: [f64; 3],
    ) -> Result<Self> {
        Ok(EkfTracker {
            state: EkfState::new(angle, init_variance, 0.0),
            gain,
            process_noise,
            low_codebook: dft_codebook(array, array.num_tx_antennas, Side::Tx)?,
        })
    }

    /// One tracking cycle: predict to the snapshot instant, point the beam at
    /// the predicted angle, measure, update, refresh the gain estimate.
    pub fn track_step(&mut self, snapshot: &CMat, t_s: f64, snr_db: f64, rng: &mut impl Rng) {
        let dt = t_s - self.state.last_update_s;
        if dt > 0.0 {
            self.state = ekf_predict(&self.state, dt, self.process_noise);
        }
        let beam_idx = self.low_codebook.nearest_beam(self.state.state[0]);
        let beam = &self.low_codebook.beams[beam_idx];
        let (y, var) = measure(snapshot, beam, snr_db, rng);
        let (st, _skipped) =
            ekf_update(&self.state, y, beam, &self.low_codebook.array, self.gain, var);
        self.state = st;
        let (s, _) = beam_response(self.state.state[0], &self.low_codebook.array, beam);
        if s.norm() > MIN_RESPONSE_FOR_GAIN {
            self.gain = y / s;
        }
    }
}

/// Predicted mmWave beam at one query instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfQueryPrediction {
    pub period_index: usize,
    pub query_index: usize,
    pub time_s: f64,
    pub beam: usize,
}

/// Runs the tracker over an episode's low-band grid and answers every query
/// instant with the nearest mmWave beam to the extrapolated angle.
pub fn ekf_track_episode(
    episode: &Episode,
    cfg: &Config,
    master_seed: u64,
) -> Result<Vec<EkfQueryPrediction>> {
    let mut rng = episode_rng(master_seed ^ EKF_SEED_TAG, episode.id);
    let mm_codebook =
        dft_codebook(&cfg.scenario.mm_band, cfg.predictor.num_beams, Side::Tx)?;
    let mut tracker = EkfTracker::init(
        &episode.low_track[0].matrix,
        &cfg.scenario.low_band,
        cfg.ekf.init_variance,
        cfg.ekf.process_noise,
        cfg.scenario.snr_db,
        &mut rng,
    )?;
    // Filter states after each grid point, for query-time extrapolation.
    let mut timeline: Vec<EkfState> = Vec::with_capacity(episode.low_track.len());
    timeline.push(tracker.state);
    for snap in &episode.low_track[1..] {
        tracker.track_step(&snap.matrix, snap.time_s, cfg.scenario.snr_db, &mut rng);
        timeline.push(tracker.state);
    }
    let dt = cfg.scenario.track_interval_s;
    let mut out = Vec::new();
    for (pi, period) in episode.periods.iter().enumerate() {
        for (qi, q) in period.queries.iter().enumerate() {
            let grid = ((q.time_s / dt).floor() as usize).min(timeline.len() - 1);
            let angle = timeline[grid].angle_at(q.time_s);
            out.push(EkfQueryPrediction {
                period_index: pi,
                query_index: qi,
                time_s: q.time_s,
                beam: mm_codebook.nearest_beam(angle),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::steering_vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn low_array() -> ArrayConfig {
        ArrayConfig {
            num_tx_antennas: 8,
            num_rx_antennas: 1,
            antenna_spacing_wavelengths: 0.5,
            carrier_frequency_hz: 3.5e9,
        }
    }

    /// Pure steering-row channel at the given transmit angle.
    fn los_row(angle: f64, scale: f64, array: &ArrayConfig) -> CMat {
        let a = steering_vector(angle, array, Side::Tx);
        let mut h = CMat::zeros(1, array.num_tx_antennas);
        for (c, v) in a.iter().enumerate() {
            *h.at_mut(0, c) = scale * v.conj();
        }
        h
    }

    #[test]
    fn predict_preserves_static_state() {
        let s = EkfState::new(0.5, [0.01, 0.01, 0.01], 0.0);
        let out = ekf_predict(&s, 0.02, [0.0, 0.0, 0.0]);
        assert_eq!(out.state[0], 0.5);
        assert_eq!(out.last_update_s, 0.02);

        let mut moving = s;
        moving.state[1] = 0.1;
        let out = ekf_predict(&moving, 0.02, [0.0, 0.0, 0.0]);
        assert!((out.state[0] - 0.502).abs() < 1e-12);
    }

    #[test]
    fn covariance_trace_grows_under_process_noise() {
        let s = EkfState::new(0.0, [0.01, 0.01, 0.01], 0.0);
        let out = ekf_predict(&s, 0.02, [1e-6, 1e-4, 1e-2]);
        let tr_in: f64 = (0..3).map(|i| s.covariance[i][i]).sum();
        let tr_out: f64 = (0..3).map(|i| out.covariance[i][i]).sum();
        assert!(tr_out > tr_in);
    }

    #[test]
    fn infinite_measurement_noise_leaves_state_unchanged() {
        let arr = low_array();
        let cb = dft_codebook(&arr, 8, Side::Tx).unwrap();
        let s = EkfState::new(0.3, [0.01, 0.01, 0.01], 0.0);
        let (out, skipped) = ekf_update(
            &s,
            Complex64::new(0.5, -0.2),
            &cb.beams[4],
            &arr,
            Complex64::new(1.0, 0.0),
            1e30,
        );
        assert!(!skipped);
        for i in 0..3 {
            assert!((out.state[i] - s.state[i]).abs() < 1e-12, "state moved under zero gain");
        }
    }

    #[test]
    fn noiseless_static_channel_stays_locked() {
        // Correct initialization: angle and complex path gain known exactly.
        let arr = low_array();
        let angle = 0.37;
        let scale = Complex64::new(1e-3, 0.0);
        let h = los_row(angle, 1e-3, &arr);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tracker = EkfTracker::init_at(
            angle,
            scale,
            &arr,
            [0.01, 0.25, 1.0],
            [1e-6, 1e-4, 1e-2],
        )
        .unwrap();
        for k in 1..=10 {
            tracker.track_step(&h, k as f64 * 0.02, 200.0, &mut rng);
        }
        let err = wrap_angle(tracker.state.state[0] - angle).abs();
        assert!(err < 1e-3, "angle error {err} after 10 noiseless updates");
    }

    #[test]
    fn constant_velocity_tracking_stays_within_a_beamwidth() {
        let arr = low_array();
        let omega = 0.15; // rad/s
        let theta0 = -0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h0 = los_row(theta0, 1e-3, &arr);
        let mut tracker =
            EkfTracker::init(&h0, &arr, [0.01, 0.25, 1.0], [1e-6, 1e-4, 1e-2], 200.0, &mut rng)
                .unwrap();
        let mut worst_late_error: f64 = 0.0;
        for k in 1..=100 {
            let t = k as f64 * 0.02;
            let angle = theta0 + omega * t;
            let h = los_row(angle, 1e-3, &arr);
            tracker.track_step(&h, t, 200.0, &mut rng);
            if k > 10 {
                let err = (tracker.state.state[0].sin() - angle.sin()).abs();
                worst_late_error = worst_late_error.max(err);
            }
        }
        let beamwidth = 2.0 / 8.0;
        assert!(
            worst_late_error < beamwidth,
            "sin-space error {worst_late_error} exceeds one beamwidth {beamwidth}"
        );
    }

    #[test]
    fn covariance_stays_symmetric_pd_over_many_cycles() {
        let arr = low_array();
        let angle = 0.1;
        let h = los_row(angle, 1e-3, &arr);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tracker =
            EkfTracker::init(&h, &arr, [0.01, 0.25, 1.0], [1e-6, 1e-4, 1e-2], 20.0, &mut rng)
                .unwrap();
        for k in 1..=10_000 {
            tracker.track_step(&h, k as f64 * 0.02, 20.0, &mut rng);
            let p = &tracker.state.covariance;
            for i in 0..3 {
                for j in 0..3 {
                    assert!((p[i][j] - p[j][i]).abs() < 1e-10, "asymmetry at cycle {k}");
                }
            }
            assert!(tracker.state.covariance_is_pd(), "covariance lost PD at cycle {k}");
        }
    }

    #[test]
    fn angle_on_beam_grid_maps_to_that_beam() {
        let mm = ArrayConfig {
            num_tx_antennas: 32,
            num_rx_antennas: 1,
            antenna_spacing_wavelengths: 0.5,
            carrier_frequency_hz: 28.0e9,
        };
        let cb = dft_codebook(&mm, 32, Side::Tx).unwrap();
        for i in [0usize, 5, 19, 31] {
            assert_eq!(cb.nearest_beam(cb.beam_angle(i)), i);
        }
    }
}
