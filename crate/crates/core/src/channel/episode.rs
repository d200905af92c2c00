//! Episode generation: one user trajectory observed on both bands.
//!
//! An episode covers `num_periods` CSI periods of length `T`. It carries
//!  * low-band snapshots on the fast tracking grid (EKF measurements),
//!  * noisy angular low-band features at every CSI update (predictor input),
//!  * noise-free mmWave snapshots at each update instant, at the
//!    interpolation instants `t_n + (2g-1)T/(2G)`, and at randomly drawn
//!    beam-training query instants (labels and evaluation).
//!
//! Generation is pure given `(config, seed)`: all randomness comes from one
//! counter-based stream in a fixed draw order, so episodes regenerate
//! bit-identically and independent episodes can be produced in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::geometry::{
    active_clusters, derive_mmwave_geometry, draw_low_band_geometry, draw_ue_start, los_at,
    materialize_cluster, position_at, BandGeometry, UEState,
};
use crate::channel::{
    apply_ricean_scaling, assemble_channel, Band, ChannelSnapshot, Cluster,
};
use crate::config::ScenarioConfig;
use crate::error::Error;
use crate::Result;

/// What to sample within an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodePlan {
    /// Number of CSI periods (updates happen at `t_n = n T`, `n < num_periods`).
    pub num_periods: usize,
    /// Interpolation factor: mmWave snapshots per period.
    pub gamma: usize,
    /// Random beam-training instants drawn per period.
    pub queries_per_period: usize,
}

/// Power split of one assembled snapshot, before and after shadow fading.
/// Kept for diagnostics: the Ricean invariant is checked on `pre_shadow`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerBudget {
    pub los_power: f64,
    pub cluster_powers_pre_shadow: Vec<f64>,
    pub cluster_powers_post_shadow: Vec<f64>,
}

/// One low-band CSI update.
#[derive(Debug, Clone)]
pub struct CsiUpdate {
    pub time_s: f64,
    pub clean: ChannelSnapshot,
    /// Angular-domain real/imag features of the noise-corrupted matrix,
    /// flattened to `[2, N*M]`; this is what the predictor sees.
    pub noisy_features: Vec<f64>,
    pub budget: PowerBudget,
}

/// A random mmWave beam-training instant with its noise-free channel.
#[derive(Debug, Clone)]
pub struct QueryPoint {
    pub time_s: f64,
    pub eta: f64,
    pub mm: ChannelSnapshot,
}

/// All mmWave activity inside one CSI period `[t_n, t_n + T)`.
#[derive(Debug, Clone)]
pub struct PeriodData {
    pub t_start: f64,
    /// Noise-free mmWave channel at the update instant itself.
    pub mm_at_update: ChannelSnapshot,
    /// Noise-free mmWave channels at the interpolation instants.
    pub mm_interp: Vec<ChannelSnapshot>,
    pub queries: Vec<QueryPoint>,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub id: u64,
    pub ue_start: UEState,
    pub ricean_k_low_db: f64,
    pub updates: Vec<CsiUpdate>,
    pub periods: Vec<PeriodData>,
    /// Noise-free low-band snapshots on the tracking grid, spacing
    /// `track_interval_s`, covering `[0, num_periods * T]`.
    pub low_track: Vec<ChannelSnapshot>,
}

impl Episode {
    pub fn duration_s(&self, cfg: &ScenarioConfig) -> f64 {
        self.periods.len() as f64 * cfg.low_csi_period_s
    }
}

/// Deterministic per-episode stream derived from the master seed.
pub fn episode_rng(master_seed: u64, episode_id: u64) -> ChaCha8Rng {
    // splitmix64 over the pair, expanded into a 32-byte ChaCha key.
    let mut z = master_seed ^ episode_id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut x = z;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Assembles one band's snapshot at time `t`. Ricean scaling is applied over
/// the currently active cluster set, then per-cluster shadow fading; the
/// local cluster guarantees the active set is never empty.
fn snapshot_at(
    geom: &BandGeometry,
    ue_start: &UEState,
    t: f64,
    band: Band,
) -> Result<(ChannelSnapshot, PowerBudget)> {
    let ue_pos = position_at(ue_start, t);
    let los = los_at(geom, ue_pos);
    let active = active_clusters(geom, ue_pos);
    let carrier = geom.array.carrier_frequency_hz;
    let raw: Vec<Cluster> =
        active.iter().map(|&i| materialize_cluster(&geom.clusters[i], ue_pos, carrier, None)).collect();

    let los_power = 1.0 / los.pathloss_linear;
    let base_powers: Vec<f64> = raw.iter().map(|c| 1.0 / c.pathloss_linear).collect();
    let scaled = apply_ricean_scaling(los_power, &base_powers, geom.ricean_k_db)?;
    let shadowed: Vec<f64> = scaled
        .iter()
        .zip(&active)
        .map(|(p, &i)| p * geom.clusters[i].shadow_fading_linear)
        .collect();

    let mut clusters = Vec::with_capacity(raw.len());
    for (mut cluster, &power) in raw.into_iter().zip(&shadowed) {
        if power > 0.0 {
            cluster.pathloss_linear = 1.0 / power;
            clusters.push(cluster);
        }
    }
    let matrix = assemble_channel(&los, &clusters, &geom.array)?;
    let snapshot = ChannelSnapshot::from_matrix(matrix, t, band);
    let budget = PowerBudget {
        los_power,
        cluster_powers_pre_shadow: scaled,
        cluster_powers_post_shadow: shadowed,
    };
    Ok((snapshot, budget))
}

/// Adds circular Gaussian noise per matrix entry at `snr_db` relative to the
/// snapshot's mean entry power, then returns the angular-domain features of
/// the noisy matrix.
fn noisy_angular_features(
    snap: &ChannelSnapshot,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n_entries = snap.matrix.data.len() as f64;
    let mean_power = snap.matrix.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / n_entries;
    let sigma = (mean_power * 10f64.powf(-snr_db / 10.0) / 2.0).sqrt();
    let mut noisy = snap.matrix.clone();
    for v in noisy.data.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += num_complex::Complex64::new(re * sigma, im * sigma);
    }
    ChannelSnapshot::from_matrix(noisy, snap.time_s, snap.band).angular_features()
}

/// Generates one episode. Draw order (single stream): user start, low-band
/// LOS phase and geometry, mmWave derivation, per-period query instants,
/// per-update CSI noise.
pub fn generate_episode(
    cfg: &ScenarioConfig,
    plan: &EpisodePlan,
    id: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    if plan.num_periods == 0 || plan.gamma == 0 {
        return Err(Error::config("episode plan needs at least one period and gamma >= 1"));
    }
    let t_period = cfg.low_csi_period_s;
    let ue_start = draw_ue_start(cfg, rng);
    let low = draw_low_band_geometry(cfg, cfg.ricean_k_low_db, rng);
    let mm = derive_mmwave_geometry(&low, cfg, rng);

    let mut query_times: Vec<Vec<f64>> = Vec::with_capacity(plan.num_periods);
    for n in 0..plan.num_periods {
        let t_n = n as f64 * t_period;
        let mut times: Vec<f64> =
            (0..plan.queries_per_period).map(|_| t_n + rng.gen_range(0.0..t_period)).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        query_times.push(times);
    }

    let mut updates = Vec::with_capacity(plan.num_periods);
    let mut periods = Vec::with_capacity(plan.num_periods);
    for n in 0..plan.num_periods {
        let t_n = n as f64 * t_period;
        let (clean, budget) = snapshot_at(&low, &ue_start, t_n, Band::Low)?;
        let noisy_features = noisy_angular_features(&clean, cfg.snr_db, rng);
        updates.push(CsiUpdate { time_s: t_n, clean, noisy_features, budget });

        let (mm_at_update, _) = snapshot_at(&mm, &ue_start, t_n, Band::Mm)?;
        let mut mm_interp = Vec::with_capacity(plan.gamma);
        for g in 1..=plan.gamma {
            let t = t_n + (2 * g - 1) as f64 / (2 * plan.gamma) as f64 * t_period;
            mm_interp.push(snapshot_at(&mm, &ue_start, t, Band::Mm)?.0);
        }
        let queries = query_times[n]
            .iter()
            .map(|&t| {
                snapshot_at(&mm, &ue_start, t, Band::Mm).map(|(snap, _)| QueryPoint {
                    time_s: t,
                    eta: (t - t_n) / t_period,
                    mm: snap,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        periods.push(PeriodData { t_start: t_n, mm_at_update, mm_interp, queries });
    }

    let track_steps = (plan.num_periods as f64 * t_period / cfg.track_interval_s).round() as usize;
    let mut low_track = Vec::with_capacity(track_steps + 1);
    for k in 0..=track_steps {
        let t = k as f64 * cfg.track_interval_s;
        low_track.push(snapshot_at(&low, &ue_start, t, Band::Low)?.0);
    }

    Ok(Episode {
        id,
        ue_start,
        ricean_k_low_db: cfg.ricean_k_low_db,
        updates,
        periods,
        low_track,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> EpisodePlan {
        EpisodePlan { num_periods: 4, gamma: 4, queries_per_period: 2 }
    }

    fn generate(cfg: &ScenarioConfig, seed: u64) -> Episode {
        let mut rng = episode_rng(seed, 0);
        generate_episode(cfg, &plan(), 0, &mut rng).unwrap()
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = ScenarioConfig::default();
        let a = generate(&cfg, 7);
        let b = generate(&cfg, 7);
        assert_eq!(a.ue_start, b.ue_start);
        for (ua, ub) in a.updates.iter().zip(&b.updates) {
            assert_eq!(ua.clean.matrix, ub.clean.matrix);
            assert_eq!(ua.noisy_features, ub.noisy_features);
        }
        for (pa, pb) in a.periods.iter().zip(&b.periods) {
            assert_eq!(pa.mm_at_update.matrix, pb.mm_at_update.matrix);
            for (qa, qb) in pa.queries.iter().zip(&pb.queries) {
                assert_eq!(qa.time_s, qb.time_s);
                assert_eq!(qa.mm.matrix, qb.mm.matrix);
            }
        }
        let c = generate(&cfg, 8);
        assert_ne!(a.updates[0].noisy_features, c.updates[0].noisy_features);
    }

    #[test]
    fn update_spacing_is_exactly_the_csi_period() {
        let cfg = ScenarioConfig::default();
        let ep = generate(&cfg, 1);
        for (n, u) in ep.updates.iter().enumerate() {
            assert_eq!(u.time_s, n as f64 * 0.2);
        }
        assert_eq!(ep.periods[0].mm_interp.len(), 4);
        // Interpolation instants 25/75/125/175 ms into the period.
        let expect = [0.025, 0.075, 0.125, 0.175];
        for (s, e) in ep.periods[0].mm_interp.iter().zip(expect) {
            assert!((s.time_s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn ricean_ratio_matches_configured_k_before_shadow() {
        let mut cfg = ScenarioConfig::default();
        for k in [0.0, 8.0, 20.0] {
            cfg.ricean_k_low_db = k;
            let ep = generate(&cfg, 3);
            for u in &ep.updates {
                let cluster_sum: f64 = u.budget.cluster_powers_pre_shadow.iter().sum();
                let ratio_db = 10.0 * (u.budget.los_power / cluster_sum).log10();
                assert!(
                    (ratio_db - k).abs() < 0.1,
                    "measured {ratio_db} dB vs configured {k} dB"
                );
            }
        }
    }

    #[test]
    fn infinite_k_suppresses_all_clusters() {
        let cfg = ScenarioConfig::default().los_only();
        let ep = generate(&cfg, 4);
        for u in &ep.updates {
            assert!(u.budget.cluster_powers_pre_shadow.iter().all(|&p| p == 0.0));
        }
        // The channel is then a pure rank-one steering row.
        let h = &ep.updates[0].clean.matrix;
        for v in &h.data {
            assert!((v.norm() - h.data[0].norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn angular_norm_is_preserved() {
        let cfg = ScenarioConfig::default();
        let ep = generate(&cfg, 5);
        for u in &ep.updates {
            let a = u.clean.matrix.frobenius_norm();
            let b = u.clean.angular.frobenius_norm();
            assert!((a - b).abs() <= 1e-9 * a.max(1e-30), "{a} vs {b}");
        }
    }

    #[test]
    fn snapshots_are_finite() {
        let cfg = ScenarioConfig::default();
        let ep = generate(&cfg, 6);
        for u in &ep.updates {
            assert!(u.clean.matrix.is_finite());
            assert!(u.noisy_features.iter().all(|v| v.is_finite()));
        }
        for p in &ep.periods {
            assert!(p.mm_at_update.matrix.is_finite());
        }
    }

    #[test]
    fn track_grid_has_expected_cadence() {
        let cfg = ScenarioConfig::default();
        let ep = generate(&cfg, 9);
        // 4 periods x 200 ms / 20 ms = 40 steps + endpoint.
        assert_eq!(ep.low_track.len(), 41);
        assert!((ep.low_track[1].time_s - ep.low_track[0].time_s - 0.02).abs() < 1e-12);
    }

    #[test]
    fn band_consistency_under_zero_perturbation() {
        // With zero position noise and matched spreads the two bands peak at
        // the same transmit angle, up to one low-band beamwidth.
        let mut cfg = ScenarioConfig::default();
        cfg.angle_perturbation_std_m = 0.0;
        cfg.cluster_aod_spread_mm_rad = cfg.cluster_aod_spread_low_rad;
        cfg.cluster_aoa_spread_mm_rad = cfg.cluster_aoa_spread_low_rad;
        let ep = generate(&cfg, 10);
        for u in ep.updates.iter().zip(&ep.periods) {
            let (low_snap, period) = u;
            let peak_sin = |snap: &ChannelSnapshot| {
                let cols = snap.angular.cols;
                let mut best = (0usize, 0.0f64);
                for c in 0..cols {
                    let mut power = 0.0;
                    for r in 0..snap.angular.rows {
                        power += snap.angular.at(r, c).norm_sqr();
                    }
                    if power > best.1 {
                        best = (c, power);
                    }
                }
                // DFT bin c covers sin = 2c/K (wrapped to [-1, 1)).
                let mut s = 2.0 * best.0 as f64 / cols as f64;
                if s >= 1.0 {
                    s -= 2.0;
                }
                s
            };
            let low_sin = peak_sin(&low_snap.clean);
            let mm_sin = peak_sin(&period.mm_at_update);
            let beamwidth = 2.0 / 8.0;
            let mut diff = (low_sin - mm_sin).abs();
            diff = diff.min((diff - 2.0).abs());
            assert!(diff <= beamwidth + 1e-9, "low {low_sin} vs mm {mm_sin}");
        }
    }
}
