//! Scatterer geometry, visible regions, and user mobility.
//!
//! The base station sits at the origin. Per-episode random draws (scatterer
//! positions, per-path gains and angular offsets, shadow fading) live in
//! [`BandGeometry`]; cluster angles and pathlosses are recomputed from the
//! geometry at every snapshot instant, which is what makes the channel
//! time-varying and spatially consistent.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{free_space_pathloss, Cluster, LosPath, PathComponent};
use crate::config::{ArrayConfig, ScenarioConfig, ScenarioKind};

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a % two_pi;
    if x <= -std::f64::consts::PI {
        x += two_pi;
    } else if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// User state along a straight constant-acceleration track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UEState {
    pub position_m: [f64; 2],
    pub speed_mps: f64,
    pub heading_rad: f64,
    pub acceleration_mps2: f64,
    pub time_s: f64,
}

/// Advances the user along its heading. The step integrates the constant
/// acceleration exactly and clamps the speed at zero: a decelerating user
/// stops and stays put.
pub fn step_trajectory(state: &UEState, dt_s: f64) -> UEState {
    assert!(dt_s > 0.0, "trajectory step must be positive");
    let (v, a) = (state.speed_mps, state.acceleration_mps2);
    let advance = if a >= 0.0 {
        v * dt_s + 0.5 * a * dt_s * dt_s
    } else {
        let t_stop = v / (-a);
        if dt_s <= t_stop {
            v * dt_s + 0.5 * a * dt_s * dt_s
        } else {
            v * t_stop + 0.5 * a * t_stop * t_stop
        }
    };
    UEState {
        position_m: [
            state.position_m[0] + advance * state.heading_rad.cos(),
            state.position_m[1] + advance * state.heading_rad.sin(),
        ],
        speed_mps: (v + a * dt_s).max(0.0),
        heading_rad: state.heading_rad,
        acceleration_mps2: a,
        time_s: state.time_s + dt_s,
    }
}

/// Closed-form position at an absolute episode time.
pub fn position_at(start: &UEState, t_s: f64) -> [f64; 2] {
    debug_assert!(t_s >= start.time_s);
    let dt = t_s - start.time_s;
    if dt == 0.0 {
        return start.position_m;
    }
    step_trajectory(start, dt).position_m
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Per-episode random draws for one cluster.
#[derive(Debug, Clone)]
pub struct ClusterGeometry {
    /// Far clusters: absolute scatterer position. Local cluster: unused.
    pub scatterer_m: [f64; 2],
    /// Center of the visible region (far clusters only).
    pub visible_center_m: [f64; 2],
    pub visible_radius_m: f64,
    pub is_local: bool,
    pub path_gains: Vec<Complex64>,
    pub path_aoa_offsets: Vec<f64>,
    pub path_aod_offsets: Vec<f64>,
    /// Local cluster: per-path scatterer offsets relative to the user.
    pub local_offsets_m: Vec<[f64; 2]>,
    pub shadow_fading_linear: f64,
}

/// Per-episode random draws for one band.
#[derive(Debug, Clone)]
pub struct BandGeometry {
    pub array: ArrayConfig,
    pub ricean_k_db: f64,
    pub los_gain: Complex64,
    /// Far clusters first, local cluster last.
    pub clusters: Vec<ClusterGeometry>,
}

fn draw_complex_gains(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) / 2.0_f64.sqrt()
        })
        .collect()
}

fn draw_offsets(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

fn draw_disc(rng: &mut impl Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.gen_range(0.0..1.0f64).sqrt();
    let phi = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    [r * phi.cos(), r * phi.sin()]
}

fn draw_annulus(rng: &mut impl Rng, r_min: f64, r_max: f64) -> [f64; 2] {
    let u: f64 = rng.gen_range(0.0..1.0);
    let r = (u * (r_max * r_max - r_min * r_min) + r_min * r_min).sqrt();
    let phi = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    [r * phi.cos(), r * phi.sin()]
}

fn draw_shadow(rng: &mut impl Rng, std_db: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    10f64.powf(z * std_db / 10.0)
}

/// Draws the user's starting state. Position is uniform over the cell area
/// (outside `min_range_m`); heading, speed, and per-episode acceleration
/// follow the scenario kind.
pub fn draw_ue_start(cfg: &ScenarioConfig, rng: &mut impl Rng) -> UEState {
    let position_m = draw_annulus(rng, cfg.min_range_m, cfg.cell_radius_m);
    let heading_rad = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    let (speed_range, accel) = match cfg.scenario_kind {
        ScenarioKind::Stationary => (cfg.speed_range_stationary_mps, 0.0),
        ScenarioKind::NonStationary => {
            let a = rng.gen_range(cfg.accel_range_mps2[0]..=cfg.accel_range_mps2[1]);
            (cfg.speed_range_non_stationary_mps, a)
        }
    };
    let speed_mps = rng.gen_range(speed_range[0]..=speed_range[1]);
    UEState { position_m, speed_mps, heading_rad, acceleration_mps2: accel, time_s: 0.0 }
}

/// Draws the low-band geometry: far scatterers uniform over the cell with
/// visible regions centered on them, one local cluster riding with the user.
pub fn draw_low_band_geometry(
    cfg: &ScenarioConfig,
    ricean_k_db: f64,
    rng: &mut impl Rng,
) -> BandGeometry {
    let l = cfg.paths_per_cluster;
    let los_gain = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * std::f64::consts::PI));
    let mut clusters = Vec::with_capacity(cfg.num_far_clusters + 1);
    for _ in 0..cfg.num_far_clusters {
        let scatterer = draw_annulus(rng, cfg.min_range_m, cfg.cell_radius_m);
        clusters.push(ClusterGeometry {
            scatterer_m: scatterer,
            visible_center_m: scatterer,
            visible_radius_m: cfg.visible_region_radius_low_m,
            is_local: false,
            path_gains: draw_complex_gains(rng, l),
            path_aoa_offsets: draw_offsets(rng, l, cfg.cluster_aoa_spread_low_rad),
            path_aod_offsets: draw_offsets(rng, l, cfg.cluster_aod_spread_low_rad),
            local_offsets_m: Vec::new(),
            shadow_fading_linear: 1.0,
        });
    }
    clusters.push(ClusterGeometry {
        scatterer_m: [0.0, 0.0],
        visible_center_m: [0.0, 0.0],
        visible_radius_m: f64::INFINITY,
        is_local: true,
        path_gains: draw_complex_gains(rng, l),
        path_aoa_offsets: Vec::new(),
        path_aod_offsets: Vec::new(),
        local_offsets_m: (0..l).map(|_| draw_disc(rng, cfg.local_cluster_radius_m)).collect(),
        shadow_fading_linear: 1.0,
    });
    for c in clusters.iter_mut() {
        c.shadow_fading_linear = draw_shadow(rng, cfg.shadow_fading_std_low_db);
    }
    BandGeometry { array: cfg.low_band.clone(), ricean_k_db, los_gain, clusters }
}

/// Derives the mmWave geometry from the low-band one: identical line-of-sight
/// angles, far-cluster scatterers perturbed by per-axis Gaussian position
/// noise (angles are then recomputed from the perturbed position), smaller
/// concentric visible regions, narrower per-path spreads, freshly drawn local
/// cluster, gains, and shadow fading.
pub fn derive_mmwave_geometry(
    low: &BandGeometry,
    cfg: &ScenarioConfig,
    rng: &mut impl Rng,
) -> BandGeometry {
    let l = cfg.paths_per_cluster;
    let los_gain = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * std::f64::consts::PI));
    let mut clusters = Vec::with_capacity(low.clusters.len());
    for lc in &low.clusters {
        if lc.is_local {
            clusters.push(ClusterGeometry {
                scatterer_m: [0.0, 0.0],
                visible_center_m: [0.0, 0.0],
                visible_radius_m: f64::INFINITY,
                is_local: true,
                path_gains: draw_complex_gains(rng, l),
                path_aoa_offsets: Vec::new(),
                path_aod_offsets: Vec::new(),
                local_offsets_m: (0..l)
                    .map(|_| draw_disc(rng, cfg.local_cluster_radius_m))
                    .collect(),
                shadow_fading_linear: 1.0,
            });
        } else {
            let dx: f64 = StandardNormal.sample(rng);
            let dy: f64 = StandardNormal.sample(rng);
            let scatterer = [
                lc.scatterer_m[0] + dx * cfg.angle_perturbation_std_m,
                lc.scatterer_m[1] + dy * cfg.angle_perturbation_std_m,
            ];
            clusters.push(ClusterGeometry {
                scatterer_m: scatterer,
                // Concentric with the low-band region, smaller radius.
                visible_center_m: lc.visible_center_m,
                visible_radius_m: cfg.visible_region_radius_mm_m,
                is_local: false,
                path_gains: draw_complex_gains(rng, l),
                path_aoa_offsets: draw_offsets(rng, l, cfg.cluster_aoa_spread_mm_rad),
                path_aod_offsets: draw_offsets(rng, l, cfg.cluster_aod_spread_mm_rad),
                local_offsets_m: Vec::new(),
                shadow_fading_linear: 1.0,
            });
        }
    }
    for c in clusters.iter_mut() {
        c.shadow_fading_linear = draw_shadow(rng, cfg.shadow_fading_std_mm_db);
    }
    BandGeometry { array: cfg.mm_band.clone(), ricean_k_db: cfg.ricean_k_mm_db, los_gain, clusters }
}

/// Line-of-sight term at the given user position. Both bands share these
/// angles by construction.
pub fn los_at(geom: &BandGeometry, ue_pos: [f64; 2]) -> LosPath {
    let aod = ue_pos[1].atan2(ue_pos[0]);
    LosPath {
        complex_gain: geom.los_gain,
        aoa_rad: wrap_angle(aod + std::f64::consts::PI),
        aod_rad: aod,
        pathloss_linear: free_space_pathloss(dist([0.0, 0.0], ue_pos), geom.array.carrier_frequency_hz),
    }
}

/// Indices of clusters whose visible region contains the user. The local
/// cluster rides with the user and is always active.
pub fn active_clusters(geom: &BandGeometry, ue_pos: [f64; 2]) -> Vec<usize> {
    geom.clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_local || dist(c.visible_center_m, ue_pos) <= c.visible_radius_m)
        .map(|(i, _)| i)
        .collect()
}

/// Materializes one cluster at the given user position: recomputes center
/// angles and pathloss from geometry and attaches the per-path draws. The
/// returned pathloss is the raw propagation loss; Ricean scaling and shadow
/// fading are applied by the caller via `pathloss_override`.
pub fn materialize_cluster(
    geom: &ClusterGeometry,
    ue_pos: [f64; 2],
    carrier_hz: f64,
    pathloss_override: Option<f64>,
) -> Cluster {
    if geom.is_local {
        // Per-path scatterers ride with the user; each path gets exact angles
        // from its own scatterer position.
        let center_aod = ue_pos[1].atan2(ue_pos[0]);
        let mut paths = Vec::with_capacity(geom.path_gains.len());
        let mut mean_len = 0.0;
        for (gain, off) in geom.path_gains.iter().zip(&geom.local_offsets_m) {
            let sc = [ue_pos[0] + off[0], ue_pos[1] + off[1]];
            let aod = sc[1].atan2(sc[0]);
            let aoa = off[1].atan2(off[0]);
            mean_len += dist([0.0, 0.0], sc) + dist(sc, ue_pos);
            paths.push(PathComponent {
                complex_gain: *gain,
                aoa_offset_rad: aoa, // center AoA taken as 0; offsets carry it all
                aod_offset_rad: wrap_angle(aod - center_aod),
            });
        }
        mean_len /= geom.path_gains.len() as f64;
        Cluster {
            pathloss_linear: pathloss_override
                .unwrap_or_else(|| free_space_pathloss(mean_len, carrier_hz)),
            center_aoa_rad: 0.0,
            center_aod_rad: center_aod,
            paths,
            scatterer_position_m: ue_pos,
            visible_region_center_m: ue_pos,
            visible_region_radius_m: geom.visible_radius_m,
            is_local: true,
        }
    } else {
        let sc = geom.scatterer_m;
        let center_aod = sc[1].atan2(sc[0]);
        let center_aoa = (sc[1] - ue_pos[1]).atan2(sc[0] - ue_pos[0]);
        let path_len = dist([0.0, 0.0], sc) + dist(sc, ue_pos);
        let paths = geom
            .path_gains
            .iter()
            .zip(geom.path_aoa_offsets.iter().zip(&geom.path_aod_offsets))
            .map(|(gain, (aoa, aod))| PathComponent {
                complex_gain: *gain,
                aoa_offset_rad: *aoa,
                aod_offset_rad: *aod,
            })
            .collect();
        Cluster {
            pathloss_linear: pathloss_override
                .unwrap_or_else(|| free_space_pathloss(path_len, carrier_hz)),
            center_aoa_rad: center_aoa,
            center_aod_rad: center_aod,
            paths,
            scatterer_position_m: sc,
            visible_region_center_m: geom.visible_center_m,
            visible_region_radius_m: geom.visible_radius_m,
            is_local: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn stationary_step_advances_linearly() {
        let s = UEState {
            position_m: [1.0, 2.0],
            speed_mps: 10.0,
            heading_rad: 0.0,
            acceleration_mps2: 0.0,
            time_s: 0.0,
        };
        let s2 = step_trajectory(&s, 0.2);
        assert!((s2.position_m[0] - 3.0).abs() < 1e-12);
        assert!((s2.position_m[1] - 2.0).abs() < 1e-12);
        assert_eq!(s2.speed_mps, 10.0);
    }

    #[test]
    fn acceleration_integrates_and_clamps() {
        let s = UEState {
            position_m: [0.0, 0.0],
            speed_mps: 25.0,
            heading_rad: 0.3,
            acceleration_mps2: 5.0,
            time_s: 0.0,
        };
        assert!((step_trajectory(&s, 1.0).speed_mps - 30.0).abs() < 1e-12);

        let slow = UEState { speed_mps: 1.0, acceleration_mps2: -5.0, ..s };
        let stopped = step_trajectory(&slow, 1.0);
        assert_eq!(stopped.speed_mps, 0.0);
        // Distance covered equals v^2 / (2|a|) = 0.1 m.
        let d = (stopped.position_m[0].powi(2) + stopped.position_m[1].powi(2)).sqrt();
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stepping_matches_closed_form() {
        let s = UEState {
            position_m: [5.0, -3.0],
            speed_mps: 27.0,
            heading_rad: 1.1,
            acceleration_mps2: -4.0,
            time_s: 0.0,
        };
        let mut walked = s;
        for _ in 0..50 {
            walked = step_trajectory(&walked, 0.02);
        }
        let direct = position_at(&s, 1.0);
        assert!((walked.position_m[0] - direct[0]).abs() < 1e-9);
        assert!((walked.position_m[1] - direct[1]).abs() < 1e-9);
    }

    #[test]
    fn zero_perturbation_keeps_mm_angles_equal() {
        let mut c = cfg();
        c.angle_perturbation_std_m = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let low = draw_low_band_geometry(&c, c.ricean_k_low_db, &mut rng);
        let mm = derive_mmwave_geometry(&low, &c, &mut rng);
        let ue = [20.0, -15.0];
        for (lc, mc) in low.clusters.iter().zip(&mm.clusters).filter(|(l, _)| !l.is_local) {
            let a = materialize_cluster(lc, ue, c.low_band.carrier_frequency_hz, None);
            let b = materialize_cluster(mc, ue, c.mm_band.carrier_frequency_hz, None);
            assert!((a.center_aod_rad - b.center_aod_rad).abs() < 1e-12);
            assert!((a.center_aoa_rad - b.center_aoa_rad).abs() < 1e-12);
        }
    }

    #[test]
    fn los_angles_identical_across_bands() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let low = draw_low_band_geometry(&c, c.ricean_k_low_db, &mut rng);
        let mm = derive_mmwave_geometry(&low, &c, &mut rng);
        for ue in [[10.0, 5.0], [-40.0, 60.0], [3.0, -80.0]] {
            let a = los_at(&low, ue);
            let b = los_at(&mm, ue);
            assert_eq!(a.aod_rad, b.aod_rad);
            assert_eq!(a.aoa_rad, b.aoa_rad);
        }
    }

    #[test]
    fn perturbation_induced_aod_std_matches_small_angle_propagation() {
        // A scatterer 50 m from the BS with 0.8 m per-axis position noise
        // sees ~0.8/50 = 0.016 rad of AoD spread.
        let mut c = cfg();
        c.num_far_clusters = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut low = draw_low_band_geometry(&c, c.ricean_k_low_db, &mut rng);
        low.clusters[0].scatterer_m = [50.0, 0.0];
        low.clusters[0].visible_center_m = [50.0, 0.0];
        let n = 10_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let mm = derive_mmwave_geometry(&low, &c, &mut rng);
            let aod = mm.clusters[0].scatterer_m[1].atan2(mm.clusters[0].scatterer_m[0]);
            sum_sq += aod * aod;
        }
        let std = (sum_sq / n as f64).sqrt();
        let expected = 0.8 / 50.0;
        assert!(
            (std - expected).abs() < 0.1 * expected,
            "measured {std}, expected about {expected}"
        );
    }

    #[test]
    fn visible_region_filter_applies() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut low = draw_low_band_geometry(&c, c.ricean_k_low_db, &mut rng);
        for (i, cl) in low.clusters.iter_mut().enumerate() {
            if !cl.is_local {
                cl.visible_center_m = [1000.0 + i as f64, 0.0];
            }
        }
        let active = active_clusters(&low, [0.0, 10.0]);
        assert_eq!(active.len(), 1, "only the local cluster should remain");
        assert!(low.clusters[active[0]].is_local);
    }

    #[test]
    fn local_cluster_rides_with_user() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let low = draw_low_band_geometry(&c, c.ricean_k_low_db, &mut rng);
        let local = low.clusters.last().unwrap();
        assert!(local.is_local);
        for ue in [[30.0, 0.0], [0.0, -70.0]] {
            let cl = materialize_cluster(local, ue, c.low_band.carrier_frequency_hz, None);
            // All per-path scatterers stay within the configured disc.
            for (off, path) in local.local_offsets_m.iter().zip(&cl.paths) {
                let r = (off[0].powi(2) + off[1].powi(2)).sqrt();
                assert!(r <= c.local_cluster_radius_m + 1e-12);
                assert!(path.aod_offset_rad.abs() < 0.5, "AoD offsets stay near the LOS");
            }
        }
    }
}
