//! Dataset extraction and deterministic serialization.
//!
//! Episodes are carved into non-overlapping windows of `m` CSI updates; the
//! window ending at update `n` yields one sample: the noisy angular CSI
//! history, the sweep-optimal mmWave beams at the interpolation instants of
//! period `n` (training labels), the optimal beam at `t_n` itself (no-prior
//! baseline label), and random query instants inside `[t_n, t_n + T)` for
//! evaluation. The train/validation split is disjoint by episode. Everything
//! regenerates bit-identically from `(config, seed)`, so evaluation code can
//! rebuild any episode on demand instead of storing channel matrices.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::beams::{dft_codebook, sweep_optimal_beam, trivial_rx_codebook, Codebook};
use crate::channel::episode::{episode_rng, generate_episode, Episode, EpisodePlan};
use crate::config::{Config, Side};
use crate::error::Error;
use crate::exec::{map_indexed, ExecMode};
use crate::Result;

const MAGIC: &[u8; 8] = b"BEAMDSET";
const VERSION: u32 = 1;

/// One evaluation query inside a sample's label period.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleQuery {
    pub time_s: f64,
    pub eta: f64,
    pub optimal_beam: u16,
}

/// One training/validation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub episode_id: u64,
    /// Index `n` of the CSI update that closes the history window.
    pub csi_update_index: u32,
    /// `[m, 2, width]` noisy angular features, oldest update first.
    pub history: Vec<f64>,
    /// Optimal mmWave beam at each of the `gamma` interpolation instants.
    pub labels: Vec<u16>,
    /// Optimal mmWave beam at the update instant itself.
    pub label_at_update: u16,
    pub queries: Vec<SampleQuery>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Sorted by (episode_id, csi_update_index); train episodes first.
    pub samples: Vec<Sample>,
    pub num_episodes: u64,
    /// Episodes `[0, train_episodes)` are training, the rest validation.
    pub train_episodes: u64,
    pub seed: u64,
    pub config_digest: [u8; 32],
    pub history_len: u32,
    pub gamma: u32,
    pub num_beams: u32,
    pub input_width: u32,
}

impl Dataset {
    pub fn split_point(&self) -> usize {
        self.samples.partition_point(|s| s.episode_id < self.train_episodes)
    }

    pub fn train_samples(&self) -> &[Sample] {
        &self.samples[..self.split_point()]
    }

    pub fn validation_samples(&self) -> &[Sample] {
        &self.samples[self.split_point()..]
    }
}

/// Mm-band sweep codebooks used for labeling and evaluation.
pub fn mm_codebooks(cfg: &Config) -> Result<(Codebook, Codebook)> {
    let tx = dft_codebook(&cfg.scenario.mm_band, cfg.predictor.num_beams, Side::Tx)?;
    let rx = if cfg.scenario.mm_band.num_rx_antennas == 1 {
        trivial_rx_codebook(&cfg.scenario.mm_band)
    } else {
        dft_codebook(&cfg.scenario.mm_band, cfg.scenario.mm_band.num_rx_antennas, Side::Rx)?
    };
    Ok((tx, rx))
}

fn episode_plan(cfg: &Config) -> EpisodePlan {
    EpisodePlan {
        num_periods: cfg.datagen.windows_per_episode * cfg.predictor.history_len,
        gamma: cfg.predictor.interpolation_factor,
        queries_per_period: cfg.datagen.queries_per_sample,
    }
}

/// Regenerates episode `id` exactly as dataset generation produced it,
/// including the per-episode Ricean K draw when a K set is configured.
pub fn episode_for(cfg: &Config, seed: u64, id: u64) -> Result<Episode> {
    let mut rng = episode_rng(seed, id);
    let mut scenario = cfg.scenario.clone();
    if let Some(set) = &cfg.datagen.ricean_k_low_set_db {
        if !set.is_empty() {
            scenario.ricean_k_low_db = set[rng.gen_range(0..set.len())];
        }
    }
    generate_episode(&scenario, &episode_plan(cfg), id, &mut rng)
}

fn samples_from_episode(
    cfg: &Config,
    episode: &Episode,
    tx: &Codebook,
    rx: &Codebook,
) -> Result<Vec<Sample>> {
    let m = cfg.predictor.history_len;
    let windows = cfg.datagen.windows_per_episode;
    let mut samples = Vec::with_capacity(windows);
    for w in 0..windows {
        let n = (w + 1) * m - 1;
        let period = &episode.periods[n];
        let mut history = Vec::with_capacity(m * episode.updates[0].noisy_features.len());
        for u in &episode.updates[w * m..(w + 1) * m] {
            history.extend_from_slice(&u.noisy_features);
        }
        let labels = period
            .mm_interp
            .iter()
            .map(|snap| sweep_optimal_beam(snap, tx, rx).map(|(t, _, _)| t as u16))
            .collect::<Result<Vec<u16>>>()?;
        let (label_at_update, _, _) = sweep_optimal_beam(&period.mm_at_update, tx, rx)?;
        let queries = period
            .queries
            .iter()
            .map(|q| {
                sweep_optimal_beam(&q.mm, tx, rx).map(|(t, _, _)| SampleQuery {
                    time_s: q.time_s,
                    eta: q.eta,
                    optimal_beam: t as u16,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            episode_id: episode.id,
            csi_update_index: n as u32,
            history,
            labels,
            label_at_update: label_at_update as u16,
            queries,
        });
    }
    Ok(samples)
}

/// Generates the full dataset: `num_samples / windows_per_episode` episodes,
/// split by episode according to `train_fraction`.
pub fn generate_dataset(cfg: &Config, seed: u64, mode: ExecMode) -> Result<Dataset> {
    cfg.validate()?;
    let wpe = cfg.datagen.windows_per_episode;
    if wpe == 0 || cfg.datagen.num_samples == 0 {
        return Err(Error::config("num_samples and windows_per_episode must be >= 1"));
    }
    if cfg.datagen.num_samples % wpe != 0 {
        return Err(Error::config(format!(
            "num_samples ({}) must be divisible by windows_per_episode ({})",
            cfg.datagen.num_samples, wpe
        )));
    }
    let num_episodes = (cfg.datagen.num_samples / wpe) as u64;
    let train_episodes = (cfg.datagen.train_fraction * num_episodes as f64).round() as u64;
    if train_episodes == 0 || train_episodes >= num_episodes {
        return Err(Error::config("train fraction leaves an empty split"));
    }
    let (tx, rx) = mm_codebooks(cfg)?;

    let per_episode: Vec<Result<Vec<Sample>>> = map_indexed(mode, num_episodes as usize, |id| {
        let episode = episode_for(cfg, seed, id as u64)?;
        samples_from_episode(cfg, &episode, &tx, &rx)
    });
    let mut samples = Vec::with_capacity(cfg.datagen.num_samples);
    for r in per_episode {
        samples.extend(r?);
    }

    let width = cfg.scenario.low_band.num_tx_antennas * cfg.scenario.low_band.num_rx_antennas;
    Ok(Dataset {
        samples,
        num_episodes,
        train_episodes,
        seed,
        config_digest: cfg.digest(),
        history_len: cfg.predictor.history_len as u32,
        gamma: cfg.predictor.interpolation_factor as u32,
        num_beams: cfg.predictor.num_beams as u32,
        input_width: width as u32,
    })
}

/// Re-sweeps every stored label against a regenerated episode; returns the
/// number of checked labels. Any mismatch is an error.
pub fn verify_labels(ds: &Dataset, cfg: &Config, mode: ExecMode) -> Result<usize> {
    if cfg.digest() != ds.config_digest {
        return Err(Error::DigestMismatch);
    }
    let (tx, rx) = mm_codebooks(cfg)?;
    let m = cfg.predictor.history_len;
    let checks: Vec<Result<usize>> = map_indexed(mode, ds.num_episodes as usize, |id| {
        let episode = episode_for(cfg, ds.seed, id as u64)?;
        let expected = samples_from_episode(cfg, &episode, &tx, &rx)?;
        let mut count = 0usize;
        for s in ds.samples.iter().filter(|s| s.episode_id == id as u64) {
            let w = (s.csi_update_index as usize + 1) / m - 1;
            let e = &expected[w];
            if e.labels != s.labels || e.label_at_update != s.label_at_update {
                return Err(Error::invalid(format!("label mismatch in episode {id} window {w}")));
            }
            for (a, b) in e.queries.iter().zip(&s.queries) {
                if a.optimal_beam != b.optimal_beam {
                    return Err(Error::invalid(format!(
                        "query label mismatch in episode {id} window {w}"
                    )));
                }
            }
            count += s.labels.len() + 1 + s.queries.len();
        }
        Ok(count)
    });
    let mut total = 0;
    for c in checks {
        total += c?;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

fn encode(ds: &Dataset) -> Vec<u8> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&ds.config_digest);
    buf.extend_from_slice(&ds.seed.to_le_bytes());
    buf.extend_from_slice(&ds.num_episodes.to_le_bytes());
    buf.extend_from_slice(&ds.train_episodes.to_le_bytes());
    for v in [ds.history_len, ds.gamma, ds.num_beams, ds.input_width] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(ds.samples.len() as u64).to_le_bytes());
    for s in &ds.samples {
        buf.extend_from_slice(&s.episode_id.to_le_bytes());
        buf.extend_from_slice(&s.csi_update_index.to_le_bytes());
        for v in &s.history {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for l in &s.labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        buf.extend_from_slice(&s.label_at_update.to_le_bytes());
        buf.extend_from_slice(&(s.queries.len() as u16).to_le_bytes());
        for q in &s.queries {
            buf.extend_from_slice(&q.time_s.to_le_bytes());
            buf.extend_from_slice(&q.eta.to_le_bytes());
            buf.extend_from_slice(&q.optimal_beam.to_le_bytes());
        }
    }
    buf
}

/// Writes the dataset plus a human-readable sidecar (`<path>.meta.txt`) with
/// the seed, counts, config echo, and content digest.
pub fn save_dataset(ds: &Dataset, cfg: &Config, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(ds);
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;

    let content_digest: [u8; 32] = Sha256::digest(&bytes).into();
    let meta = format!(
        "dataset: {}\nsamples: {}\nepisodes: {} (train {}, validation {})\nseed: {}\n\
         history_len: {}\ngamma: {}\nnum_beams: {}\ninput_width: {}\n\
         config_digest: {}\ncontent_digest: {}\n\n[config]\n{}",
        path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        ds.samples.len(),
        ds.num_episodes,
        ds.train_episodes,
        ds.num_episodes - ds.train_episodes,
        ds.seed,
        ds.history_len,
        ds.gamma,
        ds.num_beams,
        ds.input_width,
        crate::config::digest_hex(&ds.config_digest),
        crate::config::digest_hex(&content_digest),
        toml::to_string_pretty(cfg).unwrap_or_default(),
    );
    std::fs::write(path.with_extension("meta.txt"), meta)?;
    Ok(())
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptFile("dataset truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::CorruptFile("bad dataset magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch { found: version, expected: VERSION });
    }
    let mut config_digest = [0u8; 32];
    config_digest.copy_from_slice(r.take(32)?);
    let seed = r.u64()?;
    let num_episodes = r.u64()?;
    let train_episodes = r.u64()?;
    let history_len = r.u32()?;
    let gamma = r.u32()?;
    let num_beams = r.u32()?;
    let input_width = r.u32()?;
    let n_samples = r.u64()? as usize;
    let history_elems = history_len as usize * 2 * input_width as usize;
    let mut samples = Vec::with_capacity(n_samples.min(1 << 24));
    for _ in 0..n_samples {
        let episode_id = r.u64()?;
        let csi_update_index = r.u32()?;
        let mut history = Vec::with_capacity(history_elems);
        for _ in 0..history_elems {
            history.push(r.f64()?);
        }
        let mut labels = Vec::with_capacity(gamma as usize);
        for _ in 0..gamma {
            labels.push(r.u16()?);
        }
        let label_at_update = r.u16()?;
        let n_queries = r.u16()? as usize;
        let mut queries = Vec::with_capacity(n_queries);
        for _ in 0..n_queries {
            queries.push(SampleQuery { time_s: r.f64()?, eta: r.f64()?, optimal_beam: r.u16()? });
        }
        samples.push(Sample {
            episode_id,
            csi_update_index,
            history,
            labels,
            label_at_update,
            queries,
        });
    }
    if r.pos != r.buf.len() {
        return Err(Error::CorruptFile("trailing bytes after dataset payload".into()));
    }
    Ok(Dataset {
        samples,
        num_episodes,
        train_episodes,
        seed,
        config_digest,
        history_len,
        gamma,
        num_beams,
        input_width,
    })
}

/// Loads a dataset and rejects it unless it was generated under `cfg`.
pub fn load_dataset_for(path: impl AsRef<Path>, cfg: &Config) -> Result<Dataset> {
    let ds = load_dataset(path)?;
    if ds.config_digest != cfg.digest() {
        return Err(Error::DigestMismatch);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> Config {
        let mut cfg = Config::default();
        cfg.datagen.num_samples = 16;
        cfg.datagen.queries_per_sample = 2;
        cfg.predictor.history_len = 3;
        cfg
    }

    #[test]
    fn split_counts_match_the_80_20_contract() {
        let mut cfg = Config::default();
        cfg.datagen.num_samples = 10_240;
        let wpe = cfg.datagen.windows_per_episode;
        let episodes = (cfg.datagen.num_samples / wpe) as u64;
        let train_eps = (cfg.datagen.train_fraction * episodes as f64).round() as u64;
        assert_eq!(train_eps * wpe as u64, 8_192);
        assert_eq!((episodes - train_eps) * wpe as u64, 2_048);
    }

    #[test]
    fn generate_is_deterministic_and_split_is_disjoint() {
        let cfg = small_config();
        let a = generate_dataset(&cfg, 7, ExecMode::default()).unwrap();
        let b = generate_dataset(&cfg, 7, ExecMode::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 16);
        let train: std::collections::HashSet<u64> =
            a.train_samples().iter().map(|s| s.episode_id).collect();
        let val: std::collections::HashSet<u64> =
            a.validation_samples().iter().map(|s| s.episode_id).collect();
        assert!(train.is_disjoint(&val));
        assert!(!train.is_empty() && !val.is_empty());
        for s in &a.samples {
            assert!(s.labels.iter().all(|&l| (l as usize) < 32));
            assert_eq!(s.history.len(), 3 * 2 * 8);
        }
    }

    #[test]
    fn round_trip_file_is_byte_identical() {
        let cfg = small_config();
        let ds = generate_dataset(&cfg, 3, ExecMode::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("beamsim-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("a.ds");
        let p2 = dir.join("b.ds");
        save_dataset(&ds, &cfg, &p1).unwrap();
        let loaded = load_dataset_for(&p1, &cfg).unwrap();
        assert_eq!(ds, loaded);
        save_dataset(&loaded, &cfg, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_and_mismatched_files_are_rejected() {
        let cfg = small_config();
        let ds = generate_dataset(&cfg, 3, ExecMode::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("beamsim-ds2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.ds");
        save_dataset(&ds, &cfg, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::CorruptFile(_))));

        std::fs::write(&path, &bytes).unwrap();
        let mut other = small_config();
        other.scenario.ricean_k_low_db = 0.0;
        assert!(matches!(load_dataset_for(&path, &other), Err(Error::DigestMismatch)));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn labels_survive_an_independent_resweep() {
        let cfg = small_config();
        let ds = generate_dataset(&cfg, 11, ExecMode::default()).unwrap();
        let checked = verify_labels(&ds, &cfg, ExecMode::default()).unwrap();
        // gamma + 1 + queries per sample
        assert_eq!(checked, ds.samples.len() * (4 + 1 + 2));
    }

    #[test]
    fn per_episode_k_draw_is_reproducible() {
        let mut cfg = small_config();
        cfg.datagen.ricean_k_low_set_db = Some(vec![0.0, 8.0, 20.0]);
        let set: std::collections::HashSet<u64> = (0..8u64)
            .map(|id| episode_for(&cfg, 5, id).unwrap().ricean_k_low_db.to_bits())
            .collect();
        assert!(set.len() > 1, "K should vary across episodes");
        let a = episode_for(&cfg, 5, 3).unwrap();
        let b = episode_for(&cfg, 5, 3).unwrap();
        assert_eq!(a.ricean_k_low_db, b.ricean_k_low_db);
        assert_eq!(a.updates[0].noisy_features, b.updates[0].noisy_features);
    }

    #[test]
    fn indivisible_sample_count_is_a_config_error() {
        let mut cfg = small_config();
        cfg.datagen.num_samples = 17;
        assert!(generate_dataset(&cfg, 1, ExecMode::default()).is_err());
    }

    #[test]
    fn no_label_dominates_the_dataset() {
        let mut cfg = Config::default();
        cfg.datagen.num_samples = 128;
        cfg.predictor.history_len = 2;
        cfg.datagen.queries_per_sample = 1;
        let ds = generate_dataset(&cfg, 21, ExecMode::default()).unwrap();
        let mut counts = vec![0usize; 32];
        let mut total = 0usize;
        for s in &ds.samples {
            for &l in &s.labels {
                counts[l as usize] += 1;
                total += 1;
            }
        }
        let max = counts.iter().max().unwrap();
        assert!(
            (*max as f64) < 0.30 * total as f64,
            "beam histogram too concentrated: max {max} of {total}"
        );
    }
}
