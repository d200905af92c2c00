//! Scoring of trained models on validation episodes.
//!
//! Validation episodes are regenerated from the dataset seed (generation is
//! pure), so every query instant can be scored against the true channel:
//! the predicted beam's gain over the sweep-optimal beam's gain.

use std::time::Instant;

use beamsim_core::baselines::noprior::latest_snapshot;
use beamsim_core::baselines::{ekf_track_episode, NoPriorModel};
use beamsim_core::beams::gain_ratio;
use beamsim_core::config::Config;
use beamsim_core::datagen::{episode_for, mm_codebooks, Dataset, Sample};
use beamsim_core::exec::{map_indexed, ExecMode};
use beamsim_core::predictor::{interpolation_index, BeamPredictor, TimingContext, TrainReport};
use beamsim_core::{Result, ScenarioKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Proposed,
    Ekf,
    NoPrior,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Ekf => "ekf",
            Method::NoPrior => "no_prior",
        }
    }
}

/// One scored beam-training query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub method: Method,
    pub episode_id: u64,
    pub csi_update_index: u32,
    pub time_s: f64,
    pub eta: f64,
    /// Interpolation slot implied by `eta` (1-based), recorded for every
    /// method so rows stay comparable.
    pub gamma: usize,
    pub predicted_beam: usize,
    pub optimal_beam: usize,
    pub gain_ratio: f64,
}

/// Scores the given methods on every validation query of the dataset.
/// Episodes evaluate independently and in parallel; record order is fixed.
pub fn evaluate(
    cfg: &Config,
    ds: &Dataset,
    predictor: Option<&BeamPredictor>,
    noprior: Option<&NoPriorModel>,
    run_ekf: bool,
    mode: ExecMode,
) -> Result<Vec<QueryRecord>> {
    let (tx, rx) = mm_codebooks(cfg)?;
    let val = ds.validation_samples();
    let episode_ids: Vec<u64> = {
        let mut ids: Vec<u64> = val.iter().map(|s| s.episode_id).collect();
        ids.dedup();
        ids
    };
    let by_episode: Vec<Vec<&Sample>> = episode_ids
        .iter()
        .map(|&id| val.iter().filter(|s| s.episode_id == id).collect())
        .collect();

    let gamma_count = cfg.predictor.interpolation_factor;
    let t_period = cfg.scenario.low_csi_period_s;
    let per_episode: Vec<Result<Vec<QueryRecord>>> =
        map_indexed(mode, episode_ids.len(), |idx| {
            let id = episode_ids[idx];
            let episode = episode_for(cfg, ds.seed, id)?;
            let ekf_predictions = if run_ekf {
                Some(ekf_track_episode(&episode, cfg, ds.seed)?)
            } else {
                None
            };
            let mut records = Vec::new();
            for sample in &by_episode[idx] {
                let n = sample.csi_update_index as usize;
                let period = &episode.periods[n];
                for (qi, q) in sample.queries.iter().enumerate() {
                    let snap = &period.queries[qi].mm;
                    let optimal = q.optimal_beam as usize;
                    let gamma = interpolation_index(q.eta, gamma_count);
                    let mut push = |method: Method, beam: usize| -> Result<()> {
                        records.push(QueryRecord {
                            method,
                            episode_id: id,
                            csi_update_index: sample.csi_update_index,
                            time_s: q.time_s,
                            eta: q.eta,
                            gamma,
                            predicted_beam: beam,
                            optimal_beam: optimal,
                            gain_ratio: gain_ratio(snap, beam, optimal, &tx, &rx)?,
                        });
                        Ok(())
                    };
                    if let Some(model) = predictor {
                        let ctx = TimingContext::new(t_period, period.t_start, q.time_s);
                        let out = model.predict(&sample.history, &ctx)?;
                        push(Method::Proposed, out.chosen_beam)?;
                    }
                    if let Some(model) = noprior {
                        let snap_in = latest_snapshot(sample, model.pre.snapshot_len());
                        let (beam, _) = model.predict_beam(snap_in)?;
                        push(Method::NoPrior, beam)?;
                    }
                    if let Some(preds) = &ekf_predictions {
                        let p = preds
                            .iter()
                            .find(|p| p.period_index == n && p.query_index == qi)
                            .expect("EKF covers every query");
                        push(Method::Ekf, p.beam)?;
                    }
                }
            }
            Ok(records)
        });

    let mut out = Vec::new();
    for r in per_episode {
        out.extend(r?);
    }
    Ok(out)
}

pub fn mean_ratio(records: &[QueryRecord], method: Method) -> (f64, usize) {
    let vals: Vec<f64> =
        records.iter().filter(|r| r.method == method).map(|r| r.gain_ratio).collect();
    let n = vals.len();
    if n == 0 {
        return (f64::NAN, 0);
    }
    (vals.iter().sum::<f64>() / n as f64, n)
}

/// Fraction of queries whose predicted beam equals the sweep optimum.
pub fn accuracy(records: &[QueryRecord], method: Method) -> (f64, usize) {
    let hits: Vec<bool> = records
        .iter()
        .filter(|r| r.method == method)
        .map(|r| r.predicted_beam == r.optimal_beam)
        .collect();
    let n = hits.len();
    if n == 0 {
        return (f64::NAN, 0);
    }
    (hits.iter().filter(|&&h| h).count() as f64 / n as f64, n)
}

/// Decile bins over eta in `[0, 1)`; returns `(bin center, mean ratio, n)`.
pub fn eta_bins(records: &[QueryRecord], method: Method, bins: usize) -> Vec<(f64, f64, usize)> {
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for r in records.iter().filter(|r| r.method == method) {
        let b = ((r.eta * bins as f64) as usize).min(bins - 1);
        sums[b] += r.gain_ratio;
        counts[b] += 1;
    }
    (0..bins)
        .map(|b| {
            let center = (b as f64 + 0.5) / bins as f64;
            let mean = if counts[b] > 0 { sums[b] / counts[b] as f64 } else { f64::NAN };
            (center, mean, counts[b])
        })
        .collect()
}

/// Per-slot summary of one evaluation run.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_gain_ratio: f64,
    pub accuracy: f64,
    pub queries: usize,
}

/// Everything one experiment setting produces.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub scenario: ScenarioKind,
    pub summaries: Vec<MethodSummary>,
    pub per_eta_bin: Vec<(Method, Vec<(f64, f64, usize)>)>,
    pub loss_trace: TrainReport,
    pub noprior_loss_trace: Option<TrainReport>,
    pub config_digest_hex: String,
    pub dataset_seconds: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

impl EvalReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Stopwatch helper used by the experiment driver.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}
