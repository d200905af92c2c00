//! Experiment sweeps: each trains the required models at the requested scale
//! and emits one CSV (plus an SVG view) whose rows fully determine the plot.

use std::path::{Path, PathBuf};

use beamsim_core::baselines::{train_no_prior, NoPriorModel};
use beamsim_core::config::{digest_hex, Config, PredictorConfig};
use beamsim_core::datagen::{generate_dataset, Dataset};
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::{train_predictor, BeamPredictor, TrainReport};
use beamsim_core::tensornet::LayerSpec;
use beamsim_core::{Result, ScenarioKind};

use crate::eval::{
    accuracy, eta_bins, evaluate, mean_ratio, timed, EvalReport, Method, MethodSummary,
    QueryRecord,
};
use crate::svg::{line_chart, Series};
use crate::table::{fmt_f, CsvTable};

pub const ETA_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    pub fn apply(self, cfg: Config) -> Config {
        match self {
            Scale::Paper => cfg,
            Scale::Desk => cfg.desk_scale(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Validation-loss traces across interpolation factors (figure 2).
    InterpSweep,
    /// Gain ratio across history lengths (figure 3).
    HistorySweep,
    /// Gain ratio binned by timing offset (figure 4).
    EtaProfile,
    /// Gain ratio across Ricean K factors (figure 5).
    KSweep,
}

impl ExperimentKind {
    pub fn from_figure(fig: u32) -> Option<Self> {
        Some(match fig {
            2 => ExperimentKind::InterpSweep,
            3 => ExperimentKind::HistorySweep,
            4 => ExperimentKind::EtaProfile,
            5 => ExperimentKind::KSweep,
            _ => return None,
        })
    }

    pub fn figure(self) -> u32 {
        match self {
            ExperimentKind::InterpSweep => 2,
            ExperimentKind::HistorySweep => 3,
            ExperimentKind::EtaProfile => 4,
            ExperimentKind::KSweep => 5,
        }
    }
}

pub fn scenario_str(s: ScenarioKind) -> &'static str {
    match s {
        ScenarioKind::Stationary => "stationary",
        ScenarioKind::NonStationary => "non_stationary",
    }
}

/// Derives independent sub-streams (data, model init, shuffling) from one
/// experiment seed.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_MODEL: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_NP_MODEL: u64 = 3;
const TAG_NP_SHUFFLE: u64 = 4;

/// A trained experiment setting: dataset, predictor, optional no-prior model.
pub struct TrainedSetting {
    pub cfg: Config,
    pub seed: u64,
    pub dataset: Dataset,
    pub predictor: BeamPredictor,
    pub train_report: TrainReport,
    pub noprior: Option<(NoPriorModel, TrainReport)>,
    pub dataset_seconds: f64,
    pub train_seconds: f64,
}

/// Generates the dataset and trains the predictor (and, optionally, the
/// no-prior baseline) for one configuration.
pub fn prepare_setting(
    cfg: &Config,
    seed: u64,
    with_noprior: bool,
    mode: ExecMode,
) -> Result<TrainedSetting> {
    cfg.validate()?;
    let (dataset, dataset_seconds) = timed(|| generate_dataset(cfg, seed, mode));
    let dataset = dataset?;
    let width = dataset.input_width as usize;
    let mut predictor = BeamPredictor::new(&cfg.predictor, width, sub_seed(seed, TAG_MODEL))?;
    let (train_report, train_seconds) = timed(|| {
        train_predictor(
            &mut predictor,
            dataset.train_samples(),
            dataset.validation_samples(),
            &cfg.training,
            sub_seed(seed, TAG_SHUFFLE),
            mode,
        )
    });
    let train_report = train_report?;
    let mut train_seconds = train_seconds;
    let noprior = if with_noprior {
        let np_cfg = PredictorConfig {
            history_len: 1,
            interpolation_factor: 1,
            num_beams: cfg.predictor.num_beams,
            layers: LayerSpec::no_prior_stack(cfg.predictor.num_beams),
        };
        let mut model = NoPriorModel::new(&np_cfg, width, sub_seed(seed, TAG_NP_MODEL))?;
        let (report, secs) = timed(|| {
            train_no_prior(
                &mut model,
                dataset.train_samples(),
                dataset.validation_samples(),
                &cfg.training,
                sub_seed(seed, TAG_NP_SHUFFLE),
                mode,
            )
        });
        train_seconds += secs;
        Some((model, report?))
    } else {
        None
    };
    Ok(TrainedSetting {
        cfg: cfg.clone(),
        seed,
        dataset,
        predictor,
        train_report,
        noprior,
        dataset_seconds,
        train_seconds,
    })
}

/// Scores a trained setting on its validation episodes.
pub fn evaluate_setting(
    setting: &TrainedSetting,
    run_ekf: bool,
    mode: ExecMode,
) -> Result<(Vec<QueryRecord>, EvalReport)> {
    let (records, eval_seconds) = timed(|| {
        evaluate(
            &setting.cfg,
            &setting.dataset,
            Some(&setting.predictor),
            setting.noprior.as_ref().map(|(m, _)| m),
            run_ekf,
            mode,
        )
    });
    let records = records?;
    let mut methods = vec![Method::Proposed];
    if setting.noprior.is_some() {
        methods.push(Method::NoPrior);
    }
    if run_ekf {
        methods.push(Method::Ekf);
    }
    let summaries: Vec<MethodSummary> = methods
        .iter()
        .map(|&m| {
            let (ratio, n) = mean_ratio(&records, m);
            let (acc, _) = accuracy(&records, m);
            MethodSummary { method: m, mean_gain_ratio: ratio, accuracy: acc, queries: n }
        })
        .collect();
    let per_eta_bin =
        methods.iter().map(|&m| (m, eta_bins(&records, m, ETA_BINS))).collect();
    let report = EvalReport {
        scenario: setting.cfg.scenario.scenario_kind,
        summaries,
        per_eta_bin,
        loss_trace: setting.train_report.clone(),
        noprior_loss_trace: setting.noprior.as_ref().map(|(_, r)| r.clone()),
        config_digest_hex: digest_hex(&setting.cfg.digest()),
        dataset_seconds: setting.dataset_seconds,
        train_seconds: setting.train_seconds,
        eval_seconds,
    };
    Ok((records, report))
}

/// Writes the per-query prediction trace for one method.
pub fn write_trace(
    records: &[QueryRecord],
    method: Method,
    digest: &str,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let mut t = CsvTable::new(&[
        "episode_id",
        "query_time_s",
        "eta",
        "gamma",
        "predicted_beam",
        "optimal_beam",
        "gain_ratio",
    ]);
    t.comment(format!("method={}", method.as_str()));
    t.comment(format!("config_digest={digest}"));
    t.comment(format!("seed={seed}"));
    for r in records.iter().filter(|r| r.method == method) {
        t.row(vec![
            r.episode_id.to_string(),
            fmt_f(r.time_s),
            fmt_f(r.eta),
            r.gamma.to_string(),
            r.predicted_beam.to_string(),
            r.optimal_beam.to_string(),
            fmt_f(r.gain_ratio),
        ]);
    }
    t.write(path)
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub files: Vec<PathBuf>,
    pub reports: Vec<EvalReport>,
}

fn both_scenarios(base: &Config) -> Vec<Config> {
    [ScenarioKind::Stationary, ScenarioKind::NonStationary]
        .into_iter()
        .map(|k| {
            let mut c = base.clone();
            c.scenario.scenario_kind = k;
            c
        })
        .collect()
}

fn provenance(table: &mut CsvTable, base: &Config, seed: u64) {
    table.comment(format!("config_digest={}", digest_hex(&base.digest())));
    table.comment(format!("seed={seed}"));
}

/// Runs one experiment sweep over both mobility scenarios and writes
/// `fig<N>.csv` / `fig<N>.svg` into `out_dir`.
pub fn run_experiment(
    kind: ExperimentKind,
    base: &Config,
    seed: u64,
    out_dir: &Path,
    repeats: usize,
    mode: ExecMode,
) -> Result<ExperimentOutput> {
    std::fs::create_dir_all(out_dir)?;
    match kind {
        ExperimentKind::InterpSweep => interp_sweep(base, seed, out_dir, repeats.max(1), mode),
        ExperimentKind::HistorySweep => history_sweep(base, seed, out_dir, mode),
        ExperimentKind::EtaProfile => eta_profile(base, seed, out_dir, mode),
        ExperimentKind::KSweep => k_sweep(base, seed, out_dir, mode),
    }
}

fn interp_sweep(
    base: &Config,
    seed: u64,
    out_dir: &Path,
    repeats: usize,
    mode: ExecMode,
) -> Result<ExperimentOutput> {
    let gammas = [1usize, 2, 4, 6];
    let mut table = CsvTable::new(&["scenario", "gamma", "repeat", "epoch", "train_loss", "val_loss"]);
    provenance(&mut table, base, seed);
    table.comment(format!("repeats={repeats} (averaged in the plot, raw rows here)"));
    let mut out = ExperimentOutput::default();
    let mut series = Vec::new();
    for cfg in both_scenarios(base) {
        let scen = scenario_str(cfg.scenario.scenario_kind);
        for &gamma in &gammas {
            let mut cfg = cfg.clone();
            cfg.predictor.interpolation_factor = gamma;
            let mut mean_val = vec![0.0; cfg.training.epochs];
            for rep in 0..repeats {
                let rep_seed = sub_seed(seed, 100 + rep as u64);
                let setting = prepare_setting(&cfg, rep_seed, false, mode)?;
                for (e, (tl, vl)) in setting
                    .train_report
                    .train_loss
                    .iter()
                    .zip(&setting.train_report.val_loss)
                    .enumerate()
                {
                    table.row(vec![
                        scen.to_string(),
                        gamma.to_string(),
                        rep.to_string(),
                        (e + 1).to_string(),
                        fmt_f(*tl),
                        fmt_f(*vl),
                    ]);
                    mean_val[e] += vl / repeats as f64;
                }
                let (_, report) = evaluate_setting(&setting, false, mode)?;
                out.reports.push(report);
            }
            series.push(Series {
                label: format!("{scen} gamma={gamma}"),
                points: mean_val.iter().enumerate().map(|(e, v)| ((e + 1) as f64, *v)).collect(),
            });
        }
    }
    let csv = out_dir.join("fig2.csv");
    table.write(&csv)?;
    let svg = out_dir.join("fig2.svg");
    std::fs::write(
        &svg,
        line_chart("validation loss vs interpolation factor", "epoch", "cross entropy", &series),
    )?;
    out.files.extend([csv, svg]);
    Ok(out)
}

fn history_sweep(base: &Config, seed: u64, out_dir: &Path, mode: ExecMode) -> Result<ExperimentOutput> {
    let history_lens = [1usize, 2, 3, 4, 5, 6, 7];
    let mut table = CsvTable::new(&["scenario", "method", "m", "mean_ratio", "accuracy", "n"]);
    provenance(&mut table, base, seed);
    table.comment("ricean_k_low_db=8".to_string());
    let mut out = ExperimentOutput::default();
    let mut series: Vec<Series> = Vec::new();
    for cfg in both_scenarios(base) {
        let scen = scenario_str(cfg.scenario.scenario_kind);
        let mut per_method: Vec<(Method, Vec<(f64, f64)>)> = vec![
            (Method::Proposed, Vec::new()),
            (Method::Ekf, Vec::new()),
            (Method::NoPrior, Vec::new()),
        ];
        for &m in &history_lens {
            let mut cfg = cfg.clone();
            cfg.scenario.ricean_k_low_db = 8.0;
            cfg.predictor.history_len = m;
            let setting = prepare_setting(&cfg, seed, true, mode)?;
            let (records, report) = evaluate_setting(&setting, true, mode)?;
            for summary in &report.summaries {
                table.row(vec![
                    scen.to_string(),
                    summary.method.as_str().to_string(),
                    m.to_string(),
                    fmt_f(summary.mean_gain_ratio),
                    fmt_f(summary.accuracy),
                    summary.queries.to_string(),
                ]);
                if let Some(slot) =
                    per_method.iter_mut().find(|(method, _)| *method == summary.method)
                {
                    slot.1.push((m as f64, summary.mean_gain_ratio));
                }
            }
            drop(records);
            out.reports.push(report);
        }
        for (method, points) in per_method {
            series.push(Series { label: format!("{scen} {}", method.as_str()), points });
        }
    }
    let csv = out_dir.join("fig3.csv");
    table.write(&csv)?;
    let svg = out_dir.join("fig3.svg");
    std::fs::write(
        &svg,
        line_chart("gain ratio vs history length", "m", "mean gain ratio", &series),
    )?;
    out.files.extend([csv, svg]);
    Ok(out)
}

fn eta_profile(base: &Config, seed: u64, out_dir: &Path, mode: ExecMode) -> Result<ExperimentOutput> {
    let mut table = CsvTable::new(&["scenario", "method", "eta_bin", "mean_ratio", "n"]);
    provenance(&mut table, base, seed);
    table.comment(format!(
        "eta bins: {ETA_BINS} deciles of [0,1); eta_bin column is the bin center"
    ));
    let mut out = ExperimentOutput::default();
    let mut series: Vec<Series> = Vec::new();
    for cfg in both_scenarios(base) {
        let mut cfg = cfg.clone();
        cfg.scenario.ricean_k_low_db = 8.0;
        let scen = scenario_str(cfg.scenario.scenario_kind);
        let setting = prepare_setting(&cfg, seed, true, mode)?;
        let (records, report) = evaluate_setting(&setting, true, mode)?;
        for (method, bins) in &report.per_eta_bin {
            let mut points = Vec::new();
            for (center, ratio, n) in bins {
                table.row(vec![
                    scen.to_string(),
                    method.as_str().to_string(),
                    fmt_f(*center),
                    fmt_f(*ratio),
                    n.to_string(),
                ]);
                points.push((*center, *ratio));
            }
            series.push(Series { label: format!("{scen} {}", method.as_str()), points });
        }
        for method in [Method::Proposed, Method::Ekf, Method::NoPrior] {
            let path = out_dir.join(format!("trace_{}_{scen}.csv", method.as_str()));
            write_trace(&records, method, &report.config_digest_hex, seed, &path)?;
            out.files.push(path);
        }
        out.reports.push(report);
    }
    let csv = out_dir.join("fig4.csv");
    table.write(&csv)?;
    let svg = out_dir.join("fig4.svg");
    std::fs::write(
        &svg,
        line_chart("gain ratio vs timing offset", "eta", "mean gain ratio", &series),
    )?;
    out.files.extend([csv, svg]);
    Ok(out)
}

fn k_sweep(base: &Config, seed: u64, out_dir: &Path, mode: ExecMode) -> Result<ExperimentOutput> {
    let k_grid = [0.0, 4.0, 8.0, 12.0, 16.0, 20.0];
    let mut table = CsvTable::new(&["scenario", "method", "k_db", "mean_ratio", "n"]);
    provenance(&mut table, base, seed);
    let mut out = ExperimentOutput::default();
    let mut series: Vec<Series> = Vec::new();
    for cfg in both_scenarios(base) {
        let scen = scenario_str(cfg.scenario.scenario_kind);
        let mut per_method: Vec<(Method, Vec<(f64, f64)>)> = vec![
            (Method::Proposed, Vec::new()),
            (Method::Ekf, Vec::new()),
            (Method::NoPrior, Vec::new()),
        ];
        for &k in &k_grid {
            let mut cfg = cfg.clone();
            cfg.scenario.ricean_k_low_db = k;
            let setting = prepare_setting(&cfg, seed, true, mode)?;
            let (_, report) = evaluate_setting(&setting, true, mode)?;
            for summary in &report.summaries {
                table.row(vec![
                    scen.to_string(),
                    summary.method.as_str().to_string(),
                    format!("{k}"),
                    fmt_f(summary.mean_gain_ratio),
                    summary.queries.to_string(),
                ]);
                if let Some(slot) =
                    per_method.iter_mut().find(|(method, _)| *method == summary.method)
                {
                    slot.1.push((k, summary.mean_gain_ratio));
                }
            }
            out.reports.push(report);
        }
        for (method, points) in per_method {
            series.push(Series { label: format!("{scen} {}", method.as_str()), points });
        }
    }
    let csv = out_dir.join("fig5.csv");
    table.write(&csv)?;
    let svg = out_dir.join("fig5.svg");
    std::fs::write(
        &svg,
        line_chart("gain ratio vs Ricean K", "K (dB)", "mean gain ratio", &series),
    )?;
    out.files.extend([csv, svg]);
    Ok(out)
}
