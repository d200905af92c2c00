//! Workbench CLI: dataset generation, training, evaluation, figure
//! reproduction, and gradient auditing.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use beamsim_core::config::{digest_hex, Config};
use beamsim_core::datagen::{generate_dataset, load_dataset_for, save_dataset, verify_labels};
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::BeamPredictor;
use beamsim_harness::experiments::{
    evaluate_setting, prepare_setting, run_experiment, sub_seed, write_trace, ExperimentKind,
    Scale, TrainedSetting,
};
use beamsim_harness::eval::Method;
use beamsim_harness::gradcheck;

#[derive(Parser)]
#[command(
    name = "beamsim",
    about = "Dual-band channel simulation and mmWave beam prediction workbench",
    version
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for data, initialization, and shuffling streams.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Experiment scale: `paper` (10240 samples, 40 epochs) or `desk`
    /// (2048 samples, 15 epochs).
    #[arg(long, global = true, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Paper,
    Desk,
}

impl From<ScaleArg> for Scale {
    fn from(v: ScaleArg) -> Scale {
        match v {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Desk => Scale::Desk,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file (plus human-readable sidecar) and verify its
    /// labels against a regeneration pass.
    GenData {
        /// Output file name inside --out.
        #[arg(long, default_value = "dataset.ds")]
        name: String,
    },
    /// Train the predictor (and the no-prior baseline) and write checkpoints
    /// and a loss-trace CSV.
    Train {
        /// Reuse an existing dataset file instead of generating one.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Skip the no-prior baseline.
        #[arg(long)]
        no_baseline: bool,
    },
    /// Evaluate checkpoints on the validation split: summary plus per-query
    /// prediction traces for every method.
    Eval {
        /// Predictor checkpoint (defaults to <out>/predictor.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// No-prior baseline checkpoint (optional).
        #[arg(long)]
        noprior_checkpoint: Option<PathBuf>,
        /// Dataset file (defaults to regenerating from config and seed).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Re-run one of the standard sweeps: 2 = interpolation factors,
    /// 3 = history lengths, 4 = timing-offset profile, 5 = Ricean K.
    ReproduceFig {
        /// Figure number: 2, 3, 4, or 5.
        figure: u32,
        /// Independent training repetitions (figure 2).
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Finite-difference audit of all analytic gradients; nonzero exit on
    /// any mismatch.
    GradCheck,
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let base = match &cli.config {
        Some(path) => Config::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => Config::default(),
    };
    Ok(Scale::from(cli.scale).apply(base))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let mode = ExecMode::default();
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::GenData { name } => {
            let ds = generate_dataset(&cfg, cli.seed, mode)?;
            let path = cli.out.join(name);
            save_dataset(&ds, &cfg, &path)?;
            let checked = verify_labels(&ds, &cfg, mode)?;
            println!(
                "wrote {} ({} samples, {} episodes, {} labels verified)",
                path.display(),
                ds.samples.len(),
                ds.num_episodes,
                checked
            );
            println!("config digest {}", digest_hex(&ds.config_digest));
        }
        Command::Train { data, no_baseline } => {
            let setting = prepare_or_load(&cfg, cli, data.as_deref(), !no_baseline, mode)?;
            let ckpt = cli.out.join("predictor.ckpt");
            setting.predictor.save(&ckpt)?;
            println!("predictor checkpoint: {}", ckpt.display());
            if let Some((np, _)) = &setting.noprior {
                let np_ckpt = cli.out.join("no_prior.ckpt");
                np.save(&np_ckpt)?;
                println!("no-prior checkpoint:  {}", np_ckpt.display());
            }
            let mut table = beamsim_harness::table::CsvTable::new(&[
                "epoch",
                "model",
                "train_loss",
                "val_loss",
            ]);
            table.comment(format!("config_digest={}", digest_hex(&cfg.digest())));
            table.comment(format!("seed={}", cli.seed));
            for (e, (tl, vl)) in setting
                .train_report
                .train_loss
                .iter()
                .zip(&setting.train_report.val_loss)
                .enumerate()
            {
                table.row(vec![
                    (e + 1).to_string(),
                    "proposed".into(),
                    beamsim_harness::table::fmt_f(*tl),
                    beamsim_harness::table::fmt_f(*vl),
                ]);
            }
            if let Some((_, report)) = &setting.noprior {
                for (e, (tl, vl)) in
                    report.train_loss.iter().zip(&report.val_loss).enumerate()
                {
                    table.row(vec![
                        (e + 1).to_string(),
                        "no_prior".into(),
                        beamsim_harness::table::fmt_f(*tl),
                        beamsim_harness::table::fmt_f(*vl),
                    ]);
                }
            }
            let loss_csv = cli.out.join("loss_trace.csv");
            table.write(&loss_csv)?;
            println!(
                "final validation loss {:.4} ({} epochs); losses: {}",
                setting.train_report.val_loss.last().copied().unwrap_or(f64::NAN),
                setting.train_report.val_loss.len(),
                loss_csv.display()
            );
        }
        Command::Eval { checkpoint, noprior_checkpoint, data } => {
            let ckpt = checkpoint.clone().unwrap_or_else(|| cli.out.join("predictor.ckpt"));
            let predictor = BeamPredictor::load(&ckpt)
                .with_context(|| format!("loading {}", ckpt.display()))?;
            let dataset = match data {
                Some(path) => load_dataset_for(path, &cfg)?,
                None => generate_dataset(&cfg, cli.seed, mode)?,
            };
            let noprior = match noprior_checkpoint {
                Some(p) => Some(beamsim_core::baselines::NoPriorModel::load(p)?),
                None => None,
            };
            let setting = TrainedSetting {
                cfg: cfg.clone(),
                seed: cli.seed,
                dataset,
                predictor,
                train_report: Default::default(),
                noprior: noprior.map(|m| (m, Default::default())),
                dataset_seconds: 0.0,
                train_seconds: 0.0,
            };
            let (records, report) = evaluate_setting(&setting, true, mode)?;
            for s in &report.summaries {
                println!(
                    "{:<9} mean gain ratio {:.4}, accuracy {:.4} over {} queries",
                    s.method.as_str(),
                    s.mean_gain_ratio,
                    s.accuracy,
                    s.queries
                );
            }
            for method in [Method::Proposed, Method::NoPrior, Method::Ekf] {
                if records.iter().any(|r| r.method == method) {
                    let path = cli.out.join(format!("trace_{}.csv", method.as_str()));
                    write_trace(&records, method, &report.config_digest_hex, cli.seed, &path)?;
                    println!("trace: {}", path.display());
                }
            }
        }
        Command::ReproduceFig { figure, repeats } => {
            let Some(kind) = ExperimentKind::from_figure(*figure) else {
                bail!("unknown figure {figure}; expected 2, 3, 4, or 5");
            };
            let out = run_experiment(kind, &cfg, cli.seed, &cli.out, *repeats, mode)?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            for r in &out.reports {
                for s in &r.summaries {
                    println!(
                        "[{}] {:<9} ratio {:.4} over {} queries",
                        beamsim_harness::experiments::scenario_str(r.scenario),
                        s.method.as_str(),
                        s.mean_gain_ratio,
                        s.queries
                    );
                }
            }
        }
        Command::GradCheck => {
            println!("finite-difference gradient audit (step {:.0e})", gradcheck::FD_STEP);
            let report = gradcheck::run(true)?;
            println!("checked {} parameters", report.total_checked());
            if !report.passed() {
                bail!("gradient check failed");
            }
            println!("all gradients within tolerance");
        }
    }
    Ok(())
}

fn prepare_or_load(
    cfg: &Config,
    cli: &Cli,
    data: Option<&std::path::Path>,
    with_noprior: bool,
    mode: ExecMode,
) -> anyhow::Result<TrainedSetting> {
    match data {
        None => Ok(prepare_setting(cfg, cli.seed, with_noprior, mode)?),
        Some(path) => {
            let dataset = load_dataset_for(path, cfg)?;
            let width = dataset.input_width as usize;
            let mut predictor =
                BeamPredictor::new(&cfg.predictor, width, sub_seed(dataset.seed, 1))?;
            let train_report = beamsim_core::predictor::train_predictor(
                &mut predictor,
                dataset.train_samples(),
                dataset.validation_samples(),
                &cfg.training,
                sub_seed(dataset.seed, 2),
                mode,
            )?;
            let noprior = if with_noprior {
                let np_cfg = beamsim_core::config::PredictorConfig {
                    history_len: 1,
                    interpolation_factor: 1,
                    num_beams: cfg.predictor.num_beams,
                    layers: beamsim_core::tensornet::LayerSpec::no_prior_stack(
                        cfg.predictor.num_beams,
                    ),
                };
                let mut np = beamsim_core::baselines::NoPriorModel::new(
                    &np_cfg,
                    width,
                    sub_seed(dataset.seed, 3),
                )?;
                let report = beamsim_core::baselines::train_no_prior(
                    &mut np,
                    dataset.train_samples(),
                    dataset.validation_samples(),
                    &cfg.training,
                    sub_seed(dataset.seed, 4),
                    mode,
                )?;
                Some((np, report))
            } else {
                None
            };
            let seed = dataset.seed;
            Ok(TrainedSetting {
                cfg: cfg.clone(),
                seed,
                dataset,
                predictor,
                train_report,
                noprior,
                dataset_seconds: 0.0,
                train_seconds: 0.0,
            })
        }
    }
}
