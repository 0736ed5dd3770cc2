//! Command line: argument parsing, dispatch, stdout reporting and exit codes.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anatomy_warden_core::augment::ProposalKind;
use anatomy_warden_core::vae::TrainConfig;
use anatomy_warden_core::RegistrationMode;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{self, PipelineConfig};

/// Success.
pub const EXIT_OK: u8 = 0;
/// A map failed the checks or could not be repaired.
pub const EXIT_INVALID: u8 = 1;
/// Bad arguments or any other error.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "anatomy-warden", version, about = "Anatomical checks and guaranteed repair of cardiac segmentation maps")]
pub struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "ANATOMY_WARDEN_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Optimizer settings of the original method.
    Paper,
    /// Faster settings for the 64x64 synthetic corpus.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProposalArg {
    Mixture,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct Registration {
    /// Also rotate maps so the RV sits at a fixed angle.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub rotation: Switch,
}

impl Registration {
    pub fn mode(&self) -> RegistrationMode {
        match self.rotation {
            Switch::On => RegistrationMode::rotation(),
            Switch::Off => RegistrationMode::Translation,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate valid synthetic maps.
    Synth {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, value_parser = ["64", "256"], default_value = "64")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive shape thresholds from a corpus of valid maps.
    Calibrate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the adversarial VAE.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Starting values for the optimizer flags below.
        #[arg(long, value_enum, default_value_t = Preset::Paper)]
        preset: Preset,
        /// Learning rate [paper: 6e-5].
        #[arg(long)]
        lr: Option<f64>,
        /// Weight of the slice-position loss [default: 0.1].
        #[arg(long)]
        adversarial_weight: Option<f64>,
        /// Decoupled L2 weight decay lambda [paper: 0.01].
        #[arg(long)]
        weight_decay: Option<f64>,
        /// Weight of the KL term [default: 1.0].
        #[arg(long)]
        kl_weight: Option<f64>,
        /// [default: 50; desk: 60].
        #[arg(long)]
        epochs: Option<usize>,
        /// [default: 16].
        #[arg(long)]
        batch_size: Option<usize>,
        #[command(flatten)]
        registration: Registration,
    },
    /// Build the index of valid latent codes.
    Augment {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        n_target: usize,
        #[arg(long, value_enum, default_value_t = ProposalArg::Mixture)]
        proposal: ProposalArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        registration: Registration,
    },
    /// Run the anatomical checks on a map or a directory of maps.
    Check {
        path: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
    },
    /// Repair a map or a directory of maps.
    Repair {
        path: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        registration: Registration,
    },
    /// Apply random synthetic errors to maps.
    Corrupt {
        path: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_magnitude: u32,
        #[arg(long, default_value_t = 6)]
        max_magnitude: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dice, Hausdorff, anatomical errors and EF error against references.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
    },
    /// Percentage of invalid decodings along random latent interpolations.
    Study {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long, default_value_t = 500)]
        pairs: usize,
        #[arg(long, default_value_t = 25)]
        steps: usize,
        #[command(flatten)]
        registration: Registration,
    },
}

/// What a command prints and its exit status.
struct Outcome {
    json: serde_json::Value,
    text: String,
    code: u8,
}

impl Outcome {
    fn ok<T: Serialize>(value: &T, text: String) -> Result<Self> {
        Ok(Self {
            json: serde_json::to_value(value).expect("reports serialize"),
            text,
            code: EXIT_OK,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn train_config(
    preset: Preset,
    lr: Option<f64>,
    adversarial_weight: Option<f64>,
    weight_decay: Option<f64>,
    kl_weight: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seed: u64,
) -> Result<TrainConfig> {
    let mut c = match preset {
        Preset::Paper => TrainConfig::default(),
        Preset::Desk => TrainConfig::desk(),
    };
    c.learning_rate = lr.unwrap_or(c.learning_rate);
    c.adversarial_weight = adversarial_weight.unwrap_or(c.adversarial_weight);
    c.weight_decay = weight_decay.unwrap_or(c.weight_decay);
    c.kl_weight = kl_weight.unwrap_or(c.kl_weight);
    c.epochs = epochs.unwrap_or(c.epochs);
    c.batch_size = batch_size.unwrap_or(c.batch_size);
    c.rng_seed = seed;
    c.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(c)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn run_command(cli: &Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth { n, grid, out } => {
            let paths = pipeline::cmd_synth(*n, seed, grid.parse().expect("validated by clap"), out)?;
            Outcome::ok(&paths, format!("wrote {} maps to {}\n", paths.len(), out.display()))
        }
        Command::Calibrate { corpus, out } => {
            PipelineConfig::require(&[corpus])?;
            let th = pipeline::cmd_calibrate(corpus, out)?;
            Outcome::ok(&th, format!("{th:#?}\n"))
        }
        Command::Train {
            corpus,
            out,
            preset,
            lr,
            adversarial_weight,
            weight_decay,
            kl_weight,
            epochs,
            batch_size,
            registration,
        } => {
            PipelineConfig::require(&[corpus])?;
            let config = train_config(
                *preset,
                *lr,
                *adversarial_weight,
                *weight_decay,
                *kl_weight,
                *epochs,
                *batch_size,
                seed,
            )?;
            let log = pipeline::cmd_train(corpus, &config, registration.mode(), out)?;
            let last = log.last().map(|e| e.loss.total);
            Outcome::ok(
                &log,
                format!("trained {} epochs, final loss {}\n", log.len(), fmt_opt(last)),
            )
        }
        Command::Augment {
            corpus,
            model,
            thresholds,
            n_target,
            proposal,
            out,
            registration,
        } => {
            PipelineConfig::require(&[corpus, model, thresholds])?;
            let kind = match proposal {
                ProposalArg::Mixture => ProposalKind::Mixture,
                ProposalArg::Gaussian => ProposalKind::Gaussian,
            };
            let s = pipeline::cmd_augment(
                corpus,
                model,
                thresholds,
                *n_target,
                kind,
                registration.mode(),
                seed,
                out,
            )?;
            Outcome::ok(
                &s,
                format!(
                    "index of {} codes, {} of {} draws accepted, {:.1}s\n",
                    s.index_size, s.accepted, s.draws, s.wall_seconds
                ),
            )
        }
        Command::Check { path, thresholds } => {
            PipelineConfig::require(&[path, thresholds])?;
            let checked = pipeline::cmd_check(path, thresholds)?;
            let invalid = checked.iter().filter(|c| !c.report.is_valid()).count();
            let mut text = String::new();
            for c in &checked {
                let failed: Vec<&str> = c.report.failed().map(|k| k.name()).collect();
                let status = if failed.is_empty() { "valid" } else { "INVALID" };
                text += &format!("{}\t{status}\t{}\n", c.path.display(), failed.join(","));
            }
            text += &format!("{invalid} of {} maps invalid\n", checked.len());
            let json = serde_json::json!({
                "maps": checked,
                "invalid": invalid,
                "total": checked.len(),
            });
            Ok(Outcome {
                json,
                text,
                code: if invalid == 0 { EXIT_OK } else { EXIT_INVALID },
            })
        }
        Command::Repair {
            path,
            model,
            index,
            thresholds,
            out,
            registration,
        } => {
            PipelineConfig::require(&[path, model, index, thresholds])?;
            let records =
                pipeline::cmd_repair(path, model, index, thresholds, registration.mode(), out)?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            let mut text = String::new();
            for r in &records {
                text += &match &r.error {
                    Some(e) => format!("{}\tFAILED\t{e}\n", r.input.display()),
                    None => format!(
                        "{}\talpha {:.5}\tcalls {}\thd {} mm\n",
                        r.input.display(),
                        r.alpha,
                        r.decoder_calls,
                        fmt_opt(r.hd_change_mm)
                    ),
                };
            }
            text += &format!("{} repaired, {failed} failed\n", records.len() - failed);
            Ok(Outcome {
                json: serde_json::to_value(&records).expect("records serialize"),
                text,
                code: if failed == 0 { EXIT_OK } else { EXIT_INVALID },
            })
        }
        Command::Corrupt {
            path,
            min_magnitude,
            max_magnitude,
            out,
        } => {
            PipelineConfig::require(&[path])?;
            if min_magnitude > max_magnitude || *min_magnitude == 0 {
                return Err(Error::Usage("magnitudes must satisfy 1 <= min <= max".into()));
            }
            let records = pipeline::cmd_corrupt(path, seed, *min_magnitude..=*max_magnitude, out)?;
            Outcome::ok(&records, format!("corrupted {} maps into {}\n", records.len(), out.display()))
        }
        Command::Eval {
            pred,
            gt,
            thresholds,
        } => {
            PipelineConfig::require(&[pred, gt, thresholds])?;
            let r = pipeline::cmd_eval(pred, gt, thresholds)?;
            let mut text = String::from("class\tdice\thausdorff_mm\n");
            for (k, name) in ["LV", "MYO", "RV"].iter().enumerate() {
                text += &format!("{name}\t{:.4}\t{}\n", r.mean_dice[k], fmt_opt(r.mean_hausdorff_mm[k]));
            }
            text += &format!("anatomical errors\t{} of {}\n", r.anatomical_errors, r.slices.len());
            if let Some([lv, rv]) = r.ef_error {
                text += &format!("EF error\tLV {lv:.2}\tRV {rv:.2}\n");
            }
            Outcome::ok(&r, text)
        }
        Command::Study {
            model,
            corpus,
            thresholds,
            pairs,
            steps,
            registration,
        } => {
            PipelineConfig::require(&[model, corpus, thresholds])?;
            let r = pipeline::cmd_study(
                model,
                corpus,
                thresholds,
                *pairs,
                *steps,
                registration.mode(),
                seed,
            )?;
            Outcome::ok(
                &r,
                format!(
                    "{} of {} interpolated maps invalid ({:.2}%)\n",
                    r.invalid, r.decoded, r.percent_invalid
                ),
            )
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(Error::Usage("--threads must be at least 1".into()));
    }
    // A pool may already exist when commands run in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args`, runs the command and writes its report to `out`.
/// Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = configure_threads(cli.threads).and_then(|()| run_command(&cli));
    match result {
        Ok(o) => {
            let written = if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&o.json).expect("json"))
            } else {
                write!(out, "{}", o.text)
            };
            if written.is_err() {
                return EXIT_USAGE;
            }
            o.code
        }
        Err(e) => {
            log::error!("{e}");
            EXIT_USAGE
        }
    }
}
