//! One function per command. Each reads its inputs from disk, never
//! modifies them, and writes artifacts under the given output paths.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anatomy_warden_core::anatomy::{calibrate_thresholds, evaluate_anatomy, AnatomyReport, Thresholds};
use anatomy_warden_core::augment::{
    fit_basis, rejection_sample, split_target, stream_rng, DecoderValidity, ProposalKind,
    SampleStats, SamplerConfig,
};
use anatomy_warden_core::eval::{evaluate_corpus, interpolation_study, EvalReport, StudyResult};
use anatomy_warden_core::nn::LatentIndex;
use anatomy_warden_core::repair::{repair_map, Probe, RepairResult};
use anatomy_warden_core::segmap::register;
use anatomy_warden_core::synth::{corrupt, generate_corpus, random_spec, CorruptionSpec, ParamsDistribution};
use anatomy_warden_core::vae::{train_with, Architecture, EpochLog, TrainConfig, VaeModel};
use anatomy_warden_core::{RegistrationMode, SegMap, Transform};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binary::{load_index, load_model, save_index, save_model};
use crate::error::{Error, Result};
use crate::formats::{load_corpus, read_json, save_corpus, save_segmap, write_json};

/// Independent sampling streams of the index build. Fixed so that the index
/// does not depend on the thread count.
pub const DEFAULT_STREAMS: usize = 8;

/// Grid sizes the command line accepts.
pub const GRIDS: [usize; 2] = [64, 256];

/// Synthetic shape ranges and network for a grid size.
pub fn scale_for(grid: usize) -> Result<(ParamsDistribution, Architecture)> {
    match grid {
        64 => Ok((ParamsDistribution::default(), Architecture::desk())),
        256 => Ok((ParamsDistribution::paper_scale(), Architecture::paper())),
        g => Err(Error::Usage(format!("grid must be 64 or 256, got {g}"))),
    }
}

/// File locations and settings shared by the commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub model: PathBuf,
    pub index: PathBuf,
    pub thresholds: PathBuf,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    pub n_target: usize,
    pub registration: RegistrationMode,
    pub grid: usize,
}

impl PipelineConfig {
    /// Paths the read side of a command relies on must exist.
    pub fn require(paths: &[&Path]) -> Result<()> {
        for p in paths {
            if p.as_os_str().is_empty() {
                return Err(Error::EmptyPath);
            }
            if !p.exists() {
                return Err(Error::Usage(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

fn maps_only(corpus: Vec<(PathBuf, SegMap)>) -> Vec<SegMap> {
    corpus.into_iter().map(|(_, m)| m).collect()
}

/// Registers every map; content pushed off the grid is an error here since
/// these maps are training or reference data.
pub fn register_all(maps: &[SegMap], mode: RegistrationMode) -> Result<Vec<SegMap>> {
    maps.par_iter()
        .map(|m| Ok(register(m, mode)?.0))
        .collect()
}

fn load_nonempty(dir: &Path) -> Result<Vec<(PathBuf, SegMap)>> {
    let corpus = load_corpus(dir)?;
    if corpus.is_empty() {
        return Err(Error::Usage(format!("no .pgm maps in {}", dir.display())));
    }
    Ok(corpus)
}

/// `n` valid synthetic slices in `out_dir`.
pub fn cmd_synth(n: usize, seed: u64, grid: usize, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (dist, _) = scale_for(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maps = generate_corpus(n, &dist, &Thresholds::STRUCTURAL, &mut rng)?;
    let paths = save_corpus(&maps, out_dir, "map")?;
    info!("wrote {} maps to {}", paths.len(), out_dir.display());
    Ok(paths)
}

pub fn cmd_calibrate(corpus_dir: &Path, out: &Path) -> Result<Thresholds> {
    let corpus = maps_only(load_nonempty(corpus_dir)?);
    let th = calibrate_thresholds(&corpus)?;
    write_json(out, &th)?;
    Ok(th)
}

pub fn load_thresholds(path: &Path) -> Result<Thresholds> {
    let th: Thresholds = read_json(path)?;
    th.validate().map_err(|source| Error::Map {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(th)
}

/// Trains on the registered corpus; writes the model and `<model>.log.json`.
pub fn cmd_train(
    corpus_dir: &Path,
    config: &TrainConfig,
    mode: RegistrationMode,
    out_model: &Path,
) -> Result<Vec<EpochLog>> {
    let corpus = maps_only(load_nonempty(corpus_dir)?);
    let grid = corpus[0].size();
    let (_, arch) = scale_for(grid)?;
    let registered = register_all(&corpus, mode)?;
    let t = Instant::now();
    let trained = train_with(&registered, arch, config, |e| {
        info!(
            "epoch {} loss {:.5} (rec {:.5} kl {:.5} adv {:.5}) {:.0}s",
            e.epoch,
            e.loss.total,
            e.loss.reconstruction,
            e.loss.kl,
            e.loss.adversarial,
            t.elapsed().as_secs_f64()
        )
    })?;
    save_model(&trained.model, out_model)?;
    write_json(&out_model.with_extension("log.json"), &trained.log)?;
    Ok(trained.log)
}

/// Rejection sampling with one rng stream per task, run in parallel and
/// concatenated in stream order.
#[allow(clippy::too_many_arguments)]
pub fn sample_parallel(
    n_target: usize,
    basis: &anatomy_warden_core::augment::AugmentBasis,
    kind: ProposalKind,
    model: &VaeModel<f32>,
    th: &Thresholds,
    config: &SamplerConfig,
    seed: u64,
    streams: usize,
) -> Result<(Vec<anatomy_warden_core::LatentVector>, SampleStats)> {
    let parts: Vec<_> = split_target(n_target, streams)
        .into_par_iter()
        .enumerate()
        .map(|(s, share)| {
            let mut rng = stream_rng(seed, s as u64);
            let mut validity = DecoderValidity {
                model,
                thresholds: th,
            };
            rejection_sample(
                share,
                &basis.parzen,
                basis.proposal_for(kind),
                &mut validity,
                config,
                &mut rng,
            )
        })
        .collect::<anatomy_warden_core::Result<_>>()?;
    let mut all = Vec::with_capacity(n_target);
    let mut stats = SampleStats::default();
    for (zs, st) in parts {
        all.extend(zs);
        stats.merge(&st);
    }
    Ok((all, stats))
}

/// Sampler counters written next to the index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub draws: u64,
    pub accepted: u64,
    pub envelope_violations: u64,
    pub wall_seconds: f64,
    pub corpus_latents: usize,
    pub valid_corpus_latents: usize,
    pub index_size: usize,
}

/// Builds the index from the valid corpus codes plus accepted samples;
/// writes it and `<index>.stats.json`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_augment(
    corpus_dir: &Path,
    model_path: &Path,
    thresholds_path: &Path,
    n_target: usize,
    kind: ProposalKind,
    mode: RegistrationMode,
    seed: u64,
    out_index: &Path,
) -> Result<AugmentStats> {
    let model = load_model(model_path)?;
    let th = load_thresholds(thresholds_path)?;
    let corpus = register_all(&maps_only(load_nonempty(corpus_dir)?), mode)?;
    let t = Instant::now();
    let basis = fit_basis(&corpus, &model, &th)?;
    let needed = n_target.saturating_sub(basis.valid_corpus_latents.len());
    info!(
        "{} of {} corpus codes decode valid; sampling {needed} more",
        basis.valid_corpus_latents.len(),
        basis.corpus_latents.len()
    );
    let (samples, st) = sample_parallel(
        needed,
        &basis,
        kind,
        &model,
        &th,
        &SamplerConfig::default(),
        seed,
        DEFAULT_STREAMS,
    )?;
    let mut all = basis.valid_corpus_latents.clone();
    all.extend(samples);
    let index = LatentIndex::bulk_load(&all)?;
    save_index(&index, out_index)?;
    let stats = AugmentStats {
        draws: st.draws,
        accepted: st.accepted,
        envelope_violations: st.envelope_violations,
        wall_seconds: t.elapsed().as_secs_f64(),
        corpus_latents: basis.corpus_latents.len(),
        valid_corpus_latents: basis.valid_corpus_latents.len(),
        index_size: index.len(),
    };
    write_json(&out_index.with_extension("stats.json"), &stats)?;
    Ok(stats)
}

/// Report of one checked file.
#[derive(Debug, Clone, Serialize)]
pub struct CheckedMap {
    pub path: PathBuf,
    #[serde(flatten)]
    pub report: AnatomyReport,
}

pub fn cmd_check(path: &Path, thresholds_path: &Path) -> Result<Vec<CheckedMap>> {
    let th = load_thresholds(thresholds_path)?;
    Ok(load_nonempty(path)?
        .into_par_iter()
        .map(|(path, m)| CheckedMap {
            report: evaluate_anatomy(&m, &th),
            path,
        })
        .collect())
}

/// Serialized form of a [`RepairResult`], minus the maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub input: PathBuf,
    pub output: PathBuf,
    pub alpha: f64,
    pub was_valid_input: bool,
    pub decoder_calls: usize,
    pub hd_change_mm: Option<f64>,
    pub transform: Transform,
    pub probes: Vec<Probe>,
    pub error: Option<String>,
}

impl RepairRecord {
    fn of(input: PathBuf, output: PathBuf, r: &RepairResult) -> Self {
        Self {
            input,
            output,
            alpha: r.alpha,
            was_valid_input: r.was_valid_input,
            decoder_calls: r.decoder_calls,
            hd_change_mm: r.hd_change_mm,
            transform: r.transform,
            probes: r.probes.clone(),
            error: None,
        }
    }
}

/// Repairs every map under `path` into `out_dir` (same file names) with a
/// `<name>.repair.json` per map. Maps that cannot be repaired are recorded
/// with their error and not written.
pub fn cmd_repair(
    path: &Path,
    model_path: &Path,
    index_path: &Path,
    thresholds_path: &Path,
    mode: RegistrationMode,
    out_dir: &Path,
) -> Result<Vec<RepairRecord>> {
    let model = load_model(model_path)?;
    let index = load_index(index_path)?;
    let th = load_thresholds(thresholds_path)?;
    let inputs = load_nonempty(path)?;
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    inputs
        .into_par_iter()
        .map(|(input, map)| {
            let name = input.file_name().expect("listed files have names");
            let output = out_dir.join(name);
            let record = match repair_map(&map, &model, &index, &th, mode) {
                Ok(r) => {
                    save_segmap(&r.output, &output)?;
                    RepairRecord::of(input, output.clone(), &r)
                }
                Err(e) => {
                    warn!("{}: {e}", input.display());
                    RepairRecord {
                        input,
                        output: output.clone(),
                        alpha: f64::NAN,
                        was_valid_input: false,
                        decoder_calls: 0,
                        hd_change_mm: None,
                        transform: Transform::IDENTITY,
                        probes: Vec::new(),
                        error: Some(e.to_string()),
                    }
                }
            };
            write_json(&output.with_extension("repair.json"), &record)?;
            Ok(record)
        })
        .collect()
}

/// Corruption applied to one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub input: PathBuf,
    pub output: PathBuf,
    pub spec: CorruptionSpec,
}

/// Draws up to this many specs per map before giving up on it.
const CORRUPTION_ATTEMPTS: usize = 32;

/// Applies a random corruption of magnitude in `magnitudes` to every map;
/// writes the results and `corruptions.json` to `out_dir`.
pub fn cmd_corrupt(
    path: &Path,
    seed: u64,
    magnitudes: std::ops::RangeInclusive<u32>,
    out_dir: &Path,
) -> Result<Vec<CorruptionRecord>> {
    let inputs = load_nonempty(path)?;
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(inputs.len());
    for (input, map) in inputs {
        let mut done = None;
        for _ in 0..CORRUPTION_ATTEMPTS {
            let spec = random_spec(&mut rng, magnitudes.clone());
            if let Ok(m) = corrupt(&map, &spec) {
                done = Some((spec, m));
                break;
            }
        }
        let Some((spec, m)) = done else {
            warn!("{}: no corruption applies", input.display());
            continue;
        };
        let output = out_dir.join(input.file_name().expect("listed files have names"));
        save_segmap(&m, &output)?;
        records.push(CorruptionRecord {
            input,
            output,
            spec,
        });
    }
    write_json(&out_dir.join("corruptions.json"), &records)?;
    Ok(records)
}

/// Pairs predictions and references by file name.
pub fn cmd_eval(pred_dir: &Path, gt_dir: &Path, thresholds_path: &Path) -> Result<EvalReport> {
    let th = load_thresholds(thresholds_path)?;
    let pred = load_nonempty(pred_dir)?;
    let gt = load_nonempty(gt_dir)?;
    let names = |c: &[(PathBuf, SegMap)]| -> Vec<_> { c.iter().map(|(p, _)| p.file_name().map(ToOwned::to_owned)).collect() };
    if names(&pred) != names(&gt) {
        return Err(Error::Usage(format!(
            "{} and {} do not hold the same file names",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    Ok(evaluate_corpus(&maps_only(pred), &maps_only(gt), &th)?)
}

pub fn cmd_study(
    model_path: &Path,
    corpus_dir: &Path,
    thresholds_path: &Path,
    pairs: usize,
    steps: usize,
    mode: RegistrationMode,
    seed: u64,
) -> Result<StudyResult> {
    let model = load_model(model_path)?;
    let th = load_thresholds(thresholds_path)?;
    let corpus = register_all(&maps_only(load_nonempty(corpus_dir)?), mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(interpolation_study(&model, &corpus, &th, pairs, steps, &mut rng)?)
}
