//! Anatomically constrained rejection sampling of latent vectors: a Parzen
//! density over encoded ground truth, a diagonal Gaussian proposal and an
//! envelope constant, all evaluated in log space.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::anatomy::{is_valid, Thresholds};
use crate::error::{Error, Result};
use crate::latent::{LatentVector, LATENT_DIM};
use crate::nn::LatentIndex;
use crate::segmap::SegMap;
use crate::vae::VaeModel;

const D: f64 = LATENT_DIM as f64;

/// Safety factor applied to the largest observed density ratio.
pub const ENVELOPE_FACTOR: f64 = 1.5;

/// Isotropic Gaussian kernel density over a set of latents.
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenModel {
    centers: Vec<[f64; LATENT_DIM]>,
    bandwidth: f64,
}

fn to_f64(z: &LatentVector) -> [f64; LATENT_DIM] {
    z.0.map(|v| v as f64)
}

/// Per-dimension mean and unbiased variance.
fn moments(latents: &[LatentVector]) -> ([f64; LATENT_DIM], [f64; LATENT_DIM]) {
    let n = latents.len() as f64;
    let mut mean = [0.0; LATENT_DIM];
    for z in latents {
        for (m, &v) in mean.iter_mut().zip(&z.0) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; LATENT_DIM];
    for z in latents {
        for ((s, &v), m) in var.iter_mut().zip(&z.0).zip(&mean) {
            let d = v as f64 - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n - 1.0);
    (mean, var)
}

/// Silverman's rule `h = s * (4 / ((d + 2) n))^(1 / (d + 4))` with `s` the
/// mean per-dimension sample standard deviation.
pub fn silverman_bandwidth(mean_std: f64, n: usize) -> f64 {
    mean_std * libm::pow(4.0 / ((D + 2.0) * n as f64), 1.0 / (D + 4.0))
}

pub fn fit_parzen(latents: &[LatentVector]) -> Result<ParzenModel> {
    if latents.len() < 2 {
        return Err(Error::TooFewLatents(latents.len()));
    }
    for z in latents {
        z.ensure_finite()?;
    }
    let (_, var) = moments(latents);
    let mean_std = var.iter().map(|v| libm::sqrt(*v)).sum::<f64>() / D;
    let bandwidth = silverman_bandwidth(mean_std, latents.len());
    if !bandwidth.is_finite() || bandwidth <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(ParzenModel {
        centers: latents.iter().map(to_f64).collect(),
        bandwidth,
    })
}

impl ParzenModel {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Mean of the mixture, i.e. of the kernel centres.
    pub fn mean(&self) -> [f64; LATENT_DIM] {
        let mut m = [0.0; LATENT_DIM];
        for c in &self.centers {
            for (a, b) in m.iter_mut().zip(c) {
                *a += b;
            }
        }
        m.map(|v| v / self.centers.len() as f64)
    }

    /// Draws a kernel centre uniformly and perturbs it by `h * eps`.
    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> LatentVector {
        let c = &self.centers[rng.random_range(0..self.centers.len())];
        let mut z = LatentVector::ZERO;
        for l in 0..LATENT_DIM {
            let e: f64 = StandardNormal.sample(rng);
            z[l] = (c[l] + self.bandwidth * e) as f32;
        }
        z
    }

    /// `log((1/N) sum_i N(z; z_i, h^2 I))`, stable via log-sum-exp.
    pub fn log_density(&self, z: &LatentVector) -> f64 {
        let q = to_f64(z);
        let inv = -0.5 / (self.bandwidth * self.bandwidth);
        let mut exps = Vec::with_capacity(self.centers.len());
        let mut max = f64::NEG_INFINITY;
        for c in &self.centers {
            let d2: f64 = q.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            let e = inv * d2;
            max = max.max(e);
            exps.push(e);
        }
        let sum: f64 = exps.iter().map(|&e| libm::exp(e - max)).sum();
        max + libm::log(sum)
            - libm::log(self.centers.len() as f64)
            - 0.5 * D * libm::log(2.0 * PI * self.bandwidth * self.bandwidth)
    }
}

/// `P(z)` of the fitted mixture; underflows to 0 far from the data, use
/// [`ParzenModel::log_density`] for ratios.
pub fn parzen_density(model: &ParzenModel, z: &LatentVector) -> f64 {
    libm::exp(model.log_density(z))
}

/// Diagonal Gaussian proposal `Q` and envelope constant `M` with `M Q >= P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalModel {
    pub mean: [f64; LATENT_DIM],
    pub variance: [f64; LATENT_DIM],
    pub log_m: f64,
}

/// Sample moments of `latents`; `M = 1.5 max_i P(z_i) / Q(z_i)`, never
/// below 1.5.
pub fn fit_proposal(latents: &[LatentVector], parzen: &ParzenModel) -> Result<ProposalModel> {
    if latents.len() < 2 {
        return Err(Error::TooFewLatents(latents.len()));
    }
    let (mean, variance) = moments(latents);
    if let Some(d) = variance.iter().position(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::DegenerateVariance(d));
    }
    let mut p = ProposalModel {
        mean,
        variance,
        log_m: 0.0,
    };
    let max_ratio = latents
        .iter()
        .map(|z| parzen.log_density(z) - p.log_density(z))
        .fold(f64::NEG_INFINITY, f64::max);
    p.log_m = libm::log(ENVELOPE_FACTOR) + max_ratio.max(0.0);
    Ok(p)
}

impl ProposalModel {
    pub fn m(&self) -> f64 {
        libm::exp(self.log_m)
    }

    pub fn log_density(&self, z: &LatentVector) -> f64 {
        let mut acc = -0.5 * D * libm::log(2.0 * PI);
        for ((&v, &m), &s2) in z.0.iter().zip(&self.mean).zip(&self.variance) {
            let d = v as f64 - m;
            acc -= 0.5 * (libm::log(s2) + d * d / s2);
        }
        acc
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> LatentVector {
        let mut z = LatentVector::ZERO;
        for l in 0..LATENT_DIM {
            let e: f64 = StandardNormal.sample(rng);
            z[l] = (self.mean[l] + libm::sqrt(self.variance[l]) * e) as f32;
        }
        z
    }
}

/// Candidate generator of the sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal<'a> {
    /// Diagonal Gaussian with envelope `M`.
    Gaussian(&'a ProposalModel),
    /// The Parzen mixture itself (`Q = P`, `M = 1`): every draw passes the
    /// density test and only the anatomical indicator rejects.
    Mixture,
}

/// How candidates are proposed when building an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    #[default]
    Mixture,
    Gaussian,
}

/// Knobs of the sampling loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Candidates passing the density test are validated in batches this size.
    pub batch: usize,
    /// Draws per acceptance-rate window.
    pub window: u64,
    /// Abort when a full window accepts less than this fraction.
    pub min_acceptance: f64,
    /// Refit `M` when a window's envelope violation rate exceeds this.
    pub max_violation_rate: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            batch: 64,
            window: 100_000,
            min_acceptance: 1e-4,
            max_violation_rate: 0.01,
        }
    }
}

/// Counters of one sampling run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleStats {
    pub draws: u64,
    pub accepted: u64,
    pub envelope_violations: u64,
    /// Filled in by callers that own a clock.
    pub wall_seconds: f64,
    pub refits: u32,
    pub final_log_m: f64,
}

impl SampleStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.accepted as f64 / self.draws as f64
        }
    }

    pub fn merge(&mut self, other: &SampleStats) {
        self.draws += other.draws;
        self.accepted += other.accepted;
        self.envelope_violations += other.envelope_violations;
        self.wall_seconds = self.wall_seconds.max(other.wall_seconds);
        self.refits += other.refits;
        self.final_log_m = self.final_log_m.max(other.final_log_m);
    }
}

/// Anatomical indicator over a batch of candidates.
pub trait Validity {
    fn validate(&mut self, zs: &[LatentVector]) -> Result<Vec<bool>>;
}

impl<F: FnMut(&[LatentVector]) -> Result<Vec<bool>>> Validity for F {
    fn validate(&mut self, zs: &[LatentVector]) -> Result<Vec<bool>> {
        self(zs)
    }
}

/// `is_valid(decode(z))` under `th`.
pub struct DecoderValidity<'a> {
    pub model: &'a VaeModel<f32>,
    pub thresholds: &'a Thresholds,
}

impl Validity for DecoderValidity<'_> {
    fn validate(&mut self, zs: &[LatentVector]) -> Result<Vec<bool>> {
        Ok(self
            .model
            .decode_batch(zs)?
            .iter()
            .map(|m| is_valid(m, self.thresholds))
            .collect())
    }
}

/// Draws until `n_target` candidates satisfy
/// `log u < log 1(dec z) + log P(z) - log M - log Q(z)`.
///
/// The density test runs first so only candidates that could be accepted
/// are decoded. Draws whose ratio exceeds 1 count as envelope violations
/// and are clamped; a window with too many of them raises `M` to
/// [`ENVELOPE_FACTOR`] times the largest ratio seen.
pub fn rejection_sample<V: Validity + ?Sized, G: Rng + ?Sized>(
    n_target: usize,
    parzen: &ParzenModel,
    proposal: Proposal<'_>,
    validity: &mut V,
    config: &SamplerConfig,
    rng: &mut G,
) -> Result<(Vec<LatentVector>, SampleStats)> {
    let mut out = Vec::with_capacity(n_target);
    let mut log_m = match proposal {
        Proposal::Gaussian(q) => q.log_m,
        Proposal::Mixture => 0.0,
    };
    let mut stats = SampleStats::default();
    let (mut win_draws, mut win_accepts, mut win_violations) = (0u64, 0u64, 0u64);
    let mut win_max_ratio = f64::NEG_INFINITY;
    let batch = config.batch.max(1);
    let mut pending: Vec<LatentVector> = Vec::with_capacity(batch);
    while out.len() < n_target {
        // Collect candidates that pass the density test.
        while pending.len() < batch.min(n_target - out.len()) && win_draws < config.window {
            let (z, log_ratio) = match proposal {
                Proposal::Gaussian(q) => {
                    let z = q.sample(rng);
                    (z, parzen.log_density(&z) - q.log_density(&z))
                }
                Proposal::Mixture => (parzen.sample(rng), 0.0),
            };
            let u: f64 = rng.random();
            win_draws += 1;
            stats.draws += 1;
            win_max_ratio = win_max_ratio.max(log_ratio);
            let mut log_accept = log_ratio - log_m;
            if log_accept > 0.0 {
                stats.envelope_violations += 1;
                win_violations += 1;
                log_accept = 0.0;
            }
            if libm::log(u) < log_accept {
                pending.push(z);
            }
        }
        if !pending.is_empty() {
            let ok = validity.validate(&pending)?;
            for (z, v) in pending.drain(..).zip(ok) {
                if v && out.len() < n_target {
                    out.push(z);
                    win_accepts += 1;
                    stats.accepted += 1;
                }
            }
        }
        if win_draws >= config.window {
            let rate = win_accepts as f64 / win_draws as f64;
            if rate < config.min_acceptance {
                return Err(Error::AcceptanceCollapse {
                    draws: stats.draws,
                    rate,
                });
            }
            if win_violations as f64 / win_draws as f64 > config.max_violation_rate {
                log_m = log_m.max(libm::log(ENVELOPE_FACTOR) + win_max_ratio);
                stats.refits += 1;
            }
            win_draws = 0;
            win_accepts = 0;
            win_violations = 0;
            win_max_ratio = f64::NEG_INFINITY;
        }
    }
    stats.final_log_m = log_m;
    Ok((out, stats))
}

/// Independent generator for sampling stream `stream` of a run seeded `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Share of `n` assigned to each of `streams` streams, earlier streams first.
pub fn split_target(n: usize, streams: usize) -> Vec<usize> {
    let streams = streams.max(1);
    (0..streams)
        .map(|s| n / streams + usize::from(s < n % streams))
        .collect()
}

/// Runs one [`rejection_sample`] per stream and concatenates the results in
/// stream order, so the output depends on `seed` and `streams` only.
pub fn rejection_sample_streams<V: Validity + ?Sized>(
    n_target: usize,
    parzen: &ParzenModel,
    proposal: Proposal<'_>,
    validity: &mut V,
    config: &SamplerConfig,
    seed: u64,
    streams: usize,
) -> Result<(Vec<LatentVector>, SampleStats)> {
    let mut all = Vec::with_capacity(n_target);
    let mut stats = SampleStats::default();
    for (s, share) in split_target(n_target, streams).into_iter().enumerate() {
        let mut rng = stream_rng(seed, s as u64);
        let (zs, st) = rejection_sample(share, parzen, proposal, validity, config, &mut rng)?;
        all.extend(zs);
        stats.merge(&st);
    }
    Ok((all, stats))
}

/// Fitted sampler plus the corpus latents that seeded it.
#[derive(Debug, Clone)]
pub struct AugmentBasis {
    /// Posterior means of the (registered) corpus.
    pub corpus_latents: Vec<LatentVector>,
    /// Corpus latents whose decoding passes the checks.
    pub valid_corpus_latents: Vec<LatentVector>,
    pub parzen: ParzenModel,
    pub proposal: ProposalModel,
}

impl AugmentBasis {
    pub fn proposal_for(&self, kind: ProposalKind) -> Proposal<'_> {
        match kind {
            ProposalKind::Mixture => Proposal::Mixture,
            ProposalKind::Gaussian => Proposal::Gaussian(&self.proposal),
        }
    }
}

/// Encodes the corpus and fits the Parzen density and the proposal.
pub fn fit_basis(corpus: &[SegMap], model: &VaeModel<f32>, th: &Thresholds) -> Result<AugmentBasis> {
    let mut corpus_latents = Vec::with_capacity(corpus.len());
    for chunk in corpus.chunks(64) {
        let refs: Vec<&SegMap> = chunk.iter().collect();
        corpus_latents.extend(model.encode_batch(&refs)?.into_iter().map(|e| e.mu));
    }
    let mut valid_corpus_latents = Vec::new();
    for chunk in corpus_latents.chunks(64) {
        let ok = DecoderValidity {
            model,
            thresholds: th,
        }
        .validate(chunk)?;
        valid_corpus_latents.extend(chunk.iter().zip(ok).filter(|(_, v)| *v).map(|(z, _)| *z));
    }
    let parzen = fit_parzen(&corpus_latents)?;
    let proposal = fit_proposal(&corpus_latents, &parzen)?;
    Ok(AugmentBasis {
        corpus_latents,
        valid_corpus_latents,
        parzen,
        proposal,
    })
}

/// Valid corpus latents followed by rejection samples, at least `n_target`
/// vectors in total.
#[allow(clippy::too_many_arguments)]
pub fn build_index(
    corpus: &[SegMap],
    model: &VaeModel<f32>,
    th: &Thresholds,
    n_target: usize,
    kind: ProposalKind,
    config: &SamplerConfig,
    seed: u64,
    streams: usize,
) -> Result<(LatentIndex, SampleStats)> {
    let basis = fit_basis(corpus, model, th)?;
    let needed = n_target.saturating_sub(basis.valid_corpus_latents.len());
    let (samples, stats) = rejection_sample_streams(
        needed,
        &basis.parzen,
        basis.proposal_for(kind),
        &mut DecoderValidity {
            model,
            thresholds: th,
        },
        config,
        seed,
        streams,
    )?;
    let mut all = basis.valid_corpus_latents;
    all.extend(samples);
    Ok((LatentIndex::bulk_load(&all)?, stats))
}

/// Always-true indicator, for checking the sampler against the bare density.
pub fn accept_all(zs: &[LatentVector]) -> Result<Vec<bool>> {
    Ok(vec![true; zs.len()])
}
