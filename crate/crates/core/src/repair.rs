//! Projection of invalid maps onto the valid latent set: a bisection along
//! the segment from a map's code to its nearest valid neighbour.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::anatomy::{is_valid, Thresholds};
use crate::error::{Error, Result};
use crate::eval::hausdorff;
use crate::grid::Class;
use crate::latent::{LatentVector, LATENT_DIM};
use crate::nn::LatentIndex;
use crate::segmap::{register_clipped, unregister, RegistrationMode, SegMap, Transform};
use crate::vae::VaeModel;

/// Bisection steps after the `alpha = 0` test.
pub const DICHOTOMIC_ITERATIONS: usize = 5;

/// One evaluated point of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub alpha: f64,
    pub valid: bool,
}

/// Outcome of [`bisect_alpha`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearch {
    pub alpha: f64,
    /// Bracket after the last iteration (`hi` is `alpha` unless the
    /// short-circuit fired).
    pub lo: f64,
    pub hi: f64,
    /// Probes in evaluation order; one validity evaluation each.
    pub probes: Vec<Probe>,
}

impl AlphaSearch {
    pub fn evaluations(&self) -> usize {
        self.probes.len()
    }
}

/// Smallest valid `alpha` found by testing 0 and then `iterations` midpoints
/// of `[lo, hi]`, starting from `[0, 1]` with 1 assumed valid.
pub fn bisect_alpha(
    mut validity: impl FnMut(f64) -> Result<bool>,
    iterations: usize,
) -> Result<AlphaSearch> {
    let mut probes = Vec::with_capacity(iterations + 1);
    let valid0 = validity(0.0)?;
    probes.push(Probe {
        alpha: 0.0,
        valid: valid0,
    });
    if valid0 {
        return Ok(AlphaSearch {
            alpha: 0.0,
            lo: 0.0,
            hi: 0.0,
            probes,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let valid = validity(mid)?;
        probes.push(Probe { alpha: mid, valid });
        if valid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The update rule makes `hi` the smallest valid probe; kept explicit.
    let smallest = probes
        .iter()
        .filter(|p| p.valid)
        .map(|p| p.alpha)
        .fold(hi, f64::min);
    Ok(AlphaSearch {
        alpha: smallest,
        lo,
        hi,
        probes,
    })
}

/// `z + alpha * delta`, exactly `z + delta` at `alpha = 1` when `delta` came
/// from [`offset`].
fn point(z: &LatentVector, anchor: &LatentVector, alpha: f64) -> LatentVector {
    if alpha == 1.0 {
        return *anchor;
    }
    let mut out = *z;
    for l in 0..LATENT_DIM {
        out[l] = (z[l] as f64 + alpha * (anchor[l] as f64 - z[l] as f64)) as f32;
    }
    out
}

fn offset(z: &LatentVector, anchor: &LatentVector) -> LatentVector {
    let mut d = LatentVector::ZERO;
    for l in 0..LATENT_DIM {
        d[l] = anchor[l] - z[l];
    }
    d
}

/// Bisection along `delta` under a predicate over latent vectors. The
/// anchor `z + delta` is assumed valid and never evaluated here.
pub fn dichotomic_alpha(
    z: &LatentVector,
    delta: &LatentVector,
    mut validity: impl FnMut(&LatentVector) -> Result<bool>,
    iterations: usize,
) -> Result<AlphaSearch> {
    let mut anchor = *z;
    for l in 0..LATENT_DIM {
        anchor[l] = z[l] + delta[l];
    }
    bisect_alpha(|a| validity(&point(z, &anchor, a)), iterations)
}

/// Everything about one repaired slice.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairResult {
    pub output: SegMap,
    pub alpha: f64,
    /// Posterior mean of the registered input; `None` for valid inputs,
    /// which are returned without encoding.
    pub z: Option<LatentVector>,
    pub z_n1: Option<LatentVector>,
    pub delta: Option<LatentVector>,
    pub was_valid_input: bool,
    pub decoder_calls: usize,
    pub transform: Transform,
    pub probes: Vec<Probe>,
    /// Largest per-class Hausdorff distance between input and output.
    pub hd_change_mm: Option<f64>,
}

/// Largest per-structure Hausdorff distance between two maps, over the
/// structures both contain.
pub fn max_structure_hausdorff(a: &SegMap, b: &SegMap) -> Option<f64> {
    Class::STRUCTURES
        .iter()
        .filter_map(|&c| hausdorff(&a.mask(c), &b.mask(c), a.spacing_mm).ok())
        .reduce(f64::max)
}

/// Repairs one slice. Valid inputs come back untouched; otherwise the
/// registered map is encoded, moved towards its nearest index neighbour by
/// the smallest valid `alpha`, decoded and mapped back to the input frame.
/// If the decoded shape does not survive the way back (content leaving the
/// grid or, with rotation, resampling breaking a check), larger valid
/// `alpha`s and finally the neighbour itself are tried. Input pixels that
/// registration would push off the grid are dropped before encoding.
pub fn repair_map(
    map: &SegMap,
    model: &VaeModel<f32>,
    index: &LatentIndex,
    th: &Thresholds,
    mode: RegistrationMode,
) -> Result<RepairResult> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if map.size() != model.arch().grid {
        return Err(Error::SizeMismatch {
            expected: model.arch().grid,
            actual: map.size(),
        });
    }
    if is_valid(map, th) {
        return Ok(RepairResult {
            output: map.clone(),
            alpha: 0.0,
            z: None,
            z_n1: None,
            delta: None,
            was_valid_input: true,
            decoder_calls: 0,
            transform: Transform::IDENTITY,
            probes: Vec::new(),
            hd_change_mm: Some(0.0),
        });
    }
    let (registered, transform) = register_clipped(map, mode);
    let z = model.encode(&registered)?.mu;
    let n1 = index.nearest(&z)?;
    let anchor = n1.vector;
    let delta = offset(&z, &anchor);

    let mut decoded: Vec<(f64, SegMap)> = Vec::new();
    let search = bisect_alpha(
        |a| {
            let m = model.decode(&point(&z, &anchor, a))?;
            let ok = is_valid(&m, th);
            decoded.push((a, m));
            Ok(ok)
        },
        DICHOTOMIC_ITERATIONS,
    )?;
    let mut decoder_calls = search.evaluations();

    // Candidate alphas in increasing order: valid probes, then the anchor.
    let mut candidates: Vec<f64> = search
        .probes
        .iter()
        .filter(|p| p.valid && p.alpha >= search.alpha)
        .map(|p| p.alpha)
        .collect();
    candidates.sort_by(f64::total_cmp);
    if candidates.last() != Some(&1.0) {
        candidates.push(1.0);
    }
    for alpha in candidates {
        let shape = match decoded.iter().find(|(a, _)| *a == alpha) {
            Some((_, m)) => m.clone(),
            None => {
                decoder_calls += 1;
                let m = model.decode(&anchor)?;
                if !is_valid(&m, th) {
                    return Err(Error::InvalidAnchor);
                }
                m
            }
        };
        let Ok(back) = unregister(&shape, &transform) else {
            continue;
        };
        let output = back.with_metadata_of(map);
        if !is_valid(&output, th) {
            continue;
        }
        return Ok(RepairResult {
            hd_change_mm: max_structure_hausdorff(map, &output),
            output,
            alpha,
            z: Some(z),
            z_n1: Some(anchor),
            delta: Some(delta),
            was_valid_input: false,
            decoder_calls,
            transform,
            probes: search.probes,
        });
    }
    Err(Error::Unrepresentable)
}

/// Aggregate of [`repair_volume`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VolumeSummary {
    pub slices: usize,
    pub repaired: usize,
    /// Mean `alpha` over repaired slices.
    pub mean_alpha: Option<f64>,
    /// Mean input-to-output Hausdorff distance over repaired slices.
    pub mean_hd_change_mm: Option<f64>,
}

pub fn summarize(results: &[RepairResult]) -> VolumeSummary {
    let repaired: Vec<&RepairResult> = results.iter().filter(|r| !r.was_valid_input).collect();
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    VolumeSummary {
        slices: results.len(),
        repaired: repaired.len(),
        mean_alpha: mean(repaired.iter().map(|r| r.alpha).collect()),
        mean_hd_change_mm: mean(repaired.iter().filter_map(|r| r.hd_change_mm).collect()),
    }
}

/// [`repair_map`] on each slice, in order.
pub fn repair_volume(
    volume: &[SegMap],
    model: &VaeModel<f32>,
    index: &LatentIndex,
    th: &Thresholds,
    mode: RegistrationMode,
) -> Result<(Vec<RepairResult>, VolumeSummary)> {
    let results = volume
        .iter()
        .map(|m| repair_map(m, model, index, th, mode))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&results);
    Ok((results, summary))
}
