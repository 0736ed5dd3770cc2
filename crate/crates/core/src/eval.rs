//! Overlap and boundary metrics, ejection fraction and the latent
//! interpolation study.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anatomy::{evaluate_anatomy, is_valid, Thresholds};
use crate::error::{Error, Result};
use crate::grid::{Class, Mask, N8};
use crate::latent::LatentVector;
use crate::segmap::{Phase, SegMap};
use crate::vae::VaeModel;

/// Typical short-axis slice spacing, used when a volume carries none.
pub const DEFAULT_SLICE_THICKNESS_MM: f64 = 10.0;

fn same_shape(a: &Mask, b: &Mask) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::SizeMismatch {
            expected: a.rows() * a.cols(),
            actual: b.rows() * b.cols(),
        });
    }
    Ok(())
}

/// `2|A n B| / (|A| + |B|)`, 1 when both masks are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    same_shape(a, b)?;
    let (mut inter, mut total) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += usize::from(x && y);
        total += usize::from(x) + usize::from(y);
    }
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

/// Mask pixels with at least one 8-neighbour outside the mask (the grid
/// border counts as outside).
pub fn boundary(mask: &Mask) -> Mask {
    Mask::from_fn(mask.rows(), mask.cols(), |r, c| {
        mask.get(r, c)
            && N8
                .iter()
                .any(|&(dr, dc)| !mask.get_signed(r as isize + dr, c as isize + dc))
    })
}

/// Directed Hausdorff distance `sup_a inf_b |a - b|`, squared, with early
/// exit once a point cannot raise the running maximum.
fn directed_sq(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mut worst = 0.0f64;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            let d = (p[0] - q[0]) * (p[0] - q[0])
                + (p[1] - q[1]) * (p[1] - q[1])
                + (p[2] - q[2]) * (p[2] - q[2]);
            if d < best {
                best = d;
                if best <= worst {
                    break;
                }
            }
        }
        worst = worst.max(best);
    }
    worst
}

fn boundary_points(mask: &Mask, spacing: (f64, f64), z: f64, out: &mut Vec<[f64; 3]>) {
    out.extend(
        boundary(mask)
            .pixels()
            .map(|(r, c)| [r as f64 * spacing.0, c as f64 * spacing.1, z]),
    );
}

fn symmetric(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedHausdorff);
    }
    Ok(libm::sqrt(directed_sq(a, b).max(directed_sq(b, a))))
}

/// Symmetric Hausdorff distance in millimetres between the boundary pixel
/// centres of two masks.
pub fn hausdorff(a: &Mask, b: &Mask, spacing_mm: (f64, f64)) -> Result<f64> {
    same_shape(a, b)?;
    let (mut pa, mut pb) = (Vec::new(), Vec::new());
    boundary_points(a, spacing_mm, 0.0, &mut pa);
    boundary_points(b, spacing_mm, 0.0, &mut pb);
    symmetric(&pa, &pb)
}

/// Hausdorff distance over slice stacks: per-slice boundaries placed
/// `slice_thickness_mm` apart.
pub fn hausdorff_3d(
    a: &[Mask],
    b: &[Mask],
    spacing_mm: (f64, f64),
    slice_thickness_mm: f64,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut pa, mut pb) = (Vec::new(), Vec::new());
    for (i, (ma, mb)) in a.iter().zip(b).enumerate() {
        same_shape(ma, mb)?;
        let z = i as f64 * slice_thickness_mm;
        boundary_points(ma, spacing_mm, z, &mut pa);
        boundary_points(mb, spacing_mm, z, &mut pb);
    }
    symmetric(&pa, &pb)
}

/// Class volume in millilitres: pixel count times pixel area times slice
/// thickness, summed over slices.
pub fn volume_ml(slices: &[SegMap], class: Class, slice_thickness_mm: f64) -> f64 {
    slices
        .iter()
        .map(|m| m.count(class) as f64 * m.spacing_mm.0 * m.spacing_mm.1 * slice_thickness_mm)
        .sum::<f64>()
        / 1000.0
}

/// `100 (EDV - ESV) / EDV` for `class`.
pub fn ejection_fraction(
    ed: &[SegMap],
    es: &[SegMap],
    class: Class,
    slice_thickness_mm: f64,
) -> Result<f64> {
    if ed.is_empty() || es.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let edv = volume_ml(ed, class, slice_thickness_mm);
    if edv.is_nan() || edv <= 0.0 {
        return Err(Error::ZeroVolume);
    }
    let esv = volume_ml(es, class, slice_thickness_mm);
    Ok(100.0 * (edv - esv) / edv)
}

/// Outcome of [`interpolation_study`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub pairs: usize,
    pub steps: usize,
    pub decoded: usize,
    pub invalid: usize,
    pub percent_invalid: f64,
}

/// Picks `pairs` random map pairs, interpolates `steps` codes from the first
/// mean (inclusive) towards the second (exclusive), decodes them and counts
/// anatomically invalid results.
pub fn interpolation_study<G: Rng + ?Sized>(
    model: &VaeModel<f32>,
    corpus: &[SegMap],
    th: &Thresholds,
    pairs: usize,
    steps: usize,
    rng: &mut G,
) -> Result<StudyResult> {
    if corpus.is_empty() {
        return Err(Error::CorpusTooSmall(0));
    }
    let mut invalid = 0usize;
    let mut decoded = 0usize;
    let mut codes = Vec::with_capacity(steps);
    for _ in 0..pairs {
        let i = rng.random_range(0..corpus.len());
        let j = rng.random_range(0..corpus.len());
        let ends = model.encode_batch(&[&corpus[i], &corpus[j]])?;
        let (a, b) = (ends[0].mu, ends[1].mu);
        codes.clear();
        codes.extend((0..steps).map(|k| interpolate(&a, &b, k as f64 / steps as f64)));
        for m in model.decode_batch(&codes)? {
            decoded += 1;
            invalid += usize::from(!is_valid(&m, th));
        }
    }
    Ok(StudyResult {
        pairs,
        steps,
        decoded,
        invalid,
        percent_invalid: if decoded == 0 {
            0.0
        } else {
            100.0 * invalid as f64 / decoded as f64
        },
    })
}

fn interpolate(a: &LatentVector, b: &LatentVector, t: f64) -> LatentVector {
    let mut z = *a;
    for l in 0..z.0.len() {
        z[l] = (a[l] as f64 + t * (b[l] as f64 - a[l] as f64)) as f32;
    }
    z
}

/// Metrics of one predicted slice against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceEval {
    pub index: usize,
    /// LV, MYO, RV.
    pub dice: [f64; 3],
    /// LV, MYO, RV; `None` when either side lacks the structure.
    pub hausdorff_mm: [Option<f64>; 3],
    pub valid: bool,
    pub failed_checks: usize,
}

/// Corpus-level aggregate of [`SliceEval`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub slices: Vec<SliceEval>,
    pub mean_dice: [f64; 3],
    pub mean_hausdorff_mm: [Option<f64>; 3],
    /// Slices failing at least one anatomical check.
    pub anatomical_errors: usize,
    /// |EF(pred) - EF(gt)| for LV and RV, when both phases are present.
    pub ef_error: Option<[f64; 2]>,
}

/// Order in which per-class metrics are reported.
pub const EVAL_CLASSES: [Class; 3] = [Class::Lv, Class::Myo, Class::Rv];

pub fn evaluate_slice(index: usize, pred: &SegMap, gt: &SegMap, th: &Thresholds) -> Result<SliceEval> {
    if pred.size() != gt.size() {
        return Err(Error::SizeMismatch {
            expected: gt.size(),
            actual: pred.size(),
        });
    }
    let mut d = [0.0; 3];
    let mut h = [None; 3];
    for (k, &c) in EVAL_CLASSES.iter().enumerate() {
        let (p, g) = (pred.mask(c), gt.mask(c));
        d[k] = dice(&p, &g)?;
        h[k] = match hausdorff(&p, &g, gt.spacing_mm) {
            Ok(v) => Some(v),
            Err(Error::UndefinedHausdorff) => None,
            Err(e) => return Err(e),
        };
    }
    let report = evaluate_anatomy(pred, th);
    Ok(SliceEval {
        index,
        dice: d,
        hausdorff_mm: h,
        valid: report.is_valid(),
        failed_checks: report.failed().count(),
    })
}

/// Per-slice metrics of `pred` against `gt` (paired by position) and their
/// means. Ejection fraction error is reported when both corpora contain ED
/// and ES slices, treating each corpus as one subject.
pub fn evaluate_corpus(pred: &[SegMap], gt: &[SegMap], th: &Thresholds) -> Result<EvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::CorpusMismatch(format!(
            "{} predicted slices, {} reference slices",
            pred.len(),
            gt.len()
        )));
    }
    let slices = pred
        .iter()
        .zip(gt)
        .enumerate()
        .map(|(i, (p, g))| evaluate_slice(i, p, g, th))
        .collect::<Result<Vec<_>>>()?;
    let n = slices.len().max(1) as f64;
    let mut mean_dice = [0.0; 3];
    let mut mean_hausdorff_mm = [None; 3];
    for k in 0..3 {
        mean_dice[k] = slices.iter().map(|s| s.dice[k]).sum::<f64>() / n;
        let hs: Vec<f64> = slices.iter().filter_map(|s| s.hausdorff_mm[k]).collect();
        if !hs.is_empty() {
            mean_hausdorff_mm[k] = Some(hs.iter().sum::<f64>() / hs.len() as f64);
        }
    }
    let anatomical_errors = slices.iter().filter(|s| !s.valid).count();
    Ok(EvalReport {
        slices,
        mean_dice,
        mean_hausdorff_mm,
        anatomical_errors,
        ef_error: ef_error(pred, gt),
    })
}

fn ef_error(pred: &[SegMap], gt: &[SegMap]) -> Option<[f64; 2]> {
    let phase = |maps: &[SegMap], p: Phase| -> Vec<SegMap> {
        maps.iter().filter(|m| m.phase == p).cloned().collect()
    };
    let mut out = [0.0; 2];
    for (k, class) in [Class::Lv, Class::Rv].into_iter().enumerate() {
        let ef = |maps: &[SegMap]| {
            ejection_fraction(
                &phase(maps, Phase::Ed),
                &phase(maps, Phase::Es),
                class,
                DEFAULT_SLICE_THICKNESS_MM,
            )
        };
        out[k] = libm::fabs(ef(pred).ok()? - ef(gt).ok()?);
    }
    Some(out)
}
