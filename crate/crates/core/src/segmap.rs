//! Segmentation maps and their runtime registration.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Class, Mask};

/// Cardiac phase of a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Ed,
    Es,
    #[default]
    None,
}

/// An `n x n` grid of class labels plus slice metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMap {
    size: usize,
    labels: Vec<u8>,
    pub spacing_mm: (f64, f64),
    pub slice_index: u32,
    pub num_slices: u32,
    pub phase: Phase,
}

impl SegMap {
    /// All-background map with unit spacing, single slice.
    pub fn empty(size: usize) -> Self {
        Self {
            size,
            labels: vec![0; size * size],
            spacing_mm: (1.0, 1.0),
            slice_index: 0,
            num_slices: 1,
            phase: Phase::None,
        }
    }

    /// Builds a map from row-major labels; every label must be a class id.
    pub fn from_labels(size: usize, labels: Vec<u8>) -> Result<Self> {
        if size == 0 || labels.len() != size * size {
            return Err(Error::SizeMismatch {
                expected: size * size,
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 3) {
            return Err(Error::LabelOutOfRange(bad));
        }
        Ok(Self {
            labels,
            ..Self::empty(size)
        })
    }

    pub fn with_slice(mut self, slice_index: u32, num_slices: u32) -> Result<Self> {
        if num_slices == 0 || slice_index >= num_slices {
            return Err(Error::SliceIndex {
                index: slice_index,
                count: num_slices,
            });
        }
        self.slice_index = slice_index;
        self.num_slices = num_slices;
        Ok(self)
    }

    pub fn with_spacing(mut self, spacing_mm: (f64, f64)) -> Self {
        self.spacing_mm = spacing_mm;
        self
    }

    /// Copies spacing, slice position and phase from `other`.
    pub fn with_metadata_of(mut self, other: &SegMap) -> Self {
        self.spacing_mm = other.spacing_mm;
        self.slice_index = other.slice_index;
        self.num_slices = other.num_slices;
        self.phase = other.phase;
        self
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    /// Same metadata, new labels.
    pub(crate) fn with_labels_unchecked(&self, labels: Vec<u8>) -> Self {
        debug_assert_eq!(labels.len(), self.size * self.size);
        Self {
            size: self.size,
            labels,
            spacing_mm: self.spacing_mm,
            slice_index: self.slice_index,
            num_slices: self.num_slices,
            phase: self.phase,
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Class {
        Class::from_label(self.labels[r * self.size + c]).expect("labels validated on construction")
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, class: Class) {
        self.labels[r * self.size + c] = class.label();
    }

    pub fn mask(&self, class: Class) -> Mask {
        let l = class.label();
        Mask::from_vec(
            self.size,
            self.size,
            self.labels.iter().map(|&v| v == l).collect(),
        )
    }

    pub fn contains(&self, class: Class) -> bool {
        let l = class.label();
        self.labels.contains(&l)
    }

    pub fn count(&self, class: Class) -> usize {
        let l = class.label();
        self.labels.iter().filter(|&&v| v == l).count()
    }

    /// Normalized position of the slice in the stack, in [0, 1].
    pub fn slice_position(&self) -> f64 {
        if self.num_slices <= 1 {
            0.0
        } else {
            self.slice_index as f64 / (self.num_slices - 1) as f64
        }
    }
}

/// Rigid transform applied by [`register`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Transform {
    /// Integer (row, col) translation.
    pub shift: (i32, i32),
    /// Counter-clockwise rotation about the grid centre, in degrees.
    pub rotation_deg: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        shift: (0, 0),
        rotation_deg: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        self.shift == (0, 0) && self.rotation_deg == 0.0
    }
}

/// How maps are brought into the canonical frame before encoding.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum RegistrationMode {
    /// Integer translation of the LV centroid to the grid centre.
    #[default]
    Translation,
    /// Translation followed by a rotation putting the RV centroid at
    /// `canonical_deg` (counter-clockwise from the +column axis) around the
    /// LV centroid. 180 puts the RV due left.
    TranslationRotation { canonical_deg: f64 },
}

impl RegistrationMode {
    pub const DEFAULT_CANONICAL_DEG: f64 = 180.0;

    pub fn rotation() -> Self {
        RegistrationMode::TranslationRotation {
            canonical_deg: Self::DEFAULT_CANONICAL_DEG,
        }
    }
}

/// Centre pixel of an `n x n` grid.
#[inline]
pub fn grid_center(size: usize) -> usize {
    size / 2
}

/// Moves the map so the rounded LV centroid sits at the grid centre and,
/// in rotation mode, turns it so the RV lies at the canonical azimuth.
///
/// Maps without LV pass through with the identity transform. Translation
/// never drops labelled pixels: if any would leave the grid, this errors.
pub fn register(map: &SegMap, mode: RegistrationMode) -> Result<(SegMap, Transform)> {
    register_with(map, mode, false)
}

/// [`register`] that drops pixels pushed off the grid instead of failing.
/// Used for encoding inputs that are about to be replaced anyway.
pub fn register_clipped(map: &SegMap, mode: RegistrationMode) -> (SegMap, Transform) {
    register_with(map, mode, true).expect("clipped translation cannot fail")
}

fn register_with(map: &SegMap, mode: RegistrationMode, clip: bool) -> Result<(SegMap, Transform)> {
    let Some((cr, cc)) = map.mask(Class::Lv).centroid() else {
        return Ok((map.clone(), Transform::IDENTITY));
    };
    let center = grid_center(map.size()) as i64;
    let shift = (
        (center - libm::round(cr) as i64) as i32,
        (center - libm::round(cc) as i64) as i32,
    );
    let translated = if clip {
        translate_clipped(map, shift).0
    } else {
        translate(map, shift)?
    };

    let rotation_deg = match mode {
        RegistrationMode::Translation => 0.0,
        RegistrationMode::TranslationRotation { canonical_deg } => {
            match (
                translated.mask(Class::Lv).centroid(),
                translated.mask(Class::Rv).centroid(),
            ) {
                (Some(lv), Some(rv)) => {
                    let azimuth = libm::atan2(-(rv.0 - lv.0), rv.1 - lv.1).to_degrees();
                    normalize_deg(canonical_deg - azimuth)
                }
                _ => 0.0,
            }
        }
    };
    let out = if rotation_deg == 0.0 {
        translated
    } else {
        rotate(&translated, rotation_deg)
    };
    Ok((
        out,
        Transform {
            shift,
            rotation_deg,
        },
    ))
}

/// Inverse of [`register`]: undoes the rotation (nearest-neighbour) and
/// then the translation. Errors if the inverse translation would push
/// labelled pixels outside the grid.
pub fn unregister(map: &SegMap, t: &Transform) -> Result<SegMap> {
    let unrotated = if t.rotation_deg == 0.0 {
        map.clone()
    } else {
        rotate(map, -t.rotation_deg)
    };
    translate(&unrotated, (-t.shift.0, -t.shift.1))
}

fn normalize_deg(mut deg: f64) -> f64 {
    while deg > 180.0 {
        deg -= 360.0;
    }
    while deg <= -180.0 {
        deg += 360.0;
    }
    deg
}

/// Integer translation; errors when a non-background pixel would fall off.
pub fn translate(map: &SegMap, shift: (i32, i32)) -> Result<SegMap> {
    match translate_clipped(map, shift) {
        (out, 0) => Ok(out),
        (_, lost) => Err(Error::ContentOutOfBounds { lost }),
    }
}

/// Integer translation keeping what stays on the grid; also returns the
/// number of labelled pixels lost.
pub fn translate_clipped(map: &SegMap, shift: (i32, i32)) -> (SegMap, usize) {
    if shift == (0, 0) {
        return (map.clone(), 0);
    }
    let n = map.size() as i64;
    let mut out = vec![0u8; map.labels().len()];
    let mut lost = 0usize;
    for (i, &l) in map.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let r = (i as i64) / n + shift.0 as i64;
        let c = (i as i64) % n + shift.1 as i64;
        if r < 0 || c < 0 || r >= n || c >= n {
            lost += 1;
        } else {
            out[(r * n + c) as usize] = l;
        }
    }
    (map.with_labels_unchecked(out), lost)
}

/// Counter-clockwise rotation about the grid centre with nearest-neighbour
/// resampling. Content rotated past the border is dropped.
pub fn rotate(map: &SegMap, deg: f64) -> SegMap {
    let n = map.size();
    let center = grid_center(n) as f64;
    let (s, c) = libm::sincos(deg.to_radians());
    let mut out = vec![0u8; n * n];
    for r in 0..n {
        for col in 0..n {
            // Output pixel in (x right, y up) coordinates about the centre.
            let x = col as f64 - center;
            let y = center - r as f64;
            // Sample the source at R(-deg) applied to the output position.
            let sx = c * x + s * y;
            let sy = -s * x + c * y;
            let src_c = libm::round(sx + center) as i64;
            let src_r = libm::round(center - sy) as i64;
            if src_r >= 0 && src_c >= 0 && (src_r as usize) < n && (src_c as usize) < n {
                out[r * n + col] = map.labels()[src_r as usize * n + src_c as usize];
            }
        }
    }
    map.with_labels_unchecked(out)
}
