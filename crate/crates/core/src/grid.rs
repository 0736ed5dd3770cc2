//! Class labels and binary masks over rectangular pixel grids.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segmentation classes with their on-disk label ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    Background = 0,
    Rv = 1,
    Myo = 2,
    Lv = 3,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Background, Class::Rv, Class::Myo, Class::Lv];
    /// The three cardiac structures, in label order.
    pub const STRUCTURES: [Class; 3] = [Class::Rv, Class::Myo, Class::Lv];

    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            0 => Ok(Class::Background),
            1 => Ok(Class::Rv),
            2 => Ok(Class::Myo),
            3 => Ok(Class::Lv),
            other => Err(Error::LabelOutOfRange(other)),
        }
    }

    pub const fn label(self) -> u8 {
        self as u8
    }

    pub const fn name(self) -> &'static str {
        match self {
            Class::Background => "bg",
            Class::Rv => "rv",
            Class::Myo => "myo",
            Class::Lv => "lv",
        }
    }
}

/// Offsets of the 4-neighbourhood.
pub(crate) const N4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
/// Offsets of the 8-neighbourhood.
pub(crate) const N8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// A binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    /// Panics if `bits.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), rows * cols, "mask payload does not match shape");
        Self { rows, cols, bits }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                bits.push(f(r, c));
            }
        }
        Self { rows, cols, bits }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    /// Out-of-grid coordinates read as unset.
    #[inline]
    pub fn get_signed(&self, r: isize, c: isize) -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < self.rows
            && (c as usize) < self.cols
            && self.bits[r as usize * self.cols + c as usize]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Iterator over the coordinates of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / cols, i % cols))
    }

    /// Centroid (row, col) of the set pixels, `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sr, mut sc, mut n) = (0.0f64, 0.0f64, 0usize);
        for (r, c) in self.pixels() {
            sr += r as f64;
            sc += c as f64;
            n += 1;
        }
        (n > 0).then(|| (sr / n as f64, sc / n as f64))
    }
}
