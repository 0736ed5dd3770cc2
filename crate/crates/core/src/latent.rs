use core::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the latent space.
pub const LATENT_DIM: usize = 32;

/// A point in the 32-dimensional latent space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(pub [f32; LATENT_DIM]);

impl LatentVector {
    pub const ZERO: LatentVector = LatentVector([0.0; LATENT_DIM]);

    pub fn from_slice(values: &[f32]) -> Result<Self> {
        let arr: [f32; LATENT_DIM] = values.try_into().map_err(|_| Error::SizeMismatch {
            expected: LATENT_DIM,
            actual: values.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("latent vector"))
        }
    }

    pub fn squared_distance(&self, other: &LatentVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum()
    }

    /// `self + alpha * (other - self)` evaluated per component.
    pub fn lerp(&self, other: &LatentVector, alpha: f32) -> LatentVector {
        let mut out = *self;
        for (o, (&a, &b)) in out.0.iter_mut().zip(self.0.iter().zip(&other.0)) {
            *o = a + alpha * (b - a);
        }
        out
    }
}

impl Default for LatentVector {
    fn default() -> Self {
        Self::ZERO
    }
}

impl Index<usize> for LatentVector {
    type Output = f32;
    fn index(&self, i: usize) -> &f32 {
        &self.0[i]
    }
}

impl IndexMut<usize> for LatentVector {
    fn index_mut(&mut self, i: usize) -> &mut f32 {
        &mut self.0[i]
    }
}

impl Add for LatentVector {
    type Output = LatentVector;
    fn add(mut self, rhs: LatentVector) -> LatentVector {
        self.0.iter_mut().zip(rhs.0).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for LatentVector {
    type Output = LatentVector;
    fn sub(mut self, rhs: LatentVector) -> LatentVector {
        self.0.iter_mut().zip(rhs.0).for_each(|(a, b)| *a -= b);
        self
    }
}

impl Mul<f32> for LatentVector {
    type Output = LatentVector;
    fn mul(mut self, rhs: f32) -> LatentVector {
        self.0.iter_mut().for_each(|a| *a *= rhs);
        self
    }
}
