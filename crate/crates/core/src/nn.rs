//! Exact nearest-neighbour search over a dense store of latent vectors.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::latent::{LatentVector, LATENT_DIM};

/// Candidates whose single-precision distance lies within this relative
/// margin of the best are re-ranked in double precision.
pub const RERANK_MARGIN: f32 = 1e-4;

/// Immutable row-major `N x 32` store; ids are insertion positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentIndex {
    data: Vec<f32>,
}

/// Result of a nearest-neighbour query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub vector: LatentVector,
    /// Squared Euclidean distance, evaluated in double precision.
    pub squared_distance: f64,
}

impl LatentIndex {
    pub fn bulk_load(vectors: &[LatentVector]) -> Result<Self> {
        let mut data = Vec::with_capacity(vectors.len() * LATENT_DIM);
        for v in vectors {
            data.extend_from_slice(v.as_slice());
        }
        Self::from_flat(data)
    }

    /// Takes ownership of a flat `N * 32` buffer.
    pub fn from_flat(data: Vec<f32>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if !data.len().is_multiple_of(LATENT_DIM) {
            return Err(Error::SizeMismatch {
                expected: (data.len() / LATENT_DIM + 1) * LATENT_DIM,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("index vector"));
        }
        Ok(Self { data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / LATENT_DIM
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn vector(&self, id: usize) -> LatentVector {
        LatentVector(
            self.data[id * LATENT_DIM..(id + 1) * LATENT_DIM]
                .try_into()
                .expect("row width"),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = LatentVector> + '_ {
        self.data.chunks_exact(LATENT_DIM).map(|row| LatentVector(row.try_into().expect("row width")))
    }

    /// Exact argmin of the squared distance to `z`; ties go to the lowest id.
    pub fn nearest(&self, z: &LatentVector) -> Result<Neighbor> {
        z.ensure_finite()?;
        let q = &z.0;
        let mut best = f32::INFINITY;
        let mut candidates: Vec<(usize, f32)> = Vec::new();
        for (id, row) in self.data.chunks_exact(LATENT_DIM).enumerate() {
            let d = squared_distance_f32(q, row.try_into().expect("row width"));
            if d <= best * (1.0 + RERANK_MARGIN) {
                if d < best {
                    best = d;
                    let limit = best * (1.0 + RERANK_MARGIN);
                    candidates.retain(|&(_, c)| c <= limit);
                }
                candidates.push((id, d));
            }
        }
        let mut winner = (usize::MAX, f64::INFINITY);
        for &(id, _) in &candidates {
            let d = self.vector(id).squared_distance(z);
            if d < winner.1 || (d == winner.1 && id < winner.0) {
                winner = (id, d);
            }
        }
        Ok(Neighbor {
            id: winner.0,
            vector: self.vector(winner.0),
            squared_distance: winner.1,
        })
    }
}

/// Eight independent lanes so the loop vectorizes without reassociation.
#[inline]
fn squared_distance_f32(q: &[f32; LATENT_DIM], v: &[f32; LATENT_DIM]) -> f32 {
    let mut acc = [0.0f32; 8];
    for j in 0..LATENT_DIM / 8 {
        for k in 0..8 {
            let d = q[j * 8 + k] - v[j * 8 + k];
            acc[k] += d * d;
        }
    }
    let a = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (a[0] + a[2]) + (a[1] + a[3])
}
