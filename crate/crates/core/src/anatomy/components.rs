use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{Mask, N8};

/// Pixel adjacency used for labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Result of [`connected_components`]: `labels[i] == 0` for unset pixels,
/// otherwise the 1-based component id. Ids follow the row-major order of
/// each component's first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<u32>,
    pub count: usize,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // Slot 0 is the background sentinel.
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling.
pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> Components {
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut labels = vec![0u32; rows * cols];
    let mut sets = DisjointSet::new();
    // Already-visited neighbours in raster order.
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
    };

    for r in 0..rows {
        for c in 0..cols {
            if !mask.get(r, c) {
                continue;
            }
            let mut current = 0u32;
            for &(dr, dc) in back {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if !mask.get_signed(nr, nc) {
                    continue;
                }
                let l = labels[nr as usize * cols + nc as usize];
                if current == 0 {
                    current = l;
                } else if l != current {
                    sets.union(current, l);
                }
            }
            if current == 0 {
                current = sets.make();
            }
            labels[r * cols + c] = current;
        }
    }

    // Compact roots to 1..=count in raster order of first appearance.
    let mut remap = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = sets.find(*l);
        if remap[root as usize] == 0 {
            count += 1;
            remap[root as usize] = count;
        }
        *l = remap[root as usize];
    }
    Components {
        labels,
        count: count as usize,
    }
}

/// 4-connected components of the complement, with a flag per component
/// telling whether it reaches the grid border.
fn background_components(mask: &Mask) -> (Components, Vec<bool>) {
    let comps = connected_components(&mask.complement(), Connectivity::Four);
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut touches_border = vec![false; comps.count + 1];
    for r in 0..rows {
        for c in 0..cols {
            if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                touches_border[comps.labels[r * cols + c] as usize] = true;
            }
        }
    }
    (comps, touches_border)
}

/// Number of 4-connected background regions fully enclosed by `mask`.
pub fn count_holes(mask: &Mask) -> usize {
    let (comps, border) = background_components(mask);
    (1..=comps.count).filter(|&k| !border[k]).count()
}

/// Like [`count_holes`], but an enclosed region overlapping `exclude` is not
/// a hole (the LV cavity inside the myocardial ring, for instance).
pub fn count_holes_excluding(mask: &Mask, exclude: &Mask) -> usize {
    let (comps, border) = background_components(mask);
    let mut excluded = vec![false; comps.count + 1];
    for (i, &l) in comps.labels.iter().enumerate() {
        if l != 0 && exclude.bits()[i] {
            excluded[l as usize] = true;
        }
    }
    (1..=comps.count)
        .filter(|&k| !border[k] && !excluded[k])
        .count()
}

/// `mask` with every enclosed background region set.
pub fn fill_holes(mask: &Mask) -> Mask {
    let (comps, border) = background_components(mask);
    let bits = mask
        .bits()
        .iter()
        .zip(&comps.labels)
        .map(|(&set, &l)| set || !border[l as usize])
        .collect();
    Mask::from_vec(mask.rows(), mask.cols(), bits)
}

/// Enclosed background regions of `a ∪ b` that are 8-adjacent to both.
pub fn holes_between(a: &Mask, b: &Mask) -> usize {
    let union = a.union(b);
    let (comps, border) = background_components(&union);
    let mut near_a = vec![false; comps.count + 1];
    let mut near_b = vec![false; comps.count + 1];
    let (rows, cols) = (union.rows(), union.cols());
    for r in 0..rows {
        for c in 0..cols {
            let l = comps.labels[r * cols + c] as usize;
            if l == 0 || border[l] || (near_a[l] && near_b[l]) {
                continue;
            }
            for &(dr, dc) in &N8 {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                near_a[l] |= a.get_signed(nr, nc);
                near_b[l] |= b.get_signed(nr, nc);
            }
        }
    }
    (1..=comps.count)
        .filter(|&k| !border[k] && near_a[k] && near_b[k])
        .count()
}

/// True iff some pixel of `a` has a pixel of `b` in its 8-neighbourhood.
pub fn touches(a: &Mask, b: &Mask) -> bool {
    a.pixels().any(|(r, c)| {
        N8.iter()
            .any(|&(dr, dc)| b.get_signed(r as isize + dr, c as isize + dc))
    })
}
