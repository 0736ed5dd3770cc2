//! Brute-force reference implementations on plain `Vec<Vec<bool>>` grids.
//! Shared by the core oracle tests and the acceptance suite.

#![allow(dead_code)]

use anatomy_warden_core::anatomy::{
    connected_components, count_holes, holes_between, touches, Connectivity,
};
use anatomy_warden_core::eval::{dice, hausdorff};
use anatomy_warden_core::Mask;
use rand::Rng;

pub type Grid = Vec<Vec<bool>>;

pub fn to_mask(g: &Grid) -> Mask {
    Mask::from_fn(g.len(), g[0].len(), |r, c| g[r][c])
}

fn neighbours(g: &Grid, r: usize, c: usize, eight: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if (dr, dc) == (0, 0) || (!eight && dr != 0 && dc != 0) {
                continue;
            }
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr >= 0 && nc >= 0 && (nr as usize) < g.len() && (nc as usize) < g[0].len() {
                out.push((nr as usize, nc as usize));
            }
        }
    }
    out
}

/// Flood fill from every unvisited pixel equal to `value`. Returns the
/// component id per pixel (`usize::MAX` elsewhere) and the count.
pub fn flood(g: &Grid, value: bool, eight: bool) -> (Vec<Vec<usize>>, usize) {
    let (rows, cols) = (g.len(), g[0].len());
    let mut id = vec![vec![usize::MAX; cols]; rows];
    let mut n = 0;
    for r in 0..rows {
        for c in 0..cols {
            if g[r][c] != value || id[r][c] != usize::MAX {
                continue;
            }
            let mut stack = vec![(r, c)];
            id[r][c] = n;
            while let Some((pr, pc)) = stack.pop() {
                for (qr, qc) in neighbours(g, pr, pc, eight) {
                    if g[qr][qc] == value && id[qr][qc] == usize::MAX {
                        id[qr][qc] = n;
                        stack.push((qr, qc));
                    }
                }
            }
            n += 1;
        }
    }
    (id, n)
}

/// Enclosed 4-connected background components, as pixel lists.
pub fn enclosed_regions(g: &Grid) -> Vec<Vec<(usize, usize)>> {
    let (id, n) = flood(g, false, false);
    let (rows, cols) = (g.len(), g[0].len());
    let mut regions = vec![Vec::new(); n];
    let mut open = vec![false; n];
    for r in 0..rows {
        for c in 0..cols {
            if id[r][c] == usize::MAX {
                continue;
            }
            regions[id[r][c]].push((r, c));
            if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                open[id[r][c]] = true;
            }
        }
    }
    regions
        .into_iter()
        .zip(open)
        .filter(|(_, o)| !o)
        .map(|(p, _)| p)
        .collect()
}

pub fn holes(g: &Grid) -> usize {
    enclosed_regions(g).len()
}

pub fn holes_between_oracle(a: &Grid, b: &Grid) -> usize {
    let u: Grid = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| *p || *q).collect())
        .collect();
    enclosed_regions(&u)
        .iter()
        .filter(|region| {
            let near = |m: &Grid| {
                region
                    .iter()
                    .any(|&(r, c)| neighbours(m, r, c, true).iter().any(|&(nr, nc)| m[nr][nc]))
            };
            near(a) && near(b)
        })
        .count()
}

pub fn touches_oracle(a: &Grid, b: &Grid) -> bool {
    let pts = |g: &Grid| -> Vec<(i64, i64)> {
        (0..g.len())
            .flat_map(|r| (0..g[0].len()).map(move |c| (r, c)))
            .filter(|&(r, c)| g[r][c])
            .map(|(r, c)| (r as i64, c as i64))
            .collect()
    };
    let (pa, pb) = (pts(a), pts(b));
    pa.iter()
        .any(|p| pb.iter().any(|q| (p.0 - q.0).abs().max((p.1 - q.1).abs()) == 1))
}

pub fn dice_oracle(a: &Grid, b: &Grid) -> f64 {
    let mut both = 0.0;
    let mut sa = 0.0;
    let mut sb = 0.0;
    for r in 0..a.len() {
        for c in 0..a[0].len() {
            if a[r][c] {
                sa += 1.0;
            }
            if b[r][c] {
                sb += 1.0;
            }
            if a[r][c] && b[r][c] {
                both += 1.0;
            }
        }
    }
    if sa + sb == 0.0 {
        1.0
    } else {
        2.0 * both / (sa + sb)
    }
}

/// Boundary pixels: set, with an 8-neighbour unset or off the grid.
pub fn contour(g: &Grid) -> Vec<(f64, f64)> {
    let (rows, cols) = (g.len() as i64, g[0].len() as i64);
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if !g[r as usize][c as usize] {
                continue;
            }
            let edge = (-1..=1).any(|dr: i64| {
                (-1..=1).any(|dc: i64| {
                    let (nr, nc) = (r + dr, c + dc);
                    nr < 0 || nc < 0 || nr >= rows || nc >= cols || !g[nr as usize][nc as usize]
                })
            });
            if edge {
                out.push((r as f64, c as f64));
            }
        }
    }
    out
}

/// Symmetric Hausdorff over contour pixel centres, `None` if either side
/// is empty.
pub fn hausdorff_oracle(a: &Grid, b: &Grid, spacing: (f64, f64)) -> Option<f64> {
    let (ca, cb) = (contour(a), contour(b));
    if ca.is_empty() || cb.is_empty() {
        return None;
    }
    let d = |p: &(f64, f64), q: &(f64, f64)| {
        ((p.0 - q.0) * spacing.0).hypot((p.1 - q.1) * spacing.1)
    };
    let directed = |x: &[(f64, f64)], y: &[(f64, f64)]| {
        x.iter()
            .map(|p| y.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Some(directed(&ca, &cb).max(directed(&cb, &ca)))
}

/// Random grid up to 32x32 with a random fill density; some grids are
/// blobby (thresholded smoothed noise) to produce holes and rings.
pub fn random_grid(rng: &mut impl Rng, rows: usize, cols: usize) -> Grid {
    let p: f64 = rng.random_range(0.05..0.95);
    let noise: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random::<f64>()).collect())
        .collect();
    if rng.random_bool(0.5) {
        return noise.iter().map(|row| row.iter().map(|&x| x < p).collect()).collect();
    }
    // 3x3 box blur of the noise, clipped at the border.
    let mut g = vec![vec![false; cols]; rows];
    for r in 0..rows {
        for c in 0..cols {
            let (mut s, mut k) = (0.0, 0.0);
            for nr in r.saturating_sub(1)..(r + 2).min(rows) {
                for nc in c.saturating_sub(1)..(c + 2).min(cols) {
                    s += noise[nr][nc];
                    k += 1.0;
                }
            }
            g[r][c] = s / k < 0.5 + (p - 0.5) * 0.3;
        }
    }
    g
}

pub fn random_shape(rng: &mut impl Rng) -> (usize, usize) {
    (rng.random_range(1..=32), rng.random_range(1..=32))
}

/// Mismatch descriptions for one pair of grids; empty when everything agrees.
pub fn compare_all(a: &Grid, b: &Grid) -> Vec<String> {
    let (ma, mb) = (to_mask(a), to_mask(b));
    let mut bad = Vec::new();

    for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
        let got = connected_components(&ma, conn);
        let (want, n) = flood(a, true, eight);
        if got.count != n {
            bad.push(format!("{conn:?} count {} vs {n}", got.count));
            continue;
        }
        // Same partition: the id maps must be a bijection.
        let cols = a[0].len();
        let mut fwd = std::collections::HashMap::new();
        let mut rev = std::collections::HashMap::new();
        for r in 0..a.len() {
            for c in 0..cols {
                let (g, w) = (got.labels[r * cols + c], want[r][c]);
                if (g == 0) != (w == usize::MAX) {
                    bad.push(format!("{conn:?} foreground differs at {r},{c}"));
                    break;
                }
                if g != 0 && (*fwd.entry(g).or_insert(w) != w || *rev.entry(w).or_insert(g) != g) {
                    bad.push(format!("{conn:?} partition differs at {r},{c}"));
                }
            }
        }
    }
    if count_holes(&ma) != holes(a) {
        bad.push(format!("holes {} vs {}", count_holes(&ma), holes(a)));
    }
    if holes_between(&ma, &mb) != holes_between_oracle(a, b) {
        bad.push(format!(
            "holes_between {} vs {}",
            holes_between(&ma, &mb),
            holes_between_oracle(a, b)
        ));
    }
    if touches(&ma, &mb) != touches_oracle(a, b) {
        bad.push("touches".into());
    }
    let d = dice(&ma, &mb).unwrap();
    if (d - dice_oracle(a, b)).abs() > 1e-12 {
        bad.push(format!("dice {d} vs {}", dice_oracle(a, b)));
    }
    let spacing = (1.4, 0.9);
    match (hausdorff(&ma, &mb, spacing).ok(), hausdorff_oracle(a, b, spacing)) {
        (Some(x), Some(y)) if (x - y).abs() <= 1e-9 => {}
        (None, None) => {}
        (x, y) => bad.push(format!("hausdorff {x:?} vs {y:?}")),
    }
    bad
}
