use alloc::vec::Vec;

use super::components::fill_holes;
use crate::error::{Error, Result};
use crate::grid::{Mask, N4};

type Point = (i64, i64);

#[inline]
fn cross(o: Point, a: Point, b: Point) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of integer points by the monotone chain, counter-clockwise
/// in (x, y) = (col, row) order, without collinear vertices.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn inside_hull(hull: &[Point], p: Point) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Area of the filled mask over the area of its convex hull, both counted
/// in pixels. The hull spans the pixel centres and is rasterized back by
/// counting the pixel centres it contains (boundary included), so a filled
/// convex digital shape scores 1.
pub fn convexity_ratio(mask: &Mask) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let filled = fill_holes(mask);
    // Row extremes are enough to span the hull.
    let mut extremes: Vec<Point> = Vec::new();
    for r in 0..filled.rows() {
        let mut first = None;
        let mut last = None;
        for c in 0..filled.cols() {
            if filled.get(r, c) {
                first.get_or_insert(c);
                last = Some(c);
            }
        }
        if let (Some(a), Some(b)) = (first, last) {
            extremes.push((a as i64, r as i64));
            extremes.push((b as i64, r as i64));
        }
    }
    let hull = convex_hull(&extremes);
    let (min_x, max_x) = bounds(extremes.iter().map(|p| p.0));
    let (min_y, max_y) = bounds(extremes.iter().map(|p| p.1));
    let mut hull_area = 0usize;
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            if inside_hull(&hull, (x, y)) {
                hull_area += 1;
            }
        }
    }
    Ok(filled.count() as f64 / hull_area as f64)
}

fn bounds(values: impl Iterator<Item = i64>) -> (i64, i64) {
    values.fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Number of pixel edges separating a set pixel from an unset pixel or the
/// grid border.
pub fn exterior_edge_count(mask: &Mask) -> usize {
    mask.pixels()
        .map(|(r, c)| {
            N4.iter()
                .filter(|&&(dr, dc)| !mask.get_signed(r as isize + dr, c as isize + dc))
                .count()
        })
        .sum()
}

/// `4 pi A / P^2` of the filled silhouette, with `A` the pixel count and
/// `P` the exterior edge count.
pub fn circularity(mask: &Mask) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let filled = fill_holes(mask);
    let area = filled.count() as f64;
    let perimeter = exterior_edge_count(&filled) as f64;
    Ok(4.0 * core::f64::consts::PI * area / (perimeter * perimeter))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(rows: usize, cols: usize, r0: usize, c0: usize, h: usize, w: usize) -> Mask {
        Mask::from_fn(rows, cols, |r, c| {
            r >= r0 && r < r0 + h && c >= c0 && c < c0 + w
        })
    }

    #[test]
    fn filled_rectangle_is_convex() {
        let m = rect(20, 20, 3, 4, 7, 11);
        assert!((convexity_ratio(&m).unwrap() - 1.0).abs() <= 0.02);
    }

    #[test]
    fn single_row_and_pixel_are_convex() {
        assert_eq!(convexity_ratio(&rect(5, 9, 2, 1, 1, 6)).unwrap(), 1.0);
        assert_eq!(convexity_ratio(&rect(5, 9, 2, 1, 1, 1)).unwrap(), 1.0);
    }

    #[test]
    fn hull_drops_collinear_points() {
        let hull = convex_hull(&[(0, 0), (1, 0), (2, 0), (2, 2), (0, 2), (1, 1)]);
        assert_eq!(hull, vec![(0, 0), (2, 0), (2, 2), (0, 2)]);
    }

    #[test]
    fn empty_mask_errors() {
        assert_eq!(convexity_ratio(&Mask::new(4, 4)), Err(Error::EmptyMask));
        assert_eq!(circularity(&Mask::new(4, 4)), Err(Error::EmptyMask));
    }

    #[test]
    fn square_circularity_is_quarter_pi() {
        for s in [3usize, 8, 17] {
            let m = rect(30, 30, 2, 2, s, s);
            let expected = core::f64::consts::PI / 4.0;
            assert!((circularity(&m).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn thin_line_circularity_vanishes() {
        let c10 = circularity(&rect(3, 200, 1, 0, 1, 10)).unwrap();
        let c190 = circularity(&rect(3, 200, 1, 0, 1, 190)).unwrap();
        assert!(c190 < c10);
        assert!(c190 < 0.04);
    }

    #[test]
    fn holes_do_not_change_shape_measures() {
        let solid = rect(12, 12, 2, 2, 8, 8);
        let mut ring = solid.clone();
        ring.set(5, 5, false);
        ring.set(6, 6, false);
        assert_eq!(circularity(&ring), circularity(&solid));
        assert_eq!(convexity_ratio(&ring), convexity_ratio(&solid));
    }
}
