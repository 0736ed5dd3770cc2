//! Convolution lowering and activations over `[channel][batch][row][col]`
//! tensors. All convolutions are 3x3 with padding 1.

use super::real::Real;

/// Geometry of a 3x3, padding-1 convolution from a `big x big` grid to a
/// `small x small` grid (`small = big / stride`).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub batch: usize,
    pub big: usize,
    pub small: usize,
    pub stride: usize,
}

impl Geometry {
    pub fn col_rows(&self) -> usize {
        self.channels * 9
    }

    pub fn col_cols(&self) -> usize {
        self.batch * self.small * self.small
    }

    pub fn big_len(&self) -> usize {
        self.channels * self.batch * self.big * self.big
    }
}

/// `col[(c, ky, kx)][(b, oy, ox)] = x[c][b][oy*s + ky - 1][ox*s + kx - 1]`,
/// zero outside the grid.
pub(crate) fn im2col<R: Real>(g: &Geometry, x: &[R], col: &mut [R]) {
    debug_assert_eq!(x.len(), g.big_len());
    debug_assert_eq!(col.len(), g.col_rows() * g.col_cols());
    let (big, small, s) = (g.big as isize, g.small, g.stride as isize);
    let plane = g.small * g.small;
    let ncols = g.col_cols();
    for c in 0..g.channels {
        for ky in 0..3isize {
            for kx in 0..3isize {
                let row = (c * 9 + (ky * 3 + kx) as usize) * ncols;
                for b in 0..g.batch {
                    let src = &x[(c * g.batch + b) * g.big * g.big..][..g.big * g.big];
                    let dst = &mut col[row + b * plane..][..plane];
                    for oy in 0..small {
                        let iy = oy as isize * s + ky - 1;
                        let out_row = &mut dst[oy * small..][..small];
                        if iy < 0 || iy >= big {
                            out_row.fill(R::zero());
                            continue;
                        }
                        let src_row = &src[iy as usize * g.big..][..g.big];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = ox as isize * s + kx - 1;
                            *o = if ix < 0 || ix >= big {
                                R::zero()
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back onto `x` (overwritten).
pub(crate) fn col2im<R: Real>(g: &Geometry, col: &[R], x: &mut [R]) {
    debug_assert_eq!(x.len(), g.big_len());
    debug_assert_eq!(col.len(), g.col_rows() * g.col_cols());
    x.fill(R::zero());
    let (big, small, s) = (g.big as isize, g.small, g.stride as isize);
    let plane = g.small * g.small;
    let ncols = g.col_cols();
    for c in 0..g.channels {
        for ky in 0..3isize {
            for kx in 0..3isize {
                let row = (c * 9 + (ky * 3 + kx) as usize) * ncols;
                for b in 0..g.batch {
                    let dst = &mut x[(c * g.batch + b) * g.big * g.big..][..g.big * g.big];
                    let src = &col[row + b * plane..][..plane];
                    for oy in 0..small {
                        let iy = oy as isize * s + ky - 1;
                        if iy < 0 || iy >= big {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * g.big..][..g.big];
                        let src_row = &src[oy * small..][..small];
                        for (ox, &v) in src_row.iter().enumerate() {
                            let ix = ox as isize * s + kx - 1;
                            if ix >= 0 && ix < big {
                                dst_row[ix as usize] = dst_row[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adds `bias[c]` to every element of channel `c` (`per` elements each).
pub(crate) fn add_bias<R: Real>(y: &mut [R], bias: &[R], per: usize) {
    for (chunk, &b) in y.chunks_exact_mut(per).zip(bias) {
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

/// Sums each channel of `dy` into `db` (accumulating).
pub(crate) fn bias_grad<R: Real>(dy: &[R], db: &mut [R], per: usize) {
    for (chunk, g) in dy.chunks_exact(per).zip(db.iter_mut()) {
        *g = chunk.iter().fold(*g, |acc, &v| acc + v);
    }
}

#[inline]
pub(crate) fn elu<R: Real>(x: R) -> R {
    if x > R::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// ELU derivative expressed through the pre-activation.
#[inline]
pub(crate) fn elu_grad<R: Real>(pre: R) -> R {
    if pre > R::zero() {
        R::one()
    } else {
        pre.exp()
    }
}

pub(crate) fn elu_inplace<R: Real>(v: &mut [R]) {
    v.iter_mut().for_each(|x| *x = elu(*x));
}

/// `[c][b][s]` to `[c * S + s][b]` (feature-major, batch-minor).
pub(crate) fn flatten<R: Real>(x: &[R], channels: usize, batch: usize, plane: usize, out: &mut [R]) {
    for c in 0..channels {
        for b in 0..batch {
            for s in 0..plane {
                out[(c * plane + s) * batch + b] = x[(c * batch + b) * plane + s];
            }
        }
    }
}

/// Inverse of [`flatten`].
pub(crate) fn unflatten<R: Real>(
    x: &[R],
    channels: usize,
    batch: usize,
    plane: usize,
    out: &mut [R],
) {
    for c in 0..channels {
        for b in 0..batch {
            for s in 0..plane {
                out[(c * batch + b) * plane + s] = x[(c * plane + s) * batch + b];
            }
        }
    }
}
