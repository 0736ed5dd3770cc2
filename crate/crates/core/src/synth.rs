//! Seeded synthetic short-axis shapes and targeted corruptions.
//!
//! A valid shape is an LV disk, a concentric myocardial annulus and an RV
//! annular sector hugging the myocardium's outer wall. Each corruption kind
//! breaks one family of anatomical checks with documented pixel semantics.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anatomy::{is_valid, Thresholds};
use crate::error::{Error, Result};
use crate::grid::{Class, Mask, N8};
use crate::segmap::{grid_center, Phase, SegMap};

/// Attempts before [`generate_valid`] gives up.
pub const MAX_ATTEMPTS: usize = 100;
/// Minimum free border around a shape, in pixels.
pub const MARGIN_PX: f64 = 2.0;

/// Concrete parameters of one synthetic slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub grid: usize,
    pub lv_radius_px: f64,
    pub myo_thickness_px: f64,
    pub rv_angular_extent_deg: f64,
    pub rv_thickness_px: f64,
    /// Azimuth of the RV mid-line around the LV centre (180 = due left).
    pub rv_azimuth_deg: f64,
    /// Uniform jitter amplitude of the shape centre.
    pub center_jitter_px: f64,
    /// Fractional LV radius shrink from base (slice 0) to apex.
    pub slice_taper: f64,
    pub slice_index: u32,
    pub num_slices: u32,
    /// Drop the RV on the apex-most slice of stacks with 3+ slices.
    pub apex_without_rv: bool,
    pub spacing_mm: (f64, f64),
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            grid: 64,
            lv_radius_px: 10.0,
            myo_thickness_px: 4.0,
            rv_angular_extent_deg: 130.0,
            rv_thickness_px: 6.0,
            rv_azimuth_deg: 180.0,
            center_jitter_px: 4.0,
            slice_taper: 0.3,
            slice_index: 0,
            num_slices: 1,
            apex_without_rv: true,
            spacing_mm: (1.4, 1.4),
        }
    }
}

impl ShapeParams {
    fn slice_position(&self) -> f64 {
        if self.num_slices <= 1 {
            0.0
        } else {
            self.slice_index as f64 / (self.num_slices - 1) as f64
        }
    }

    fn lv_radius_at_slice(&self) -> f64 {
        self.lv_radius_px * (1.0 - self.slice_taper * self.slice_position())
    }

    /// True for the designated apical slice that carries no RV.
    pub fn is_apical_without_rv(&self) -> bool {
        self.apex_without_rv && self.num_slices >= 3 && self.slice_index + 1 == self.num_slices
    }

    fn outer_radius(&self) -> f64 {
        let rv = if self.is_apical_without_rv() {
            0.0
        } else {
            self.rv_thickness_px
        };
        self.lv_radius_at_slice() + self.myo_thickness_px + rv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::ShapeParams(msg.into()));
        if self.lv_radius_at_slice() < 2.0
            || self.myo_thickness_px < 2.0
            || self.rv_thickness_px < 2.0
        {
            return bad("radii and thicknesses must be at least 2 px");
        }
        if !(0.0..1.0).contains(&self.slice_taper) {
            return bad("slice_taper must lie in [0, 1)");
        }
        if !(10.0..=300.0).contains(&self.rv_angular_extent_deg) {
            return bad("rv_angular_extent_deg must lie in [10, 300]");
        }
        if self.num_slices == 0 || self.slice_index >= self.num_slices {
            return bad("slice_index must be below num_slices");
        }
        let half = self.grid as f64 / 2.0;
        let reach = self.outer_radius() + self.center_jitter_px.abs() + 1.0 + MARGIN_PX;
        if reach > half {
            return Err(Error::ShapeParams(format!(
                "shape reaches {reach:.1} px from the centre of a {} grid",
                self.grid
            )));
        }
        Ok(())
    }
}

fn azimuth_deg(dr: f64, dc: f64) -> f64 {
    libm::atan2(-dr, dc).to_degrees()
}

fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    d.abs()
}

fn rasterize(p: &ShapeParams, center: (f64, f64)) -> SegMap {
    let n = p.grid;
    let r_lv = p.lv_radius_at_slice();
    let r_myo = r_lv + p.myo_thickness_px;
    let r_rv = r_myo + p.rv_thickness_px;
    let with_rv = !p.is_apical_without_rv();
    let mut map = SegMap::empty(n);
    for r in 0..n {
        for c in 0..n {
            let (dr, dc) = (r as f64 - center.0, c as f64 - center.1);
            let d = libm::sqrt(dr * dr + dc * dc);
            let class = if d <= r_lv {
                Class::Lv
            } else if d <= r_myo {
                Class::Myo
            } else if with_rv
                && d <= r_rv
                && angle_diff_deg(azimuth_deg(dr, dc), p.rv_azimuth_deg)
                    <= p.rv_angular_extent_deg / 2.0
            {
                Class::Rv
            } else {
                continue;
            };
            map.set(r, c, class);
        }
    }
    map
}

/// Draws centre jitter and rasterizes until the map passes `th`.
pub fn generate_valid<R: Rng + ?Sized>(
    params: &ShapeParams,
    th: &Thresholds,
    rng: &mut R,
) -> Result<SegMap> {
    params.validate()?;
    let base = grid_center(params.grid) as f64 + 0.5;
    let j = params.center_jitter_px.abs();
    for _ in 0..MAX_ATTEMPTS {
        let (jr, jc) = if j > 0.0 {
            (rng.random_range(-j..=j), rng.random_range(-j..=j))
        } else {
            (0.0, 0.0)
        };
        let map = rasterize(params, (base + jr, base + jc))
            .with_slice(params.slice_index, params.num_slices)?
            .with_spacing(params.spacing_mm)
            .with_phase(Phase::Ed);
        if is_valid(&map, th) {
            return Ok(map);
        }
    }
    Err(Error::GeneratorExhausted(MAX_ATTEMPTS))
}

/// Uniform ranges from which corpus shapes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsDistribution {
    pub grid: usize,
    pub lv_radius_px: (f64, f64),
    pub myo_thickness_px: (f64, f64),
    pub rv_angular_extent_deg: (f64, f64),
    pub rv_thickness_px: (f64, f64),
    pub rv_azimuth_deg: (f64, f64),
    pub center_jitter_px: f64,
    pub slice_taper: f64,
    pub num_slices: (u32, u32),
    pub spacing_mm: (f64, f64),
}

impl Default for ParamsDistribution {
    fn default() -> Self {
        Self {
            grid: 64,
            lv_radius_px: (8.0, 11.0),
            myo_thickness_px: (3.0, 5.0),
            rv_angular_extent_deg: (100.0, 150.0),
            rv_thickness_px: (4.5, 7.0),
            rv_azimuth_deg: (165.0, 195.0),
            center_jitter_px: 6.0,
            slice_taper: 0.3,
            num_slices: (6, 10),
            spacing_mm: (1.4, 1.4),
        }
    }
}

impl ParamsDistribution {
    /// Same ranges scaled to a 256 grid.
    pub fn paper_scale() -> Self {
        let d = Self::default();
        let s = 4.0;
        let scale = |(a, b): (f64, f64)| (a * s, b * s);
        Self {
            grid: 256,
            lv_radius_px: scale(d.lv_radius_px),
            myo_thickness_px: scale(d.myo_thickness_px),
            rv_thickness_px: scale(d.rv_thickness_px),
            center_jitter_px: d.center_jitter_px * s,
            spacing_mm: (d.spacing_mm.0 / s, d.spacing_mm.1 / s),
            ..d
        }
    }

    fn draw(range: (f64, f64), rng: &mut (impl Rng + ?Sized)) -> f64 {
        if range.1 > range.0 {
            rng.random_range(range.0..range.1)
        } else {
            range.0
        }
    }

    /// Draws the stack-level parameters (everything but the slice index).
    pub fn sample_stack<R: Rng + ?Sized>(&self, rng: &mut R) -> ShapeParams {
        let num_slices = if self.num_slices.1 > self.num_slices.0 {
            rng.random_range(self.num_slices.0..=self.num_slices.1)
        } else {
            self.num_slices.0
        };
        ShapeParams {
            grid: self.grid,
            lv_radius_px: Self::draw(self.lv_radius_px, rng),
            myo_thickness_px: Self::draw(self.myo_thickness_px, rng),
            rv_angular_extent_deg: Self::draw(self.rv_angular_extent_deg, rng),
            rv_thickness_px: Self::draw(self.rv_thickness_px, rng),
            rv_azimuth_deg: Self::draw(self.rv_azimuth_deg, rng),
            center_jitter_px: self.center_jitter_px,
            slice_taper: self.slice_taper,
            slice_index: 0,
            num_slices: num_slices.max(1),
            apex_without_rv: true,
            spacing_mm: self.spacing_mm,
        }
    }

    /// Draws one slice: stack parameters plus a uniform slice index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ShapeParams {
        let mut p = self.sample_stack(rng);
        p.slice_index = rng.random_range(0..p.num_slices);
        p
    }
}

/// `n` independent valid slices.
pub fn generate_corpus<R: Rng + ?Sized>(
    n: usize,
    dist: &ParamsDistribution,
    th: &Thresholds,
    rng: &mut R,
) -> Result<Vec<SegMap>> {
    (0..n)
        .map(|_| generate_valid(&dist.sample(rng), th, rng))
        .collect()
}

/// One stack of slices `0..num_slices` sharing shape parameters; the LV
/// shrinks towards the apex by the taper.
pub fn generate_volume<R: Rng + ?Sized>(
    stack: &ShapeParams,
    th: &Thresholds,
    rng: &mut R,
) -> Result<Vec<SegMap>> {
    (0..stack.num_slices)
        .map(|i| {
            let p = ShapeParams {
                slice_index: i,
                ..*stack
            };
            generate_valid(&p, th, rng)
        })
        .collect()
}

/// Corruption families, each aimed at one group of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    HoleLv,
    HoleRv,
    HoleMyo,
    GapLvMyo,
    SplitRv,
    SplitLv,
    MyoBreak,
    LvRvBridge,
    SpuriousBlob,
    ConcaveBite,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 10] = [
        CorruptionKind::HoleLv,
        CorruptionKind::HoleRv,
        CorruptionKind::HoleMyo,
        CorruptionKind::GapLvMyo,
        CorruptionKind::SplitRv,
        CorruptionKind::SplitLv,
        CorruptionKind::MyoBreak,
        CorruptionKind::LvRvBridge,
        CorruptionKind::SpuriousBlob,
        CorruptionKind::ConcaveBite,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub magnitude_px: u32,
    pub rng_seed: u64,
}

/// 8-neighbourhood erosion, `steps` times.
fn erode(mask: &Mask, steps: usize) -> Mask {
    let mut m = mask.clone();
    for _ in 0..steps {
        m = Mask::from_fn(m.rows(), m.cols(), |r, c| {
            m.get(r, c)
                && N8
                    .iter()
                    .all(|&(dr, dc)| m.get_signed(r as isize + dr, c as isize + dc))
        });
    }
    m
}

fn pick<R: Rng + ?Sized>(mask: &Mask, rng: &mut R) -> Option<(usize, usize)> {
    let pts: Vec<_> = mask.pixels().collect();
    (!pts.is_empty()).then(|| pts[rng.random_range(0..pts.len())])
}

fn require(map: &SegMap, class: Class) -> Result<Mask> {
    let m = map.mask(class);
    if m.is_empty() {
        Err(Error::TargetAbsent(class))
    } else {
        Ok(m)
    }
}

/// Square hole of Chebyshev radius up to `(magnitude - 1) / 2` strictly
/// inside `class`, so every hole pixel is 8-surrounded by `class`.
fn punch_hole<R: Rng + ?Sized>(
    map: &SegMap,
    class: Class,
    magnitude: u32,
    rng: &mut R,
) -> Result<SegMap> {
    let mask = require(map, class)?;
    let mut rad = (magnitude.saturating_sub(1) / 2) as usize;
    loop {
        let interior = erode(&mask, rad + 1);
        if let Some((r, c)) = pick(&interior, rng) {
            let mut out = map.clone();
            for rr in r - rad..=r + rad {
                for cc in c - rad..=c + rad {
                    out.set(rr, cc, Class::Background);
                }
            }
            return Ok(out);
        }
        if rad == 0 {
            return Err(Error::CorruptionInfeasible("structure too thin for a hole"));
        }
        rad -= 1;
    }
}

/// Unit direction (row, col) from the LV centroid towards `class`, or a
/// random direction when `class` is absent.
fn direction_to<R: Rng + ?Sized>(map: &SegMap, class: Class, rng: &mut R) -> (f64, f64) {
    let lv = map.mask(Class::Lv).centroid();
    match (lv, map.mask(class).centroid()) {
        (Some(a), Some(b)) if (a.0 - b.0).abs() + (a.1 - b.1).abs() > 1e-9 => {
            let (dr, dc) = (b.0 - a.0, b.1 - a.1);
            let n = libm::sqrt(dr * dr + dc * dc);
            (dr / n, dc / n)
        }
        _ => random_direction(rng),
    }
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let t: f64 = rng.random_range(0.0..core::f64::consts::TAU);
    let (s, c) = libm::sincos(t);
    (s, c)
}

fn rotate_dir((dr, dc): (f64, f64), deg: f64) -> (f64, f64) {
    let (s, c) = libm::sincos(deg.to_radians());
    (c * dr - s * dc, s * dr + c * dc)
}

/// Signed (along, across) coordinates of a pixel relative to a line.
fn line_coords(p: (usize, usize), origin: (f64, f64), dir: (f64, f64)) -> (f64, f64) {
    let (dr, dc) = (p.0 as f64 - origin.0, p.1 as f64 - origin.1);
    (dr * dir.0 + dc * dir.1, dr * dir.1 - dc * dir.0)
}

/// Relabels `from` pixels within `half_width` of the line (or ray when
/// `ray_only`) through `origin` along `dir`.
fn paint_band(
    map: &SegMap,
    origin: (f64, f64),
    dir: (f64, f64),
    half_width: f64,
    ray_only: bool,
    from: Class,
    to: Class,
) -> SegMap {
    let mut out = map.clone();
    let n = map.size();
    for r in 0..n {
        for c in 0..n {
            if map.get(r, c) != from {
                continue;
            }
            let (along, across) = line_coords((r, c), origin, dir);
            if across.abs() <= half_width && (!ray_only || along >= 0.0) {
                out.set(r, c, to);
            }
        }
    }
    out
}

/// Applies one corruption. The result fails at least the targeted check:
/// holes fail `hole_in_*`, `gap_lv_myo` fails `hole_between_lv_myo`,
/// splits fail `multiple_*`, `myo_break` fails `lv_touches_bg`,
/// `lv_rv_bridge` fails `lv_touches_rv`, `spurious_blob` adds a detached
/// myocardium blob (`multiple_myo`) and `concave_bite` carves myocardium
/// into the LV (`concavity_lv`, given a large enough bite).
pub fn corrupt(map: &SegMap, spec: &CorruptionSpec) -> Result<SegMap> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let m = spec.magnitude_px.max(1);
    let half_width = (m as f64 / 2.0).max(1.0);
    match spec.kind {
        CorruptionKind::HoleLv => punch_hole(map, Class::Lv, m, &mut rng),
        CorruptionKind::HoleRv => punch_hole(map, Class::Rv, m, &mut rng),
        CorruptionKind::HoleMyo => punch_hole(map, Class::Myo, m, &mut rng),
        CorruptionKind::GapLvMyo => {
            let lv = require(map, Class::Lv)?;
            require(map, Class::Myo)?;
            // Peel the LV layers in contact with the myocardium.
            let mut out = map.clone();
            for _ in 0..m {
                let lv_now = out.mask(Class::Lv);
                let not_lv = lv_now.complement();
                let ring: Vec<_> = lv_now
                    .pixels()
                    .filter(|&(r, c)| {
                        N8.iter()
                            .any(|&(dr, dc)| not_lv.get_signed(r as isize + dr, c as isize + dc))
                    })
                    .collect();
                if ring.len() == lv_now.count() {
                    break;
                }
                for (r, c) in ring {
                    out.set(r, c, Class::Background);
                }
            }
            if out.count(Class::Lv) == lv.count() {
                return Err(Error::CorruptionInfeasible("LV too small to detach"));
            }
            Ok(out)
        }
        CorruptionKind::SplitRv => {
            require(map, Class::Rv)?;
            let origin = map.mask(Class::Lv).centroid().unwrap_or_else(|| {
                let c = grid_center(map.size()) as f64;
                (c, c)
            });
            let dir = direction_to(map, Class::Rv, &mut rng);
            Ok(paint_band(
                map,
                origin,
                dir,
                half_width,
                true,
                Class::Rv,
                Class::Background,
            ))
        }
        CorruptionKind::SplitLv => {
            let lv = require(map, Class::Lv)?;
            let origin = lv.centroid().expect("non-empty");
            let dir = random_direction(&mut rng);
            Ok(paint_band(map, origin, dir, half_width, false, Class::Lv, Class::Myo))
        }
        CorruptionKind::MyoBreak => {
            let lv = require(map, Class::Lv)?;
            require(map, Class::Myo)?;
            let away = direction_to(map, Class::Rv, &mut rng);
            let turn: f64 = rng.random_range(135.0..225.0);
            let dir = rotate_dir(away, turn);
            let origin = lv.centroid().expect("non-empty");
            Ok(paint_band(map, origin, dir, half_width, true, Class::Myo, Class::Background))
        }
        CorruptionKind::LvRvBridge => {
            let lv = require(map, Class::Lv)?;
            require(map, Class::Rv)?;
            let dir = direction_to(map, Class::Rv, &mut rng);
            let origin = lv.centroid().expect("non-empty");
            Ok(paint_band(map, origin, dir, half_width, true, Class::Myo, Class::Lv))
        }
        CorruptionKind::SpuriousBlob => {
            let rad = (m / 2).max(1) as usize;
            // Candidate centres whose blob and its 1-px ring are background.
            let free = erode(&map.mask(Class::Background), rad + 2);
            let (r, c) =
                pick(&free, &mut rng).ok_or(Error::CorruptionInfeasible("no room for a blob"))?;
            let mut out = map.clone();
            for rr in r - rad..=r + rad {
                for cc in c - rad..=c + rad {
                    out.set(rr, cc, Class::Myo);
                }
            }
            Ok(out)
        }
        CorruptionKind::ConcaveBite => {
            let lv = require(map, Class::Lv)?;
            let origin = lv.centroid().expect("non-empty");
            let radius_lv = libm::sqrt(lv.count() as f64 / core::f64::consts::PI);
            let away = direction_to(map, Class::Rv, &mut rng);
            let turn: f64 = rng.random_range(135.0..225.0);
            let dir = rotate_dir(away, turn);
            let bite = (origin.0 + dir.0 * radius_lv, origin.1 + dir.1 * radius_lv);
            let rad = (m as f64).min(radius_lv);
            let mut out = map.clone();
            for (r, c) in lv.pixels() {
                let (dr, dc) = (r as f64 - bite.0, c as f64 - bite.1);
                if dr * dr + dc * dc <= rad * rad {
                    out.set(r, c, Class::Myo);
                }
            }
            Ok(out)
        }
    }
}

/// A random corruption spec with magnitude in `magnitudes`.
pub fn random_spec<R: Rng + ?Sized>(
    rng: &mut R,
    magnitudes: core::ops::RangeInclusive<u32>,
) -> CorruptionSpec {
    CorruptionSpec {
        kind: CorruptionKind::ALL[rng.random_range(0..CorruptionKind::ALL.len())],
        magnitude_px: rng.random_range(magnitudes),
        rng_seed: rng.random(),
    }
}
