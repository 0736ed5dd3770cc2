use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

use super::components::{
    connected_components, count_holes, count_holes_excluding, holes_between, touches, Connectivity,
};
use super::shape::{circularity, convexity_ratio};
use crate::error::{Error, Result};
use crate::grid::{Class, Mask};
use crate::segmap::SegMap;

/// Default relative margin below the corpus minimum used by calibration.
pub const CALIBRATION_MARGIN: f64 = 0.05;

/// The sixteen checks, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckKind {
    HoleInLv,
    HoleInRv,
    HoleInMyo,
    HoleBetweenLvMyo,
    HoleBetweenRvMyo,
    MultipleLv,
    MultipleRv,
    MultipleMyo,
    RvDisconnectedFromMyo,
    LvTouchesRv,
    LvTouchesBg,
    ConcavityLv,
    ConcavityRv,
    ConcavityMyo,
    CircularityLv,
    CircularityMyo,
}

impl CheckKind {
    pub const ALL: [CheckKind; 16] = [
        CheckKind::HoleInLv,
        CheckKind::HoleInRv,
        CheckKind::HoleInMyo,
        CheckKind::HoleBetweenLvMyo,
        CheckKind::HoleBetweenRvMyo,
        CheckKind::MultipleLv,
        CheckKind::MultipleRv,
        CheckKind::MultipleMyo,
        CheckKind::RvDisconnectedFromMyo,
        CheckKind::LvTouchesRv,
        CheckKind::LvTouchesBg,
        CheckKind::ConcavityLv,
        CheckKind::ConcavityRv,
        CheckKind::ConcavityMyo,
        CheckKind::CircularityLv,
        CheckKind::CircularityMyo,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            CheckKind::HoleInLv => "hole_in_lv",
            CheckKind::HoleInRv => "hole_in_rv",
            CheckKind::HoleInMyo => "hole_in_myo",
            CheckKind::HoleBetweenLvMyo => "hole_between_lv_myo",
            CheckKind::HoleBetweenRvMyo => "hole_between_rv_myo",
            CheckKind::MultipleLv => "multiple_lv",
            CheckKind::MultipleRv => "multiple_rv",
            CheckKind::MultipleMyo => "multiple_myo",
            CheckKind::RvDisconnectedFromMyo => "rv_disconnected_from_myo",
            CheckKind::LvTouchesRv => "lv_touches_rv",
            CheckKind::LvTouchesBg => "lv_touches_bg",
            CheckKind::ConcavityLv => "concavity_lv",
            CheckKind::ConcavityRv => "concavity_rv",
            CheckKind::ConcavityMyo => "concavity_myo",
            CheckKind::CircularityLv => "circularity_lv",
            CheckKind::CircularityMyo => "circularity_myo",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    const fn index(self) -> usize {
        self as usize
    }
}

/// Outcome of one check; shape checks carry the measured ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub value: Option<f64>,
}

impl Check {
    const PASS: Check = Check {
        passed: true,
        value: None,
    };

    fn flag(passed: bool) -> Self {
        Check {
            passed,
            value: None,
        }
    }
}

/// All sixteen checks of one map.
#[derive(Debug, Clone, PartialEq)]
pub struct AnatomyReport {
    checks: [Check; 16],
}

impl AnatomyReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, kind: CheckKind) -> Check {
        self.checks[kind.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (CheckKind, Check)> + '_ {
        CheckKind::ALL.into_iter().zip(self.checks.iter().copied())
    }

    pub fn failed(&self) -> impl Iterator<Item = CheckKind> + '_ {
        self.iter().filter(|(_, c)| !c.passed).map(|(k, _)| k)
    }
}

struct ChecksMap<'a>(&'a AnatomyReport);

impl Serialize for ChecksMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(16))?;
        for (kind, check) in self.0.iter() {
            map.serialize_entry(kind.name(), &check)?;
        }
        map.end()
    }
}

impl Serialize for AnatomyReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("AnatomyReport", 2)?;
        s.serialize_field("valid", &self.is_valid())?;
        s.serialize_field("checks", &ChecksMap(self))?;
        s.end()
    }
}

/// Lower bounds for the shape ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub concavity_lv: f64,
    pub concavity_rv: f64,
    pub concavity_myo: f64,
    pub circularity_lv: f64,
    pub circularity_myo: f64,
}

impl Thresholds {
    /// Only the topological checks can fail.
    pub const STRUCTURAL: Thresholds = Thresholds {
        concavity_lv: 0.0,
        concavity_rv: 0.0,
        concavity_myo: 0.0,
        circularity_lv: 0.0,
        circularity_myo: 0.0,
    };

    /// Nothing can pass a shape check (ratios are never above 1 here).
    pub const IMPOSSIBLE: Thresholds = Thresholds {
        concavity_lv: 1.0 + f64::EPSILON,
        concavity_rv: 1.0 + f64::EPSILON,
        concavity_myo: 1.0 + f64::EPSILON,
        circularity_lv: 1.0 + f64::EPSILON,
        circularity_myo: 1.0 + f64::EPSILON,
    };

    fn values(&self) -> [f64; 5] {
        [
            self.concavity_lv,
            self.concavity_rv,
            self.concavity_myo,
            self.circularity_lv,
            self.circularity_myo,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values().iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(())
        } else {
            Err(Error::Config("thresholds must lie in [0, 1]".into()))
        }
    }
}

/// Shape measures of one map; `None` where the class is absent.
struct ShapeMeasures {
    concavity_lv: Option<f64>,
    concavity_rv: Option<f64>,
    concavity_myo: Option<f64>,
    circularity_lv: Option<f64>,
    circularity_myo: Option<f64>,
}

struct Masks {
    bg: Mask,
    rv: Mask,
    myo: Mask,
    lv: Mask,
}

impl Masks {
    fn of(map: &SegMap) -> Self {
        Self {
            bg: map.mask(Class::Background),
            rv: map.mask(Class::Rv),
            myo: map.mask(Class::Myo),
            lv: map.mask(Class::Lv),
        }
    }

    fn shape_measures(&self) -> ShapeMeasures {
        let present = |m: &Mask| !m.is_empty();
        // The myocardium is measured on its outer silhouette.
        let silhouette = self.myo.union(&self.lv);
        ShapeMeasures {
            concavity_lv: present(&self.lv).then(|| convexity_ratio(&self.lv).unwrap()),
            concavity_rv: present(&self.rv).then(|| convexity_ratio(&self.rv).unwrap()),
            concavity_myo: present(&self.myo).then(|| convexity_ratio(&silhouette).unwrap()),
            circularity_lv: present(&self.lv).then(|| circularity(&self.lv).unwrap()),
            circularity_myo: present(&self.myo).then(|| circularity(&silhouette).unwrap()),
        }
    }
}

fn ratio_check(value: Option<f64>, min: f64) -> Check {
    match value {
        Some(v) => Check {
            passed: v >= min,
            value: Some(v),
        },
        None => Check::PASS,
    }
}

fn single_component(mask: &Mask) -> bool {
    connected_components(mask, Connectivity::Eight).count <= 1
}

/// Runs all sixteen checks. Checks about an absent class pass vacuously;
/// `lv_touches_bg` needs an LV and `rv_disconnected_from_myo` needs both
/// the RV and the myocardium.
pub fn evaluate_anatomy(map: &SegMap, th: &Thresholds) -> AnatomyReport {
    let m = Masks::of(map);
    let shapes = m.shape_measures();
    let (has_lv, has_rv, has_myo) = (!m.lv.is_empty(), !m.rv.is_empty(), !m.myo.is_empty());

    let mut checks = [Check::PASS; 16];
    let mut put = |kind: CheckKind, check: Check| checks[kind.index()] = check;

    put(CheckKind::HoleInLv, Check::flag(count_holes(&m.lv) == 0));
    put(CheckKind::HoleInRv, Check::flag(count_holes(&m.rv) == 0));
    put(
        CheckKind::HoleInMyo,
        Check::flag(count_holes_excluding(&m.myo, &m.lv) == 0),
    );
    put(
        CheckKind::HoleBetweenLvMyo,
        Check::flag(holes_between(&m.lv, &m.myo) == 0),
    );
    put(
        CheckKind::HoleBetweenRvMyo,
        Check::flag(holes_between(&m.rv, &m.myo) == 0),
    );
    put(CheckKind::MultipleLv, Check::flag(single_component(&m.lv)));
    put(CheckKind::MultipleRv, Check::flag(single_component(&m.rv)));
    put(CheckKind::MultipleMyo, Check::flag(single_component(&m.myo)));
    if has_rv && has_myo {
        put(
            CheckKind::RvDisconnectedFromMyo,
            Check::flag(touches(&m.rv, &m.myo)),
        );
    }
    if has_lv && has_rv {
        put(CheckKind::LvTouchesRv, Check::flag(!touches(&m.lv, &m.rv)));
    }
    if has_lv {
        put(CheckKind::LvTouchesBg, Check::flag(!touches(&m.lv, &m.bg)));
    }
    put(
        CheckKind::ConcavityLv,
        ratio_check(shapes.concavity_lv, th.concavity_lv),
    );
    put(
        CheckKind::ConcavityRv,
        ratio_check(shapes.concavity_rv, th.concavity_rv),
    );
    put(
        CheckKind::ConcavityMyo,
        ratio_check(shapes.concavity_myo, th.concavity_myo),
    );
    put(
        CheckKind::CircularityLv,
        ratio_check(shapes.circularity_lv, th.circularity_lv),
    );
    put(
        CheckKind::CircularityMyo,
        ratio_check(shapes.circularity_myo, th.circularity_myo),
    );
    AnatomyReport { checks }
}

/// The validity indicator: true iff all sixteen checks pass.
pub fn is_valid(map: &SegMap, th: &Thresholds) -> bool {
    evaluate_anatomy(map, th).is_valid()
}

/// [`calibrate_thresholds_with_margin`] with the default 5% margin.
pub fn calibrate_thresholds<'a>(corpus: impl IntoIterator<Item = &'a SegMap>) -> Result<Thresholds> {
    calibrate_thresholds_with_margin(corpus, CALIBRATION_MARGIN)
}

/// Each threshold is the corpus minimum of its measure times
/// `1 - margin`. A class never observed gets threshold 0.
pub fn calibrate_thresholds_with_margin<'a>(
    corpus: impl IntoIterator<Item = &'a SegMap>,
    margin: f64,
) -> Result<Thresholds> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::Config("calibration margin must lie in [0, 1)".into()));
    }
    let mut mins = [f64::INFINITY; 5];
    let mut seen = 0usize;
    for map in corpus {
        seen += 1;
        let s = Masks::of(map).shape_measures();
        let values = [
            s.concavity_lv,
            s.concavity_rv,
            s.concavity_myo,
            s.circularity_lv,
            s.circularity_myo,
        ];
        for (min, v) in mins.iter_mut().zip(values) {
            if let Some(v) = v {
                *min = min.min(v);
            }
        }
    }
    if seen == 0 {
        return Err(Error::EmptyCorpus);
    }
    let t = |min: f64| {
        if min.is_finite() {
            min * (1.0 - margin)
        } else {
            0.0
        }
    };
    Ok(Thresholds {
        concavity_lv: t(mins[0]),
        concavity_rv: t(mins[1]),
        concavity_myo: t(mins[2]),
        circularity_lv: t(mins[3]),
        circularity_myo: t(mins[4]),
    })
}
