//! Exhaustive search over anchor designs.
//!
//! The space is the cross product of candidate scale sets, stride divisors
//! and per-scale shift counts, filtered by a budget on anchors per
//! sliding-window location. Each design is scored by the mean per-face max
//! IoU over an evaluation corpus; recall@tau is reported alongside.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::anchor_layout::{AnchorLayout, AnchorSpec, ShiftCount};
use crate::dataset::{max_ious, plane_for, FaceRecord};
use crate::error::{Error, Result};
use crate::stats::pairwise_mean;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub base_stride: f64,
    pub ratios: Vec<f64>,
    pub stride_divisors: Vec<u32>,
    pub scale_sets: Vec<Vec<f64>>,
    /// Allowed shift counts per scale; scales not listed only take 0.
    pub shift_options: Vec<(f64, Vec<ShiftCount>)>,
    /// Max anchors per sliding-window location.
    pub budget: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    base_stride: f64,
    #[serde(default = "default_ratios")]
    ratios: Vec<f64>,
    stride_divisors: Vec<u32>,
    scale_sets: Vec<Vec<f64>>,
    #[serde(default)]
    shift_options: BTreeMap<String, Vec<u64>>,
    budget: usize,
}

fn default_ratios() -> Vec<f64> {
    vec![1.0]
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpace::deserialize(deserializer)?;
        let mut shift_options = Vec::new();
        for (key, counts) in raw.shift_options {
            let scale: f64 = key
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("shift key {key:?} is not a scale")))?;
            let counts = counts
                .into_iter()
                .map(ShiftCount::from_count)
                .collect::<Result<Vec<_>>>()
                .map_err(D::Error::custom)?;
            shift_options.push((scale, counts));
        }
        shift_options.sort_by(|a, b| a.0.total_cmp(&b.0));
        let space = SearchSpace {
            base_stride: raw.base_stride,
            ratios: raw.ratios,
            stride_divisors: raw.stride_divisors,
            scale_sets: raw.scale_sets,
            shift_options,
            budget: raw.budget,
        };
        space.validate().map_err(D::Error::custom)?;
        Ok(space)
    }
}

impl Serialize for SearchSpace {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::{SerializeMap, SerializeStruct};
        struct Options<'a>(&'a [(f64, Vec<ShiftCount>)]);
        impl Serialize for Options<'_> {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for (scale, counts) in self.0 {
                    let c: Vec<usize> = counts.iter().map(|n| n.count()).collect();
                    m.serialize_entry(&format!("{scale}"), &c)?;
                }
                m.end()
            }
        }
        let mut st = serializer.serialize_struct("SearchSpace", 6)?;
        st.serialize_field("base_stride", &self.base_stride)?;
        st.serialize_field("ratios", &self.ratios)?;
        st.serialize_field("stride_divisors", &self.stride_divisors)?;
        st.serialize_field("scale_sets", &self.scale_sets)?;
        st.serialize_field("shift_options", &Options(&self.shift_options))?;
        st.serialize_field("budget", &self.budget)?;
        st.end()
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.stride_divisors.is_empty() || self.scale_sets.is_empty() {
            return Err(Error::InvalidParameter(
                "search space needs at least one divisor and one scale set".into(),
            ));
        }
        if self.budget == 0 {
            return Err(Error::InvalidParameter("budget must be >= 1".into()));
        }
        if self.shift_options.iter().any(|(_, c)| c.is_empty()) {
            return Err(Error::InvalidParameter("empty shift option list".into()));
        }
        for &d in &self.stride_divisors {
            for set in &self.scale_sets {
                AnchorSpec::new(set.clone(), self.ratios.clone(), self.base_stride, d)?;
            }
        }
        Ok(())
    }

    fn options_for(&self, scale: f64) -> Vec<ShiftCount> {
        let mut opts = self
            .shift_options
            .iter()
            .find(|(s, _)| *s == scale)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| vec![ShiftCount::None]);
        opts.sort();
        opts.dedup();
        opts
    }
}

/// Every design in the space within budget, in a fixed order: scale set,
/// then divisor (ascending), then shift combination (odometer over scales).
pub fn enumerate_configs(space: &SearchSpace) -> Result<Vec<AnchorSpec>> {
    space.validate()?;
    let mut divisors = space.stride_divisors.clone();
    divisors.sort_unstable();
    divisors.dedup();
    let mut out = Vec::new();
    for set in &space.scale_sets {
        let options: Vec<Vec<ShiftCount>> = set.iter().map(|&s| space.options_for(s)).collect();
        for &div in &divisors {
            let base = AnchorSpec::new(set.clone(), space.ratios.clone(), space.base_stride, div)?;
            let mut digits = vec![0usize; set.len()];
            'odometer: loop {
                let mut spec = base.clone();
                for ((&scale, opts), &d) in set.iter().zip(&options).zip(&digits) {
                    spec = spec.with_shift(scale, opts[d])?;
                }
                if spec.anchors_per_location() <= space.budget {
                    out.push(spec);
                }
                // last scale turns fastest
                let mut k = set.len();
                loop {
                    if k == 0 {
                        break 'odometer;
                    }
                    k -= 1;
                    digits[k] += 1;
                    if digits[k] < options[k].len() {
                        break;
                    }
                    digits[k] = 0;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigScore {
    pub spec: AnchorSpec,
    pub objective: f64,
    pub recall: f64,
    pub anchors_per_location: usize,
}

/// Mean per-face max IoU and recall@tau of one design.
pub fn evaluate_config(spec: &AnchorSpec, faces: &[FaceRecord], tau: f64) -> Result<ConfigScore> {
    if faces.is_empty() {
        return Err(Error::InvalidParameter("no faces to evaluate".into()));
    }
    let (w, h) = plane_for(faces);
    let layout = AnchorLayout::build(spec, w, h)?;
    let boxes: Vec<_> = faces.iter().map(|f| f.bbox).collect();
    let ious = max_ious(&boxes, &layout)?;
    let hits: Vec<f64> = ious.iter().map(|&v| if v >= tau { 1.0 } else { 0.0 }).collect();
    Ok(ConfigScore {
        spec: spec.clone(),
        objective: pairwise_mean(&ious).unwrap_or(0.0),
        recall: pairwise_mean(&hits).unwrap_or(0.0),
        anchors_per_location: spec.anchors_per_location(),
    })
}

/// Ranking order: objective descending, then fewer anchors, then spec JSON.
pub fn rank(scores: &mut [ConfigScore]) {
    scores.sort_by(|a, b| {
        b.objective
            .total_cmp(&a.objective)
            .then(a.anchors_per_location.cmp(&b.anchors_per_location))
            .then_with(|| a.spec.to_json().cmp(&b.spec.to_json()))
    });
}

/// Evaluates every design of the space; the first entry is the recommendation.
pub fn optimize(space: &SearchSpace, faces: &[FaceRecord], tau: f64) -> Result<Vec<ConfigScore>> {
    let configs = enumerate_configs(space)?;
    if configs.is_empty() {
        return Err(Error::EmptySearch);
    }
    let mut scores = configs
        .par_iter()
        .map(|spec| evaluate_config(spec, faces, tau))
        .collect::<Result<Vec<_>>>()?;
    rank(&mut scores);
    Ok(scores)
}
