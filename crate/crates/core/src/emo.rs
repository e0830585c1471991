//! Expected Max Overlapping (EMO) scores.
//!
//! The EMO score of a face is its max IoU over the anchor set, averaged over
//! a uniform distribution of face centers. For an `l x l` face matched to the
//! same-size anchor on a square lattice of stride `s_A`, one quarter period
//! suffices:
//!
//! ```text
//! EMO = (2/s_A)^2 ∫∫_[0, s_A/2]^2 (l-x)(l-y) / (2l^2 - (l-x)(l-y)) dx dy
//! ```
//!
//! [`emo_closed_form`] evaluates that integral with the midpoint rule.
//! [`emo_monte_carlo`] estimates the general definition directly against a
//! full layout, maximizing over every anchor.

use rayon::prelude::*;
use serde::Serialize;

use rand::Rng;

use crate::anchor_layout::{AnchorLayout, AnchorSpec};
use crate::error::{Error, Result};
use crate::geometry::{offset_square_iou_unchecked, RectBox};
use crate::rng;
use crate::stats::{pairwise_sum, Welford};

pub const DEFAULT_QUADRATURE_CELLS: usize = 512;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
pub const MIN_QUADRATURE_CELLS: usize = 16;
pub const MIN_MC_SAMPLES: usize = 1000;

/// Samples per Monte Carlo work item; each item owns one random stream.
const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmoQuery {
    pub face_side: f64,
    pub anchor_stride: f64,
    pub quadrature_cells: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl EmoQuery {
    pub fn new(face_side: f64, anchor_stride: f64) -> Self {
        Self {
            face_side,
            anchor_stride,
            quadrature_cells: DEFAULT_QUADRATURE_CELLS,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }

    pub fn with_cells(mut self, cells: usize) -> Self {
        self.quadrature_cells = cells;
        self
    }

    pub fn with_samples(mut self, samples: usize, seed: u64) -> Self {
        self.mc_samples = samples;
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.face_side.is_finite() && self.face_side > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "face side must be > 0, got {}",
                self.face_side
            )));
        }
        if !(self.anchor_stride.is_finite() && self.anchor_stride > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "anchor stride must be > 0, got {}",
                self.anchor_stride
            )));
        }
        if self.quadrature_cells < MIN_QUADRATURE_CELLS {
            return Err(Error::InvalidParameter(format!(
                "quadrature cells must be >= {MIN_QUADRATURE_CELLS}, got {}",
                self.quadrature_cells
            )));
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "Monte Carlo samples must be >= {MIN_MC_SAMPLES}, got {}",
                self.mc_samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmoMethod {
    ClosedForm,
    MonteCarlo,
}

impl EmoMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EmoMethod::ClosedForm => "closed_form",
            EmoMethod::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmoEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: EmoMethod,
}

/// Midpoint-rule quadrature of the single-period EMO integral.
pub fn emo_closed_form(q: &EmoQuery) -> Result<EmoEstimate> {
    q.validate()?;
    let l = q.face_side;
    let half = 0.5 * q.anchor_stride;
    if half >= l {
        return Err(Error::ClosedFormInvalid {
            side: l,
            half_stride: half,
        });
    }
    let n = q.quadrature_cells;
    let h = half / n as f64;
    let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let rows: Vec<f64> = nodes
        .iter()
        .map(|&y| pairwise_sum(&nodes.iter().map(|&x| offset_square_iou_unchecked(l, x, y)).collect::<Vec<_>>()))
        .collect();
    let value = pairwise_sum(&rows) / (n * n) as f64;
    Ok(EmoEstimate {
        value,
        std_error: 0.0,
        method: EmoMethod::ClosedForm,
    })
}

/// Monte Carlo estimate of the expected max IoU of a `face_w x face_h` face
/// whose center is uniform over one period cell of `layout`.
///
/// The sampled cell is the sliding-window cell nearest the middle of the
/// plane, so edge truncation of the lattice does not bias the estimate on
/// planes a few face sizes wide. Bit-identical for a given seed regardless
/// of the rayon thread count.
pub fn emo_monte_carlo(
    layout: &AnchorLayout,
    face_w: f64,
    face_h: f64,
    samples: usize,
    seed: u64,
) -> Result<EmoEstimate> {
    if layout.anchor_count() == 0 {
        return Err(Error::EmptyLayout);
    }
    if samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo samples must be >= {MIN_MC_SAMPLES}, got {samples}"
        )));
    }
    let (plane_w, plane_h) = layout.plane();
    if !(face_w > 0.0 && face_h > 0.0 && face_w <= plane_w && face_h <= plane_h) {
        return Err(Error::InvalidParameter(format!(
            "face {face_w}x{face_h} does not fit the {plane_w}x{plane_h} plane"
        )));
    }
    let period = layout.stride();
    let g = &layout.groups()[0];
    let x0 = g.center_x((g.cols - 1) / 2);
    let y0 = g.center_y((g.rows - 1) / 2);

    let chunks = samples.div_ceil(MC_CHUNK);
    let partials: Vec<Welford> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k as u64);
            let n = MC_CHUNK.min(samples - k * MC_CHUNK);
            let mut acc = Welford::default();
            for _ in 0..n {
                let cx = x0 + period * rng.random::<f64>();
                let cy = y0 + period * rng.random::<f64>();
                let face = RectBox::from_parts(cx - 0.5 * face_w, cy - 0.5 * face_h, face_w, face_h);
                acc.push(layout.max_iou(&face).iou);
            }
            acc
        })
        .collect();
    let total = partials
        .iter()
        .fold(Welford::default(), |acc, p| acc.merge(p));
    Ok(EmoEstimate {
        value: total.mean(),
        std_error: total.std_error(),
        method: EmoMethod::MonteCarlo,
    })
}

/// Single-scale square lattice of stride `stride` on a plane wide enough for
/// an `l x l` face to see a full lattice neighborhood around the middle cell.
pub fn square_lattice_layout(l: f64, stride: f64) -> Result<AnchorLayout> {
    let spec = AnchorSpec::single_scale(l, stride)?;
    let cells = 2.0 * (l / stride).ceil() + 4.0;
    let side = cells * stride;
    AnchorLayout::build(&spec, side, side)
}

/// Monte Carlo EMO of an `l x l` face against the plain same-scale lattice.
pub fn emo_monte_carlo_square(q: &EmoQuery) -> Result<EmoEstimate> {
    q.validate()?;
    let layout = square_lattice_layout(q.face_side, q.anchor_stride)?;
    emo_monte_carlo(&layout, q.face_side, q.face_side, q.mc_samples, q.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmoTableRow {
    pub scale: f64,
    pub stride: f64,
    pub estimate: Option<EmoEstimate>,
    pub reason: Option<String>,
}

/// Closed-form EMO for every `(scale, stride)` pair, sorted by `(scale, stride)`.
/// Pairs outside the closed-form domain come back without an estimate.
pub fn emo_table(scales: &[f64], strides: &[f64], defaults: &EmoQuery) -> Vec<EmoTableRow> {
    table_with(scales, strides, defaults, emo_closed_form)
}

/// Monte Carlo counterpart of [`emo_table`] using the plain same-scale lattice.
pub fn emo_table_monte_carlo(scales: &[f64], strides: &[f64], defaults: &EmoQuery) -> Vec<EmoTableRow> {
    table_with(scales, strides, defaults, emo_monte_carlo_square)
}

fn table_with(
    scales: &[f64],
    strides: &[f64],
    defaults: &EmoQuery,
    eval: fn(&EmoQuery) -> Result<EmoEstimate>,
) -> Vec<EmoTableRow> {
    let mut scales = scales.to_vec();
    let mut strides = strides.to_vec();
    scales.sort_by(f64::total_cmp);
    strides.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(scales.len() * strides.len());
    for &scale in &scales {
        for &stride in &strides {
            let q = EmoQuery {
                face_side: scale,
                anchor_stride: stride,
                ..defaults.clone()
            };
            let (estimate, reason) = match eval(&q) {
                Ok(e) => (Some(e), None),
                Err(Error::ClosedFormInvalid { .. }) => (None, Some("closed-form invalid".to_string())),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(EmoTableRow {
                scale,
                stride,
                estimate,
                reason,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou_offset_square;

    fn cf(l: f64, s: f64) -> f64 {
        emo_closed_form(&EmoQuery::new(l, s)).unwrap().value
    }

    #[test]
    fn vanishing_stride_limit() {
        // 1 - 4 E[dx] / l to first order, with E[dx] = s/4
        let v = cf(16.0, 16.0 / 256.0);
        assert!(v > 0.99);
        assert!((v - 0.996_10).abs() < 1e-5, "{v}");
    }

    #[test]
    fn larger_faces_score_higher() {
        assert!(cf(32.0, 16.0) > cf(16.0, 16.0));
    }

    #[test]
    fn rejects_stride_beyond_face() {
        let err = emo_closed_form(&EmoQuery::new(16.0, 32.0)).unwrap_err();
        assert!(matches!(err, Error::ClosedFormInvalid { .. }));
        assert!(emo_closed_form(&EmoQuery::new(16.0, 16.0).with_cells(8)).is_err());
        assert!(emo_closed_form(&EmoQuery::new(-1.0, 16.0)).is_err());
    }

    #[test]
    fn quadrature_converged_at_default_cells() {
        for (l, s) in [(16.0, 16.0), (16.0, 30.0), (64.0, 8.0)] {
            let a = emo_closed_form(&EmoQuery::new(l, s)).unwrap().value;
            let b = emo_closed_form(&EmoQuery::new(l, s).with_cells(1024)).unwrap().value;
            assert!((a - b).abs() < 1e-6, "{l} {s}: {a} vs {b}");
        }
    }

    #[test]
    fn bounded_by_worst_offset_and_one() {
        for (l, s) in [(16.0, 4.0), (16.0, 16.0), (32.0, 16.0), (512.0, 16.0), (16.0, 30.0)] {
            let v = cf(l, s);
            let worst = iou_offset_square(l, s / 2.0 - 1e-9, s / 2.0 - 1e-9).unwrap();
            assert!(worst < v && v < 1.0);
        }
    }

    #[test]
    fn table_shapes_and_trends() {
        let d = EmoQuery::new(1.0, 1.0);
        let scales: Vec<f64> = (4..=9).map(|p| f64::from(1u32 << p)).collect();
        let col = emo_table(&scales, &[16.0], &d);
        assert_eq!(col.len(), 6);
        assert!(col.windows(2).all(|w| w[0].estimate.unwrap().value < w[1].estimate.unwrap().value));

        let row = emo_table(&[16.0], &[16.0, 4.0, 8.0], &d);
        let strides: Vec<f64> = row.iter().map(|r| r.stride).collect();
        assert_eq!(strides, vec![4.0, 8.0, 16.0]);
        assert!(row.windows(2).all(|w| w[0].estimate.unwrap().value > w[1].estimate.unwrap().value));

        let bad = emo_table(&[16.0], &[32.0], &d);
        assert_eq!(bad[0].estimate, None);
        assert_eq!(bad[0].reason.as_deref(), Some("closed-form invalid"));
    }

    #[test]
    fn monte_carlo_near_limit_and_seeded() {
        let layout = square_lattice_layout(16.0, 0.16).unwrap();
        let e = emo_monte_carlo(&layout, 16.0, 16.0, 2000, 3).unwrap();
        let exact = cf(16.0, 0.16);
        assert!(e.value > 0.985);
        assert!((e.value - exact).abs() < 5.0 * e.std_error.max(1e-9), "{} vs {exact}", e.value);
        let again = emo_monte_carlo(&layout, 16.0, 16.0, 2000, 3).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn monte_carlo_rejects_bad_input() {
        let layout = square_lattice_layout(16.0, 16.0).unwrap();
        assert!(emo_monte_carlo(&layout, 16.0, 16.0, 10, 0).is_err());
        assert!(emo_monte_carlo(&layout, 4096.0, 16.0, 1000, 0).is_err());
    }
}
