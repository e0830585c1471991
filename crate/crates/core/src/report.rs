//! Byte-stable CSV and JSON emitters for every artifact the tool produces.
//!
//! Numbers are written with 9 significant digits in both formats; CSV uses LF
//! line endings and an empty field for missing values.

use serde_json::{Map, Value};

use crate::anchor_layout::AnchorLayout;
use crate::dataset::{JitterReport, LayoutComparison, ScaleBucketReport};
use crate::emo::EmoTableRow;
use crate::matching::{AnchorLabel, MatchResult};
use crate::optimizer::ConfigScore;

/// `%.9g`-style formatting.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Str(String),
    Null,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_sig(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Str(s) => quote(s),
            Cell::Null => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => {
                let rounded: f64 = fmt_sig(*v).parse().expect("formatted float parses");
                serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
            }
            Cell::Num(v) => Value::String(fmt_sig(*v)),
            Cell::Int(v) => Value::from(*v),
            Cell::Str(s) => Value::String(s.clone()),
            Cell::Null => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Str(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Str(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Null, Into::into)
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Array of row objects.
    pub fn to_json_value(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> =
                    self.header.iter().zip(row).map(|(k, c)| (k.to_string(), c.json())).collect();
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("json");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub fn emo_table(rows: &[EmoTableRow]) -> Table {
    let mut t = Table::new(&["scale", "stride", "emo", "std_error", "method"]);
    for r in rows {
        let e = r.estimate;
        t.push(vec![
            r.scale.into(),
            r.stride.into(),
            e.map(|e| e.value).into(),
            e.map(|e| e.std_error).into(),
            e.map(|e| e.method.as_str()).into(),
        ]);
    }
    t
}

pub fn layout_table(layout: &AnchorLayout) -> Table {
    let mut t = Table::new(&["id", "scale", "ratio", "sublattice", "cx", "cy", "w", "h"]);
    for a in layout.anchors() {
        t.push(vec![
            a.id.0.into(),
            a.scale.into(),
            a.ratio.into(),
            a.sublattice.into(),
            a.cx.into(),
            a.cy.into(),
            a.bbox.w().into(),
            a.bbox.h().into(),
        ]);
    }
    t
}

pub fn bucket_table(report: &ScaleBucketReport) -> Table {
    let mut t = Table::new(&["bucket_lo", "bucket_hi", "count", "mean_max_iou", "recall_at_tau"]);
    for b in &report.buckets {
        t.push(vec![
            b.bucket_lo.into(),
            b.bucket_hi.into(),
            b.count.into(),
            b.mean_max_iou.into(),
            b.recall_at_tau.into(),
        ]);
    }
    t
}

pub fn jitter_table(report: &JitterReport) -> Table {
    let mut t = Table::new(&[
        "bucket_lo",
        "bucket_hi",
        "count",
        "trials",
        "mean_max_iou",
        "min_mean_max_iou",
        "max_mean_max_iou",
        "mean_recall_at_tau",
    ]);
    for b in &report.buckets {
        t.push(vec![
            b.bucket_lo.into(),
            b.bucket_hi.into(),
            b.count.into(),
            b.trials.into(),
            b.mean_max_iou.into(),
            b.min_mean_max_iou.into(),
            b.max_mean_max_iou.into(),
            b.mean_recall_at_tau.into(),
        ]);
    }
    t
}

/// One block of bucket rows per layout, tagged with the layout index and spec.
pub fn comparison_table(cmp: &LayoutComparison) -> Table {
    let mut t = Table::new(&[
        "layout",
        "bucket_lo",
        "bucket_hi",
        "count",
        "mean_max_iou",
        "recall_at_tau",
        "spec_json",
    ]);
    for (i, (spec, report)) in cmp.specs.iter().zip(&cmp.reports).enumerate() {
        let json = spec.to_json();
        for b in &report.buckets {
            t.push(vec![
                i.into(),
                b.bucket_lo.into(),
                b.bucket_hi.into(),
                b.count.into(),
                b.mean_max_iou.into(),
                b.recall_at_tau.into(),
                json.as_str().into(),
            ]);
        }
    }
    t
}

pub fn ranking_table(scores: &[ConfigScore]) -> Table {
    let mut t = Table::new(&["rank", "objective", "recall", "anchors_per_location", "spec_json"]);
    for (i, s) in scores.iter().enumerate() {
        t.push(vec![
            (i + 1).into(),
            s.objective.into(),
            s.recall.into(),
            s.anchors_per_location.into(),
            s.spec.to_json().into(),
        ]);
    }
    t
}

/// A matching run over one image, for the per-face and per-anchor dumps.
pub struct ImageMatch<'a> {
    pub image_id: &'a str,
    pub faces: &'a [crate::geometry::RectBox],
    pub result: &'a MatchResult,
}

pub fn match_face_table(images: &[ImageMatch<'_>], hc_threshold: f64) -> Table {
    let mut t = Table::new(&[
        "image_id",
        "face",
        "x",
        "y",
        "w",
        "h",
        "max_iou",
        "argmax",
        "positives",
        "hard",
    ]);
    for im in images {
        for (i, (face, m)) in im.faces.iter().zip(&im.result.faces).enumerate() {
            t.push(vec![
                im.image_id.into(),
                i.into(),
                face.x().into(),
                face.y().into(),
                face.w().into(),
                face.h().into(),
                m.max_iou.into(),
                m.argmax.map(|a| a.0).into(),
                m.assigned.len().into(),
                usize::from(m.max_iou < hc_threshold).into(),
            ]);
        }
    }
    t
}

/// Non-negative anchors only; every other anchor is a negative.
pub fn match_anchor_table(images: &[ImageMatch<'_>]) -> Table {
    let mut t = Table::new(&["image_id", "anchor_id", "label", "face", "iou"]);
    for im in images {
        for (id, label) in im.result.labels.iter().enumerate() {
            match *label {
                AnchorLabel::Negative => {}
                AnchorLabel::Ignore => t.push(vec![
                    im.image_id.into(),
                    id.into(),
                    label.name().into(),
                    Cell::Null,
                    Cell::Null,
                ]),
                AnchorLabel::Positive { face, iou } => t.push(vec![
                    im.image_id.into(),
                    id.into(),
                    label.name().into(),
                    face.into(),
                    iou.into(),
                ]),
            }
        }
    }
    t
}
