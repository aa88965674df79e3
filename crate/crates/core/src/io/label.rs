//! KITTI label files.
//!
//! One object per line, space separated:
//!
//! ```text
//! class trunc occ alpha left top right bottom h w l x y z rotation_y [score]
//! ```
//!
//! Ground truth lines have 15 fields, detections carry a trailing score (16).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const FIELD_NAMES: [&str; 16] = [
    "class",
    "truncation",
    "occlusion",
    "alpha",
    "bbox_left",
    "bbox_top",
    "bbox_right",
    "bbox_bottom",
    "height",
    "width",
    "length",
    "x",
    "y",
    "z",
    "rotation_y",
    "score",
];

pub const DONT_CARE: &str = "DontCare";

#[derive(Debug, Clone, PartialEq)]
pub struct BoxLabel {
    pub class_name: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// (left, top, right, bottom) in pixels.
    pub bbox2d: [f64; 4],
    /// (h, w, l) in meters.
    pub dims: [f64; 3],
    /// Bottom-face center in the camera frame (x right, y down, z forward).
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl BoxLabel {
    pub fn height(&self) -> f64 {
        self.dims[0]
    }

    pub fn width(&self) -> f64 {
        self.dims[1]
    }

    pub fn length(&self) -> f64 {
        self.dims[2]
    }

    pub fn is_detection(&self) -> bool {
        self.score.is_some()
    }

    /// Checks the label invariants that parsing alone does not enforce.
    pub fn validate(&self) -> Result<()> {
        let [left, top, right, bottom] = self.bbox2d;
        if right < left || bottom < top {
            return Err(Error::InvalidArgument(format!(
                "2D box {:?} has right < left or bottom < top",
                self.bbox2d
            )));
        }
        // DontCare regions use -1 / -10 / -1000 placeholders for 3D fields.
        if self.class_name == DONT_CARE {
            return Ok(());
        }
        if self.dims.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::NonPositive(format!(
                "dimensions of {} box {:?}",
                self.class_name, self.dims
            )));
        }
        if !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&self.rotation_y) {
            return Err(Error::InvalidArgument(format!(
                "rotation_y {} outside [-pi, pi]",
                self.rotation_y
            )));
        }
        if !(0..=3).contains(&self.occlusion) && self.occlusion != -1 {
            return Err(Error::InvalidArgument(format!(
                "occlusion {} not in {{-1, 0, 1, 2, 3}}",
                self.occlusion
            )));
        }
        Ok(())
    }

    /// Serializes to one label line (no trailing newline).
    pub fn to_line(&self) -> String {
        let mut out = String::with_capacity(96);
        out.push_str(&self.class_name);
        let _ = write!(out, " {}", fmt_num(self.truncation));
        let _ = write!(out, " {}", self.occlusion);
        let _ = write!(out, " {}", fmt_num(self.alpha));
        for v in self.bbox2d.iter().chain(&self.dims).chain(&self.location) {
            let _ = write!(out, " {}", fmt_num(*v));
        }
        let _ = write!(out, " {}", fmt_num(self.rotation_y));
        if let Some(score) = self.score {
            let _ = write!(out, " {}", fmt_num(score));
        }
        out
    }
}

/// Shortest round-trip representation, padded to at least two decimals.
fn fmt_num(v: f64) -> String {
    let s = format!("{v}");
    if s.contains(['e', 'E', 'i', 'N']) {
        return s;
    }
    match s.find('.') {
        None => format!("{s}.00"),
        Some(dot) if s.len() - dot - 1 < 2 => format!("{s}{}", "0".repeat(2 - (s.len() - dot - 1))),
        Some(_) => s,
    }
}

pub fn parse_label_line(line: &str) -> Result<BoxLabel> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 15 && fields.len() != 16 {
        return Err(Error::FieldCount {
            expected: "15 or 16",
            found: fields.len(),
        });
    }
    let num = |i: usize| -> Result<f64> {
        fields[i].parse::<f64>().map_err(|_| Error::ParseField {
            index: i,
            name: FIELD_NAMES[i],
            value: fields[i].to_string(),
        })
    };
    let occlusion = fields[2].parse::<i32>().map_err(|_| Error::ParseField {
        index: 2,
        name: FIELD_NAMES[2],
        value: fields[2].to_string(),
    })?;
    Ok(BoxLabel {
        class_name: fields[0].to_string(),
        truncation: num(1)?,
        occlusion,
        alpha: num(3)?,
        bbox2d: [num(4)?, num(5)?, num(6)?, num(7)?],
        dims: [num(8)?, num(9)?, num(10)?],
        location: [num(11)?, num(12)?, num(13)?],
        rotation_y: num(14)?,
        score: if fields.len() == 16 { Some(num(15)?) } else { None },
    })
}

/// Parses a whole label file body. Blank lines are skipped; errors carry
/// the 1-based line number.
pub fn parse_label_file(text: &str) -> Result<Vec<BoxLabel>, (usize, Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_label_line(l).map_err(|e| (i + 1, e)))
        .collect()
}

pub fn serialize_labels(labels: &[BoxLabel]) -> String {
    let mut out = String::new();
    for label in labels {
        out.push_str(&label.to_line());
        out.push('\n');
    }
    out
}

pub fn read_label_file(path: &Path) -> Result<Vec<BoxLabel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_label_file(&text).map_err(|(line, e)| e.at_line(path, line))
}

pub fn write_label_file(path: &Path, labels: &[BoxLabel]) -> Result<()> {
    std::fs::write(path, serialize_labels(labels)).map_err(|e| Error::from(e).in_file(path))
}
