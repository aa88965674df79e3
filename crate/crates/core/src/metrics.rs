//! KITTI-style 3D detection evaluation in the camera frame.
//!
//! Boxes live in camera coordinates (x right, y down, z forward). The
//! bird's-eye view is the x-z plane and a box spans `[y - h, y]`
//! vertically. With `yaw = 0` the length runs along x and the width along
//! z; `yaw` rotates about the camera y-axis as in KITTI's `roty`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{BoxLabel, Point, PointCloud};

/// Vertex merge tolerance for clipped polygons.
const VERTEX_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Box3D {
    pub class_name: String,
    /// (h, w, l) in meters.
    pub dims: [f64; 3],
    /// Bottom-face center.
    pub location: [f64; 3],
    pub yaw: f64,
    pub score: Option<f64>,
}

impl From<&BoxLabel> for Box3D {
    fn from(l: &BoxLabel) -> Self {
        Box3D {
            class_name: l.class_name.clone(),
            dims: l.dims,
            location: l.location,
            yaw: l.rotation_y,
            score: l.score,
        }
    }
}

impl Box3D {
    pub fn new(class_name: impl Into<String>, dims: [f64; 3], location: [f64; 3], yaw: f64) -> Self {
        Box3D {
            class_name: class_name.into(),
            dims,
            location,
            yaw,
            score: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn h(&self) -> f64 {
        self.dims[0]
    }

    pub fn w(&self) -> f64 {
        self.dims[1]
    }

    pub fn l(&self) -> f64 {
        self.dims[2]
    }

    pub fn volume(&self) -> f64 {
        self.h() * self.w() * self.l()
    }

    /// Geometric center (the location is on the bottom face).
    pub fn center(&self) -> [f64; 3] {
        [self.location[0], self.location[1] - self.h() / 2.0, self.location[2]]
    }

    fn check(&self) -> Result<()> {
        if !self.dims.iter().all(|&d| d > 0.0 && d.is_finite()) {
            return Err(Error::DegenerateBox(format!(
                "{} box with dims {:?}",
                self.class_name, self.dims
            )));
        }
        Ok(())
    }

    /// Box-frame offsets `(along length, along width)` of a BEV point.
    pub fn to_local_bev(&self, x: f64, z: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dz) = (x - self.location[0], z - self.location[2]);
        (c * dx - s * dz, s * dx + c * dz)
    }

    pub fn from_local_bev(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.location[0] + c * u + s * v, self.location[2] - s * u + c * v)
    }

    /// BEV corners `(x, z)`, counter-clockwise in the x-z plane.
    pub fn bev_corners(&self) -> [(f64, f64); 4] {
        let (hl, hw) = (self.l() / 2.0, self.w() / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(u, v)| self.from_local_bev(u, v))
    }

    /// Boundary-inclusive containment test.
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let (u, v) = self.to_local_bev(x, z);
        u.abs() <= self.l() / 2.0
            && v.abs() <= self.w() / 2.0
            && y <= self.location[1]
            && y >= self.location[1] - self.h()
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.contains(f64::from(p.x), f64::from(p.y), f64::from(p.z))
    }
}

fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

fn ccw(mut poly: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Intersection of two convex polygons by clipping `subject` against each
/// edge half-plane of `clip` (both counter-clockwise).
pub fn convex_intersection(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let subject = ccw(subject.to_vec());
    let clip = ccw(clip.to_vec());
    let mut out = subject;
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let side = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
        dedup_vertices(&mut out);
    }
    out
}

fn dedup_vertices(poly: &mut Vec<(f64, f64)>) {
    let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() <= VERTEX_EPS && (a.1 - b.1).abs() <= VERTEX_EPS;
    poly.dedup_by(|a, b| close(*a, *b));
    while poly.len() > 1 && close(poly[0], poly[poly.len() - 1]) {
        poly.pop();
    }
}

pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    signed_area(poly).abs()
}

/// Intersection area of the two boxes' BEV footprints.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    polygon_area(&convex_intersection(&a.bev_corners(), &b.bev_corners()))
}

fn vertical_overlap(a: &Box3D, b: &Box3D) -> f64 {
    let top = (a.location[1] - a.h()).max(b.location[1] - b.h());
    let bottom = a.location[1].min(b.location[1]);
    (bottom - top).max(0.0)
}

pub fn iou_bev(a: &Box3D, b: &Box3D) -> Result<f64> {
    a.check()?;
    b.check()?;
    let inter = bev_intersection_area(a, b);
    let union = a.l() * a.w() + b.l() * b.w() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

pub fn iou_3d(a: &Box3D, b: &Box3D) -> Result<f64> {
    a.check()?;
    b.check()?;
    let overlap = vertical_overlap(a, b);
    if overlap == 0.0 {
        return Ok(0.0);
    }
    let inter = bev_intersection_area(a, b) * overlap;
    let union = a.volume() + b.volume() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

pub fn points_in_box(cloud: &PointCloud, b: &Box3D) -> usize {
    cloud.points.iter().filter(|p| b.contains_point(p)).count()
}

/// Keeps ground-truth boxes containing at least `min_points` points.
pub fn filter_gt_min_points(gts: &[Box3D], cloud: &PointCloud, min_points: usize) -> Vec<Box3D> {
    gts.iter()
        .filter(|g| points_in_box(cloud, g) >= min_points)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouKind {
    Bev,
    ThreeD,
}

impl IouKind {
    pub fn eval(self, a: &Box3D, b: &Box3D) -> Result<f64> {
        match self {
            IouKind::Bev => iou_bev(a, b),
            IouKind::ThreeD => iou_3d(a, b),
        }
    }
}

/// Matching outcome for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatches {
    /// `(score, is_tp)` per detection, in input order.
    pub detections: Vec<(f64, bool)>,
    /// Index of the matching detection per ground truth, if any.
    pub gt_matched: Vec<Option<usize>>,
}

impl FrameMatches {
    pub fn n_gt(&self) -> usize {
        self.gt_matched.len()
    }

    pub fn n_tp(&self) -> usize {
        self.detections.iter().filter(|(_, tp)| *tp).count()
    }
}

/// Greedy matching: detections in descending score order (stable for
/// ties) each take the unmatched ground truth of highest IoU, if that IoU
/// reaches `threshold`.
pub fn match_detections(
    dets: &[Box3D],
    gts: &[Box3D],
    iou: impl Fn(&Box3D, &Box3D) -> Result<f64>,
    threshold: f64,
) -> Result<FrameMatches> {
    let scores = dets
        .iter()
        .enumerate()
        .map(|(i, d)| d.score.ok_or(Error::MissingScore(i)))
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut gt_matched = vec![None; gts.len()];
    let mut detections: Vec<(f64, bool)> = scores.iter().map(|&s| (s, false)).collect();
    for &d in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_matched[g].is_some() {
                continue;
            }
            let v = iou(&dets[d], gt)?;
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            gt_matched[g] = Some(d);
            detections[d].1 = true;
        }
    }
    Ok(FrameMatches {
        detections,
        gt_matched,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// 40 recall points `1/40, ..., 1`.
    #[default]
    R40,
    /// 11 recall points `0, 0.1, ..., 1`.
    R11,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrSample {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApSummary {
    /// Average precision in `[0, 100]`.
    pub ap: f64,
    pub n_gt: usize,
    pub n_det: usize,
    pub n_tp: usize,
    /// One sample per detection in descending score order.
    pub curve: Vec<PrSample>,
}

/// Average precision over matched frames. Detections from all frames are
/// ranked by score; ties keep frame order then detection order.
pub fn average_precision(frames: &[FrameMatches], interp: Interpolation) -> Result<ApSummary> {
    let n_gt: usize = frames.iter().map(FrameMatches::n_gt).sum();
    if n_gt == 0 {
        return Err(Error::Empty("ground truth boxes"));
    }
    let mut ranked: Vec<(f64, bool)> = frames.iter().flat_map(|f| f.detections.iter().copied()).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut tp = 0usize;
    // (tp count, precision) after each detection
    let mut points: Vec<(usize, f64)> = Vec::with_capacity(ranked.len());
    let mut curve = Vec::with_capacity(ranked.len());
    for (k, &(score, is_tp)) in ranked.iter().enumerate() {
        tp += usize::from(is_tp);
        let precision = tp as f64 / (k + 1) as f64;
        points.push((tp, precision));
        curve.push(PrSample {
            score,
            recall: tp as f64 / n_gt as f64,
            precision,
        });
    }

    // Max precision among operating points with recall >= num/den,
    // compared in integers: tp / n_gt >= num / den.
    let interpolated = |num: usize, den: usize| {
        points
            .iter()
            .filter(|(t, _)| t * den >= num * n_gt)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max)
    };
    let ap = match interp {
        Interpolation::R40 => (1..=40).map(|r| interpolated(r, 40)).sum::<f64>() / 40.0,
        Interpolation::R11 => (0..=10).map(|r| interpolated(r, 10)).sum::<f64>() / 11.0,
    };
    Ok(ApSummary {
        ap: ap * 100.0,
        n_gt,
        n_det: ranked.len(),
        n_tp: tp,
        curve,
    })
}

/// Ground truth and detections of one frame.
#[derive(Debug, Clone, Default)]
pub struct EvalFrame {
    pub frame_id: String,
    pub gts: Vec<Box3D>,
    pub dets: Vec<Box3D>,
    pub cloud: Option<PointCloud>,
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub classes: Vec<String>,
    pub iou_thresholds: Vec<f64>,
    pub iou_kind: IouKind,
    pub interpolation: Interpolation,
    /// Ground truth with fewer points is dropped when a cloud is present.
    pub min_points: Option<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            classes: vec!["Car".into()],
            iou_thresholds: vec![0.5, 0.7],
            iou_kind: IouKind::ThreeD,
            interpolation: Interpolation::R40,
            min_points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApEntry {
    pub ap: f64,
    pub n_gt: usize,
    pub n_tp: usize,
}

/// `class -> iou threshold (as written) -> AP entry`, plus PR curves.
#[derive(Debug, Clone, Default)]
pub struct EvalResult {
    pub table: BTreeMap<String, BTreeMap<String, ApEntry>>,
    pub curves: Vec<(String, String, Vec<PrSample>)>,
}

impl EvalResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.table).expect("eval result serializes")
    }

    pub fn pr_csv(&self) -> String {
        let mut out = String::from("class,iou,score,recall,precision\n");
        for (class, iou, curve) in &self.curves {
            for s in curve {
                out.push_str(&format!("{class},{iou},{},{},{}\n", s.score, s.recall, s.precision));
            }
        }
        out
    }
}

/// Evaluates every (class, threshold) pair. Classes without ground truth
/// are skipped with a warning.
pub fn evaluate(frames: &[EvalFrame], settings: &EvalSettings) -> Result<EvalResult> {
    let mut result = EvalResult::default();
    for class in &settings.classes {
        let per_frame: Vec<(Vec<Box3D>, Vec<Box3D>)> = frames
            .iter()
            .map(|f| {
                let gts: Vec<Box3D> = f.gts.iter().filter(|b| &b.class_name == class).cloned().collect();
                let gts = match (settings.min_points, &f.cloud) {
                    (Some(min), Some(cloud)) => filter_gt_min_points(&gts, cloud, min),
                    _ => gts,
                };
                let dets = f.dets.iter().filter(|b| &b.class_name == class).cloned().collect();
                (gts, dets)
            })
            .collect();
        for &threshold in &settings.iou_thresholds {
            let matches = per_frame
                .iter()
                .map(|(gts, dets)| match_detections(dets, gts, |a, b| settings.iou_kind.eval(a, b), threshold))
                .collect::<Result<Vec<_>>>()?;
            let summary = match average_precision(&matches, settings.interpolation) {
                Ok(s) => s,
                Err(Error::Empty(_)) => {
                    log::warn!("class {class}: no ground truth, skipped");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let key = format!("{threshold}");
            result.table.entry(class.clone()).or_default().insert(
                key.clone(),
                ApEntry {
                    ap: summary.ap,
                    n_gt: summary.n_gt,
                    n_tp: summary.n_tp,
                },
            );
            result.curves.push((class.clone(), key, summary.curve));
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn car(dims: [f64; 3], loc: [f64; 3], yaw: f64) -> Box3D {
        Box3D::new("Car", dims, loc, yaw)
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = car([1.5, 1.8, 4.0], [1.0, 1.6, 10.0], 0.3);
        assert_eq!(iou_bev(&a, &a).unwrap(), 1.0);
        assert_eq!(iou_3d(&a, &a).unwrap(), 1.0);
        let mut b = a.clone();
        b.yaw = 0.0;
        let mut c = b.clone();
        c.location[0] += 4.0 + 1e-6;
        assert_eq!(iou_bev(&b, &c).unwrap(), 0.0);
        assert_eq!(iou_3d(&b, &c).unwrap(), 0.0);
    }

    #[test]
    fn rotated_unit_squares() {
        let a = car([1.0, 1.0, 1.0], [0.0, 0.0, 0.0], 0.0);
        let b = car([1.0, 1.0, 1.0], [0.0, 0.0, 0.0], FRAC_PI_4);
        let inter = bev_intersection_area(&a, &b);
        assert!((inter - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-12);
        let expected = inter / (2.0 - inter);
        assert!((iou_bev(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((iou_bev(&a, &b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.005);
    }

    #[test]
    fn vertical_cases() {
        let a = car([2.0, 2.0, 2.0], [0.0, 0.0, 0.0], 0.0);
        let mut b = a.clone();
        b.location[1] = -2.0;
        assert_eq!(iou_3d(&a, &b).unwrap(), 0.0);
        assert_eq!(iou_bev(&a, &b).unwrap(), 1.0);
        b.location[1] = -1.0;
        assert!((iou_3d(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_is_error() {
        let a = car([0.0, 1.0, 1.0], [0.0; 3], 0.0);
        assert!(iou_bev(&a, &a).is_err());
        assert!(iou_3d(&a, &car([1.0; 3], [0.0; 3], 0.0)).is_err());
    }

    #[test]
    fn clipping_handles_shared_edges() {
        let a = car([1.0, 2.0, 2.0], [0.0, 0.0, 0.0], 0.0);
        let b = car([1.0, 2.0, 2.0], [1.0, 0.0, 0.0], 0.0);
        assert!((bev_intersection_area(&a, &b) - 2.0).abs() < 1e-12);
        let c = car([1.0, 2.0, 2.0], [0.0, 0.0, 0.0], PI / 2.0);
        assert!((iou_bev(&a, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_in_box_examples() {
        let b = car([2.0, 2.0, 4.0], [0.0, 0.0, 5.0], 0.0);
        let cloud = |pts: &[(f32, f32, f32)]| -> PointCloud {
            pts.iter().map(|&(x, y, z)| Point::new(x, y, z, 0.0)).collect()
        };
        assert_eq!(points_in_box(&cloud(&[(0.0, -1.0, 5.0)]), &b), 1);
        assert_eq!(points_in_box(&cloud(&[(10.0, -1.0, 5.0)]), &b), 0);
        // on the x = +l/2 face, on the top face, on the bottom face
        assert_eq!(points_in_box(&cloud(&[(2.0, -1.0, 5.0), (0.0, -2.0, 5.0), (0.0, 0.0, 6.0)]), &b), 3);
        assert_eq!(points_in_box(&cloud(&[(0.0, 0.1, 5.0), (0.0, -1.0, 6.1)]), &b), 0);
    }

    #[test]
    fn min_points_filter() {
        let b = car([2.0, 2.0, 4.0], [0.0, 0.0, 5.0], 0.0);
        let inside = |n: usize| -> PointCloud { (0..n).map(|_| Point::new(0.0, -1.0, 5.0, 0.0)).collect() };
        assert_eq!(filter_gt_min_points(std::slice::from_ref(&b), &inside(50), 50).len(), 1);
        assert_eq!(filter_gt_min_points(std::slice::from_ref(&b), &inside(49), 50).len(), 0);
        assert!(filter_gt_min_points(&[b.clone(), b], &PointCloud::default(), 50).is_empty());
    }

    fn shifted(b: &Box3D, dx: f64) -> Box3D {
        let mut c = b.clone();
        c.location[0] += dx;
        c
    }

    #[test]
    fn matching_examples() {
        let gt = car([1.5, 1.6, 4.0], [0.0, 1.5, 10.0], 0.0);
        // Shift along the length: IoU = (4 - s) / (4 + s).
        let s_for = |iou: f64| 4.0 * (1.0 - iou) / (1.0 + iou);
        let det = shifted(&gt, s_for(0.8)).with_score(0.9);
        let m = match_detections(std::slice::from_ref(&det), std::slice::from_ref(&gt), iou_3d, 0.7).unwrap();
        assert_eq!(m.detections, vec![(0.9, true)]);
        assert_eq!(m.gt_matched, vec![Some(0)]);

        let low = gt.clone().with_score(0.3);
        let high = shifted(&gt, 0.1).with_score(0.8);
        let m = match_detections(&[low, high], std::slice::from_ref(&gt), iou_3d, 0.7).unwrap();
        assert_eq!(m.detections, vec![(0.3, false), (0.8, true)]);

        let weak = shifted(&gt, s_for(0.6)).with_score(0.9);
        let m = match_detections(&[weak], std::slice::from_ref(&gt), iou_3d, 0.7).unwrap();
        assert_eq!(m.detections, vec![(0.9, false)]);
        assert_eq!(m.gt_matched, vec![None]);

        assert!(matches!(
            match_detections(std::slice::from_ref(&gt), std::slice::from_ref(&gt), iou_3d, 0.7),
            Err(Error::MissingScore(0))
        ));
    }

    fn frame(dets: &[(f64, bool)], n_gt: usize) -> FrameMatches {
        FrameMatches {
            detections: dets.to_vec(),
            gt_matched: vec![None; n_gt],
        }
    }

    #[test]
    fn ap_examples() {
        let ap = |f: &[FrameMatches]| average_precision(f, Interpolation::R40).unwrap().ap;
        assert_eq!(ap(&[frame(&[(0.9, true)], 1)]), 100.0);
        assert_eq!(ap(&[frame(&[(0.9, true)], 2)]), 50.0);
        assert_eq!(ap(&[frame(&[(0.9, false), (0.5, false)], 2)]), 0.0);
        assert!(average_precision(&[frame(&[(0.9, false)], 0)], Interpolation::R40).is_err());
        let r11 = average_precision(&[frame(&[(0.9, true)], 2)], Interpolation::R11).unwrap().ap;
        assert!((r11 - 600.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn ap_monotonicity() {
        let base = vec![frame(&[(0.9, true), (0.8, false), (0.7, true), (0.2, false)], 5)];
        let before = average_precision(&base, Interpolation::R40).unwrap().ap;
        let mut with_tp = base.clone();
        with_tp[0].detections.push((0.5, true));
        assert!(average_precision(&with_tp, Interpolation::R40).unwrap().ap >= before);
        let mut with_fp = base.clone();
        with_fp[0].detections.push((0.01, false));
        assert!(average_precision(&with_fp, Interpolation::R40).unwrap().ap <= before);
    }

    #[test]
    fn evaluate_table() {
        let gt = car([1.5, 1.6, 4.0], [0.0, 1.5, 10.0], 0.0);
        let frames = vec![EvalFrame {
            frame_id: "000000".into(),
            gts: vec![gt.clone(), Box3D::new("Pedestrian", [1.7, 0.6, 0.8], [3.0, 1.5, 8.0], 0.0)],
            dets: vec![shifted(&gt, 0.5).with_score(0.9)],
            cloud: None,
        }];
        let result = evaluate(&frames, &EvalSettings::default()).unwrap();
        let car = &result.table["Car"];
        // IoU = 3.5 / 4.5 = 0.78: TP at 0.5 and 0.7
        assert_eq!(car["0.5"], ApEntry { ap: 100.0, n_gt: 1, n_tp: 1 });
        assert_eq!(car["0.7"].ap, 100.0);
        assert!(result.to_json().contains("\"0.7\""));
        assert!(result.pr_csv().starts_with("class,iou,score,recall,precision\nCar,0.5,0.9,1,1\n"));
    }
}
