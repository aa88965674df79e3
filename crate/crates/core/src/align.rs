//! Source-to-target alignment: box size statistics normalization and
//! beam-based point-cloud density reduction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io::{BoxLabel, MeanDims, Point, PointCloud, SizeStats};
use crate::metrics::Box3D;

/// Per-class mean dimension shift, target minus source, in meters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SizeDelta {
    pub classes: BTreeMap<String, DimShift>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimShift {
    pub dl: f64,
    pub dw: f64,
    pub dh: f64,
    /// Target/source ratios, used in multiplicative mode.
    pub rl: f64,
    pub rw: f64,
    pub rh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizeMode {
    /// `dim + (target_mean - source_mean)`.
    #[default]
    Additive,
    /// `dim * (target_mean / source_mean)`.
    Multiplicative,
}

impl SizeDelta {
    pub fn get(&self, class: &str) -> Option<&DimShift> {
        self.classes.get(class)
    }
}

/// Classes present on only one side are left out with a warning.
pub fn compute_size_delta(source: &SizeStats, target: &SizeStats) -> Result<SizeDelta> {
    let mut classes = BTreeMap::new();
    for (class, s) in &source.classes {
        match target.get(class) {
            Some(t) => {
                classes.insert(class.clone(), shift(s, t));
            }
            None => log::warn!("class {class} missing from target statistics; not normalized"),
        }
    }
    for class in target.classes.keys().filter(|c| !source.classes.contains_key(*c)) {
        log::warn!("class {class} missing from source statistics; not normalized");
    }
    if classes.is_empty() {
        return Err(Error::NoSharedClasses);
    }
    Ok(SizeDelta { classes })
}

fn shift(s: &MeanDims, t: &MeanDims) -> DimShift {
    DimShift {
        dl: t.l - s.l,
        dw: t.w - s.w,
        dh: t.h - s.h,
        rl: t.l / s.l,
        rw: t.w / s.w,
        rh: t.h / s.h,
    }
}

/// Resizes labels of covered classes. Location and yaw are unchanged, so
/// the bottom-face center stays put and boxes grow upward and around their
/// footprint center. Other classes pass through.
pub fn statnorm_labels(labels: &[BoxLabel], delta: &SizeDelta, mode: ResizeMode) -> Result<Vec<BoxLabel>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let Some(d) = delta.get(&label.class_name) else {
                return Ok(label.clone());
            };
            let [h, w, l] = label.dims;
            let dims = match mode {
                ResizeMode::Additive => [h + d.dh, w + d.dw, l + d.dl],
                ResizeMode::Multiplicative => [h * d.rh, w * d.rw, l * d.rl],
            };
            if dims.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::NonPositive(format!(
                    "resized dims (h, w, l) = {dims:?} of box {i} ({})",
                    label.class_name
                )));
            }
            Ok(BoxLabel {
                dims,
                ..label.clone()
            })
        })
        .collect()
}

/// Moves points inside `original` so they occupy the same relative
/// position inside `adjusted`: box-local offsets from the bottom-face
/// center are scaled per axis by the dimension ratios. Points outside
/// `original` are untouched.
pub fn statnorm_points(cloud: &PointCloud, original: &Box3D, adjusted: &Box3D) -> Result<PointCloud> {
    if !original.dims.iter().all(|&d| d > 0.0) {
        return Err(Error::DegenerateBox(format!("original dims {:?}", original.dims)));
    }
    if !adjusted.dims.iter().all(|&d| d > 0.0) {
        return Err(Error::DegenerateBox(format!("adjusted dims {:?}", adjusted.dims)));
    }
    let (sl, sw, sh) = (
        adjusted.l() / original.l(),
        adjusted.w() / original.w(),
        adjusted.h() / original.h(),
    );
    let base_y = original.location[1];
    Ok(cloud
        .points
        .iter()
        .map(|p| {
            if !original.contains_point(p) {
                return *p;
            }
            let (u, v) = original.to_local_bev(f64::from(p.x), f64::from(p.z));
            let (x, z) = adjusted.from_local_bev(u * sl, v * sw);
            let y = adjusted.location[1] + (f64::from(p.y) - base_y) * sh;
            Point::new(x as f32, y as f32, z as f32, p.intensity)
        })
        .collect())
}

/// Applies `statnorm_points` for every label of a covered class. Labels
/// and the returned adjusted labels must be index-aligned.
pub fn statnorm_cloud(cloud: &PointCloud, original: &[BoxLabel], adjusted: &[BoxLabel]) -> Result<PointCloud> {
    let mut out = cloud.clone();
    // Points are moved against the original cloud so overlapping boxes
    // cannot move a point twice.
    let mut moved = vec![false; cloud.len()];
    for (o, a) in original.iter().zip(adjusted) {
        if o.dims == a.dims {
            continue;
        }
        let (ob, ab) = (Box3D::from(o), Box3D::from(a));
        let resized = statnorm_points(cloud, &ob, &ab)?;
        for (i, (p, q)) in cloud.points.iter().zip(&resized.points).enumerate() {
            if !moved[i] && p != q {
                out.points[i] = *q;
                moved[i] = true;
            }
        }
    }
    Ok(out)
}

/// Uniform elevation binning standing in for missing ring indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamModel {
    pub n_beams: u32,
    pub min_elevation: f64,
    pub max_elevation: f64,
}

impl BeamModel {
    pub fn edges(&self) -> Vec<f64> {
        let step = (self.max_elevation - self.min_elevation) / f64::from(self.n_beams);
        (0..=self.n_beams)
            .map(|i| self.min_elevation + step * f64::from(i))
            .collect()
    }

    /// Bin index; the top edge belongs to the last bin. A zero-width range
    /// maps everything to beam 0.
    pub fn beam_of(&self, elevation: f64) -> u16 {
        let range = self.max_elevation - self.min_elevation;
        if !(range > 0.0) {
            return 0;
        }
        let bin = ((elevation - self.min_elevation) / range * f64::from(self.n_beams)).floor();
        bin.clamp(0.0, f64::from(self.n_beams - 1)) as u16
    }
}

fn elevation(p: &Point, index: usize) -> Result<f64> {
    let (x, y, z) = (f64::from(p.x), f64::from(p.y), f64::from(p.z));
    let r = (x * x + y * y + z * z).sqrt();
    if r == 0.0 {
        return Err(Error::InvalidArgument(format!("point {index} is at the sensor origin")));
    }
    Ok((z / r).clamp(-1.0, 1.0).asin())
}

/// Fits a beam model to the observed elevation range of `cloud` (sensor
/// frame, z up).
pub fn fit_beam_model(cloud: &PointCloud, n_beams: u32) -> Result<BeamModel> {
    if n_beams < 2 || n_beams > u32::from(u16::MAX) {
        return Err(Error::InvalidArgument(format!("beam count {n_beams} must be in 2..=65535")));
    }
    if cloud.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, p) in cloud.points.iter().enumerate() {
        let e = elevation(p, i)?;
        lo = lo.min(e);
        hi = hi.max(e);
    }
    Ok(BeamModel {
        n_beams,
        min_elevation: lo,
        max_elevation: hi,
    })
}

/// Beam id per point by uniform binning of `asin(z / r)`.
pub fn estimate_beams(cloud: &PointCloud, n_beams: u32) -> Result<Vec<u16>> {
    let model = fit_beam_model(cloud, n_beams)?;
    cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| elevation(p, i).map(|e| model.beam_of(e)))
        .collect()
}

fn nearest_divisor(source: u32, target: u32) -> u32 {
    (1..=source)
        .filter(|t| source.is_multiple_of(*t))
        .min_by_key(|&t| (t.abs_diff(target), std::cmp::Reverse(t)))
        .unwrap_or(1)
}

/// Keeps every `source / target`-th beam (ids divisible by the ratio),
/// preserving point order.
pub fn downsample_beams(
    cloud: &PointCloud,
    beam_ids: &[u16],
    source_beams: u32,
    target_beams: u32,
) -> Result<PointCloud> {
    if beam_ids.len() != cloud.len() {
        return Err(Error::DimensionMismatch {
            expected: cloud.len(),
            found: beam_ids.len(),
        });
    }
    if source_beams == 0 || target_beams == 0 {
        return Err(Error::NonPositive("beam count".into()));
    }
    if target_beams > source_beams || !source_beams.is_multiple_of(target_beams) {
        return Err(Error::NonDivisibleRatio {
            source_beams,
            target_beams,
            suggestion: nearest_divisor(source_beams, target_beams),
        });
    }
    let ratio = source_beams / target_beams;
    Ok(cloud
        .points
        .iter()
        .zip(beam_ids)
        .filter(|(_, &id)| u32::from(id) % ratio == 0)
        .map(|(p, _)| *p)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_label_line;

    fn kitti_to_waymo() -> SizeDelta {
        compute_size_delta(&SizeStats::bundled("kitti").unwrap(), &SizeStats::bundled("waymo").unwrap()).unwrap()
    }

    #[test]
    fn kitti_to_waymo_delta() {
        let d = *kitti_to_waymo().get("Car").unwrap();
        assert!((d.dl - 0.75).abs() < 1e-12);
        assert!((d.dw - 0.14).abs() < 1e-12);
        assert!((d.dh - 0.22).abs() < 1e-12);
    }

    #[test]
    fn identical_stats_zero_delta() {
        let s = SizeStats::bundled("nuscenes").unwrap();
        let d = *compute_size_delta(&s, &s).unwrap().get("Car").unwrap();
        assert_eq!((d.dl, d.dw, d.dh), (0.0, 0.0, 0.0));
    }

    #[test]
    fn missing_classes_are_omitted() {
        let src = SizeStats::from_json(r#"{"Car":{"l":4,"w":2,"h":1.5},"Van":{"l":5,"w":2,"h":2}}"#).unwrap();
        let tgt = SizeStats::from_json(r#"{"Car":{"l":4.5,"w":2,"h":1.5},"Cyclist":{"l":2,"w":1,"h":1.7}}"#).unwrap();
        let delta = compute_size_delta(&src, &tgt).unwrap();
        assert_eq!(delta.classes.keys().collect::<Vec<_>>(), ["Car"]);
        let only_van = SizeStats::from_json(r#"{"Van":{"l":5,"w":2,"h":2}}"#).unwrap();
        assert!(matches!(compute_size_delta(&only_van, &tgt), Err(Error::NoSharedClasses)));
    }

    const LINE: &str = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59";

    #[test]
    fn statnorm_label_example() {
        let label = parse_label_line(LINE).unwrap();
        let out = statnorm_labels(std::slice::from_ref(&label), &kitti_to_waymo(), ResizeMode::Additive).unwrap();
        let [h, w, l] = out[0].dims;
        assert!((l - 4.39).abs() < 1e-12);
        assert!((w - 1.81).abs() < 1e-12);
        assert!((h - 1.87).abs() < 1e-12);
        assert_eq!(out[0].location, label.location);
        assert_eq!(out[0].rotation_y, label.rotation_y);
    }

    #[test]
    fn zero_delta_is_identity_and_uncovered_pass_through() {
        let s = SizeStats::bundled("kitti").unwrap();
        let zero = compute_size_delta(&s, &s).unwrap();
        let mut labels = vec![parse_label_line(LINE).unwrap()];
        labels.push(parse_label_line(&LINE.replace("Car", "Pedestrian")).unwrap());
        assert_eq!(statnorm_labels(&labels, &zero, ResizeMode::Additive).unwrap(), labels);
        let out = statnorm_labels(&labels, &kitti_to_waymo(), ResizeMode::Additive).unwrap();
        assert_eq!(out[1], labels[1]);
    }

    #[test]
    fn non_positive_result_is_error() {
        let mut label = parse_label_line(LINE).unwrap();
        label.dims = [0.5, 0.5, 0.5];
        let delta = SizeDelta {
            classes: BTreeMap::from([(
                "Car".to_string(),
                DimShift { dl: -1.0, dw: 0.0, dh: 0.0, rl: 1.0, rw: 1.0, rh: 1.0 },
            )]),
        };
        assert!(matches!(
            statnorm_labels(&[label], &delta, ResizeMode::Additive),
            Err(Error::NonPositive(_))
        ));
    }

    #[test]
    fn multiplicative_mode() {
        let label = parse_label_line(LINE).unwrap();
        let out = statnorm_labels(std::slice::from_ref(&label), &kitti_to_waymo(), ResizeMode::Multiplicative).unwrap();
        assert!((out[0].dims[2] - 3.64 * 5.15 / 4.4).abs() < 1e-12);
    }

    fn unit_box(yaw: f64) -> Box3D {
        Box3D::new("Car", [1.5, 1.8, 4.0], [2.0, 1.0, 10.0], yaw)
    }

    #[test]
    fn statnorm_points_identity_and_center() {
        let b = unit_box(0.4);
        let c = b.center();
        let cloud: PointCloud = vec![
            Point::new(c[0] as f32, c[1] as f32, c[2] as f32, 0.3),
            Point::new(50.0, 0.0, 0.0, 1.0),
        ]
        .into_iter()
        .collect();
        assert_eq!(statnorm_points(&cloud, &b, &b).unwrap(), cloud);

        let mut big = b.clone();
        big.dims = [1.5 * 1.2, 1.8 * 1.1, 4.0 * 1.3];
        let out = statnorm_points(&cloud, &b, &big).unwrap();
        let bc = big.center();
        assert!((f64::from(out.points[0].x) - bc[0]).abs() < 1e-5);
        assert!((f64::from(out.points[0].y) - bc[1]).abs() < 1e-5);
        assert!((f64::from(out.points[0].z) - bc[2]).abs() < 1e-5);
        assert_eq!(out.points[1], cloud.points[1]);
    }

    #[test]
    fn corner_scales_uniformly() {
        let b = Box3D::new("Car", [2.0, 2.0, 4.0], [0.0, 0.0, 5.0], 0.0);
        let mut big = b.clone();
        big.dims = [2.4, 2.4, 4.8];
        // top corner (+l/2, -h, +w/2)
        let corner = [2.0, -2.0, 6.0];
        let cloud: PointCloud = std::iter::once(Point::new(corner[0] as f32, corner[1] as f32, corner[2] as f32, 0.0)).collect();
        let out = statnorm_points(&cloud, &b, &big).unwrap().points[0];
        let (c, c2) = (b.center(), big.center());
        for (axis, got) in [out.x, out.y, out.z].iter().enumerate() {
            let expected = c2[axis] + 1.2 * (corner[axis] - c[axis]);
            assert!((f64::from(*got) - expected).abs() < 1e-5, "axis {axis}");
        }
        let mut slack = big.clone();
        slack.dims = big.dims.map(|d| d * (1.0 + 1e-6));
        slack.location[1] += 1e-6;
        assert!(slack.contains_point(&out));
    }

    #[test]
    fn degenerate_original_box() {
        let mut b = unit_box(0.0);
        b.dims[0] = 0.0;
        assert!(statnorm_points(&PointCloud::default(), &b, &unit_box(0.0)).is_err());
    }

    fn ring_cloud(elevations_deg: &[f64], per_beam: usize) -> PointCloud {
        let mut pts = Vec::new();
        for &e in elevations_deg {
            for k in 0..per_beam {
                let az = k as f64 * std::f64::consts::TAU / per_beam as f64;
                let (r, el) = (20.0, e.to_radians());
                pts.push(Point::new(
                    (r * el.cos() * az.cos()) as f32,
                    (r * el.cos() * az.sin()) as f32,
                    (r * el.sin()) as f32,
                    0.5,
                ));
            }
        }
        pts.into_iter().collect()
    }

    #[test]
    fn beams_at_bin_centers() {
        let cloud = ring_cloud(&[-20.0, -10.0, 0.0, 10.0], 1);
        assert_eq!(estimate_beams(&cloud, 4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn degenerate_elevation_range() {
        let cloud: PointCloud = [1.0f32, 2.0, 4.0, 8.0]
            .iter()
            .map(|k| Point::new(3.0 * k, 4.0 * k, *k, 0.1))
            .collect();
        assert!(estimate_beams(&cloud, 16).unwrap() == vec![0; 4]);
    }

    #[test]
    fn origin_point_rejected() {
        let cloud: PointCloud = vec![Point::new(1.0, 0.0, 0.0, 0.0), Point::new(0.0, 0.0, 0.0, 0.0)].into_iter().collect();
        assert!(estimate_beams(&cloud, 4).is_err());
        assert!(estimate_beams(&PointCloud::default(), 4).is_err());
        assert!(estimate_beams(&cloud, 1).is_err());
    }

    #[test]
    fn downsample_examples() {
        let elevations: Vec<f64> = (0..64).map(|i| -24.0 + i as f64 * 0.5).collect();
        let cloud = ring_cloud(&elevations, 10);
        let ids = estimate_beams(&cloud, 64).unwrap();
        let expected: Vec<u16> = (0..64).flat_map(|b| std::iter::repeat_n(b, 10)).collect();
        assert_eq!(ids, expected);

        let half = downsample_beams(&cloud, &ids, 64, 32).unwrap();
        assert_eq!(half.len(), cloud.len() / 2);
        assert_eq!(downsample_beams(&cloud, &ids, 64, 64).unwrap(), cloud);
        match downsample_beams(&cloud, &ids, 64, 40) {
            Err(Error::NonDivisibleRatio { suggestion, .. }) => assert_eq!(suggestion, 32),
            other => panic!("unexpected {other:?}"),
        }
        assert!(downsample_beams(&cloud, &ids[1..], 64, 32).is_err());
    }

    #[test]
    fn edges_increase() {
        let m = BeamModel { n_beams: 4, min_elevation: -0.4, max_elevation: 0.2 };
        let e = m.edges();
        assert_eq!(e.len(), 5);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(m.beam_of(0.2), 3);
        assert_eq!(m.beam_of(-0.4), 0);
    }

    #[test]
    fn source_means_map_to_target_means_exactly() {
        let names: Vec<_> = SizeStats::bundled_names().collect();
        for s in &names {
            for t in &names {
                let (src, tgt) = (SizeStats::bundled(s).unwrap(), SizeStats::bundled(t).unwrap());
                let delta = compute_size_delta(&src, &tgt).unwrap();
                let m = src.get("Car").unwrap();
                let mut label = parse_label_line(LINE).unwrap();
                label.dims = [m.h, m.w, m.l];
                let out = statnorm_labels(&[label], &delta, ResizeMode::Additive).unwrap();
                let g = tgt.get("Car").unwrap();
                assert_eq!(out[0].dims, [g.h, g.w, g.l], "{s} -> {t}");
            }
        }
    }

    use proptest::prelude::*;

    fn arb_box() -> impl Strategy<Value = Box3D> {
        (0.5f64..3.0, 0.5f64..3.0, 0.5f64..6.0, -10.0f64..10.0, -2.0f64..2.0, 0.0f64..40.0, -3.2f64..3.2)
            .prop_map(|(h, w, l, x, y, z, yaw)| Box3D::new("Car", [h, w, l], [x, y, z], yaw))
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        prop::collection::vec((-14.0f32..14.0, -6.0f32..3.0, -5.0f32..45.0), 0..300)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Point::new(x, y, z, 0.0)).collect())
    }

    proptest! {
        #[test]
        fn outside_points_never_move(b in arb_box(), cloud in arb_cloud(), s in (0.5f64..2.0, 0.5f64..2.0, 0.5f64..2.0)) {
            let mut adj = b.clone();
            adj.dims = [b.dims[0] * s.0, b.dims[1] * s.1, b.dims[2] * s.2];
            let out = statnorm_points(&cloud, &b, &adj).unwrap();
            prop_assert_eq!(out.len(), cloud.len());
            for (p, q) in cloud.points.iter().zip(&out.points) {
                if !b.contains_point(p) {
                    prop_assert_eq!(p, q);
                }
            }
        }

        #[test]
        fn growing_keeps_inside_points_inside(b in arb_box(), s in (1.0f64..2.0, 1.0f64..2.0, 1.0f64..2.0),
                                              fr in prop::collection::vec((-0.49f64..0.49, 0.01f64..0.99, -0.49f64..0.49), 1..100)) {
            let cloud: PointCloud = fr.iter().map(|&(a, c, d)| {
                let (x, z) = b.from_local_bev(a * b.l(), d * b.w());
                Point::new(x as f32, (b.location[1] - c * b.h()) as f32, z as f32, 0.0)
            }).collect();
            let mut adj = b.clone();
            adj.dims = [b.dims[0] * s.0, b.dims[1] * s.1, b.dims[2] * s.2];
            let before = crate::metrics::points_in_box(&cloud, &b);
            let after = crate::metrics::points_in_box(&statnorm_points(&cloud, &b, &adj).unwrap(), &adj);
            prop_assert!(after >= before);
        }

        #[test]
        fn downsample_counts(counts in prop::collection::vec(0usize..20, 8), ratio in prop::sample::select(vec![1u32, 2, 4, 8])) {
            let ids: Vec<u16> = counts.iter().enumerate().flat_map(|(b, &n)| std::iter::repeat_n(b as u16, n)).collect();
            let cloud: PointCloud = ids.iter().map(|&b| Point::new(1.0, 0.0, f32::from(b), 0.0)).collect();
            let out = downsample_beams(&cloud, &ids, 8, 8 / ratio).unwrap();
            let expected: usize = counts.iter().enumerate().filter(|(b, _)| (*b as u32).is_multiple_of(ratio)).map(|(_, n)| n).sum();
            prop_assert_eq!(out.len(), expected);
            let kept: Vec<u16> = ids.iter().copied().filter(|&b| u32::from(b) % ratio == 0).collect();
            prop_assert_eq!(downsample_beams(&out, &kept, 8, 8).unwrap(), out);
        }
    }
}
