//! KITTI-style 3D average precision on a handful of synthetic frames, with
//! and without the ground-truth point-count filter.

use nap_select::io::{Point, PointCloud};
use nap_select::metrics::{evaluate, Box3D, EvalFrame, EvalSettings};

fn car(x: f64, z: f64, yaw: f64) -> Box3D {
    Box3D::new("Car", [1.5, 1.6, 3.9], [x, 1.7, z], yaw)
}

pub fn main() {
    let mut frames = Vec::new();
    for f in 0..4 {
        let offset = f as f64 * 0.15;
        let gts = vec![car(-3.0, 15.0, 0.1), car(4.0, 30.0, -0.4)];
        let dets = vec![
            car(-3.0 + offset, 15.0, 0.1).with_score(0.9 - 0.1 * f as f64),
            car(4.2, 30.4, -0.3).with_score(0.6),
            car(10.0, 40.0, 0.0).with_score(0.4),
        ];
        // Only the near car receives lidar returns.
        let c = gts[0].center();
        let cloud: PointCloud = (0..80)
            .map(|i| Point::new((c[0] + 0.01 * i as f64) as f32, c[1] as f32, c[2] as f32, 0.3))
            .collect();
        frames.push(EvalFrame { frame_id: format!("{f:06}"), gts, dets, cloud: Some(cloud) });
    }

    let settings = EvalSettings::default();
    println!("{}", evaluate(&frames, &settings).unwrap().to_json());

    let filtered = EvalSettings { min_points: Some(50), ..EvalSettings::default() };
    println!("{}", evaluate(&frames, &filtered).unwrap().to_json());
}
