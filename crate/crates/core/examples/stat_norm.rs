//! Shifts source-domain box sizes toward target-domain mean dimensions and
//! moves the enclosed points along with each box.

use nap_select::align::{compute_size_delta, statnorm_labels, statnorm_points, ResizeMode};
use nap_select::io::{parse_label_line, Point, PointCloud, SizeStats};
use nap_select::metrics::{points_in_box, Box3D};

pub fn main() {
    let kitti = SizeStats::bundled("kitti").unwrap();
    let waymo = SizeStats::bundled("waymo").unwrap();
    let delta = compute_size_delta(&kitti, &waymo).unwrap();
    let car = delta.get("Car").unwrap();
    println!("Car delta (l, w, h) = ({:.2}, {:.2}, {:.2})", car.dl, car.dw, car.dh);

    let label = parse_label_line("Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59").unwrap();
    let adjusted = statnorm_labels(std::slice::from_ref(&label), &delta, ResizeMode::Additive).unwrap();
    println!("dims (h, w, l): {:.2?} -> {:.2?}", label.dims, adjusted[0].dims);

    let (original, resized) = (Box3D::from(&label), Box3D::from(&adjusted[0]));
    let c = original.center();
    let cloud: PointCloud = (-4..=4)
        .flat_map(|i| (-2..=2).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (x, z) = original.from_local_bev(0.4 * i as f64, 0.3 * j as f64);
            Point::new(x as f32, c[1] as f32, z as f32, 0.2)
        })
        .collect();
    let moved = statnorm_points(&cloud, &original, &resized).unwrap();
    println!(
        "points inside: {} before, {} after",
        points_in_box(&cloud, &original),
        points_in_box(&moved, &resized)
    );
}
