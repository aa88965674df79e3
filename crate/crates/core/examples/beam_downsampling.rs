//! Emulates a 32-beam sensor from a 64-beam sweep by recovering beam ids
//! from elevation angles and dropping every other ring.

use nap_select::align::{downsample_beams, estimate_beams, fit_beam_model};
use nap_select::io::{Point, PointCloud};

fn sweep(beams: usize, per_beam: usize) -> PointCloud {
    let (lo, hi) = (-24.8f64, 2.0f64);
    let step = (hi - lo) / beams as f64;
    (0..beams)
        .flat_map(|b| (0..per_beam).map(move |k| (b, k)))
        .map(|(b, k)| {
            let el = (lo + step * (b as f64 + 0.5)).to_radians();
            let az = k as f64 / per_beam as f64 * std::f64::consts::TAU;
            let r = 15.0 + (k % 7) as f64;
            Point::new(
                (r * el.cos() * az.cos()) as f32,
                (r * el.cos() * az.sin()) as f32,
                (r * el.sin()) as f32,
                0.5,
            )
        })
        .collect()
}

pub fn main() {
    let cloud = sweep(64, 360);
    let model = fit_beam_model(&cloud, 64).unwrap();
    println!(
        "elevation range [{:.2}, {:.2}] deg",
        model.min_elevation.to_degrees(),
        model.max_elevation.to_degrees()
    );
    let ids = estimate_beams(&cloud, 64).unwrap();
    for target in [32, 16] {
        let kept = downsample_beams(&cloud, &ids, 64, target).unwrap();
        println!("64 -> {target} beams: {} of {} points", kept.len(), cloud.len());
    }
    if let Err(e) = downsample_beams(&cloud, &ids, 64, 40) {
        println!("64 -> 40 beams: {e}");
    }
}
