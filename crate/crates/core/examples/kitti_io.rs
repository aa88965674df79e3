//! Reading and writing KITTI labels, `.bin` point clouds and activation
//! dumps in both the JSONL and packed binary forms.

use nap_select::io::{
    decode_activation_binary, encode_activation_binary, normalize_intensity, parse_label_file,
    read_point_cloud, serialize_labels, write_activation_jsonl, ActivationRecord, IntensityMode, Point,
    PointCloud, Role,
};

const LABELS: &str = "\
Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59
Pedestrian 0.00 1 0.21 423.17 173.67 433.17 224.03 1.87 0.50 0.90 -5.18 1.71 23.45 0.00
DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10
";

pub fn main() {
    let labels = parse_label_file(LABELS).unwrap();
    for l in &labels {
        println!("{:<10} dims(h,w,l)={:?} at {:?}", l.class_name, l.dims, l.location);
    }
    assert_eq!(parse_label_file(&serialize_labels(&labels)).unwrap(), labels);

    let cloud: PointCloud = (0..4)
        .map(|i| Point::new(i as f32, 0.5, -1.0, 64.0 * i as f32))
        .collect();
    let back = read_point_cloud(&cloud.to_bytes()).unwrap();
    assert_eq!(back, cloud);
    let scaled = normalize_intensity(&back, IntensityMode::default()).unwrap();
    println!("intensities: {:?}", scaled.points.iter().map(|p| p.intensity).collect::<Vec<_>>());

    let records = vec![
        ActivationRecord {
            frame_id: "000001".into(),
            box_id: "b0".into(),
            layer_id: "roi.0".into(),
            role: Role::Gt,
            score: None,
            values: vec![0.0, 1.5, 0.25, 3.0],
        },
        ActivationRecord {
            frame_id: "000002".into(),
            box_id: "d3".into(),
            layer_id: "roi.0".into(),
            role: Role::Det,
            score: Some(0.875),
            values: vec![2.0, 0.0, 0.5, 0.0],
        },
    ];
    print!("{}", write_activation_jsonl(&records));
    let packed = encode_activation_binary(&records).unwrap();
    assert_eq!(decode_activation_binary(&packed).unwrap(), records);
    println!("binary dump: {} bytes", packed.len());
}
