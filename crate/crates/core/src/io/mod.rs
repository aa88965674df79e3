//! On-disk formats: KITTI labels and point clouds, activation dumps and
//! size statistics.

mod cloud;
mod dump;
mod label;
mod stats;

pub use cloud::{
    beam_sidecar_bytes, normalize_intensity, read_beam_sidecar, read_point_cloud,
    read_point_cloud_file, write_point_cloud_file, IntensityMode, Point, PointCloud,
};
pub use dump::{
    decode_activation_binary, encode_activation_binary, parse_activation_jsonl,
    read_activation_dump, write_activation_jsonl, ActivationRecord, Role, DUMP_MAGIC,
};
pub use label::{
    parse_label_file, parse_label_line, read_label_file, serialize_labels, write_label_file,
    BoxLabel, DONT_CARE,
};
pub use stats::{read_size_stats, resolve_size_stats, MeanDims, SizeStats};
