//! Runs every example's `main` so they stay in sync with the library.

#[path = "../examples/frame_selection.rs"]
mod frame_selection;

#[test]
fn frame_selection_runs() {
    frame_selection::main();
}

#[path = "../examples/layer_selection.rs"]
mod layer_selection;

#[test]
fn layer_selection_runs() {
    layer_selection::main();
}

#[path = "../examples/kitti_io.rs"]
mod kitti_io;

#[test]
fn kitti_io_runs() {
    kitti_io::main();
}

#[path = "../examples/stat_norm.rs"]
mod stat_norm;

#[test]
fn stat_norm_runs() {
    stat_norm::main();
}

#[path = "../examples/beam_downsampling.rs"]
mod beam_downsampling;

#[test]
fn beam_downsampling_runs() {
    beam_downsampling::main();
}

#[path = "../examples/evaluate_ap.rs"]
mod evaluate_ap;

#[test]
fn evaluate_ap_runs() {
    evaluate_ap::main();
}

#[path = "../examples/post_training_schedules.rs"]
mod post_training_schedules;

#[test]
fn post_training_schedules_runs() {
    post_training_schedules::main();
}

#[path = "../examples/file_pipeline.rs"]
mod file_pipeline;

#[test]
fn file_pipeline_runs() {
    file_pipeline::main();
}
