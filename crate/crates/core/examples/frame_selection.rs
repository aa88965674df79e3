//! Scores synthetic target frames against a ground-truth pattern bank and
//! picks a small, diverse, high-entropy subset for annotation.

use nap_select::bank::PatternBank;
use nap_select::diversity::{score_frames, select_frames, SelectionConfig};
use nap_select::patterns::{extract_pattern, BinaryPattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 256;

fn activations(rng: &mut ChaCha8Rng, center: &[f64], noise: f64) -> Vec<f64> {
    center.iter().map(|c| (c + rng.gen_range(-noise..noise)).max(0.0)).collect()
}

pub fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let prototypes: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..DIM).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();

    // Source ground truth only covers the first two prototypes.
    let bank_patterns: Vec<BinaryPattern> = (0..400)
        .map(|i| extract_pattern(&activations(&mut rng, &prototypes[i % 2], 0.3)).unwrap())
        .collect();
    let bank = PatternBank::build(&bank_patterns).unwrap();

    let mut detections = Vec::new();
    for f in 0..60 {
        let frame = format!("{f:06}");
        let n_boxes = rng.gen_range(1..8);
        for _ in 0..n_boxes {
            let proto = &prototypes[rng.gen_range(0..4)];
            let p = extract_pattern(&activations(&mut rng, proto, 0.5)).unwrap();
            detections.push((frame.clone(), p, Some(rng.gen_range(0.3..1.0))));
        }
    }
    let frames = score_frames(&bank, detections).unwrap();

    let cfg = SelectionConfig::new(5).with_proposal_size(20);
    let result = select_frames(&frames, &cfg).unwrap();
    println!("{:>4}  {:>6}  {:>6}  {:>6}  {:>7}", "iter", "frame", "H", "Dist", "product");
    for s in &result.selected {
        println!(
            "{:>4}  {:>6}  {:>6.3}  {:>6.2}  {:>7.3}",
            s.iter, s.frame_id, s.entropy, s.dist, s.product
        );
    }
    assert_eq!(result.selected.len(), 5);
}
