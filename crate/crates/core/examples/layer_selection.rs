//! Ranks candidate layers by how well nearest-bank Hamming distance
//! separates false positives from true positives.

use std::collections::BTreeMap;

use nap_select::bank::PatternBank;
use nap_select::layer_select::{rank_layers, LayerDistances};
use nap_select::patterns::{extract_pattern, BinaryPattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 128;

fn noisy(rng: &mut ChaCha8Rng, base: &[f64], noise: f64) -> BinaryPattern {
    let v: Vec<f64> = base.iter().map(|b| (b + rng.gen_range(-noise..noise)).max(0.0)).collect();
    extract_pattern(&v).unwrap()
}

pub fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut per_layer = BTreeMap::new();
    // Larger separation means FP activations drift further from GT ones.
    for (layer, fp_shift) in [("backbone.3", 0.05), ("roi.0", 0.6), ("roi.1", 0.3)] {
        let base: Vec<f64> = (0..DIM).map(|_| rng.gen_range(0.0..1.0)).collect();
        let other: Vec<f64> = (0..DIM).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mixed: Vec<f64> = base.iter().zip(&other).map(|(a, b)| a * (1.0 - fp_shift) + b * fp_shift).collect();
        let gt: Vec<BinaryPattern> = (0..300).map(|_| noisy(&mut rng, &base, 0.3)).collect();
        let tp: Vec<BinaryPattern> = (0..200).map(|_| noisy(&mut rng, &base, 0.3)).collect();
        let fp: Vec<BinaryPattern> = (0..200).map(|_| noisy(&mut rng, &mixed, 0.3)).collect();
        let bank = PatternBank::build(&gt).unwrap();
        per_layer.insert(
            layer.to_string(),
            LayerDistances {
                tp: bank.batch_nearest(&tp).unwrap(),
                fp: bank.batch_nearest(&fp).unwrap(),
            },
        );
    }
    for score in rank_layers(&per_layer) {
        println!("{:<12} auroc {:.3}  ({} tp, {} fp)", score.layer_id, score.auroc.unwrap_or(f64::NAN), score.n_tp, score.n_fp);
    }
}
