//! Learning-rate tables and the L2-SP penalty for fine-tuning on the
//! selected frames.

use nap_select::schedules::{const_schedule, l2sp_gradient, l2sp_penalty, linear_fade, schedule_csv, L2SPConfig};

pub fn main() {
    let fade = linear_fade(0.01, 40).unwrap();
    println!("fade: lr(0) = {}, lr(20) = {}, lr(40) = {}", fade[0], fade[20], fade[40]);
    print!("{}", schedule_csv(&linear_fade(0.005, 4).unwrap()));
    let constant = const_schedule(0.001, 40).unwrap();
    println!("constant: {} entries of {}", constant.len(), constant[0]);

    let w0: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
    let w: Vec<f64> = w0.iter().enumerate().map(|(i, v)| v + 0.01 * i as f64).collect();
    for alpha in [0.01, 0.001] {
        let cfg = L2SPConfig::new(alpha).unwrap();
        let grad = l2sp_gradient(&w, &w0, cfg).unwrap();
        println!(
            "alpha {alpha}: penalty {:.3e}, |grad| {:.3e}",
            l2sp_penalty(&w, &w0, cfg).unwrap(),
            grad.iter().map(|g| g * g).sum::<f64>().sqrt()
        );
    }
}
