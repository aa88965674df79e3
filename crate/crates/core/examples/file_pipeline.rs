//! The file-based pipeline driven through the `nap` command interface:
//! extract, bank, layers, score, select.

use std::fmt::Write;

use nap_select::cli::run;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(frame: &str, bx: usize, layer: &str, role: &str, score: Option<f64>, values: &[f64]) -> String {
    let score = score.map(|s| format!(",\"score\":{s}")).unwrap_or_default();
    let values: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!(
        "{{\"frame\":\"{frame}\",\"box\":\"b{bx}\",\"layer\":\"{layer}\",\"role\":\"{role}\"{score},\"values\":[{}]}}\n",
        values.join(",")
    )
}

pub fn main() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut dump = String::new();
    for layer in ["roi.0", "roi.1"] {
        let base: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut sample = |noise: f64| -> Vec<f64> { base.iter().map(|b| (b + rng.gen_range(-noise..noise)).max(0.0)).collect() };
        for i in 0..50 {
            dump.push_str(&record("src", i, layer, "gt", None, &sample(0.2)));
        }
        for i in 0..30 {
            dump.push_str(&record("val", i, layer, "tp", Some(0.9), &sample(0.2)));
            dump.push_str(&record("val", 100 + i, layer, "fp", Some(0.5), &sample(0.8)));
        }
        for f in 0..20 {
            for b in 0..(1 + f % 4) {
                let noise = 0.2 + 0.05 * (f % 5) as f64;
                dump.push_str(&record(&format!("{f:06}"), b, layer, "det", Some(0.7), &sample(noise)));
            }
        }
    }
    std::fs::write(p("dump.jsonl"), dump).unwrap();

    let steps: Vec<Vec<String>> = vec![
        vec!["layers".into(), "--dump".into(), p("dump.jsonl"), "--out".into(), p("layers.json")],
        vec!["extract".into(), "--dump".into(), p("dump.jsonl"), "--layer".into(), "roi.0".into(), "--out".into(), p("roi0.napb")],
        vec!["bank".into(), "--patterns".into(), p("roi0.napb"), "--out".into(), p("bank.napb")],
        vec!["score".into(), "--patterns".into(), p("roi0.napb"), "--bank".into(), p("bank.napb"), "--out".into(), p("scores.json")],
        vec!["select".into(), "--scores".into(), p("scores.json"), "--n".into(), "3".into(), "--out".into(), p("selection.json")],
    ];
    for args in steps {
        let code = run(std::iter::once("nap".to_string()).chain(args.iter().cloned()));
        assert_eq!(code, 0, "nap {}", args[0]);
    }
    let mut summary = String::new();
    writeln!(summary, "layers:\n{}", std::fs::read_to_string(p("layers.json")).unwrap()).unwrap();
    writeln!(summary, "selected frames:\n{}", std::fs::read_to_string(p("selection.json.frames.txt")).unwrap()).unwrap();
    print!("{summary}");
}
