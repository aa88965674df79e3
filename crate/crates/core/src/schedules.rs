//! Post-training regularizer and learning-rate tables for external trainers.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2SPConfig {
    pub alpha: f64,
}

impl L2SPConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        Ok(L2SPConfig { alpha })
    }
}

fn check_pair(w: &[f64], w0: &[f64]) -> Result<()> {
    if w.len() != w0.len() {
        return Err(Error::DimensionMismatch {
            expected: w0.len(),
            found: w.len(),
        });
    }
    Ok(())
}

/// `alpha * ||w - w0||^2`.
pub fn l2sp_penalty(w: &[f64], w0: &[f64], cfg: L2SPConfig) -> Result<f64> {
    check_pair(w, w0)?;
    let sq: f64 = w.iter().zip(w0).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(cfg.alpha * sq)
}

/// `2 * alpha * (w - w0)`.
pub fn l2sp_gradient(w: &[f64], w0: &[f64], cfg: L2SPConfig) -> Result<Vec<f64>> {
    check_pair(w, w0)?;
    Ok(w.iter().zip(w0).map(|(a, b)| 2.0 * cfg.alpha * (a - b)).collect())
}

fn check_schedule(lr: f64, epochs: u32) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::NonPositive(format!("learning rate {lr}")));
    }
    if epochs == 0 {
        return Err(Error::NonPositive("epoch count".into()));
    }
    Ok(())
}

/// `lr0 * (1 - e / E)` for `e = 0..=E`; the first entry is exactly `lr0`
/// and the last exactly 0.
pub fn linear_fade(lr0: f64, epochs: u32) -> Result<Vec<f64>> {
    check_schedule(lr0, epochs)?;
    let total = f64::from(epochs);
    Ok((0..=epochs)
        .map(|e| lr0 * (1.0 - f64::from(e) / total))
        .collect())
}

/// `E + 1` copies of `lr`.
pub fn const_schedule(lr: f64, epochs: u32) -> Result<Vec<f64>> {
    check_schedule(lr, epochs)?;
    Ok(vec![lr; epochs as usize + 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub epoch: u32,
    pub lr: f64,
}

pub fn schedule_rows(lrs: &[f64]) -> Vec<ScheduleRow> {
    lrs.iter()
        .enumerate()
        .map(|(e, &lr)| ScheduleRow { epoch: e as u32, lr })
        .collect()
}

pub fn schedule_json(lrs: &[f64]) -> String {
    serde_json::to_string_pretty(&schedule_rows(lrs)).expect("rows serialize")
}

pub fn schedule_csv(lrs: &[f64]) -> String {
    let mut out = String::from("epoch,lr\n");
    for row in schedule_rows(lrs) {
        out.push_str(&format!("{},{}\n", row.epoch, row.lr));
    }
    out
}

/// Flat weights: u64-LE count, then that many f32-LE values.
pub fn read_weights<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    let n = u64::from_le_bytes(head) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != n * 4 {
        return Err(Error::Schema(format!(
            "weight file declares {n} values but holds {} bytes",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Schema(format!("weight {i} is not finite")));
    }
    Ok(values)
}

pub fn write_weights<W: Write>(mut w: W, values: &[f32]) -> Result<()> {
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_weight_file(path: &Path) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
    read_weights(std::io::BufReader::new(f)).map_err(|e| e.in_file(path))
}

pub fn write_weight_file(path: &Path, values: &[f32]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
    let mut w = std::io::BufWriter::new(f);
    write_weights(&mut w, values)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2SPReport {
    pub alpha: f64,
    pub n: usize,
    pub penalty: f64,
    pub grad_norm: f64,
}

pub fn l2sp_report(w: &[f64], w0: &[f64], cfg: L2SPConfig) -> Result<L2SPReport> {
    let penalty = l2sp_penalty(w, w0, cfg)?;
    let grad = l2sp_gradient(w, w0, cfg)?;
    Ok(L2SPReport {
        alpha: cfg.alpha,
        n: w.len(),
        penalty,
        grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(a: f64) -> L2SPConfig {
        L2SPConfig::new(a).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let w0 = [0.5, -1.0, 2.0, 0.0];
        assert_eq!(l2sp_penalty(&w0, &w0, cfg(0.01)).unwrap(), 0.0);
        let w: Vec<f64> = w0.iter().map(|x| x + 1.0).collect();
        assert!((l2sp_penalty(&w, &w0, cfg(0.01)).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(l2sp_penalty(&w, &w0, cfg(0.0)).unwrap(), 0.0);
        assert!(l2sp_penalty(&w[..3], &w0, cfg(0.01)).is_err());
        assert!(L2SPConfig::new(-0.1).is_err());
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(l2sp_gradient(&[3.0], &[1.0], cfg(0.5)).unwrap(), vec![2.0]);
        assert_eq!(l2sp_gradient(&[1.0, 2.0], &[1.0, 2.0], cfg(0.5)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn fade_examples() {
        let lr = linear_fade(0.01, 40).unwrap();
        assert_eq!(lr.len(), 41);
        assert_eq!(lr[0], 0.01);
        assert!((lr[20] - 0.005).abs() < 1e-15);
        assert_eq!(lr[40], 0.0);
        assert_eq!(linear_fade(0.3, 1).unwrap(), vec![0.3, 0.0]);
        assert!(linear_fade(0.0, 10).is_err());
        assert!(linear_fade(0.1, 0).is_err());
    }

    #[test]
    fn const_examples() {
        assert_eq!(const_schedule(0.001, 40).unwrap(), vec![0.001; 41]);
        assert_eq!(const_schedule(0.005, 1).unwrap(), vec![0.005, 0.005]);
        assert!(const_schedule(-1.0, 4).is_err());
    }

    #[test]
    fn table_formats() {
        let lr = linear_fade(0.01, 2).unwrap();
        assert_eq!(schedule_csv(&lr), "epoch,lr\n0,0.01\n1,0.005\n2,0\n");
        assert!(schedule_json(&lr).contains("\"epoch\": 2"));
    }

    #[test]
    fn weight_file_round_trip() {
        let vals = [1.5f32, -2.25, 0.0, 1e-3];
        let mut buf = Vec::new();
        write_weights(&mut buf, &vals).unwrap();
        assert_eq!(buf.len(), 8 + 16);
        let back = read_weights(buf.as_slice()).unwrap();
        assert_eq!(back, vals.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
        assert!(read_weights(&buf[..buf.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn penalty_non_negative(w in prop::collection::vec(-10.0f64..10.0, 0..50), a in 0.0f64..1.0) {
            let w0: Vec<f64> = w.iter().map(|x| x * 0.5).collect();
            let p = l2sp_penalty(&w, &w0, cfg(a)).unwrap();
            prop_assert!(p >= 0.0);
            let zero = a == 0.0 || w == w0;
            prop_assert_eq!(p == 0.0, zero);
        }

        #[test]
        fn fade_second_differences_vanish(lr0 in 1e-5f64..1.0, e in 2u32..500) {
            let lr = linear_fade(lr0, e).unwrap();
            for t in lr.windows(3) {
                prop_assert!((t[0] - 2.0 * t[1] + t[2]).abs() <= 1e-15);
            }
            prop_assert_eq!(lr[e as usize], 0.0);
            prop_assert_eq!(lr[0], lr0);
        }
    }
}
