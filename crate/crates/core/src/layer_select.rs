//! Layer selection by AUROC of nearest-bank distances.
//!
//! Orientation: a layer scores 1.0 when every false positive lies farther
//! from the ground-truth bank than every true positive, 0.0 when the
//! opposite holds. Ties between a TP and an FP distance count one half.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Probability that a random FP distance exceeds a random TP distance,
/// with half credit for ties (normalized Mann-Whitney U). Computed from
/// midranks of the pooled sample.
pub fn auroc(tp_dists: &[u32], fp_dists: &[u32]) -> Result<f64> {
    if tp_dists.is_empty() {
        return Err(Error::Empty("true-positive distances"));
    }
    if fp_dists.is_empty() {
        return Err(Error::Empty("false-positive distances"));
    }
    let mut pooled: Vec<(u32, bool)> = tp_dists
        .iter()
        .map(|&d| (d, false))
        .chain(fp_dists.iter().map(|&d| (d, true)))
        .collect();
    pooled.sort_unstable_by_key(|&(d, _)| d);

    // Twice the FP rank sum, so midranks of tied runs stay integral.
    let mut fp_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share the midrank (i + 1 + j) / 2.
        let n_fp = pooled[i..j].iter().filter(|(_, fp)| *fp).count() as u128;
        fp_rank_sum2 += n_fp * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n = tp_dists.len() as u128;
    let m = fp_dists.len() as u128;
    // 2U = 2R - m(m+1)
    let u2 = fp_rank_sum2 - m * (m + 1);
    Ok(u2 as f64 / (2 * n * m) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerScore {
    #[serde(rename = "layer")]
    pub layer_id: String,
    /// `None` when the layer lacks TP or FP distances.
    pub auroc: Option<f64>,
    pub n_tp: usize,
    pub n_fp: usize,
}

impl LayerScore {
    pub fn is_defined(&self) -> bool {
        self.auroc.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerDistances {
    pub tp: Vec<u32>,
    pub fp: Vec<u32>,
}

/// Scores every layer and sorts by AUROC descending, then layer id.
/// Layers without TP or FP samples are kept at the end with no score.
pub fn rank_layers(per_layer: &BTreeMap<String, LayerDistances>) -> Vec<LayerScore> {
    let mut scores: Vec<LayerScore> = per_layer
        .par_iter()
        .map(|(layer, d)| LayerScore {
            layer_id: layer.clone(),
            auroc: auroc(&d.tp, &d.fp).ok(),
            n_tp: d.tp.len(),
            n_fp: d.fp.len(),
        })
        .collect();
    scores.sort_by(|a, b| match (a.auroc, b.auroc) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.layer_id.cmp(&b.layer_id)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.layer_id.cmp(&b.layer_id),
    });
    scores
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(tp: &[u32], fp: &[u32]) -> f64 {
        let mut wins = 0.0;
        for &t in tp {
            for &f in fp {
                if f > t {
                    wins += 1.0;
                } else if f == t {
                    wins += 0.5;
                }
            }
        }
        wins / (tp.len() * fp.len()) as f64
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[1, 2], &[3, 4]).unwrap(), 1.0);
        assert_eq!(auroc(&[3, 4], &[1, 2]).unwrap(), 0.0);
        assert_eq!(auroc(&[1, 2], &[2, 3]).unwrap(), 0.875);
        assert!(auroc(&[], &[1]).is_err());
        assert!(auroc(&[1], &[]).is_err());
        assert_eq!(auroc(&[5, 5], &[5]).unwrap(), 0.5);
    }

    fn layers(entries: &[(&str, &[u32], &[u32])]) -> BTreeMap<String, LayerDistances> {
        entries
            .iter()
            .map(|(l, tp, fp)| (l.to_string(), LayerDistances { tp: tp.to_vec(), fp: fp.to_vec() }))
            .collect()
    }

    #[test]
    fn ranking_examples() {
        let ranked = rank_layers(&layers(&[("roi.0", &[1], &[5]), ("roi.1", &[5], &[1])]));
        assert_eq!(ranked[0].layer_id, "roi.0");
        assert_eq!(ranked[0].auroc, Some(1.0));
        assert_eq!(ranked[1].auroc, Some(0.0));

        let single = rank_layers(&layers(&[("only", &[1, 2], &[3])]));
        assert_eq!(single.len(), 1);

        let tied = rank_layers(&layers(&[("b", &[1], &[2]), ("a", &[1], &[2])]));
        assert_eq!(tied.iter().map(|s| s.layer_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn undefined_layers_rank_last() {
        let ranked = rank_layers(&layers(&[("a", &[], &[2]), ("b", &[3], &[1]), ("c", &[1], &[])]));
        assert_eq!(ranked.iter().map(|s| s.layer_id.as_str()).collect::<Vec<_>>(), ["b", "a", "c"]);
        assert!(!ranked[1].is_defined());
        let json = serde_json::to_string(&ranked[1]).unwrap();
        assert_eq!(json, r#"{"layer":"a","auroc":null,"n_tp":0,"n_fp":1}"#);
    }

    fn samples() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
        (1u32..20).prop_flat_map(|range| {
            (
                prop::collection::vec(0..range, 1..200),
                prop::collection::vec(0..range, 1..200),
            )
        })
    }

    proptest! {
        #[test]
        fn rank_form_matches_pairwise((tp, fp) in samples()) {
            prop_assert!((auroc(&tp, &fp).unwrap() - pairwise(&tp, &fp)).abs() <= 1e-12);
        }

        #[test]
        fn swapping_roles_complements((tp, fp) in samples()) {
            prop_assert_eq!(auroc(&tp, &fp).unwrap() + auroc(&fp, &tp).unwrap(), 1.0);
        }

        #[test]
        fn invariant_under_monotone_transform((tp, fp) in samples(), a in 1u32..5, b in 0u32..100) {
            let f = |v: &[u32]| v.iter().map(|x| a * x * x + b).collect::<Vec<_>>();
            prop_assert_eq!(auroc(&tp, &fp).unwrap(), auroc(&f(&tp), &f(&fp)).unwrap());
        }
    }
}
