//! Frame entropy scoring and iterative diverse frame selection.
//!
//! Each detected box carries `D(b)`, its Hamming distance to the nearest
//! ground-truth pattern. A frame's entropy `H` is the Shannon entropy (in
//! nats) of the empirical distribution of those integer distances. Frames
//! are then picked one at a time:
//!
//! 1. the proposal set is the `K` unselected frames with the highest `H`;
//! 2. each proposal gets `Dist`, its mean pairwise pattern distance to the
//!    frames picked so far averaged over those frames (1 before any pick);
//! 3. `H` and `Dist` are divided by their maximum over the proposal set;
//! 4. the frame maximizing the product of the two normalized factors wins.
//!
//! Every tie (proposal cut-off, argmax) goes to the smaller frame id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{frame_bit_counts, mean_pairwise_hamming, FrameBitCounts, PatternBank};
use crate::error::{Error, Result};
use crate::patterns::BinaryPattern;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistogram {
    weights: BTreeMap<u32, f64>,
    n_boxes: usize,
}

impl DistanceHistogram {
    pub fn weights(&self) -> &BTreeMap<u32, f64> {
        &self.weights
    }

    pub fn n_boxes(&self) -> usize {
        self.n_boxes
    }
}

pub fn distance_histogram(dists: &[u32]) -> Result<DistanceHistogram> {
    if dists.is_empty() {
        return Err(Error::Empty("distance list"));
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &d in dists {
        *counts.entry(d).or_default() += 1;
    }
    let n = dists.len() as f64;
    Ok(DistanceHistogram {
        weights: counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
        n_boxes: dists.len(),
    })
}

/// Shannon entropy in nats, summed in ascending distance order.
pub fn entropy(h: &DistanceHistogram) -> f64 {
    let s: f64 = h.weights.values().map(|&p| p * p.ln()).sum();
    // -0.0 for a single support point
    if s == 0.0 {
        0.0
    } else {
        -s
    }
}

/// One detected box of a target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub pattern: BinaryPattern,
    /// Nearest-bank Hamming distance `D(b)`.
    pub distance: u32,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    frame_id: String,
    boxes: Vec<ScoredBox>,
    distances: Vec<u32>,
    bit_counts: FrameBitCounts,
    entropy: f64,
}

impl FrameRecord {
    /// Builds a record from a frame's boxes; needs at least one box.
    pub fn new(frame_id: impl Into<String>, boxes: Vec<ScoredBox>) -> Result<Self> {
        let patterns: Vec<BinaryPattern> = boxes.iter().map(|b| b.pattern.clone()).collect();
        let bit_counts = frame_bit_counts(&patterns)?;
        let distances: Vec<u32> = boxes.iter().map(|b| b.distance).collect();
        let entropy = entropy(&distance_histogram(&distances)?);
        Ok(FrameRecord {
            frame_id: frame_id.into(),
            boxes,
            distances,
            bit_counts,
            entropy,
        })
    }

    /// Replaces the computed entropy with an externally supplied score.
    /// A score threshold in [`SelectionConfig`] rebuilds the record and
    /// drops the override.
    pub fn with_entropy(mut self, entropy: f64) -> Result<Self> {
        if !(entropy >= 0.0) || !entropy.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "frame {}: entropy {entropy} must be finite and non-negative",
                self.frame_id
            )));
        }
        self.entropy = entropy;
        Ok(self)
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn boxes(&self) -> &[ScoredBox] {
        &self.boxes
    }

    pub fn distances(&self) -> &[u32] {
        &self.distances
    }

    pub fn bit_counts(&self) -> &FrameBitCounts {
        &self.bit_counts
    }

    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn n_boxes(&self) -> usize {
        self.boxes.len()
    }

    fn above_threshold(&self, threshold: f64) -> Option<Result<FrameRecord>> {
        let kept: Vec<ScoredBox> = self
            .boxes
            .iter()
            .filter(|b| b.score.is_none_or(|s| s >= threshold))
            .cloned()
            .collect();
        (!kept.is_empty()).then(|| FrameRecord::new(self.frame_id.clone(), kept))
    }
}

/// Groups target detections by frame and scores each against the bank.
/// Frames come back sorted by id.
pub fn score_frames<I>(bank: &PatternBank, detections: I) -> Result<Vec<FrameRecord>>
where
    I: IntoIterator<Item = (String, BinaryPattern, Option<f64>)>,
{
    let mut by_frame: BTreeMap<String, Vec<(BinaryPattern, Option<f64>)>> = BTreeMap::new();
    for (frame, pattern, score) in detections {
        by_frame.entry(frame).or_default().push((pattern, score));
    }
    by_frame
        .into_iter()
        .map(|(frame, boxes)| {
            let patterns: Vec<BinaryPattern> = boxes.iter().map(|(p, _)| p.clone()).collect();
            let distances = bank.batch_nearest(&patterns)?;
            let scored = boxes
                .into_iter()
                .zip(distances)
                .map(|((pattern, score), distance)| ScoredBox {
                    pattern,
                    distance,
                    score,
                })
                .collect();
            FrameRecord::new(frame, scored)
        })
        .collect()
}

/// Mean over `selected` of the mean pairwise Hamming distance to
/// `candidate`; 1.0 when nothing is selected yet.
pub fn frame_dist(candidate: &FrameRecord, selected: &[&FrameRecord]) -> Result<f64> {
    if selected.is_empty() {
        return Ok(1.0);
    }
    let mut sum = 0.0;
    for s in selected {
        sum += mean_pairwise_hamming(&candidate.bit_counts, &s.bit_counts)?;
    }
    Ok(sum / selected.len() as f64)
}

/// Divides every value by the maximum; an all-zero input maps to all ones.
pub fn max_norm(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("values to normalize"));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "cannot max-normalize negative or NaN value {v}"
        )));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(vec![1.0; values.len()]);
    }
    Ok(values.iter().map(|v| v / max).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Proposal set size `K`.
    pub proposal_size: usize,
    /// Number of frames to select, `N`.
    pub target_count: usize,
    /// Frames with fewer detections are not eligible.
    pub min_boxes: usize,
    /// Detections scoring below this are ignored.
    pub score_threshold: Option<f64>,
}

impl SelectionConfig {
    /// `N` frames with the default proposal size `K = 10 N`.
    pub fn new(target_count: usize) -> Self {
        SelectionConfig {
            proposal_size: target_count.saturating_mul(10),
            target_count,
            min_boxes: 1,
            score_threshold: None,
        }
    }

    pub fn with_proposal_size(mut self, k: usize) -> Self {
        self.proposal_size = k;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.target_count == 0 {
            return Err(Error::InvalidArgument("target count N must be at least 1".into()));
        }
        if self.proposal_size == 0 {
            return Err(Error::InvalidArgument("proposal size K must be at least 1".into()));
        }
        if let Some(t) = self.score_threshold {
            if t.is_nan() {
                return Err(Error::InvalidArgument("score threshold is NaN".into()));
            }
        }
        Ok(())
    }
}

/// Scores recorded for one selection iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    /// 1-based iteration number.
    pub iter: usize,
    #[serde(rename = "frame")]
    pub frame_id: String,
    #[serde(rename = "H")]
    pub entropy: f64,
    #[serde(rename = "Dist")]
    pub dist: f64,
    #[serde(rename = "H_norm")]
    pub entropy_norm: f64,
    #[serde(rename = "Dist_norm")]
    pub dist_norm: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub config: SelectionConfig,
    pub selected: Vec<SelectionStep>,
}

impl SelectionResult {
    pub fn frame_ids(&self) -> impl Iterator<Item = &str> {
        self.selected.iter().map(|s| s.frame_id.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection result serializes")
    }

    /// One selected frame id per line.
    pub fn frame_list(&self) -> String {
        self.frame_ids().map(|f| format!("{f}\n")).collect()
    }
}

/// Higher entropy first, then smaller frame id.
fn proposal_order(a: &FrameRecord, b: &FrameRecord) -> Ordering {
    b.entropy
        .total_cmp(&a.entropy)
        .then_with(|| a.frame_id.cmp(&b.frame_id))
}

fn eligible_frames(frames: &[FrameRecord], cfg: &SelectionConfig) -> Result<Vec<FrameRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        if !seen.insert(f.frame_id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate frame id {}", f.frame_id)));
        }
        let frame = match cfg.score_threshold {
            Some(t) => match f.above_threshold(t) {
                Some(rebuilt) => rebuilt?,
                None => continue,
            },
            None => f.clone(),
        };
        if frame.n_boxes() >= cfg.min_boxes.max(1) {
            out.push(frame);
        }
    }
    if out.is_empty() {
        return Err(Error::NoEligibleFrames);
    }
    // Input order must not matter.
    out.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    Ok(out)
}

/// Runs diverse frame selection until `min(N, #eligible)` frames are picked.
pub fn select_frames(frames: &[FrameRecord], cfg: &SelectionConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let frames = eligible_frames(frames, cfg)?;
    let target = cfg.target_count.min(frames.len());

    let mut selected: Vec<usize> = Vec::with_capacity(target);
    let mut is_selected = vec![false; frames.len()];
    // Running sum of mean pairwise distances to selected[..synced[i]],
    // accumulated in selection order so every pair is computed once.
    let mut dist_sum = vec![0.0f64; frames.len()];
    let mut synced = vec![0usize; frames.len()];
    let mut steps = Vec::with_capacity(target);

    let mut by_entropy: Vec<usize> = (0..frames.len()).collect();
    by_entropy.sort_by(|&a, &b| proposal_order(&frames[a], &frames[b]));

    while selected.len() < target {
        let proposals: Vec<usize> = by_entropy
            .iter()
            .copied()
            .filter(|&i| !is_selected[i])
            .take(cfg.proposal_size)
            .collect();

        let updates: Vec<(usize, f64)> = proposals
            .par_iter()
            .map(|&i| {
                let mut sum = dist_sum[i];
                for &s in &selected[synced[i]..] {
                    sum += mean_pairwise_hamming(&frames[i].bit_counts, &frames[s].bit_counts)?;
                }
                Ok((i, sum))
            })
            .collect::<Result<_>>()?;
        for &(i, sum) in &updates {
            dist_sum[i] = sum;
            synced[i] = selected.len();
        }

        let entropies: Vec<f64> = proposals.iter().map(|&i| frames[i].entropy).collect();
        let dists: Vec<f64> = proposals
            .iter()
            .map(|&i| {
                if selected.is_empty() {
                    1.0
                } else {
                    dist_sum[i] / selected.len() as f64
                }
            })
            .collect();
        let h_norm = max_norm(&entropies)?;
        let d_norm = max_norm(&dists)?;

        let mut best: Option<(usize, f64)> = None;
        for (slot, &i) in proposals.iter().enumerate() {
            let product = h_norm[slot] * d_norm[slot];
            let better = match best {
                None => true,
                Some((b, bp)) => {
                    product > bp
                        || (product == bp && frames[i].frame_id < frames[proposals[b]].frame_id)
                }
            };
            if better {
                best = Some((slot, product));
            }
        }
        let (slot, product) = best.expect("proposal set is non-empty");
        let pick = proposals[slot];
        steps.push(SelectionStep {
            iter: selected.len() + 1,
            frame_id: frames[pick].frame_id.clone(),
            entropy: entropies[slot],
            dist: dists[slot],
            entropy_norm: h_norm[slot],
            dist_norm: d_norm[slot],
            product,
        });
        is_selected[pick] = true;
        selected.push(pick);
    }

    Ok(SelectionResult {
        config: cfg.clone(),
        selected: steps,
    })
}
