//! Frame accuracy, segmental edit score and overlap F1, reported as percentages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{segments_of, Segment};

/// IoU thresholds of the three reported F1 scores.
pub const F1_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

/// How predicted segments are paired with ground-truth segments for F1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Matching {
    /// Maximum number of one-to-one same-class pairs with IoU ≥ τ.
    #[default]
    Optimal,
    /// Predicted segments in temporal order each claim the unmatched
    /// same-class ground-truth segment of largest IoU.
    Greedy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Class excluded from every metric (frames by ground truth, segments on both sides).
    pub background: Option<usize>,
    pub matching: F1Matching,
}

/// The five reported metrics of one video (or an aggregate) and their mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub acc: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
    pub avg: f64,
}

impl VideoMetrics {
    pub fn new(acc: f64, edit: f64, f1_10: f64, f1_25: f64, f1_50: f64) -> Self {
        let avg = (acc + edit + f1_10 + f1_25 + f1_50) / 5.0;
        Self {
            acc,
            edit,
            f1_10,
            f1_25,
            f1_50,
            avg,
        }
    }

    fn components(&self) -> [f64; 5] {
        [self.acc, self.edit, self.f1_10, self.f1_25, self.f1_50]
    }
}

fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptySequence);
    }
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            emb: pred.len(),
            gt: gt.len(),
        });
    }
    Ok(())
}

fn foreground(labels: &[usize], background: Option<usize>) -> Result<Vec<Segment>> {
    let mut segs = segments_of(labels)?;
    if let Some(bg) = background {
        segs.retain(|s| s.label != bg);
    }
    Ok(segs)
}

/// Percentage of frames whose predicted label equals the ground truth.
///
/// With a background class, frames whose ground truth is background are not
/// counted; if no frame remains the accuracy is 0.
pub fn frame_accuracy(pred: &[usize], gt: &[usize], background: Option<usize>) -> Result<f64> {
    check_lengths(pred, gt)?;
    let (mut hits, mut total) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        if Some(g) == background {
            continue;
        }
        total += 1;
        hits += usize::from(p == g);
    }
    Ok(if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    })
}

/// `100·(1 − Lev(pred segments, gt segments) / max(|pred|, |gt|))` over segment label sequences.
pub fn edit_score(pred: &[usize], gt: &[usize], background: Option<usize>) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptySequence);
    }
    let p: Vec<usize> = foreground(pred, background)?.iter().map(|s| s.label).collect();
    let g: Vec<usize> = foreground(gt, background)?.iter().map(|s| s.label).collect();
    let longest = p.len().max(g.len());
    if longest == 0 {
        return Ok(100.0);
    }
    let distance = strsim::generic_levenshtein(&p, &g);
    Ok((100.0 * (1.0 - distance as f64 / longest as f64)).max(0.0))
}

/// Segment-level F1 at IoU threshold `tau`, as a percentage.
pub fn f1_at(pred: &[usize], gt: &[usize], tau: f64, opts: &MetricOptions) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParam(format!(
            "IoU threshold must lie in (0, 1), got {tau}"
        )));
    }
    check_lengths(pred, gt)?;
    let p = foreground(pred, opts.background)?;
    let g = foreground(gt, opts.background)?;
    let tp = match opts.matching {
        F1Matching::Optimal => optimal_true_positives(&p, &g, tau),
        F1Matching::Greedy => greedy_true_positives(&p, &g, tau),
    };
    let denom = p.len() + g.len();
    Ok(if denom == 0 {
        0.0
    } else {
        // 2TP / (2TP + FP + FN) with FP = |P| − TP and FN = |G| − TP.
        100.0 * 2.0 * tp as f64 / denom as f64
    })
}

fn greedy_true_positives(pred: &[Segment], gt: &[Segment], tau: f64) -> usize {
    let mut used = vec![false; gt.len()];
    let mut tp = 0;
    for p in pred {
        let best = gt
            .iter()
            .enumerate()
            .filter(|(k, g)| !used[*k] && g.label == p.label)
            .map(|(k, g)| (k, p.iou(g)))
            .fold(None, |acc: Option<(usize, f64)>, cand| match acc {
                Some(a) if a.1 >= cand.1 => Some(a),
                _ => Some(cand),
            });
        if let Some((k, iou)) = best {
            if iou >= tau {
                used[k] = true;
                tp += 1;
            }
        }
    }
    tp
}

/// Maximum one-to-one matching between same-class segments with IoU ≥ τ
/// (augmenting paths, one bipartite graph per class).
fn optimal_true_positives(pred: &[Segment], gt: &[Segment], tau: f64) -> usize {
    let edges: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| {
            gt.iter()
                .enumerate()
                .filter(|(_, g)| g.label == p.label && p.iou(g) >= tau)
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gt.len()];
    let mut matched = 0;
    for p in 0..pred.len() {
        let mut seen = vec![false; gt.len()];
        if augment(p, &edges, &mut owner, &mut seen) {
            matched += 1;
        }
    }
    matched
}

fn augment(p: usize, edges: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &g in &edges[p] {
        if seen[g] {
            continue;
        }
        seen[g] = true;
        let free = match owner[g] {
            None => true,
            Some(q) => augment(q, edges, owner, seen),
        };
        if free {
            owner[g] = Some(p);
            return true;
        }
    }
    false
}

/// All five metrics for one prediction against its ground truth.
pub fn evaluate(pred: &[usize], gt: &[usize], opts: &MetricOptions) -> Result<VideoMetrics> {
    let acc = frame_accuracy(pred, gt, opts.background)?;
    let edit = edit_score(pred, gt, opts.background)?;
    let [f1_10, f1_25, f1_50] = F1_THRESHOLDS.map(|tau| f1_at(pred, gt, tau, opts));
    Ok(VideoMetrics::new(acc, edit, f1_10?, f1_25?, f1_50?))
}

/// Unweighted mean of each metric; `avg` is recomputed from the five means.
pub fn aggregate(per_video: &[VideoMetrics]) -> Result<VideoMetrics> {
    if per_video.is_empty() {
        return Err(Error::NoVideos("cannot aggregate zero videos".into()));
    }
    let mut sums = [0.0; 5];
    for m in per_video {
        for (s, x) in sums.iter_mut().zip(m.components()) {
            *s += x;
        }
    }
    let n = per_video.len() as f64;
    let [acc, edit, f1_10, f1_25, f1_50] = sums.map(|s| s / n);
    Ok(VideoMetrics::new(acc, edit, f1_10, f1_25, f1_50))
}

/// Mean over videos within each split, then mean over splits.
pub fn aggregate_splits(splits: &[Vec<VideoMetrics>]) -> Result<VideoMetrics> {
    let per_split = splits.iter().map(|s| aggregate(s)).collect::<Result<Vec<_>>>()?;
    aggregate(&per_split)
}
