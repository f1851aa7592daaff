//! Training-free reference labelers: random-uniform and the equal-splits family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{argmax, FrameLabeling, SimilarityMatrix};

/// Each frame drawn independently and uniformly from `0..n`.
pub fn random_uniform(frames: usize, n: usize, seed: u64) -> Result<FrameLabeling> {
    if n == 0 {
        return Err(Error::InvalidParam("random_uniform needs at least one class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..frames).map(|_| rng.gen_range(0..n)).collect();
    FrameLabeling::with_vocab_size(labels, n)
}

/// Contiguous bins with edges `e_k = ⌊kT/K⌋`; bin `k` covers frames `e_k..e_{k+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinPartition {
    edges: Vec<usize>,
}

impl BinPartition {
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn frames(&self) -> usize {
        *self.edges.last().expect("at least two edges")
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.edges.windows(2).map(|w| w[0]..w[1])
    }

    /// Per-frame labels from one label per bin.
    pub fn expand(&self, bin_labels: &[usize]) -> Vec<usize> {
        self.ranges()
            .zip(bin_labels)
            .flat_map(|(r, &l)| std::iter::repeat_n(l, r.len()))
            .collect()
    }
}

pub fn equal_bins(frames: usize, k: usize) -> Result<BinPartition> {
    if k == 0 {
        return Err(Error::InvalidParam("bin count must be >= 1".into()));
    }
    if k > frames {
        return Err(Error::TooManyBins { k, t: frames });
    }
    let edges = (0..=k).map(|i| i * frames / k).collect();
    Ok(BinPartition { edges })
}

/// Mean similarity of each class over each bin: `scores[k][c]`.
pub fn bin_mean_scores(s: &SimilarityMatrix, bins: &BinPartition) -> Vec<Vec<f64>> {
    bins.ranges()
        .map(|r| {
            let len = r.len() as f64;
            let mut sums = vec![0.0; s.actions()];
            for t in r {
                for (acc, &x) in sums.iter_mut().zip(s.row(t)) {
                    *acc += x;
                }
            }
            sums.into_iter().map(|x| x / len).collect()
        })
        .collect()
}

fn partition_for(s: &SimilarityMatrix, k: usize) -> Result<BinPartition> {
    equal_bins(s.frames(), k)
}

fn finish(bins: &BinPartition, bin_labels: &[usize], n: usize) -> Result<FrameLabeling> {
    FrameLabeling::with_vocab_size(bins.expand(bin_labels), n)
}

/// Each bin takes the class with the highest mean similarity.
pub fn es_mean(s: &SimilarityMatrix, k: usize) -> Result<FrameLabeling> {
    let bins = partition_for(s, k)?;
    let labels: Vec<usize> = bin_mean_scores(s, &bins).iter().map(|row| argmax(row)).collect();
    finish(&bins, &labels, s.actions())
}

/// Each bin takes the most frequent per-frame winner; ties go to the larger
/// bin-mean score, then to the lower class index.
pub fn es_vote(s: &SimilarityMatrix, k: usize) -> Result<FrameLabeling> {
    let bins = partition_for(s, k)?;
    let means = bin_mean_scores(s, &bins);
    let winners: Vec<usize> = s.values().row_iter().map(argmax).collect();
    let labels: Vec<usize> = bins
        .ranges()
        .zip(&means)
        .map(|(r, mean)| modal_class(&winners[r], mean))
        .collect();
    finish(&bins, &labels, s.actions())
}

fn modal_class(winners: &[usize], mean: &[f64]) -> usize {
    let mut counts = vec![0usize; mean.len()];
    for &w in winners {
        counts[w] += 1;
    }
    let mut best = 0;
    for c in 1..counts.len() {
        if counts[c] > counts[best] || (counts[c] == counts[best] && mean[c] > mean[best]) {
            best = c;
        }
    }
    best
}

/// Equal splits decoded with a non-repetition penalty: the bin label path
/// maximizes `Σ_k s[k][y_k] − λ·#{k ≥ 1 : y_k = y_{k−1}}` over bin-mean scores.
pub fn es_nrp(s: &SimilarityMatrix, k: usize, lambda: f64) -> Result<FrameLabeling> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParam(format!("lambda must be >= 0, got {lambda}")));
    }
    let bins = partition_for(s, k)?;
    let scores = bin_mean_scores(s, &bins);
    let labels = if lambda == 0.0 {
        scores.iter().map(|row| argmax(row)).collect()
    } else {
        non_repetition_path(&scores, lambda)
    };
    finish(&bins, &labels, s.actions())
}

/// Best and runner-up entries of `values` (lowest index wins ties).
fn top_two(values: &[f64]) -> (usize, Option<usize>) {
    let best = argmax(values);
    let second = (0..values.len())
        .filter(|&c| c != best)
        .fold(None, |acc: Option<usize>, c| match acc {
            Some(s) if values[s] >= values[c] => Some(s),
            _ => Some(c),
        });
    (best, second)
}

/// Dynamic-programming decode of the penalized path in O(K·C).
///
/// Best suffix values are computed from the last bin backwards; for class `c`
/// the best successor is either the overall best next class (the runner-up
/// when that is `c` itself) or `c` at a cost of `λ`. The path is then read
/// forwards taking the lowest optimal class at every bin, which yields the
/// lexicographically smallest optimal path.
pub fn non_repetition_path(scores: &[Vec<f64>], lambda: f64) -> Vec<usize> {
    let Some(last) = scores.last() else {
        return Vec::new();
    };
    let classes = last.len();
    // suffix[k][c]: best score of bins k.. given y_k = c.
    let mut suffix = vec![last.clone()];
    for row in scores[..scores.len() - 1].iter().rev() {
        let next = suffix.last().expect("non-empty");
        let (best, second) = top_two(next);
        let values = (0..classes)
            .map(|c| {
                let stay = next[c] - lambda;
                let other = if c == best { second } else { Some(best) };
                row[c] + other.map_or(stay, |o| next[o].max(stay))
            })
            .collect();
        suffix.push(values);
    }
    suffix.reverse();

    let mut path = Vec::with_capacity(scores.len());
    path.push(argmax(&suffix[0]));
    for values in &suffix[1..] {
        let prev = *path.last().expect("non-empty");
        let mut pick = 0;
        let mut pick_value = f64::NEG_INFINITY;
        for (c, &v) in values.iter().enumerate() {
            let v = if c == prev { v - lambda } else { v };
            if v > pick_value {
                pick = c;
                pick_value = v;
            }
        }
        path.push(pick);
    }
    path
}

/// Objective maximized by [`non_repetition_path`].
pub fn non_repetition_score(scores: &[Vec<f64>], path: &[usize], lambda: f64) -> f64 {
    let gain: f64 = scores.iter().zip(path).map(|(row, &c)| row[c]).sum();
    let repeats = path.windows(2).filter(|w| w[0] == w[1]).count();
    gain - lambda * repeats as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sim(rows: &[Vec<f64>]) -> SimilarityMatrix {
        SimilarityMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn random_uniform_single_class_and_determinism() {
        assert!(random_uniform(50, 1, 3).unwrap().labels().iter().all(|&l| l == 0));
        assert_eq!(random_uniform(500, 5, 42).unwrap(), random_uniform(500, 5, 42).unwrap());
        assert_ne!(random_uniform(500, 5, 42).unwrap(), random_uniform(500, 5, 43).unwrap());
    }

    #[test]
    fn random_uniform_frequencies() {
        let labels = random_uniform(100_000, 4, 7).unwrap();
        let mut counts = [0usize; 4];
        for &l in labels.labels() {
            counts[l] += 1;
        }
        for c in counts {
            assert!((c as f64 / 100_000.0 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn bin_edges_follow_floor_formula() {
        assert_eq!(equal_bins(10, 3).unwrap().edges(), &[0, 3, 6, 10]);
        assert_eq!(equal_bins(7, 2).unwrap().edges(), &[0, 3, 7]);
        let unit = equal_bins(5, 5).unwrap();
        assert!(unit.ranges().all(|r| r.len() == 1));
        assert!(matches!(equal_bins(3, 4), Err(Error::TooManyBins { k: 4, t: 3 })));
    }

    #[test]
    fn es_mean_cases() {
        let one_hot = sim(&[vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(es_mean(&one_hot, 2).unwrap().labels(), &[1, 1, 0, 0]);
        // means 1/3 vs 2/3
        let s = sim(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(es_mean(&s, 1).unwrap().labels(), &[1, 1, 1]);
    }

    #[test]
    fn es_vote_cases() {
        assert_eq!(modal_class(&[0, 0, 1], &[0.0, 0.9]), 0);
        assert_eq!(modal_class(&[0, 1], &[0.2, 0.5]), 1);
        assert_eq!(modal_class(&[0, 1], &[0.5, 0.5]), 0);
        assert_eq!(modal_class(&[2, 2], &[0.9, 0.9, 0.1]), 2);
        let s = sim(&[vec![0.9, 0.0], vec![0.0, 0.2], vec![0.0, 0.3], vec![0.4, 0.0]]);
        assert_eq!(es_vote(&s, 1).unwrap().labels(), &[0, 0, 0, 0]);
    }

    #[test]
    fn nrp_two_bins_by_enumeration() {
        // Paths: [0,0]=2−λ, [0,1]=1, [1,0]=1, [1,1]=−λ.
        let scores = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(non_repetition_path(&scores, 0.5), vec![0, 0]);
        assert_eq!(non_repetition_path(&scores, 1.5), vec![0, 1]);
        let s = sim(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(es_nrp(&s, 2, 1.5).unwrap().labels(), &[0, 1]);
    }

    #[test]
    fn nrp_rejects_negative_lambda() {
        let s = sim(&[vec![1.0, 0.0]]);
        assert!(es_nrp(&s, 1, -0.1).is_err());
    }

    fn sim_strategy() -> impl Strategy<Value = (SimilarityMatrix, usize)> {
        (1usize..40, 1usize..6).prop_flat_map(|(t, n)| {
            (prop::collection::vec(-1.0f64..1.0, t * n), 1..=t).prop_map(move |(v, k)| {
                let rows: Vec<Vec<f64>> = v.chunks(n).map(<[f64]>::to_vec).collect();
                (sim(&rows), k)
            })
        })
    }

    proptest! {
        #[test]
        fn nrp_without_penalty_is_es_mean((s, k) in sim_strategy()) {
            prop_assert_eq!(es_nrp(&s, k, 0.0).unwrap(), es_mean(&s, k).unwrap());
        }

        #[test]
        fn equal_split_outputs_are_piecewise_constant((s, k) in sim_strategy(), lambda in 0.0f64..0.5) {
            let bins = equal_bins(s.frames(), k).unwrap();
            for labeling in [es_mean(&s, k).unwrap(), es_vote(&s, k).unwrap(), es_nrp(&s, k, lambda).unwrap()] {
                let l = labeling.labels();
                prop_assert_eq!(l.len(), s.frames());
                for r in bins.ranges() {
                    prop_assert!(l[r].windows(2).all(|w| w[0] == w[1]));
                }
            }
        }
    }
}
