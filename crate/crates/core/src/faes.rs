//! Stage 1: frame–action embedding similarity.
//!
//! Frames and action-label embeddings are ℓ2-normalized row-wise, compared by
//! dot product, and optionally turned into per-frame class probabilities. The
//! stage-1 ablation scrambles the embeddings before comparison.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{EmbeddingMatrix, Matrix, ProbMatrix, SimilarityMatrix};

/// Rows with a norm below this are rejected rather than zeroed.
pub const MIN_ROW_NORM: f64 = 1e-12;

pub fn l2_normalize_rows(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(m.rows() * m.cols());
    for (row, values) in m.row_iter().enumerate() {
        let norm = values.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm < MIN_ROW_NORM {
            return Err(Error::DegenerateRow { row, norm });
        }
        data.extend(values.iter().map(|&x| (f64::from(x) / norm) as f32));
    }
    EmbeddingMatrix::with_flag(m.rows(), m.cols(), data, true)
}

/// S = X Aᵀ for unit-normalized inputs.
pub fn cosine_similarity(frames: &EmbeddingMatrix, actions: &EmbeddingMatrix) -> Result<SimilarityMatrix> {
    if !frames.is_normalized() || !actions.is_normalized() {
        return Err(Error::InvalidParam(
            "cosine similarity needs l2-normalized inputs (use raw_similarity for the l2 ablation)".into(),
        ));
    }
    Ok(SimilarityMatrix::from_unit(dot_products(frames, actions)?))
}

/// S = X Aᵀ without any normalization requirement; used when the ℓ2 step is ablated.
pub fn raw_similarity(frames: &EmbeddingMatrix, actions: &EmbeddingMatrix) -> Result<SimilarityMatrix> {
    let values = dot_products(frames, actions)?;
    if frames.is_normalized() && actions.is_normalized() {
        Ok(SimilarityMatrix::from_unit(values))
    } else {
        SimilarityMatrix::new(values)
    }
}

fn dot_products(frames: &EmbeddingMatrix, actions: &EmbeddingMatrix) -> Result<Matrix> {
    if frames.cols() != actions.cols() {
        return Err(Error::DimensionMismatch(format!(
            "frame embeddings have {} dims, action embeddings {}",
            frames.cols(),
            actions.cols()
        )));
    }
    Matrix::from_fn(frames.rows(), actions.rows(), |t, n| {
        frames
            .row(t)
            .iter()
            .zip(actions.row(n))
            .map(|(&x, &a)| f64::from(x) * f64::from(a))
            .sum()
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(s: &SimilarityMatrix) -> Result<ProbMatrix> {
    let values = s.values();
    values.check_finite()?;
    let mut data = Vec::with_capacity(values.rows() * values.cols());
    for row in values.row_iter() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        data.extend(row.iter().map(|&x| (x - max).exp()));
        let z: f64 = data[start..].iter().sum();
        for p in &mut data[start..] {
            *p /= z;
        }
    }
    Ok(ProbMatrix::new_unchecked(Matrix::from_vec(
        values.rows(),
        values.cols(),
        data,
    )?))
}

/// What the stage-1 ablation scrambles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermuteMode {
    /// Shuffle whole embeddings (rows) of each matrix.
    #[default]
    Rows,
    /// Shuffle feature dimensions (columns) of each matrix.
    Features,
}

/// Output of [`permute_ablation`], with the permutations that produced it.
///
/// Output row (or column) `i` is input row (or column) `order[i]`.
#[derive(Clone, Debug)]
pub struct Permuted {
    pub frames: EmbeddingMatrix,
    pub actions: EmbeddingMatrix,
    pub frame_order: Vec<usize>,
    pub action_order: Vec<usize>,
}

pub fn permute_ablation(
    frames: &EmbeddingMatrix,
    actions: &EmbeddingMatrix,
    seed: u64,
    mode: PermuteMode,
) -> Result<Permuted> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (frames, frame_order) = permute_one(frames, mode, &mut rng)?;
    let (actions, action_order) = permute_one(actions, mode, &mut rng)?;
    Ok(Permuted {
        frames,
        actions,
        frame_order,
        action_order,
    })
}

fn permute_one(m: &EmbeddingMatrix, mode: PermuteMode, rng: &mut ChaCha8Rng) -> Result<(EmbeddingMatrix, Vec<usize>)> {
    let len = match mode {
        PermuteMode::Rows => m.rows(),
        PermuteMode::Features => m.cols(),
    };
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    let data: Vec<f32> = match mode {
        PermuteMode::Rows => order.iter().flat_map(|&r| m.row(r).iter().copied()).collect(),
        PermuteMode::Features => m
            .row_iter()
            .flat_map(|row| order.iter().map(move |&c| row[c]))
            .collect(),
    };
    let out = EmbeddingMatrix::with_flag(m.rows(), m.cols(), data, m.is_normalized())?;
    Ok((out, order))
}

/// Inverse of a permutation given as an index list.
pub fn invert_permutation(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (i, &o) in order.iter().enumerate() {
        inv[o] = i;
    }
    inv
}
