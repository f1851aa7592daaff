//! Stage 2: temporal segmentation of a similarity matrix by balanced entropic
//! optimal transport.
//!
//! The visual cost `1 − S` is augmented with a monotone-alignment prior
//! `ρ·|i/T − j/N|`, the entropic problem with uniform marginals is solved by
//! Sinkhorn iterations on log-domain dual potentials, and each frame takes the
//! action receiving the most mass.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faes::softmax_rows;
use crate::types::{argmax, FrameLabeling, Matrix, SimilarityMatrix, SolverStatus, TransportPlan};

mod sinkhorn;

pub use sinkhorn::{sinkhorn, CHECK_EVERY};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Entropic regularization weight.
    pub epsilon: f64,
    /// Weight of the temporal prior.
    pub rho: f64,
    pub max_iters: usize,
    /// ℓ∞ tolerance on both marginals.
    pub tol: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            epsilon: 0.07,
            rho: 0.04,
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParam(format!("rho must be >= 0, got {}", self.rho)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParam("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParam(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// R[i][j] = |i/T − j/N| with zero-based indices.
pub fn temporal_prior(frames: usize, actions: usize) -> Result<Matrix> {
    let (t, n) = (frames as f64, actions as f64);
    Matrix::from_fn(frames, actions, |i, j| (i as f64 / t - j as f64 / n).abs())
}

/// cost = (1 − S) + ρ·R.
pub fn build_cost(s: &SimilarityMatrix, prior: &Matrix, rho: f64) -> Result<Matrix> {
    let sv = s.values();
    if sv.rows() != prior.rows() || sv.cols() != prior.cols() {
        return Err(Error::Shape(format!(
            "similarity is {}x{}, prior is {}x{}",
            sv.rows(),
            sv.cols(),
            prior.rows(),
            prior.cols()
        )));
    }
    Matrix::from_fn(sv.rows(), sv.cols(), |i, j| {
        (1.0 - sv.get(i, j)) + rho * prior.get(i, j)
    })
}

/// Per-frame argmax of the plan; ties go to the lowest action index.
pub fn decode(plan: &TransportPlan) -> Result<FrameLabeling> {
    let labels = plan.mass().row_iter().map(argmax).collect();
    FrameLabeling::with_vocab_size(labels, plan.actions())
}

/// Ablation switches for [`segment_video`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Options {
    /// Drop the temporal prior (ρ = 0).
    pub ablate_prior: bool,
    /// Skip optimal transport; label each frame by its most probable action.
    pub ablate_stage2: bool,
}

/// Labels produced by stage 2, plus the solver status when OT ran.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSegmentation {
    pub labeling: FrameLabeling,
    pub solver: Option<SolverStatus>,
}

pub fn segment_video(s: &SimilarityMatrix, hp: &HyperParams, opts: Stage2Options) -> Result<VideoSegmentation> {
    hp.validate()?;
    let (frames, actions) = (s.frames(), s.actions());
    if opts.ablate_stage2 {
        let probs = softmax_rows(s)?;
        let labels = probs.values().row_iter().map(argmax).collect();
        return Ok(VideoSegmentation {
            labeling: FrameLabeling::with_vocab_size(labels, actions)?,
            solver: None,
        });
    }
    if actions == 1 {
        return Ok(VideoSegmentation {
            labeling: FrameLabeling::with_vocab_size(vec![0; frames], 1)?,
            solver: None,
        });
    }
    let rho = if opts.ablate_prior { 0.0 } else { hp.rho };
    let cost = build_cost(s, &temporal_prior(frames, actions)?, rho)?;
    let plan = sinkhorn(&cost, hp)?;
    Ok(VideoSegmentation {
        labeling: decode(&plan)?,
        solver: Some(plan.status()),
    })
}

/// Seeded uniform permutation of `0..n`.
pub fn random_action_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Runs [`segment_video`] with the actions presented in `order` (column `j` of
/// the solver input is action `order[j]`), then maps the labels back so they
/// index the original action list.
pub fn segment_with_action_order(
    s: &SimilarityMatrix,
    hp: &HyperParams,
    opts: Stage2Options,
    order: &[usize],
) -> Result<VideoSegmentation> {
    let reordered = s.select_columns(order)?;
    let seg = segment_video(&reordered, hp, opts)?;
    let labels = seg.labeling.labels().iter().map(|&j| order[j]).collect();
    Ok(VideoSegmentation {
        labeling: FrameLabeling::with_vocab_size(labels, s.actions())?,
        solver: seg.solver,
    })
}
