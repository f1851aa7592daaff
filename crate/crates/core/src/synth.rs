//! Synthetic toy datasets with known segmentations.
//!
//! Every video performs all actions of a single activity once, in a random
//! order and with roughly equal segment lengths. A frame of action `y` is
//! embedded as `signal·a_y + bias + noise`, where the `a_c` are random unit
//! vectors and `bias` is a fixed random mix of them. The bias gives some
//! classes a head start on every frame, which drags per-frame argmax toward
//! them; balanced transport is nearly blind to such per-class offsets.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_emb, write_json, Manifest, VideoEntry};
use crate::types::EmbeddingMatrix;

pub const ACTIVITY: &str = "toy";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub videos: usize,
    pub actions: usize,
    pub dim: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub signal: f64,
    /// Expected norm of the per-frame noise vector.
    pub noise: f64,
    /// Norm of the shared bias vector.
    pub bias: f64,
    /// Segment lengths vary by up to this fraction of `frames / actions`.
    pub jitter: f64,
    /// Perform actions in vocabulary order instead of a random order per video.
    pub ordered: bool,
    pub fps: f64,
    /// Number of splits; videos are assigned round-robin.
    pub splits: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            videos: 8,
            actions: 5,
            dim: 32,
            min_frames: 60,
            max_frames: 120,
            signal: 1.0,
            noise: 1.0,
            bias: 1.5,
            jitter: 0.3,
            ordered: false,
            fps: 15.0,
            splits: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.videos == 0 || self.actions == 0 || self.dim == 0 || self.splits == 0 {
            return bad("videos, actions, dim and splits must all be >= 1".into());
        }
        if self.min_frames < self.actions || self.max_frames < self.min_frames {
            return bad(format!(
                "need actions <= min_frames <= max_frames, got {} / {} / {}",
                self.actions, self.min_frames, self.max_frames
            ));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be > 0, got {}", self.fps));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad(format!("jitter must be in [0, 1), got {}", self.jitter));
        }
        for (name, v) in [("signal", self.signal), ("noise", self.noise), ("bias", self.bias)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn to_emb(rows: &[Vec<f64>]) -> Result<EmbeddingMatrix> {
    let rows: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|&x| x as f32).collect()).collect();
    EmbeddingMatrix::from_rows(&rows)
}

/// Ground-truth labels: every action once, each segment non-empty.
///
/// Segment boundaries sit at the equal-split positions moved by up to
/// `jitter` of a segment length.
fn ground_truth(rng: &mut ChaCha8Rng, actions: usize, frames: usize, jitter: f64, ordered: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..actions).collect();
    if !ordered {
        order.shuffle(rng);
    }
    let step = frames as f64 / actions as f64;
    let mut bounds = vec![0];
    for k in 1..actions {
        let shift = rng.gen_range(-jitter..=jitter) * step;
        let lo = bounds[k - 1] + 1;
        let hi = frames - (actions - k);
        bounds.push(((k as f64 * step + shift).round() as usize).clamp(lo, hi));
    }
    bounds.push(frames);
    order
        .iter()
        .zip(bounds.windows(2))
        .flat_map(|(&a, w)| std::iter::repeat_n(a, w[1] - w[0]))
        .collect()
}

fn action_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("action_{i}")).collect()
}

/// Writes a toy dataset under `dir` and returns the manifest path.
///
/// Layout: `manifest.json`, `actions/toy.ovte`, `frames/<id>.ovte`, `gt/<id>.txt`.
pub fn generate(config: &SynthConfig, dir: impl AsRef<Path>) -> Result<PathBuf> {
    config.validate()?;
    let dir = dir.as_ref();
    for sub in ["actions", "frames", "gt"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let names = action_names(config.actions);
    let actions: Vec<Vec<f64>> = (0..config.actions)
        .map(|_| unit(gaussian(&mut rng, config.dim)))
        .collect();
    let weights: Vec<f64> = (0..config.actions).map(|_| rng.gen::<f64>().powi(2)).collect();
    let mix = (0..config.dim)
        .map(|d| weights.iter().zip(&actions).map(|(w, a)| w * a[d]).sum())
        .collect();
    let bias: Vec<f64> = unit(mix).iter().map(|x| x * config.bias).collect();
    let actions_rel = PathBuf::from("actions").join(format!("{ACTIVITY}.ovte"));
    write_emb(dir.join(&actions_rel), &to_emb(&actions)?)?;

    let noise_scale = config.noise / (config.dim as f64).sqrt();
    let width = (config.videos - 1).to_string().len();
    let mut videos = Vec::with_capacity(config.videos);
    let mut splits: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for v in 0..config.videos {
        let id = format!("video_{v:0width$}");
        let frames = rng.gen_range(config.min_frames..=config.max_frames);
        let labels = ground_truth(&mut rng, config.actions, frames, config.jitter, config.ordered);
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| {
                let noise = gaussian(&mut rng, config.dim);
                (0..config.dim)
                    .map(|d| config.signal * actions[y][d] + bias[d] + noise_scale * noise[d])
                    .collect()
            })
            .collect();
        let frames_rel = PathBuf::from("frames").join(format!("{id}.ovte"));
        let gt_rel = PathBuf::from("gt").join(format!("{id}.txt"));
        write_emb(dir.join(&frames_rel), &to_emb(&rows)?)?;
        let text: String = labels.iter().map(|&y| format!("{}\n", names[y])).collect();
        let gt_path = dir.join(&gt_rel);
        fs::write(&gt_path, text).map_err(|e| Error::io(&gt_path, e))?;
        splits
            .entry(format!("split{}", v % config.splits + 1))
            .or_default()
            .push(id.clone());
        videos.push(VideoEntry {
            id,
            activity: ACTIVITY.into(),
            fps: config.fps,
            frames_emb_path: Some(frames_rel),
            gt_path: gt_rel,
        });
    }

    let manifest = Manifest {
        dataset_name: "toy".into(),
        actions: BTreeMap::from([(ACTIVITY.to_string(), names)]),
        action_emb_paths: BTreeMap::from([(ACTIVITY.to_string(), actions_rel)]),
        videos,
        splits,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}
