//! End-to-end evaluation runs and dataset statistics over a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    binned_metrics, dataset_stats, AnnotatedVideo, BinDimension, BinSpec, BinnedInput, BinnedTable, DatasetStats,
};
use crate::baselines::{es_mean, es_nrp, es_vote, random_uniform};
use crate::error::{Error, Result};
use crate::faes::{cosine_similarity, l2_normalize_rows, permute_ablation, raw_similarity, PermuteMode};
use crate::io::{align_lengths, read_emb, read_gt, read_json, write_labels, LengthPolicy, Manifest, VideoEntry};
use crate::metrics::{aggregate, evaluate, F1Matching, MetricOptions, VideoMetrics};
use crate::smts::{random_action_order, segment_video, segment_with_action_order, HyperParams, Stage2Options};
use crate::types::{segments_of, EmbeddingMatrix, FrameLabeling, SimilarityMatrix, SolverStatus};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Ovtas,
    /// Similarity softmax and per-frame argmax, no transport.
    Stage2Ablation,
    RandomUniform,
    EsMean,
    EsVote,
    EsNrp,
}

impl Method {
    fn uses_embeddings(self) -> bool {
        self != Method::RandomUniform
    }

    fn uses_bins(self) -> bool {
        matches!(self, Method::EsMean | Method::EsVote | Method::EsNrp)
    }
}

/// Settings accepted for completeness but not used by the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservedParams {
    pub alpha: f64,
    pub lambda_frames: f64,
    pub lambda_actions: f64,
}

impl Default for ReservedParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda_frames: 0.11,
            lambda_actions: 0.01,
        }
    }
}

/// Everything that determines the contents of an evaluation report.
///
/// Worker count and output locations are deliberately absent: they never
/// change the report, and the echoed config must reproduce it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// Split names to evaluate; empty means every split.
    pub splits: Vec<String>,
    pub method: Method,
    pub hp: HyperParams,
    /// Equal-splits bin count; `None` uses the video's action count.
    pub k_bins: Option<usize>,
    /// Non-repetition penalty of `es_nrp`.
    pub lambda: f64,
    pub seed: u64,
    pub ablate_prior: bool,
    /// Compare raw embeddings instead of ℓ2-normalized ones.
    pub ablate_l2: bool,
    /// Scramble embeddings before comparison.
    pub ablate_stage1: bool,
    pub stage1_mode: PermuteMode,
    /// Present actions to the solver in a seeded random order.
    pub shuffle_actions: bool,
    /// Action name excluded from all metrics.
    pub ignore_background: Option<String>,
    pub f1_matching: F1Matching,
    pub length_policy: LengthPolicy,
    pub bins: Option<BinDimension>,
    /// Overrides the dataset preset for `bins`.
    pub bin_edges: Option<Vec<f64>>,
    pub skip_failures: bool,
    pub reserved: ReservedParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            splits: Vec::new(),
            method: Method::Ovtas,
            hp: HyperParams::default(),
            k_bins: None,
            lambda: 0.05,
            seed: 0,
            ablate_prior: false,
            ablate_l2: false,
            ablate_stage1: false,
            stage1_mode: PermuteMode::Rows,
            shuffle_actions: true,
            ignore_background: None,
            f1_matching: F1Matching::Optimal,
            length_policy: LengthPolicy::Truncate,
            bins: None,
            bin_edges: None,
            skip_failures: false,
            reserved: ReservedParams::default(),
        }
    }
}

impl RunConfig {
    /// Parameter ranges and method/flag compatibility.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        self.hp.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite value >= 0");
        }
        if self.ablate_prior && self.method != Method::Ovtas {
            return bad("ablate_prior only applies to method ovtas");
        }
        if self.k_bins.is_some() && !self.method.uses_bins() {
            return bad("k_bins only applies to the equal-splits methods");
        }
        if self.k_bins == Some(0) {
            return bad("k_bins must be >= 1");
        }
        if (self.ablate_l2 || self.ablate_stage1) && !self.method.uses_embeddings() {
            return bad("embedding ablations do not apply to random_uniform");
        }
        if self.bin_edges.is_some() && self.bins.is_none() {
            return bad("bin_edges needs bins");
        }
        Ok(())
    }
}

/// Reads a run configuration from a config file or from the `config` echo of a results file.
pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let value = match read_json(path)? {
        serde_json::Value::Object(mut report) if report.contains_key("videos") => {
            report.remove("config").unwrap_or_default()
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

/// Scheduling and side outputs; nothing here affects the report.
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    /// Directory receiving `<video id>.txt` predicted label files.
    pub labels_out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    pub activity: String,
    pub frames: usize,
    pub duration_seconds: f64,
    pub gt_segments: usize,
    pub metrics: VideoMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverStatus>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoFailure {
    pub id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    /// Videos evaluated successfully.
    pub videos: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<VideoMetrics>,
}

/// Results of one evaluation run. Videos are sorted by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunConfig,
    pub dataset_name: String,
    /// False when any video failed.
    pub complete: bool,
    pub videos: Vec<VideoRecord>,
    pub failures: Vec<VideoFailure>,
    /// Mean over each split's videos.
    pub splits: BTreeMap<String, SplitSummary>,
    /// Mean over splits; absent when no split has results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<VideoMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binned: Option<BinnedTable>,
    /// Ids of videos whose transport solve stopped above tolerance.
    pub unconverged: Vec<String>,
}

/// Stable per-video seed for one source of randomness.
pub fn derive_seed(seed: u64, video_id: &str, purpose: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(purpose.as_bytes())
        .chain_update([0u8])
        .chain_update(video_id.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

struct VideoOutput {
    record: VideoRecord,
    prediction: FrameLabeling,
}

fn truncate_rows(m: EmbeddingMatrix, rows: usize) -> Result<EmbeddingMatrix> {
    if rows == m.rows() {
        return Ok(m);
    }
    let cols = m.cols();
    EmbeddingMatrix::new(rows, cols, m.as_slice()[..rows * cols].to_vec())
}

fn similarity(
    config: &RunConfig,
    manifest: &Manifest,
    video: &VideoEntry,
    x: EmbeddingMatrix,
) -> Result<SimilarityMatrix> {
    let actions_path = manifest
        .action_emb_paths
        .get(&video.activity)
        .ok_or_else(|| Error::Manifest(format!("activity {:?} has no action embeddings", video.activity)))?;
    let mut x = x;
    let mut a = read_emb(actions_path)?;
    if config.ablate_stage1 {
        let p = permute_ablation(
            &x,
            &a,
            derive_seed(config.seed, &video.id, "stage1"),
            config.stage1_mode,
        )?;
        x = p.frames;
        a = p.actions;
    }
    if config.ablate_l2 {
        raw_similarity(&x, &a)
    } else {
        cosine_similarity(&l2_normalize_rows(&x)?, &l2_normalize_rows(&a)?)
    }
}

fn evaluate_video(config: &RunConfig, manifest: &Manifest, video: &VideoEntry) -> Result<VideoOutput> {
    let actions = &manifest.actions[&video.activity];
    let gt = read_gt(&video.gt_path, actions)?;
    let (frames, embeddings) = if config.method.uses_embeddings() {
        let path = video
            .frames_emb_path
            .as_ref()
            .ok_or_else(|| Error::Manifest(format!("video {:?} has no frame embeddings", video.id)))?;
        let x = read_emb(path)?;
        let frames = align_lengths(x.rows(), gt.len(), config.length_policy)?;
        (frames, Some(truncate_rows(x, frames)?))
    } else {
        (gt.len(), None)
    };
    let gt_labels = &gt.labels()[..frames];
    let n = actions.len();

    let mut solver = None;
    let prediction = match config.method {
        Method::RandomUniform => random_uniform(frames, n, derive_seed(config.seed, &video.id, "random_uniform"))?,
        method => {
            let x = embeddings.expect("loaded for embedding-based methods");
            let s = similarity(config, manifest, video, x)?;
            let k = config.k_bins.unwrap_or(n).min(frames);
            match method {
                Method::Ovtas => {
                    let opts = Stage2Options {
                        ablate_prior: config.ablate_prior,
                        ablate_stage2: false,
                    };
                    let seg = if config.shuffle_actions {
                        let order = random_action_order(n, derive_seed(config.seed, &video.id, "action_order"));
                        segment_with_action_order(&s, &config.hp, opts, &order)?
                    } else {
                        segment_video(&s, &config.hp, opts)?
                    };
                    solver = seg.solver;
                    seg.labeling
                }
                Method::Stage2Ablation => {
                    let opts = Stage2Options {
                        ablate_prior: false,
                        ablate_stage2: true,
                    };
                    segment_video(&s, &config.hp, opts)?.labeling
                }
                Method::EsMean => es_mean(&s, k)?,
                Method::EsVote => es_vote(&s, k)?,
                Method::EsNrp => es_nrp(&s, k, config.lambda)?,
                Method::RandomUniform => unreachable!("handled above"),
            }
        }
    };
    let prediction = FrameLabeling::new(prediction.into_labels(), actions.clone())?;

    let opts = MetricOptions {
        background: config
            .ignore_background
            .as_ref()
            .and_then(|name| actions.iter().position(|a| a == name)),
        matching: config.f1_matching,
    };
    let metrics = evaluate(prediction.labels(), gt_labels, &opts)?;
    let gt_segments = segments_of(gt_labels)?.len();
    Ok(VideoOutput {
        record: VideoRecord {
            id: video.id.clone(),
            activity: video.activity.clone(),
            frames,
            duration_seconds: frames as f64 / video.fps,
            gt_segments,
            metrics,
            solver,
        },
        prediction,
    })
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn selected_ids(splits: &BTreeMap<String, Vec<String>>) -> Result<Vec<String>> {
    if let Some((name, _)) = splits.iter().find(|(_, ids)| ids.is_empty()) {
        return Err(Error::NoVideos(format!("split {name:?} is empty")));
    }
    let ids: BTreeSet<&String> = splits.values().flatten().collect();
    Ok(ids.into_iter().cloned().collect())
}

fn bin_spec(config: &RunConfig, dataset: &str) -> Result<Option<BinSpec>> {
    let Some(dimension) = config.bins else {
        return Ok(None);
    };
    let spec = match &config.bin_edges {
        Some(edges) => BinSpec::new(dimension, edges.clone())?,
        None => BinSpec::preset(dataset, dimension).ok_or_else(|| {
            Error::Config(format!(
                "no preset bin edges for dataset {dataset:?}; give bin_edges explicitly"
            ))
        })?,
    };
    Ok(Some(spec))
}

/// Evaluates every video of the selected splits.
///
/// A failing video aborts the run unless `skip_failures` is set, in which case
/// it is listed under `failures`, left out of all aggregates, and the report
/// is marked incomplete.
pub fn run_eval(config: &RunConfig, options: &EvalOptions) -> Result<EvalReport> {
    config.validate()?;
    let manifest = Manifest::load(&config.manifest)?;
    run_eval_with_manifest(config, &manifest, options)
}

/// [`run_eval`] with an already loaded manifest.
pub fn run_eval_with_manifest(config: &RunConfig, manifest: &Manifest, options: &EvalOptions) -> Result<EvalReport> {
    config.validate()?;
    let splits = manifest.select_splits(&config.splits)?;
    let ids = selected_ids(&splits)?;
    let spec = bin_spec(config, &manifest.dataset_name)?;
    if let Some(dir) = &options.labels_out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let outcomes: Vec<(String, Result<VideoOutput>)> = thread_pool(options.jobs)?.install(|| {
        ids.par_iter()
            .map(|id| {
                let video = manifest.video(id).expect("split members are validated");
                log::info!("evaluating {id}");
                (id.clone(), evaluate_video(config, manifest, video))
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Ok(out) => {
                if let Some(dir) = &options.labels_out {
                    write_labels(dir.join(format!("{id}.txt")), &out.prediction)?;
                }
                records.push(out.record);
            }
            Err(source) if config.skip_failures => {
                log::warn!("video {id} failed: {source}");
                failures.push(VideoFailure {
                    id,
                    error: source.to_string(),
                });
            }
            Err(source) => {
                return Err(Error::Video {
                    id,
                    source: Box::new(source),
                })
            }
        }
    }
    build_report(config, manifest, &splits, records, failures, spec.as_ref())
}

fn build_report(
    config: &RunConfig,
    manifest: &Manifest,
    splits: &BTreeMap<String, Vec<String>>,
    records: Vec<VideoRecord>,
    failures: Vec<VideoFailure>,
    spec: Option<&BinSpec>,
) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &VideoRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut summaries = BTreeMap::new();
    for (name, members) in splits {
        let metrics: Vec<VideoMetrics> = members
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).map(|r| r.metrics))
            .collect();
        let summary = SplitSummary {
            videos: metrics.len(),
            metrics: if metrics.is_empty() {
                None
            } else {
                Some(aggregate(&metrics)?)
            },
        };
        summaries.insert(name.clone(), summary);
    }
    let split_means: Vec<VideoMetrics> = summaries.values().filter_map(|s| s.metrics).collect();
    let overall = if split_means.is_empty() {
        None
    } else {
        Some(aggregate(&split_means)?)
    };

    let binned = match spec {
        Some(spec) => {
            let inputs: Vec<BinnedInput> = records
                .iter()
                .map(|r| BinnedInput {
                    id: r.id.clone(),
                    value: match spec.dimension() {
                        BinDimension::DurationSeconds => r.duration_seconds,
                        BinDimension::GtSegmentCount => r.gt_segments as f64,
                    },
                    metrics: r.metrics,
                })
                .collect();
            Some(binned_metrics(&inputs, spec)?)
        }
        None => None,
    };

    let unconverged = records
        .iter()
        .filter(|r| r.solver.is_some_and(|s| !s.converged))
        .map(|r| r.id.clone())
        .collect();
    Ok(EvalReport {
        config: config.clone(),
        dataset_name: manifest.dataset_name.clone(),
        complete: failures.is_empty(),
        videos: records,
        failures,
        splits: summaries,
        aggregate: overall,
        binned,
        unconverged,
    })
}

/// Duration and segment statistics per split and over all selected videos.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dataset_name: String,
    pub overall: DatasetStats,
    pub splits: BTreeMap<String, DatasetStats>,
}

/// Computes dataset statistics from ground truth alone (no embeddings needed).
pub fn run_stats(manifest_path: impl AsRef<Path>, split_names: &[String]) -> Result<StatsReport> {
    let manifest = Manifest::load(manifest_path)?;
    stats_for_manifest(&manifest, split_names)
}

pub fn stats_for_manifest(manifest: &Manifest, split_names: &[String]) -> Result<StatsReport> {
    let splits = manifest.select_splits(split_names)?;
    let ids = selected_ids(&splits)?;
    let videos: BTreeMap<String, AnnotatedVideo> = ids
        .par_iter()
        .map(|id| {
            let entry = manifest.video(id).expect("split members are validated");
            let gt = read_gt(&entry.gt_path, &manifest.actions[&entry.activity]).map_err(|source| Error::Video {
                id: id.clone(),
                source: Box::new(source),
            })?;
            Ok((
                id.clone(),
                AnnotatedVideo {
                    id: id.clone(),
                    fps: entry.fps,
                    labels: gt.into_labels(),
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut per_split = BTreeMap::new();
    for (name, members) in &splits {
        let group: Vec<AnnotatedVideo> = members.iter().map(|id| videos[id].clone()).collect();
        per_split.insert(name.clone(), dataset_stats(&group)?);
    }
    let all: Vec<AnnotatedVideo> = videos.into_values().collect();
    Ok(StatsReport {
        dataset_name: manifest.dataset_name.clone(),
        overall: dataset_stats(&all)?,
        splits: per_split,
    })
}
