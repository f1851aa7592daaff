//! Dataset statistics and metric breakdowns by video duration or segment count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aggregate, VideoMetrics};
use crate::types::segments_of;

/// Ground truth of one video with its frame rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedVideo {
    pub id: String,
    pub fps: f64,
    pub labels: Vec<usize>,
}

impl AnnotatedVideo {
    fn check_fps(&self) -> Result<f64> {
        if self.fps > 0.0 && self.fps.is_finite() {
            Ok(self.fps)
        } else {
            Err(Error::Manifest(format!(
                "video {:?} has no valid fps ({})",
                self.id, self.fps
            )))
        }
    }

    pub fn duration_seconds(&self) -> Result<f64> {
        Ok(self.labels.len() as f64 / self.check_fps()?)
    }

    pub fn segment_count(&self) -> Result<usize> {
        Ok(segments_of(&self.labels)?.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Some(Self {
            count: values.len(),
            min,
            max,
            mean,
        })
    }
}

fn require_videos(videos: &[AnnotatedVideo]) -> Result<()> {
    if videos.is_empty() {
        return Err(Error::NoVideos("statistics need at least one video".into()));
    }
    Ok(())
}

fn stats_or_empty(values: &[f64]) -> Result<Stats> {
    Stats::of(values).ok_or_else(|| Error::NoVideos("statistics need at least one video".into()))
}

/// Per-video duration `T / fps` in seconds.
pub fn video_duration_stats(videos: &[AnnotatedVideo]) -> Result<Stats> {
    require_videos(videos)?;
    let values = videos
        .iter()
        .map(AnnotatedVideo::duration_seconds)
        .collect::<Result<Vec<_>>>()?;
    stats_or_empty(&values)
}

/// Ground-truth segments per video.
pub fn segment_count_stats(videos: &[AnnotatedVideo]) -> Result<Stats> {
    require_videos(videos)?;
    let values = videos
        .iter()
        .map(|v| v.segment_count().map(|n| n as f64))
        .collect::<Result<Vec<_>>>()?;
    stats_or_empty(&values)
}

/// Durations of all ground-truth segments, pooled over videos.
pub fn segment_duration_stats(videos: &[AnnotatedVideo]) -> Result<Stats> {
    require_videos(videos)?;
    let mut values = Vec::new();
    for v in videos {
        let fps = v.check_fps()?;
        values.extend(segments_of(&v.labels)?.iter().map(|s| s.len() as f64 / fps));
    }
    stats_or_empty(&values)
}

/// The three statistics tables for one set of videos.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub video_duration_seconds: Stats,
    pub segments_per_video: Stats,
    pub segment_duration_seconds: Stats,
}

pub fn dataset_stats(videos: &[AnnotatedVideo]) -> Result<DatasetStats> {
    Ok(DatasetStats {
        video_duration_seconds: video_duration_stats(videos)?,
        segments_per_video: segment_count_stats(videos)?,
        segment_duration_seconds: segment_duration_stats(videos)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinDimension {
    DurationSeconds,
    GtSegmentCount,
}

/// Half-open bins `[edges[i], edges[i+1])`; the last bin has no upper bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    dimension: BinDimension,
    edges: Vec<f64>,
}

impl BinSpec {
    pub fn new(dimension: BinDimension, edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Config("bin edges must not be empty".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "bin edges must be finite and strictly ascending: {edges:?}"
            )));
        }
        Ok(Self { dimension, edges })
    }

    /// Conventional breakdown edges for the standard benchmark datasets.
    ///
    /// Dataset names are matched case-insensitively, ignoring `_`, `-` and spaces.
    pub fn preset(dataset: &str, dimension: BinDimension) -> Option<Self> {
        let key: String = dataset
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        let edges: &[f64] = match (key.as_str(), dimension) {
            ("gtea" | "breakfast", BinDimension::DurationSeconds) => &[0.0, 60.0, 120.0],
            ("50salads", BinDimension::DurationSeconds) => &[240.0, 360.0, 480.0],
            ("gtea", BinDimension::GtSegmentCount) => &[20.0, 30.0, 40.0],
            ("breakfast", BinDimension::GtSegmentCount) => &[0.0, 5.0, 10.0, 15.0],
            ("50salads", BinDimension::GtSegmentCount) => &[15.0, 20.0, 25.0],
            _ => return None,
        };
        Some(Self {
            dimension,
            edges: edges.to_vec(),
        })
    }

    pub fn dimension(&self) -> BinDimension {
        self.dimension
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len()
    }

    pub fn bin_of(&self, value: f64) -> Option<usize> {
        if value.is_nan() || value < self.edges[0] {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= value) - 1)
    }

    fn upper(&self, bin: usize) -> Option<f64> {
        self.edges.get(bin + 1).copied()
    }
}

/// A video's metrics together with the attribute it is binned by.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedInput {
    pub id: String,
    pub value: f64,
    pub metrics: VideoMetrics,
}

/// One row of a binned table. `metrics` is absent when no video falls in the bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub lower: f64,
    /// `None` for the open-ended last bin.
    pub upper: Option<f64>,
    pub videos: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<VideoMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedTable {
    pub dimension: BinDimension,
    pub rows: Vec<BinRow>,
}

pub fn binned_metrics(inputs: &[BinnedInput], spec: &BinSpec) -> Result<BinnedTable> {
    let mut members: Vec<Vec<VideoMetrics>> = vec![Vec::new(); spec.bins()];
    for input in inputs {
        let bin = spec
            .bin_of(input.value)
            .ok_or_else(|| Error::NoBin { id: input.id.clone() })?;
        members[bin].push(input.metrics);
    }
    let rows = members
        .iter()
        .enumerate()
        .map(|(bin, group)| {
            Ok(BinRow {
                lower: spec.edges[bin],
                upper: spec.upper(bin),
                videos: group.len(),
                metrics: if group.is_empty() {
                    None
                } else {
                    Some(aggregate(group)?)
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinnedTable {
        dimension: spec.dimension,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(id: &str, fps: f64, labels: Vec<usize>) -> AnnotatedVideo {
        AnnotatedVideo {
            id: id.into(),
            fps,
            labels,
        }
    }

    fn metrics(x: f64) -> VideoMetrics {
        VideoMetrics::new(x, x + 1.0, x + 2.0, x + 3.0, x + 4.0)
    }

    #[test]
    fn duration_examples() {
        let one = video("a", 15.0, vec![0; 150]);
        let s = video_duration_stats(&[one]).unwrap();
        assert_eq!((s.min, s.max, s.mean), (10.0, 10.0, 10.0));
        let two = [video("a", 10.0, vec![0; 100]), video("b", 10.0, vec![0; 200])];
        assert_eq!(video_duration_stats(&two).unwrap().mean, 15.0);
    }

    #[test]
    fn missing_fps_is_an_error() {
        assert!(video_duration_stats(&[video("a", 0.0, vec![0; 3])]).is_err());
        assert!(segment_duration_stats(&[video("a", f64::NAN, vec![0; 3])]).is_err());
    }

    #[test]
    fn segment_count_examples() {
        let s = segment_count_stats(&[video("a", 1.0, vec![2; 7])]).unwrap();
        assert_eq!(s.mean, 1.0);
        let s = segment_count_stats(&[video("a", 1.0, vec![0, 1, 0, 1, 0, 1])]).unwrap();
        assert_eq!(s.mean, 6.0);
    }

    #[test]
    fn segment_duration_examples() {
        let s = segment_duration_stats(&[video("a", 10.0, vec![0; 10])]).unwrap();
        assert_eq!(s.mean, 1.0);
        let mut labels = vec![0; 10];
        labels.extend([1; 30]);
        let s = segment_duration_stats(&[video("a", 10.0, labels)]).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.count), (1.0, 3.0, 2.0, 2));
    }

    #[test]
    fn empty_input_is_reported() {
        assert!(matches!(dataset_stats(&[]), Err(Error::NoVideos(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(BinSpec::new(BinDimension::DurationSeconds, vec![]).is_err());
        assert!(BinSpec::new(BinDimension::DurationSeconds, vec![0.0, 0.0]).is_err());
        assert!(BinSpec::new(BinDimension::DurationSeconds, vec![5.0, 1.0]).is_err());
        assert!(BinSpec::new(BinDimension::DurationSeconds, vec![0.0]).is_ok());
    }

    #[test]
    fn presets_cover_standard_datasets() {
        for name in ["GTEA", "breakfast", "50_salads", "50Salads"] {
            for dim in [BinDimension::DurationSeconds, BinDimension::GtSegmentCount] {
                assert!(BinSpec::preset(name, dim).is_some(), "{name}");
            }
        }
        assert!(BinSpec::preset("unknown", BinDimension::DurationSeconds).is_none());
        let b = BinSpec::preset("breakfast", BinDimension::DurationSeconds).unwrap();
        assert_eq!(b.edges(), &[0.0, 60.0, 120.0]);
    }

    #[test]
    fn bins_are_half_open_with_open_last_bin() {
        let spec = BinSpec::new(BinDimension::DurationSeconds, vec![0.0, 60.0, 120.0]).unwrap();
        assert_eq!(spec.bin_of(-1.0), None);
        assert_eq!(spec.bin_of(0.0), Some(0));
        assert_eq!(spec.bin_of(59.999), Some(0));
        assert_eq!(spec.bin_of(60.0), Some(1));
        assert_eq!(spec.bin_of(120.0), Some(2));
        assert_eq!(spec.bin_of(1e9), Some(2));
    }

    #[test]
    fn two_videos_fill_first_and_last_bin() {
        let spec = BinSpec::new(BinDimension::DurationSeconds, vec![0.0, 60.0, 120.0]).unwrap();
        let inputs = [
            BinnedInput {
                id: "a".into(),
                value: 50.0,
                metrics: metrics(10.0),
            },
            BinnedInput {
                id: "b".into(),
                value: 130.0,
                metrics: metrics(20.0),
            },
        ];
        let table = binned_metrics(&inputs, &spec).unwrap();
        let counts: Vec<usize> = table.rows.iter().map(|r| r.videos).collect();
        assert_eq!(counts, [1, 0, 1]);
        assert!(table.rows[1].metrics.is_none());
        assert_eq!(table.rows[2].upper, None);
        let json = serde_json::to_string(&table.rows[1]).unwrap();
        assert!(!json.contains("metrics"));
    }

    #[test]
    fn video_below_first_edge_is_named() {
        let spec = BinSpec::new(BinDimension::GtSegmentCount, vec![20.0, 30.0]).unwrap();
        let inputs = [BinnedInput {
            id: "short_one".into(),
            value: 3.0,
            metrics: metrics(0.0),
        }];
        let err = binned_metrics(&inputs, &spec).unwrap_err();
        assert!(err.to_string().contains("short_one"));
    }

    proptest! {
        #[test]
        fn single_bin_equals_aggregate(xs in proptest::collection::vec((0.0f64..100.0, 0.0f64..500.0), 1..20)) {
            let inputs: Vec<BinnedInput> = xs
                .iter()
                .enumerate()
                .map(|(i, &(m, v))| BinnedInput { id: i.to_string(), value: v, metrics: metrics(m) })
                .collect();
            let spec = BinSpec::new(BinDimension::DurationSeconds, vec![0.0]).unwrap();
            let table = binned_metrics(&inputs, &spec).unwrap();
            let all: Vec<VideoMetrics> = inputs.iter().map(|i| i.metrics).collect();
            prop_assert_eq!(table.rows[0].metrics, Some(aggregate(&all).unwrap()));
        }

        #[test]
        fn bins_partition_the_videos(values in proptest::collection::vec(0.0f64..300.0, 1..40)) {
            let inputs: Vec<BinnedInput> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| BinnedInput { id: i.to_string(), value: v, metrics: metrics(1.0) })
                .collect();
            let spec = BinSpec::new(BinDimension::DurationSeconds, vec![0.0, 60.0, 120.0]).unwrap();
            let table = binned_metrics(&inputs, &spec).unwrap();
            prop_assert_eq!(table.rows.iter().map(|r| r.videos).sum::<usize>(), values.len());
        }
    }
}
