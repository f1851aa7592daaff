//! Dataset loading and result writing.
//!
//! Embedding files use the OVTE layout, all little-endian:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 4 | magic `b"OVTE"` |
//! | 4  | 4 | format version, `u32` = 1 |
//! | 8  | 8 | rows, `u64` |
//! | 16 | 8 | cols, `u64` |
//! | 24 | 4·rows·cols | `f32` values, row-major |
//!
//! Ground truth is UTF-8 text with one action name per line (line `t` is frame
//! `t`). Manifests and results are JSON documents with a fixed key order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{EmbeddingMatrix, FrameLabeling};

pub const OVTE_MAGIC: &[u8; 4] = b"OVTE";
pub const OVTE_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Largest frame-count difference that [`LengthPolicy::Truncate`] absorbs.
pub const MAX_TRUNCATION: usize = 2;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < 4 || &bytes[..4] != OVTE_MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            path: path.into(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != OVTE_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            version,
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let found = (bytes.len() - HEADER_LEN) as u64;
    let expected = rows.checked_mul(cols).and_then(|n| n.checked_mul(4));
    if expected != Some(found) {
        return Err(Error::TruncatedPayload {
            path: path.into(),
            expected: expected.unwrap_or(u64::MAX),
            found,
        });
    }
    Ok((rows as usize, cols as usize))
}

pub fn read_emb(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (rows, cols) = parse_header(path, &bytes)?;
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(index) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NanPayload {
            path: path.into(),
            index,
        });
    }
    EmbeddingMatrix::new(rows, cols, data)
}

/// Rows and columns declared by an embedding file (payload length is checked, values are not).
pub fn read_emb_shape(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    parse_header(path, &bytes)
}

pub fn encode_emb(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(OVTE_MAGIC);
    out.extend_from_slice(&OVTE_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn write_emb(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_emb(m)).map_err(|e| Error::io(path, e))
}

/// Reads per-frame labels, mapping names to positions in `actions`.
///
/// LF and CRLF line endings are accepted and trailing blank lines are ignored.
pub fn read_gt(path: impl AsRef<Path>, actions: &[String]) -> Result<FrameLabeling> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: HashMap<&str, usize> = actions.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut lines: Vec<&str> = text.lines().map(str::trim).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(Error::EmptyGroundTruth { path: path.into() });
    }
    let labels = lines
        .iter()
        .enumerate()
        .map(|(k, &name)| {
            index.get(name).copied().ok_or_else(|| Error::UnknownLabel {
                path: path.into(),
                line: k + 1,
                label: name.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FrameLabeling::new(labels, actions.to_vec())
}

/// Writes a labeling in the ground-truth text format.
pub fn write_labels(path: impl AsRef<Path>, labeling: &FrameLabeling) -> Result<()> {
    let path = path.as_ref();
    let names = labeling.label_names();
    let mut text = String::new();
    for &l in labeling.labels() {
        text.push_str(&names[l]);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// How to reconcile embedding and ground-truth frame counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthPolicy {
    /// Any mismatch is an error.
    Strict,
    /// Use the shorter length when the counts differ by at most [`MAX_TRUNCATION`].
    #[default]
    Truncate,
}

pub fn align_lengths(emb: usize, gt: usize, policy: LengthPolicy) -> Result<usize> {
    if emb == 0 || gt == 0 {
        return Err(Error::EmptySequence);
    }
    if emb == gt {
        return Ok(emb);
    }
    match policy {
        LengthPolicy::Truncate if emb.abs_diff(gt) <= MAX_TRUNCATION => {
            log::warn!(
                "truncating to {} frames (embeddings {emb}, ground truth {gt})",
                emb.min(gt)
            );
            Ok(emb.min(gt))
        }
        _ => Err(Error::LengthMismatch { emb, gt }),
    }
}

/// One video entry of a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub activity: String,
    /// Frame rate of both the embeddings and the ground truth.
    pub fps: f64,
    /// Per-frame embeddings; not needed for dataset statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_emb_path: Option<PathBuf>,
    pub gt_path: PathBuf,
}

/// Dataset description: videos, per-activity action vocabularies and their
/// text embeddings, and named evaluation splits.
///
/// Relative paths are resolved against the manifest's directory by [`Manifest::load`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_name: String,
    /// Ordered action labels per activity; embedding row `i` is label `i`.
    pub actions: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub action_emb_paths: BTreeMap<String, PathBuf>,
    pub videos: Vec<VideoEntry>,
    #[serde(default)]
    pub splits: BTreeMap<String, Vec<String>>,
}

/// Name of the implicit split used when a manifest declares none.
pub const ALL_SPLIT: &str = "all";

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        manifest.resolve_paths(base);
        manifest.validate()?;
        Ok(manifest)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in self.action_emb_paths.values_mut() {
            *p = base.join(&*p);
        }
        for v in &mut self.videos {
            v.gt_path = base.join(&v.gt_path);
            if let Some(p) = &mut v.frames_emb_path {
                *p = base.join(&*p);
            }
        }
    }

    /// Checks ids, activity references, splits, frame rates, file existence
    /// and action-embedding row counts.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(msg));
        let mut ids = BTreeSet::new();
        for v in &self.videos {
            if !ids.insert(v.id.as_str()) {
                return bad(format!("duplicate video id {:?}", v.id));
            }
            if !self.actions.contains_key(&v.activity) {
                return bad(format!("video {:?} references unknown activity {:?}", v.id, v.activity));
            }
            if !(v.fps > 0.0 && v.fps.is_finite()) {
                return bad(format!("video {:?} has invalid fps {}", v.id, v.fps));
            }
            for p in std::iter::once(&v.gt_path).chain(&v.frames_emb_path) {
                if !p.exists() {
                    return bad(format!("video {:?}: missing file {}", v.id, p.display()));
                }
            }
        }
        for (activity, labels) in &self.actions {
            if labels.is_empty() {
                return bad(format!("activity {activity:?} has no actions"));
            }
            let unique: BTreeSet<&String> = labels.iter().collect();
            if unique.len() != labels.len() {
                return bad(format!("activity {activity:?} lists an action twice"));
            }
        }
        for (activity, path) in &self.action_emb_paths {
            let Some(labels) = self.actions.get(activity) else {
                return bad(format!("action embeddings given for unknown activity {activity:?}"));
            };
            if !path.exists() {
                return bad(format!("activity {activity:?}: missing file {}", path.display()));
            }
            let (rows, _) = read_emb_shape(path)?;
            if rows != labels.len() {
                return bad(format!(
                    "activity {activity:?} lists {} actions but {} has {rows} rows",
                    labels.len(),
                    path.display()
                ));
            }
        }
        for (split, members) in &self.splits {
            if let Some(id) = members.iter().find(|id| !ids.contains(id.as_str())) {
                return bad(format!("split {split:?} references unknown video {id:?}"));
            }
        }
        Ok(())
    }

    /// Splits by name, or a single implicit split holding every video.
    pub fn effective_splits(&self) -> BTreeMap<String, Vec<String>> {
        if self.splits.is_empty() {
            let all = self.videos.iter().map(|v| v.id.clone()).collect();
            BTreeMap::from([(ALL_SPLIT.to_string(), all)])
        } else {
            self.splits.clone()
        }
    }

    /// The requested splits (all when `names` is empty) with their member ids.
    pub fn select_splits(&self, names: &[String]) -> Result<BTreeMap<String, Vec<String>>> {
        let all = self.effective_splits();
        if names.is_empty() {
            return Ok(all);
        }
        names
            .iter()
            .map(|n| {
                all.get(n)
                    .map(|ids| (n.clone(), ids.clone()))
                    .ok_or_else(|| Error::Manifest(format!("unknown split {n:?}")))
            })
            .collect()
    }

    pub fn video(&self, id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.id == id)
    }
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize infallibly");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&to_json_bytes(value)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}
