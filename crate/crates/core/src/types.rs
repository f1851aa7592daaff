//! Shared mathematical objects: embedding, similarity, probability and
//! transport matrices, plus per-frame labelings and their run-length view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("{rows}x{cols} has no entries")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(n_rows, n_cols, rows.concat())
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::from_vec(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Matrix with columns reordered so that output column `j` is input column `order[j]`.
    pub fn select_columns(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.cols || order.iter().any(|&c| c >= self.cols) {
            return Err(Error::Shape("column order is not a permutation".into()));
        }
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, order[j]))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (s, &x) in sums.iter_mut().zip(row) {
                *s += x;
            }
        }
        sums
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                row: k / self.cols,
                col: k % self.cols,
            }),
            None => Ok(()),
        }
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Frame (T×C) or action (N×C) embeddings as stored on disk: single precision, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_flag(rows, cols, data, false)
    }

    pub(crate) fn with_flag(rows: usize, cols: usize, data: Vec<f32>, normalized: bool) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("{rows}x{cols} embedding has no entries")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} embedding needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self {
            rows,
            cols,
            data,
            normalized,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// True once every row has been scaled to unit ℓ2 norm.
    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// T×N frame–action similarities.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    values: Matrix,
    unit_inputs: bool,
}

impl SimilarityMatrix {
    /// Wraps raw scores. Entries need not be bounded.
    pub fn new(values: Matrix) -> Result<Self> {
        values.check_finite()?;
        Ok(Self {
            values,
            unit_inputs: false,
        })
    }

    pub(crate) fn from_unit(values: Matrix) -> Self {
        Self {
            values,
            unit_inputs: true,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Whether both embedding sets were unit-normalized, so entries lie in [−1, 1].
    pub fn from_unit_inputs(&self) -> bool {
        self.unit_inputs
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn actions(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Logits ℓ_t of frame `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub fn select_columns(&self, order: &[usize]) -> Result<Self> {
        Ok(Self {
            values: self.values.select_columns(order)?,
            unit_inputs: self.unit_inputs,
        })
    }
}

/// Row-stochastic T×N matrix of per-frame class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMatrix {
    values: Matrix,
}

impl ProbMatrix {
    pub(crate) fn new_unchecked(values: Matrix) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }
}

/// Solver status attached to a transport plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStatus {
    pub converged: bool,
    /// Sinkhorn sweeps performed.
    pub iterations: usize,
    /// Dual Newton steps taken after Sinkhorn stalled.
    pub newton_steps: usize,
    /// ℓ∞ violation of the row and column marginals of the returned plan.
    pub marginal_violation: f64,
}

/// Coupling between frames and actions with marginals u = 1/T and v = 1/N.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    mass: Matrix,
    status: SolverStatus,
}

impl TransportPlan {
    pub(crate) fn new(mass: Matrix, status: SolverStatus) -> Self {
        Self { mass, status }
    }

    pub fn mass(&self) -> &Matrix {
        &self.mass
    }

    pub fn frames(&self) -> usize {
        self.mass.rows()
    }

    pub fn actions(&self) -> usize {
        self.mass.cols()
    }

    pub fn status(&self) -> SolverStatus {
        self.status
    }

    pub fn converged(&self) -> bool {
        self.status.converged
    }

    /// ℓ∞ distance of the row sums from 1/T and the column sums from 1/N.
    pub fn marginal_violation(&self) -> f64 {
        marginal_violation(&self.mass)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.as_slice().iter().sum()
    }
}

pub(crate) fn marginal_violation(mass: &Matrix) -> f64 {
    let u = 1.0 / mass.rows() as f64;
    let v = 1.0 / mass.cols() as f64;
    let rows = mass.row_sums().into_iter().map(|s| (s - u).abs());
    let cols = mass.col_sums().into_iter().map(|s| (s - v).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A maximal run of frames carrying the same label; `end` is exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Intersection-over-union of the two frame intervals.
    pub fn iou(&self, other: &Segment) -> f64 {
        let inter = self.end.min(other.end).saturating_sub(self.start.max(other.start));
        let union = self.end.max(other.end) - self.start.min(other.start);
        inter as f64 / union as f64
    }
}

/// Per-frame action indices into an ordered vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameLabeling {
    labels: Vec<usize>,
    label_names: Vec<String>,
}

impl FrameLabeling {
    pub fn new(labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        let n = label_names.len();
        if let Some(&index) = labels.iter().find(|&&l| l >= n) {
            return Err(Error::LabelOutOfRange { index, n });
        }
        Ok(Self { labels, label_names })
    }

    /// Labeling over an anonymous vocabulary `"0".."n-1"`.
    pub fn with_vocab_size(labels: Vec<usize>, n: usize) -> Result<Self> {
        Self::new(labels, (0..n).map(|i| i.to_string()).collect())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn segments(&self) -> Result<Vec<Segment>> {
        segments_of(&self.labels)
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }
}

/// Maximal constant runs of `labels`, in temporal order.
pub fn segments_of(labels: &[usize]) -> Result<Vec<Segment>> {
    let Some(&first) = labels.first() else {
        return Err(Error::EmptySequence);
    };
    let mut out = Vec::new();
    let mut cur = Segment {
        label: first,
        start: 0,
        end: 1,
    };
    for (t, &l) in labels.iter().enumerate().skip(1) {
        if l == cur.label {
            cur.end = t + 1;
        } else {
            out.push(cur);
            cur = Segment {
                label: l,
                start: t,
                end: t + 1,
            };
        }
    }
    out.push(cur);
    Ok(out)
}

/// Expands segments back to per-frame labels.
pub fn expand_segments(segments: &[Segment]) -> Vec<usize> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.label, s.len()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(label: usize, start: usize, end: usize) -> Segment {
        Segment { label, start, end }
    }

    #[test]
    fn runs_by_inspection() {
        assert_eq!(
            segments_of(&[0, 0, 1, 1, 1, 0]).unwrap(),
            vec![seg(0, 0, 2), seg(1, 2, 5), seg(0, 5, 6)]
        );
        assert_eq!(segments_of(&[2]).unwrap(), vec![seg(2, 0, 1)]);
        let alt = segments_of(&[0, 1, 0, 1]).unwrap();
        assert_eq!(alt.len(), 4);
        assert!(alt.iter().all(|s| s.len() == 1));
    }

    #[test]
    fn empty_labeling_is_an_error() {
        assert!(matches!(segments_of(&[]), Err(Error::EmptySequence)));
    }

    #[test]
    fn labeling_rejects_out_of_vocab() {
        assert!(FrameLabeling::with_vocab_size(vec![0, 3], 3).is_err());
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(Matrix::from_vec(0, 2, vec![]).is_err());
        assert!(EmbeddingMatrix::new(1, 2, vec![1.0, f32::NAN]).is_err());
    }

    #[test]
    fn iou_of_intervals() {
        assert_eq!(seg(0, 0, 10).iou(&seg(0, 0, 8)), 0.8);
        assert_eq!(seg(0, 0, 5).iou(&seg(0, 5, 9)), 0.0);
    }

    proptest! {
        #[test]
        fn segments_round_trip(labels in prop::collection::vec(0usize..4, 1..200)) {
            let segs = segments_of(&labels).unwrap();
            prop_assert_eq!(expand_segments(&segs), labels.clone());
            prop_assert_eq!(segs.iter().map(Segment::len).sum::<usize>(), labels.len());
            for w in segs.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
                prop_assert_ne!(w[0].label, w[1].label);
            }
        }
    }
}
