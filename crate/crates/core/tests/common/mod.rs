//! Reference implementations used to check the library. They favor
//! obviousness over speed and share no code with the crate.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact optimum of the transport LP by enumerating basic feasible solutions.
///
/// A vertex of the transport polytope is supported on `m + n − 1` cells; every
/// such cell subset whose equality system has a unique non-negative solution is
/// a vertex. Returns the sorted distinct vertex costs.
pub fn lp_vertex_costs(cost: &[Vec<f64>]) -> Vec<f64> {
    let m = cost.len();
    let n = cost[0].len();
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut costs = Vec::new();
    for subset in combinations(cells.len(), k) {
        // Rows: m row-sum equations then n column-sum equations.
        let mut a = vec![vec![0.0; k + 1]; m + n];
        for (col, &cell) in subset.iter().enumerate() {
            let (i, j) = cells[cell];
            a[i][col] = 1.0;
            a[m + j][col] = 1.0;
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[k] = if i < m { 1.0 / m as f64 } else { 1.0 / n as f64 };
        }
        let Some(x) = solve_consistent(a, k) else {
            continue;
        };
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let c: f64 = subset
            .iter()
            .zip(&x)
            .map(|(&cell, v)| cost[cells[cell].0][cells[cell].1] * v)
            .sum();
        costs.push(c);
    }
    costs.sort_by(f64::total_cmp);
    costs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    costs
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Gauss–Jordan on an augmented system with `unknowns` columns; `None` unless
/// the solution exists and is unique.
fn solve_consistent(mut a: Vec<Vec<f64>>, unknowns: usize) -> Option<Vec<f64>> {
    let rows = a.len();
    let mut pivot_row = 0;
    for col in 0..unknowns {
        let best = (pivot_row..rows).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[best][col].abs() < 1e-12 {
            return None;
        }
        a.swap(pivot_row, best);
        let p = a[pivot_row][col];
        for v in a[pivot_row].iter_mut() {
            *v /= p;
        }
        for r in 0..rows {
            if r != pivot_row && a[r][col] != 0.0 {
                let f = a[r][col];
                let src = a[pivot_row].clone();
                for (v, s) in a[r].iter_mut().zip(&src) {
                    *v -= f * s;
                }
            }
        }
        pivot_row += 1;
    }
    if a[pivot_row..].iter().any(|row| row[unknowns].abs() > 1e-12) {
        return None;
    }
    Some((0..unknowns).map(|c| a[c][unknowns]).collect())
}

/// Textbook Sinkhorn scaling `Π = diag(x) K diag(y)` in plain arithmetic.
pub fn plain_sinkhorn(cost: &[Vec<f64>], epsilon: f64, iterations: usize) -> Vec<Vec<f64>> {
    let m = cost.len();
    let n = cost[0].len();
    let k: Vec<Vec<f64>> = cost
        .iter()
        .map(|r| r.iter().map(|c| (-c / epsilon).exp()).collect())
        .collect();
    let mut x = vec![1.0; m];
    let mut y = vec![1.0; n];
    for _ in 0..iterations {
        for i in 0..m {
            let s: f64 = (0..n).map(|j| k[i][j] * y[j]).sum();
            x[i] = (1.0 / m as f64) / s;
        }
        for j in 0..n {
            let s: f64 = (0..m).map(|i| k[i][j] * x[i]).sum();
            y[j] = (1.0 / n as f64) / s;
        }
    }
    (0..m)
        .map(|i| (0..n).map(|j| x[i] * k[i][j] * y[j]).collect())
        .collect()
}

/// Segment label sequence of a frame labeling.
pub fn runs(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == l => last.2 = t + 1,
            _ => out.push((l, t, t + 1)),
        }
    }
    out
}

/// Levenshtein distance by memoized recursion over suffixes.
pub fn edit_distance(a: &[usize], b: &[usize]) -> usize {
    fn go(a: &[usize], b: &[usize], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn edit_score(pred: &[usize], gt: &[usize]) -> f64 {
    let p: Vec<usize> = runs(pred).iter().map(|r| r.0).collect();
    let g: Vec<usize> = runs(gt).iter().map(|r| r.0).collect();
    let longest = p.len().max(g.len());
    (100.0 * (1.0 - edit_distance(&p, &g) as f64 / longest as f64)).max(0.0)
}

fn iou(a: (usize, usize, usize), b: (usize, usize, usize)) -> f64 {
    let frames_a: std::collections::BTreeSet<usize> = (a.1..a.2).collect();
    let frames_b: std::collections::BTreeSet<usize> = (b.1..b.2).collect();
    let inter = frames_a.intersection(&frames_b).count();
    let union = frames_a.union(&frames_b).count();
    inter as f64 / union as f64
}

/// Largest one-to-one matching of same-class segments with IoU ≥ τ, by
/// exhaustive search over every assignment of predicted segments.
pub fn best_matching(pred: &[usize], gt: &[usize], tau: f64) -> usize {
    let p = runs(pred);
    let g = runs(gt);
    let eligible: Vec<Vec<usize>> = p
        .iter()
        .map(|&ps| {
            (0..g.len())
                .filter(|&k| g[k].0 == ps.0 && iou(ps, g[k]) >= tau)
                .collect()
        })
        .collect();
    fn go(i: usize, eligible: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
        if i == eligible.len() {
            return 0;
        }
        let mut best = go(i + 1, eligible, used);
        for &k in &eligible[i] {
            if !used[k] {
                used[k] = true;
                best = best.max(1 + go(i + 1, eligible, used));
                used[k] = false;
            }
        }
        best
    }
    go(0, &eligible, &mut vec![false; g.len()])
}

/// F1 from precision and recall, as a percentage.
pub fn f1(pred: &[usize], gt: &[usize], tau: f64) -> f64 {
    let tp = best_matching(pred, gt, tau) as f64;
    let precision = tp / runs(pred).len() as f64;
    let recall = tp / runs(gt).len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    }
}

/// Random labeling of length `t` with at most `max_runs` runs over `n` classes.
pub fn random_labeling(r: &mut ChaCha8Rng, t: usize, n: usize, max_runs: usize) -> Vec<usize> {
    let k = r.gen_range(1..=max_runs.min(t));
    let mut cuts: Vec<usize> = (0..k - 1).map(|_| r.gen_range(1..t)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(t);
    let mut labels = Vec::with_capacity(t);
    for w in bounds.windows(2) {
        let l = r.gen_range(0..n);
        labels.extend(std::iter::repeat_n(l, w[1] - w[0]));
    }
    labels
}

/// A noisy copy of `gt`: boundaries shifted and some frames relabeled in blocks.
pub fn perturb(r: &mut ChaCha8Rng, gt: &[usize], n: usize) -> Vec<usize> {
    let mut out = gt.to_vec();
    let shift = r.gen_range(0..=gt.len() / 10);
    if shift > 0 {
        out.rotate_right(shift);
        let first = out[shift];
        out[..shift].fill(first);
    }
    for _ in 0..r.gen_range(0..3) {
        let start = r.gen_range(0..gt.len());
        let end = (start + r.gen_range(1..=gt.len() / 5 + 1)).min(gt.len());
        out[start..end].fill(r.gen_range(0..n));
    }
    out
}

/// Best non-repetition path by enumerating all `C^K` label sequences in
/// lexicographic order, keeping the first strict improvement.
pub fn best_path(scores: &[Vec<f64>], lambda: f64) -> (Vec<usize>, f64) {
    let k = scores.len();
    let c = scores[0].len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut path = vec![0; k];
    loop {
        let mut value: f64 = path.iter().zip(scores).map(|(&y, row)| row[y]).sum();
        value -= lambda * path.windows(2).filter(|w| w[0] == w[1]).count() as f64;
        if best.as_ref().is_none_or(|b| value > b.1) {
            best = Some((path.clone(), value));
        }
        // Odometer increment, last position fastest, so paths come out in lexicographic order.
        let mut pos = k;
        loop {
            if pos == 0 {
                return best.expect("at least one path");
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < c {
                break;
            }
            path[pos] = 0;
        }
    }
}
