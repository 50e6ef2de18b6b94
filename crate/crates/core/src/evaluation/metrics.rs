//! Structure-preservation scores between test-train distance matrices.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RfaeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    Qnx,
    Trust,
    Spearman,
    Pearson,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [ScoreKind::Qnx, ScoreKind::Trust, ScoreKind::Spearman, ScoreKind::Pearson];

    pub fn is_local(self) -> bool {
        matches!(self, ScoreKind::Qnx | ScoreKind::Trust)
    }
}

/// Neighbourhood sizes `5, 15, 25, ...` up to `floor(sqrt(n_train))`. When
/// the square root is below 5 only `K = 5` is used (capped at `n_train - 1`).
pub fn local_k_values(n_train: usize) -> Vec<usize> {
    let top = (n_train as f64).sqrt().floor() as usize;
    if top < 5 {
        log::warn!("sqrt(N_train) = {top} < 5; local scores use K = 5 only");
        return vec![5.min(n_train.saturating_sub(1)).max(1)];
    }
    (5..=top).step_by(10).collect()
}

/// Row-wise neighbour order (ascending distance, ties by lower index) and
/// the 0-based rank of every column.
#[derive(Debug, Clone)]
pub struct RowRanking {
    pub order: Array2<u32>,
    pub rank: Array2<u32>,
}

impl RowRanking {
    pub fn new(d: ArrayView2<f64>) -> Self {
        let (n, m) = d.dim();
        let mut order = Array2::zeros((n, m));
        let mut rank = Array2::zeros((n, m));
        order
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(rank.axis_iter_mut(Axis(0)))
            .enumerate()
            .for_each(|(i, (mut o, mut r))| {
                let row = d.row(i);
                let mut idx: Vec<u32> = (0..m as u32).collect();
                idx.sort_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]).then(a.cmp(&b)));
                for (pos, &j) in idx.iter().enumerate() {
                    o[pos] = j;
                    r[j as usize] = pos as u32;
                }
            });
        RowRanking { order, rank }
    }

    pub fn n_cols(&self) -> usize {
        self.order.ncols()
    }
}

fn check_pair(d_true: ArrayView2<f64>, d_emb: ArrayView2<f64>) -> Result<()> {
    if d_true.dim() != d_emb.dim() {
        return Err(RfaeError::DimensionMismatch {
            expected: d_true.len(),
            found: d_emb.len(),
        });
    }
    Ok(())
}

fn check_k(k: usize, n_train: usize) -> Result<()> {
    if k == 0 {
        return Err(RfaeError::invalid("neighbourhood size K must be positive"));
    }
    if k >= n_train {
        return Err(RfaeError::invalid(format!("K = {k} must be below N_train = {n_train}")));
    }
    Ok(())
}

/// QNX from precomputed rankings.
pub fn qnx_ranked(truth: &RowRanking, emb: &RowRanking, k: usize) -> Result<f64> {
    check_k(k, truth.n_cols())?;
    let n = truth.order.nrows();
    if n == 0 {
        return Ok(f64::NAN);
    }
    let hits: usize = (0..n)
        .map(|i| {
            let tr = truth.rank.row(i);
            emb.order.row(i).iter().take(k).filter(|&&j| (tr[j as usize] as usize) < k).count()
        })
        .sum();
    Ok(hits as f64 / (n * k) as f64)
}

/// Trustworthiness from precomputed rankings; ranks are 1-based.
pub fn trust_ranked(truth: &RowRanking, emb: &RowRanking, k: usize) -> Result<f64> {
    let n_train = truth.n_cols();
    check_k(k, n_train)?;
    let denom_factor = 2 * n_train as i64 - 3 * k as i64 - 1;
    if denom_factor <= 0 {
        return Err(RfaeError::invalid(format!(
            "K = {k} too large for trustworthiness with N_train = {n_train}"
        )));
    }
    let n = truth.order.nrows();
    if n == 0 {
        return Ok(f64::NAN);
    }
    let penalty: u64 = (0..n)
        .map(|i| {
            let tr = truth.rank.row(i);
            emb.order
                .row(i)
                .iter()
                .take(k)
                .map(|&j| tr[j as usize] as u64 + 1)
                .filter(|&r| r > k as u64)
                .map(|r| r - k as u64)
                .sum::<u64>()
        })
        .sum();
    Ok(1.0 - 2.0 / (n as f64 * k as f64 * denom_factor as f64) * penalty as f64)
}

/// Mean fraction of shared `K` nearest training neighbours.
pub fn qnx(d_true: ArrayView2<f64>, d_emb: ArrayView2<f64>, k: usize) -> Result<f64> {
    check_pair(d_true, d_emb)?;
    qnx_ranked(&RowRanking::new(d_true), &RowRanking::new(d_emb), k)
}

pub fn trustworthiness(d_true: ArrayView2<f64>, d_emb: ArrayView2<f64>, k: usize) -> Result<f64> {
    check_pair(d_true, d_emb)?;
    trust_ranked(&RowRanking::new(d_true), &RowRanking::new(d_emb), k)
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(v: ArrayView1<f64>) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.par_sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut s = 0;
    while s < n {
        let mut e = s + 1;
        while e < n && v[idx[e]] == v[idx[s]] {
            e += 1;
        }
        let avg = (s + e + 1) as f64 / 2.0;
        for &j in &idx[s..e] {
            ranks[j] = avg;
        }
        s = e;
    }
    ranks
}

/// Pearson correlation of two equally long sequences.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(RfaeError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(RfaeError::Degenerate("degenerate distances: fewer than two entries".into()));
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(RfaeError::Degenerate("degenerate distances: zero variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn flat(m: ArrayView2<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

pub fn pearson_score(d_true: ArrayView2<f64>, d_emb: ArrayView2<f64>) -> Result<f64> {
    check_pair(d_true, d_emb)?;
    pearson(&flat(d_true), &flat(d_emb))
}

pub fn spearman_score(d_true: ArrayView2<f64>, d_emb: ArrayView2<f64>) -> Result<f64> {
    check_pair(d_true, d_emb)?;
    let a = average_ranks(ndarray::ArrayView1::from(&flat(d_true)));
    let b = average_ranks(ndarray::ArrayView1::from(&flat(d_emb)));
    pearson(&a, &b)
}

/// Scores one perturbed (or original) input-space matrix against a fixed
/// embedding, reusing everything that depends only on the embedding.
#[derive(Debug, Clone)]
pub struct ScoreContext {
    emb_ranking: RowRanking,
    emb_flat: Vec<f64>,
    emb_flat_ranks: Vec<f64>,
    ks: Vec<usize>,
}

impl ScoreContext {
    pub fn new(d_emb: ArrayView2<f64>) -> Self {
        let emb_flat = flat(d_emb);
        let emb_flat_ranks = average_ranks(ndarray::ArrayView1::from(&emb_flat));
        ScoreContext {
            emb_ranking: RowRanking::new(d_emb),
            emb_flat,
            emb_flat_ranks,
            ks: local_k_values(d_emb.ncols()),
        }
    }

    pub fn k_values(&self) -> &[usize] {
        &self.ks
    }

    /// Scores for every requested kind; local scores are averaged over
    /// [`local_k_values`].
    pub fn scores(&self, d_true: ArrayView2<f64>, kinds: &[ScoreKind]) -> Result<Vec<f64>> {
        if d_true.dim() != self.emb_ranking.order.dim() {
            return Err(RfaeError::DimensionMismatch {
                expected: self.emb_flat.len(),
                found: d_true.len(),
            });
        }
        let needs_rank = kinds.iter().any(|k| k.is_local());
        let truth = needs_rank.then(|| RowRanking::new(d_true));
        let truth_flat = flat(d_true);
        let mut out = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let v = match kind {
                ScoreKind::Qnx | ScoreKind::Trust => {
                    let truth = truth.as_ref().expect("ranked");
                    let mut acc = 0.0;
                    for &k in &self.ks {
                        acc += if kind == ScoreKind::Qnx {
                            qnx_ranked(truth, &self.emb_ranking, k)?
                        } else {
                            trust_ranked(truth, &self.emb_ranking, k)?
                        };
                    }
                    acc / self.ks.len() as f64
                }
                ScoreKind::Pearson => pearson(&truth_flat, &self.emb_flat)?,
                ScoreKind::Spearman => {
                    let r = average_ranks(ndarray::ArrayView1::from(&truth_flat));
                    pearson(&r, &self.emb_flat_ranks)?
                }
            };
            out.push(v);
        }
        Ok(out)
    }
}
