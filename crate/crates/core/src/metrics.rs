//! Ranking metrics for recommendation, masked MSE for imputation, and two
//! naive baselines to compare against.

use serde::Serialize;
use thiserror::Error;

use crate::tensor::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: scores {0:?} vs targets {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("no row has a relevant label")]
    NoRelevant,
    #[error("evaluation mask is empty")]
    EmptyMask,
    #[error("k must be at least 1")]
    ZeroK,
}

fn check_shapes(a: &Matrix, b: &Matrix) -> Result<(), MetricError> {
    if a.shape() != b.shape() {
        return Err(MetricError::Shape(a.shape(), b.shape()));
    }
    Ok(())
}

/// Label ranking average precision for one row. `None` if nothing is
/// relevant.
///
/// A label's rank is its average position among equal scores, i.e.
/// `#greater + (#tied + 1) / 2` with the label itself among the tied, and
/// the count of relevant labels ranked at or above it is taken the same
/// way. Without ties this is the usual definition; with ties it stays in
/// `[0, 1]` and does not depend on the label order.
pub fn lrap_row(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let n_rel = relevant.iter().filter(|&&r| r).count();
    if n_rel == 0 {
        return None;
    }
    let mut total = 0.0;
    for (j, &s) in scores.iter().enumerate() {
        if !relevant[j] {
            continue;
        }
        let (mut greater, mut tied, mut rel_greater, mut rel_tied) = (0usize, 0usize, 0usize, 0usize);
        for (&t, &r) in scores.iter().zip(relevant) {
            if t > s {
                greater += 1;
                rel_greater += r as usize;
            } else if t == s {
                tied += 1;
                rel_tied += r as usize;
            }
        }
        let rank = greater as f64 + (tied as f64 + 1.0) / 2.0;
        let hits = rel_greater as f64 + (rel_tied as f64 + 1.0) / 2.0;
        total += hits / rank;
    }
    Some(total / n_rel as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApNormalizer {
    /// Divide by `min(k, #relevant)`, so a row is perfect once its top
    /// `min(k, #relevant)` are all relevant.
    #[default]
    MinKRelevant,
    /// Divide by `k`.
    K,
}

/// Indices ordered by descending score, ties broken by lower index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn ap_at_k_row(scores: &[f64], relevant: &[bool], k: usize, norm: ApNormalizer) -> Option<f64> {
    let n_rel = relevant.iter().filter(|&&r| r).count();
    if n_rel == 0 || k == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &j) in ranking(scores).iter().take(k).enumerate() {
        if relevant[j] {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    let denom = match norm {
        ApNormalizer::MinKRelevant => k.min(n_rel),
        ApNormalizer::K => k,
    };
    Some(sum / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankingResult {
    pub lrap: f64,
    pub map_at_k: f64,
    pub k: usize,
    pub n_rows_scored: usize,
    /// Rows left out of both averages for having no relevant label.
    pub n_rows_skipped: usize,
}

fn relevance_row(m: &Matrix, i: usize) -> Vec<bool> {
    m.row(i).iter().map(|&v| v != 0.0).collect()
}

fn mean_over_rows(
    scores: &Matrix,
    relevance: &Matrix,
    f: impl Fn(&[f64], &[bool]) -> Option<f64>,
) -> Result<(f64, usize), MetricError> {
    check_shapes(scores, relevance)?;
    let vals: Vec<f64> = (0..scores.rows())
        .filter_map(|i| f(scores.row(i), &relevance_row(relevance, i)))
        .collect();
    if vals.is_empty() {
        return Err(MetricError::NoRelevant);
    }
    Ok((vals.iter().sum::<f64>() / vals.len() as f64, vals.len()))
}

/// Mean LRAP over rows with at least one relevant label.
pub fn lrap(scores: &Matrix, relevance: &Matrix) -> Result<f64, MetricError> {
    mean_over_rows(scores, relevance, lrap_row).map(|(v, _)| v)
}

/// Mean AP@k over rows with at least one relevant label, normalized by
/// `min(k, #relevant)`.
pub fn map_at_k(scores: &Matrix, relevance: &Matrix, k: usize) -> Result<f64, MetricError> {
    map_at_k_with(scores, relevance, k, ApNormalizer::MinKRelevant)
}

pub fn map_at_k_with(
    scores: &Matrix,
    relevance: &Matrix,
    k: usize,
    norm: ApNormalizer,
) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    mean_over_rows(scores, relevance, |s, r| ap_at_k_row(s, r, k, norm)).map(|(v, _)| v)
}

pub fn ranking_metrics(scores: &Matrix, relevance: &Matrix, k: usize) -> Result<RankingResult, MetricError> {
    let (lrap, n) = mean_over_rows(scores, relevance, lrap_row)?;
    let map = map_at_k(scores, relevance, k)?;
    Ok(RankingResult {
        lrap,
        map_at_k: map,
        k,
        n_rows_scored: n,
        n_rows_skipped: scores.rows() - n,
    })
}

/// `Σ m (v - a)² / Σ m`: mean squared error over the marked edges.
pub fn masked_mse(v: &Matrix, a: &Matrix, mask: &Matrix) -> Result<f64, MetricError> {
    check_shapes(v, a)?;
    check_shapes(v, mask)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&v, &a), &m) in v.as_slice().iter().zip(a.as_slice()).zip(mask.as_slice()) {
        num += m * (v - a) * (v - a);
        den += m;
    }
    if den == 0.0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(num / den)
}

/// Scores every row in `eval_rows` with each medication's prescription
/// frequency over `train_rows` of `train_a_em`.
pub fn baseline_popularity(train_a_em: &Matrix, train_rows: &[usize], eval_rows: &[usize]) -> Matrix {
    let n_m = train_a_em.cols();
    let mut freq = vec![0.0; n_m];
    for &i in train_rows {
        for (f, &v) in freq.iter_mut().zip(train_a_em.row(i)) {
            *f += v;
        }
    }
    if !train_rows.is_empty() {
        let n = train_rows.len() as f64;
        freq.iter_mut().for_each(|f| *f /= n);
    }
    Matrix::from_fn(eval_rows.len(), n_m, |_, j| freq[j])
}

/// Each lab's mean over its training observations, repeated on every row.
/// A lab never observed in training gets 0.5.
pub fn baseline_column_mean(train_a_el: &Matrix, train_m_el: &Matrix) -> Matrix {
    let (rows, cols) = train_a_el.shape();
    let mut sum = vec![0.0; cols];
    let mut cnt = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            let m = train_m_el.get(i, j);
            sum[j] += m * train_a_el.get(i, j);
            cnt[j] += m;
        }
    }
    let means: Vec<f64> = sum
        .iter()
        .zip(&cnt)
        .map(|(&s, &c)| if c > 0.0 { s / c } else { 0.5 })
        .collect();
    Matrix::from_fn(rows, cols, |_, j| means[j])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricEntry {
    pub metric: String,
    pub value: f64,
    /// Rows or edges the value averages over.
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricEntry>,
}

impl MetricReport {
    pub fn push(&mut self, metric: &str, value: f64, n: usize, k: Option<usize>) {
        self.metrics.push(MetricEntry {
            metric: metric.to_string(),
            value,
            n,
            k,
        });
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|e| e.metric == metric).map(|e| e.value)
    }

    /// One `name=value` line per metric, plus `name.n` and `name.k`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.metrics {
            out.push_str(&format!("{}={:.6}\n{}.n={}\n", e.metric, e.value, e.metric, e.n));
            if let Some(k) = e.k {
                out.push_str(&format!("{}.k={k}\n", e.metric));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }
}
