//! Ranking and threshold metrics for heavily imbalanced pixel populations.
//!
//! The exact functions sort the full score set and serve as the reference.
//! [`MetricAccumulator`] keeps fixed-width score histograms per class so that
//! evaluation can stream over arbitrarily many pixels and be merged across
//! workers; its AUPRC/AUROC treat each histogram bin as one tied score group.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 8192;

/// Confusion counts at one decision threshold (`score >= threshold` is a
/// positive prediction).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Descending-score order with ties kept adjacent.
fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

/// Average precision with step interpolation,
/// `AP = Σ_k (R_k − R_{k−1}) · P_k`, over descending distinct-score
/// thresholds. Tied scores form a single threshold.
pub fn auprc_exact(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, _) = check_inputs(scores, labels)?;
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive".into()));
    }
    let idx = order_desc(scores);
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
        prev_recall = recall;
    }
    Ok(ap)
}

/// `P(score_pos > score_neg) + ½ P(tie)` via mid-ranks.
pub fn auroc_exact(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    let mut idx = order_desc(scores);
    idx.reverse();
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        let start = i;
        while i < idx.len() && scores[idx[i]] == s {
            i += 1;
        }
        // 1-based ranks start+1 ..= i share the mid-rank
        let mid = (start + 1 + i) as f64 / 2.0;
        let pos_in_group = idx[start..i].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += mid * pos_in_group as f64;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    check_inputs(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn f1(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    Ok(confusion_at(scores, labels, threshold)?.f1())
}

/// Final scores of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auprc: f64,
    pub auroc: f64,
    pub f1_at_half: f64,
    pub f1_best: f64,
    /// Threshold maximizing F1 on the selection population.
    pub f1_best_threshold: f64,
    pub prevalence: f64,
    pub n_pixels: u64,
    pub n_positive: u64,
}

/// Mergeable streaming state: per-class score histograms over `[0, 1]` and
/// exact confusion counts at a declared threshold set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricAccumulator {
    bins: usize,
    pos: Vec<u64>,
    neg: Vec<u64>,
    thresholds: Vec<f64>,
    confusion: Vec<Confusion>,
    n_valid: u64,
}

impl Default for MetricAccumulator {
    fn default() -> Self {
        Self::new(DEFAULT_BINS)
    }
}

impl MetricAccumulator {
    /// Accumulator with `bins` histogram bins and an exact threshold at 0.5.
    pub fn new(bins: usize) -> Self {
        Self::with_thresholds(bins, vec![0.5])
    }

    pub fn with_thresholds(bins: usize, thresholds: Vec<f64>) -> Self {
        assert!(bins > 0, "histogram needs at least one bin");
        Self {
            bins,
            pos: vec![0; bins],
            neg: vec![0; bins],
            confusion: vec![Confusion::default(); thresholds.len()],
            thresholds,
            n_valid: 0,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn n_valid(&self) -> u64 {
        self.n_valid
    }

    pub fn n_positive(&self) -> u64 {
        self.pos.iter().sum()
    }

    #[inline]
    fn bin_of(&self, s: f64) -> usize {
        ((s * self.bins as f64) as usize).min(self.bins - 1)
    }

    /// Adds one scored pixel. Scores are clipped into `[0, 1]`.
    #[inline]
    pub fn push(&mut self, score: f64, label: bool) -> Result<()> {
        if score.is_nan() {
            return Err(Error::Domain("NaN score".into()));
        }
        let s = score.clamp(0.0, 1.0);
        let b = self.bin_of(s);
        if label {
            self.pos[b] += 1;
        } else {
            self.neg[b] += 1;
        }
        for (t, c) in self.thresholds.iter().zip(self.confusion.iter_mut()) {
            match (s >= *t, label) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        self.n_valid += 1;
        Ok(())
    }

    /// Adds every pixel whose `valid` flag is set.
    pub fn update(&mut self, scores: &[f32], labels: &[u8], valid: &[u8]) -> Result<()> {
        if scores.len() != labels.len() || scores.len() != valid.len() {
            return Err(Error::Shape(format!(
                "scores/labels/valid lengths {}/{}/{} differ",
                scores.len(),
                labels.len(),
                valid.len()
            )));
        }
        for ((&s, &l), &v) in scores.iter().zip(labels).zip(valid) {
            if v != 0 {
                self.push(s as f64, l != 0)?;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricAccumulator) -> Result<()> {
        if self.bins != other.bins || self.thresholds != other.thresholds {
            return Err(Error::Shape(format!(
                "cannot merge accumulators with {} and {} bins / thresholds {:?} vs {:?}",
                self.bins, other.bins, self.thresholds, other.thresholds
            )));
        }
        for (a, b) in self.pos.iter_mut().zip(&other.pos) {
            *a += b;
        }
        for (a, b) in self.neg.iter_mut().zip(&other.neg) {
            *a += b;
        }
        for (a, b) in self.confusion.iter_mut().zip(&other.confusion) {
            a.add(b);
        }
        self.n_valid += other.n_valid;
        Ok(())
    }

    /// Exact counts at a declared threshold.
    pub fn confusion_at(&self, threshold: f64) -> Option<Confusion> {
        self.thresholds.iter().position(|&t| t == threshold).map(|i| self.confusion[i])
    }

    /// Counts predicting positive for every bin `>= k`, i.e. threshold `k/B`.
    fn confusion_from_bin(&self, k: usize) -> Confusion {
        let tp: u64 = self.pos[k..].iter().sum();
        let fp: u64 = self.neg[k..].iter().sum();
        let p = self.n_positive();
        Confusion { tp, fp, fn_: p - tp, tn: self.n_valid - p - fp }
    }

    /// Bin index `k` whose threshold `k/B` maximizes F1 (highest on ties).
    fn best_f1_bin(&self) -> usize {
        let p = self.n_positive();
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for k in (0..self.bins).rev() {
            tp += self.pos[k];
            fp += self.neg[k];
            let denom = 2 * tp + fp + (p - tp);
            let f = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
            if f > best.0 {
                best = (f, k);
            }
        }
        best.1
    }

    fn auprc_binned(&self, n_pos: u64) -> f64 {
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for k in (0..self.bins).rev() {
            if self.pos[k] == 0 && self.neg[k] == 0 {
                continue;
            }
            tp += self.pos[k];
            fp += self.neg[k];
            let recall = tp as f64 / n_pos as f64;
            ap += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
            prev_recall = recall;
        }
        ap
    }

    fn auroc_binned(&self, n_pos: u64, n_neg: u64) -> f64 {
        let mut neg_below = 0u64;
        let mut acc = 0.0;
        for k in 0..self.bins {
            acc += self.pos[k] as f64 * (neg_below as f64 + 0.5 * self.neg[k] as f64);
            neg_below += self.neg[k];
        }
        acc / (n_pos as f64 * n_neg as f64)
    }

    /// Final report. The best-F1 threshold is selected on `selection` (for
    /// example a validation accumulator) when given, else on `self`.
    pub fn finalize(&self, selection: Option<&MetricAccumulator>) -> Result<MetricsReport> {
        if self.n_valid == 0 {
            return Err(Error::UndefinedMetric("no valid pixels".into()));
        }
        let n_pos = self.n_positive();
        let n_neg = self.n_valid - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::UndefinedMetric(format!(
                "need both classes, got {n_pos} positive / {n_neg} negative pixels"
            )));
        }
        let sel = selection.unwrap_or(self);
        if sel.bins != self.bins {
            return Err(Error::Shape("selection accumulator has a different bin count".into()));
        }
        let k = sel.best_f1_bin();
        let f1_at_half = match self.confusion_at(0.5) {
            Some(c) => c.f1(),
            None => self.confusion_from_bin(self.bin_of(0.5)).f1(),
        };
        Ok(MetricsReport {
            auprc: self.auprc_binned(n_pos),
            auroc: self.auroc_binned(n_pos, n_neg),
            f1_at_half,
            f1_best: self.confusion_from_bin(k).f1(),
            f1_best_threshold: k as f64 / self.bins as f64,
            prevalence: n_pos as f64 / self.n_valid as f64,
            n_pixels: self.n_valid,
            n_positive: n_pos,
        })
    }

    /// Precision-recall curve as `(threshold, precision, recall)` rows, one
    /// per non-empty bin in descending threshold order.
    pub fn pr_curve(&self) -> Vec<(f64, f64, f64)> {
        let n_pos = self.n_positive();
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut rows = Vec::new();
        for k in (0..self.bins).rev() {
            if self.pos[k] == 0 && self.neg[k] == 0 {
                continue;
            }
            tp += self.pos[k];
            fp += self.neg[k];
            rows.push((k as f64 / self.bins as f64, ratio(tp, tp + fp), ratio(tp, n_pos)));
        }
        rows
    }

    pub fn write_pr_curve_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "threshold,precision,recall")?;
        for (t, p, r) in self.pr_curve() {
            writeln!(out, "{t},{p},{r}")?;
        }
        Ok(())
    }
}
