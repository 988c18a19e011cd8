//! Scoring metrics: ROC, AUC, EER and HTER.
//!
//! Decision rule everywhere: predict real when score > threshold (strict).
//! AUC is trapezoidal over the threshold-sweep ROC, accumulated in integer
//! counts so it agrees exactly with Mann-Whitney pair counting (ties 1/2).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Where a score pool came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    DataCenterPool,
    User,
}

/// (score, label in {0 spoof, 1 real}) pairs. Scores are any finite reals;
/// higher means more likely real. Classifier logits are the usual source.
#[derive(Debug, Clone)]
pub struct ScoreSet {
    scores: Vec<(f64, u8)>,
    pub source: Source,
}

impl ScoreSet {
    pub fn new(scores: Vec<(f64, u8)>, source: Source) -> Result<Self> {
        for &(s, l) in &scores {
            if l > 1 {
                return Err(Error::Label(l as f64));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("score".into()));
            }
        }
        Ok(ScoreSet { scores, source })
    }

    pub fn scores(&self) -> &[(f64, u8)] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn counts(&self) -> (usize, usize) {
        let real = self.scores.iter().filter(|&&(_, l)| l == 1).count();
        (real, self.scores.len() - real)
    }

    fn require_both_labels(&self) -> Result<(usize, usize)> {
        let (real, spoof) = self.counts();
        if real == 0 || spoof == 0 {
            return Err(Error::MetricUndefined(format!(
                "need both labels, got {real} real / {spoof} spoof"
            )));
        }
        Ok((real, spoof))
    }
}

/// One ROC operating point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// Metric bundle for one user-domain evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub roc: Vec<RocPoint>,
    pub auc: f64,
    pub eer: f64,
    pub hter: f64,
    pub threshold_used: f64,
}

/// Operating points at each distinct score, descending, starting from the
/// reject-everything point. Returns (threshold, true positives, false
/// positives) with integer counts. Each threshold realizes its counts under
/// the strict `score > threshold` rule: the reject-everything point sits at
/// the maximum score, interior points halfway between adjacent distinct
/// scores, and the accept-everything point below the minimum score.
fn sweep(s: &ScoreSet) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<(f64, u8)> = s.scores.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = Vec::with_capacity(sorted.len() + 1);
    points.push((sorted[0].0, 0usize, 0usize));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if i < sorted.len() {
            (t + sorted[i].0) / 2.0
        } else {
            t - 1.0
        };
        points.push((threshold, tp, fp));
    }
    points
}

/// ROC curve and AUC.
pub fn roc_auc(s: &ScoreSet) -> Result<(Vec<RocPoint>, f64)> {
    let (real, spoof) = s.require_both_labels()?;
    let points = sweep(s);
    let mut roc = Vec::with_capacity(points.len());
    let mut area2 = 0usize; // 2 * P * N * AUC, exact in integers
    for w in points.windows(2) {
        let (_, tp0, fp0) = w[0];
        let (t1, tp1, fp1) = w[1];
        area2 += (fp1 - fp0) * (tp0 + tp1);
        let _ = t1;
    }
    for &(t, tp, fp) in &points {
        roc.push(RocPoint {
            fpr: fp as f64 / spoof as f64,
            tpr: tp as f64 / real as f64,
            threshold: t,
        });
    }
    let auc = area2 as f64 / (2.0 * real as f64 * spoof as f64);
    Ok((roc, auc))
}

/// FAR/FRR at a fixed threshold under the strict accept-on-greater rule.
pub fn far_frr(s: &ScoreSet, threshold: f64) -> Result<(f64, f64)> {
    let (real, spoof) = s.require_both_labels()?;
    let mut fa = 0usize;
    let mut fr = 0usize;
    for &(score, label) in &s.scores {
        if label == 0 && score > threshold {
            fa += 1;
        }
        if label == 1 && score <= threshold {
            fr += 1;
        }
    }
    Ok((fa as f64 / spoof as f64, fr as f64 / real as f64))
}

/// Equal error rate with linear interpolation between discrete operating
/// points. Returns (eer, threshold at the crossing).
pub fn eer(s: &ScoreSet) -> Result<(f64, f64)> {
    let (real, spoof) = s.require_both_labels()?;
    let points = sweep(s);
    // Operating point list as (threshold, far, frr), theta descending. The
    // first point has FAR 0, FRR 1 and the last FAR 1, FRR 0, so a sign
    // change of FAR - FRR always exists.
    let ops: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(t, tp, fp)| {
            (
                t,
                fp as f64 / spoof as f64,
                (real - tp) as f64 / real as f64,
            )
        })
        .collect();
    for w in ops.windows(2) {
        let (t0, far0, frr0) = w[0];
        let (t1, far1, frr1) = w[1];
        let d0 = far0 - frr0;
        let d1 = far1 - frr1;
        if d0 > 0.0 {
            continue; // crossing already passed at a coarser threshold
        }
        if d1 < 0.0 {
            continue;
        }
        // far - frr changes sign on this segment; interpolate linearly.
        let denom = d1 - d0;
        let t = if denom.abs() < 1e-300 {
            0.5
        } else {
            -d0 / denom
        };
        let eer = far0 + (far1 - far0) * t;
        let threshold = t0 + (t1 - t0) * t;
        return Ok((eer, threshold));
    }
    // FAR starts at 0 and ends at 1, FRR the reverse: a crossing always
    // exists, so this is unreachable for well-formed input.
    Err(Error::MetricUndefined("no FAR/FRR crossing".into()))
}

/// HTER of `user` at the EER threshold of the pooled `dev` scores.
pub fn hter(user: &ScoreSet, dev: &ScoreSet) -> Result<f64> {
    let (_, threshold) = eer(dev)?;
    let (far, frr) = far_frr(user, threshold)?;
    Ok((far + frr) / 2.0)
}

/// Full report for a user score set against a pooled dev set.
pub fn evaluate(user: &ScoreSet, dev: &ScoreSet) -> Result<EvalReport> {
    let (roc, auc) = roc_auc(user)?;
    let (user_eer, _) = eer(user)?;
    let (_, threshold) = eer(dev)?;
    let (far, frr) = far_frr(user, threshold)?;
    Ok(EvalReport {
        roc,
        auc,
        eer: user_eer,
        hter: (far + frr) / 2.0,
        threshold_used: threshold,
    })
}

/// Brute-force pair-counting AUC (ties 1/2): the test oracle.
pub fn auc_pair_counting(s: &ScoreSet) -> Result<f64> {
    let (real, spoof) = s.require_both_labels()?;
    let mut correct = 0.0;
    for &(sr, lr) in &s.scores {
        if lr != 1 {
            continue;
        }
        for &(ss, ls) in &s.scores {
            if ls != 0 {
                continue;
            }
            if sr > ss {
                correct += 1.0;
            } else if sr == ss {
                correct += 0.5;
            }
        }
    }
    Ok(correct / (real as f64 * spoof as f64))
}
