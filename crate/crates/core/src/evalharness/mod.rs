//! ROC curves, conservative TPR-at-FPR, score fusion, subject-disjoint
//! k-fold protocols and the synthetic identity benchmark.

pub mod synthetic;

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sffs::subject_folds;

/// Operating points of a score threshold sweep. Point `i` accepts every
/// pair whose score is at least `thresholds[i]`; point 0 accepts nothing.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// `+inf` first, then distinct scores descending.
    pub thresholds: Vec<f64>,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn tpr(&self, i: usize) -> f64 {
        self.tp[i] as f64 / self.positives as f64
    }

    pub fn fpr(&self, i: usize) -> f64 {
        self.fp[i] as f64 / self.negatives as f64
    }

    /// `(fpr, tpr)` per operating point.
    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|i| (self.fpr(i), self.tpr(i))).collect()
    }

    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        let p = self.points();
        p.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
    }

    /// `threshold,fpr,tpr` lines with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "threshold,fpr,tpr")?;
        for i in 0..self.len() {
            writeln!(out, "{},{},{}", self.thresholds[i], self.fpr(i), self.tpr(i))?;
        }
        Ok(())
    }
}

/// Sweeps every distinct score, descending; equal scores flip together.
pub fn roc(scores: &[(f64, bool)]) -> Result<RocCurve> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let positives = scores.iter().filter(|(_, l)| *l).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut thresholds = vec![f64::INFINITY];
    let mut tp = vec![0];
    let mut fp = vec![0];
    let (mut t, mut f) = (0, 0);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                t += 1;
            } else {
                f += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        tp.push(t);
        fp.push(f);
    }
    Ok(RocCurve {
        thresholds,
        tp,
        fp,
        positives,
        negatives,
    })
}

/// Largest TPR among operating points whose FPR does not exceed `fpr`.
pub fn tpr_at_fpr(curve: &RocCurve, fpr: f64) -> f64 {
    let max_fp = (fpr * curve.negatives as f64 + 1e-9).floor() as usize;
    (0..curve.len())
        .filter(|&i| curve.fp[i] <= max_fp)
        .map(|i| curve.tpr(i))
        .fold(0.0, f64::max)
}

/// Convenience: ROC then TPR at `fpr`.
pub fn scores_tpr_at_fpr(scores: &[(f64, bool)], fpr: f64) -> Result<f64> {
    Ok(tpr_at_fpr(&roc(scores)?, fpr))
}

/// Elementwise sum of aligned per-engine score lists.
pub fn fuse_scores(lists: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = lists.first().ok_or_else(|| Error::MisalignedScores("no score lists".into()))?;
    if let Some(l) = lists.iter().find(|l| l.len() != first.len()) {
        return Err(Error::MisalignedScores(format!("lengths {} and {}", first.len(), l.len())));
    }
    Ok((0..first.len()).map(|i| lists.iter().map(|l| l[i]).sum()).collect())
}

/// Threshold maximising balanced accuracy `(TPR + TNR) / 2`, deciding
/// "same" for `score >= threshold`. Ties keep the highest threshold.
pub fn best_threshold(scores: &[(f64, bool)]) -> Result<(f64, f64)> {
    let c = roc(scores)?;
    let mut best = (c.thresholds[0], 0.5);
    for i in 1..c.len() {
        let ba = 0.5 * (c.tpr(i) + 1.0 - c.fpr(i));
        if ba > best.1 {
            best = (c.thresholds[i], ba);
        }
    }
    Ok(best)
}

/// Balanced accuracy of the decision `score >= threshold`.
pub fn balanced_accuracy(scores: &[(f64, bool)], threshold: f64) -> Result<f64> {
    let pos = scores.iter().filter(|(_, l)| *l).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let tp = scores.iter().filter(|(s, l)| *l && *s >= threshold).count();
    let tn = scores.iter().filter(|(s, l)| !*l && *s < threshold).count();
    Ok(0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64))
}

/// Mean and standard error `sd / sqrt(n)` with the `n - 1` sample deviation.
pub fn mean_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Scores produced by one fold's training run.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldScores {
    pub train: Vec<(f64, bool)>,
    pub test: Vec<(f64, bool)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub threshold: f64,
    pub accuracy: f64,
    pub test_tpr_at_fpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KfoldReport {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub standard_error: f64,
}

/// Face indices of each subject-disjoint fold.
pub fn kfold_indices(subjects: &[u32], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let fold = subject_folds(subjects, k, seed)?;
    let mut out = vec![Vec::new(); k];
    for (i, f) in fold.into_iter().enumerate() {
        out[f].push(i);
    }
    Ok(out)
}

/// Runs `train_and_score(train_faces, test_faces)` per fold. Each fold's
/// threshold is fit on its training scores and applied to its test scores.
pub fn kfold_protocol<F>(subjects: &[u32], k: usize, seed: u64, fpr: f64, train_and_score: F) -> Result<KfoldReport>
where
    F: Fn(&[usize], &[usize]) -> Result<FoldScores> + Sync,
{
    let folds = kfold_indices(subjects, k, seed)?;
    let results = (0..k)
        .into_par_iter()
        .map(|f| {
            let test = &folds[f];
            let train: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| folds[g].iter().copied()).collect();
            let scores = train_and_score(&train, test)?;
            let (threshold, _) = best_threshold(&scores.train)?;
            Ok(FoldResult {
                fold: f,
                threshold,
                accuracy: balanced_accuracy(&scores.test, threshold)?,
                test_tpr_at_fpr: scores_tpr_at_fpr(&scores.test, fpr)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let acc: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let (mean_accuracy, standard_error) = mean_standard_error(&acc);
    Ok(KfoldReport {
        folds: results,
        mean_accuracy,
        standard_error,
    })
}

/// One scored pair for the scores CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPair {
    pub face_a: String,
    pub face_b: String,
    pub same: bool,
    pub score: f64,
}

/// `face_a,face_b,label,score` with labels `1` / `-1`.
pub fn write_scores_csv<W: Write>(mut out: W, pairs: &[ScoredPair]) -> Result<()> {
    writeln!(out, "face_a,face_b,label,score")?;
    for p in pairs {
        writeln!(out, "{},{},{},{}", p.face_a, p.face_b, if p.same { 1 } else { -1 }, p.score)?;
    }
    Ok(())
}

pub fn read_scores_csv(text: &str) -> Result<Vec<ScoredPair>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 && line.starts_with("face_a") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::format(format!("bad scores line {}: {line}", n + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let same = match f[2].trim() {
            "1" => true,
            "-1" => false,
            _ => return Err(bad()),
        };
        out.push(ScoredPair {
            face_a: f[0].to_string(),
            face_b: f[1].to_string(),
            same,
            score: f[3].trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Raw-pixel nearest-neighbour scores: the negated Euclidean distance.
pub fn raw_pixel_score(a: &crate::imgcore::ImagePlane, b: &crate::imgcore::ImagePlane) -> f64 {
    -a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
