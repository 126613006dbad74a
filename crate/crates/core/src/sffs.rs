//! Sequential forward floating search over a candidate family (channels or
//! patches) with a nearest-neighbour TPR-at-FPR objective.
//!
//! Each candidate's per-face vectors are centred per dimension and scaled by
//! the candidate's pooled standard deviation. A pair's score is the negated
//! Euclidean distance between the concatenated vectors of the selected
//! candidates. Squared distances per candidate are stored in fixed point so
//! the score of a set is an exact integer sum, independent of the order in
//! which its members were added.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pairs::LabeledPair;

pub const DEFAULT_FPR: f64 = 0.001;

const FIXED_SCALE: f64 = (1u64 << 20) as f64;
const FIXED_MAX: i64 = 1 << 42;

/// Standardised per-face vectors of every candidate.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    faces: usize,
    dims: Vec<usize>,
    /// `data[c]` holds `faces * dims[c]` values, face-major.
    data: Vec<Vec<f64>>,
}

impl CandidateSet {
    /// `features[c][f]` is candidate `c`'s vector for face `f`.
    pub fn new(features: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let faces = features.first().map_or(0, |c| c.len());
        if faces < 2 {
            return Err(Error::invalid("candidate set needs at least two faces"));
        }
        let mut dims = Vec::with_capacity(features.len());
        let mut data = Vec::with_capacity(features.len());
        for (c, per_face) in features.into_iter().enumerate() {
            if per_face.len() != faces {
                return Err(Error::invalid(format!(
                    "candidate {c} has {} faces, expected {faces}",
                    per_face.len()
                )));
            }
            let dim = per_face[0].len();
            if dim == 0 {
                return Err(Error::invalid(format!("candidate {c} has empty vectors")));
            }
            let mut flat = Vec::with_capacity(faces * dim);
            for v in &per_face {
                if v.len() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        got: v.len(),
                    });
                }
                flat.extend_from_slice(v);
            }
            standardize(&mut flat, faces, dim);
            dims.push(dim);
            data.push(flat);
        }
        Ok(CandidateSet { faces, dims, data })
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn faces(&self) -> usize {
        self.faces
    }

    pub fn dim(&self, c: usize) -> usize {
        self.dims[c]
    }

    /// Standardised vector of candidate `c` for face `f`.
    pub fn vector(&self, c: usize, f: usize) -> &[f64] {
        let d = self.dims[c];
        &self.data[c][f * d..(f + 1) * d]
    }

    fn distance_row(&self, c: usize, pairs: &[LabeledPair]) -> Vec<i64> {
        pairs
            .iter()
            .map(|p| {
                let a = self.vector(c, p.a);
                let b = self.vector(c, p.b);
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                ((d2 * FIXED_SCALE).round() as i64).min(FIXED_MAX)
            })
            .collect()
    }
}

/// Centres each dimension; scales by the pooled standard deviation. A
/// constant candidate becomes all zero.
fn standardize(flat: &mut [f64], faces: usize, dim: usize) {
    let mut mean = vec![0.0; dim];
    for f in 0..faces {
        for (m, v) in mean.iter_mut().zip(&flat[f * dim..(f + 1) * dim]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= faces as f64);
    let mut var = 0.0;
    for f in 0..faces {
        for (v, m) in flat[f * dim..(f + 1) * dim].iter_mut().zip(&mean) {
            *v -= m;
            var += *v * *v;
        }
    }
    let pooled = var / (faces * dim) as f64;
    let scale = if pooled > 1e-300 { 1.0 / pooled.sqrt() } else { 0.0 };
    flat.iter_mut().for_each(|v| *v *= scale);
}

/// Conservative TPR at `fpr` when a pair is accepted for a small distance:
/// positives strictly closer than the `(k+1)`-th smallest negative distance,
/// where `k = floor(fpr * negatives)`. `neg` is reordered.
fn tpr_at_fpr_distances(pos: impl Iterator<Item = i64>, pos_count: usize, neg: &mut [i64], fpr: f64) -> f64 {
    let k = (fpr * neg.len() as f64 + 1e-9).floor() as usize;
    if k >= neg.len() {
        return 1.0;
    }
    let (_, v, _) = neg.select_nth_unstable(k);
    let v = *v;
    pos.filter(|&d| d < v).count() as f64 / pos_count as f64
}

struct Fold {
    pos: Vec<usize>,
    neg: Vec<usize>,
}

impl Fold {
    fn j(&self, dist: &[i64], fpr: f64, scratch: &mut Vec<i64>) -> f64 {
        scratch.clear();
        scratch.extend(self.neg.iter().map(|&i| dist[i]));
        tpr_at_fpr_distances(self.pos.iter().map(|&i| dist[i]), self.pos.len(), scratch, fpr)
    }
}

fn fold_of(pairs: &[LabeledPair], idx: impl Iterator<Item = usize>) -> Result<Fold> {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for i in idx {
        if pairs[i].same {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegeneratePairSet(format!(
            "{} positive and {} negative pairs",
            pos.len(),
            neg.len()
        )));
    }
    Ok(Fold { pos, neg })
}

fn check_pairs(candidates: &CandidateSet, pairs: &[LabeledPair]) -> Result<()> {
    if let Some(p) = pairs.iter().find(|p| p.a >= candidates.faces || p.b >= candidates.faces) {
        return Err(Error::invalid(format!("pair ({}, {}) references a missing face", p.a, p.b)));
    }
    Ok(())
}

/// Nearest-neighbour J of `selected` over all of `pairs`.
pub fn objective_j(selected: &[usize], candidates: &CandidateSet, pairs: &[LabeledPair], fpr: f64) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::invalid("objective needs a non-empty selection"));
    }
    if let Some(&c) = selected.iter().find(|&&c| c >= candidates.len()) {
        return Err(Error::invalid(format!("candidate {c} out of range")));
    }
    check_pairs(candidates, pairs)?;
    let fold = fold_of(pairs, 0..pairs.len())?;
    let mut dist = vec![0i64; pairs.len()];
    for &c in selected {
        for (d, r) in dist.iter_mut().zip(candidates.distance_row(c, pairs)) {
            *d += r;
        }
    }
    Ok(fold.j(&dist, fpr, &mut Vec::new()))
}

/// Assigns each face a fold so that no subject spans two folds. Subjects
/// are shuffled under `seed` and dealt round-robin.
pub fn subject_folds(subjects: &[u32], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut ids: Vec<u32> = subjects.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if folds < 2 || ids.len() < folds {
        return Err(Error::InsufficientSubjects {
            subjects: ids.len(),
            folds,
        });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of_subject = |s: u32| ids.iter().position(|&x| x == s).unwrap() % folds;
    Ok(subjects.iter().map(|&s| fold_of_subject(s)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SffsConfig {
    pub target: usize,
    /// Bound on inclusion plus exclusion steps; `None` means four times the
    /// target.
    pub max_steps: Option<usize>,
    pub fpr: f64,
    pub folds: usize,
    pub seed: u64,
}

impl SffsConfig {
    pub fn new(target: usize) -> Self {
        SffsConfig {
            target,
            max_steps: None,
            fpr: DEFAULT_FPR,
            folds: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Add,
    Remove,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Add => "add",
            Action::Remove => "remove",
        })
    }
}

/// One trace line: `step k action idx J`, where `k` is the set size after
/// the action.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    pub k: usize,
    pub action: Action,
    pub index: usize,
    pub j: f64,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {} {}", self.step, self.k, self.action, self.index, self.j)
    }
}

impl FromStr for TraceEntry {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = || Error::format(format!("bad trace line: {line}"));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let action = match f[2] {
            "add" => Action::Add,
            "remove" => Action::Remove,
            _ => return Err(bad()),
        };
        Ok(TraceEntry {
            step: f[0].parse().map_err(|_| bad())?,
            k: f[1].parse().map_err(|_| bad())?,
            action,
            index: f[3].parse().map_err(|_| bad())?,
            j: f[4].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    /// Selected candidate indices in inclusion order.
    pub selected: Vec<usize>,
    /// Best recorded J for each size `k = 1..`, as `(k, J)`.
    pub trajectory: Vec<(usize, f64)>,
    /// Per-fold J of the returned set.
    pub fold_scores: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    /// Set when the step budget ran out before the target size was reached.
    pub step_budget_exhausted: bool,
}

impl SelectionResult {
    pub fn trace_text(&self) -> String {
        let mut s = String::from("# step k action idx J\n");
        for t in &self.trace {
            s.push_str(&format!("{t}\n"));
        }
        s
    }
}

/// Parses the output of [`SelectionResult::trace_text`].
pub fn parse_trace(text: &str) -> Result<Vec<TraceEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

struct Search {
    rows: Vec<Vec<i64>>,
    folds: Vec<Fold>,
    fpr: f64,
    pairs: usize,
}

impl Search {
    fn sum(&self, set: &[usize]) -> Vec<i64> {
        let mut d = vec![0i64; self.pairs];
        for &c in set {
            for (x, r) in d.iter_mut().zip(&self.rows[c]) {
                *x += r;
            }
        }
        d
    }

    fn fold_scores(&self, dist: &[i64]) -> Vec<f64> {
        let mut scratch = Vec::new();
        self.folds.iter().map(|f| f.j(dist, self.fpr, &mut scratch)).collect()
    }

    fn j(&self, dist: &[i64]) -> f64 {
        let s = self.fold_scores(dist);
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// J of `base + rows[c]` for each `c` in `cands`.
    fn scan_add(&self, base: &[i64], cands: &[usize]) -> Vec<f64> {
        cands
            .par_iter()
            .map(|&c| {
                let d: Vec<i64> = base.iter().zip(&self.rows[c]).map(|(x, r)| x + r).collect();
                self.j(&d)
            })
            .collect()
    }

    fn scan_remove(&self, base: &[i64], set: &[usize]) -> Vec<f64> {
        set.par_iter()
            .map(|&c| {
                let d: Vec<i64> = base.iter().zip(&self.rows[c]).map(|(x, r)| x - r).collect();
                self.j(&d)
            })
            .collect()
    }
}

/// First index of the maximum; ties go to the lowest position.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Floating search to `config.target` candidates. Faces are split into
/// subject-disjoint folds; J is the mean of the per-fold objectives over the
/// pairs whose two faces share a fold.
pub fn sffs_select(
    candidates: &CandidateSet,
    subjects: &[u32],
    pairs: &[LabeledPair],
    config: &SffsConfig,
) -> Result<SelectionResult> {
    let target = config.target;
    if target == 0 || target > candidates.len() {
        return Err(Error::invalid(format!(
            "target {target} outside 1..={}",
            candidates.len()
        )));
    }
    if subjects.len() != candidates.faces() {
        return Err(Error::DimMismatch {
            expected: candidates.faces(),
            got: subjects.len(),
        });
    }
    check_pairs(candidates, pairs)?;
    let fold_of_face = subject_folds(subjects, config.folds, config.seed)?;
    let folds = (0..config.folds)
        .map(|f| {
            fold_of(
                pairs,
                (0..pairs.len()).filter(|&i| fold_of_face[pairs[i].a] == f && fold_of_face[pairs[i].b] == f),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = (0..candidates.len())
        .into_par_iter()
        .map(|c| candidates.distance_row(c, pairs))
        .collect();
    let search = Search {
        rows,
        folds,
        fpr: config.fpr,
        pairs: pairs.len(),
    };

    let max_steps = config.max_steps.unwrap_or(4 * target);
    let mut set: Vec<usize> = Vec::new();
    let mut in_set = vec![false; candidates.len()];
    // best[k] = best J recorded at size k, with its set
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; candidates.len() + 1];
    let mut trace = Vec::new();
    let mut steps = 0;
    let mut exhausted = false;

    while set.len() < target {
        if steps >= max_steps {
            exhausted = true;
            break;
        }
        // inclusion
        let base = search.sum(&set);
        let rest: Vec<usize> = (0..candidates.len()).filter(|&c| !in_set[c]).collect();
        let js = search.scan_add(&base, &rest);
        let i = argmax(&js);
        let (add, j) = (rest[i], js[i]);
        set.push(add);
        in_set[add] = true;
        steps += 1;
        let k = set.len();
        trace.push(TraceEntry {
            step: steps,
            k,
            action: Action::Add,
            index: add,
            j,
        });
        if best[k].as_ref().is_none_or(|(b, _)| j > *b) {
            best[k] = Some((j, set.clone()));
        }
        // conditional exclusion
        while set.len() >= 2 && steps < max_steps {
            let k = set.len();
            let base = search.sum(&set);
            let js = search.scan_remove(&base, &set);
            let i = argmax(&js);
            let j = js[i];
            let prev = best[k - 1].as_ref().map_or(f64::NEG_INFINITY, |(b, _)| *b);
            if j > prev {
                let gone = set.remove(i);
                in_set[gone] = false;
                steps += 1;
                trace.push(TraceEntry {
                    step: steps,
                    k: k - 1,
                    action: Action::Remove,
                    index: gone,
                    j,
                });
                best[k - 1] = Some((j, set.clone()));
            } else {
                break;
            }
        }
    }

    let selected = if exhausted {
        best.iter()
            .rev()
            .find_map(|b| b.as_ref().map(|(_, s)| s.clone()))
            .unwrap_or_default()
    } else {
        set
    };
    let fold_scores = search.fold_scores(&search.sum(&selected));
    let trajectory = best
        .iter()
        .enumerate()
        .filter_map(|(k, b)| b.as_ref().map(|(j, _)| (k, *j)))
        .collect();
    Ok(SelectionResult {
        selected,
        trajectory,
        fold_scores,
        trace,
        step_budget_exhausted: exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_of(subjects: &[u32]) -> Vec<LabeledPair> {
        crate::pairs::all_pairs(subjects).collect()
    }

    #[test]
    fn separated_scores_give_one() {
        // faces of subject s sit at 10 s on one axis
        let subjects = [0, 0, 1, 1, 2, 2];
        let feats = vec![subjects.iter().map(|&s| vec![10.0 * s as f64]).collect()];
        let c = CandidateSet::new(feats).unwrap();
        let j = objective_j(&[0], &c, &pairs_of(&subjects), DEFAULT_FPR).unwrap();
        assert_eq!(j, 1.0);
    }

    #[test]
    fn identical_scores_give_zero() {
        let subjects = [0, 0, 1, 1];
        let feats = vec![vec![vec![1.0]; 4]];
        let c = CandidateSet::new(feats).unwrap();
        assert_eq!(objective_j(&[0], &c, &pairs_of(&subjects), DEFAULT_FPR).unwrap(), 0.0);
    }

    #[test]
    fn single_label_pairs_rejected() {
        let c = CandidateSet::new(vec![vec![vec![0.0], vec![1.0]]]).unwrap();
        let pairs = [LabeledPair { a: 0, b: 1, same: true }];
        assert!(matches!(
            objective_j(&[0], &c, &pairs, DEFAULT_FPR),
            Err(Error::DegeneratePairSet(_))
        ));
    }

    #[test]
    fn one_candidate_one_step() {
        let subjects = [0, 0, 1, 1, 2, 2, 3, 3];
        let feats = vec![subjects.iter().map(|&s| vec![s as f64]).collect()];
        let c = CandidateSet::new(feats).unwrap();
        let r = sffs_select(&c, &subjects, &pairs_of(&subjects), &SffsConfig::new(1)).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.trace.len(), 1);
        assert!(!r.step_budget_exhausted);
    }

    #[test]
    fn folds_are_subject_disjoint() {
        let subjects: Vec<u32> = (0..20).map(|i| i / 4).collect();
        let f = subject_folds(&subjects, 2, 9).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                if subjects[i] == subjects[j] {
                    assert_eq!(f[i], f[j]);
                }
            }
        }
        assert!(f.contains(&0) && f.contains(&1));
        assert!(subject_folds(&[1, 1], 2, 0).is_err());
    }

    #[test]
    fn trace_round_trip() {
        let t = TraceEntry {
            step: 3,
            k: 2,
            action: Action::Remove,
            index: 17,
            j: 0.625,
        };
        let text = format!("# header\n{t}\n");
        assert_eq!(parse_trace(&text).unwrap(), vec![t]);
    }

    #[test]
    fn conservative_tpr() {
        // negatives 1..=1000, k = 1 at fpr 0.001, threshold is the 2nd smallest (2)
        let mut neg: Vec<i64> = (1..=1000).collect();
        let pos = [0i64, 1, 2, 3];
        let t = tpr_at_fpr_distances(pos.iter().copied(), 4, &mut neg, 0.001);
        assert_eq!(t, 0.5);
    }
}
