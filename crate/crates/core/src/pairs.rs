//! Labeled face pairs and lazy pair enumeration.

use std::collections::BTreeSet;

use rand::Rng;

/// Two face indices; `same` marks a same-subject pair (label +1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledPair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

impl LabeledPair {
    pub fn label(&self) -> f64 {
        if self.same {
            1.0
        } else {
            -1.0
        }
    }
}

/// `N (N - 1) / 2`.
pub fn pair_count(faces: usize) -> u64 {
    let n = faces as u64;
    n * n.saturating_sub(1) / 2
}

/// Every unordered pair `a < b`, generated on demand.
pub fn all_pairs(subjects: &[u32]) -> impl Iterator<Item = LabeledPair> + '_ {
    let n = subjects.len();
    (0..n).flat_map(move |a| {
        (a + 1..n).map(move |b| LabeledPair {
            a,
            b,
            same: subjects[a] == subjects[b],
        })
    })
}

/// All same-subject pairs.
pub fn positive_pairs(subjects: &[u32]) -> Vec<LabeledPair> {
    all_pairs(subjects).filter(|p| p.same).collect()
}

/// Up to `max_negatives` distinct different-subject pairs, sorted by
/// `(a, b)`. Takes every negative when there are no more than requested.
pub fn sample_negative_pairs<R: Rng>(subjects: &[u32], max_negatives: usize, rng: &mut R) -> Vec<LabeledPair> {
    let n = subjects.len();
    let total_neg = all_pairs(subjects).filter(|p| !p.same).count();
    if total_neg <= max_negatives {
        return all_pairs(subjects).filter(|p| !p.same).collect();
    }
    let mut picked = BTreeSet::new();
    while picked.len() < max_negatives {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b || subjects[a] == subjects[b] {
            continue;
        }
        picked.insert((a.min(b), a.max(b)));
    }
    picked
        .into_iter()
        .map(|(a, b)| LabeledPair { a, b, same: false })
        .collect()
}

/// Every positive pair plus a negative sample, positives first.
pub fn sample_pairs<R: Rng>(subjects: &[u32], max_negatives: usize, rng: &mut R) -> Vec<LabeledPair> {
    let mut out = positive_pairs(subjects);
    out.extend(sample_negative_pairs(subjects, max_negatives, rng));
    out
}
