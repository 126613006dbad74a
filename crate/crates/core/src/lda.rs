//! Patch-level discriminant projections from pairwise scatter matrices.
//!
//! `S_w` sums `(v_i - v_j)(v_i - v_j)^T` over same-subject pairs and `S_b`
//! over different-subject pairs. The projection whitens `S_w` (dropping
//! directions with eigenvalue at most `1e-6` of the largest), diagonalises
//! the whitened `S_b`, and keeps the fewest leading directions whose
//! eigenvalues reach the requested energy fraction. Columns therefore
//! satisfy `P^T S_w P = I`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, mat_mul, SymmetricEigen};
use crate::pairs::LabeledPair;

pub const DEFAULT_ENERGY: f64 = 0.99;
/// Relative floor below which `S_w` eigen-directions are discarded.
pub const WHITEN_EPS: f64 = 1e-6;
pub const JACOBI_TOL: f64 = 1e-12;

/// Intra- and extra-subject scatter, both `d x d` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterPair {
    pub d: usize,
    pub sw: Vec<f64>,
    pub sb: Vec<f64>,
    pub intra_pairs: u64,
    pub extra_pairs: u64,
}

fn add_outer_diff(m: &mut [f64], a: &[f64], b: &[f64], diff: &mut [f64]) {
    let d = a.len();
    for k in 0..d {
        diff[k] = a[k] - b[k];
    }
    for i in 0..d {
        let di = diff[i];
        if di == 0.0 {
            continue;
        }
        let row = &mut m[i * d..i * d + d];
        for j in i..d {
            row[j] += di * diff[j];
        }
    }
}

fn mirror_upper(m: &mut [f64], d: usize) {
    for i in 0..d {
        for j in i + 1..d {
            m[j * d + i] = m[i * d + j];
        }
    }
}

fn check_dims(descriptors: &[Vec<f64>]) -> Result<usize> {
    let d = descriptors.first().map_or(0, |v| v.len());
    if d == 0 {
        return Err(Error::invalid("no descriptors"));
    }
    if let Some(v) = descriptors.iter().find(|v| v.len() != d) {
        return Err(Error::DimMismatch {
            expected: d,
            got: v.len(),
        });
    }
    Ok(d)
}

/// Scatter over an explicit pair list.
pub fn accumulate_scatter(descriptors: &[Vec<f64>], pairs: &[LabeledPair]) -> Result<ScatterPair> {
    let d = check_dims(descriptors)?;
    if let Some(p) = pairs.iter().find(|p| p.a >= descriptors.len() || p.b >= descriptors.len()) {
        return Err(Error::invalid(format!("pair ({}, {}) references a missing face", p.a, p.b)));
    }
    let intra = pairs.iter().filter(|p| p.same).count() as u64;
    if intra == 0 {
        return Err(Error::NoIntraPairs);
    }
    let mut sw = vec![0.0; d * d];
    let mut sb = vec![0.0; d * d];
    let mut diff = vec![0.0; d];
    for p in pairs {
        let m = if p.same { &mut sw } else { &mut sb };
        add_outer_diff(m, &descriptors[p.a], &descriptors[p.b], &mut diff);
    }
    mirror_upper(&mut sw, d);
    mirror_upper(&mut sb, d);
    Ok(ScatterPair {
        d,
        sw,
        sb,
        intra_pairs: intra,
        extra_pairs: pairs.len() as u64 - intra,
    })
}

/// Scatter over every pair of faces, in closed form: for a group of `n`
/// vectors, the sum over its pairs is `n sum(v v^T) - (sum v)(sum v)^T`.
pub fn accumulate_scatter_all(descriptors: &[Vec<f64>], subjects: &[u32]) -> Result<ScatterPair> {
    let d = check_dims(descriptors)?;
    if subjects.len() != descriptors.len() {
        return Err(Error::DimMismatch {
            expected: descriptors.len(),
            got: subjects.len(),
        });
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &s) in subjects.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let intra: u64 = groups.values().map(|g| crate::pairs::pair_count(g.len())).sum();
    if intra == 0 {
        return Err(Error::NoIntraPairs);
    }
    let group_scatter = |idx: &mut dyn Iterator<Item = usize>| {
        let mut outer = vec![0.0; d * d];
        let mut sum = vec![0.0; d];
        let mut n = 0.0;
        for i in idx {
            let v = &descriptors[i];
            n += 1.0;
            for a in 0..d {
                sum[a] += v[a];
                let va = v[a];
                if va == 0.0 {
                    continue;
                }
                let row = &mut outer[a * d..a * d + d];
                for b in a..d {
                    row[b] += va * v[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                outer[a * d + b] = n * outer[a * d + b] - sum[a] * sum[b];
            }
        }
        outer
    };
    let mut sw = vec![0.0; d * d];
    for g in groups.values() {
        let s = group_scatter(&mut g.iter().copied());
        for (x, y) in sw.iter_mut().zip(&s) {
            *x += y;
        }
    }
    let total = group_scatter(&mut (0..descriptors.len()));
    let mut sb: Vec<f64> = total.iter().zip(&sw).map(|(t, w)| t - w).collect();
    mirror_upper(&mut sw, d);
    mirror_upper(&mut sb, d);
    Ok(ScatterPair {
        d,
        sw,
        sb,
        intra_pairs: intra,
        extra_pairs: crate::pairs::pair_count(descriptors.len()) - intra,
    })
}

/// Projection for one patch: `d x p`, column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionEntry {
    pub d: usize,
    pub p: usize,
    /// Column `k` is `matrix[k * d..(k + 1) * d]`.
    pub matrix: Vec<f64>,
    /// Full descending spectrum of the whitened `S_b`.
    pub spectrum: Vec<f64>,
    pub sw_degenerate: bool,
}

impl ProjectionEntry {
    pub fn new(d: usize, p: usize, matrix: Vec<f64>) -> Result<Self> {
        if p == 0 || p > d || matrix.len() != d * p {
            return Err(Error::invalid(format!(
                "projection {d}x{p} with {} entries",
                matrix.len()
            )));
        }
        Ok(ProjectionEntry {
            d,
            p,
            matrix,
            spectrum: Vec::new(),
            sw_degenerate: false,
        })
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.matrix[k * self.d..(k + 1) * self.d]
    }
}

/// Fewest leading values whose sum reaches `energy` of the positive total.
pub fn energy_dimension(sorted_desc: &[f64], energy: f64) -> usize {
    let total: f64 = sorted_desc.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (i, v) in sorted_desc.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= energy * total {
            return i + 1;
        }
    }
    sorted_desc.len()
}

fn columns_from(vectors: &[Vec<f64>], p: usize) -> Vec<f64> {
    vectors[..p].iter().flatten().copied().collect()
}

pub fn fit_projection(scatter: &ScatterPair, energy: f64) -> Result<ProjectionEntry> {
    let d = scatter.d;
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::invalid(format!("energy {energy} outside (0, 1]")));
    }
    if d < 2 {
        return Err(Error::invalid("scatter dimension below 2"));
    }
    let ew = jacobi_eigen(&scatter.sw, d, JACOBI_TOL);
    let lmax = ew.values[0];
    let scale = scatter.sb.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(lmax > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        let eb = jacobi_eigen(&scatter.sb, d, JACOBI_TOL);
        let p = energy_dimension(&eb.values, energy);
        return Ok(ProjectionEntry {
            d,
            p,
            matrix: columns_from(&eb.vectors, p),
            spectrum: eb.values,
            sw_degenerate: true,
        });
    }
    let kept: Vec<usize> = (0..d).filter(|&i| ew.values[i] > WHITEN_EPS * lmax).collect();
    let r = kept.len();
    // whitening W (d x r, row-major): column k = phi_k / sqrt(lambda_k)
    let mut w = vec![0.0; d * r];
    for (k, &i) in kept.iter().enumerate() {
        let s = 1.0 / ew.values[i].sqrt();
        for a in 0..d {
            w[a * r + k] = ew.vectors[i][a] * s;
        }
    }
    let sbw = mat_mul(&scatter.sb, &w, d, d, r);
    let wt: Vec<f64> = (0..r * d).map(|idx| w[(idx % d) * r + idx / d]).collect();
    let sb_white = mat_mul(&wt, &sbw, r, d, r);
    let eb: SymmetricEigen = jacobi_eigen(&sb_white, r, JACOBI_TOL);
    let p = energy_dimension(&eb.values, energy);
    let mut matrix = Vec::with_capacity(d * p);
    for psi in &eb.vectors[..p] {
        for a in 0..d {
            matrix.push((0..r).map(|k| w[a * r + k] * psi[k]).sum());
        }
    }
    Ok(ProjectionEntry {
        d,
        p,
        matrix,
        spectrum: eb.values,
        sw_degenerate: false,
    })
}

/// `P^T x`.
pub fn project(descriptor: &[f64], entry: &ProjectionEntry) -> Result<Vec<f64>> {
    if descriptor.len() != entry.d {
        return Err(Error::DimMismatch {
            expected: entry.d,
            got: descriptor.len(),
        });
    }
    Ok((0..entry.p)
        .map(|k| entry.column(k).iter().zip(descriptor).map(|(a, b)| a * b).sum())
        .collect())
}

/// Per-patch projections, in pool order of the active patches.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionModel {
    pub patches: Vec<usize>,
    pub entries: Vec<ProjectionEntry>,
}

impl ProjectionModel {
    /// Face feature dimension `sum p`.
    pub fn output_dim(&self) -> usize {
        self.entries.iter().map(|e| e.p).sum()
    }

    /// Concatenated projections of one face's per-patch descriptors.
    pub fn project_face(&self, descriptors: &[Vec<f64>]) -> Result<Vec<f64>> {
        if descriptors.len() != self.entries.len() {
            return Err(Error::DimMismatch {
                expected: self.entries.len(),
                got: descriptors.len(),
            });
        }
        let mut out = Vec::with_capacity(self.output_dim());
        for (d, e) in descriptors.iter().zip(&self.entries) {
            out.extend(project(d, e)?);
        }
        Ok(out)
    }
}

/// Fits one projection per patch. `descriptors[q][f]` is patch `q`'s
/// descriptor for face `f`; scatter runs over all pairs of the faces and is
/// divided by the pair counts, which leaves the directions and `p` unchanged
/// but puts projected intra-subject differences at unit scale.
pub fn fit_model(
    patches: Vec<usize>,
    descriptors: &[Vec<Vec<f64>>],
    subjects: &[u32],
    energy: f64,
) -> Result<ProjectionModel> {
    if patches.len() != descriptors.len() {
        return Err(Error::DimMismatch {
            expected: patches.len(),
            got: descriptors.len(),
        });
    }
    let entries = descriptors
        .par_iter()
        .map(|per_face| {
            let mut s = accumulate_scatter_all(per_face, subjects)?;
            let (wi, bi) = (1.0 / s.intra_pairs as f64, 1.0 / s.extra_pairs.max(1) as f64);
            s.sw.iter_mut().for_each(|v| *v *= wi);
            s.sb.iter_mut().for_each(|v| *v *= bi);
            fit_projection(&s, energy)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionModel { patches, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scatter(d: usize, sw: Vec<f64>, sb: Vec<f64>) -> ScatterPair {
        ScatterPair {
            d,
            sw,
            sb,
            intra_pairs: 1,
            extra_pairs: 1,
        }
    }

    #[test]
    fn identical_pair_has_zero_sw() {
        let v = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let s = accumulate_scatter(&v, &[LabeledPair { a: 0, b: 1, same: true }]).unwrap();
        assert_eq!(s.sw, vec![0.0; 4]);
    }

    #[test]
    fn single_extra_pair_outer_product() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]];
        let pairs = [
            LabeledPair { a: 0, b: 1, same: false },
            LabeledPair { a: 1, b: 2, same: true },
        ];
        let s = accumulate_scatter(&v, &pairs).unwrap();
        assert_eq!(s.sb, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn no_intra_pairs() {
        let v = vec![vec![1.0], vec![0.0]];
        let e = accumulate_scatter(&v, &[LabeledPair { a: 0, b: 1, same: false }]);
        assert!(matches!(e, Err(Error::NoIntraPairs)));
    }

    #[test]
    fn energy_rule_examples() {
        let id = vec![1.0, 0.0, 0.0, 1.0];
        let e = fit_projection(&scatter(2, id.clone(), vec![4.0, 0.0, 0.0, 1.0]), 0.99).unwrap();
        assert_eq!(e.p, 2);
        assert!((e.column(0)[0] - 1.0).abs() < 1e-12 && e.column(0)[1].abs() < 1e-12);
        let e = fit_projection(&scatter(2, id, vec![100.0, 0.0, 0.0, 1.0]), 0.99).unwrap();
        assert_eq!(e.p, 1);
    }

    #[test]
    fn degenerate_within_scatter() {
        let e = fit_projection(&scatter(2, vec![0.0; 4], vec![0.0, 0.0, 0.0, 3.0]), 0.99).unwrap();
        assert!(e.sw_degenerate);
        assert_eq!(e.p, 1);
        assert_eq!(e.column(0), &[0.0, 1.0]);
    }

    #[test]
    fn project_zero_and_mismatch() {
        let e = ProjectionEntry::new(3, 2, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(project(&[0.0; 3], &e).unwrap(), vec![0.0, 0.0]);
        assert_eq!(project(&[1.0, 2.0, 3.0], &e).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(project(&[1.0], &e), Err(Error::DimMismatch { .. })));
    }
}
