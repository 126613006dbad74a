//! Symmetric pair representations, the squared-hinge linear SVM and the
//! learned similarity.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

pub const DEFAULT_P_REP: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PairKind {
    /// `|a_k - b_k|^p`
    #[default]
    AbsDiff,
    /// `|a_k b_k|^p`
    Product,
}

impl PairKind {
    pub fn code(self) -> u8 {
        match self {
            PairKind::AbsDiff => 0,
            PairKind::Product => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(PairKind::AbsDiff),
            1 => Ok(PairKind::Product),
            _ => Err(Error::format(format!("unknown pair kind code {c}"))),
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairKind::AbsDiff => "abs_diff",
            PairKind::Product => "product",
        })
    }
}

impl FromStr for PairKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs_diff" => Ok(PairKind::AbsDiff),
            "product" => Ok(PairKind::Product),
            _ => Err(Error::invalid(format!("unknown pair kind {s}"))),
        }
    }
}

/// Writes the representation of `(a, b)` into `out`. Both kinds are
/// symmetric in their arguments bit for bit.
pub fn pair_rep_into(a: &[f64], b: &[f64], kind: PairKind, p_rep: f64, out: &mut [f64]) -> Result<()> {
    if a.len() != b.len() || out.len() != a.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: if a.len() != b.len() { b.len() } else { out.len() },
        });
    }
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        let v = match kind {
            PairKind::AbsDiff => (x - y).abs(),
            PairKind::Product => (x * y).abs(),
        };
        *o = if p_rep == 0.5 { v.sqrt() } else { v.powf(p_rep) };
    }
    Ok(())
}

pub fn pair_rep(a: &[f64], b: &[f64], kind: PairKind, p_rep: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; a.len()];
    pair_rep_into(a, b, kind, p_rep, &mut out)?;
    Ok(out)
}

/// Dense labeled pair representations, row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize) -> Self {
        SampleSet {
            dim,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != dim * y.len() {
            return Err(Error::DimMismatch {
                expected: dim * y.len(),
                got: x.len(),
            });
        }
        if y.iter().any(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        Ok(SampleSet { dim, x, y })
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if y != 1.0 && y != -1.0 {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        self.x.extend_from_slice(x);
        self.y.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> SampleSet {
        let mut out = SampleSet::new(self.dim);
        for &i in idx {
            out.x.extend_from_slice(self.row(i));
            out.y.push(self.y[i]);
        }
        out
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        out.x.extend_from_slice(&other.x);
        out.y.extend_from_slice(&other.y);
        Ok(out)
    }

    /// Midpoint of the two class means, per coordinate.
    pub fn class_midpoint(&self) -> Result<Vec<f64>> {
        class_midpoint_of(std::slice::from_ref(self))
    }

    /// Subtracts `offset` from every row.
    pub fn shift(&mut self, offset: &[f64]) -> Result<()> {
        if offset.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: offset.len(),
            });
        }
        for row in self.x.chunks_mut(self.dim.max(1)) {
            row.iter_mut().zip(offset).for_each(|(v, o)| *v -= o);
        }
        Ok(())
    }

    /// `C sum max(1 - y w.x, 0)^2`.
    pub fn hinge_loss(&self, w: &[f64], c: f64) -> f64 {
        (0..self.len())
            .map(|i| {
                let m = 1.0 - self.y[i] * dot(w, self.row(i));
                if m > 0.0 {
                    m * m
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            * c
    }
}

/// `1/2 w.w + C sum max(1 - y w.x, 0)^2`.
pub fn svm_objective(w: &[f64], samples: &SampleSet, c: f64) -> f64 {
    0.5 * dot(w, w) + samples.hinge_loss(w, c)
}

/// Linear pair classifier; higher scores mean "same subject".
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub c: f64,
    pub kind: PairKind,
    pub p_rep: f64,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_rep > 0.0) || !(self.c > 0.0) {
            return Err(Error::invalid("svm needs p_rep > 0 and C > 0"));
        }
        if self.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("svm weights are not finite"));
        }
        Ok(())
    }
}

/// `w . pair_rep(face, template)`.
pub fn similarity(face: &[f64], template: &[f64], model: &SvmModel) -> Result<f64> {
    if face.len() != model.dim() {
        return Err(Error::DimMismatch {
            expected: model.dim(),
            got: face.len(),
        });
    }
    let x = pair_rep(face, template, model.kind, model.p_rep)?;
    Ok(dot(&model.w, &x))
}

/// Minimises `C sum max(1 - y w.x, 0)^2 + alpha/2 |w - center|^2`.
#[derive(Clone, Debug)]
pub struct L2SvmProblem<'a> {
    pub samples: &'a SampleSet,
    pub c: f64,
    pub alpha: f64,
    pub center: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub cg_iterations: usize,
    pub grad_norm: f64,
}

impl L2SvmProblem<'_> {
    pub fn objective(&self, w: &[f64]) -> f64 {
        let prox: f64 = w.iter().zip(self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * self.alpha * prox + self.samples.hinge_loss(w, self.c)
    }

    /// Gradient at `w` and the indices of the active hinge terms.
    fn gradient(&self, w: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let s = self.samples;
        let mut g: Vec<f64> = w.iter().zip(self.center).map(|(a, b)| self.alpha * (a - b)).collect();
        let mut active = Vec::new();
        for i in 0..s.len() {
            let y = s.label(i);
            let m = 1.0 - y * dot(w, s.row(i));
            if m > 0.0 {
                active.push(i);
                let f = -2.0 * self.c * y * m;
                for (gk, xk) in g.iter_mut().zip(s.row(i)) {
                    *gk += f * xk;
                }
            }
        }
        (g, active)
    }

    /// Generalised Hessian product `alpha d + 2C sum_active x (x.d)`.
    fn hess_vec(&self, active: &[usize], d: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(d) {
            *o = self.alpha * v;
        }
        for &i in active {
            let x = self.samples.row(i);
            let f = 2.0 * self.c * dot(x, d);
            if f != 0.0 {
                for (o, xk) in out.iter_mut().zip(x) {
                    *o += f * xk;
                }
            }
        }
    }

    /// Damped Newton with conjugate-gradient inner solves, from `w0`, until
    /// the gradient norm is at most `tol`.
    pub fn solve(&self, w0: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, NewtonReport)> {
        let dim = self.samples.dim();
        if w0.len() != dim || self.center.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: w0.len().min(self.center.len()),
            });
        }
        let fail = |what: &str| Error::NumericalFailure {
            round: 0,
            block: 0,
            detail: what.to_string(),
        };
        let mut w = w0.to_vec();
        let mut f = self.objective(&w);
        let mut report = NewtonReport {
            iterations: 0,
            cg_iterations: 0,
            grad_norm: f64::INFINITY,
        };
        let mut hd = vec![0.0; dim];
        for it in 0..=max_iter {
            if !f.is_finite() {
                return Err(fail("objective is not finite"));
            }
            let (g, active) = self.gradient(&w);
            let gn = norm(&g);
            if !gn.is_finite() {
                return Err(fail("gradient is not finite"));
            }
            report.iterations = it;
            report.grad_norm = gn;
            if gn <= tol || it == max_iter {
                break;
            }
            // CG on H d = -g
            let cg_tol = (0.1f64).min(gn.sqrt()) * gn;
            let mut d = vec![0.0; dim];
            let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut p = r.clone();
            let mut rr = dot(&r, &r);
            for _ in 0..(2 * dim).max(50) {
                if rr.sqrt() <= cg_tol {
                    break;
                }
                self.hess_vec(&active, &p, &mut hd);
                let php = dot(&p, &hd);
                if !(php > 0.0) {
                    break;
                }
                let a = rr / php;
                for k in 0..dim {
                    d[k] += a * p[k];
                    r[k] -= a * hd[k];
                }
                let rr_new = dot(&r, &r);
                let beta = rr_new / rr;
                rr = rr_new;
                for k in 0..dim {
                    p[k] = r[k] + beta * p[k];
                }
                report.cg_iterations += 1;
            }
            // Armijo backtracking along d
            let slope = dot(&g, &d);
            if !(slope < 0.0) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            let mut trial = vec![0.0; dim];
            for _ in 0..60 {
                for k in 0..dim {
                    trial[k] = w[k] + t * d[k];
                }
                let ft = self.objective(&trial);
                if ft <= f + 1e-4 * t * slope && ft < f {
                    w.copy_from_slice(&trial);
                    f = ft;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok((w, report))
    }
}

/// Solves the whole-set SVM objective from zero.
pub fn train_svm(samples: &SampleSet, c: f64) -> Result<Vec<f64>> {
    let zero = vec![0.0; samples.dim()];
    let problem = L2SvmProblem {
        samples,
        c,
        alpha: 1.0,
        center: &zero,
    };
    Ok(problem.solve(&zero, 1e-8, 200)?.0)
}

/// Midpoint of the two class means over the union of `sets`, duplicates
/// counted.
pub fn class_midpoint_of(sets: &[SampleSet]) -> Result<Vec<f64>> {
    let dim = sets.first().map_or(0, |s| s.dim);
    let (mut pos, mut neg) = (vec![0.0; dim], vec![0.0; dim]);
    let (mut np, mut nn) = (0usize, 0usize);
    for set in sets {
        if set.dim != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: set.dim,
            });
        }
        for i in 0..set.len() {
            let (acc, n) = if set.y[i] > 0.0 { (&mut pos, &mut np) } else { (&mut neg, &mut nn) };
            acc.iter_mut().zip(set.row(i)).for_each(|(a, v)| *a += v);
            *n += 1;
        }
    }
    if np == 0 || nn == 0 {
        return Err(Error::DegenerateLabels);
    }
    Ok(pos
        .iter()
        .zip(&neg)
        .map(|(p, n)| 0.5 * (p / np as f64 + n / nn as f64))
        .collect())
}
