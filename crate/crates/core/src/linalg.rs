//! Small dense helpers and a cyclic Jacobi eigensolver for symmetric
//! matrices. Matrices are row-major `Vec<f64>` with an explicit order `n`.

/// `y = A x` for a row-major `rows x cols` matrix.
pub fn mat_vec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    (0..rows).map(|i| dot(&a[i * cols..(i + 1) * cols], x)).collect()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `A^T B` for row-major `A` (`k x n`) and `B` (`k x p`), giving `n x p`.
pub fn at_b(a: &[f64], b: &[f64], k: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * p];
    for r in 0..k {
        let ar = &a[r * n..(r + 1) * n];
        let br = &b[r * p..(r + 1) * p];
        for (i, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let o = &mut out[i * p..(i + 1) * p];
            for (oj, &bv) in o.iter_mut().zip(br) {
                *oj += av * bv;
            }
        }
    }
    out
}

/// `A B` for row-major `A` (`n x k`) and `B` (`k x p`).
pub fn mat_mul(a: &[f64], b: &[f64], n: usize, k: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for t in 0..k {
            let av = a[i * k + t];
            if av == 0.0 {
                continue;
            }
            let br = &b[t * p..(t + 1) * p];
            let o = &mut out[i * p..(i + 1) * p];
            for (oj, &bv) in o.iter_mut().zip(br) {
                *oj += av * bv;
            }
        }
    }
    out
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector of `values[k]`; its largest
    /// magnitude component is positive.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls to
/// `tol` times the full Frobenius norm.
pub fn jacobi_eigen(a: &[f64], n: usize, tol: f64) -> SymmetricEigen {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    // symmetrise against accumulated rounding in the input
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;
    if frob > 0.0 {
        for sweep in 0..100 {
            sweeps = sweep;
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += 2.0 * m[i * n + j] * m[i * n + j];
                }
            }
            if off.sqrt() <= tol * frob {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[p * n + p];
                    let aqq = m[q * n + q];
                    // negligible next to both diagonal entries: annihilate
                    let g = 100.0 * apq.abs();
                    if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                        m[p * n + q] = 0.0;
                        m[q * n + p] = 0.0;
                        continue;
                    }
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    rotate(&mut m, n, p, q, c, s);
                    // rows of `v` hold the eigenvector estimates
                    let (head, tail) = v.split_at_mut(q * n);
                    let vp = &mut head[p * n..p * n + n];
                    let vq = &mut tail[..n];
                    for (a, b) in vp.iter_mut().zip(vq.iter_mut()) {
                        let (x, y) = (*a, *b);
                        *a = c * x - s * y;
                        *b = s * x + c * y;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col = v[i * n..(i + 1) * n].to_vec();
            let lead = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(_, x)| *x)
                .unwrap_or(1.0);
            if lead < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

/// Applies the similarity `J^T M J` for the rotation in plane `(p, q)`.
fn rotate(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    let apq = m[p * n + q];
    {
        let (head, tail) = m.split_at_mut(q * n);
        let rp = &mut head[p * n..p * n + n];
        let rq = &mut tail[..n];
        for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = c * x - s * y;
            *b = s * x + c * y;
        }
    }
    for k in 0..n {
        m[k * n + p] = m[p * n + k];
        m[k * n + q] = m[q * n + k];
    }
    m[p * n + p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
    m[q * n + q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;
}
