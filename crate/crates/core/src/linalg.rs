//! Minimal dense kernels shared by the solver modules.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub m: usize,
    pub n: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(m: usize, n: usize) -> Self {
        Mat {
            m,
            n,
            a: vec![0.0; m * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Mat::zeros(n, n);
        for i in 0..n {
            out.a[i * n + i] = 1.0;
        }
        out
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let m = rows.len();
        let n = if m == 0 { 0 } else { rows[0].len() };
        let mut a = Vec::with_capacity(m * n);
        for r in rows {
            assert_eq!(r.len(), n, "ragged rows");
            a.extend_from_slice(r);
        }
        Mat { m, n, a }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.a[i * self.n..(i + 1) * self.n]
    }

    /// `out = self * v`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        debug_assert_eq!(out.len(), self.m);
        for i in 0..self.m {
            out[i] = dot(self.row(i), v);
        }
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

/// Invert a square matrix by Gauss-Jordan elimination with partial pivoting.
/// Returns `None` when a pivot falls below `tol`.
pub(crate) fn invert(mat: &Mat, tol: f64) -> Option<Mat> {
    assert_eq!(mat.m, mat.n);
    let n = mat.n;
    let mut a = mat.clone();
    let mut inv = Mat::identity(n);
    for col in 0..n {
        let mut piv = col;
        let mut best = a.at(col, col).abs();
        for r in col + 1..n {
            let v = a.at(r, col).abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best <= tol {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.a.swap(col * n + j, piv * n + j);
                inv.a.swap(col * n + j, piv * n + j);
            }
        }
        let d = a.at(col, col);
        for j in 0..n {
            *a.at_mut(col, j) /= d;
            *inv.at_mut(col, j) /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a.at(r, col);
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                let sub = f * a.at(col, j);
                *a.at_mut(r, j) -= sub;
                let subi = f * inv.at(col, j);
                *inv.at_mut(r, j) -= subi;
            }
        }
    }
    Some(inv)
}

/// Outcome of a full-pivot linear solve that tolerates rank deficiency.
pub(crate) struct RankAwareSolution {
    pub x: Vec<f64>,
    /// Unknowns that were not determined by the system and were held at the
    /// supplied fallback value.
    pub held: Vec<bool>,
    pub consistent: bool,
}

/// Solve `A x = rhs` (square or rectangular with `m <= n` rows) by Gaussian
/// elimination with full pivoting. Undetermined unknowns are held at
/// `fallback` values; an inconsistent row marks the outcome as such.
pub(crate) fn solve_rank_aware(
    mat: &Mat,
    rhs: &[f64],
    fallback: &[f64],
    tol: f64,
) -> RankAwareSolution {
    let m = mat.m;
    let n = mat.n;
    assert_eq!(rhs.len(), m);
    assert_eq!(fallback.len(), n);
    let mut a = mat.clone();
    let mut b = rhs.to_vec();
    let mut col_of = (0..n).collect::<Vec<_>>();
    let mut rank = 0usize;

    for step in 0..m.min(n) {
        let mut best = tol;
        let mut pr = usize::MAX;
        let mut pc = usize::MAX;
        for i in step..m {
            for j in step..n {
                let v = a.at(i, j).abs();
                if v > best {
                    best = v;
                    pr = i;
                    pc = j;
                }
            }
        }
        if pr == usize::MAX {
            break;
        }
        if pr != step {
            for j in 0..n {
                a.a.swap(step * n + j, pr * n + j);
            }
            b.swap(step, pr);
        }
        if pc != step {
            for i in 0..m {
                a.a.swap(i * n + step, i * n + pc);
            }
            col_of.swap(step, pc);
        }
        let d = a.at(step, step);
        for j in step..n {
            *a.at_mut(step, j) /= d;
        }
        b[step] /= d;
        for i in 0..m {
            if i == step {
                continue;
            }
            let f = a.at(i, step);
            if f == 0.0 {
                continue;
            }
            for j in step..n {
                let sub = f * a.at(step, j);
                *a.at_mut(i, j) -= sub;
            }
            b[i] -= f * b[step];
        }
        rank = step + 1;
    }

    let mut consistent = true;
    for i in rank..m {
        if b[i].abs() > tol * 1e2 {
            consistent = false;
        }
    }

    let mut x = vec![0.0; n];
    let mut held = vec![false; n];
    // Free (non-pivot) unknowns keep their fallback values.
    for k in rank..n {
        x[col_of[k]] = fallback[col_of[k]];
        held[col_of[k]] = true;
    }
    for k in 0..rank {
        let mut v = b[k];
        for j in rank..n {
            v -= a.at(k, j) * x[col_of[j]];
        }
        x[col_of[k]] = v;
    }
    RankAwareSolution { x, held, consistent }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert_roundtrip() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let inv = invert(&a, 1e-12).unwrap();
        let mut out = vec![0.0; 2];
        inv.matvec(&[5.0, 10.0], &mut out);
        // A * x = [5, 10] -> x = [1, 3]
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert!((out[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn invert_singular_detected() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(invert(&a, 1e-12).is_none());
    }

    #[test]
    fn rank_aware_underdetermined_holds_fallback() {
        // x + y = 3 with fallback y = 10 -> y held, x = -7.
        let a = Mat::from_rows(&[vec![1.0, 1.0]]);
        let sol = solve_rank_aware(&a, &[3.0], &[0.0, 10.0], 1e-12);
        assert!(sol.consistent);
        assert!(sol.held.iter().any(|&h| h));
        assert!((sol.x[0] + sol.x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_aware_inconsistent_flagged() {
        let a = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let sol = solve_rank_aware(&a, &[1.0, 2.0], &[0.0, 0.0], 1e-12);
        assert!(!sol.consistent);
    }
}
