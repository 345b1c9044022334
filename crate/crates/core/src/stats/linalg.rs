//! Thin QR factorisation for small dense least-squares problems.

/// `A = Q R` with `Q` stored column-wise.
pub(crate) struct Qr {
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

/// Relative residual norm below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

impl Qr {
    /// Factorises the column-major matrix `cols` by modified Gram-Schmidt
    /// with one reorthogonalisation pass.
    ///
    /// Returns `Err(j)` for the first column `j` lying in the span of the
    /// columns before it.
    pub(crate) fn factor(cols: &[Vec<f64>]) -> Result<Qr, usize> {
        let p = cols.len();
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut r = vec![vec![0.0; p]; p];
        for (j, col) in cols.iter().enumerate() {
            let original = norm(col);
            let mut v = col.clone();
            for _ in 0..2 {
                for (k, qk) in q.iter().enumerate() {
                    let proj = dot(qk, &v);
                    r[k][j] += proj;
                    for (vi, qi) in v.iter_mut().zip(qk) {
                        *vi -= proj * qi;
                    }
                }
            }
            let len = norm(&v);
            if original == 0.0 || len <= RANK_TOL * original {
                return Err(j);
            }
            r[j][j] = len;
            v.iter_mut().for_each(|x| *x /= len);
            q.push(v);
        }
        Ok(Qr { q, r })
    }

    /// Least-squares solution of `A x = y`.
    pub(crate) fn solve(&self, y: &[f64]) -> Vec<f64> {
        let qty: Vec<f64> = self.q.iter().map(|qk| dot(qk, y)).collect();
        let p = qty.len();
        let mut x = vec![0.0; p];
        for i in (0..p).rev() {
            let s: f64 = ((i + 1)..p).map(|k| self.r[i][k] * x[k]).sum();
            x[i] = (qty[i] - s) / self.r[i][i];
        }
        x
    }

    /// Diagonal of `(A^T A)^{-1} = R^{-1} R^{-T}`.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn inverse_gram_diagonal(&self) -> Vec<f64> {
        let p = self.r.len();
        // columns of R^{-1} by back substitution on unit vectors
        let mut rinv = vec![vec![0.0; p]; p];
        for c in 0..p {
            for i in (0..=c).rev() {
                let rhs = if i == c { 1.0 } else { 0.0 };
                let s: f64 = ((i + 1)..=c).map(|k| self.r[i][k] * rinv[k][c]).sum();
                rinv[i][c] = (rhs - s) / self.r[i][i];
            }
        }
        (0..p)
            .map(|i| rinv[i].iter().map(|v| v * v).sum())
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_square_system() {
        // [1 0; 1 1; 1 2] x = [1,3,5] -> x = [1,2]
        let cols = vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]];
        let qr = Qr::factor(&cols).unwrap();
        let x = qr.solve(&[1.0, 3.0, 5.0]);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gram_inverse_diagonal() {
        // A^T A = [[3,3],[3,5]], inverse diag = [5/6, 3/6]
        let cols = vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]];
        let d = Qr::factor(&cols).unwrap().inverse_gram_diagonal();
        assert!((d[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn detects_dependent_column() {
        let cols = vec![
            vec![1.0, 1.0, 1.0],
            vec![0.0, 1.0, 2.0],
            vec![3.0, 5.0, 7.0],
        ];
        assert_eq!(Qr::factor(&cols).err(), Some(2));
        let zero = vec![vec![1.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(Qr::factor(&zero).err(), Some(1));
    }
}
