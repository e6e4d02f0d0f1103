//! Small dense linear algebra: row-major matrices, Householder QR least
//! squares, and Cholesky factorization. Design matrices in this crate have
//! at most a dozen columns, so simple O(np²) kernels are the right tool.

use crate::error::{Error, Result};
use crate::num::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * p);
        for r in rows {
            assert_eq!(r.len(), p, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: n, cols: p, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<F> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// `self' * v` for a length-`rows` vector.
    pub fn t_mul_vec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let w = v[r];
            for (o, &x) in out.iter_mut().zip(row) {
                *o = *o + w * x;
            }
        }
        out
    }

    /// `self * v` for a length-`cols` vector.
    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(F::zero(), |acc, (&x, &w)| acc + x * w)
            })
            .collect()
    }
}

/// Result of a QR least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares<F> {
    /// Coefficient vector (length = columns of the design).
    pub beta: Vec<F>,
    /// `(X'X)^{-1}`, for coefficient covariance.
    pub xtx_inv: Matrix<F>,
    /// Residual sum of squares.
    pub rss: F,
}

/// Solves `min ||y - X b||` by Householder QR.
///
/// Returns an error naming the offending columns when the design is rank
/// deficient (relative pivot threshold `1e-10`).
pub fn qr_least_squares<F: Real>(x: &Matrix<F>, y: &[F]) -> Result<LeastSquares<F>> {
    let n = x.rows();
    let p = x.cols();
    assert_eq!(y.len(), n);
    if n < p {
        return Err(Error::NotIdentifiable(format!(
            "{n} observations for {p} coefficients"
        )));
    }

    // Work on an augmented copy [X | y]; reflections hit both.
    let mut a = Matrix::zeros(n, p + 1);
    for r in 0..n {
        for c in 0..p {
            a.set(r, c, x.get(r, c));
        }
        a.set(r, p, y[r]);
    }

    for k in 0..p {
        // Householder vector for column k below the diagonal.
        let mut norm = F::zero();
        for r in k..n {
            let v = a.get(r, k);
            norm = norm + v * v;
        }
        let norm = norm.sqrt();
        if norm == F::zero() {
            continue; // zero column; caught by the rank check below
        }
        let akk = a.get(k, k);
        let alpha = if akk >= F::zero() { -norm } else { norm };
        let mut v: Vec<F> = (k..n).map(|r| a.get(r, k)).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(F::zero(), |s, &t| s + t * t);
        if vnorm2 == F::zero() {
            continue;
        }
        for c in k..=p {
            let mut dot = F::zero();
            for (i, &vi) in v.iter().enumerate() {
                dot = dot + vi * a.get(k + i, c);
            }
            let scale = (F::one() + F::one()) * dot / vnorm2;
            for (i, &vi) in v.iter().enumerate() {
                let cur = a.get(k + i, c);
                a.set(k + i, c, cur - scale * vi);
            }
        }
    }

    // Rank check on the diagonal of R.
    let mut max_diag = F::zero();
    for k in 0..p {
        max_diag = max_diag.max(a.get(k, k).abs());
    }
    let tol = max_diag * F::of(1e-10);
    let bad: Vec<usize> = (0..p).filter(|&k| a.get(k, k).abs() <= tol).collect();
    if !bad.is_empty() || max_diag == F::zero() {
        return Err(Error::RankDeficient {
            columns: bad.iter().map(|c| format!("column {c}")).collect(),
        });
    }

    // Back substitution for beta.
    let mut beta = vec![F::zero(); p];
    for k in (0..p).rev() {
        let mut s = a.get(k, p);
        for j in k + 1..p {
            s = s - a.get(k, j) * beta[j];
        }
        beta[k] = s / a.get(k, k);
    }

    // RSS = || tail of transformed y ||^2.
    let mut rss = F::zero();
    for r in p..n {
        let v = a.get(r, p);
        rss = rss + v * v;
    }

    // (X'X)^{-1} = R^{-1} R^{-T}. First invert the upper triangle.
    let mut rinv = Matrix::zeros(p, p);
    for k in 0..p {
        rinv.set(k, k, F::one() / a.get(k, k));
        for i in (0..k).rev() {
            let mut s = F::zero();
            for j in i + 1..=k {
                s = s + a.get(i, j) * rinv.get(j, k);
            }
            rinv.set(i, k, -s / a.get(i, i));
        }
    }
    let mut xtx_inv = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut s = F::zero();
            for k in j.max(i)..p {
                s = s + rinv.get(i, k) * rinv.get(j, k);
            }
            xtx_inv.set(i, j, s);
        }
    }

    Ok(LeastSquares { beta, xtx_inv, rss })
}

/// Cholesky factor (lower triangular) of a symmetric positive-definite matrix.
pub struct Cholesky<F> {
    l: Matrix<F>,
}

impl<F: Real> Cholesky<F> {
    pub fn decompose(a: &Matrix<F>) -> Result<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = F::zero();
                for k in 0..j {
                    s = s + l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    let d = a.get(i, i) - s;
                    if d <= F::zero() {
                        return Err(Error::NotIdentifiable(
                            "matrix not positive definite".into(),
                        ));
                    }
                    l.set(i, j, d.sqrt());
                } else {
                    l.set(i, j, (a.get(i, j) - s) / l.get(j, j));
                }
            }
        }
        Ok(Cholesky { l })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut y = vec![F::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        let mut x = vec![F::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// log(det A) = 2 * sum(log diag L).
    pub fn log_det(&self) -> F {
        let mut s = F::zero();
        for i in 0..self.l.rows() {
            s = s + self.l.get(i, i).ln();
        }
        s + s
    }

    /// Full inverse of `A` (fine at these dimensions).
    pub fn inverse(&self) -> Matrix<F> {
        let n = self.l.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for c in 0..n {
            e[c] = F::one();
            let col = self.solve(&e);
            e[c] = F::zero();
            for r in 0..n {
                inv.set(r, c, col[r]);
            }
        }
        inv
    }
}
