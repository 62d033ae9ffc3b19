//! Dense complex linear algebra.
//!
//! Everything here works on row-major `Complex64` storage and is sized for
//! desk-scale problems: the `r x r` Gram matrix of the column sketch and the
//! brute-force oracle. The Hermitian eigensolver is a cyclic two-sided Jacobi
//! iteration; the SVD goes through the smaller Gram matrix.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Scalar = Complex64;

/// Maximum number of full Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius mass (relative to `||H||_F`) at which Jacobi stops.
pub const JACOBI_TOL: f64 = 1e-12;
/// Relative asymmetry tolerated by [`hermitian_eig`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Singular values below this fraction of `sigma_max` are reported as zero.
pub const SVD_ZERO_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector {
    entries: Vec<Scalar>,
}

impl DenseVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(entries: Vec<Scalar>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = entries.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFiniteEntry { index });
        }
        Ok(Self { entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: vec![Scalar::new(0.0, 0.0); n],
        }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self {
            entries: values.iter().map(|&x| Scalar::new(x, 0.0)).collect(),
        }
    }

    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.entries[k] = Scalar::new(1.0, 0.0);
        v
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[Scalar] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [Scalar] {
        &mut self.entries
    }

    pub fn into_vec(self) -> Vec<Scalar> {
        self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Scalar> {
        self.entries.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn dot(&self, other: &DenseVector) -> Scalar {
        debug_assert_eq!(self.len(), other.len());
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, alpha: Scalar) -> DenseVector {
        DenseVector {
            entries: self.entries.iter().map(|z| z * alpha).collect(),
        }
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: Scalar, x: &DenseVector) {
        debug_assert_eq!(self.len(), x.len());
        for (y, xi) in self.entries.iter_mut().zip(&x.entries) {
            *y += alpha * xi;
        }
    }

    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        debug_assert_eq!(self.len(), other.len());
        DenseVector {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im == 0.0)
    }
}

impl From<Vec<Scalar>> for DenseVector {
    fn from(entries: Vec<Scalar>) -> Self {
        Self { entries }
    }
}

impl Index<usize> for DenseVector {
    type Output = Scalar;
    fn index(&self, i: usize) -> &Scalar {
        &self.entries[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut Scalar {
        &mut self.entries[i]
    }
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Scalar::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Scalar::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Scalar) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Real matrix from row-major values.
    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "DenseMatrix::from_real",
                expected: rows * cols,
                found: values.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data: values.iter().map(|&x| Scalar::new(x, 0.0)).collect(),
        })
    }

    pub fn from_rows(rows: Vec<Vec<Scalar>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::EmptyInput);
        }
        let n = rows[0].len();
        let mut data = Vec::with_capacity(m * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "DenseMatrix::from_rows",
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self { rows: m, cols: n, data })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in values.iter().enumerate() {
            m[(i, i)] = Scalar::new(x, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Scalar] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> DenseVector {
        DenseVector::from((0..self.rows).map(|i| self[(i, j)]).collect::<Vec<_>>())
    }

    pub fn set_column(&mut self, j: usize, values: &[Scalar]) {
        debug_assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn as_slice(&self) -> &[Scalar] {
        &self.data
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    pub fn adjoint(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scaled(&self, alpha: Scalar) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other, "DenseMatrix::sub")?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other, "DenseMatrix::add")?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    fn check_same_shape(&self, other: &DenseMatrix, context: &'static str) -> Result<()> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.rows,
                found: other.rows,
            });
        }
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.cols,
                found: other.cols,
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "DenseMatrix::matmul",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == Scalar::new(0.0, 0.0) {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &DenseVector) -> Result<DenseVector> {
        if self.cols != x.len() {
            return Err(Error::DimensionMismatch {
                context: "DenseMatrix::mul_vec",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok(DenseVector::from(
            (0..self.rows)
                .map(|i| self.row(i).iter().zip(x.iter()).map(|(a, b)| a * b).sum())
                .collect::<Vec<Scalar>>(),
        ))
    }

    /// `A^dagger x`
    pub fn adjoint_mul_vec(&self, x: &DenseVector) -> Result<DenseVector> {
        if self.rows != x.len() {
            return Err(Error::DimensionMismatch {
                context: "DenseMatrix::adjoint_mul_vec",
                expected: self.rows,
                found: x.len(),
            });
        }
        let mut out = vec![Scalar::new(0.0, 0.0); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * xi;
            }
        }
        Ok(DenseVector::from(out))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `A A^dagger`, computed from row inner products.
    pub fn gram_rows(&self) -> DenseMatrix {
        let m = self.rows;
        let mut out = DenseMatrix::zeros(m, m);
        if self.is_real() {
            let re: Vec<f64> = self.data.iter().map(|z| z.re).collect();
            let n = self.cols;
            for i in 0..m {
                let ri = &re[i * n..(i + 1) * n];
                for j in i..m {
                    let rj = &re[j * n..(j + 1) * n];
                    let d: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                    out[(i, j)] = Scalar::new(d, 0.0);
                    out[(j, i)] = Scalar::new(d, 0.0);
                }
            }
        } else {
            for i in 0..m {
                for j in i..m {
                    let d: Scalar = self
                        .row(i)
                        .iter()
                        .zip(self.row(j))
                        .map(|(a, b)| a * b.conj())
                        .sum();
                    out[(i, j)] = d;
                    out[(j, i)] = d.conj();
                }
            }
        }
        out
    }

    /// `A^dagger A`
    pub fn gram_cols(&self) -> DenseMatrix {
        self.adjoint().gram_rows()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = Scalar;
    fn index(&self, (i, j): (usize, usize)) -> &Scalar {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Scalar {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenvalues in descending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    pub sweeps: usize,
}

/// Eigendecomposition of a Hermitian matrix by cyclic two-sided Jacobi.
///
/// Real symmetric input takes a real-arithmetic path with identical
/// rotation rules. Rotations whose pivot is below `tol / (2n)` are skipped;
/// the iteration stops once the off-diagonal Frobenius mass is at most
/// `JACOBI_TOL * ||H||_F`.
pub fn hermitian_eig(h: &DenseMatrix) -> Result<HermitianEigen> {
    let n = h.rows();
    if h.cols() != n {
        return Err(Error::DimensionMismatch {
            context: "hermitian_eig (square)",
            expected: n,
            found: h.cols(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if !h.is_finite() {
        let index = h.as_slice().iter().position(|z| !z.is_finite()).unwrap_or(0);
        return Err(Error::NonFiniteEntry { index });
    }
    let fro = h.frobenius_norm();
    if fro == 0.0 {
        return Ok(HermitianEigen {
            values: vec![0.0; n],
            vectors: DenseMatrix::identity(n),
            sweeps: 0,
        });
    }

    let mut asymmetry = 0.0f64;
    for i in 0..n {
        for j in i..n {
            asymmetry = asymmetry.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    let tolerance = HERMITIAN_TOL * fro;
    if asymmetry > tolerance {
        return Err(Error::NonHermitianInput {
            asymmetry,
            tolerance,
        });
    }

    let (diag, vt, sweeps) = if h.is_real() {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 0.5 * (h[(i, j)].re + h[(j, i)].re);
            }
        }
        let (vt, sweeps) = jacobi_real(&mut a, n, fro)?;
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        let vt: Vec<Scalar> = vt.into_iter().map(|x| Scalar::new(x, 0.0)).collect();
        (diag, vt, sweeps)
    } else {
        let mut a = vec![Scalar::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 0.5 * (h[(i, j)] + h[(j, i)].conj());
            }
        }
        let (vt, sweeps) = jacobi_complex(&mut a, n, fro)?;
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i].re).collect();
        (diag, vt, sweeps)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[b].total_cmp(&diag[a]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        vectors.set_column(col, &vt[src * n..(src + 1) * n]);
    }
    Ok(HermitianEigen {
        values,
        vectors,
        sweeps,
    })
}

fn rotation_tangent(theta: f64) -> f64 {
    if theta.abs() > 1e150 {
        return 0.5 / theta;
    }
    let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
    if theta < 0.0 {
        -t
    } else {
        t
    }
}

/// Two distinct rows `p < q` of a row-major `n x n` buffer.
fn two_rows<T>(a: &mut [T], n: usize, p: usize, q: usize) -> (&mut [T], &mut [T]) {
    let (head, tail) = a.split_at_mut(q * n);
    (&mut head[p * n..(p + 1) * n], &mut tail[..n])
}

fn jacobi_real(a: &mut [f64], n: usize, fro: f64) -> Result<(Vec<f64>, usize)> {
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let stop = JACOBI_TOL * fro;
    let skip = 0.5 * stop / n as f64;
    for sweep in 0..=JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[p * n + q] * a[p * n + q];
                }
            }
        }
        if off.sqrt() <= stop {
            return Ok((vt, sweep));
        }
        if sweep == JACOBI_MAX_SWEEPS {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= skip {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let t = rotation_tangent((aqq - app) / (2.0 * apq));
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                {
                    let (rp, rq) = two_rows(a, n, p, q);
                    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
                        let (xp, xq) = (*x, *y);
                        *x = c * xp - s * xq;
                        *y = s * xp + c * xq;
                    }
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        a[k * n + p] = a[p * n + k];
                        a[k * n + q] = a[q * n + k];
                    }
                }
                let (vp, vq) = two_rows(&mut vt, n, p, q);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
            }
        }
    }
    Err(Error::NoConvergence {
        sweeps: JACOBI_MAX_SWEEPS,
    })
}

fn jacobi_complex(a: &mut [Scalar], n: usize, fro: f64) -> Result<(Vec<Scalar>, usize)> {
    let zero = Scalar::new(0.0, 0.0);
    let mut vt = vec![zero; n * n];
    for i in 0..n {
        vt[i * n + i] = Scalar::new(1.0, 0.0);
    }
    let stop = JACOBI_TOL * fro;
    let skip = 0.5 * stop / n as f64;
    for sweep in 0..=JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[p * n + q].norm_sqr();
                }
            }
        }
        if off.sqrt() <= stop {
            return Ok((vt, sweep));
        }
        if sweep == JACOBI_MAX_SWEEPS {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let g = apq.norm();
                if g <= skip {
                    continue;
                }
                // phase e = apq/|apq| reduces the 2x2 block to a real one
                let e = apq / g;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let t = rotation_tangent((aqq - app) / (2.0 * g));
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let se = e * s;
                let ce = e * c;
                {
                    let (rp, rq) = two_rows(a, n, p, q);
                    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
                        let (xp, xq) = (*x, *y);
                        *x = xp * c - se * xq;
                        *y = xp * s + ce * xq;
                    }
                }
                a[p * n + p] = Scalar::new(app - t * g, 0.0);
                a[q * n + q] = Scalar::new(aqq + t * g, 0.0);
                a[p * n + q] = zero;
                a[q * n + p] = zero;
                for k in 0..n {
                    if k != p && k != q {
                        a[k * n + p] = a[p * n + k].conj();
                        a[k * n + q] = a[q * n + k].conj();
                    }
                }
                let sec = se.conj();
                let cec = ce.conj();
                let (vp, vq) = two_rows(&mut vt, n, p, q);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = xp * c - sec * xq;
                    *y = xp * s + cec * xq;
                }
            }
        }
    }
    Err(Error::NoConvergence {
        sweeps: JACOBI_MAX_SWEEPS,
    })
}

/// Thin SVD `A = U diag(sigma) V^dagger` with `p = min(m, n)` columns in `U` and `V`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.sigma.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }
}

/// Exact SVD through the eigendecomposition of the smaller Gram matrix.
///
/// Singular values are taken as `||A v_j||` rather than `sqrt(lambda_j)`,
/// which keeps the null space at the `eps * ||A||` level instead of the
/// `sqrt(eps) * ||A||` floor of the squared Gram spectrum.
pub fn exact_svd(a: &DenseMatrix) -> Result<Svd> {
    if a.rows() < a.cols() {
        let t = exact_svd(&a.adjoint())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let (m, n) = (a.rows(), a.cols());
    let eig = hermitian_eig(&a.gram_cols())?;
    let mut images = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for j in 0..n {
        let av = a.mul_vec(&eig.vectors.column(j))?;
        norms.push(av.norm());
        images.push(av);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma_max = norms[order[0]];
    let cutoff = SVD_ZERO_TOL * sigma_max;

    let mut u = DenseMatrix::zeros(m, n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (col, &src) in order.iter().enumerate() {
        v.set_column(col, eig.vectors.column(src).as_slice());
        let s = norms[src];
        if s > cutoff && s > 0.0 {
            let inv = Scalar::new(1.0 / s, 0.0);
            let scaled: Vec<Scalar> = images[src].iter().map(|z| z * inv).collect();
            u.set_column(col, &scaled);
            sigma.push(s);
        } else {
            sigma.push(0.0);
        }
    }
    orthonormalize_in_place(&mut u);
    Ok(Svd { u, sigma, v })
}

/// Modified Gram-Schmidt (two passes) on the columns of `q`. Columns that
/// vanish after projection are replaced by completed standard basis vectors.
fn orthonormalize_in_place(q: &mut DenseMatrix) {
    let (m, k) = (q.rows(), q.cols());
    let mut cols: Vec<Vec<Scalar>> = (0..k).map(|j| q.column(j).into_vec()).collect();
    let mut next_basis = 0;
    for j in 0..k {
        let original = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut norm = project_out(&mut cols, j);
        if original == 0.0 || norm <= 1e-8 * original {
            // complete with the first standard basis vector that is not
            // (numerically) inside the span built so far
            let mut best: Option<(f64, usize)> = None;
            norm = 0.0;
            for attempt in 0..m {
                let e = (next_basis + attempt) % m;
                cols[j] = vec![Scalar::new(0.0, 0.0); m];
                cols[j][e] = Scalar::new(1.0, 0.0);
                let r = project_out(&mut cols, j);
                if r > 1e-3 {
                    next_basis = e + 1;
                    norm = r;
                    best = None;
                    break;
                }
                if best.is_none_or(|(b, _)| r > b) {
                    best = Some((r, e));
                }
            }
            if let Some((_, e)) = best {
                cols[j] = vec![Scalar::new(0.0, 0.0); m];
                cols[j][e] = Scalar::new(1.0, 0.0);
                norm = project_out(&mut cols, j);
            }
        }
        let inv = 1.0 / norm;
        for z in cols[j].iter_mut() {
            *z *= inv;
        }
    }
    for (j, col) in cols.iter().enumerate() {
        q.set_column(j, col);
    }
}

fn project_out(cols: &mut [Vec<Scalar>], j: usize) -> f64 {
    let (done, rest) = cols.split_at_mut(j);
    let target = &mut rest[0];
    for _ in 0..2 {
        for prev in done.iter() {
            let coef: Scalar = prev.iter().zip(target.iter()).map(|(a, b)| a.conj() * b).sum();
            for (t, p) in target.iter_mut().zip(prev) {
                *t -= coef * p;
            }
        }
    }
    target.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthonormal basis for the columns of `a` (thin QR's `Q` factor).
pub fn orthonormalize_columns(a: &DenseMatrix) -> DenseMatrix {
    let mut q = a.clone();
    orthonormalize_in_place(&mut q);
    q
}

/// `sum_{sigma_l > cutoff} v_l <u_l, b> / sigma_l`
pub fn pseudoinverse_apply(a: &DenseMatrix, b: &DenseVector, sigma_cutoff: f64) -> Result<DenseVector> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "pseudoinverse_apply",
            expected: a.rows(),
            found: b.len(),
        });
    }
    let svd = exact_svd(a)?;
    Ok(pseudoinverse_apply_svd(&svd, b, sigma_cutoff))
}

pub(crate) fn pseudoinverse_apply_svd(svd: &Svd, b: &DenseVector, sigma_cutoff: f64) -> DenseVector {
    let mut x = DenseVector::zeros(svd.v.rows());
    for (l, &s) in svd.sigma.iter().enumerate() {
        if s > 0.0 && s > sigma_cutoff {
            let coef = svd.u.column(l).dot(b) / s;
            x.axpy(coef, &svd.v.column(l));
        }
    }
    x
}

/// Operator norm as the largest singular value.
pub fn operator_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(exact_svd(a)?.sigma_max())
}

/// Operator norm of a Hermitian matrix, `max |lambda|`.
pub fn hermitian_operator_norm(h: &DenseMatrix) -> Result<f64> {
    let eig = hermitian_eig(h)?;
    Ok(eig.values.iter().fold(0.0f64, |acc, l| acc.max(l.abs())))
}

/// Power-iteration estimate of `||A||` for diagnostics on larger matrices.
///
/// Starts from a fixed quasi-random vector, so the result is deterministic.
pub fn power_norm_estimate(a: &DenseMatrix, max_iters: usize, rel_tol: f64) -> f64 {
    let n = a.cols();
    let mut v = DenseVector::from(
        (0..n)
            .map(|j| Scalar::new(1.0 + (j as f64 * 0.618_033_988_749_895).fract(), 0.0))
            .collect::<Vec<_>>(),
    );
    let nv = v.norm();
    v = v.scaled(Scalar::new(1.0 / nv, 0.0));
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let av = a.mul_vec(&v).expect("shape checked");
        let w = a.adjoint_mul_vec(&av).expect("shape checked");
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        let next = wn.sqrt();
        v = w.scaled(Scalar::new(1.0 / wn, 0.0));
        if (next - estimate).abs() <= rel_tol * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64) -> Scalar {
        Scalar::new(re, 0.0)
    }

    fn gaussian(rows: usize, cols: usize, complex: bool, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
            Scalar::new(re, im)
        })
    }

    fn assert_eigenpairs(h: &DenseMatrix, eig: &HermitianEigen) {
        let fro = h.frobenius_norm();
        let n = h.rows();
        for j in 0..n {
            let v = eig.vectors.column(j);
            let hv = h.mul_vec(&v).unwrap();
            let resid = hv.sub(&v.scaled(c(eig.values[j]))).norm();
            assert!(resid <= 1e-9 * fro, "column {j}: residual {resid}");
        }
        let gram = eig.vectors.gram_cols();
        assert!(gram.max_abs_diff(&DenseMatrix::identity(n)) <= 1e-9);
        for w in eig.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    /// One-sided (Hestenes) Jacobi on a real matrix: an independent route to
    /// singular values that never forms a Gram matrix.
    fn hestenes_singular_values(a: &DenseMatrix) -> Vec<f64> {
        let (m, n) = (a.rows(), a.cols());
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)].re).collect()).collect();
        for _ in 0..60 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                    let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                    let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                    if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let cs = 1.0 / (1.0 + t * t).sqrt();
                    let sn = cs * t;
                    for i in 0..m {
                        let (x, y) = (cols[p][i], cols[q][i]);
                        cols[p][i] = cs * x - sn * y;
                        cols[q][i] = sn * x + cs * y;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut s: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[test]
    fn eig_diagonal() {
        let h = DenseMatrix::diagonal(&[1.0, 3.0]);
        let eig = hermitian_eig(&h).unwrap();
        assert_eq!(eig.values, vec![3.0, 1.0]);
        assert!((eig.vectors[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((eig.vectors[(0, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_swap_matrix() {
        let h = DenseMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let eig = hermitian_eig(&h).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!((eig.values[1] + 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = eig.vectors.column(0);
        let v1 = eig.vectors.column(1);
        // eigenvectors are defined up to a phase
        assert!((v0.dot(&DenseVector::from_real(&[s, s])).norm() - 1.0).abs() < 1e-14);
        assert!((v1.dot(&DenseVector::from_real(&[s, -s])).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_gram_matches_independent_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = gaussian(6, 6, false, &mut rng);
        let eig = hermitian_eig(&m.gram_cols()).unwrap();
        let oracle = hestenes_singular_values(&m);
        for (l, s) in eig.values.iter().zip(&oracle) {
            assert!((l - s * s).abs() <= 1e-8, "{l} vs {}", s * s);
        }
        assert_eigenpairs(&m.gram_cols(), &eig);
    }

    #[test]
    fn eig_complex_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = gaussian(9, 7, true, &mut rng);
        let h = m.gram_cols();
        assert!(!h.is_real());
        let eig = hermitian_eig(&h).unwrap();
        assert_eigenpairs(&h, &eig);
        // reconstruction H = V L V^dagger
        let l = DenseMatrix::diagonal(&eig.values);
        let rebuilt = eig.vectors.matmul(&l).unwrap().matmul(&eig.vectors.adjoint()).unwrap();
        assert!(rebuilt.sub(&h).unwrap().frobenius_norm() <= 1e-8 * h.frobenius_norm());
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let h = DenseMatrix::from_real(2, 2, &[1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(hermitian_eig(&h), Err(Error::NonHermitianInput { .. })));
        let h = DenseMatrix::from_fn(2, 2, |i, j| if i == j { Scalar::new(1.0, 0.5) } else { c(0.0) });
        assert!(matches!(hermitian_eig(&h), Err(Error::NonHermitianInput { .. })));
    }

    #[test]
    fn eig_indefinite_with_repeated_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthonormalize_columns(&gaussian(8, 8, true, &mut rng));
        let d = DenseMatrix::diagonal(&[2.0, 2.0, 1.0, 0.0, 0.0, -1.0, -1.0, -3.0]);
        let h = q.matmul(&d).unwrap().matmul(&q.adjoint()).unwrap();
        let eig = hermitian_eig(&h).unwrap();
        for (got, want) in eig.values.iter().zip([2.0, 2.0, 1.0, 0.0, 0.0, -1.0, -1.0, -3.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        assert_eigenpairs(&h, &eig);
    }

    #[test]
    fn svd_diagonal_and_zero() {
        let svd = exact_svd(&DenseMatrix::diagonal(&[2.0, 1.0])).unwrap();
        assert!((svd.sigma[0] - 2.0).abs() < 1e-14 && (svd.sigma[1] - 1.0).abs() < 1e-14);

        let svd = exact_svd(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(svd.sigma, vec![0.0, 0.0]);
        assert!(svd.u.gram_cols().max_abs_diff(&DenseMatrix::identity(2)) < 1e-12);
        assert!(svd.v.gram_cols().max_abs_diff(&DenseMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn svd_rank_one_norm_product() {
        let u = [2.0, 0.0, 0.0];
        let v = [0.0, 3.0 * 0.6, 3.0 * 0.8, 0.0];
        let a = DenseMatrix::from_fn(3, 4, |i, j| c(u[i] * v[j]));
        let svd = exact_svd(&a).unwrap();
        assert!((svd.sigma[0] - 6.0).abs() < 1e-12);
        assert!(svd.sigma[1..].iter().all(|&s| s == 0.0));
        assert_eq!(svd.rank(), 1);
    }

    fn assert_svd_reconstructs(a: &DenseMatrix, svd: &Svd) {
        let p = svd.sigma.len();
        let fro = a.frobenius_norm();
        let us = DenseMatrix::from_fn(a.rows(), p, |i, j| svd.u[(i, j)] * svd.sigma[j]);
        let rebuilt = us.matmul(&svd.v.adjoint()).unwrap();
        assert!(rebuilt.sub(a).unwrap().frobenius_norm() <= 1e-8 * fro.max(1.0));
        assert!(svd.u.gram_cols().max_abs_diff(&DenseMatrix::identity(p)) <= 1e-8);
        assert!(svd.v.gram_cols().max_abs_diff(&DenseMatrix::identity(p)) <= 1e-8);
    }

    #[test]
    fn svd_reconstructs_tall_wide_and_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(m, n, complex) in &[(7, 4, false), (4, 9, true), (10, 10, true)] {
            let a = gaussian(m, n, complex, &mut rng);
            assert_svd_reconstructs(&a, &exact_svd(&a).unwrap());
        }
        let f = gaussian(9, 2, true, &mut rng);
        let g = gaussian(2, 6, true, &mut rng);
        let a = f.matmul(&g).unwrap();
        let svd = exact_svd(&a).unwrap();
        assert_eq!(svd.rank(), 2);
        assert_svd_reconstructs(&a, &svd);
    }

    #[test]
    fn svd_invariant_under_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gaussian(6, 5, true, &mut rng);
        let left = orthonormalize_columns(&gaussian(6, 6, true, &mut rng));
        let right = orthonormalize_columns(&gaussian(5, 5, true, &mut rng));
        let b = left.matmul(&a).unwrap().matmul(&right).unwrap();
        let sa = exact_svd(&a).unwrap().sigma;
        let sb = exact_svd(&b).unwrap().sigma;
        for (x, y) in sa.iter().zip(&sb) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn pinv_diagonal_and_identity() {
        let a = DenseMatrix::diagonal(&[2.0, 0.0]);
        let x = pseudoinverse_apply(&a, &DenseVector::from_real(&[1.0, 1.0]), 1e-12).unwrap();
        assert!((x[0] - c(0.5)).norm() < 1e-14 && x[1].norm() < 1e-14);

        let small = DenseMatrix::diagonal(&[3.0, 0.001]);
        let x = pseudoinverse_apply(&small, &DenseVector::from_real(&[3.0, 1.0]), 0.01).unwrap();
        assert!((x[0] - c(1.0)).norm() < 1e-14 && x[1].norm() == 0.0);

        let b = DenseVector::from(vec![Scalar::new(1.0, -2.0), c(3.0), Scalar::new(0.0, 4.0)]);
        let x = pseudoinverse_apply(&DenseMatrix::identity(3), &b, 0.0).unwrap();
        assert!(x.sub(&b).norm() < 1e-14);

        let err = pseudoinverse_apply(&DenseMatrix::identity(3), &DenseVector::zeros(2), 0.0);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    /// Solve a small dense system by Gaussian elimination with partial pivoting.
    fn solve_small(mut a: DenseMatrix, mut b: Vec<Scalar>) -> Vec<Scalar> {
        let n = a.rows();
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| a[(x, col)].norm().total_cmp(&a[(y, col)].norm())).unwrap();
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[(r, col)] / a[(col, col)];
                for j in col..n {
                    let v = a[(col, j)];
                    a[(r, j)] -= f * v;
                }
                let bc = b[col];
                b[r] -= f * bc;
            }
        }
        let mut x = vec![c(0.0); n];
        for i in (0..n).rev() {
            let s: Scalar = (i + 1..n).map(|j| a[(i, j)] * x[j]).sum();
            x[i] = (b[i] - s) / a[(i, i)];
        }
        x
    }

    #[test]
    fn pinv_rank_three_minimum_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = gaussian(8, 3, false, &mut rng);
        let g = gaussian(3, 6, false, &mut rng);
        let a = f.matmul(&g).unwrap();
        let z = gaussian(6, 1, false, &mut rng).column(0);
        let b = a.mul_vec(&z).unwrap();
        let x = pseudoinverse_apply(&a, &b, 1e-10).unwrap();
        assert!(a.mul_vec(&x).unwrap().sub(&b).norm() <= 1e-8);

        // minimum-norm solution through the factorization: x = G^T (G G^T)^-1 (F^T F)^-1 F^T b
        let ftb = f.adjoint_mul_vec(&b).unwrap().into_vec();
        let y = solve_small(f.gram_cols(), ftb);
        let t = solve_small(g.gram_rows(), y);
        let oracle = g.adjoint_mul_vec(&DenseVector::from(t)).unwrap();
        assert!(x.sub(&oracle).norm() <= 1e-8 * oracle.norm());
    }

    #[test]
    fn power_estimate_close_to_exact_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = gaussian(20, 15, true, &mut rng);
        let exact = operator_norm(&a).unwrap();
        let est = power_norm_estimate(&a, 500, 1e-12);
        assert!((exact - est).abs() <= 1e-6 * exact);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pinv_is_linear(seed in any::<u64>(), m in 2usize..7, n in 2usize..7, alpha in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(m, n, true, &mut rng);
            let b1 = gaussian(m, 1, true, &mut rng).column(0);
            let b2 = gaussian(m, 1, true, &mut rng).column(0);
            let mut combo = b2.clone();
            combo.axpy(c(alpha), &b1);
            let lhs = pseudoinverse_apply(&a, &combo, 0.0).unwrap();
            let mut rhs = pseudoinverse_apply(&a, &b2, 0.0).unwrap();
            rhs.axpy(c(alpha), &pseudoinverse_apply(&a, &b1, 0.0).unwrap());
            prop_assert!(lhs.sub(&rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
        }

        #[test]
        fn eig_reconstruction_residual(seed in any::<u64>(), n in 1usize..9, complex in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = gaussian(n, n, complex, &mut rng);
            let h = m.add(&m.adjoint()).unwrap();
            let eig = hermitian_eig(&h).unwrap();
            let l = DenseMatrix::diagonal(&eig.values);
            let rebuilt = eig.vectors.matmul(&l).unwrap().matmul(&eig.vectors.adjoint()).unwrap();
            prop_assert!(rebuilt.sub(&h).unwrap().frobenius_norm() <= 1e-8 * h.frobenius_norm().max(1e-300));
        }
    }
}
