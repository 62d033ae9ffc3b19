//! Brute-force ground truth for desk-scale instances.
//!
//! Nothing here draws random numbers. Every function refuses inputs beyond
//! the size gate (`m, n <= 4096`, `r <= 2048`).

use serde::{Deserialize, Serialize};

use crate::access::LsMatrix;
use crate::dense::{hermitian_eig, operator_norm, DenseMatrix, DenseVector, Scalar};
use crate::error::{Error, Result};
use crate::estimator::a_adjoint_times;
use crate::sketch::RowSketch;
use crate::solver::SolutionHandle;

pub const MAX_DIM: usize = 4096;
pub const MAX_SKETCH_ROWS: usize = 2048;
pub const MAX_ENUMERATION_ROWS: usize = 64;

pub fn check_size(m: usize, n: usize, r: usize) -> Result<()> {
    if m > MAX_DIM || n > MAX_DIM {
        return Err(Error::SizeGate(format!("{m} x {n} exceeds {MAX_DIM} x {MAX_DIM}")));
    }
    if r > MAX_SKETCH_ROWS {
        return Err(Error::SizeGate(format!("r = {r} exceeds {MAX_SKETCH_ROWS}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::NonFiniteEntry { index });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroVector);
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::from_weights(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub fn exact_ls_distribution(v: &DenseVector) -> Result<ProbabilityVector> {
    ProbabilityVector::from_weights(v.iter().map(|z| z.norm_sqr()).collect())
}

pub fn tv_distance(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "tv_distance",
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `(TV(q_v, q_w), 2 ||v - w|| / max(||v||, ||w||))`.
pub fn tv_euclid_check(v: &DenseVector, w: &DenseVector) -> Result<(f64, f64)> {
    let tv = tv_distance(&exact_ls_distribution(v)?, &exact_ls_distribution(w)?)?;
    let bound = 2.0 * v.sub(w).norm() / v.norm().max(w.norm());
    Ok((tv, bound))
}

/// `sum_i p_i Y_i^dagger Y_i` with `Y_i = A_i. / sqrt(p_i)`.
pub fn enumerate_sketch_expectation(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() > MAX_ENUMERATION_ROWS {
        return Err(Error::SizeGate(format!("{} rows exceed {MAX_ENUMERATION_ROWS}", a.rows())));
    }
    let fro2 = a.frobenius_norm().powi(2);
    if fro2 == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let n = a.cols();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..a.rows() {
        let row = a.row(i);
        let p = row.iter().map(|z| z.norm_sqr()).sum::<f64>() / fro2;
        if p == 0.0 {
            continue;
        }
        for (j, x) in row.iter().enumerate() {
            for (l, y) in row.iter().enumerate() {
                out[(j, l)] += p * (x.conj() * y) / p;
            }
        }
    }
    Ok(out)
}

/// `E[C C^dagger]` over a single column draw, for a fixed row sketch.
pub fn enumerate_column_sketch_expectation(a: &DenseMatrix, rows: &RowSketch) -> Result<DenseMatrix> {
    let r = rows.r();
    check_size(a.rows(), a.cols(), r)?;
    let r_dense = DenseMatrix::from_fn(r, a.cols(), |s, j| a[(rows.indices[s], j)] * rows.scales[s]);
    let row_norm2 = rows.row_norm_sqr();
    let fro2 = rows.frob_a * rows.frob_a;
    let mut out = DenseMatrix::zeros(r, r);
    for j in 0..a.cols() {
        let col = r_dense.column(j);
        let col2 = col.norm_sqr();
        if col2 == 0.0 {
            continue;
        }
        let p: f64 = (0..r).map(|s| r_dense[(s, j)].norm_sqr() / row_norm2 / r as f64).sum();
        let scale = fro2 / col2;
        for s in 0..r {
            for t in 0..r {
                out[(s, t)] += col[s] * col[t].conj() * (p * scale);
            }
        }
    }
    Ok(out)
}

/// `(E[X], E|X|^2)` for the trace estimator, by enumeration over all `(i, j)`.
pub fn enumerate_estimator_moments(a: &DenseMatrix, b: &DenseMatrix) -> Result<(Scalar, f64)> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: "enumerate_estimator_moments",
            expected: a.rows() * a.cols(),
            found: b.rows() * b.cols(),
        });
    }
    let fro2 = a.frobenius_norm().powi(2);
    if fro2 == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let mut mean = Scalar::new(0.0, 0.0);
    let mut second = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = a[(i, j)];
            if aij.norm_sqr() == 0.0 {
                continue;
            }
            let p = aij.norm_sqr() / fro2;
            let x = b[(i, j)] * fro2 / aij;
            mean += x * p;
            second += p * x.norm_sqr();
        }
    }
    Ok((mean, second))
}

/// Output law of the rejection sampler, from proposal and acceptance
/// probabilities over every `(s, j)`.
pub fn enumerate_rejection_distribution(h: &SolutionHandle<'_>, a_dense: &DenseMatrix) -> Result<ProbabilityVector> {
    let rows = &h.rows;
    let r = rows.r();
    check_size(a_dense.rows(), a_dense.cols(), r)?;
    let w2 = h.w.norm_sqr();
    if w2 == 0.0 {
        return Err(Error::ZeroSolution);
    }
    let r_dense = DenseMatrix::from_fn(r, a_dense.cols(), |s, j| a_dense[(rows.indices[s], j)] * rows.scales[s]);
    let row2: Vec<f64> = (0..r).map(|s| r_dense.row(s).iter().map(|z| z.norm_sqr()).sum()).collect();
    let mut out = vec![0.0; a_dense.cols()];
    for (j, o) in out.iter_mut().enumerate() {
        let col = r_dense.column(j);
        let col2 = col.norm_sqr();
        if col2 == 0.0 {
            continue;
        }
        let y = col.dot(&h.w);
        let accept = y.norm_sqr() / (w2 * col2);
        let propose: f64 = (0..r).map(|s| r_dense[(s, j)].norm_sqr() / row2[s] / r as f64).sum();
        *o = propose * accept;
    }
    ProbabilityVector::from_weights(out).map_err(|_| Error::ZeroSolution)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreconditionReport {
    pub spectral_norm: f64,
    pub norm_at_most_one: bool,
}

impl PreconditionReport {
    pub fn from_norm(spectral_norm: f64) -> Self {
        Self {
            spectral_norm,
            norm_at_most_one: spectral_norm <= 1.0 + 1e-9,
        }
    }
}

/// `||A|| <= 1`, which needs the full spectrum and so only runs here.
pub fn check_preconditions(a: &DenseMatrix) -> Result<PreconditionReport> {
    Ok(PreconditionReport::from_norm(operator_norm(a)?))
}

/// Tolerance for `TV(empirical, p)` after `samples` draws from `p`: the mean
/// bound `(1/2) sum_i sqrt(p_i / N)` plus a bounded-difference deviation term
/// that fails with probability at most `delta`.
pub fn empirical_tv_slack(p: &ProbabilityVector, samples: u64, delta: f64) -> f64 {
    let n = samples.max(1) as f64;
    let mean: f64 = 0.5 * p.probs.iter().map(|pi| (pi / n).sqrt()).sum::<f64>();
    mean + ((1.0 / delta).ln() / (2.0 * n)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `||x~ - A^+ b|| / ||A^+ b||`.
    pub rel_residual: f64,
    /// `||x' - A^+ b||` with `x' = sum_l (lambda_l / sigma_l^2) v_l` and exact lambdas.
    pub x_prime_error: f64,
    /// `||x~ - x'||`.
    pub lambda_perturbation: f64,
    /// `sqrt(z^dagger V^dagger V z)`, equal to `lambda_perturbation`.
    pub lambda_perturbation_gram: f64,
    /// `sqrt(4/3) ||z||` with `z_l = (lambda_l - lambda~_l) / sigma_l^2`.
    pub lambda_perturbation_bound: f64,
    /// `||V^dagger V||`.
    pub gram_norm: f64,
    /// `sum_l |lambda_l|^2 / sigma_l^2` and the `4 (k_hat + eps)` bound.
    pub lambda_energy: f64,
    pub lambda_energy_bound: f64,
    /// `||P_col(A) b|| / ||b||`.
    pub projection_fraction: f64,
    /// `A^+ b = 0`; the relative residual is undefined.
    pub hypothesis_violation: bool,
    /// Max `|lambda~_l - lambda_l|`, against the per-lambda targets.
    pub lambda_errors: Vec<f64>,
    pub tv_to_exact: f64,
    pub tv_bound: f64,
}

/// Compares the handle's solution to `x_exact = A^+ b`.
pub fn residual_report(
    a: &LsMatrix,
    b: &DenseVector,
    h: &SolutionHandle<'_>,
    x_exact: &DenseVector,
    epsilon: f64,
) -> Result<ResidualReport> {
    check_size(a.rows(), a.cols(), h.rows.r())?;
    let x_tilde = h.materialize();
    let x_norm = x_exact.norm();
    let hypothesis_violation = x_norm <= 1e-12 * b.norm();

    let vectors = h.spectrum.right_vectors(a, &h.rows);
    let dense_v: Vec<DenseVector> = vectors.iter().map(|v| v.materialize()).collect();
    let atb = a_adjoint_times(a, b);
    let atb = DenseVector::from(atb);
    let k = dense_v.len();
    let sig = &h.spectrum.sigmas;

    let exact_lambdas: Vec<Scalar> = dense_v.iter().map(|v| v.dot(&atb)).collect();
    let mut x_prime = DenseVector::zeros(a.cols());
    let mut z = DenseVector::zeros(k);
    let mut lambda_energy = 0.0;
    let mut lambda_errors = Vec::with_capacity(k);
    for l in 0..k {
        let s2 = sig[l] * sig[l];
        x_prime.axpy(exact_lambdas[l] / s2, &dense_v[l]);
        z[l] = (exact_lambdas[l] - h.lambdas.values[l]) / s2;
        lambda_energy += exact_lambdas[l].norm_sqr() / s2;
        lambda_errors.push((exact_lambdas[l] - h.lambdas.values[l]).norm());
    }
    let gram = DenseMatrix::from_fn(k, k, |i, j| dense_v[i].dot(&dense_v[j]));
    let gram_norm = hermitian_eig(&gram)?.values[0];
    let gz = gram.mul_vec(&z)?;
    let lambda_perturbation_gram = z.dot(&gz).re.max(0.0).sqrt();

    let mut ax = DenseVector::zeros(a.rows());
    for i in 0..a.rows() {
        let mut acc = Scalar::new(0.0, 0.0);
        for (j, xj) in x_exact.iter().enumerate() {
            acc += a.entry(i, j) * xj;
        }
        ax[i] = acc;
    }

    let (tv_to_exact, tv_bound) = if hypothesis_violation || x_tilde.norm_sqr() == 0.0 {
        (f64::NAN, f64::NAN)
    } else {
        tv_euclid_check(&x_tilde, x_exact)?
    };

    Ok(ResidualReport {
        rel_residual: if hypothesis_violation {
            f64::NAN
        } else {
            x_tilde.sub(x_exact).norm() / x_norm
        },
        x_prime_error: x_prime.sub(x_exact).norm(),
        lambda_perturbation: x_tilde.sub(&x_prime).norm(),
        lambda_perturbation_gram,
        lambda_perturbation_bound: (4.0f64 / 3.0).sqrt() * z.norm(),
        gram_norm,
        lambda_energy,
        lambda_energy_bound: 4.0 * (k as f64 + epsilon),
        projection_fraction: ax.norm() / b.norm(),
        hypothesis_violation,
        lambda_errors,
        tv_to_exact,
        tv_bound,
    })
}
