//! Spectrum of the column sketch and the implicit right singular vectors.
//!
//! `svd_of_sketch` eigendecomposes `CC^dagger` and keeps the singular values
//! above a floor. Each retained left vector `w` defines a right vector
//! `v = R^dagger w / sigma` that is evaluated entry by entry through the row
//! sketch. The dense diagnostics below measure the perturbation quantities
//! `alpha`, `beta`, `gamma`, `theta` and check the inequalities that relate
//! them; they need dense `A` and are never used on the solve path.

use serde::{Deserialize, Serialize};

use crate::access::LsMatrix;
use crate::dense::{
    exact_svd, hermitian_eig, hermitian_operator_norm, operator_norm, orthonormalize_columns, DenseMatrix,
    DenseVector, Scalar,
};
use crate::error::{Error, Result};
use crate::sketch::RowSketch;

/// Slack added to every measured inequality.
pub const INEQUALITY_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxSpectrum {
    /// Retained singular values, descending.
    pub sigmas: Vec<f64>,
    /// `r x k_hat`, columns are `w^(l)`.
    pub left_vectors: DenseMatrix,
    pub floor: f64,
    /// Every singular value of `C` (up to `r` of them), before thresholding.
    pub all_sigmas: Vec<f64>,
}

impl ApproxSpectrum {
    pub fn rank(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigma_min(&self) -> f64 {
        *self.sigmas.last().expect("spectrum is never empty")
    }

    pub fn left_vector(&self, l: usize) -> DenseVector {
        self.left_vectors.column(l)
    }

    pub fn right_vectors<'a>(&self, a: &'a LsMatrix, rows: &'a RowSketch) -> Vec<ImplicitRightVector<'a>> {
        (0..self.rank())
            .map(|l| ImplicitRightVector::new(a, rows, self.left_vector(l).into_vec(), self.sigmas[l]))
            .collect()
    }
}

/// `max(1e-10 sigma_1, 0.8 sqrt(4/5) / kappa)`, or just the relative part
/// when no `kappa` is known.
pub fn default_sigma_floor(sigma_1: f64, kappa: Option<f64>) -> f64 {
    let relative = 1e-10 * sigma_1;
    match kappa {
        Some(k) => relative.max(0.8 * (0.8f64).sqrt() / k),
        None => relative,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaFloor {
    Fixed(f64),
    /// [`default_sigma_floor`] evaluated on the sketch's top singular value.
    Default { kappa: Option<f64> },
}

/// Singular values and left singular vectors of `C` through `CC^dagger`.
pub fn svd_of_sketch(c: &DenseMatrix, floor: SigmaFloor) -> Result<ApproxSpectrum> {
    if !c.is_finite() {
        return Err(Error::NonFiniteEntry { index: 0 });
    }
    let eig = hermitian_eig(&c.gram_rows())?;
    let all_sigmas: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let floor = match floor {
        SigmaFloor::Fixed(f) => f,
        SigmaFloor::Default { kappa } => default_sigma_floor(all_sigmas[0], kappa),
    };
    let kept = all_sigmas.iter().take_while(|&&s| s > floor).count();
    if kept == 0 {
        return Err(Error::RankZero { floor });
    }
    let r = c.rows();
    let left_vectors = DenseMatrix::from_fn(r, kept, |s, l| eig.vectors[(s, l)]);
    Ok(ApproxSpectrum {
        sigmas: all_sigmas[..kept].to_vec(),
        left_vectors,
        floor,
        all_sigmas,
    })
}

/// `v = R^dagger w / sigma`, evaluated lazily.
#[derive(Clone, Debug)]
pub struct ImplicitRightVector<'a> {
    a: &'a LsMatrix,
    rows: &'a RowSketch,
    coefficients: Vec<Scalar>,
    sigma: f64,
}

impl<'a> ImplicitRightVector<'a> {
    pub fn new(a: &'a LsMatrix, rows: &'a RowSketch, coefficients: Vec<Scalar>, sigma: f64) -> Self {
        debug_assert_eq!(coefficients.len(), rows.r());
        Self {
            a,
            rows,
            coefficients,
            sigma,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn coefficients(&self) -> &[Scalar] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.a.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `sum_s conj(R_sj) w_s / sigma`, with `r` queries to `A`.
    pub fn entry(&self, j: usize) -> Result<Scalar> {
        if j >= self.len() {
            return Err(Error::IndexOutOfRange { index: j, len: self.len() });
        }
        Ok(contract_column(self.a, self.rows, &self.coefficients, j) / self.sigma)
    }

    pub fn materialize(&self) -> DenseVector {
        DenseVector::from(
            (0..self.len())
                .map(|j| contract_column(self.a, self.rows, &self.coefficients, j) / self.sigma)
                .collect::<Vec<_>>(),
        )
    }
}

/// `(R^dagger w)_j`.
#[inline]
pub(crate) fn contract_column(a: &LsMatrix, rows: &RowSketch, w: &[Scalar], j: usize) -> Scalar {
    let mut acc = Scalar::new(0.0, 0.0);
    for (s, ws) in w.iter().enumerate() {
        acc += rows.entry(a, s, j).conj() * ws;
    }
    acc
}

/// `n x k_hat` matrix whose columns are `R^dagger w^(l) / sigma_l`.
pub fn right_vectors_dense(r_dense: &DenseMatrix, spectrum: &ApproxSpectrum) -> Result<DenseMatrix> {
    let mut v = r_dense.adjoint().matmul(&spectrum.left_vectors)?;
    for l in 0..spectrum.rank() {
        let col: Vec<Scalar> = v.column(l).iter().map(|z| z / spectrum.sigmas[l]).collect();
        v.set_column(l, &col);
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Preconditions met; only applicable checks are asserted.
    pub applicable: bool,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(name: &str, lhs: f64, rhs: f64, applicable: bool) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            applicable,
            holds: lhs <= rhs + INEQUALITY_TOL,
        }
    }

    pub fn failed(&self) -> bool {
        self.applicable && !self.holds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversionDiagnostics {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub projector_error: f64,
    pub r_norm: f64,
    pub sigma_min: f64,
    pub rank_a: usize,
    pub checks: Vec<InequalityCheck>,
    /// Entrywise intermediate `max |<v_i|B|v_j>|` against `2(beta kappa^2 + theta kappa^2 + alpha)`.
    /// Logged, never asserted.
    pub entrywise_slack: (f64, f64),
}

impl ConversionDiagnostics {
    pub fn violations(&self) -> Vec<&InequalityCheck> {
        self.checks.iter().filter(|c| c.failed()).collect()
    }

    pub fn all_hold(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn lemma4_applicable(&self) -> bool {
        self.checks.iter().any(|c| c.name == "lemma4_projector" && c.applicable)
    }
}

/// Dense evaluation of the conversion quantities and their inequalities.
pub fn conversion_diagnostics(
    a: &DenseMatrix,
    r_dense: &DenseMatrix,
    c: &DenseMatrix,
    spectrum: &ApproxSpectrum,
    kappa: f64,
) -> Result<ConversionDiagnostics> {
    if r_dense.cols() != a.cols() {
        return Err(Error::DimensionMismatch {
            context: "conversion_diagnostics (R columns)",
            expected: a.cols(),
            found: r_dense.cols(),
        });
    }
    if c.rows() != r_dense.rows() {
        return Err(Error::DimensionMismatch {
            context: "conversion_diagnostics (C rows)",
            expected: r_dense.rows(),
            found: c.rows(),
        });
    }
    if spectrum.left_vectors.rows() != r_dense.rows() {
        return Err(Error::DimensionMismatch {
            context: "conversion_diagnostics (left vectors)",
            expected: r_dense.rows(),
            found: spectrum.left_vectors.rows(),
        });
    }
    let k = spectrum.rank();
    let sig = &spectrum.sigmas;
    let sigma_min = spectrum.sigma_min();

    let v = right_vectors_dense(r_dense, spectrum)?;
    let gram = v.adjoint().matmul(&v)?;
    let rv = r_dense.matmul(&v)?;
    let rr_gram = rv.adjoint().matmul(&rv)?;

    let gamma = hermitian_operator_norm(&r_dense.gram_rows().sub(&c.gram_rows())?)?;
    let ata = a.gram_cols();
    let theta = hermitian_operator_norm(&ata.sub(&r_dense.gram_cols())?)?;
    let r_norm = operator_norm(r_dense)?;

    let mut alpha: f64 = 0.0;
    let mut beta: f64 = 0.0;
    // worst pair for each Lemma-2 bound, by excess lhs - rhs
    let mut gram_pair = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut rr_pair = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            let g = (gram[(i, j)] - delta).norm();
            let h = (rr_gram[(i, j)] - delta * sig[i] * sig[i]).norm();
            alpha = alpha.max(g);
            beta = beta.max(h);
            let scale = sig[i] * sig[j];
            let g_rhs = gamma / scale;
            let h_rhs = gamma * (2.0 * r_norm * r_norm + gamma) / scale;
            if g - g_rhs > gram_pair.0 {
                gram_pair = (g - g_rhs, g, g_rhs);
            }
            if h - h_rhs > rr_pair.0 {
                rr_pair = (h - h_rhs, h, h_rhs);
            }
        }
    }

    let svd_a = exact_svd(a)?;
    let rank_a = svd_a.rank();
    let basis = DenseMatrix::from_fn(a.cols(), rank_a, |i, l| svd_a.v[(i, l)]);
    let projector = basis.matmul(&basis.adjoint())?;
    let weighted = DenseMatrix::from_fn(v.rows(), k, |i, l| v[(i, l)] / (sig[l] * sig[l]));
    let approx = weighted.matmul(&v.adjoint())?.matmul(&ata)?;
    let b = approx.sub(&projector)?;
    let projector_error = operator_norm(&b)?;

    let vbv = v.adjoint().matmul(&b)?.matmul(&v)?;
    let entrywise = vbv.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);

    let kf = k as f64;
    let k2 = kappa * kappa;
    let lemma4_rhs = 8.0 * kf / 3.0 * (beta * k2 + theta * k2 + alpha);
    let lemma4_pre = alpha <= 1.0 / (4.0 * kf) && sigma_min * sigma_min >= 4.0 / (5.0 * k2) && rank_a == k;
    let followup_pre = gamma <= 1.0 / (10.0 * k2) && theta <= 1.0 / (10.0 * k2);
    let eps_star = (36.0 * kf * k2 * k2 * gamma).max(16.0 * kf * k2 * theta);

    let mut checks = vec![
        InequalityCheck::new("lemma2_gram_entry", gram_pair.1, gram_pair.2, true),
        InequalityCheck::new("lemma2_rr_entry", rr_pair.1, rr_pair.2, true),
        InequalityCheck::new("lemma2_alpha", alpha, gamma / (sigma_min * sigma_min), true),
        InequalityCheck::new(
            "lemma2_beta",
            beta,
            gamma * (2.0 * r_norm * r_norm + gamma) / (sigma_min * sigma_min),
            true,
        ),
        InequalityCheck::new("lemma4_projector", projector_error, lemma4_rhs, lemma4_pre),
        InequalityCheck::new("followup_sigma_min", 4.0 / (5.0 * k2), sigma_min * sigma_min, followup_pre),
        InequalityCheck::new("followup_alpha", alpha, 1.25 * k2 * gamma, followup_pre),
        InequalityCheck::new("followup_beta", beta, 3.0 * k2 * gamma, followup_pre),
        InequalityCheck::new("combination_half_epsilon", projector_error, eps_star / 2.0, eps_star < 1.0),
    ];
    if rank_a == k && lemma4_pre {
        let (lhs, rhs) = spec_bound_check(&b, &v)?;
        checks.push(InequalityCheck::new("lemma3_projector", lhs, rhs, true));
    }

    Ok(ConversionDiagnostics {
        alpha,
        beta,
        gamma,
        theta,
        projector_error,
        r_norm,
        sigma_min,
        rank_a,
        checks,
        entrywise_slack: (entrywise, 2.0 * (beta * k2 + theta * k2 + alpha)),
    })
}

/// Both sides of `||B|| <= ||(V^dagger V)^-1|| ||V^dagger B V||`.
pub fn spec_bound_check(b: &DenseMatrix, v: &DenseMatrix) -> Result<(f64, f64)> {
    if b.rows() != v.rows() || b.cols() != v.rows() {
        return Err(Error::DimensionMismatch {
            context: "spec_bound_check",
            expected: v.rows(),
            found: b.rows(),
        });
    }
    let b_norm = b.frobenius_norm();
    if b_norm > 0.0 {
        let q = orthonormalize_columns(v);
        let p = q.matmul(&q.adjoint())?;
        let projected = p.matmul(b)?.matmul(&p)?;
        // B is on the scale of a projector, so roundoff-sized B is not judged relatively
        let residual = b.sub(&projected)?.frobenius_norm() / b_norm.max(1.0);
        if residual > 1e-8 {
            return Err(Error::SpanViolation { residual });
        }
    }
    let lhs = operator_norm(b)?;
    let gram = v.adjoint().matmul(v)?;
    let eig = hermitian_eig(&gram)?;
    let lambda_min = *eig.values.last().expect("nonempty");
    if lambda_min <= 0.0 {
        return Err(Error::SpanViolation { residual: f64::INFINITY });
    }
    let rhs = operator_norm(&v.adjoint().matmul(b)?.matmul(v)?)? / lambda_min;
    Ok((lhs, rhs))
}
