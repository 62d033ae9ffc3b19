//! Trace inner-product estimation by length-square sampling.
//!
//! One draw picks `(i, j)` with probability `|A_ij|^2 / ||A||_F^2` and
//! returns `X = ||A||_F^2 B_ij / A_ij`, an unbiased estimate of
//! `tr(A^dagger B)` with `E|X|^2 = ||A||_F^2 ||B||_F^2`. Means over batches
//! of `ceil(9 / xi^2)` draws are combined by a median over
//! `ceil(6 ln(2 / eta))` batches, separately for the real and imaginary
//! parts.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::access::LsMatrix;
use crate::dense::{DenseVector, Scalar};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::spectral::ImplicitRightVector;

/// Largest relative precision handed to the sampler.
pub const MAX_XI: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Sampled,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub xi: f64,
    pub eta: f64,
}

impl EstimatorConfig {
    pub fn new(xi: f64, eta: f64) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidParameter(format!("xi must lie in (0,1), got {xi}")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0,1), got {eta}")));
        }
        Ok(Self { xi, eta })
    }

    pub fn batch_size(&self) -> u64 {
        (9.0 / (self.xi * self.xi)).ceil() as u64
    }

    pub fn num_medians(&self) -> u64 {
        (6.0 * (2.0 / self.eta).ln()).ceil() as u64
    }

    pub fn total_samples(&self) -> u64 {
        self.batch_size().saturating_mul(self.num_medians())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEstimate {
    pub value: Scalar,
    pub samples: u64,
    /// `xi ||A||_F ||B||_F`.
    pub precision: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median-of-means estimate of `tr(A^dagger B)` given entry queries to `B`.
pub fn estimate_trace_inner_product<G, F>(
    a: &LsMatrix,
    mut b_query: F,
    frob_b: f64,
    config: &EstimatorConfig,
    rng: &mut G,
) -> Result<TraceEstimate>
where
    G: Rng + ?Sized,
    F: FnMut(usize, usize) -> Scalar,
{
    let fro2 = a.frobenius_norm_sqr();
    if fro2 == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let batch = config.batch_size();
    let groups = config.num_medians() as usize;
    let mut re = Vec::with_capacity(groups);
    let mut im = Vec::with_capacity(groups);
    for _ in 0..groups {
        let mut acc = Scalar::new(0.0, 0.0);
        for _ in 0..batch {
            let i = a.sample_row(rng.random())?;
            let j = a.sample_in_row(i, rng.random())?;
            acc += b_query(i, j) * fro2 / a.entry(i, j);
        }
        let mean = acc / batch as f64;
        re.push(mean.re);
        im.push(mean.im);
    }
    Ok(TraceEstimate {
        value: Scalar::new(median(&mut re), median(&mut im)),
        samples: batch * groups as u64,
        precision: config.xi * a.frobenius_norm() * frob_b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimates {
    pub values: Vec<Scalar>,
    /// Additive target `eps sigma_l^2 ||b|| / (4 sqrt(k_hat))`.
    pub targets: Vec<f64>,
    /// Precision handed to the sampler; empty for the exact backend.
    pub xis: Vec<f64>,
    pub samples: Vec<u64>,
    pub backend: Backend,
}

impl LambdaEstimates {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LambdaRequest {
    pub epsilon: f64,
    pub eta: f64,
    pub backend: Backend,
    pub seed: u64,
    /// Replaces the derived per-lambda `xi` when set.
    pub xi_override: Option<f64>,
    /// Refuse a sampled estimate needing more draws than this.
    pub max_samples: u64,
}

/// `xi` meeting the target through `||b><v||_F <= (1 + eps) ||b||`.
pub fn lambda_xi(epsilon: f64, sigma: f64, k_hat: usize, frob_a: f64) -> f64 {
    let xi = epsilon * sigma * sigma / (4.0 * (k_hat as f64).sqrt() * (1.0 + epsilon) * frob_a);
    xi.min(MAX_XI)
}

/// `lambda_l = <v_l| A^dagger |b>` for each implicit right vector.
pub fn estimate_lambdas(
    a: &LsMatrix,
    b: &DenseVector,
    vectors: &[ImplicitRightVector<'_>],
    req: &LambdaRequest,
) -> Result<LambdaEstimates> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput);
    }
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "estimate_lambdas (b)",
            expected: a.rows(),
            found: b.len(),
        });
    }
    let k_hat = vectors.len();
    let b_norm = b.norm();
    let targets: Vec<f64> = vectors
        .iter()
        .map(|v| req.epsilon * v.sigma() * v.sigma() * b_norm / (4.0 * (k_hat as f64).sqrt()))
        .collect();
    match req.backend {
        Backend::Exact => {
            let atb = a_adjoint_times(a, b);
            let values = vectors
                .iter()
                .map(|v| {
                    let mut acc = Scalar::new(0.0, 0.0);
                    for j in 0..a.cols() {
                        acc += v.entry(j).expect("j in range").conj() * atb[j];
                    }
                    acc
                })
                .collect();
            Ok(LambdaEstimates {
                values,
                targets,
                xis: Vec::new(),
                samples: vec![0; k_hat],
                backend: Backend::Exact,
            })
        }
        Backend::Sampled => {
            let eta_l = req.eta / (2.0 * k_hat as f64);
            let frob_a = a.frobenius_norm();
            let mut values = Vec::with_capacity(k_hat);
            let mut xis = Vec::with_capacity(k_hat);
            let mut samples = Vec::with_capacity(k_hat);
            for (l, v) in vectors.iter().enumerate() {
                let xi = req.xi_override.unwrap_or_else(|| lambda_xi(req.epsilon, v.sigma(), k_hat, frob_a));
                let config = EstimatorConfig::new(xi, eta_l)?;
                if config.total_samples() > req.max_samples {
                    return Err(Error::InvalidParameter(format!(
                        "lambda {l} needs {} samples at xi = {xi:.3e}, above the budget of {}",
                        config.total_samples(),
                        req.max_samples
                    )));
                }
                let mut cache: HashMap<usize, Scalar> = HashMap::new();
                let query = |i: usize, j: usize| {
                    let vj = *cache.entry(j).or_insert_with(|| v.entry(j).expect("sampled j in range"));
                    b[i] * vj.conj()
                };
                let frob_b = (1.0 + req.epsilon) * b_norm;
                let mut rng = stream(req.seed, Purpose::Lambda, l as u64);
                let est = estimate_trace_inner_product(a, query, frob_b, &config, &mut rng)?;
                values.push(est.value);
                xis.push(xi);
                samples.push(est.samples);
            }
            Ok(LambdaEstimates {
                values,
                targets,
                xis,
                samples,
                backend: Backend::Sampled,
            })
        }
    }
}

/// `A^dagger b` by a dense pass over the stored rows.
pub(crate) fn a_adjoint_times(a: &LsMatrix, b: &DenseVector) -> Vec<Scalar> {
    let mut out = vec![Scalar::new(0.0, 0.0); a.cols()];
    for (i, bi) in b.iter().enumerate() {
        if bi.norm_sqr() == 0.0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o += a.entry(i, j).conj() * bi;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{orthonormalize_columns, DenseMatrix};
    use crate::sketch::{ColumnSketch, RowSketch};
    use crate::spectral::{svd_of_sketch, SigmaFloor};
    use rand_distr::StandardNormal;

    fn gaussian(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = stream(seed, Purpose::Instance, 0);
        DenseMatrix::from_fn(m, n, |_, _| Scalar::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
    }

    fn request(backend: Backend, seed: u64) -> LambdaRequest {
        LambdaRequest {
            epsilon: 0.9,
            eta: 0.1,
            backend,
            seed,
            xi_override: None,
            max_samples: 10_000_000,
        }
    }

    #[test]
    fn config_counts() {
        let c = EstimatorConfig::new(0.1, 0.05).unwrap();
        assert_eq!((c.batch_size(), c.num_medians()), (900, 23));
        assert!(EstimatorConfig::new(1.0, 0.1).is_err());
        assert!(EstimatorConfig::new(0.1, 0.0).is_err());
    }

    #[test]
    fn single_entry_is_exact() {
        let a = LsMatrix::from_dense(&DenseMatrix::identity(1)).unwrap();
        let config = EstimatorConfig::new(0.3, 0.2).unwrap();
        let mut rng = stream(0, Purpose::Lambda, 0);
        let est = estimate_trace_inner_product(&a, |_, _| Scalar::new(1.0, 0.0), 1.0, &config, &mut rng).unwrap();
        assert_eq!(est.value, Scalar::new(1.0, 0.0));
        let zero = estimate_trace_inner_product(&a, |_, _| Scalar::new(0.0, 0.0), 0.0, &config, &mut rng).unwrap();
        assert_eq!(zero.value, Scalar::new(0.0, 0.0));
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn band_failure_rate_is_calibrated() {
        let a_dense = gaussian(16, 16, 1);
        let a = LsMatrix::from_dense(&a_dense).unwrap();
        let b = gaussian(16, 16, 2);
        let truth: Scalar = (0..16)
            .flat_map(|i| (0..16).map(move |j| (i, j)))
            .map(|(i, j)| a_dense[(i, j)].conj() * b[(i, j)])
            .sum();
        let config = EstimatorConfig::new(0.1, 0.05).unwrap();
        let band = 0.1 * a_dense.frobenius_norm() * b.frobenius_norm();
        let runs = 200;
        let failures = (0..runs)
            .filter(|&run| {
                let mut rng = stream(run, Purpose::Lambda, 99);
                let est = estimate_trace_inner_product(&a, |i, j| b[(i, j)], b.frobenius_norm(), &config, &mut rng).unwrap();
                (est.value - truth).norm() > band
            })
            .count();
        let sd = (0.05f64 * 0.95 / runs as f64).sqrt();
        assert!((failures as f64 / runs as f64) <= 0.05 + 3.0 * sd, "{failures} failures");
    }

    #[test]
    fn orthogonal_b_gives_zero_lambdas() {
        // A occupies the first 3 rows; b lives in the last 2
        let mut dense = DenseMatrix::zeros(5, 4);
        let g = gaussian(3, 4, 3);
        for i in 0..3 {
            for j in 0..4 {
                dense[(i, j)] = g[(i, j)];
            }
        }
        let a = LsMatrix::from_dense(&dense).unwrap();
        let rows = RowSketch::from_indices(&a, vec![0, 1, 2, 0, 1]).unwrap();
        let cols = ColumnSketch::from_indices(&a, &rows, vec![0, 1, 2, 3]).unwrap();
        let sp = svd_of_sketch(&cols.c, SigmaFloor::Default { kappa: None }).unwrap();
        let b = DenseVector::from_real(&[0.0, 0.0, 0.0, 1.0, -2.0]);
        let est = estimate_lambdas(&a, &b, &sp.right_vectors(&a, &rows), &request(Backend::Exact, 0)).unwrap();
        assert!(est.values.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn diagonal_exact_sketch_lambda() {
        let a = LsMatrix::from_dense(&DenseMatrix::diagonal(&[1.0, 2.0])).unwrap();
        // multiplicities proportional to squared row norms give R^dagger R = A^dagger A
        let rows = RowSketch::from_indices(&a, vec![0, 1, 1, 1, 1]).unwrap();
        let r_dense = rows.to_dense(&a);
        assert!(r_dense.gram_cols().max_abs_diff(&DenseMatrix::diagonal(&[1.0, 4.0])) < 1e-12);
        let cols = ColumnSketch::from_indices(&a, &rows, vec![0, 1, 1, 1, 1]).unwrap();
        let sp = svd_of_sketch(&cols.c, SigmaFloor::Default { kappa: None }).unwrap();
        assert!((sp.sigmas[0] - 2.0).abs() < 1e-12);
        let b = DenseVector::basis(2, 1);
        let est = estimate_lambdas(&a, &b, &sp.right_vectors(&a, &rows), &request(Backend::Exact, 0)).unwrap();
        assert!((est.values[0].norm() - 2.0).abs() < 1e-12);
        assert!(est.values[1].norm() < 1e-12);
    }

    #[test]
    fn sampled_lambdas_meet_targets() {
        let u = orthonormalize_columns(&gaussian(20, 2, 4));
        let v = orthonormalize_columns(&gaussian(20, 2, 5));
        let us = DenseMatrix::from_fn(20, 2, |i, l| u[(i, l)] * [1.0, 0.9][l]);
        let dense = us.matmul(&v.adjoint()).unwrap();
        let a = LsMatrix::from_dense(&dense).unwrap();
        let all: Vec<usize> = (0..20).collect();
        let rows = RowSketch::from_indices(&a, all.clone()).unwrap();
        let cols = ColumnSketch::from_indices(&a, &rows, all).unwrap();
        let sp = svd_of_sketch(&cols.c, SigmaFloor::Fixed(0.3)).unwrap();
        assert_eq!(sp.rank(), 2);
        let vectors = sp.right_vectors(&a, &rows);
        let b = DenseVector::from(u.column(0).iter().zip(u.column(1).iter()).map(|(x, y)| x + y * 0.5).collect::<Vec<_>>());
        let exact = estimate_lambdas(&a, &b, &vectors, &request(Backend::Exact, 0)).unwrap();
        let trials = 100;
        let good = (0..trials)
            .filter(|&t| {
                let est = estimate_lambdas(&a, &b, &vectors, &request(Backend::Sampled, t)).unwrap();
                (0..2).all(|l| (est.values[l] - exact.values[l]).norm() <= est.targets[l])
            })
            .count();
        assert!(good as f64 >= 0.9 * trials as f64, "{good} of {trials}");
    }

    #[test]
    fn sample_budget_guard() {
        let a = LsMatrix::from_dense(&DenseMatrix::identity(3)).unwrap();
        let rows = RowSketch::from_indices(&a, vec![0, 1, 2]).unwrap();
        let cols = ColumnSketch::from_indices(&a, &rows, vec![0, 1, 2]).unwrap();
        let sp = svd_of_sketch(&cols.c, SigmaFloor::Default { kappa: None }).unwrap();
        let mut req = request(Backend::Sampled, 0);
        req.max_samples = 10;
        let err = estimate_lambdas(&a, &DenseVector::basis(3, 0), &sp.right_vectors(&a, &rows), &req);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }
}
