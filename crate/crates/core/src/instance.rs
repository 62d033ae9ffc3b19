//! Seeded test instances.
//!
//! The synthetic flavor builds `A = U diag(sigma) V^dagger` from orthonormal
//! factors (QR of Gaussian matrices) with `sigma_1 = 1`, `sigma_k = 1/kappa`
//! and the rest log-uniform in between, so `||A|| = 1` and `||A^+|| = kappa`
//! hold exactly. The portfolio flavor is a factor model of asset returns:
//! `k` latent factor series times loadings plus idiosyncratic noise, scaled
//! to unit spectral norm.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::access::LsMatrix;
use crate::dense::{orthonormalize_columns, power_norm_estimate, pseudoinverse_apply, DenseMatrix, DenseVector, Scalar};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, Stream};
use crate::spectral::default_sigma_floor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    SyntheticLowrank,
    PortfolioReturns,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub kappa: f64,
    pub projection_fraction: f64,
    pub noise: f64,
    pub seed: u64,
    pub flavor: Flavor,
    /// Complex Gaussian factors instead of real ones.
    #[serde(default)]
    pub complex: bool,
}

impl InstanceSpec {
    pub fn synthetic(m: usize, n: usize, k: usize, kappa: f64, seed: u64) -> Self {
        Self {
            m,
            n,
            k,
            kappa,
            projection_fraction: 1.0,
            noise: 0.0,
            seed,
            flavor: Flavor::SyntheticLowrank,
            complex: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return bad("m, n and k must be positive".into());
        }
        if self.k > self.m.min(self.n) {
            return bad(format!("k = {} exceeds min(m, n) = {}", self.k, self.m.min(self.n)));
        }
        if !(self.kappa >= 1.0) || !self.kappa.is_finite() {
            return bad(format!("kappa must be >= 1, got {}", self.kappa));
        }
        if !(self.projection_fraction > 0.0 && self.projection_fraction <= 1.0) {
            return bad(format!("projection_fraction must lie in (0, 1], got {}", self.projection_fraction));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if self.flavor == Flavor::SyntheticLowrank && self.noise > 0.0 {
            return bad("the synthetic flavor is exactly low rank; noise must be 0".into());
        }
        if self.projection_fraction < 1.0 && self.k == self.m {
            return bad("b cannot leave the column space when k = m".into());
        }
        Ok(())
    }
}

/// `A = U diag(sigma) V^dagger` with orthonormal `U` (`m x k`) and `V` (`n x k`).
#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl Factors {
    pub fn entry(&self, i: usize, j: usize) -> Scalar {
        let mut acc = Scalar::new(0.0, 0.0);
        for (l, s) in self.sigma.iter().enumerate() {
            acc += self.u[(i, l)] * self.v[(j, l)].conj() * *s;
        }
        acc
    }

    /// `A z` without forming `A`.
    pub fn apply(&self, z: &DenseVector) -> Result<DenseVector> {
        let mut coef = self.v.adjoint_mul_vec(z)?;
        for (l, s) in self.sigma.iter().enumerate() {
            coef[l] *= *s;
        }
        self.u.mul_vec(&coef)
    }

    /// `A^+ b = V diag(1/sigma) U^dagger b`.
    pub fn pseudoinverse_apply(&self, b: &DenseVector) -> Result<DenseVector> {
        let mut coef = self.u.adjoint_mul_vec(b)?;
        for (l, s) in self.sigma.iter().enumerate() {
            coef[l] /= *s;
        }
        self.v.mul_vec(&coef)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.u.rows(), self.v.rows(), |i, j| self.entry(i, j))
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub spec: InstanceSpec,
    pub a: LsMatrix,
    pub b: DenseVector,
    /// Exact factorization, present for the synthetic flavor.
    pub factors: Option<Factors>,
    /// Dense copy for the portfolio flavor (needed for its oracle).
    pub dense: Option<DenseMatrix>,
}

impl Instance {
    /// `A^+ b`, through the factors when they are known.
    pub fn exact_solution(&self) -> Result<DenseVector> {
        match (&self.factors, &self.dense) {
            (Some(f), _) => f.pseudoinverse_apply(&self.b),
            (None, Some(d)) => pseudoinverse_apply(d, &self.b, default_sigma_floor(1.0, Some(self.spec.kappa))),
            (None, None) => Err(Error::InvalidSpec("instance carries neither factors nor a dense copy".into())),
        }
    }

    pub fn dense_matrix(&self) -> DenseMatrix {
        match (&self.dense, &self.factors) {
            (Some(d), _) => d.clone(),
            (None, Some(f)) => f.to_dense(),
            (None, None) => self.a.to_dense(),
        }
    }
}

fn gaussian_matrix(rows: usize, cols: usize, complex: bool, rng: &mut Stream) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
        Scalar::new(re, im)
    })
}

fn gaussian_vector(n: usize, complex: bool, rng: &mut Stream) -> DenseVector {
    DenseVector::from(gaussian_matrix(n, 1, complex, rng).column(0).into_vec())
}

/// `sigma_1 = 1 >= ... >= sigma_k = 1/kappa`, interior log-uniform.
pub fn pinned_spectrum(k: usize, kappa: f64, rng: &mut Stream) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let mut sigma = vec![1.0];
    let mut interior: Vec<f64> = (0..k - 2).map(|_| (-rng.random::<f64>() * kappa.ln()).exp()).collect();
    interior.sort_by(|x, y| y.total_cmp(x));
    sigma.extend(interior);
    sigma.push(1.0 / kappa);
    sigma
}

/// Unit vector orthogonal to the columns of the orthonormal `basis`.
fn orthogonal_unit(basis: &DenseMatrix, complex: bool, rng: &mut Stream) -> Result<DenseVector> {
    for _ in 0..8 {
        let g = gaussian_vector(basis.rows(), complex, rng);
        let coef = basis.adjoint_mul_vec(&g)?;
        let q = g.sub(&basis.mul_vec(&coef)?);
        let norm = q.norm();
        if norm > 1e-8 * g.norm() {
            // one more projection pass for orthogonality to working precision
            let q = q.scaled(Scalar::new(1.0 / norm, 0.0));
            let coef = basis.adjoint_mul_vec(&q)?;
            let q = q.sub(&basis.mul_vec(&coef)?);
            let norm = q.norm();
            return Ok(q.scaled(Scalar::new(1.0 / norm, 0.0)));
        }
    }
    Err(Error::InvalidSpec("could not draw a vector outside the column space".into()))
}

fn mix_rhs(in_span: &DenseVector, out_of_span: Option<&DenseVector>, p: f64) -> DenseVector {
    let mut b = in_span.scaled(Scalar::new(p / in_span.norm(), 0.0));
    if let Some(q) = out_of_span {
        b.axpy(Scalar::new((1.0 - p * p).max(0.0).sqrt(), 0.0), q);
    }
    b
}

pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Purpose::Instance, 0);
    match spec.flavor {
        Flavor::SyntheticLowrank => synthetic(spec, &mut rng),
        Flavor::PortfolioReturns => portfolio(spec, &mut rng),
    }
}

fn synthetic(spec: &InstanceSpec, rng: &mut Stream) -> Result<Instance> {
    let u = orthonormalize_columns(&gaussian_matrix(spec.m, spec.k, spec.complex, rng));
    let v = orthonormalize_columns(&gaussian_matrix(spec.n, spec.k, spec.complex, rng));
    let sigma = pinned_spectrum(spec.k, spec.kappa, rng);
    let factors = Factors { u, sigma, v };
    let z = gaussian_vector(spec.n, spec.complex, rng);
    let az = factors.apply(&z)?;
    let q = if spec.projection_fraction < 1.0 {
        Some(orthogonal_unit(&factors.u, spec.complex, rng)?)
    } else {
        None
    };
    let b = mix_rhs(&az, q.as_ref(), spec.projection_fraction);
    let a = LsMatrix::from_fn(spec.m, spec.n, |i, j| factors.entry(i, j))?;
    Ok(Instance {
        spec: spec.clone(),
        a,
        b,
        factors: Some(factors),
        dense: None,
    })
}

fn portfolio(spec: &InstanceSpec, rng: &mut Stream) -> Result<Instance> {
    // rows are periods, columns are assets
    let factor_returns = gaussian_matrix(spec.m, spec.k, false, rng);
    let mut loadings = gaussian_matrix(spec.n, spec.k, false, rng).scaled(Scalar::new(0.3, 0.0));
    for j in 0..spec.n {
        loadings[(j, 0)] += Scalar::new(1.0, 0.0);
    }
    let mut returns = factor_returns.matmul(&loadings.adjoint())?;
    if spec.noise > 0.0 {
        let idio = gaussian_matrix(spec.m, spec.n, false, rng);
        returns = returns.add(&idio.scaled(Scalar::new(spec.noise, 0.0)))?;
    }
    let norm = power_norm_estimate(&returns, 500, 1e-13);
    let dense = returns.scaled(Scalar::new(1.0 / norm, 0.0));
    let z = gaussian_vector(spec.n, false, rng);
    let az = dense.mul_vec(&z)?;
    let q = if spec.projection_fraction < 1.0 {
        Some(orthogonal_unit(&orthonormalize_columns(&factor_returns), false, rng)?)
    } else {
        None
    };
    let b = mix_rhs(&az, q.as_ref(), spec.projection_fraction);
    Ok(Instance {
        spec: spec.clone(),
        a: LsMatrix::from_dense(&dense)?,
        b,
        factors: None,
        dense: Some(dense),
    })
}
