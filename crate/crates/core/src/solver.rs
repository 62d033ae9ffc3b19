//! End-to-end low-rank solve and the two output modes.
//!
//! [`solve`] runs plan, row sketch, column sketch, the sketch spectrum and
//! the lambda estimates, then assembles `w = sum_l (lambda_l / sigma_l^3) w^(l)`.
//! The solution `x = R^dagger w` is never stored; [`SolutionHandle`] answers
//! entry queries with `r` lookups and draws length-square samples from `x`
//! by rejection.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::access::LsMatrix;
use crate::dense::{DenseVector, Scalar};
use crate::error::{Error, Result};
use crate::estimator::{estimate_lambdas, Backend, LambdaEstimates, LambdaRequest};
use crate::rng::{stream, Purpose};
use crate::sketch::{plan_sketch, sample_columns, sample_rows, ColumnSketch, PlanRequest, RowSketch, SketchPlan};
use crate::spectral::{contract_column, svd_of_sketch, ApproxSpectrum, SigmaFloor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub kappa: f64,
    pub k: usize,
    /// `Some((r, c))` for manual sketch sizes, `None` for the theoretical plan.
    pub manual: Option<(usize, usize)>,
    pub backend: Backend,
    /// Defaults to 100 times the pilot estimate of the expected rounds.
    pub rejection_cap: Option<u64>,
    pub seed: u64,
    pub sigma_floor: Option<f64>,
    /// `c0` in `||w|| <= c0 kappa^2 sqrt(k_hat) ||b||`.
    pub norm_bound_constant: f64,
    pub max_r: usize,
    pub max_c: usize,
    pub force: bool,
    pub xi_override: Option<f64>,
    pub lambda_max_samples: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            eta: 0.1,
            kappa: 1.0,
            k: 1,
            manual: None,
            backend: Backend::Exact,
            rejection_cap: None,
            seed: 0,
            sigma_floor: None,
            norm_bound_constant: 8.0,
            max_r: 5000,
            max_c: 20_000,
            force: false,
            xi_override: None,
            lambda_max_samples: 200_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub sketch_ms: f64,
    pub svd_ms: f64,
    pub lambda_ms: f64,
    pub assembly_ms: f64,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Clone, Debug)]
pub struct SolutionHandle<'a> {
    a: &'a LsMatrix,
    pub plan: SketchPlan,
    pub rows: RowSketch,
    pub column_indices: Vec<usize>,
    pub spectrum: ApproxSpectrum,
    pub lambdas: LambdaEstimates,
    pub w: DenseVector,
    pub timings: StageTimings,
    /// `sum_l |lambda_l|^2 / sigma_l^4 = w^dagger C C^dagger w`, a cheap stand-in for `||x||^2`.
    pub pilot_norm_sqr: f64,
    pub rejection_cap: u64,
    pub seed: u64,
    pub norm_bound: f64,
}

/// Everything needed to replay a handle, without timings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDescriptor {
    pub plan: SketchPlan,
    pub row_indices: Vec<usize>,
    pub column_indices: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<Scalar>,
    pub w: DenseVector,
    pub seed: u64,
    pub rejection_cap: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleDraw {
    pub index: usize,
    pub rounds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMethod {
    DenseContract,
    AcceptanceRate { rounds: u64 },
}

fn validate(a: &LsMatrix, b: &DenseVector, config: &SolverConfig) -> Result<()> {
    if a.frobenius_norm_sqr() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "solve (b)",
            expected: a.rows(),
            found: b.len(),
        });
    }
    if b.norm_sqr() == 0.0 {
        return Err(Error::ZeroVector);
    }
    if config.rejection_cap == Some(0) {
        return Err(Error::InvalidParameter("rejection_cap must be >= 1".into()));
    }
    Ok(())
}

fn make_plan(a: &LsMatrix, config: &SolverConfig) -> Result<SketchPlan> {
    let plan = plan_sketch(&PlanRequest {
        n: a.cols(),
        k: config.k,
        kappa: config.kappa,
        frob_a: a.frobenius_norm(),
        epsilon: config.epsilon,
        eta: config.eta,
        manual: config.manual,
    })?;
    if !config.force && (plan.r > config.max_r || plan.c > config.max_c) {
        return Err(Error::BudgetExceeded {
            r: plan.r,
            c: plan.c,
            max_r: config.max_r,
            max_c: config.max_c,
        });
    }
    Ok(plan)
}

/// Runs the full pipeline; deterministic in `config.seed`.
pub fn solve<'a>(a: &'a LsMatrix, b: &DenseVector, config: &SolverConfig) -> Result<SolutionHandle<'a>> {
    validate(a, b, config)?;
    let plan = make_plan(a, config)?;
    let start = Instant::now();
    let rows = sample_rows(a, &plan, &mut stream(config.seed, Purpose::Rows, 0))?;
    let cols = sample_columns(a, &rows, &plan, &mut stream(config.seed, Purpose::Columns, 0))?;
    let sketch_ms = elapsed_ms(start);
    finish(a, b, config, plan, rows, cols, sketch_ms)
}

/// Finishes the pipeline on a caller-supplied sketch.
pub fn solve_from_sketch<'a>(
    a: &'a LsMatrix,
    b: &DenseVector,
    config: &SolverConfig,
    rows: RowSketch,
    cols: ColumnSketch,
) -> Result<SolutionHandle<'a>> {
    validate(a, b, config)?;
    let config = SolverConfig {
        manual: Some((rows.r(), cols.indices.len())),
        ..config.clone()
    };
    let plan = make_plan(a, &config)?;
    finish(a, b, &config, plan, rows, cols, 0.0)
}

fn finish<'a>(
    a: &'a LsMatrix,
    b: &DenseVector,
    config: &SolverConfig,
    plan: SketchPlan,
    rows: RowSketch,
    cols: ColumnSketch,
    sketch_ms: f64,
) -> Result<SolutionHandle<'a>> {
    let start = Instant::now();
    let floor = match config.sigma_floor {
        Some(f) => SigmaFloor::Fixed(f),
        None => SigmaFloor::Default {
            kappa: Some(config.kappa),
        },
    };
    let spectrum = svd_of_sketch(&cols.c, floor)?;
    let svd_ms = elapsed_ms(start);

    let start = Instant::now();
    let lambdas = {
        let vectors = spectrum.right_vectors(a, &rows);
        estimate_lambdas(
            a,
            b,
            &vectors,
            &LambdaRequest {
                epsilon: config.epsilon,
                eta: config.eta,
                backend: config.backend,
                seed: config.seed,
                xi_override: config.xi_override,
                max_samples: config.lambda_max_samples,
            },
        )?
    };
    let lambda_ms = elapsed_ms(start);

    let start = Instant::now();
    let mut w = DenseVector::zeros(rows.r());
    let mut pilot_norm_sqr = 0.0;
    for (l, (&lambda, &sigma)) in lambdas.values.iter().zip(&spectrum.sigmas).enumerate() {
        w.axpy(lambda / sigma.powi(3), &spectrum.left_vector(l));
        pilot_norm_sqr += lambda.norm_sqr() / sigma.powi(4);
    }
    let k_hat = spectrum.rank();
    let norm_bound = config.norm_bound_constant * config.kappa * config.kappa * (k_hat as f64).sqrt() * b.norm();
    let w_norm = w.norm();
    if w_norm > norm_bound {
        return Err(Error::NormBoundViolated {
            norm: w_norm,
            bound: norm_bound,
        });
    }
    let rejection_cap = config.rejection_cap.unwrap_or_else(|| {
        if pilot_norm_sqr > 0.0 {
            let expected = w.norm_sqr() * a.frobenius_norm_sqr() / pilot_norm_sqr;
            100u64.saturating_mul(expected.ceil().min(u64::MAX as f64 / 100.0) as u64)
        } else {
            1
        }
    });
    let assembly_ms = elapsed_ms(start);

    Ok(SolutionHandle {
        a,
        plan,
        rows,
        column_indices: cols.indices,
        spectrum,
        lambdas,
        w,
        timings: StageTimings {
            sketch_ms,
            svd_ms,
            lambda_ms,
            assembly_ms,
        },
        pilot_norm_sqr,
        rejection_cap,
        seed: config.seed,
        norm_bound,
    })
}

impl<'a> SolutionHandle<'a> {
    pub fn source(&self) -> &'a LsMatrix {
        self.a
    }

    pub fn len(&self) -> usize {
        self.a.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `x_j = (R^dagger w)_j`, with `r` queries.
    pub fn query_entry(&self, j: usize) -> Result<Scalar> {
        if j >= self.len() {
            return Err(Error::IndexOutOfRange { index: j, len: self.len() });
        }
        Ok(contract_column(self.a, &self.rows, self.w.as_slice(), j))
    }

    pub fn materialize(&self) -> DenseVector {
        DenseVector::from(
            (0..self.len())
                .map(|j| contract_column(self.a, &self.rows, self.w.as_slice(), j))
                .collect::<Vec<_>>(),
        )
    }

    /// `||w||^2 ||A||_F^2 / ||x||^2`, the mean number of rejection rounds.
    pub fn expected_rounds(&self) -> f64 {
        self.w.norm_sqr() * self.a.frobenius_norm_sqr() / self.materialize().norm_sqr()
    }

    pub fn sampler(&self) -> Sampler<'_, 'a> {
        Sampler {
            handle: self,
            cache: HashMap::new(),
        }
    }

    /// One length-square sample from `x`.
    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> Result<SampleDraw> {
        self.sampler().draw(rng)
    }

    pub fn solution_norm<G: Rng + ?Sized>(&self, method: NormMethod, rng: &mut G) -> Result<f64> {
        match method {
            NormMethod::DenseContract => Ok(self.materialize().norm()),
            NormMethod::AcceptanceRate { rounds } => {
                if self.w.norm_sqr() == 0.0 {
                    return Ok(0.0);
                }
                let mut sampler = self.sampler();
                let mut accepted = 0u64;
                for _ in 0..rounds {
                    if sampler.round(rng)?.is_some() {
                        accepted += 1;
                    }
                }
                let rate = accepted as f64 / rounds.max(1) as f64;
                Ok((self.w.norm_sqr() * self.a.frobenius_norm_sqr() * rate).sqrt())
            }
        }
    }

    pub fn descriptor(&self) -> SolutionDescriptor {
        SolutionDescriptor {
            plan: self.plan.clone(),
            row_indices: self.rows.indices.clone(),
            column_indices: self.column_indices.clone(),
            sigmas: self.spectrum.sigmas.clone(),
            lambdas: self.lambdas.values.clone(),
            w: self.w.clone(),
            seed: self.seed,
            rejection_cap: self.rejection_cap,
        }
    }
}

/// Rejection sampler with a per-column cache of `(|y_j|^2, ||R_.j||^2)`.
pub struct Sampler<'h, 'a> {
    handle: &'h SolutionHandle<'a>,
    cache: HashMap<usize, (f64, f64)>,
}

impl Sampler<'_, '_> {
    fn column_stats(&mut self, j: usize) -> (f64, f64) {
        let h = self.handle;
        *self.cache.entry(j).or_insert_with(|| {
            let mut y = Scalar::new(0.0, 0.0);
            let mut norm_sqr = 0.0;
            for (s, ws) in h.w.iter().enumerate() {
                let rsj = h.rows.entry(h.a, s, j);
                y += rsj.conj() * ws;
                norm_sqr += rsj.norm_sqr();
            }
            (y.norm_sqr(), norm_sqr)
        })
    }

    /// One proposal and acceptance test.
    pub fn round<G: Rng + ?Sized>(&mut self, rng: &mut G) -> Result<Option<usize>> {
        let h = self.handle;
        let s = rng.random_range(0..h.rows.r());
        let j = h.a.sample_in_row(h.rows.indices[s], rng.random())?;
        let (y2, col2) = self.column_stats(j);
        let accept = y2 / (h.w.norm_sqr() * col2);
        Ok((rng.random::<f64>() < accept).then_some(j))
    }

    pub fn draw<G: Rng + ?Sized>(&mut self, rng: &mut G) -> Result<SampleDraw> {
        if self.handle.w.norm_sqr() == 0.0 {
            return Err(Error::ZeroSolution);
        }
        let cap = self.handle.rejection_cap;
        for rounds in 1..=cap {
            if let Some(index) = self.round(rng)? {
                return Ok(SampleDraw { index, rounds });
            }
        }
        Err(Error::RejectionCapExceeded { cap })
    }
}
