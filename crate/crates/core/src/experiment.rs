//! Solve and sweep drivers behind the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::access::LsMatrix;
use crate::dense::{operator_norm, power_norm_estimate, pseudoinverse_apply, DenseMatrix, DenseVector, SVD_ZERO_TOL};
use crate::error::Error;
use crate::formats::{read_lsm, read_vec};
use crate::instance::{generate_instance, Flavor, Instance, InstanceSpec};
use crate::oracle::{
    check_size, empirical_tv_slack, enumerate_rejection_distribution, exact_ls_distribution, residual_report,
    tv_distance, PreconditionReport, ProbabilityVector,
};
use crate::report::{
    EmpiricalTv, EntryQuery, InstanceSource, LambdaSummary, RunReport, RunRequest, SampleSummary, Seeds,
    SpectrumSummary, Timings, Verification,
};
use crate::rng::{stream, Purpose};
use crate::sketch::ColumnSketch;
use crate::solver::{solve, SolutionHandle, SolverConfig};
use crate::spectral::conversion_diagnostics;

/// Largest dimension for which `--verify` runs the dense conversion diagnostics.
pub const DIAGNOSTICS_MAX_DIM: usize = 256;
/// Failure probability behind the empirical TV slack.
pub const TV_SLACK_DELTA: f64 = 1e-3;

#[derive(Debug)]
pub enum HarnessError {
    Usage(String),
    Solver(Error),
    Verification { report: Box<RunReport>, failures: Vec<String> },
    SweepCheck { outcome: Box<SweepOutcome>, failures: Vec<String> },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Solver(_) => 2,
            HarnessError::Verification { .. } | HarnessError::SweepCheck { .. } => 3,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Usage(msg) => write!(f, "usage error: {msg}"),
            HarnessError::Solver(e) => write!(f, "solver error: {e}"),
            HarnessError::Verification { failures, .. } | HarnessError::SweepCheck { failures, .. } => {
                write!(f, "verification failed: {}", failures.join("; "))
            }
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSpec(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => HarnessError::Usage(e.to_string()),
            other => HarnessError::Solver(other),
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

/// A matrix and right-hand side, with whatever ground truth is cheap to keep.
pub enum Problem {
    Generated(Instance),
    Loaded { a: LsMatrix, b: DenseVector, dense: DenseMatrix },
}

impl Problem {
    pub fn load(source: &InstanceSource) -> HarnessResult<Self> {
        match source {
            InstanceSource::Generated { spec } => Ok(Problem::Generated(generate_instance(spec)?)),
            InstanceSource::Loaded { matrix, rhs } => {
                let dense = read_lsm(matrix)?;
                let b = read_vec(rhs)?;
                if b.len() != dense.rows() {
                    return Err(HarnessError::Usage(format!(
                        "b has length {} but A has {} rows",
                        b.len(),
                        dense.rows()
                    )));
                }
                let a = LsMatrix::from_dense(&dense)?;
                Ok(Problem::Loaded { a, b, dense })
            }
        }
    }

    pub fn a(&self) -> &LsMatrix {
        match self {
            Problem::Generated(inst) => &inst.a,
            Problem::Loaded { a, .. } => a,
        }
    }

    pub fn b(&self) -> &DenseVector {
        match self {
            Problem::Generated(inst) => &inst.b,
            Problem::Loaded { b, .. } => b,
        }
    }

    pub fn dense(&self) -> DenseMatrix {
        match self {
            Problem::Generated(inst) => inst.dense_matrix(),
            Problem::Loaded { dense, .. } => dense.clone(),
        }
    }

    /// `A^+ b`.
    pub fn exact_solution(&self) -> crate::Result<DenseVector> {
        match self {
            Problem::Generated(inst) => inst.exact_solution(),
            Problem::Loaded { a, b, dense } => pseudoinverse_apply(dense, b, SVD_ZERO_TOL * a.frobenius_norm()),
        }
    }

    pub fn spectral_norm(&self) -> crate::Result<f64> {
        if let Problem::Generated(Instance { factors: Some(f), .. }) = self {
            return Ok(f.sigma[0]);
        }
        let dense = self.dense();
        if dense.rows().max(dense.cols()) <= DIAGNOSTICS_MAX_DIM {
            operator_norm(&dense)
        } else {
            Ok(power_norm_estimate(&dense, 500, 1e-12))
        }
    }

    fn instance_seed(&self) -> Option<u64> {
        match self {
            Problem::Generated(inst) => Some(inst.spec.seed),
            Problem::Loaded { .. } => None,
        }
    }
}

pub fn run_solve(req: &RunRequest) -> HarnessResult<RunReport> {
    let problem = Problem::load(&req.instance)?;
    run_on(&problem, req)
}

/// Runs a request against an already loaded problem.
pub fn run_on(problem: &Problem, req: &RunRequest) -> HarnessResult<RunReport> {
    let a = problem.a();
    let n = a.cols();
    if let Some(&bad) = req.queries.iter().find(|&&q| q == 0 || q > n) {
        return Err(HarnessError::Usage(format!("query index {bad} outside 1..={n}")));
    }
    let h = solve(a, problem.b(), &req.config)?;
    let queries = req
        .queries
        .iter()
        .map(|&q| Ok(EntryQuery { index: q, value: h.query_entry(q - 1)? }))
        .collect::<crate::Result<Vec<_>>>()?;

    let start = Instant::now();
    let draws = draw_samples(&h, req.samples, req.config.seed)?;
    let sample_ms = start.elapsed().as_secs_f64() * 1e3;
    let samples = (req.samples > 0).then(|| SampleSummary {
        indices: draws.iter().map(|d| d.0 + 1).collect(),
        rounds_mean: draws.iter().map(|d| d.1 as f64).sum::<f64>() / draws.len() as f64,
        rounds_max: draws.iter().map(|d| d.1).max().unwrap_or(0),
        expected_rounds: h.expected_rounds(),
    });

    let mut report = RunReport {
        request: req.clone(),
        m: a.rows(),
        n,
        frobenius_norm: a.frobenius_norm(),
        plan: h.plan.clone(),
        row_indices: h.rows.indices.iter().map(|i| i + 1).collect(),
        column_indices: h.column_indices.iter().map(|j| j + 1).collect(),
        spectrum: SpectrumSummary {
            rank: h.spectrum.rank(),
            floor: h.spectrum.floor,
            sigmas: h.spectrum.sigmas.clone(),
            all_sigmas: h.spectrum.all_sigmas.clone(),
        },
        lambdas: LambdaSummary {
            backend: h.lambdas.backend,
            values: h.lambdas.values.clone(),
            targets: h.lambdas.targets.clone(),
            xis: h.lambdas.xis.clone(),
            samples: h.lambdas.samples.clone(),
        },
        w_norm: h.w.norm(),
        norm_bound: h.norm_bound,
        pilot_norm_sqr: h.pilot_norm_sqr,
        rejection_cap: h.rejection_cap,
        queries,
        samples,
        verification: None,
        timings: req.timings.then_some(Timings {
            sketch_ms: h.timings.sketch_ms,
            svd_ms: h.timings.svd_ms,
            lambda_ms: h.timings.lambda_ms,
            assembly_ms: h.timings.assembly_ms,
            sample_ms,
        }),
        seeds: Seeds {
            solver: req.config.seed,
            instance: problem.instance_seed(),
        },
    };

    if req.verify {
        let indices: Vec<usize> = draws.iter().map(|d| d.0).collect();
        let verification = verify_handle(problem, &h, &req.config, &indices)?;
        let failures = verification.failures.clone();
        report.verification = Some(verification);
        if !failures.is_empty() {
            return Err(HarnessError::Verification {
                report: Box::new(report),
                failures,
            });
        }
    }
    Ok(report)
}

/// `(index, rounds)` pairs from the sample stream of `seed`.
pub fn draw_samples(h: &SolutionHandle<'_>, count: u64, seed: u64) -> crate::Result<Vec<(usize, u64)>> {
    let mut rng = stream(seed, Purpose::Samples, 0);
    let mut sampler = h.sampler();
    (0..count)
        .map(|_| sampler.draw(&mut rng).map(|d| (d.index, d.rounds)))
        .collect()
}

fn counts_law(indices: &[usize], n: usize) -> crate::Result<ProbabilityVector> {
    let mut counts = vec![0u64; n];
    for &j in indices {
        counts[j] += 1;
    }
    ProbabilityVector::from_counts(&counts)
}

/// Oracle checks for one solved handle. `samples` are 0-based draws.
pub fn verify_handle(
    problem: &Problem,
    h: &SolutionHandle<'_>,
    config: &SolverConfig,
    samples: &[usize],
) -> HarnessResult<Verification> {
    let a = problem.a();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    let mut failures = Vec::new();

    let preconditions = PreconditionReport::from_norm(problem.spectral_norm()?);
    if !preconditions.norm_at_most_one {
        warnings.push(format!("||A|| = {} exceeds 1", preconditions.spectral_norm));
    }

    if let Err(e) = check_size(a.rows(), a.cols(), h.rows.r()) {
        skipped.push(format!("oracle: {e}"));
        return Ok(Verification {
            residual: None,
            preconditions,
            diagnostics: None,
            rejection_law_tv: None,
            empirical_tv: None,
            skipped,
            warnings,
            failures,
            passed: true,
        });
    }

    let x_exact = problem.exact_solution()?;
    let residual = residual_report(a, problem.b(), h, &x_exact, config.epsilon)?;
    if residual.hypothesis_violation {
        warnings.push("A^+ b = 0: b has no component in the column space of A".into());
    } else if residual.rel_residual > config.epsilon {
        failures.push(format!(
            "relative residual {} exceeds epsilon {}",
            residual.rel_residual, config.epsilon
        ));
    }
    if (residual.lambda_perturbation - residual.lambda_perturbation_gram).abs() > 1e-9 {
        failures.push(format!(
            "||x~ - x'|| = {} but sqrt(z^dagger V^dagger V z) = {}",
            residual.lambda_perturbation, residual.lambda_perturbation_gram
        ));
    }
    if residual.gram_norm <= 4.0 / 3.0 && residual.lambda_perturbation > residual.lambda_perturbation_bound + 1e-9 {
        failures.push(format!(
            "||x~ - x'|| = {} exceeds sqrt(4/3) ||z|| = {}",
            residual.lambda_perturbation, residual.lambda_perturbation_bound
        ));
    }
    if residual.lambda_energy > residual.lambda_energy_bound {
        warnings.push(format!(
            "sum |lambda|^2 / sigma^2 = {} exceeds 4 (k_hat + eps) = {}",
            residual.lambda_energy, residual.lambda_energy_bound
        ));
    }

    let dense = problem.dense();
    let x_tilde = h.materialize();
    let rejection_law_tv = if x_tilde.norm_sqr() > 0.0 {
        let law = enumerate_rejection_distribution(h, &dense)?;
        let tv = tv_distance(&law, &exact_ls_distribution(&x_tilde)?)?;
        if tv > 1e-12 {
            failures.push(format!("rejection law is {tv} from the law of x~"));
        }
        Some(tv)
    } else {
        skipped.push("rejection law: x~ = 0".into());
        None
    };

    let diagnostics = if a.rows().max(a.cols()) <= DIAGNOSTICS_MAX_DIM {
        let r_dense = h.rows.to_dense(a);
        let c = ColumnSketch::from_indices(a, &h.rows, h.column_indices.clone())?.c;
        let d = conversion_diagnostics(&dense, &r_dense, &c, &h.spectrum, config.kappa)?;
        for v in d.violations() {
            failures.push(format!("{}: {} > {}", v.name, v.lhs, v.rhs));
        }
        Some(d)
    } else {
        skipped.push(format!("conversion diagnostics: dimension above {DIAGNOSTICS_MAX_DIM}"));
        None
    };

    let empirical_tv = if !samples.is_empty() && !residual.hypothesis_violation {
        let emp = counts_law(samples, a.cols())?;
        let target = exact_ls_distribution(&x_exact)?;
        let own = exact_ls_distribution(&x_tilde)?;
        let slack = empirical_tv_slack(&own, samples.len() as u64, TV_SLACK_DELTA);
        let tv = tv_distance(&emp, &target)?;
        let tv_own = tv_distance(&emp, &own)?;
        let bound = 2.0 * residual.rel_residual + slack;
        if tv > bound {
            failures.push(format!("empirical TV {tv} exceeds 2 rel_residual + slack = {bound}"));
        }
        if tv_own > slack {
            failures.push(format!("empirical TV to the law of x~ {tv_own} exceeds slack {slack}"));
        }
        Some(EmpiricalTv {
            tv,
            bound,
            slack,
            tv_to_solution_law: tv_own,
        })
    } else {
        None
    };

    Ok(Verification {
        passed: failures.is_empty(),
        residual: Some(residual),
        preconditions,
        diagnostics,
        rejection_law_tv,
        empirical_tv,
        skipped,
        warnings,
        failures,
    })
}

/// Re-runs a saved request and checks the replay against the saved report,
/// then runs the oracle suite.
pub fn verify_saved(saved_json: &str) -> HarnessResult<RunReport> {
    let saved = crate::report::SavedReport::from_json(saved_json)?;
    let mut req = saved.request.clone();
    req.verify = true;
    let problem = Problem::load(&req.instance)?;
    let result = run_on(&problem, &req);
    let (mut report, mut failures) = match result {
        Ok(r) => (r, Vec::new()),
        Err(HarnessError::Verification { report, failures }) => (*report, failures),
        Err(e) => return Err(e),
    };
    let replayed = report.replay_fingerprint();
    let saved_value: serde_json::Value = serde_json::from_str(saved_json).map_err(Error::from)?;
    let replay_value: serde_json::Value = serde_json::from_str(&replayed).map_err(Error::from)?;
    if strip_volatile(saved_value) != strip_volatile(replay_value) {
        failures.push("replay does not reproduce the saved report".into());
        if let Some(v) = report.verification.as_mut() {
            v.failures.push("replay does not reproduce the saved report".into());
            v.passed = false;
        }
    }
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(HarnessError::Verification {
            report: Box::new(report),
            failures,
        })
    }
}

fn strip_volatile(mut v: serde_json::Value) -> serde_json::Value {
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timings");
        obj.remove("verification");
        if let Some(req) = obj.get_mut("request").and_then(|r| r.as_object_mut()) {
            req.remove("timings");
            req.remove("verify");
        }
    }
    v
}

pub const CSV_HEADER: &str = "seed,m,n,k,kappa,r,c,rel_residual,tv_distance,t_sketch_ms,t_svd_ms,t_lambda_ms,t_sample_ms,reject_rounds_mean";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRequest {
    /// Instance shape; its seed is replaced by each sweep seed.
    pub base: InstanceSpec,
    pub rs: Vec<usize>,
    pub cs: Vec<usize>,
    /// Pair `rs[i]` with `cs[i]` instead of taking the full grid.
    pub zip: bool,
    pub seeds: Vec<u64>,
    pub config: SolverConfig,
    pub samples: u64,
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub kappa: f64,
    pub r: usize,
    pub c: usize,
    pub rel_residual: Option<f64>,
    /// `TV(q(x~), q(A^+ b))`, computed exactly.
    pub tv_distance: Option<f64>,
    pub t_sketch_ms: f64,
    pub t_svd_ms: f64,
    pub t_lambda_ms: f64,
    pub t_sample_ms: f64,
    pub reject_rounds_mean: Option<f64>,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{}",
            self.seed,
            self.m,
            self.n,
            self.k,
            self.kappa,
            self.r,
            self.c,
            opt(self.rel_residual),
            opt(self.tv_distance),
            self.t_sketch_ms,
            self.t_svd_ms,
            self.t_lambda_ms,
            self.t_sample_ms,
            opt(self.reject_rounds_mean)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCheckResult {
    pub name: String,
    pub applicable: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub svd_slope: Option<f64>,
    pub checks: Vec<SweepCheckResult>,
}

impl SweepOutcome {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| c.applicable && !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }
}

fn sweep_cells(req: &SweepRequest) -> HarnessResult<Vec<(usize, usize)>> {
    if req.rs.is_empty() || req.cs.is_empty() || req.seeds.is_empty() {
        return Err(HarnessError::Usage("sweep grid is empty".into()));
    }
    if req.zip {
        if req.rs.len() != req.cs.len() {
            return Err(HarnessError::Usage(format!(
                "zipped sweep needs equally many r and c values ({} vs {})",
                req.rs.len(),
                req.cs.len()
            )));
        }
        Ok(req.rs.iter().copied().zip(req.cs.iter().copied()).collect())
    } else {
        Ok(req.rs.iter().flat_map(|&r| req.cs.iter().map(move |&c| (r, c))).collect())
    }
}

pub fn run_sweep(req: &SweepRequest) -> HarnessResult<SweepOutcome> {
    let cells = sweep_cells(req)?;
    if req.jobs == 0 {
        return Err(HarnessError::Usage("--jobs must be positive".into()));
    }
    let mut rows = Vec::with_capacity(cells.len() * req.seeds.len());
    for &seed in &req.seeds {
        let spec = InstanceSpec { seed, ..req.base.clone() };
        let inst = generate_instance(&spec)?;
        let exact = if spec.flavor == Flavor::SyntheticLowrank || check_size(spec.m, spec.n, 0).is_ok() {
            Some(inst.exact_solution()?)
        } else {
            None
        };
        rows.extend(run_cells(&inst, exact.as_ref(), &cells, seed, req)?);
    }
    let mut outcome = SweepOutcome {
        rows,
        svd_slope: None,
        checks: Vec::new(),
    };
    let (slope, slope_check) = slope_check(&outcome.rows, req.jobs);
    outcome.svd_slope = slope;
    outcome.checks.push(slope_check);
    outcome.checks.push(monotonicity_check(&outcome.rows, req.zip));
    let failures = outcome.failures();
    if failures.is_empty() {
        Ok(outcome)
    } else {
        Err(HarnessError::SweepCheck {
            outcome: Box::new(outcome),
            failures,
        })
    }
}

fn run_cells(
    inst: &Instance,
    exact: Option<&DenseVector>,
    cells: &[(usize, usize)],
    seed: u64,
    req: &SweepRequest,
) -> HarnessResult<Vec<SweepRow>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<HarnessResult<SweepRow>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..req.jobs.min(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let row = run_cell(inst, exact, cells[i], seed, req);
                results.lock().expect("worker panicked")[i] = Some(row);
            });
        }
    });
    results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

fn run_cell(
    inst: &Instance,
    exact: Option<&DenseVector>,
    (r, c): (usize, usize),
    seed: u64,
    req: &SweepRequest,
) -> HarnessResult<SweepRow> {
    let config = SolverConfig {
        manual: Some((r, c)),
        seed,
        ..req.config.clone()
    };
    let h = solve(&inst.a, &inst.b, &config)?;
    let start = Instant::now();
    let draws = draw_samples(&h, req.samples, seed)?;
    let t_sample_ms = start.elapsed().as_secs_f64() * 1e3;
    let (rel_residual, tv) = match exact {
        Some(x) if x.norm_sqr() > 0.0 => {
            let xt = h.materialize();
            let rel = xt.sub(x).norm() / x.norm();
            let tv = if xt.norm_sqr() > 0.0 {
                Some(tv_distance(&exact_ls_distribution(&xt)?, &exact_ls_distribution(x)?)?)
            } else {
                None
            };
            (Some(rel), tv)
        }
        _ => (None, None),
    };
    Ok(SweepRow {
        seed,
        m: inst.spec.m,
        n: inst.spec.n,
        k: inst.spec.k,
        kappa: inst.spec.kappa,
        r,
        c,
        rel_residual,
        tv_distance: tv,
        t_sketch_ms: h.timings.sketch_ms,
        t_svd_ms: h.timings.svd_ms,
        t_lambda_ms: h.timings.lambda_ms,
        t_sample_ms,
        reject_rounds_mean: (!draws.is_empty())
            .then(|| draws.iter().map(|d| d.1 as f64).sum::<f64>() / draws.len() as f64),
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

pub const SLOPE_RANGE: (f64, f64) = (0.8, 1.2);

/// Slope of median SVD-stage time against `r^2 c`, checked when the sizes
/// span a decade and cells ran one at a time.
fn slope_check(rows: &[SweepRow], jobs: usize) -> (Option<f64>, SweepCheckResult) {
    let mut by_size: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for row in rows {
        by_size.entry((row.r, row.c)).or_default().push(row.t_svd_ms);
    }
    let points: Vec<(f64, f64)> = by_size
        .iter()
        .map(|(&(r, c), t)| ((r * r) as f64 * c as f64, median(t).unwrap_or(0.0)))
        .collect();
    let slope = loglog_slope(&points);
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let span = hi / lo;
    let applicable = slope.is_some() && span >= 10.0 && jobs == 1;
    let passed = slope.is_some_and(|s| s >= SLOPE_RANGE.0 && s <= SLOPE_RANGE.1);
    let detail = match slope {
        Some(s) => format!("slope {s:.3} over r^2 c span {span:.1}"),
        None => "fewer than two sizes".into(),
    };
    (
        slope,
        SweepCheckResult {
            name: "svd_time_scaling".into(),
            applicable,
            passed,
            detail,
        },
    )
}

/// Median residual over seeds is non-increasing in `r` at each fixed `c`.
fn monotonicity_check(rows: &[SweepRow], zip: bool) -> SweepCheckResult {
    let mut by_c: BTreeMap<usize, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for row in rows {
        if let Some(res) = row.rel_residual {
            by_c.entry(row.c).or_default().entry(row.r).or_default().push(res);
        }
    }
    let mut applicable = false;
    let mut passed = true;
    let mut parts = Vec::new();
    for (c, by_r) in &by_c {
        if by_r.len() < 2 {
            continue;
        }
        applicable = true;
        let medians: Vec<(usize, f64)> = by_r.iter().map(|(&r, v)| (r, median(v).unwrap_or(f64::NAN))).collect();
        if medians.windows(2).any(|w| w[1].1 > w[0].1) {
            passed = false;
        }
        let list: Vec<String> = medians.iter().map(|(r, m)| format!("r={r}: {m:.4}")).collect();
        parts.push(format!("c={c} [{}]", list.join(", ")));
    }
    SweepCheckResult {
        name: "residual_monotone_in_r".into(),
        applicable: applicable && !zip,
        passed,
        detail: if parts.is_empty() {
            "no fixed-c group with two r values".into()
        } else {
            parts.join("; ")
        },
    }
}
