//! JSON run reports.
//!
//! All indices in a report are 1-based, matching the `.lsm` and `.vec`
//! formats. Complex numbers serialize as `[re, im]`. Wall-clock timings are
//! only present when requested, so two runs with the same seeds produce
//! byte-identical reports.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dense::Scalar;
use crate::estimator::Backend;
use crate::instance::InstanceSpec;
use crate::oracle::{PreconditionReport, ResidualReport};
use crate::sketch::SketchPlan;
use crate::solver::SolverConfig;
use crate::spectral::ConversionDiagnostics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    Generated { spec: InstanceSpec },
    Loaded { matrix: PathBuf, rhs: PathBuf },
}

/// The inputs of a run; enough to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub instance: InstanceSource,
    pub config: SolverConfig,
    /// 1-based entry indices to query.
    pub queries: Vec<usize>,
    pub samples: u64,
    pub verify: bool,
    pub timings: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumSummary {
    pub rank: usize,
    pub floor: f64,
    pub sigmas: Vec<f64>,
    /// Singular values of `C` before thresholding.
    pub all_sigmas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaSummary {
    pub backend: Backend,
    pub values: Vec<Scalar>,
    pub targets: Vec<f64>,
    pub xis: Vec<f64>,
    pub samples: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryQuery {
    pub index: usize,
    pub value: Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleSummary {
    pub indices: Vec<usize>,
    pub rounds_mean: f64,
    pub rounds_max: u64,
    /// `||w||^2 ||A||_F^2 / ||x~||^2`.
    pub expected_rounds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalTv {
    pub tv: f64,
    /// `2 rel_residual + slack`.
    pub bound: f64,
    pub slack: f64,
    /// TV against the law of `x~` itself, with the same slack.
    pub tv_to_solution_law: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verification {
    /// `None` when the instance exceeds the oracle size gate.
    pub residual: Option<ResidualReport>,
    pub preconditions: PreconditionReport,
    /// Dense conversion diagnostics, small instances only.
    pub diagnostics: Option<ConversionDiagnostics>,
    /// TV between the enumerated sampler law and the law of `x~`.
    pub rejection_law_tv: Option<f64>,
    pub empirical_tv: Option<EmpiricalTv>,
    pub skipped: Vec<String>,
    pub warnings: Vec<String>,
    pub failures: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timings {
    pub sketch_ms: f64,
    pub svd_ms: f64,
    pub lambda_ms: f64,
    pub assembly_ms: f64,
    pub sample_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Seeds {
    pub solver: u64,
    pub instance: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub request: RunRequest,
    pub m: usize,
    pub n: usize,
    pub frobenius_norm: f64,
    pub plan: SketchPlan,
    pub row_indices: Vec<usize>,
    pub column_indices: Vec<usize>,
    pub spectrum: SpectrumSummary,
    pub lambdas: LambdaSummary,
    pub w_norm: f64,
    pub norm_bound: f64,
    pub pilot_norm_sqr: f64,
    pub rejection_cap: u64,
    pub queries: Vec<EntryQuery>,
    pub samples: Option<SampleSummary>,
    pub verification: Option<Verification>,
    pub timings: Option<Timings>,
    pub seeds: Seeds,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The report without timings or verification, for replay comparison.
    pub fn replay_fingerprint(&self) -> String {
        let mut stripped = self.clone();
        stripped.timings = None;
        stripped.verification = None;
        stripped.request.timings = false;
        stripped.request.verify = false;
        stripped.to_json()
    }
}

/// The replayable part of a saved report.
#[derive(Clone, Debug, Deserialize)]
pub struct SavedReport {
    pub request: RunRequest,
}

impl SavedReport {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
