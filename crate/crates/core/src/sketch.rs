//! Sketch planning and the two-stage length-square subsampling.
//!
//! The row sketch `R` is implicit: it stores the sampled row indices and
//! their scale factors and answers entry queries through the source
//! [`LsMatrix`]. The column sketch `C` is a dense `r x c` matrix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::access::LsMatrix;
use crate::dense::{DenseMatrix, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchMode {
    Theoretical,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchPlan {
    pub r: usize,
    pub c: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub kappa: f64,
    pub k: usize,
    pub frob_a: f64,
    pub mode: SketchMode,
    /// Unrounded line-one formulas, kept for reporting in either mode.
    pub theoretical_r: f64,
    pub theoretical_c: f64,
}

/// Inputs to [`plan_sketch`].
#[derive(Clone, Copy, Debug)]
pub struct PlanRequest {
    pub n: usize,
    pub k: usize,
    pub kappa: f64,
    pub frob_a: f64,
    pub epsilon: f64,
    pub eta: f64,
    /// `Some((r, c))` selects manual mode.
    pub manual: Option<(usize, usize)>,
}

pub fn theoretical_r(n: usize, k: usize, kappa: f64, frob_a: f64, epsilon: f64, eta: f64) -> f64 {
    let k = k as f64;
    1024.0 * (8.0 * n as f64 / eta).ln() * kappa.powi(4) * k * k * frob_a * frob_a / (epsilon * epsilon)
}

pub fn theoretical_c(r: f64, k: usize, kappa: f64, frob_a: f64, epsilon: f64, eta: f64) -> f64 {
    let k = k as f64;
    64.0 * 81.0 * (8.0 * r / eta).ln() * kappa.powi(8) * k * k * frob_a * frob_a / (epsilon * epsilon)
}

fn ceil_count(x: f64) -> usize {
    if x >= usize::MAX as f64 {
        usize::MAX
    } else {
        (x.ceil() as usize).max(1)
    }
}

pub fn plan_sketch(req: &PlanRequest) -> Result<SketchPlan> {
    let open_unit = |x: f64| x > 0.0 && x < 1.0;
    if !open_unit(req.epsilon) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0,1), got {}", req.epsilon)));
    }
    if !open_unit(req.eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0,1), got {}", req.eta)));
    }
    if !(req.kappa >= 1.0) || !req.kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {}", req.kappa)));
    }
    if req.k == 0 || req.n == 0 {
        return Err(Error::InvalidParameter("k and n must be positive".into()));
    }
    if !(req.frob_a >= 0.0) || !req.frob_a.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid Frobenius norm {}", req.frob_a)));
    }
    let tr = theoretical_r(req.n, req.k, req.kappa, req.frob_a, req.epsilon, req.eta);
    let r_theory = ceil_count(tr);
    let tc = theoretical_c(r_theory as f64, req.k, req.kappa, req.frob_a, req.epsilon, req.eta);
    let (r, c, mode) = match req.manual {
        Some((r, c)) => {
            if r == 0 || c == 0 {
                return Err(Error::InvalidParameter("manual r and c must be >= 1".into()));
            }
            (r, c, SketchMode::Manual)
        }
        None => (r_theory, ceil_count(tc), SketchMode::Theoretical),
    };
    Ok(SketchPlan {
        r,
        c,
        epsilon: req.epsilon,
        eta: req.eta,
        kappa: req.kappa,
        k: req.k,
        frob_a: req.frob_a,
        mode,
        theoretical_r: tr,
        theoretical_c: tc,
    })
}

/// Implicit `R`: row `s` is `scales[s] * A[indices[s], .]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSketch {
    pub indices: Vec<usize>,
    pub scales: Vec<f64>,
    pub frob_a: f64,
}

impl RowSketch {
    /// Rebuilds the sketch for a fixed list of row indices.
    pub fn from_indices(a: &LsMatrix, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        let frob_a = a.frobenius_norm();
        if frob_a == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let root_r = (indices.len() as f64).sqrt();
        let mut scales = Vec::with_capacity(indices.len());
        for &i in &indices {
            let norm = a.row_norm(i)?;
            if norm == 0.0 {
                return Err(Error::InvalidParameter(format!("row {i} has zero norm")));
            }
            scales.push(frob_a / (root_r * norm));
        }
        Ok(Self {
            indices,
            scales,
            frob_a,
        })
    }

    pub fn r(&self) -> usize {
        self.indices.len()
    }

    /// `||R_s.||^2`, the same for every `s`.
    pub fn row_norm_sqr(&self) -> f64 {
        self.frob_a * self.frob_a / self.r() as f64
    }

    #[inline]
    pub fn entry(&self, a: &LsMatrix, s: usize, j: usize) -> Scalar {
        a.entry(self.indices[s], j) * self.scales[s]
    }

    /// Column `R_{.j}` (length `r`), computed with `r` queries.
    pub fn column(&self, a: &LsMatrix, j: usize) -> Result<Vec<Scalar>> {
        if j >= a.cols() {
            return Err(Error::IndexOutOfRange { index: j, len: a.cols() });
        }
        Ok((0..self.r()).map(|s| self.entry(a, s, j)).collect())
    }

    pub fn to_dense(&self, a: &LsMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(self.r(), a.cols(), |s, j| self.entry(a, s, j))
    }
}

pub fn sample_rows<G: Rng + ?Sized>(a: &LsMatrix, plan: &SketchPlan, rng: &mut G) -> Result<RowSketch> {
    if a.frobenius_norm_sqr() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let mut indices = Vec::with_capacity(plan.r);
    for _ in 0..plan.r {
        indices.push(a.sample_row(rng.random())?);
    }
    RowSketch::from_indices(a, indices)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSketch {
    pub indices: Vec<usize>,
    pub c: DenseMatrix,
}

impl ColumnSketch {
    /// Builds `C` for a fixed list of column indices.
    pub fn from_indices(a: &LsMatrix, rows: &RowSketch, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        let r = rows.r();
        let scale = rows.frob_a / (indices.len() as f64).sqrt();
        let mut c = DenseMatrix::zeros(r, indices.len());
        for (t, &j) in indices.iter().enumerate() {
            let col = rows.column(a, j)?;
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroColumnNorm { column: j });
            }
            let f = scale / norm;
            for (s, z) in col.into_iter().enumerate() {
                c[(s, t)] = z * f;
            }
        }
        Ok(Self { indices, c })
    }
}

pub fn sample_columns<G: Rng + ?Sized>(
    a: &LsMatrix,
    rows: &RowSketch,
    plan: &SketchPlan,
    rng: &mut G,
) -> Result<ColumnSketch> {
    let r = rows.r();
    let mut indices = Vec::with_capacity(plan.c);
    for _ in 0..plan.c {
        let s = rng.random_range(0..r);
        indices.push(a.sample_in_row(rows.indices[s], rng.random())?);
    }
    ColumnSketch::from_indices(a, rows, indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn request(manual: Option<(usize, usize)>) -> PlanRequest {
        PlanRequest {
            n: 10_000,
            k: 1,
            kappa: 1.0,
            frob_a: 1.0,
            epsilon: 0.5,
            eta: 0.5,
            manual,
        }
    }

    fn random_ls(m: usize, n: usize, seed: u64) -> LsMatrix {
        let mut rng = stream(seed, Purpose::Instance, 0);
        LsMatrix::from_fn(m, n, |_, _| Scalar::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).unwrap()
    }

    #[test]
    fn theoretical_plan_value() {
        let plan = plan_sketch(&request(None)).unwrap();
        assert_eq!(plan.r, 49083);
        assert_eq!(plan.mode, SketchMode::Theoretical);
        let expect_c = 64.0 * 81.0 * (8.0 * 49083.0f64 / 0.5).ln() * 4.0;
        assert_eq!(plan.c, expect_c.ceil() as usize);
    }

    #[test]
    fn theoretical_formulas_scale_symbolically() {
        for &(n, k, kappa, frob, eps, eta) in &[(100, 2, 3.0, 0.7, 0.1, 0.2), (5000, 4, 5.0, 2.0, 0.3, 0.05)] {
            let r = theoretical_r(n, k, kappa, frob, eps, eta);
            let lhs = r / (8.0 * n as f64 / eta).ln();
            let rhs = 1024.0 * kappa.powi(4) * (k * k) as f64 * frob * frob / (eps * eps);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs);
            let c = theoretical_c(r, k, kappa, frob, eps, eta);
            let lhs = c / (8.0 * r / eta).ln();
            let rhs = 5184.0 * kappa.powi(8) * (k * k) as f64 * frob * frob / (eps * eps);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
    }

    #[test]
    fn manual_plan_passthrough() {
        let plan = plan_sketch(&request(Some((500, 2000)))).unwrap();
        assert_eq!((plan.r, plan.c, plan.mode), (500, 2000, SketchMode::Manual));
        assert!(plan.theoretical_r > 49082.0);
        assert!(plan_sketch(&request(Some((0, 10)))).is_err());
        let mut bad = request(None);
        bad.epsilon = 1.0;
        assert!(matches!(plan_sketch(&bad), Err(Error::InvalidParameter(_))));
        bad.epsilon = 0.5;
        bad.kappa = 0.5;
        assert!(plan_sketch(&bad).is_err());
    }

    #[test]
    fn single_nonzero_row() {
        let z = Scalar::new(0.0, 0.0);
        let a = LsMatrix::from_rows(vec![vec![z, z, z], vec![Scalar::new(1.0, 0.0), Scalar::new(0.0, 2.0), z], vec![z, z, z]]).unwrap();
        let plan = plan_sketch(&PlanRequest { manual: Some((16, 8)), ..request(None) }).unwrap();
        let rows = sample_rows(&a, &plan, &mut stream(1, Purpose::Rows, 0)).unwrap();
        assert!(rows.indices.iter().all(|&i| i == 1));
        for &s in &rows.scales {
            assert!((s - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn row_frequencies_match_length_square_law() {
        let a = LsMatrix::from_dense(&DenseMatrix::diagonal(&[1.0, 2.0])).unwrap();
        let plan = plan_sketch(&PlanRequest { manual: Some((4, 1)), ..request(None) }).unwrap();
        let mut rng = stream(3, Purpose::Rows, 0);
        let mut counts = [0f64; 2];
        let reps = 100_000;
        for _ in 0..reps {
            for i in sample_rows(&a, &plan, &mut rng).unwrap().indices {
                counts[i] += 1.0;
            }
        }
        let total = 4.0 * reps as f64;
        let expected = [total * 0.2, total * 0.8];
        let stat: f64 = (0..2).map(|i| (counts[i] - expected[i]).powi(2) / expected[i]).sum();
        assert!(stat < ChiSquared::new(1.0).unwrap().inverse_cdf(0.999), "chi2 {stat}");
    }

    #[test]
    fn rows_of_r_have_equal_norm() {
        let a = random_ls(20, 12, 9);
        let plan = plan_sketch(&PlanRequest { manual: Some((15, 30)), ..request(None) }).unwrap();
        let rows = sample_rows(&a, &plan, &mut stream(9, Purpose::Rows, 0)).unwrap();
        let r = rows.to_dense(&a);
        for s in 0..rows.r() {
            let n2: f64 = r.row(s).iter().map(|z| z.norm_sqr()).sum();
            assert!((n2 - rows.row_norm_sqr()).abs() <= 1e-12 * n2);
        }
    }

    #[test]
    fn single_row_sketch_columns_follow_row_law() {
        let a = LsMatrix::from_dense(&DenseMatrix::from_real(2, 3, &[1.0, 2.0, 2.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let rows = RowSketch::from_indices(&a, vec![0]).unwrap();
        let plan = plan_sketch(&PlanRequest { manual: Some((1, 90_000)), ..request(None) }).unwrap();
        let cols = sample_columns(&a, &rows, &plan, &mut stream(4, Purpose::Columns, 0)).unwrap();
        let mut counts = [0f64; 3];
        for &j in &cols.indices {
            counts[j] += 1.0;
        }
        let total = cols.indices.len() as f64;
        let expected = [total / 9.0, total * 4.0 / 9.0, total * 4.0 / 9.0];
        let stat: f64 = (0..3).map(|i| (counts[i] - expected[i]).powi(2) / expected[i]).sum();
        assert!(stat < ChiSquared::new(2.0).unwrap().inverse_cdf(0.999));
    }

    #[test]
    fn diagonal_column_sketch_by_hand() {
        let a = LsMatrix::from_dense(&DenseMatrix::diagonal(&[1.0, 2.0])).unwrap();
        let rows = RowSketch::from_indices(&a, vec![1; 4]).unwrap();
        let plan = plan_sketch(&PlanRequest { manual: Some((4, 6)), ..request(None) }).unwrap();
        let cols = sample_columns(&a, &rows, &plan, &mut stream(5, Purpose::Columns, 0)).unwrap();
        assert!(cols.indices.iter().all(|&j| j == 1));
        // R is 4 copies of (0, sqrt(5)/2), so each column of C is (1/2)(1,1,1,1) * sqrt(5/6)
        let want = 0.5 * (5.0f64 / 6.0).sqrt();
        for s in 0..4 {
            for t in 0..6 {
                assert!((cols.c[(s, t)] - Scalar::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn column_norms_and_frobenius() {
        let a = random_ls(30, 25, 11);
        let plan = plan_sketch(&PlanRequest { manual: Some((12, 40)), ..request(None) }).unwrap();
        let rows = sample_rows(&a, &plan, &mut stream(11, Purpose::Rows, 0)).unwrap();
        let cols = sample_columns(&a, &rows, &plan, &mut stream(11, Purpose::Columns, 0)).unwrap();
        let want = a.frobenius_norm_sqr() / 40.0;
        for t in 0..40 {
            let n2 = cols.c.column(t).norm_sqr();
            assert!((n2 - want).abs() <= 1e-10 * want);
        }
        let f2 = cols.c.frobenius_norm().powi(2);
        assert!((f2 - a.frobenius_norm_sqr()).abs() <= 1e-8 * f2);
    }

    #[test]
    fn row_sketch_is_unbiased_by_enumeration() {
        for seed in 0..4 {
            let a = random_ls(8, 6, 100 + seed);
            let dense = a.to_dense();
            let fro2 = a.frobenius_norm_sqr();
            let mut expectation = DenseMatrix::zeros(6, 6);
            for i in 0..8 {
                let p = a.row_norms().weight(i) / fro2;
                let single = RowSketch::from_indices(&a, vec![i]).unwrap().to_dense(&a);
                expectation = expectation.add(&single.gram_cols().scaled(Scalar::new(p, 0.0))).unwrap();
            }
            let truth = dense.gram_cols();
            assert!(expectation.max_abs_diff(&truth) <= 1e-12 * truth.frobenius_norm());
        }
    }

    #[test]
    fn column_sketch_is_unbiased_by_enumeration() {
        let a = random_ls(10, 7, 21);
        let rows = RowSketch::from_indices(&a, vec![3, 0, 3, 9, 5]).unwrap();
        let r_dense = rows.to_dense(&a);
        let r = rows.r();
        let mut expectation = DenseMatrix::zeros(r, r);
        let mut column_law = vec![0.0; 7];
        for s in 0..r {
            let row = a.row(rows.indices[s]).unwrap();
            for (j, law) in column_law.iter_mut().enumerate() {
                let p = row.weight(j) / row.total() / r as f64;
                *law += p;
                let single = ColumnSketch::from_indices(&a, &rows, vec![j]).unwrap().c;
                expectation = expectation.add(&single.gram_rows().scaled(Scalar::new(p, 0.0))).unwrap();
            }
        }
        let truth = r_dense.gram_rows();
        assert!(expectation.max_abs_diff(&truth) <= 1e-12 * truth.frobenius_norm());
        let fro2 = a.frobenius_norm_sqr();
        for (j, law) in column_law.iter().enumerate() {
            let want = r_dense.column(j).norm_sqr() / fro2;
            assert!((law - want).abs() <= 1e-13);
        }
    }

    #[test]
    fn zero_matrix_is_rejected() {
        let a = LsMatrix::from_dense(&DenseMatrix::zeros(3, 3)).unwrap();
        let plan = plan_sketch(&PlanRequest { manual: Some((2, 2)), ..request(None) }).unwrap();
        assert!(matches!(sample_rows(&a, &plan, &mut stream(0, Purpose::Rows, 0)), Err(Error::ZeroMatrix)));
    }
}
