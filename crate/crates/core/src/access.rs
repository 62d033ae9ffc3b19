//! Length-square access: sum-tree backed vectors and matrices.
//!
//! An [`LsVector`] keeps its squared magnitudes in an implicit complete
//! binary tree (array layout, root at index 1, leaves padded to a power of
//! two with zero weight). Sampling is an inverse-CDF descent over that tree
//! and costs `O(log n)`; so does a point update.
//!
//! An [`LsMatrix`] is one `LsVector` per row plus an `LsVector` over the row
//! norms, which gives row sampling, within-row sampling, entry queries and
//! `||A||_F` in logarithmic time.

use crate::dense::{DenseMatrix, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LsVector {
    values: Vec<Scalar>,
    /// `tree[1]` is the root; leaves live at `tree[leaves..leaves + len]`.
    tree: Vec<f64>,
    leaves: usize,
}

impl LsVector {
    pub fn new(values: Vec<Scalar>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(index) = values.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFiniteEntry { index });
        }
        let leaves = values.len().next_power_of_two();
        let mut tree = vec![0.0; 2 * leaves];
        for (i, v) in values.iter().enumerate() {
            tree[leaves + i] = v.norm_sqr();
        }
        for node in (1..leaves).rev() {
            tree[node] = tree[2 * node] + tree[2 * node + 1];
        }
        Ok(Self {
            values,
            tree,
            leaves,
        })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Scalar::new(x, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `||v||^2` as held at the root of the tree.
    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    pub fn norm(&self) -> f64 {
        self.total().sqrt()
    }

    pub fn values(&self) -> &[Scalar] {
        &self.values
    }

    pub fn query(&self, i: usize) -> Result<Scalar> {
        self.values.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.len(),
        })
    }

    /// Leaf weight `|v_i|^2`.
    pub fn weight(&self, i: usize) -> f64 {
        self.tree[self.leaves + i]
    }

    pub fn tree_depth(&self) -> usize {
        self.leaves.trailing_zeros() as usize
    }

    /// Index `i` with `CDF(i-1) <= u * total < CDF(i)`; ties go right.
    pub fn sample(&self, u: f64) -> Result<usize> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::ZeroVector);
        }
        let target = u * total;
        let mut node = 1;
        let mut base = 0.0;
        while node < self.leaves {
            let left = self.tree[2 * node];
            if target < base + left {
                node *= 2;
            } else {
                base += left;
                node = 2 * node + 1;
            }
        }
        let mut index = node - self.leaves;
        // rounding in `base` can land on a zero-weight or padded leaf; fall
        // back to the nearest positive-weight leaf on the left
        if index >= self.len() || self.weight(index) == 0.0 {
            index = self.nearest_positive(index.min(self.len() - 1));
        }
        Ok(index)
    }

    fn nearest_positive(&self, from: usize) -> usize {
        (0..=from)
            .rev()
            .find(|&i| self.weight(i) > 0.0)
            .or_else(|| (from..self.len()).find(|&i| self.weight(i) > 0.0))
            .expect("total > 0 implies a positive leaf")
    }

    pub fn update(&mut self, i: usize, value: Scalar) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        if !value.is_finite() {
            return Err(Error::NonFiniteEntry { index: i });
        }
        self.values[i] = value;
        let mut node = self.leaves + i;
        self.tree[node] = value.norm_sqr();
        while node > 1 {
            node /= 2;
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
        Ok(())
    }

    /// Largest `|parent - (left + right)|` over internal nodes.
    pub fn consistency_error(&self) -> f64 {
        (1..self.leaves)
            .map(|node| (self.tree[node] - (self.tree[2 * node] + self.tree[2 * node + 1])).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsMatrix {
    rows: Vec<LsVector>,
    row_norms: LsVector,
    cols: usize,
}

impl LsMatrix {
    pub fn from_rows(rows: Vec<Vec<Scalar>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let cols = rows[0].len();
        let mut built = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "LsMatrix::from_rows",
                    expected: cols,
                    found: row.len(),
                });
            }
            built.push(LsVector::new(row)?);
        }
        let norms = built.iter().map(|r| Scalar::new(r.norm(), 0.0)).collect();
        Ok(Self {
            rows: built,
            row_norms: LsVector::new(norms)?,
            cols,
        })
    }

    pub fn from_dense(a: &DenseMatrix) -> Result<Self> {
        Self::from_rows((0..a.rows()).map(|i| a.row(i).to_vec()).collect())
    }

    /// Builds row by row from an entry function without a dense intermediate.
    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> Scalar) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::EmptyInput);
        }
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            rows.push(LsVector::new((0..n).map(|j| f(i, j)).collect())?);
        }
        let norms = rows.iter().map(|r| Scalar::new(r.norm(), 0.0)).collect();
        Ok(Self {
            rows,
            row_norms: LsVector::new(norms)?,
            cols: n,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> Result<&LsVector> {
        self.rows.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.rows(),
        })
    }

    pub fn row_norms(&self) -> &LsVector {
        &self.row_norms
    }

    /// Draws `i` with probability `||A_i.||^2 / ||A||_F^2`.
    pub fn sample_row(&self, u: f64) -> Result<usize> {
        self.row_norms.sample(u).map_err(|_| Error::ZeroMatrix)
    }

    /// Draws `j` with probability `|A_ij|^2 / ||A_i.||^2`.
    pub fn sample_in_row(&self, i: usize, u: f64) -> Result<usize> {
        self.row(i)?.sample(u)
    }

    pub fn query(&self, i: usize, j: usize) -> Result<Scalar> {
        self.row(i)?.query(j)
    }

    /// Unchecked entry access for hot loops whose indices came from the
    /// structure itself.
    #[inline]
    pub(crate) fn entry(&self, i: usize, j: usize) -> Scalar {
        self.rows[i].values[j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.row_norms.norm()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.row_norms.total()
    }

    pub fn row_norm(&self, i: usize) -> Result<f64> {
        Ok(self.row(i)?.norm())
    }

    /// Sets `A_ij` and refreshes the row-norm entry. Must not be called
    /// between sketching and solving.
    pub fn update(&mut self, i: usize, j: usize, value: Scalar) -> Result<()> {
        let len = self.rows();
        let row = self.rows.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, len })?;
        row.update(j, value)?;
        let norm = row.norm();
        self.row_norms.update(i, Scalar::new(norm, 0.0))
    }

    pub fn is_real(&self) -> bool {
        self.rows.iter().all(|r| r.values.iter().all(|z| z.im == 0.0))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows(), self.cols, |i, j| self.entry(i, j))
    }

    /// Depth of the deepest tree touched by a joint `(i, j)` draw.
    pub fn access_depth(&self) -> usize {
        self.row_norms.tree_depth() + self.rows.first().map_or(0, LsVector::tree_depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn linear_scan(weights: &[f64], total: f64, u: f64) -> usize {
        let target = u * total;
        let mut cdf = 0.0;
        for (i, w) in weights.iter().enumerate() {
            let next = cdf + w;
            if *w > 0.0 && cdf <= target && target < next {
                return i;
            }
            cdf = next;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap()
    }

    #[test]
    fn build_three_four() {
        let v = LsVector::from_real(&[3.0, 4.0]).unwrap();
        assert_eq!(v.total(), 25.0);
        assert_eq!((v.weight(0), v.weight(1)), (9.0, 16.0));
    }

    #[test]
    fn sample_only_support() {
        let v = LsVector::from_real(&[0.0, 0.0, 5.0]).unwrap();
        assert_eq!(v.total(), 25.0);
        for k in 0..100 {
            assert_eq!(v.sample(k as f64 / 100.0).unwrap(), 2);
        }
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(LsVector::new(vec![]), Err(Error::EmptyInput)));
        assert!(matches!(
            LsVector::from_real(&[1.0, f64::NAN]),
            Err(Error::NonFiniteEntry { index: 1 })
        ));
        assert!(matches!(
            LsVector::from_real(&[0.0, 0.0]).unwrap().sample(0.5),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn total_matches_compensated_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1024);
        let values: Vec<Scalar> = (0..1024)
            .map(|_| Scalar::new(rng.random::<f64>() * 10.0 - 5.0, rng.random::<f64>() - 0.5))
            .collect();
        let v = LsVector::new(values.clone()).unwrap();
        // Neumaier summation
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for z in &values {
            let x = z.norm_sqr();
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
        let oracle = sum + comp;
        assert!((v.total() - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn inverse_cdf_hand_cases() {
        let v = LsVector::from_real(&[3.0, 4.0]).unwrap();
        assert_eq!(v.sample(0.30).unwrap(), 0);
        // 0.36 * 25 = 9 exactly: the tie goes right
        assert_eq!(v.sample(0.36).unwrap(), 1);
        let e = LsVector::from_real(&[0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        for k in 0..50 {
            assert_eq!(e.sample(k as f64 / 50.0).unwrap(), 3);
        }
    }

    #[test]
    fn update_cases() {
        let mut v = LsVector::from_real(&[3.0, 4.0]).unwrap();
        v.update(0, Scalar::new(0.0, 0.0)).unwrap();
        assert_eq!(v.total(), 16.0);
        assert_eq!(v.sample(0.0).unwrap(), 1);
        assert!(matches!(v.update(2, Scalar::new(1.0, 0.0)), Err(Error::IndexOutOfRange { .. })));

        let original = LsVector::from_real(&[0.3, 1.7, 2.9, 0.1, 5.5]).unwrap();
        let mut w = original.clone();
        w.update(2, Scalar::new(-8.25, 1.5)).unwrap();
        w.update(2, Scalar::new(2.9, 0.0)).unwrap();
        assert_eq!(w, original);
    }

    #[test]
    fn many_updates_match_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut v = LsVector::from_real(&(0..300).map(|_| rng.random::<f64>()).collect::<Vec<_>>()).unwrap();
        for _ in 0..10_000 {
            let i = rng.random_range(0..300);
            v.update(i, Scalar::new(rng.random::<f64>() * 3.0, rng.random::<f64>() - 0.5)).unwrap();
        }
        let rebuilt = LsVector::new(v.values().to_vec()).unwrap();
        assert!((v.total() - rebuilt.total()).abs() <= 1e-9 * rebuilt.total());
        assert_eq!(v.consistency_error(), 0.0);
    }

    #[test]
    fn matrix_hand_probabilities() {
        let a = LsMatrix::from_dense(&DenseMatrix::diagonal(&[1.0, 2.0])).unwrap();
        assert_eq!(a.frobenius_norm_sqr(), 5.0);
        assert_eq!(a.row_norms().weight(0) / a.frobenius_norm_sqr(), 0.2);
        assert_eq!(a.sample_row(0.1999).unwrap(), 0);
        assert_eq!(a.sample_row(0.2).unwrap(), 1);
        for k in 0..20 {
            assert_eq!(a.sample_in_row(1, k as f64 / 20.0).unwrap(), 1);
        }
        assert_eq!(a.query(1, 1).unwrap(), Scalar::new(2.0, 0.0));
        assert_eq!(a.row_norm(1).unwrap(), 2.0);
        assert!(matches!(a.query(2, 0), Err(Error::IndexOutOfRange { .. })));

        let single = LsMatrix::from_rows(vec![
            vec![Scalar::new(0.0, 0.0); 3],
            vec![Scalar::new(1.0, 0.0), Scalar::new(0.0, 2.0), Scalar::new(0.0, 0.0)],
            vec![Scalar::new(0.0, 0.0); 3],
        ])
        .unwrap();
        for k in 0..40 {
            assert_eq!(single.sample_row(k as f64 / 40.0).unwrap(), 1);
        }
        let zero = LsMatrix::from_rows(vec![vec![Scalar::new(0.0, 0.0); 2]; 2]).unwrap();
        assert!(matches!(zero.sample_row(0.3), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn matrix_update_refreshes_row_norms() {
        let mut a = LsMatrix::from_dense(&DenseMatrix::diagonal(&[1.0, 2.0, 3.0])).unwrap();
        a.update(0, 2, Scalar::new(0.0, 4.0)).unwrap();
        assert!((a.row_norm(0).unwrap() - 17f64.sqrt()).abs() < 1e-15);
        assert!((a.frobenius_norm_sqr() - (17.0 + 4.0 + 9.0)).abs() < 1e-12);
        for i in 0..3 {
            let r = a.row(i).unwrap().total();
            assert!((a.row_norms().weight(i) - r).abs() <= 1e-10 * r);
        }
    }

    #[test]
    fn joint_samples_pass_chi_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let n = 32;
        let a = LsMatrix::from_fn(n, n, |_, _| Scalar::new(0.5 + rng.random::<f64>(), 0.0)).unwrap();
        let mut counts = vec![0u64; n * n];
        let draws = 100_000;
        for _ in 0..draws {
            let i = a.sample_row(rng.random()).unwrap();
            let j = a.sample_in_row(i, rng.random()).unwrap();
            counts[i * n + j] += 1;
        }
        let fro2 = a.frobenius_norm_sqr();
        let mut stat = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expected = draws as f64 * a.entry(i, j).norm_sqr() / fro2;
                let d = counts[i * n + j] as f64 - expected;
                stat += d * d / expected;
            }
        }
        let quantile = ChiSquared::new((n * n - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < quantile, "chi2 {stat} >= {quantile}");
    }

    #[test]
    fn composition_law_in_stored_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = LsMatrix::from_fn(6, 5, |_, _| Scalar::new(rng.random::<f64>() - 0.5, rng.random::<f64>())).unwrap();
        let fro2 = a.frobenius_norm_sqr();
        for i in 0..6 {
            let p_row = a.row_norms().weight(i) / fro2;
            let row = a.row(i).unwrap();
            for j in 0..5 {
                let joint = p_row * row.weight(j) / row.total();
                let want = a.entry(i, j).norm_sqr() / fro2;
                assert!((joint - want).abs() <= 1e-14 * want.max(1e-300) + 1e-300);
            }
        }
    }

    proptest! {
        #[test]
        fn sampling_matches_linear_scan(
            weights in proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], 1..=64)
        ) {
            prop_assume!(weights.iter().any(|&w| w > 0.0));
            let v = LsVector::from_real(&weights).unwrap();
            let leaf: Vec<f64> = (0..v.len()).map(|i| v.weight(i)).collect();
            for k in 0..1000 {
                let u = k as f64 / 1000.0;
                prop_assert_eq!(v.sample(u).unwrap(), linear_scan(&leaf, v.total(), u));
            }
        }

        #[test]
        fn tree_consistent_after_updates(
            init in proptest::collection::vec(-5.0f64..5.0, 1..40),
            ops in proptest::collection::vec((0usize..40, -5.0f64..5.0, -1.0f64..1.0), 0..100),
        ) {
            let mut v = LsVector::from_real(&init).unwrap();
            for (i, re, im) in ops {
                let i = i % init.len();
                v.update(i, Scalar::new(re, im)).unwrap();
            }
            prop_assert_eq!(v.consistency_error(), 0.0);
        }
    }
}
