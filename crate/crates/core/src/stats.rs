//! Correlation matrices, the symmetric eigensolver, and the statistical
//! gates (chi-square independence, Bartlett sphericity, KMO).

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Symmetric, unit-diagonal matrix with entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    values: Array2<f64>,
}

impl CorrelationMatrix {
    /// Wraps a matrix, symmetrizing it, resetting the diagonal to one and
    /// clipping entries into `[-1, 1]`.
    pub fn from_matrix(mut values: Array2<f64>) -> Result<Self> {
        let p = values.nrows();
        if values.ncols() != p {
            return Err(Error::InvalidArgument(format!(
                "correlation matrix must be square, got {}x{}",
                p,
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        for i in 0..p {
            values[[i, i]] = 1.0;
            for j in (i + 1)..p {
                let v = (0.5 * (values[[i, j]] + values[[j, i]])).clamp(-1.0, 1.0);
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        Ok(Self { values })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            values: Array2::eye(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Applies the same permutation to rows and columns.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let v = self.values.select(Axis(0), order).select(Axis(1), order);
        Self { values: v }
    }
}

/// `R = XᵀX / n` for a standardized (mean-zero, unit population variance)
/// sample matrix.
pub fn correlation_matrix(x: &Array2<f64>) -> Result<CorrelationMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let r = x.t().dot(x) / n as f64;
    CorrelationMatrix::from_matrix(r)
}

/// Eigenvalues in descending order with matching unit eigenvectors as
/// columns. Each eigenvector's largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
    pub sweeps: usize,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `E · diag(λ) · Eᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues;
        scaled.dot(&self.eigenvectors.t())
    }

    /// `E · diag(1/λ) · Eᵀ`; fails when the smallest eigenvalue is not above
    /// `min_eigenvalue`.
    pub fn inverse(&self, min_eigenvalue: f64) -> Result<Array2<f64>> {
        let smallest = self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smallest > min_eigenvalue) {
            return Err(Error::NotApplicable(format!(
                "matrix is singular (smallest eigenvalue {smallest:e})"
            )));
        }
        let inv = self.eigenvalues.mapv(f64::recip);
        let scaled = &self.eigenvectors * &inv;
        Ok(scaled.dot(&self.eigenvectors.t()))
    }

    /// `ln det` from the eigenvalues; `None` when some eigenvalue is at or
    /// below `tol`.
    pub fn ln_det(&self, tol: f64) -> Option<f64> {
        if self.eigenvalues.iter().any(|&l| l <= tol) {
            None
        } else {
            Some(self.eigenvalues.iter().map(|l| l.ln()).sum())
        }
    }
}

pub const DEFAULT_MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let p = a.nrows();
    let mut s = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            s += a[[i, j]] * a[[i, j]];
        }
    }
    (2.0 * s).sqrt()
}

/// Cyclic Jacobi eigensolver for correlation matrices.
pub fn eigen_sym(r: &CorrelationMatrix) -> Result<EigenDecomposition> {
    eigen_sym_with(r.values(), DEFAULT_MAX_SWEEPS)
}

/// Cyclic Jacobi on any symmetric matrix. Rotations annihilate each
/// off-diagonal entry in turn until the off-diagonal Frobenius norm is at
/// most 1e-12. Negative eigenvalues (roundoff) are clamped to zero.
pub fn eigen_sym_with(matrix: &Array2<f64>, max_sweeps: usize) -> Result<EigenDecomposition> {
    let p = matrix.nrows();
    if matrix.ncols() != p {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut a = matrix.clone();
    let mut v = Array2::<f64>::eye(p);
    let mut sweeps = 0;
    while off_diagonal_norm(&a) > OFF_DIAGONAL_TOL {
        if sweeps == max_sweeps {
            return Err(Error::NumericalFailure { sweeps });
        }
        sweeps += 1;
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = a[[i, j]];
                if aij == 0.0 {
                    continue;
                }
                let theta = (a[[j, j]] - a[[i, i]]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[[i, i]] -= t * aij;
                a[[j, j]] += t * aij;
                a[[i, j]] = 0.0;
                a[[j, i]] = 0.0;
                for k in 0..p {
                    if k != i && k != j {
                        let aki = a[[k, i]];
                        let akj = a[[k, j]];
                        let ni = c * aki - s * akj;
                        let nj = s * aki + c * akj;
                        a[[k, i]] = ni;
                        a[[i, k]] = ni;
                        a[[k, j]] = nj;
                        a[[j, k]] = nj;
                    }
                    let vki = v[[k, i]];
                    let vkj = v[[k, j]];
                    v[[k, i]] = c * vki - s * vkj;
                    v[[k, j]] = s * vki + c * vkj;
                }
            }
        }
    }

    let raw: Vec<f64> = (0..p).map(|i| a[[i, i]].max(0.0)).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| raw[y].total_cmp(&raw[x]).then(x.cmp(&y)));
    let eigenvalues = Array1::from_iter(order.iter().map(|&k| raw[k]));
    let mut eigenvectors = v.select(Axis(1), &order);
    for mut col in eigenvectors.axis_iter_mut(Axis(1)) {
        if dominant_entry(col.view()) < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}

/// Largest-magnitude entry (first one on ties).
pub(crate) fn dominant_entry(v: ArrayView1<f64>) -> f64 {
    v.iter()
        .copied()
        .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best })
}

// ---------------------------------------------------------------------------
// Chi-square distribution

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper regularized incomplete gamma function `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        (1.0 - gamma_p_series(a, x)).clamp(0.0, 1.0)
    } else {
        gamma_q_continued_fraction(a, x).clamp(0.0, 1.0)
    }
}

/// Upper-tail probability of the chi-square distribution.
pub fn chi_square_p(statistic: f64, dof: usize) -> Result<f64> {
    if dof < 1 {
        return Err(Error::InvalidArgument("chi-square dof must be >= 1".into()));
    }
    if statistic.is_nan() {
        return Err(Error::NonFinite);
    }
    if statistic == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(gamma_q(dof as f64 / 2.0, statistic / 2.0))
}

// ---------------------------------------------------------------------------
// Test results

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `p < 0.05`.
    Significant,
    NotSignificant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    #[serde(serialize_with = "ser_stat", deserialize_with = "de_stat")]
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    pub verdict: Verdict,
}

impl TestResult {
    pub fn new(statistic: f64, p_value: f64, dof: usize) -> Self {
        let verdict = if p_value < DEFAULT_ALPHA {
            Verdict::Significant
        } else {
            Verdict::NotSignificant
        };
        Self {
            statistic,
            p_value,
            dof,
            verdict,
        }
    }
}

impl fmt::Display for TestResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "statistic={:.4} dof={} p={:.4e}",
            self.statistic, self.dof, self.p_value
        )
    }
}

// JSON has no infinity; the perfectly-collinear Bartlett case is written as
// the string "inf".
fn ser_stat<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_stat<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Stat {
        Num(f64),
        Text(String),
    }
    match Stat::deserialize(d)? {
        Stat::Num(v) => Ok(v),
        Stat::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Stat::Text(t) => Err(serde::de::Error::custom(format!("bad statistic {t:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Chi-square independence test

/// Pearson chi-square on a contingency table. Empty rows and columns are
/// dropped before computing the degrees of freedom.
pub fn chi_square_contingency(table: &Array2<f64>) -> Result<TestResult> {
    let row_sums = table.sum_axis(Axis(1));
    let col_sums = table.sum_axis(Axis(0));
    let rows: Vec<usize> = (0..table.nrows()).filter(|&i| row_sums[i] > 0.0).collect();
    let cols: Vec<usize> = (0..table.ncols()).filter(|&j| col_sums[j] > 0.0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Err(Error::NotTestable(format!(
            "contingency table has {} non-empty rows and {} non-empty columns",
            rows.len(),
            cols.len()
        )));
    }
    let total: f64 = row_sums.sum();
    let mut stat = 0.0;
    for &i in &rows {
        for &j in &cols {
            let expected = row_sums[i] * col_sums[j] / total;
            if expected > 0.0 {
                stat += (table[[i, j]] - expected).powi(2) / expected;
            }
        }
    }
    let dof = (rows.len() - 1) * (cols.len() - 1);
    Ok(TestResult::new(stat, chi_square_p(stat, dof)?, dof))
}

pub const DEFAULT_BINS: usize = 5;

/// Interior quantile cut points, deduplicated. A value `v` falls in bin
/// `#{edges <= v}`.
fn quantile_edges(sorted: &[f64], n_bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..n_bins).map(|i| sorted[i * n / n_bins]).collect();
    edges.dedup();
    edges
}

/// Quantile-bins a continuous feature and tests it for independence from
/// the class labels.
pub fn chi_square_feature_test(feature: &[f64], y: &[u32], n_bins: usize) -> Result<TestResult> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument("n_bins must be >= 2".into()));
    }
    if feature.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature values for {} labels",
            feature.len(),
            y.len()
        )));
    }
    if feature.len() < n_bins {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot fill {n_bins} bins",
            feature.len()
        )));
    }
    if feature.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut sorted = feature.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.first() == sorted.last() {
        return Err(Error::NotTestable("feature has a single distinct value".into()));
    }
    let edges = quantile_edges(&sorted, n_bins);
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut table = Array2::<f64>::zeros((edges.len() + 1, classes.len()));
    for (&v, c) in feature.iter().zip(y) {
        let bin = edges.partition_point(|&e| e <= v);
        let col = classes.binary_search(c).expect("class present");
        table[[bin, col]] += 1.0;
    }
    chi_square_contingency(&table)
}

// ---------------------------------------------------------------------------
// Bartlett and KMO

/// Eigenvalues at or below this are treated as zero when taking `ln det R`.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Bartlett's test of sphericity.
pub fn bartlett_sphericity(r: &CorrelationMatrix, n_samples: usize) -> Result<TestResult> {
    let eig = eigen_sym(r)?;
    bartlett_from_eigen(&eig, n_samples)
}

pub fn bartlett_from_eigen(eig: &EigenDecomposition, n_samples: usize) -> Result<TestResult> {
    let p = eig.dim();
    if p < 2 {
        return Err(Error::InvalidArgument(
            "Bartlett's test needs at least 2 variables".into(),
        ));
    }
    if n_samples <= p {
        return Err(Error::InvalidArgument(format!(
            "Bartlett's test needs n_samples > p ({n_samples} <= {p})"
        )));
    }
    let dof = p * (p - 1) / 2;
    let Some(ln_det) = eig.ln_det(SINGULAR_TOL) else {
        return Ok(TestResult::new(f64::INFINITY, 0.0, dof));
    };
    let factor = n_samples as f64 - 1.0 - (2.0 * p as f64 + 5.0) / 6.0;
    let stat = -factor * ln_det;
    let stat = if stat <= 0.0 { 0.0 } else { stat };
    Ok(TestResult::new(stat, chi_square_p(stat, dof)?, dof))
}

/// Smallest eigenvalue for which `R` is considered invertible by [`kmo`].
pub const KMO_MIN_EIGENVALUE: f64 = 1e-10;

/// Overall Kaiser–Meyer–Olkin sampling adequacy.
pub fn kmo(r: &CorrelationMatrix) -> Result<f64> {
    let eig = eigen_sym(r)?;
    kmo_from_eigen(r, &eig)
}

pub fn kmo_from_eigen(r: &CorrelationMatrix, eig: &EigenDecomposition) -> Result<f64> {
    let inv = eig.inverse(KMO_MIN_EIGENVALUE)?;
    let rv = r.values();
    let p = r.dim();
    let (mut r2, mut q2) = (0.0, 0.0);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            r2 += rv[[i, j]].powi(2);
            let q = -inv[[i, j]] / (inv[[i, i]] * inv[[j, j]]).sqrt();
            q2 += q * q;
        }
    }
    if r2 + q2 <= 1e-20 {
        return Err(Error::NotApplicable(
            "KMO is undefined for an identity correlation matrix".into(),
        ));
    }
    Ok(r2 / (r2 + q2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn corr(v: Array2<f64>) -> CorrelationMatrix {
        CorrelationMatrix::from_matrix(v).unwrap()
    }

    fn standardized(cols: &[&[f64]]) -> Array2<f64> {
        let n = cols[0].len();
        let mut x = Array2::zeros((n, cols.len()));
        for (j, col) in cols.iter().enumerate() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            for i in 0..n {
                x[[i, j]] = (col[i] - mean) / sd;
            }
        }
        x
    }

    #[test]
    fn correlation_of_identical_and_negated_columns() {
        let x = standardized(&[&[1.0, 4.0, 2.0, 8.0], &[1.0, 4.0, 2.0, 8.0], &[-1.0, -4.0, -2.0, -8.0]]);
        let r = correlation_matrix(&x).unwrap();
        assert!((r.values()[[0, 1]] - 1.0).abs() < 1e-12);
        assert!((r.values()[[0, 2]] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_hand_pearson() {
        let x = standardized(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]]);
        let r = correlation_matrix(&x).unwrap();
        // sqrt(3) / 2
        assert!((r.values()[[0, 1]] - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn correlation_rejects_non_finite() {
        let x = array![[1.0, f64::NAN], [0.0, 1.0]];
        assert!(matches!(correlation_matrix(&x), Err(Error::NonFinite)));
    }

    #[test]
    fn eigen_identity() {
        let e = eigen_sym(&CorrelationMatrix::identity(4)).unwrap();
        assert_eq!(e.eigenvalues.to_vec(), vec![1.0; 4]);
        assert_eq!(e.eigenvectors, Array2::<f64>::eye(4));
    }

    #[test]
    fn eigen_two_by_two() {
        let e = eigen_sym(&corr(array![[1.0, 0.6], [0.6, 1.0]])).unwrap();
        assert!((e.eigenvalues[0] - 1.6).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 0.4).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.eigenvectors[[0, 0]] - h).abs() < 1e-12);
        assert!((e.eigenvectors[[1, 0]] - h).abs() < 1e-12);
        assert!((e.eigenvectors[[0, 1]].abs() - h).abs() < 1e-12);
        assert!((e.eigenvectors[[0, 1]] + e.eigenvectors[[1, 1]]).abs() < 1e-12);
    }

    #[test]
    fn eigen_sweep_limit() {
        let m = array![[1.0, 0.5, 0.3], [0.5, 1.0, 0.2], [0.3, 0.2, 1.0]];
        assert!(matches!(
            eigen_sym_with(&m, 0),
            Err(Error::NumericalFailure { sweeps: 0 })
        ));
    }

    #[test]
    fn chi_square_p_zero_statistic() {
        for dof in 1..6 {
            assert_eq!(chi_square_p(0.0, dof).unwrap(), 1.0);
        }
        assert!(chi_square_p(1.0, 0).is_err());
    }

    #[test]
    fn ln_gamma_small_integers() {
        let facts = [1.0_f64, 1.0, 2.0, 6.0, 24.0, 120.0];
        for (k, f) in facts.iter().enumerate() {
            assert!((ln_gamma(k as f64 + 1.0) - f.ln()).abs() < 1e-13);
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn contingency_two_by_two() {
        let t = array![[10.0, 20.0], [20.0, 10.0]];
        let r = chi_square_contingency(&t).unwrap();
        assert!((r.statistic - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.dof, 1);
        assert!((r.p_value - 0.009_823).abs() < 1e-5);
    }

    #[test]
    fn feature_test_reproduces_contingency() {
        // Bin 0: 10 of class 1, 20 of class 2; bin 1: 20 of class 1, 10 of class 2.
        let mut feature = Vec::new();
        let mut y = Vec::new();
        for (value, c1, c2) in [(0.0, 10, 20), (1.0, 20, 10)] {
            feature.extend(std::iter::repeat(value).take(c1 + c2));
            y.extend(std::iter::repeat(1).take(c1));
            y.extend(std::iter::repeat(2).take(c2));
        }
        let r = chi_square_feature_test(&feature, &y, 2).unwrap();
        assert!((r.statistic - 6.666_666_666_666_667).abs() < 1e-9);
        assert_eq!(r.dof, 1);
    }

    #[test]
    fn feature_test_constant_is_not_testable() {
        let r = chi_square_feature_test(&[3.0; 10], &[1, 2, 1, 2, 1, 2, 1, 2, 1, 2], 5);
        assert!(matches!(r, Err(Error::NotTestable(_))));
    }

    #[test]
    fn bartlett_identity_and_hand_value() {
        let r = bartlett_sphericity(&CorrelationMatrix::identity(3), 50).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);

        let r = bartlett_sphericity(&corr(array![[1.0, 0.5], [0.5, 1.0]]), 101).unwrap();
        let expected = -(100.0 - 9.0 / 6.0) * 0.75_f64.ln();
        assert!((r.statistic - expected).abs() < 1e-9);
        assert!((r.statistic - 28.337).abs() < 1e-3);
        assert_eq!(r.dof, 1);
    }

    #[test]
    fn bartlett_singular_is_infinite() {
        let r = bartlett_sphericity(&corr(array![[1.0, 1.0], [1.0, 1.0]]), 20).unwrap();
        assert!(r.statistic.is_infinite());
        assert_eq!(r.p_value, 0.0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"inf\""));
        let back: TestResult = serde_json::from_str(&json).unwrap();
        assert!(back.statistic.is_infinite());
    }

    #[test]
    fn kmo_cases() {
        assert!(matches!(kmo(&CorrelationMatrix::identity(4)), Err(Error::NotApplicable(_))));
        assert!(matches!(
            kmo(&corr(array![[1.0, 1.0], [1.0, 1.0]])),
            Err(Error::NotApplicable(_))
        ));

        let mut one_factor = Array2::from_elem((6, 6), 0.7);
        one_factor.diag_mut().fill(1.0);
        assert!(kmo(&corr(one_factor)).unwrap() >= 0.6);

        let mut blocks = Array2::<f64>::eye(4);
        blocks[[0, 1]] = 0.9;
        blocks[[1, 0]] = 0.9;
        blocks[[2, 3]] = 0.9;
        blocks[[3, 2]] = 0.9;
        assert!((kmo(&corr(blocks)).unwrap() - 0.5).abs() < 1e-9);
    }
}
