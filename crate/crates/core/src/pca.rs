//! PCA loading matrices, cumulative-variance component selection, and the
//! two loading-score rankings.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::EigenDecomposition;

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.85;
pub const DEFAULT_TOP_K: usize = 20;

/// `a_ij = sqrt(λ_j) · e_ij`, features by components.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
    pub eigenvalues: Array1<f64>,
}

impl LoadingMatrix {
    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn component_count_total(&self) -> usize {
        self.values.ncols()
    }
}

pub fn pca_loadings(eig: &EigenDecomposition, feature_names: &[String]) -> Result<LoadingMatrix> {
    if feature_names.len() != eig.dim() {
        return Err(Error::FeatureMismatch {
            expected: eig.dim(),
            found: feature_names.len(),
        });
    }
    let scale = eig.eigenvalues.mapv(f64::sqrt);
    Ok(LoadingMatrix {
        values: &eig.eigenvectors * &scale,
        feature_names: feature_names.to_vec(),
        eigenvalues: eig.eigenvalues.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSelection {
    pub count: usize,
    pub cumulative_variance: f64,
    pub threshold: f64,
}

/// Smallest `k` whose leading eigenvalues explain at least `threshold` of
/// the total variance. The total is `Σ λ`, which equals `p` for a
/// correlation matrix.
pub fn select_components(eigenvalues: &[f64], threshold: f64) -> Result<ComponentSelection> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance threshold must lie in (0, 1], got {threshold}"
        )));
    }
    if eigenvalues.is_empty() {
        return Err(Error::InvalidArgument("no eigenvalues".into()));
    }
    if eigenvalues.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument(
            "eigenvalues must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("eigenvalues sum to zero".into()));
    }
    // A relative slack keeps exact boundary cases (3.4 / 4 against 0.85)
    // from failing on the last bit.
    let target = threshold * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut count = eigenvalues.len();
    for (k, &l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc >= target {
            count = k + 1;
            break;
        }
    }
    let explained: f64 = eigenvalues[..count].iter().sum();
    Ok(ComponentSelection {
        count,
        cumulative_variance: (explained / total).min(1.0),
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RankingMethod {
    /// Sum of absolute loadings over the selected components.
    #[serde(rename = "pca-abs")]
    PcaAbs,
    /// Sum of squared loadings over the selected components.
    #[serde(rename = "pca-square")]
    PcaSquare,
    /// Factor priority: `|loading| + (m - j + 1)`.
    #[serde(rename = "fa")]
    FaPriority,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "custom")]
    Custom,
}

impl RankingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RankingMethod::PcaAbs => "pca-abs",
            RankingMethod::PcaSquare => "pca-square",
            RankingMethod::FaPriority => "fa",
            RankingMethod::Random => "random",
            RankingMethod::Custom => "custom",
        }
    }
}

impl fmt::Display for RankingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca-abs" => Ok(RankingMethod::PcaAbs),
            "pca-square" => Ok(RankingMethod::PcaSquare),
            "fa" => Ok(RankingMethod::FaPriority),
            "random" => Ok(RankingMethod::Random),
            "custom" => Ok(RankingMethod::Custom),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Features in descending score order. `order[r]` is the column index of
/// the feature at rank `r + 1`; `scores[r]` is its score.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    pub method: RankingMethod,
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
    pub feature_names: Vec<String>,
}

/// One row of a serialized ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub feature: String,
    pub score: f64,
}

impl FeatureRanking {
    /// Builds a ranking from per-feature scores. `candidates` restricts the
    /// ranking to a subset of columns (all columns when `None`). Ties go to
    /// the smaller column index.
    pub fn from_scores(
        method: RankingMethod,
        scores: &[f64],
        candidates: Option<&[usize]>,
        feature_names: &[String],
    ) -> Self {
        let mut order: Vec<usize> = match candidates {
            Some(c) => c.to_vec(),
            None => (0..scores.len()).collect(),
        };
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Self {
            method,
            scores: order.iter().map(|&i| scores[i]).collect(),
            order,
            feature_names: feature_names.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Feature names in rank order.
    pub fn ranked_names(&self) -> Vec<&str> {
        self.order
            .iter()
            .map(|&i| self.feature_names[i].as_str())
            .collect()
    }

    pub fn entries(&self) -> Vec<RankEntry> {
        self.order
            .iter()
            .zip(&self.scores)
            .enumerate()
            .map(|(r, (&i, &score))| RankEntry {
                rank: r + 1,
                feature: self.feature_names[i].clone(),
                score,
            })
            .collect()
    }

    /// Rebuilds a ranking from serialized entries against a known feature
    /// list. Entries are taken in `rank` order.
    pub fn from_entries(
        method: RankingMethod,
        entries: &[RankEntry],
        feature_names: &[String],
    ) -> Result<Self> {
        let mut sorted: Vec<&RankEntry> = entries.iter().collect();
        sorted.sort_by_key(|e| e.rank);
        let mut order = Vec::with_capacity(sorted.len());
        let mut scores = Vec::with_capacity(sorted.len());
        for e in sorted {
            let idx = feature_names
                .iter()
                .position(|f| *f == e.feature)
                .ok_or_else(|| Error::UnknownFeature(e.feature.clone()))?;
            if order.contains(&idx) {
                return Err(Error::InvalidArgument(format!(
                    "feature {:?} ranked twice",
                    e.feature
                )));
            }
            order.push(idx);
            scores.push(e.score);
        }
        Ok(Self {
            method,
            order,
            scores,
            feature_names: feature_names.to_vec(),
        })
    }

    /// Plain-text table of the first `k` entries.
    pub fn top_k_table(&self, k: usize) -> String {
        let width = self
            .ranked_names()
            .iter()
            .take(k)
            .map(|n| n.len())
            .max()
            .unwrap_or(7)
            .max(7);
        let mut out = String::new();
        let _ = writeln!(out, "# {} (top {})", self.method, k.min(self.len()));
        let _ = writeln!(out, "{:>4}  {:<width$}  {:>12}", "rank", "feature", "score");
        for e in self.entries().into_iter().take(k) {
            let _ = writeln!(out, "{:>4}  {:<width$}  {:>12.6}", e.rank, e.feature, e.score);
        }
        out
    }
}

fn component_sums(
    loadings: &LoadingMatrix,
    sel: &ComponentSelection,
    f: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    if sel.count == 0 || sel.count > loadings.component_count_total() {
        return Err(Error::InvalidArgument(format!(
            "component count {} outside 1..={}",
            sel.count,
            loadings.component_count_total()
        )));
    }
    Ok(loadings
        .values
        .axis_iter(Axis(0))
        .map(|row| row.iter().take(sel.count).map(|&a| f(a)).sum())
        .collect())
}

/// `Score_i = Σ_{j ≤ count} |a_ij|`.
pub fn score_abs(loadings: &LoadingMatrix, sel: &ComponentSelection) -> Result<FeatureRanking> {
    let scores = component_sums(loadings, sel, f64::abs)?;
    Ok(FeatureRanking::from_scores(
        RankingMethod::PcaAbs,
        &scores,
        None,
        &loadings.feature_names,
    ))
}

/// `Score_i = Σ_{j ≤ count} a_ij² = Σ λ_j e_ij²`.
pub fn score_square(loadings: &LoadingMatrix, sel: &ComponentSelection) -> Result<FeatureRanking> {
    let scores = component_sums(loadings, sel, |a| a * a)?;
    Ok(FeatureRanking::from_scores(
        RankingMethod::PcaSquare,
        &scores,
        None,
        &loadings.feature_names,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{eigen_sym, CorrelationMatrix};
    use ndarray::array;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("f{i}")).collect()
    }

    fn manual(values: Array2<f64>) -> LoadingMatrix {
        let p = values.nrows();
        LoadingMatrix {
            eigenvalues: Array1::ones(values.ncols()),
            values,
            feature_names: names(p),
        }
    }

    fn sel(count: usize) -> ComponentSelection {
        ComponentSelection {
            count,
            cumulative_variance: 1.0,
            threshold: 0.85,
        }
    }

    #[test]
    fn identity_loadings() {
        let e = eigen_sym(&CorrelationMatrix::identity(3)).unwrap();
        let l = pca_loadings(&e, &names(3)).unwrap();
        assert_eq!(l.values, Array2::<f64>::eye(3));
        let r = score_abs(&l, &sel(3)).unwrap();
        assert_eq!(r.order, vec![0, 1, 2]);
        assert_eq!(r.scores, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_by_two_column_and_row_norms() {
        let r = CorrelationMatrix::from_matrix(array![[1.0, 0.6], [0.6, 1.0]]).unwrap();
        let l = pca_loadings(&eigen_sym(&r).unwrap(), &names(2)).unwrap();
        let col_sq: Vec<f64> = l.values.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
        assert!((col_sq[0] - 1.6).abs() < 1e-12);
        assert!((col_sq[1] - 0.4).abs() < 1e-12);
        for row in l.values.axis_iter(Axis(0)) {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_counts() {
        assert_eq!(select_components(&[3.0, 1.0, 0.0, 0.0], 0.85).unwrap().count, 2);
        assert_eq!(select_components(&[3.0, 1.0, 0.0, 0.0], 1.0).unwrap().count, 2);
        assert_eq!(select_components(&[2.0, 1.0, 1.0, 0.0], 1.0).unwrap().count, 3);
        assert_eq!(select_components(&[3.4, 0.3, 0.2, 0.1], 0.85).unwrap().count, 1);
        assert!(select_components(&[1.0, 1.0], 0.0).is_err());
        assert!(select_components(&[1.0, 1.0], 1.5).is_err());
    }

    #[test]
    fn abs_score_tie_break() {
        let l = manual(array![[0.9, 0.1], [-0.9, 0.2], [0.1, 0.9]]);
        let r = score_abs(&l, &sel(1)).unwrap();
        assert_eq!(r.scores, vec![0.9, 0.9, 0.1]);
        assert_eq!(r.order, vec![0, 1, 2]);
    }

    #[test]
    fn square_scores_sum_to_p_at_full_count() {
        let r = CorrelationMatrix::from_matrix(array![
            [1.0, 0.6, 0.1],
            [0.6, 1.0, 0.3],
            [0.1, 0.3, 1.0]
        ])
        .unwrap();
        let l = pca_loadings(&eigen_sym(&r).unwrap(), &names(3)).unwrap();
        let ranking = score_square(&l, &sel(3)).unwrap();
        assert!((ranking.scores.iter().sum::<f64>() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn pair_plus_independent_variable() {
        // r = 0.6 pair plus an uncorrelated third feature: eigenvalues 1.6,
        // 1.0, 0.4 with vectors (1,1,0)/√2, (0,0,1), (1,-1,0)/√2.
        let r = CorrelationMatrix::from_matrix(array![
            [1.0, 0.6, 0.0],
            [0.6, 1.0, 0.0],
            [0.0, 0.0, 1.0]
        ])
        .unwrap();
        let l = pca_loadings(&eigen_sym(&r).unwrap(), &names(3)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a1 = 1.6_f64.sqrt() * h;
        let a3 = 0.4_f64.sqrt() * h;
        let abs2 = score_abs(&l, &sel(2)).unwrap();
        let mut by_feature = vec![0.0; 3];
        for (&i, &s) in abs2.order.iter().zip(&abs2.scores) {
            by_feature[i] = s;
        }
        assert!((by_feature[0] - a1).abs() < 1e-12);
        assert!((by_feature[1] - a1).abs() < 1e-12);
        assert!((by_feature[2] - 1.0).abs() < 1e-12);
        assert_eq!(abs2.order, vec![2, 0, 1]);

        let abs3 = score_abs(&l, &sel(3)).unwrap();
        assert_eq!(abs3.order, vec![0, 1, 2]);
        assert!((abs3.scores[0] - (a1 + a3)).abs() < 1e-12);
    }

    #[test]
    fn entries_round_trip() {
        let l = manual(array![[0.2, 0.0], [0.9, 0.0], [0.5, 0.0]]);
        let r = score_abs(&l, &sel(1)).unwrap();
        let entries = r.entries();
        assert_eq!(entries[0].rank, 1);
        assert_eq!(entries[0].feature, "f1");
        let back = FeatureRanking::from_entries(RankingMethod::PcaAbs, &entries, &names(3)).unwrap();
        assert_eq!(back, r);
        assert!(r.top_k_table(2).contains("f2"));
    }
}
