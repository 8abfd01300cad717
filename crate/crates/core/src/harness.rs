//! Evaluation loop: chi-square prefilter, prefix accuracy curves over a
//! ranking, random-order baselines, steady points and top-k summaries.

use std::fmt::Write as _;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_indices, Dataset};
use crate::error::{Error, Result};
use crate::forest::{accuracy, RandomForest, TrainConfig};
use crate::pca::{FeatureRanking, DEFAULT_TOP_K};
use crate::rng::{derive_seed, rng_from_seed, shuffle};
use crate::stats::{chi_square_feature_test, TestResult};

pub const DEFAULT_REPEATS: usize = 100;
pub const DEFAULT_SHUFFLES: usize = 10;
pub const DEFAULT_TEST_FRACTION: f64 = 0.25;
pub const DEFAULT_DELTA: f64 = 0.005;

const SPLIT_LABEL: u64 = 0;
const FOREST_LABEL: u64 = 1;
const SHUFFLE_LABEL: u64 = 0x5348_5546; // "SHUF"

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTest {
    pub feature: String,
    /// `None` when the feature could not be tested (e.g. constant).
    pub test: Option<TestResult>,
    pub note: Option<String>,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct Prefiltered {
    pub dataset: Dataset,
    pub tests: Vec<FeatureTest>,
}

/// Keeps the features whose chi-square p-value against the labels is below
/// `alpha`, preserving column order.
pub fn prefilter(dataset: &Dataset, alpha: f64, n_bins: usize) -> Result<Prefiltered> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let mut tests = Vec::with_capacity(dataset.n_features());
    let mut keep = Vec::new();
    for (j, col) in dataset.x.axis_iter(Axis(1)).enumerate() {
        let values = col.to_vec();
        let feature = dataset.feature_names[j].clone();
        match chi_square_feature_test(&values, &dataset.y, n_bins) {
            Ok(t) => {
                let selected = t.p_value < alpha;
                if selected {
                    keep.push(j);
                }
                tests.push(FeatureTest {
                    feature,
                    test: Some(t),
                    note: None,
                    selected,
                });
            }
            Err(Error::NotTestable(msg)) => tests.push(FeatureTest {
                feature,
                test: None,
                note: Some(msg),
                selected: false,
            }),
            Err(e) => return Err(e),
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no feature passed the chi-square prefilter at alpha = {alpha}"
        )));
    }
    Ok(Prefiltered {
        dataset: dataset.select_columns(&keep),
        tests,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub repeats: usize,
    pub test_fraction: f64,
    pub base_seed: u64,
    pub forest: TrainConfig,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            repeats: DEFAULT_REPEATS,
            test_fraction: DEFAULT_TEST_FRACTION,
            base_seed: 0,
            forest: TrainConfig::default(),
        }
    }
}

/// Mean test accuracy per prefix length. `mean_accuracy[k - 1]` uses the
/// first `k` features of `features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub method: String,
    pub features: Vec<String>,
    pub mean_accuracy: Vec<f64>,
    pub std_accuracy: Vec<f64>,
    pub repeats: usize,
    /// Number of random orderings averaged (random baselines only).
    pub shuffles: Option<usize>,
    pub base_seed: u64,
}

impl AccuracyCurve {
    pub fn len(&self) -> usize {
        self.mean_accuracy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_accuracy.is_empty()
    }

    /// Accuracy at prefix length `k` (1-based).
    pub fn at(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.mean_accuracy.get(i).copied())
    }

    pub fn max(&self) -> Option<f64> {
        self.mean_accuracy.iter().copied().reduce(f64::max)
    }
}

fn resolve_columns(dataset: &Dataset, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            dataset
                .feature_index(n)
                .ok_or_else(|| Error::UnknownFeature(n.to_string()))
        })
        .collect()
}

/// Seed of the split for prefix length `k`, repeat `r`.
pub fn split_seed(base_seed: u64, k: usize, r: usize) -> u64 {
    derive_seed(base_seed, &[SPLIT_LABEL, k as u64, r as u64])
}

fn forest_seed(base_seed: u64, k: usize, r: usize) -> u64 {
    derive_seed(base_seed, &[FOREST_LABEL, k as u64, r as u64])
}

/// Test accuracy of one (prefix length, repeat) cell using `columns[..k]`.
fn evaluate_once(dataset: &Dataset, columns: &[usize], k: usize, r: usize, cfg: &CurveConfig) -> Result<f64> {
    let (train, test) = split_indices(&dataset.y, cfg.test_fraction, split_seed(cfg.base_seed, k, r))?;
    let x = dataset.x.select(Axis(1), &columns[..k]);
    let x_train = x.select(Axis(0), &train);
    let x_test = x.select(Axis(0), &test);
    let y_train: Vec<u32> = train.iter().map(|&i| dataset.y[i]).collect();
    let y_test: Vec<u32> = test.iter().map(|&i| dataset.y[i]).collect();
    let forest_cfg = TrainConfig {
        seed: forest_seed(cfg.base_seed, k, r),
        ..cfg.forest.clone()
    };
    let forest = RandomForest::fit_matrix(x_train.view(), &y_train, &forest_cfg)?;
    accuracy(&forest.predict(x_test.view())?, &y_test)
}

/// Per-prefix accuracies for an ordered column list:
/// `result[k - 1][r]`.
fn prefix_accuracies(dataset: &Dataset, columns: &[usize], cfg: &CurveConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    if columns.is_empty() {
        return Err(Error::InvalidArgument("empty feature list".into()));
    }
    // Fail early on stratification problems instead of inside the grid.
    split_indices(&dataset.y, cfg.test_fraction, cfg.base_seed)?;
    let tasks: Vec<(usize, usize)> = (1..=columns.len())
        .flat_map(|k| (0..cfg.repeats).map(move |r| (k, r)))
        .collect();
    let results: Vec<f64> = tasks
        .par_iter()
        .map(|&(k, r)| evaluate_once(dataset, columns, k, r, cfg))
        .collect::<Result<_>>()?;
    Ok(results.chunks(cfg.repeats).map(<[f64]>::to_vec).collect())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Adds ranked features one at a time and records the mean test accuracy
/// over `repeats` stratified splits per prefix. Split and forest seeds
/// depend only on `(base_seed, k, r)`.
pub fn accuracy_curve(dataset: &Dataset, ranking: &FeatureRanking, cfg: &CurveConfig) -> Result<AccuracyCurve> {
    let names = ranking.ranked_names();
    curve_for_order(dataset, &names, ranking.method.as_str(), cfg)
}

/// Accuracy curve for an explicit feature order.
pub fn curve_for_order(dataset: &Dataset, order: &[&str], method: &str, cfg: &CurveConfig) -> Result<AccuracyCurve> {
    let columns = resolve_columns(dataset, order)?;
    let per_k = prefix_accuracies(dataset, &columns, cfg)?;
    let (mean, std): (Vec<f64>, Vec<f64>) = per_k.iter().map(|a| mean_std(a)).unzip();
    Ok(AccuracyCurve {
        method: method.to_string(),
        features: order.iter().map(|s| s.to_string()).collect(),
        mean_accuracy: mean,
        std_accuracy: std,
        repeats: cfg.repeats,
        shuffles: None,
        base_seed: cfg.base_seed,
    })
}

/// Mean test accuracy using exactly `features` (the last point of their
/// curve, computed without the shorter prefixes).
pub fn subset_accuracy(dataset: &Dataset, features: &[&str], cfg: &CurveConfig) -> Result<f64> {
    let columns = resolve_columns(dataset, features)?;
    if columns.is_empty() {
        return Err(Error::InvalidArgument("empty feature list".into()));
    }
    let k = columns.len();
    let accs: Vec<f64> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| evaluate_once(dataset, &columns, k, r, cfg))
        .collect::<Result<_>>()?;
    Ok(mean_std(&accs).0)
}

/// Position-wise mean of the accuracy curves of `shuffles` random
/// orderings of `features`.
pub fn random_baseline(dataset: &Dataset, features: &[&str], shuffles: usize, cfg: &CurveConfig) -> Result<AccuracyCurve> {
    if shuffles == 0 {
        return Err(Error::InvalidArgument("shuffles must be >= 1".into()));
    }
    let base = resolve_columns(dataset, features)?;
    let mut sums = vec![Vec::new(); base.len()];
    for s in 0..shuffles {
        let mut order = base.clone();
        let mut rng = rng_from_seed(derive_seed(cfg.base_seed, &[SHUFFLE_LABEL, s as u64]));
        shuffle(&mut order, &mut rng);
        let per_k = prefix_accuracies(dataset, &order, cfg)?;
        for (acc, run) in sums.iter_mut().zip(per_k) {
            acc.extend(run);
        }
    }
    let mean: Vec<f64> = sums.iter().map(|v| mean_std(v).0).collect();
    let std: Vec<f64> = sums.iter().map(|v| mean_std(v).1).collect();
    Ok(AccuracyCurve {
        method: "random".into(),
        features: features.iter().map(|s| s.to_string()).collect(),
        mean_accuracy: mean,
        std_accuracy: std,
        repeats: cfg.repeats,
        shuffles: Some(shuffles),
        base_seed: cfg.base_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortlistResult {
    /// 1-based prefix length.
    pub k_steady: usize,
    pub delta: f64,
    pub reference_accuracy: f64,
}

/// Smallest prefix whose mean accuracy is within `delta` (relative) of the
/// curve maximum.
pub fn steady_point(curve: &AccuracyCurve, delta: f64) -> Result<ShortlistResult> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta must lie in [0, 1), got {delta}")));
    }
    let reference = curve
        .max()
        .ok_or_else(|| Error::InvalidArgument("empty accuracy curve".into()))?;
    let cutoff = (1.0 - delta) * reference;
    let k = curve
        .mean_accuracy
        .iter()
        .position(|&a| a >= cutoff)
        .expect("the maximum itself qualifies")
        + 1;
    Ok(ShortlistResult {
        k_steady: k,
        delta,
        reference_accuracy: reference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub method: String,
    pub k_requested: usize,
    pub k_used: usize,
    pub truncated: bool,
    pub mean_accuracy: f64,
}

/// Accuracy at prefix `min(k, K)` for each curve.
pub fn top_k_summary(curves: &[AccuracyCurve], k: usize) -> Result<Vec<TopKRow>> {
    curves
        .iter()
        .map(|c| {
            if c.is_empty() {
                return Err(Error::InvalidArgument(format!("curve {:?} is empty", c.method)));
            }
            let used = k.min(c.len()).max(1);
            Ok(TopKRow {
                method: c.method.clone(),
                k_requested: k,
                k_used: used,
                truncated: used < k,
                mean_accuracy: c.mean_accuracy[used - 1],
            })
        })
        .collect()
}

pub fn top_k_table(rows: &[TopKRow]) -> String {
    let mut out = String::new();
    let k = rows.first().map_or(DEFAULT_TOP_K, |r| r.k_requested);
    let _ = writeln!(out, "Avg. test accuracy using the top {k} features");
    let _ = writeln!(out, "{:<12} {:>6} {:>10}", "method", "k", "accuracy");
    for r in rows {
        let flag = if r.truncated { " (truncated)" } else { "" };
        let _ = writeln!(out, "{:<12} {:>6} {:>10.5}{flag}", r.method, r.k_used, r.mean_accuracy);
    }
    out
}

/// CSV with columns `k,mean_accuracy,method`.
pub fn curves_csv(curves: &[&AccuracyCurve]) -> String {
    let mut out = String::from("k,mean_accuracy,method\n");
    for c in curves {
        for (i, a) in c.mean_accuracy.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, a, c.method);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pca::RankingMethod;
    use ndarray::Array2;
    use rand::Rng;

    fn curve(values: &[f64]) -> AccuracyCurve {
        AccuracyCurve {
            method: "m".into(),
            features: (0..values.len()).map(|i| format!("f{i}")).collect(),
            mean_accuracy: values.to_vec(),
            std_accuracy: vec![0.0; values.len()],
            repeats: 1,
            shuffles: None,
            base_seed: 0,
        }
    }

    /// Feature 0 determines the class; feature 1 is noise.
    fn rule_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let v: f64 = rng.gen_range(-1.0..1.0);
            x[[i, 0]] = v;
            x[[i, 1]] = rng.gen_range(-1.0..1.0);
            y.push(if v > 0.0 { 2 } else { 1 });
        }
        Dataset::new(vec!["signal".into(), "noise".into()], x, y).unwrap()
    }

    fn small_cfg(repeats: usize) -> CurveConfig {
        CurveConfig {
            repeats,
            test_fraction: 0.25,
            base_seed: 5,
            forest: TrainConfig {
                n_trees: 15,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn steady_point_examples() {
        let r = steady_point(&curve(&[0.5, 0.9, 0.95, 0.951]), 0.005).unwrap();
        assert_eq!(r.k_steady, 3);
        assert_eq!(steady_point(&curve(&[0.7; 4]), 0.005).unwrap().k_steady, 1);
        assert_eq!(steady_point(&curve(&[0.5, 0.9, 0.95, 0.951]), 0.0).unwrap().k_steady, 4);
        assert_eq!(steady_point(&curve(&[0.5, 0.9, 0.8]), 0.0).unwrap().k_steady, 2);
        assert!(steady_point(&curve(&[]), 0.005).is_err());
    }

    #[test]
    fn top_k_truncates() {
        let rows = top_k_summary(&[curve(&[0.5, 0.6, 0.7])], 20).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].truncated);
        assert_eq!(rows[0].k_used, 3);
        assert_eq!(rows[0].mean_accuracy, 0.7);
        let rows = top_k_summary(&[curve(&[0.5, 0.6, 0.7])], 2).unwrap();
        assert!(!rows[0].truncated);
        assert_eq!(rows[0].mean_accuracy, 0.6);
    }

    #[test]
    fn prefilter_keeps_label_feature() {
        let ds = rule_dataset(400, 3);
        let mut with_label = ds.clone();
        let label_col = Array2::from_shape_vec((400, 1), ds.y.iter().map(|&c| c as f64).collect()).unwrap();
        with_label.x = ndarray::concatenate(Axis(1), &[ds.x.view(), label_col.view()]).unwrap();
        with_label.feature_names.push("label".into());
        let out = prefilter(&with_label, 0.05, 5).unwrap();
        assert!(out.dataset.feature_names.contains(&"label".to_string()));
        assert!(out.dataset.feature_names.contains(&"signal".to_string()));
    }

    #[test]
    fn prefilter_drops_constant_and_reports_empty() {
        let n = 40;
        let x = Array2::from_elem((n, 1), 3.0);
        let y = (0..n).map(|i| (i % 2) as u32).collect();
        let ds = Dataset::new(vec!["c".into()], x, y).unwrap();
        assert!(matches!(prefilter(&ds, 0.05, 5), Err(Error::EmptySelection(_))));
    }

    #[test]
    fn determining_feature_curve() {
        let ds = rule_dataset(300, 11);
        let ranking = FeatureRanking::from_scores(RankingMethod::Custom, &[1.0, 0.0], None, &ds.feature_names);
        let c = accuracy_curve(&ds, &ranking, &small_cfg(5)).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.mean_accuracy[0] >= 0.97, "{:?}", c.mean_accuracy);
        assert!(c.mean_accuracy.iter().all(|a| (0.0..=1.0).contains(a)));
        let again = accuracy_curve(&ds, &ranking, &small_cfg(5)).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn single_feature_baseline_matches_curve() {
        let ds = rule_dataset(120, 2).select_columns(&[0]);
        let cfg = small_cfg(3);
        let ranked = curve_for_order(&ds, &["signal"], "fixed", &cfg).unwrap();
        let base = random_baseline(&ds, &["signal"], 4, &cfg).unwrap();
        assert_eq!(base.mean_accuracy, ranked.mean_accuracy);
        assert_eq!(random_baseline(&ds, &["signal"], 4, &cfg).unwrap(), base);
    }

    #[test]
    fn unknown_feature_is_reported() {
        let ds = rule_dataset(50, 2);
        assert!(matches!(
            curve_for_order(&ds, &["nope"], "x", &small_cfg(1)),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let c = curve(&[0.5, 0.75]);
        assert_eq!(curves_csv(&[&c]), "k,mean_accuracy,method\n1,0.5,m\n2,0.75,m\n");
    }
}
