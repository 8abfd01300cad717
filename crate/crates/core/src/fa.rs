//! Factor analysis feature selection: KMO/Bartlett gate, principal-component
//! factor extraction, varimax rotation, loading-threshold assignment and the
//! factor-priority ranking.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::{select_components, ComponentSelection, FeatureRanking, RankingMethod};
use crate::stats::{
    bartlett_from_eigen, dominant_entry, kmo_from_eigen, CorrelationMatrix, EigenDecomposition,
    TestResult,
};

pub const KMO_ADEQUATE: f64 = 0.6;
pub const BARTLETT_ALPHA: f64 = 0.05;
pub const DEFAULT_LOADING_THRESHOLD: f64 = 0.5;
pub const DEFAULT_VARIMAX_TOL: f64 = 1e-8;
pub const DEFAULT_VARIMAX_SWEEPS: usize = 100;

/// Outcome of the suitability checks that precede factor analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// `None` when KMO is undefined (singular or identity matrix).
    pub kmo: Option<f64>,
    pub kmo_note: Option<String>,
    pub bartlett: TestResult,
    pub passed: bool,
}

/// Passes when KMO ≥ 0.6 and Bartlett's p < 0.05.
pub fn fa_gate(r: &CorrelationMatrix, eig: &EigenDecomposition, n_samples: usize) -> Result<Gate> {
    let bartlett = bartlett_from_eigen(eig, n_samples)?;
    let (kmo, kmo_note) = match kmo_from_eigen(r, eig) {
        Ok(v) => (Some(v), None),
        Err(Error::NotApplicable(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let passed = kmo.is_some_and(|k| k >= KMO_ADEQUATE) && bartlett.p_value < BARTLETT_ALPHA;
    Ok(Gate {
        kmo,
        kmo_note,
        bartlett,
        passed,
    })
}

/// Principal-component extraction: the first `m` columns of
/// `sqrt(λ_j) · e_j`, with `m` from the cumulative-variance rule.
pub fn extract_factors(
    eig: &EigenDecomposition,
    threshold: f64,
) -> Result<(Array2<f64>, ComponentSelection)> {
    let sel = select_components(eig.eigenvalues.as_slice().expect("contiguous"), threshold)?;
    let m = sel.count;
    let mut loadings = eig.eigenvectors.slice(ndarray::s![.., ..m]).to_owned();
    for (mut col, &l) in loadings.axis_iter_mut(Axis(1)).zip(eig.eigenvalues.iter()) {
        col *= l.sqrt();
    }
    Ok((loadings, sel))
}

/// Raw varimax criterion `Σ_j [ mean_i(a_ij⁴) − mean_i(a_ij²)² ]`.
pub fn varimax_criterion(loadings: ArrayView2<f64>) -> f64 {
    let p = loadings.nrows() as f64;
    loadings
        .axis_iter(Axis(1))
        .map(|col| {
            let m2 = col.iter().map(|a| a * a).sum::<f64>() / p;
            let m4 = col.iter().map(|a| a.powi(4)).sum::<f64>() / p;
            m4 - m2 * m2
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarimaxResult {
    pub loadings: Array2<f64>,
    /// Orthogonal `m x m` matrix with `loadings = input · rotation`.
    pub rotation: Array2<f64>,
    /// Criterion before the first sweep and after each sweep.
    pub criterion_history: Vec<f64>,
    pub converged: bool,
}

/// Orthogonal varimax rotation by cyclic pairwise planar rotations.
///
/// Each planar rotation is the closed-form optimum for its column pair, so
/// the criterion cannot decrease; a decrease beyond roundoff is reported as
/// an invariant violation. Iteration stops when the relative improvement
/// over a sweep falls below `tol`. Output columns are sign-normalized
/// (largest-magnitude entry positive) and ordered by descending sum of
/// squared loadings. A single column is returned unchanged.
pub fn varimax(loadings: &Array2<f64>, tol: f64, max_sweeps: usize) -> Result<VarimaxResult> {
    let (p, m) = loadings.dim();
    if m == 0 || p == 0 {
        return Err(Error::InvalidArgument("empty loading matrix".into()));
    }
    let mut a = loadings.clone();
    let mut rot = Array2::<f64>::eye(m);
    let mut history = vec![varimax_criterion(a.view())];
    if m == 1 {
        return Ok(VarimaxResult {
            loadings: a,
            rotation: rot,
            criterion_history: history,
            converged: true,
        });
    }

    let n = p as f64;
    let mut converged = false;
    for _ in 0..max_sweeps {
        for j in 0..m {
            for k in (j + 1)..m {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let (x, y) = (a[[i, j]], a[[i, k]]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += u * v;
                }
                let num = 2.0 * sd - 2.0 * sa * sb / n;
                let den = sc - (sa * sa - sb * sb) / n;
                let phi = 0.25 * num.atan2(den);
                if phi.abs() < 1e-15 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for i in 0..p {
                    let (x, y) = (a[[i, j]], a[[i, k]]);
                    a[[i, j]] = c * x + s * y;
                    a[[i, k]] = -s * x + c * y;
                }
                for i in 0..m {
                    let (x, y) = (rot[[i, j]], rot[[i, k]]);
                    rot[[i, j]] = c * x + s * y;
                    rot[[i, k]] = -s * x + c * y;
                }
            }
        }
        let prev = *history.last().expect("nonempty");
        let cur = varimax_criterion(a.view());
        if cur < prev - 1e-12 * prev.abs().max(1.0) {
            return Err(Error::Invariant(format!(
                "varimax criterion decreased from {prev} to {cur}"
            )));
        }
        history.push(cur);
        if cur - prev <= tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("varimax did not converge within {max_sweeps} sweeps");
    }

    for j in 0..m {
        if dominant_entry(a.column(j)) < 0.0 {
            a.column_mut(j).mapv_inplace(|x| -x);
            rot.column_mut(j).mapv_inplace(|x| -x);
        }
    }
    let ss: Vec<f64> = a.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| ss[y].total_cmp(&ss[x]).then(x.cmp(&y)));
    Ok(VarimaxResult {
        loadings: a.select(Axis(1), &order),
        rotation: rot.select(Axis(1), &order),
        criterion_history: history,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorAssignment {
    pub feature: usize,
    /// 1-based factor index.
    pub factor: usize,
    /// Signed loading on the assigned factor.
    pub loading: f64,
}

/// Assigns each feature to the factor with its largest absolute loading
/// (first factor on ties) and keeps it iff that loading is at least
/// `threshold` in absolute value.
pub fn assign_features(rotated: &Array2<f64>, threshold: f64) -> Result<Vec<FactorAssignment>> {
    let mut out = Vec::new();
    for (i, row) in rotated.axis_iter(Axis(0)).enumerate() {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        let Some(&loading) = row.get(best) else {
            continue;
        };
        if loading.abs() >= threshold {
            out.push(FactorAssignment {
                feature: i,
                factor: best + 1,
                loading,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no feature has an absolute loading of at least {threshold}"
        )));
    }
    Ok(out)
}

/// `Score = |loading| + (m − j + 1)`, sorted descending with ties to the
/// smaller feature index. The result is checked to be factor-block ordered.
pub fn fa_priority_rank(
    assignments: &[FactorAssignment],
    m: usize,
    feature_names: &[String],
) -> Result<FeatureRanking> {
    let mut scores = vec![0.0; feature_names.len()];
    let mut factor_of = vec![0usize; feature_names.len()];
    let mut candidates = Vec::with_capacity(assignments.len());
    for a in assignments {
        if a.factor == 0 || a.factor > m {
            return Err(Error::InvalidArgument(format!(
                "factor index {} outside 1..={m}",
                a.factor
            )));
        }
        if a.feature >= feature_names.len() {
            return Err(Error::InvalidArgument(format!(
                "feature index {} out of range",
                a.feature
            )));
        }
        if candidates.contains(&a.feature) {
            return Err(Error::InvalidArgument(format!(
                "feature {} assigned twice",
                a.feature
            )));
        }
        scores[a.feature] = a.loading.abs() + (m - a.factor + 1) as f64;
        factor_of[a.feature] = a.factor;
        candidates.push(a.feature);
    }
    let ranking = FeatureRanking::from_scores(
        RankingMethod::FaPriority,
        &scores,
        Some(&candidates),
        feature_names,
    );
    let blocks: Vec<usize> = ranking.order.iter().map(|&i| factor_of[i]).collect();
    if blocks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invariant(
            "factor-priority ranking is not factor-block ordered (|loading| > 1?)".into(),
        ));
    }
    Ok(ranking)
}

#[derive(Debug, Clone)]
pub struct FaOptions {
    pub variance_threshold: f64,
    pub loading_threshold: f64,
    pub varimax_tol: f64,
    pub varimax_sweeps: usize,
}

impl Default for FaOptions {
    fn default() -> Self {
        Self {
            variance_threshold: crate::pca::DEFAULT_VARIANCE_THRESHOLD,
            loading_threshold: DEFAULT_LOADING_THRESHOLD,
            varimax_tol: DEFAULT_VARIMAX_TOL,
            varimax_sweeps: DEFAULT_VARIMAX_SWEEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FactorModel {
    pub m: usize,
    pub selection: ComponentSelection,
    pub unrotated_loadings: Array2<f64>,
    pub rotated_loadings: Array2<f64>,
    pub varimax_converged: bool,
    pub assignments: Vec<FactorAssignment>,
    pub ranking: FeatureRanking,
}

/// Either a fitted model or the reason factor analysis was skipped.
#[derive(Debug, Clone)]
pub enum FaOutcome {
    Fitted { gate: Gate, model: FactorModel },
    GateFailed { gate: Gate },
    EmptySelection { gate: Gate, m: usize, rotated: Array2<f64> },
}

impl FaOutcome {
    pub fn gate(&self) -> &Gate {
        match self {
            FaOutcome::Fitted { gate, .. }
            | FaOutcome::GateFailed { gate }
            | FaOutcome::EmptySelection { gate, .. } => gate,
        }
    }

    pub fn model(&self) -> Option<&FactorModel> {
        match self {
            FaOutcome::Fitted { model, .. } => Some(model),
            _ => None,
        }
    }
}

/// Gate, extract, rotate, assign and rank.
pub fn factor_analysis(
    r: &CorrelationMatrix,
    eig: &EigenDecomposition,
    n_samples: usize,
    feature_names: &[String],
    opts: &FaOptions,
) -> Result<FaOutcome> {
    let gate = fa_gate(r, eig, n_samples)?;
    if !gate.passed {
        return Ok(FaOutcome::GateFailed { gate });
    }
    let (unrotated, selection) = extract_factors(eig, opts.variance_threshold)?;
    let rotated = varimax(&unrotated, opts.varimax_tol, opts.varimax_sweeps)?;
    let m = selection.count;
    let assignments = match assign_features(&rotated.loadings, opts.loading_threshold) {
        Ok(a) => a,
        Err(Error::EmptySelection(_)) => {
            return Ok(FaOutcome::EmptySelection {
                gate,
                m,
                rotated: rotated.loadings,
            })
        }
        Err(e) => return Err(e),
    };
    let ranking = fa_priority_rank(&assignments, m, feature_names)?;
    Ok(FaOutcome::Fitted {
        gate,
        model: FactorModel {
            m,
            selection,
            unrotated_loadings: unrotated,
            rotated_loadings: rotated.loadings,
            varimax_converged: rotated.converged,
            assignments,
            ranking,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMember {
    pub feature: String,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGroup {
    pub factor: usize,
    pub features: Vec<FactorMember>,
}

/// JSON form of a factor-analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    /// `"fitted"`, `"NA"` (gate failed) or `"empty_selection"`.
    pub status: String,
    pub gate: Gate,
    pub m: Option<usize>,
    pub features: Vec<String>,
    pub rotated_loadings: Option<Vec<Vec<f64>>>,
    pub varimax_converged: Option<bool>,
    pub factors: Vec<FactorGroup>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.axis_iter(Axis(0)).map(|r| r.to_vec()).collect()
}

impl FactorReport {
    pub fn from_outcome(outcome: &FaOutcome, feature_names: &[String]) -> Self {
        let features = feature_names.to_vec();
        match outcome {
            FaOutcome::GateFailed { gate } => FactorReport {
                status: "NA".into(),
                gate: gate.clone(),
                m: None,
                features,
                rotated_loadings: None,
                varimax_converged: None,
                factors: Vec::new(),
            },
            FaOutcome::EmptySelection { gate, m, rotated } => FactorReport {
                status: "empty_selection".into(),
                gate: gate.clone(),
                m: Some(*m),
                features,
                rotated_loadings: Some(rows(rotated)),
                varimax_converged: None,
                factors: Vec::new(),
            },
            FaOutcome::Fitted { gate, model } => {
                let factors = (1..=model.m)
                    .map(|j| {
                        let mut members: Vec<&FactorAssignment> =
                            model.assignments.iter().filter(|a| a.factor == j).collect();
                        members.sort_by(|a, b| {
                            b.loading.abs().total_cmp(&a.loading.abs()).then(a.feature.cmp(&b.feature))
                        });
                        FactorGroup {
                            factor: j,
                            features: members
                                .into_iter()
                                .map(|a| FactorMember {
                                    feature: feature_names[a.feature].clone(),
                                    loading: a.loading,
                                })
                                .collect(),
                        }
                    })
                    .collect();
                FactorReport {
                    status: "fitted".into(),
                    gate: gate.clone(),
                    m: Some(model.m),
                    features,
                    rotated_loadings: Some(rows(&model.rotated_loadings)),
                    varimax_converged: Some(model.varimax_converged),
                    factors,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::eigen_sym;
    use ndarray::array;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("f{i}")).collect()
    }

    fn row_communalities(a: &Array2<f64>) -> Vec<f64> {
        a.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect()
    }

    #[test]
    fn gate_identity_fails() {
        let r = CorrelationMatrix::identity(4);
        let eig = eigen_sym(&r).unwrap();
        let g = fa_gate(&r, &eig, 100).unwrap();
        assert_eq!(g.bartlett.p_value, 1.0);
        assert!(g.kmo.is_none());
        assert!(!g.passed);
    }

    #[test]
    fn gate_one_factor_passes() {
        let mut v = Array2::from_elem((6, 6), 0.7);
        v.diag_mut().fill(1.0);
        let r = CorrelationMatrix::from_matrix(v).unwrap();
        let eig = eigen_sym(&r).unwrap();
        let g = fa_gate(&r, &eig, 500).unwrap();
        assert!(g.kmo.unwrap() >= 0.6);
        assert!(g.bartlett.p_value < 0.05);
        assert!(g.passed);
    }

    #[test]
    fn gate_kmo_half_fails() {
        let mut v = Array2::<f64>::eye(4);
        v[[0, 1]] = 0.9;
        v[[1, 0]] = 0.9;
        v[[2, 3]] = 0.9;
        v[[3, 2]] = 0.9;
        let r = CorrelationMatrix::from_matrix(v).unwrap();
        let eig = eigen_sym(&r).unwrap();
        let g = fa_gate(&r, &eig, 500).unwrap();
        assert!((g.kmo.unwrap() - 0.5).abs() < 1e-9);
        assert!(g.bartlett.p_value < 0.05);
        assert!(!g.passed);
    }

    #[test]
    fn extraction_on_identity() {
        let eig = eigen_sym(&CorrelationMatrix::identity(10)).unwrap();
        let (l, sel) = extract_factors(&eig, 0.85).unwrap();
        assert_eq!(sel.count, 9);
        assert_eq!(l.ncols(), 9);
        for col in l.axis_iter(Axis(1)) {
            assert!((col.dot(&col) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extraction_on_two_blocks() {
        let mut v = Array2::<f64>::eye(6);
        for block in [[0, 1, 2], [3, 4, 5]] {
            for &i in &block {
                for &j in &block {
                    if i != j {
                        v[[i, j]] = 0.9;
                    }
                }
            }
        }
        let eig = eigen_sym(&CorrelationMatrix::from_matrix(v).unwrap()).unwrap();
        let (l, sel) = extract_factors(&eig, 0.85).unwrap();
        // λ = 2.8, 2.8, then 0.1 four times: 5.6 / 6 = 0.933.
        assert_eq!(sel.count, 2);
        for (col, lam) in l.axis_iter(Axis(1)).zip(eig.eigenvalues.iter()) {
            assert!((col.dot(&col).sqrt() - lam.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn varimax_single_column_is_identity() {
        let l = array![[0.8], [-0.3], [0.5]];
        let out = varimax(&l, 1e-8, 100).unwrap();
        assert_eq!(out.loadings, l);
    }

    #[test]
    fn varimax_fixed_point() {
        let l = array![[0.9, 0.0], [0.8, 0.0], [0.0, 0.7], [0.0, 0.6]];
        let out = varimax(&l, 1e-8, 100).unwrap();
        for (a, b) in out.loadings.iter().zip(l.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let v0 = varimax_criterion(l.view());
        let v1 = varimax_criterion(out.loadings.view());
        assert!((v0 - v1).abs() < 1e-10);
    }

    #[test]
    fn varimax_recovers_45_degree_rotation() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let simple = array![[h, 0.0], [h, 0.0], [0.0, h], [0.0, h]];
        let (s, c) = std::f64::consts::FRAC_PI_4.sin_cos();
        let twist = array![[c, -s], [s, c]];
        let rotated_away = simple.dot(&twist);
        for v in rotated_away.iter() {
            assert!((v.abs() - 0.5).abs() < 1e-12);
        }
        let out = varimax(&rotated_away, 1e-10, 100).unwrap();
        let before = row_communalities(&rotated_away);
        let after = row_communalities(&out.loadings);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-8);
        }
        for i in 0..4 {
            let mut got: Vec<f64> = out.loadings.row(i).iter().map(|v| v.abs()).collect();
            got.sort_by(f64::total_cmp);
            assert!(got[0] < 1e-6 && (got[1] - h).abs() < 1e-6);
        }
    }

    #[test]
    fn assignment_rules() {
        let rot = array![[0.8, 0.3], [0.6, -0.7], [0.4, 0.45], [0.5, 0.5]];
        let a = assign_features(&rot, 0.5).unwrap();
        assert_eq!(
            a,
            vec![
                FactorAssignment { feature: 0, factor: 1, loading: 0.8 },
                FactorAssignment { feature: 1, factor: 2, loading: -0.7 },
                FactorAssignment { feature: 3, factor: 1, loading: 0.5 },
            ]
        );
        assert!(matches!(
            assign_features(&array![[0.1, 0.2]], 0.5),
            Err(Error::EmptySelection(_))
        ));
    }

    #[test]
    fn priority_worked_example() {
        let n = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let a = [
            FactorAssignment { feature: 0, factor: 1, loading: 0.9 },
            FactorAssignment { feature: 1, factor: 1, loading: 0.6 },
            FactorAssignment { feature: 2, factor: 2, loading: 0.95 },
        ];
        let r = fa_priority_rank(&a, 2, &n).unwrap();
        assert_eq!(r.ranked_names(), vec!["A", "B", "C"]);
        let expected = [2.9, 2.6, 1.95];
        for (s, e) in r.scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn priority_uses_absolute_loading_and_index_ties() {
        let n = names(3);
        let a = [
            FactorAssignment { feature: 1, factor: 1, loading: 0.7 },
            FactorAssignment { feature: 0, factor: 1, loading: -0.8 },
        ];
        assert_eq!(fa_priority_rank(&a, 1, &n).unwrap().order, vec![0, 1]);
        let tied = [
            FactorAssignment { feature: 2, factor: 1, loading: 0.6 },
            FactorAssignment { feature: 0, factor: 1, loading: 0.6 },
            FactorAssignment { feature: 1, factor: 1, loading: -0.6 },
        ];
        assert_eq!(fa_priority_rank(&tied, 1, &n).unwrap().order, vec![0, 1, 2]);
    }

    #[test]
    fn priority_rejects_bad_factor_index() {
        let a = [FactorAssignment { feature: 0, factor: 3, loading: 0.9 }];
        assert!(fa_priority_rank(&a, 2, &names(1)).is_err());
    }
}
