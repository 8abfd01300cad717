//! End-to-end orchestration: ingest, prefilter, rank, evaluate, report.
//!
//! Output directory layout:
//!
//! ```text
//! report.json            full run report, including a manifest of the files below
//! config.toml            echo of the effective configuration
//! standardization.json   per-feature mean/std and dropped flags
//! factors.json           factor analysis result (or NA record)
//! rankings/<method>.json ranking as [{rank, feature, score}]
//! curves/<method>.csv    k,mean_accuracy,method
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{build_dataset, load_table, standardize, Dataset, MappingScheme, MissingPolicy, RatingMapping, Standardization};
use crate::error::{Error, Result};
use crate::fa::{factor_analysis, FaOptions, FaOutcome, FactorReport, DEFAULT_LOADING_THRESHOLD};
use crate::forest::{MaxFeatures, TrainConfig};
use crate::harness::{
    accuracy_curve, curves_csv, prefilter, random_baseline, steady_point, top_k_summary, AccuracyCurve,
    CurveConfig, FeatureTest, ShortlistResult, TopKRow, DEFAULT_DELTA, DEFAULT_REPEATS, DEFAULT_SHUFFLES,
    DEFAULT_TEST_FRACTION,
};
use crate::pca::{
    pca_loadings, score_abs, score_square, select_components, ComponentSelection, FeatureRanking, RankEntry,
    RankingMethod, DEFAULT_TOP_K, DEFAULT_VARIANCE_THRESHOLD,
};
use crate::stats::{correlation_matrix, eigen_sym, DEFAULT_ALPHA, DEFAULT_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            n_trees: d.n_trees,
            max_features: d.max_features,
            min_samples_split: d.min_samples_split,
            max_depth: d.max_depth,
        }
    }
}

impl ForestParams {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_trees: self.n_trees,
            max_features: self.max_features,
            min_samples_split: self.min_samples_split,
            max_depth: self.max_depth,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Every knob of a run. Loaded from a TOML file; CLI flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub target: String,
    pub delimiter: char,
    pub mapping: MappingScheme,
    pub missing: MissingPolicy,
    pub alpha: f64,
    pub n_bins: usize,
    pub variance_threshold: f64,
    pub loading_threshold: f64,
    pub test_fraction: f64,
    pub repeats: usize,
    pub shuffles: usize,
    pub delta: f64,
    pub top_k: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub forest: ForestParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("data.csv"),
            target: "rating".into(),
            delimiter: ',',
            mapping: MappingScheme::Detailed,
            missing: MissingPolicy::DropRow,
            alpha: DEFAULT_ALPHA,
            n_bins: DEFAULT_BINS,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            loading_threshold: DEFAULT_LOADING_THRESHOLD,
            test_fraction: DEFAULT_TEST_FRACTION,
            repeats: DEFAULT_REPEATS,
            shuffles: DEFAULT_SHUFFLES,
            delta: DEFAULT_DELTA,
            top_k: DEFAULT_TOP_K,
            base_seed: 0,
            output_dir: PathBuf::from("out"),
            forest: ForestParams::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        check(self.alpha > 0.0 && self.alpha <= 1.0, || format!("alpha {} not in (0, 1]", self.alpha))?;
        check(self.n_bins >= 2, || "n_bins must be >= 2".into())?;
        check(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0, || {
            format!("variance_threshold {} not in (0, 1]", self.variance_threshold)
        })?;
        check(self.loading_threshold > 0.0 && self.loading_threshold <= 1.0, || {
            format!("loading_threshold {} not in (0, 1]", self.loading_threshold)
        })?;
        check(self.test_fraction > 0.0 && self.test_fraction < 1.0, || {
            format!("test_fraction {} not in (0, 1)", self.test_fraction)
        })?;
        check(self.repeats >= 1, || "repeats must be >= 1".into())?;
        check(self.shuffles >= 1, || "shuffles must be >= 1".into())?;
        check((0.0..1.0).contains(&self.delta), || format!("delta {} not in [0, 1)", self.delta))?;
        check(self.top_k >= 1, || "top_k must be >= 1".into())?;
        check(self.delimiter.is_ascii(), || "delimiter must be ASCII".into())?;
        self.forest.train_config().validate()
    }

    pub fn curve_config(&self) -> CurveConfig {
        CurveConfig {
            repeats: self.repeats,
            test_fraction: self.test_fraction,
            base_seed: self.base_seed,
            forest: self.forest.train_config(),
        }
    }

    pub fn fa_options(&self) -> FaOptions {
        FaOptions {
            variance_threshold: self.variance_threshold,
            loading_threshold: self.loading_threshold,
            ..FaOptions::default()
        }
    }
}

/// Loaded, standardized and prefiltered data.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub n_samples: usize,
    pub raw_features: usize,
    pub standardization: Standardization,
    /// Standardized, prefiltered features.
    pub dataset: Dataset,
    pub prefilter: Vec<FeatureTest>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let table = load_table(&cfg.input, cfg.delimiter)?;
    let mapping = RatingMapping::new(cfg.mapping);
    let raw = build_dataset(&table, &cfg.target, &mapping, cfg.missing)?;
    prepare_dataset(&raw, cfg)
}

pub fn prepare_dataset(raw: &Dataset, cfg: &RunConfig) -> Result<Prepared> {
    if raw.n_samples() < 2 || raw.n_features() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least 2 samples and 2 features, got {}x{}",
            raw.n_samples(),
            raw.n_features()
        )));
    }
    let (standardized, standardization) = standardize(raw)?;
    let filtered = prefilter(&standardized, cfg.alpha, cfg.n_bins)?;
    info!(
        "{} of {} features passed the chi-square prefilter",
        filtered.dataset.n_features(),
        standardized.n_features()
    );
    Ok(Prepared {
        n_samples: raw.n_samples(),
        raw_features: raw.n_features(),
        standardization,
        dataset: filtered.dataset,
        prefilter: filtered.tests,
    })
}

#[derive(Debug, Clone)]
pub struct Rankings {
    pub eigenvalues: Vec<f64>,
    pub selection: ComponentSelection,
    pub pca_abs: FeatureRanking,
    pub pca_square: FeatureRanking,
    pub fa: FaOutcome,
}

impl Rankings {
    /// Rankings in report order; FA only when fitted.
    pub fn all(&self) -> Vec<&FeatureRanking> {
        let mut v = vec![&self.pca_abs, &self.pca_square];
        if let Some(m) = self.fa.model() {
            v.push(&m.ranking);
        }
        v
    }
}

pub fn rank(prepared: &Prepared, cfg: &RunConfig) -> Result<Rankings> {
    let ds = &prepared.dataset;
    let r = correlation_matrix(&ds.x)?;
    let eig = eigen_sym(&r)?;
    let loadings = pca_loadings(&eig, &ds.feature_names)?;
    let eigenvalues = eig.eigenvalues.to_vec();
    let selection = select_components(&eigenvalues, cfg.variance_threshold)?;
    let pca_abs = score_abs(&loadings, &selection)?;
    let pca_square = score_square(&loadings, &selection)?;
    let fa = if ds.n_features() >= 2 && ds.n_samples() > ds.n_features() {
        factor_analysis(&r, &eig, ds.n_samples(), &ds.feature_names, &cfg.fa_options())?
    } else {
        return Err(Error::DegenerateData(format!(
            "factor analysis needs n_samples > p and p >= 2 after prefiltering (got {}x{})",
            ds.n_samples(),
            ds.n_features()
        )));
    };
    Ok(Rankings {
        eigenvalues,
        selection,
        pca_abs,
        pca_square,
        fa,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSection {
    pub eigenvalues: Vec<f64>,
    pub selection: ComponentSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaSection {
    /// `"fitted"`, `"NA"` or `"empty_selection"`.
    pub status: String,
    pub gate: crate::fa::Gate,
    pub m: Option<usize>,
    /// KMO and Bartlett are computed on the prefiltered feature set.
    pub gate_feature_set: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n_samples: usize,
    pub n_features_raw: usize,
    pub dropped_zero_variance: Vec<String>,
    pub prefilter: Vec<FeatureTest>,
    pub prefiltered_features: Vec<String>,
    pub pca: PcaSection,
    pub fa: FaSection,
    pub rankings: BTreeMap<String, Vec<RankEntry>>,
    pub curves: Vec<AccuracyCurve>,
    pub shortlists: BTreeMap<String, ShortlistResult>,
    pub top_k: Vec<TopKRow>,
    pub warnings: Vec<String>,
    pub manifest: Vec<ManifestEntry>,
}

impl RunReport {
    pub fn curve(&self, method: &str) -> Option<&AccuracyCurve> {
        self.curves.iter().find(|c| c.method == method)
    }
}

/// Writes `bytes` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct OutputWriter {
    root: PathBuf,
    manifest: Vec<ManifestEntry>,
}

impl OutputWriter {
    fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            manifest: Vec::new(),
        }
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(rel), bytes)?;
        self.manifest.push(ManifestEntry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

fn fa_section(outcome: &FaOutcome) -> FaSection {
    let (status, m) = match outcome {
        FaOutcome::Fitted { model, .. } => ("fitted", Some(model.m)),
        FaOutcome::GateFailed { .. } => ("NA", None),
        FaOutcome::EmptySelection { m, .. } => ("empty_selection", Some(*m)),
    };
    FaSection {
        status: status.into(),
        gate: outcome.gate().clone(),
        m,
        gate_feature_set: "prefiltered".into(),
    }
}

fn rankings_map(rankings: &Rankings) -> BTreeMap<String, Vec<RankEntry>> {
    rankings
        .all()
        .into_iter()
        .map(|r| (r.method.to_string(), r.entries()))
        .collect()
}

fn collect_warnings(prepared: &Prepared, rankings: &Rankings) -> Vec<String> {
    let mut warnings: Vec<String> = prepared
        .standardization
        .dropped()
        .map(|f| format!("dropped zero-variance feature {f:?}"))
        .collect();
    for t in &prepared.prefilter {
        if let Some(note) = &t.note {
            warnings.push(format!("feature {:?} not testable: {note}", t.feature));
        }
    }
    match &rankings.fa {
        FaOutcome::GateFailed { gate } => warnings.push(format!(
            "factor analysis skipped (NA): KMO = {}, Bartlett p = {:.3e}",
            gate.kmo.map_or_else(|| "undefined".to_string(), |k| format!("{k:.4}")),
            gate.bartlett.p_value
        )),
        FaOutcome::EmptySelection { .. } => {
            warnings.push("factor analysis retained no feature at the loading threshold".into())
        }
        FaOutcome::Fitted { model, .. } if !model.varimax_converged => {
            warnings.push("varimax rotation did not converge".into())
        }
        FaOutcome::Fitted { .. } => {}
    }
    warnings
}

/// Output of the `rank` stage, written without running any evaluation.
pub fn run_rank(cfg: &RunConfig) -> Result<(Prepared, Rankings)> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let rankings = rank(&prepared, cfg)?;
    let mut out = OutputWriter::new(&cfg.output_dir);
    out.write_json("standardization.json", &prepared.standardization)?;
    out.write_json(
        "factors.json",
        &FactorReport::from_outcome(&rankings.fa, &prepared.dataset.feature_names),
    )?;
    for r in rankings.all() {
        out.write_json(&format!("rankings/{}.json", r.method), &r.entries())?;
    }
    Ok((prepared, rankings))
}

/// Runs every stage and writes the output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    run_prepared(&prepared, cfg)
}

/// Ranking, evaluation and output for already prepared data.
pub fn run_prepared(prepared: &Prepared, cfg: &RunConfig) -> Result<RunReport> {
    let rankings = rank(prepared, cfg)?;
    let mut warnings = collect_warnings(prepared, &rankings);
    for w in &warnings {
        warn!("{w}");
    }
    let curve_cfg = cfg.curve_config();
    let ds = &prepared.dataset;

    let mut curves = Vec::new();
    for r in rankings.all() {
        info!("accuracy curve for {} ({} features)", r.method, r.len());
        curves.push(accuracy_curve(ds, r, &curve_cfg)?);
    }
    let names: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    info!("random baseline ({} shuffles)", cfg.shuffles);
    curves.push(random_baseline(ds, &names, cfg.shuffles, &curve_cfg)?);

    let mut shortlists = BTreeMap::new();
    for c in &curves {
        shortlists.insert(c.method.clone(), steady_point(c, cfg.delta)?);
    }
    let top_k = top_k_summary(&curves, cfg.top_k)?;
    for row in top_k.iter().filter(|r| r.truncated) {
        warnings.push(format!(
            "{}: only {} features available for the top-{} summary",
            row.method, row.k_used, row.k_requested
        ));
    }

    let mut out = OutputWriter::new(&cfg.output_dir);
    out.write("config.toml", cfg.to_toml()?.as_bytes())?;
    out.write_json("standardization.json", &prepared.standardization)?;
    out.write_json(
        "factors.json",
        &FactorReport::from_outcome(&rankings.fa, &ds.feature_names),
    )?;
    for r in rankings.all() {
        out.write_json(&format!("rankings/{}.json", r.method), &r.entries())?;
    }
    for c in &curves {
        out.write(&format!("curves/{}.csv", c.method), curves_csv(&[c]).as_bytes())?;
    }

    let report = RunReport {
        config: cfg.clone(),
        n_samples: prepared.n_samples,
        n_features_raw: prepared.raw_features,
        dropped_zero_variance: prepared.standardization.dropped().map(str::to_string).collect(),
        prefilter: prepared.prefilter.clone(),
        prefiltered_features: ds.feature_names.clone(),
        pca: PcaSection {
            eigenvalues: rankings.eigenvalues.clone(),
            selection: rankings.selection,
        },
        fa: fa_section(&rankings.fa),
        rankings: rankings_map(&rankings),
        curves,
        shortlists,
        top_k,
        warnings,
        manifest: out.manifest,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_atomic(&cfg.output_dir.join("report.json"), text.as_bytes())?;
    Ok(report)
}

/// Reads a ranking file (`[{rank, feature, score}]`).
pub fn load_ranking(path: impl AsRef<Path>) -> Result<Vec<RankEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Curve, steady point and CSV for an externally supplied ranking.
pub fn run_eval(
    cfg: &RunConfig,
    entries: &[RankEntry],
    method: &str,
) -> Result<(AccuracyCurve, ShortlistResult)> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let ranking = FeatureRanking::from_entries(RankingMethod::Custom, entries, &prepared.dataset.feature_names)?;
    let names = ranking.ranked_names();
    let curve = crate::harness::curve_for_order(&prepared.dataset, &names, method, &cfg.curve_config())?;
    let shortlist = steady_point(&curve, cfg.delta)?;
    let mut out = OutputWriter::new(&cfg.output_dir);
    out.write(&format!("curves/{method}.csv"), curves_csv(&[&curve]).as_bytes())?;
    out.write_json(&format!("curves/{method}.json"), &curve)?;
    Ok((curve, shortlist))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Human-readable summary of a report.
pub fn render_report(report: &RunReport) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "input:        {}", report.config.input.display());
    let _ = writeln!(s, "samples:      {}", report.n_samples);
    let _ = writeln!(
        s,
        "features:     {} raw, {} after prefilter (alpha = {})",
        report.n_features_raw,
        report.prefiltered_features.len(),
        report.config.alpha
    );
    let _ = writeln!(
        s,
        "pca:          {} components explain {:.2}% of variance",
        report.pca.selection.count,
        100.0 * report.pca.selection.cumulative_variance
    );
    let gate = &report.fa.gate;
    let _ = writeln!(
        s,
        "fa gate:      KMO = {}, Bartlett chi2 = {:.3} (dof {}), p = {:.3e} -> {}",
        gate.kmo.map_or_else(|| "undefined".into(), |k| format!("{k:.4}")),
        gate.bartlett.statistic,
        gate.bartlett.dof,
        gate.bartlett.p_value,
        if gate.passed { "pass" } else { "fail" }
    );
    let _ = writeln!(
        s,
        "fa:           {}{}",
        report.fa.status,
        report.fa.m.map_or_else(String::new, |m| format!(" (m = {m})"))
    );
    let _ = writeln!(s);
    s.push_str(&crate::harness::top_k_table(&report.top_k));
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<12} {:>8} {:>10}", "method", "k_steady", "reference");
    for (m, sl) in &report.shortlists {
        let _ = writeln!(s, "{:<12} {:>8} {:>10.5}", m, sl.k_steady, sl.reference_accuracy);
    }
    for (method, entries) in &report.rankings {
        let _ = writeln!(s);
        let _ = writeln!(s, "# {method} (top {})", report.config.top_k.min(entries.len()));
        for e in entries.iter().take(report.config.top_k) {
            let _ = writeln!(s, "{:>4}  {:<24} {:>10.6}", e.rank, e.feature, e.score);
        }
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(s);
        for w in &report.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig {
            repeats: 7,
            forest: ForestParams {
                n_trees: 12,
                max_depth: Some(4),
                max_features: MaxFeatures::Fixed(3),
                ..ForestParams::default()
            },
            ..RunConfig::default()
        };
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn config_rejects_out_of_range_values() {
        assert!(RunConfig::from_toml("alpha = 0.0").is_err());
        assert!(RunConfig::from_toml("test_fraction = 1.0").is_err());
        assert!(RunConfig::from_toml("[forest]\nn_trees = 0").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("repeats = 3").is_ok());
    }
}
