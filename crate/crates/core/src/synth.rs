//! Seeded latent-factor fixtures with known informative features.

use std::fmt::Write as _;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MappingScheme, RatingMapping};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub n_factors: usize,
    pub n_classes: usize,
    /// Loading of each informative feature on its latent factor, in (0, 1).
    pub loading: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_samples: 600,
            n_informative: 8,
            n_noise: 32,
            n_factors: 2,
            n_classes: 4,
            loading: 0.9,
            seed: 0,
        }
    }
}

/// Which generated columns carry signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Latent factor (0-based) of each informative feature; `None` for noise.
    pub factor_of: Vec<Option<usize>>,
}

impl SynthTruth {
    pub fn informative(&self) -> impl Iterator<Item = usize> + '_ {
        self.factor_of
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.map(|_| i))
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_informative < self.n_factors {
            return Err(Error::InvalidArgument(format!(
                "n_informative ({}) must be at least n_factors ({})",
                self.n_informative, self.n_factors
            )));
        }
        if self.n_informative > 0 && self.n_factors == 0 {
            return Err(Error::InvalidArgument(
                "informative features need at least one latent factor".into(),
            ));
        }
        if self.n_informative + self.n_noise < 2 {
            return Err(Error::InvalidArgument("need at least 2 features".into()));
        }
        if !(2..=21).contains(&self.n_classes) {
            return Err(Error::InvalidArgument(format!(
                "n_classes must lie in 2..=21, got {}",
                self.n_classes
            )));
        }
        if self.n_samples < 2 * self.n_classes {
            return Err(Error::InvalidArgument(
                "need at least two samples per class".into(),
            ));
        }
        if !(self.loading > 0.0 && self.loading < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "loading must lie in (0, 1), got {}",
                self.loading
            )));
        }
        Ok(())
    }
}

/// Draws a dataset: informative feature `i` is
/// `loading · z_f + sqrt(1 − loading²) · ε` with `f = i mod n_factors`;
/// noise features are i.i.d. standard normal; the class is the
/// equal-frequency bin (1..=n_classes) of `Σ_f z_f`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Dataset, SynthTruth)> {
    spec.validate()?;
    let n = spec.n_samples;
    let p = spec.n_informative + spec.n_noise;
    let mut rng = rng_from_seed(derive_seed(spec.seed, &[0x5359_4e54])); // "SYNT"
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let latent_count = spec.n_factors.max(1);
    let unique = (1.0 - spec.loading * spec.loading).sqrt();
    let mut x = Array2::<f64>::zeros((n, p));
    let mut score = Vec::with_capacity(n);
    for i in 0..n {
        let z: Vec<f64> = (0..latent_count).map(|_| normal()).collect();
        for j in 0..spec.n_informative {
            x[[i, j]] = spec.loading * z[j % spec.n_factors] + unique * normal();
        }
        for j in spec.n_informative..p {
            x[[i, j]] = normal();
        }
        score.push(z.iter().sum::<f64>());
    }

    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let mut y = vec![0u32; n];
    for (rank, &i) in by_score.iter().enumerate() {
        y[i] = (rank * spec.n_classes / n) as u32 + 1;
    }

    let mut names = Vec::with_capacity(p);
    let mut factor_of = Vec::with_capacity(p);
    for j in 0..spec.n_informative {
        names.push(format!("inf{:02}", j));
        factor_of.push(Some(j % spec.n_factors));
    }
    for j in 0..spec.n_noise {
        names.push(format!("noise{:02}", j));
        factor_of.push(None);
    }
    Ok((Dataset::new(names, x, y)?, SynthTruth { factor_of }))
}

/// Serializes a dataset as CSV with the class written as a rating string of
/// `scheme` in a trailing `target` column.
pub fn dataset_to_csv(dataset: &Dataset, target: &str, scheme: MappingScheme) -> Result<String> {
    let mapping = RatingMapping::new(scheme);
    let mut out = String::new();
    for name in &dataset.feature_names {
        out.push_str(name);
        out.push(',');
    }
    out.push_str(target);
    out.push('\n');
    for (row, &class) in dataset.x.rows().into_iter().zip(&dataset.y) {
        for v in row {
            let _ = write!(out, "{v},");
        }
        let label = mapping.label_for(class).ok_or_else(|| {
            Error::InvalidArgument(format!("class {class} has no {scheme} rating label"))
        })?;
        out.push_str(label);
        out.push('\n');
    }
    Ok(out)
}
