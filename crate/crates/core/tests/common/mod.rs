#![allow(dead_code)]

use loadrank::rng::rng_from_seed;
use loadrank::stats::{correlation_matrix, CorrelationMatrix};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Standard-normal `n × p` matrix mixed through a random `p × p` matrix so
/// that its columns are correlated.
pub fn correlated_data(seed: u64, n: usize, p: usize) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    let z = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
    let mix = Array2::from_shape_fn((p, p), |(i, j)| {
        if i == j {
            1.0
        } else {
            rng.gen_range(-0.8..0.8)
        }
    });
    z.dot(&mix)
}

/// Column-standardized copy (population standard deviation).
pub fn standardized(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut col in out.columns_mut() {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    out
}

/// Correlation matrix of random correlated data with `n = 4p + 20` rows.
pub fn random_correlation(seed: u64, p: usize) -> CorrelationMatrix {
    correlation_matrix(&standardized(&correlated_data(seed, 4 * p + 20, p))).unwrap()
}

pub fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
