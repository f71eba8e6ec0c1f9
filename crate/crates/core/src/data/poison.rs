use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Relabel every `source` sample as `target`.
pub fn flip_labels(ds: &Dataset, source: usize, target: usize) -> Result<Dataset> {
    if source == target {
        return Err(Error::precondition("label flip needs distinct source and target"));
    }
    if source >= ds.num_classes || target >= ds.num_classes {
        return Err(Error::precondition(format!(
            "label flip {source}->{target} outside {} classes",
            ds.num_classes
        )));
    }
    let mut out = ds.clone();
    for l in &mut out.labels {
        if *l == source {
            *l = target;
        }
    }
    Ok(out)
}

fn normal(mean: f64, variance: f64) -> Result<Normal<f64>> {
    if !(variance >= 0.0) {
        return Err(Error::precondition(format!("noise variance {variance} must be >= 0")));
    }
    Normal::new(mean, variance.sqrt()).map_err(|e| Error::precondition(e.to_string()))
}

fn draw(dist: &Normal<f64>, variance: f64, rng: &mut Rng) -> f64 {
    if variance == 0.0 {
        dist.mean()
    } else {
        dist.sample(rng)
    }
}

/// The pre-clip perturbations `add_gaussian_noise` applies, in row-major order.
pub fn gaussian_perturbations(count: usize, mean: f64, variance: f64, seed: u64) -> Result<Vec<f64>> {
    let dist = normal(mean, variance)?;
    let mut r = rng::stream(seed, "gaussian-noise", &[]);
    Ok((0..count).map(|_| draw(&dist, variance, &mut r)).collect())
}

/// `x' = clip(x + N(mean, variance), 0, 1)` elementwise.
pub fn add_gaussian_noise(ds: &Dataset, mean: f64, variance: f64, seed: u64) -> Result<Dataset> {
    let dist = normal(mean, variance)?;
    let mut r = rng::stream(seed, "gaussian-noise", &[]);
    let mut out = ds.clone();
    for v in out.features.iter_mut() {
        *v = (*v + draw(&dist, variance, &mut r)).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Salt-and-pepper: exactly `round(pixel_frac * d)` positions per sample are
/// set to 1 (with probability `salt_ratio`) or 0.
pub fn add_sap_noise(ds: &Dataset, pixel_frac: f64, salt_ratio: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&pixel_frac) || !(0.0..=1.0).contains(&salt_ratio) {
        return Err(Error::precondition("pixel fraction and salt ratio must lie in [0, 1]"));
    }
    let d = ds.feature_dim();
    let k = (pixel_frac * d as f64).round() as usize;
    let mut r = rng::stream(seed, "sap-noise", &[]);
    let mut out = ds.clone();
    for mut row in out.features.rows_mut() {
        for j in rand::seq::index::sample(&mut r, d, k) {
            row[j] = if r.random::<f64>() < salt_ratio { 1.0 } else { 0.0 };
        }
    }
    Ok(out)
}

/// Deterministic additive pattern `(amplitude / 255) * cos(2π f (row + col))`.
/// Non-square feature vectors use the flat index as the spatial argument.
pub fn add_cosine_noise(ds: &Dataset, amplitude: f64, frequency: f64) -> Dataset {
    let d = ds.feature_dim();
    let side = match ds.image_shape {
        Some((_, cols)) => Some(cols),
        None => {
            let s = (d as f64).sqrt().round() as usize;
            (s * s == d).then_some(s)
        }
    };
    let pattern: Vec<f64> = (0..d)
        .map(|idx| {
            let arg = match side {
                Some(s) => (idx / s + idx % s) as f64,
                None => idx as f64,
            };
            amplitude / 255.0 * (2.0 * PI * frequency * arg).cos()
        })
        .collect();
    let mut out = ds.clone();
    for mut row in out.features.rows_mut() {
        for (v, p) in row.iter_mut().zip(&pattern) {
            *v = (*v + p).clamp(0.0, 1.0);
        }
    }
    out
}
