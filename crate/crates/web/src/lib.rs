//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every entry point takes plain numbers or a JSON string and returns JSON,
//! so the page needs no generated TypeScript types.

use fedpoison::mcd::{detect_period, synthetic_population, McdConfig, SyntheticSpec};
use fedpoison::vaguegan::{equilibrium_ratio, optimal_discriminator, vague_loss_terms};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn json(v: &impl Serialize) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(to_js)
}

#[derive(Serialize)]
struct Curve {
    x: Vec<f64>,
    p_data: Vec<f64>,
    p_gen: Vec<f64>,
    d_star: Vec<Option<f64>>,
    d_cap: f64,
    equilibrium_ratio: f64,
}

fn gaussian(x: f64, mu: f64) -> f64 {
    (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Optimal discriminator for unit Gaussians at 0 (data) and `shift` (generator).
#[wasm_bindgen]
pub fn discriminator_curve(kappa: f64, shift: f64, points: usize) -> Result<String, JsValue> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(to_js("kappa must lie in [0, 1)"));
    }
    let points = points.clamp(2, 2000);
    let (lo, hi) = (shift.min(0.0) - 4.0, shift.max(0.0) + 4.0);
    let x: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let p_data: Vec<f64> = x.iter().map(|&v| gaussian(v, 0.0)).collect();
    let p_gen: Vec<f64> = x.iter().map(|&v| gaussian(v, shift)).collect();
    let d_star = optimal_discriminator(&p_data, &p_gen, kappa).map_err(to_js)?;
    json(&Curve {
        x,
        p_data,
        p_gen,
        d_star,
        d_cap: 1.0 / (1.0 + kappa),
        equilibrium_ratio: equilibrium_ratio(kappa),
    })
}

#[derive(Serialize)]
struct Losses {
    disc: f64,
    gen: f64,
}

/// Discriminator and generator losses for comma-separated probabilities.
#[wasm_bindgen]
pub fn losses(kappa: f64, d_real: &str, d_fake: &str) -> Result<String, JsValue> {
    let parse = |s: &str| -> Result<Vec<f64>, JsValue> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| to_js(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(to_js("probabilities must lie in [0, 1]"));
        }
        Ok(v)
    };
    let (disc, gen) = vague_loss_terms(&parse(d_real)?, &parse(d_fake)?, kappa);
    json(&Losses { disc, gen })
}

#[derive(Serialize)]
struct McdDemo {
    malicious: Vec<usize>,
    report: fedpoison::mcd::DetectionReport,
    recall: f64,
    false_positives: usize,
}

/// Build a synthetic one-period population from a `SyntheticSpec` JSON object
/// (missing fields take defaults) and run the consistency detector on it.
#[wasm_bindgen]
pub fn mcd_demo(spec_json: &str, seed: u64, delta: f64) -> Result<String, JsValue> {
    let spec: SyntheticSpec = serde_json::from_str(spec_json).map_err(to_js)?;
    let pop = synthetic_population(&spec, seed).map_err(to_js)?;
    let cfg = McdConfig {
        delta,
        period: pop.store.period_len(),
        ..McdConfig::default()
    };
    let period = *pop.store.periods().first().ok_or_else(|| to_js("empty population"))?;
    let report = detect_period(&pop.store, period, &cfg, None).map_err(to_js)?;
    let hits = report.flagged.iter().filter(|id| pop.malicious.contains(id)).count();
    let recall = if pop.malicious.is_empty() { 1.0 } else { hits as f64 / pop.malicious.len() as f64 };
    json(&McdDemo {
        false_positives: report.flagged.len() - hits,
        malicious: pop.malicious,
        report,
        recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_is_capped_and_halves_on_overlap() {
        let v: serde_json::Value = serde_json::from_str(&discriminator_curve(0.25, 0.0, 11).unwrap()).unwrap();
        let d = v["d_star"].as_array().unwrap();
        assert!(d.iter().all(|x| (x.as_f64().unwrap() - 0.5 / 1.25).abs() < 1e-12));
        assert!((v["equilibrium_ratio"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn losses_match_core() {
        let v: serde_json::Value = serde_json::from_str(&losses(0.2, "0.5, 0.6", "0.3").unwrap()).unwrap();
        let (d, g) = vague_loss_terms(&[0.5, 0.6], &[0.3], 0.2);
        assert_eq!(v["disc"].as_f64(), Some(d));
        assert_eq!(v["gen"].as_f64(), Some(g));
    }

    #[test]
    fn mcd_demo_finds_compact_clients() {
        let v: serde_json::Value = serde_json::from_str(&mcd_demo("{}", 7, 2.0).unwrap()).unwrap();
        assert_eq!(v["malicious"].as_array().unwrap().len(), 4);
        assert!(v["recall"].as_f64().unwrap() > 0.5);
    }
}
