use ndarray::ArrayView2;

use super::loss::LOG_CLAMP;
use crate::error::{Error, Result};

/// Closed-form optimal discriminator `p_d / ((1+k)(p_d + p_g))` per support
/// point; `None` where both densities vanish.
pub fn optimal_discriminator(p_d: &[f64], p_g: &[f64], kappa: f64) -> Result<Vec<Option<f64>>> {
    if p_d.len() != p_g.len() {
        return Err(Error::Shape {
            context: "density supports",
            expected: p_d.len(),
            found: p_g.len(),
        });
    }
    if p_d.iter().chain(p_g).any(|&p| !(p >= 0.0)) {
        return Err(Error::precondition("densities must be nonnegative"));
    }
    Ok(p_d
        .iter()
        .zip(p_g)
        .map(|(&d, &g)| (d + g > 0.0).then(|| d / ((1.0 + kappa) * (d + g))))
        .collect())
}

/// Ratio `p_g / p_d = (1-k)/(1+k)` at the suppressed equilibrium.
pub fn equilibrium_ratio(kappa: f64) -> f64 {
    (1.0 - kappa) / (1.0 + kappa)
}

/// `mean_i ln Q(code_i | x_i) + H(prior)`, probabilities clamped at 1e-7.
pub fn mi_lower_bound(q_probs: ArrayView2<f64>, codes: &[usize], prior_entropy: f64) -> Result<f64> {
    if q_probs.nrows() != codes.len() {
        return Err(Error::Shape {
            context: "code samples",
            expected: q_probs.nrows(),
            found: codes.len(),
        });
    }
    if let Some(&c) = codes.iter().find(|&&c| c >= q_probs.ncols()) {
        return Err(Error::precondition(format!("code {c} outside {} categories", q_probs.ncols())));
    }
    if codes.is_empty() {
        return Ok(prior_entropy);
    }
    let total: f64 = codes
        .iter()
        .enumerate()
        .map(|(i, &c)| q_probs[[i, c]].max(LOG_CLAMP).ln())
        .sum();
    Ok(total / codes.len() as f64 + prior_entropy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn discriminator_fixtures() {
        let d = optimal_discriminator(&[0.25; 4], &[0.25; 4], 0.0).unwrap();
        assert!(d.iter().all(|v| *v == Some(0.5)));
        let d = optimal_discriminator(&[0.3, 0.0], &[0.3, 0.0], 0.2).unwrap();
        assert!((d[0].unwrap() - 1.0 / 2.4).abs() < 1e-15);
        assert_eq!(d[1], None);
        assert!(optimal_discriminator(&[0.1], &[0.1, 0.2], 0.2).is_err());
    }

    #[test]
    fn ratio_fixtures() {
        assert_eq!(equilibrium_ratio(0.0), 1.0);
        assert!((equilibrium_ratio(0.2) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mi_bound_fixtures() {
        let k = 4;
        let h = (k as f64).ln();
        let codes = vec![0, 1, 2, 3, 1];
        let one_hot = crate::nn::one_hot(&codes, k);
        assert!((mi_lower_bound(one_hot.view(), &codes, h).unwrap() - h).abs() < 1e-15);
        let uniform = Array2::from_elem((5, k), 0.25);
        assert!(mi_lower_bound(uniform.view(), &codes, h).unwrap().abs() < 1e-15);
        let mut q = Array2::from_elem((5, k), 0.1);
        for (i, &c) in codes.iter().enumerate() {
            q[[i, c]] = 0.7;
        }
        let l = mi_lower_bound(q.view(), &codes, h).unwrap();
        assert!((l - 1.0296).abs() < 1e-4, "{l}");
        let zero = Array2::zeros((1, k));
        assert!((mi_lower_bound(zero.view(), &[2], 0.0).unwrap() - LOG_CLAMP.ln()).abs() < 1e-12);
    }
}
