//! Suppressed GAN objective and its logit-space gradients.

pub const LOG_CLAMP: f64 = 1e-7;

fn clamped_ln(a: f64) -> (f64, bool) {
    if a < LOG_CLAMP {
        (LOG_CLAMP.ln(), false)
    } else if a > 1.0 {
        (0.0, false)
    } else {
        (a.ln(), true)
    }
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        v.sum::<f64>() / n as f64
    }
}

/// `(disc_loss, gen_loss)` for discriminator probabilities on real and fake batches.
///
/// disc = -mean log((1+k) D_real) - mean log(1 - (1+k) D_fake),
/// gen  =  mean log(1 - (1+k) D_fake), every log argument clamped to `[1e-7, 1]`.
pub fn vague_loss_terms(d_real: &[f64], d_fake: &[f64], kappa: f64) -> (f64, f64) {
    let s = 1.0 + kappa;
    let real = mean(d_real.iter().map(|&p| clamped_ln(s * p).0), d_real.len());
    let fake = mean(d_fake.iter().map(|&p| clamped_ln(1.0 - s * p).0), d_fake.len());
    (-(real + fake), fake)
}

/// d/dlogit of `-ln clamp((1+k) p)` for one real sample.
pub(crate) fn real_term_grad(p: f64, kappa: f64) -> f64 {
    if clamped_ln((1.0 + kappa) * p).1 {
        -(1.0 - p)
    } else {
        0.0
    }
}

/// d/dlogit of `ln clamp(1 - (1+k) p)`; the discriminator minimizes its negative.
pub(crate) fn fake_term_grad(p: f64, kappa: f64) -> f64 {
    let b = 1.0 - (1.0 + kappa) * p;
    if clamped_ln(b).1 {
        -(1.0 + kappa) * p * (1.0 - p) / b
    } else {
        0.0
    }
}
