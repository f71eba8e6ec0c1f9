use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::arch::{Activation, ArchSpec, OutputHead, ParamVector};
use super::network::{loss_and_grad, loss_only, one_hot, Loss, Mode, Network};
use crate::error::{Error, Result};
use crate::rng;

/// Maximum relative error between the analytic gradient and central finite
/// differences: `|a - n| / max(1e-8, |a| + |n|)` over all parameters.
pub fn grad_check(
    net: &Network,
    batch: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    loss: Loss,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::precondition(format!("finite-difference step {eps} must be > 0")));
    }
    let (_, analytic) = loss_and_grad(net, batch, targets, loss, Mode::Train)?;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.params.len() {
        let orig = net.params.values()[i];
        probe.params.values_mut()[i] = orig + eps;
        let up = loss_only(&probe, batch, targets, loss, Mode::Train)?;
        probe.params.values_mut()[i] = orig - eps;
        let down = loss_only(&probe, batch, targets, loss, Mode::Train)?;
        probe.params.values_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.values()[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// A seeded random gradient-check problem: up to three hidden layers of up to
/// 64 units with smooth activations (kinks would make central differences
/// straddle a non-differentiable point), optional batch-norm, a random head,
/// and a batch of 8.
pub fn random_case(seed: u64) -> Result<(Network, Array2<f64>, Array2<f64>, Loss)> {
    let mut r = rng::stream(seed, "gradcheck-case", &[]);
    let act = [Activation::Tanh, Activation::Sigmoid, Activation::Identity][r.random_range(0..3usize)];
    // Batch-norm is scale invariant in its inputs: with a single input unit, or
    // stacked on linear layers, some true gradients are exactly zero and the
    // relative error degenerates to finite-difference noise.
    let batch_norm = act != Activation::Identity && r.random_bool(0.5);
    let min_width = if batch_norm { 2 } else { 1 };
    let input = r.random_range(min_width..=12usize);
    let hidden = r.random_range(0..=3usize);
    let mut dims = vec![input];
    dims.extend((0..hidden).map(|_| r.random_range(min_width..=64usize)));
    let (loss, out) = match r.random_range(0..3u8) {
        0 => (Loss::CrossEntropy, r.random_range(2..=6usize)),
        1 => (Loss::BinaryCrossEntropy, 1),
        _ => (Loss::MeanSquared, r.random_range(1..=4usize)),
    };
    dims.push(out);
    let head = match loss {
        Loss::CrossEntropy => OutputHead::SoftmaxCrossEntropy,
        Loss::BinaryCrossEntropy => OutputHead::SigmoidBce,
        Loss::MeanSquared => OutputHead::Linear,
    };
    let arch = ArchSpec::mlp(&dims, act, Activation::Identity, batch_norm, head)?;
    let mut params = ParamVector::glorot(arch, &mut r);
    // nonzero biases and affine terms so every parameter has a generic gradient
    for v in params.values_mut() {
        *v += 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut r);
    }
    let batch = 8;
    let x = Array2::from_shape_fn((batch, input), |_| StandardNormal.sample(&mut r));
    let t = match loss {
        Loss::CrossEntropy => one_hot(&(0..batch).map(|_| r.random_range(0..out)).collect::<Vec<_>>(), out),
        Loss::BinaryCrossEntropy => Array2::from_shape_fn((batch, 1), |_| f64::from(u8::from(r.random_bool(0.5)))),
        Loss::MeanSquared => Array2::from_shape_fn((batch, out), |_| StandardNormal.sample(&mut r)),
    };
    Ok((Network::new(params), x, t, loss))
}

/// Worst relative error of `grad_check` on each of `count` random cases.
pub fn random_suite(count: usize, seed: u64, eps: f64) -> Result<Vec<f64>> {
    (0..count as u64)
        .map(|i| {
            let (net, x, t, loss) = random_case(rng::derive_seed(seed, "gradcheck", &[i]))?;
            grad_check(&net, x.view(), t.view(), loss, eps)
        })
        .collect()
}
