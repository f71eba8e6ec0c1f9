use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::loss::{fake_term_grad, real_term_grad, vague_loss_terms};
use super::{GanConfig, GanModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    hconcat, one_hot, softmax_rows, Activation, ArchSpec, Forward, Mode, Network, OptimizerKind,
    OptimizerState, OutputHead, ParamVector,
};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Conditioning {
    /// Generator and discriminator both see the one-hot label.
    Labels,
    /// Generator sees latent codes; the discriminator sees samples only.
    Codes { categorical: usize, continuous: usize, info: bool },
}

struct GenInput {
    input: Array2<f64>,
    categorical: Vec<usize>,
    continuous: Array2<f64>,
}

fn gaussian(rows: usize, cols: usize, r: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(r))
}

fn gen_arch(cfg: &GanConfig, cond_dim: usize, out_dim: usize) -> Result<ArchSpec> {
    let mut dims = vec![cfg.noise_dim + cond_dim];
    dims.extend_from_slice(&cfg.gen_hidden);
    dims.push(out_dim);
    ArchSpec::mlp(
        &dims,
        Activation::LeakyRelu(cfg.leaky_slope),
        Activation::Sigmoid,
        true,
        OutputHead::Linear,
    )
}

/// Batch-norm on every hidden layer except the first, which sees raw pixels.
fn disc_arch(cfg: &GanConfig, in_dim: usize) -> Result<ArchSpec> {
    let mut dims = vec![in_dim];
    dims.extend_from_slice(&cfg.disc_hidden);
    dims.push(1);
    let layers = dims.len() - 1;
    let mut acts = vec![Activation::LeakyRelu(cfg.leaky_slope); layers];
    acts[layers - 1] = Activation::Identity;
    let bn = (0..layers).map(|l| l > 0 && l + 1 < layers).collect();
    ArchSpec::new(dims, acts, bn, OutputHead::SigmoidBce)
}

/// Start the generator's sigmoid output at the local per-pixel mean; the
/// discriminator saturates within a few dozen full-batch steps, after which
/// the generator barely moves.
fn seed_output_bias(params: &mut ParamVector, real: &Array2<f64>) {
    let Some(bias) = params.arch().layouts().last().and_then(|l| l.bias) else {
        return;
    };
    let Some(mean) = real.mean_axis(Axis(0)) else {
        return;
    };
    for (b, &m) in params.values_mut()[bias..].iter_mut().zip(mean.iter()) {
        let m = m.clamp(0.01, 0.99);
        *b = (m / (1.0 - m)).ln();
    }
}

struct Trainer<'a> {
    cfg: &'a GanConfig,
    cond: Conditioning,
    real: Array2<f64>,
    labels: Option<Array2<f64>>,
    g: Network,
    d: Network,
    q: Option<Network>,
    opt_g: OptimizerState,
    opt_d: OptimizerState,
    opt_q: Option<OptimizerState>,
    num_classes: usize,
}

impl<'a> Trainer<'a> {
    fn new(ds: &Dataset, cfg: &'a GanConfig, cond: Conditioning) -> Result<Self> {
        let d_dim = ds.feature_dim();
        let (g_cond, d_cond, labels) = match cond {
            Conditioning::Labels => (ds.num_classes, ds.num_classes, Some(ds.one_hot_labels())),
            Conditioning::Codes { categorical, continuous, .. } => (categorical + continuous, 0, None),
        };
        let mut init = rng::stream(cfg.seed, "gan-init", &[]);
        let mut g_params = ParamVector::glorot(gen_arch(cfg, g_cond, d_dim)?, &mut init);
        seed_output_bias(&mut g_params, &ds.features);
        let g = Network::new(g_params);
        let d = Network::new(ParamVector::glorot(disc_arch(cfg, d_dim + d_cond)?, &mut init));
        let adam = OptimizerKind::adam(cfg.lr, cfg.beta1);
        let (q, opt_q) = match cond {
            Conditioning::Codes { categorical, continuous, .. } => {
                let feat = *cfg.disc_hidden.last().expect("validated non-empty");
                let arch = ArchSpec::mlp(
                    &[feat, categorical + continuous],
                    Activation::Identity,
                    Activation::Identity,
                    false,
                    OutputHead::Linear,
                )?;
                let q = Network::new(ParamVector::glorot(arch, &mut init));
                let opt = OptimizerState::new(adam, q.params.len())?;
                (Some(q), Some(opt))
            }
            Conditioning::Labels => (None, None),
        };
        Ok(Self {
            cfg,
            cond,
            real: ds.features.clone(),
            labels,
            opt_g: OptimizerState::new(adam, g.params.len())?,
            opt_d: OptimizerState::new(adam, d.params.len())?,
            g,
            d,
            q,
            opt_q,
            num_classes: ds.num_classes,
        })
    }

    fn gen_input(&self, r: &mut Rng) -> GenInput {
        let n = self.real.nrows();
        let z = gaussian(n, self.cfg.noise_dim, r);
        match self.cond {
            Conditioning::Labels => GenInput {
                input: hconcat(z.view(), self.labels.as_ref().expect("labels").view()),
                categorical: Vec::new(),
                continuous: Array2::zeros((n, 0)),
            },
            Conditioning::Codes { categorical, continuous, .. } => {
                let cat: Vec<usize> = (0..n).map(|_| r.random_range(0..categorical)).collect();
                let unif = Uniform::new(-1.0, 1.0).expect("valid range");
                let cont = Array2::from_shape_simple_fn((n, continuous), || unif.sample(r));
                let codes = hconcat(one_hot(&cat, categorical).view(), cont.view());
                GenInput {
                    input: hconcat(z.view(), codes.view()),
                    categorical: cat,
                    continuous: cont,
                }
            }
        }
    }

    fn disc_input(&self, samples: ArrayView2<f64>) -> Array2<f64> {
        match &self.labels {
            Some(y) => hconcat(samples, y.view()),
            None => samples.to_owned(),
        }
    }

    fn probs(fwd: &Forward) -> Vec<f64> {
        fwd.output().column(0).to_vec()
    }

    /// One discriminator pass over real rows stacked above `fake_in`, so batch
    /// statistics are shared between the two halves.
    fn disc_joint(&self, fake_in: ArrayView2<f64>) -> Result<Forward> {
        let real_in = self.disc_input(self.real.view());
        let both = ndarray::concatenate(Axis(0), &[real_in.view(), fake_in])
            .expect("matching columns");
        self.d.forward(both.view(), Mode::Train)
    }

    fn split_probs(&self, fwd: &Forward) -> (Vec<f64>, Vec<f64>) {
        let mut p = Self::probs(fwd);
        let pf = p.split_off(self.real.nrows());
        (p, pf)
    }

    /// Discriminator loss and gradient, plus the forward passes whose batch
    /// statistics the step folds into the running estimates.
    fn d_grads(&self, gi: &GenInput) -> Result<(f64, Vec<f64>, [Forward; 2])> {
        let kappa = self.cfg.kappa;
        let n = self.real.nrows() as f64;
        let g_fwd = self.g.forward(gi.input.view(), Mode::Train)?;
        let fake_in = self.disc_input(g_fwd.output().view());
        let fwd = self.disc_joint(fake_in.view())?;
        let (pr, pf) = self.split_probs(&fwd);
        let (d_loss, _) = vague_loss_terms(&pr, &pf, kappa);
        let out_grad: Vec<f64> = pr
            .iter()
            .map(|&p| real_term_grad(p, kappa) / n)
            .chain(pf.iter().map(|&p| -fake_term_grad(p, kappa) / n))
            .collect();
        let out_grad = Array2::from_shape_vec((out_grad.len(), 1), out_grad).expect("column");
        let grad = self.d.backward(&fwd, out_grad.view(), &[], false).params;
        Ok((d_loss, grad, [fwd, g_fwd]))
    }

    /// Generator objective `gen_loss + lambda * info_loss` with gradients for
    /// G and (when the information term is active) Q.
    fn g_grads(&self, gi: &GenInput) -> Result<(f64, Vec<f64>, Option<Vec<f64>>, Forward)> {
        let kappa = self.cfg.kappa;
        let n = self.real.nrows() as f64;
        let d_dim = self.real.ncols();
        let g_fwd = self.g.forward(gi.input.view(), Mode::Train)?;
        let fake_in = self.disc_input(g_fwd.output().view());
        let ff = self.disc_joint(fake_in.view())?;
        let rows = self.real.nrows();
        let (_, pf) = self.split_probs(&ff);
        let (_, mut loss) = vague_loss_terms(&[], &pf, kappa);
        let g_logit = Array2::from_shape_fn((rows + pf.len(), 1), |(i, _)| {
            if i < rows {
                0.0
            } else {
                fake_term_grad(pf[i - rows], kappa) / n
            }
        });
        let mut extra = Vec::new();
        let mut q_grad = None;
        if let (Conditioning::Codes { categorical, info: true, .. }, Some(q)) = (self.cond, &self.q) {
            let shared = self.d.arch().num_layers() - 2;
            let q_fwd = q.forward(ff.layer_output(shared).slice(s![rows.., ..]), Mode::Train)?;
            let out = q_fwd.output();
            let lambda = self.cfg.lambda;
            let logits = out.slice(s![.., ..categorical]).to_owned();
            let probs = softmax_rows(&logits);
            let mu = out.slice(s![.., categorical..]);
            let ce: f64 = gi
                .categorical
                .iter()
                .enumerate()
                .map(|(i, &c)| -probs[[i, c]].max(f64::MIN_POSITIVE).ln())
                .sum();
            let sq = (&mu - &gi.continuous).mapv(|v| v * v).sum();
            loss += lambda * (ce + 0.5 * sq) / n;
            let mut gq = Array2::zeros(out.dim());
            let target = one_hot(&gi.categorical, categorical);
            gq.slice_mut(s![.., ..categorical])
                .assign(&((&probs - &target) * (lambda / n)));
            gq.slice_mut(s![.., categorical..])
                .assign(&((&mu - &gi.continuous) * (lambda / n)));
            let qg = q.backward(&q_fwd, gq.view(), &[], true);
            q_grad = Some(qg.params);
            let q_in = qg.input.expect("input gradient requested");
            let mut padded = Array2::zeros((rows + q_in.nrows(), q_in.ncols()));
            padded.slice_mut(s![rows.., ..]).assign(&q_in);
            extra.push((shared, padded));
        }
        let extra_views: Vec<_> = extra.iter().map(|(l, g)| (*l, g.view())).collect();
        let dg = self.d.backward(&ff, g_logit.view(), &extra_views, true);
        let dx = dg.input.expect("input gradient requested");
        let gg = self.g.backward(&g_fwd, dx.slice(s![rows.., ..d_dim]), &[], false);
        Ok((loss, gg.params, q_grad, g_fwd))
    }

    fn epoch(&mut self, epoch: usize) -> Result<()> {
        let diverged = |e: Error| match e {
            Error::NonFinite { .. } => Error::Diverged { epoch },
            other => other,
        };
        let mut r = rng::stream(self.cfg.seed, "gan-epoch", &[epoch as u64]);

        let gi = self.gen_input(&mut r);
        let (d_loss, grad, [fwd, g_fwd]) = self.d_grads(&gi).map_err(diverged)?;
        if !d_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        self.d.absorb_batch_stats(&fwd);
        self.g.absorb_batch_stats(&g_fwd);
        self.opt_d.step_in_place(self.d.params.values_mut(), &grad)?;

        let gi = self.gen_input(&mut r);
        let (g_loss, grad, q_grad, g_fwd) = self.g_grads(&gi).map_err(diverged)?;
        if !g_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if let (Some(qg), Some(q), Some(opt)) = (q_grad, self.q.as_mut(), self.opt_q.as_mut()) {
            opt.step_in_place(q.params.values_mut(), &qg)?;
        }
        self.g.absorb_batch_stats(&g_fwd);
        self.opt_g.step_in_place(self.g.params.values_mut(), &grad)?;
        Ok(())
    }

    fn snapshot(&self, epochs: usize) -> GanModel {
        let mut config = self.cfg.clone();
        config.epochs = epochs;
        GanModel {
            generator: self.g.clone(),
            discriminator: self.d.clone(),
            q_head: self.q.clone(),
            config,
            num_classes: self.num_classes,
            feature_dim: self.real.ncols(),
        }
    }
}

fn run(ds: &Dataset, cfg: &GanConfig, cond: Conditioning, checkpoints: &[usize]) -> Result<Vec<GanModel>> {
    if ds.is_empty() {
        return Err(Error::precondition("GAN training needs a nonempty dataset"));
    }
    if checkpoints.is_empty() || checkpoints.contains(&0) {
        return Err(Error::precondition("GAN checkpoints must be positive epoch counts"));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::precondition("GAN checkpoints must be strictly increasing"));
    }
    let mut trainer = Trainer::new(ds, cfg, cond)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for epoch in 1..=*checkpoints.last().expect("nonempty") {
        trainer.epoch(epoch)?;
        if checkpoints[next] == epoch {
            out.push(trainer.snapshot(epoch));
            next += 1;
        }
    }
    Ok(out)
}

fn supervised_checks(cfg: &GanConfig) -> Result<()> {
    if cfg.code.is_some() {
        return Err(Error::precondition("supervised training takes no code spec"));
    }
    Ok(())
}

fn code_conditioning(ds: &Dataset, cfg: &GanConfig, info: bool) -> Result<Conditioning> {
    let code = cfg
        .code
        .as_ref()
        .ok_or_else(|| Error::precondition("unsupervised training needs a code spec"))?;
    Ok(Conditioning::Codes {
        categorical: code.categorical.unwrap_or(ds.num_classes),
        continuous: code.continuous,
        info,
    })
}

/// Conditional suppressed GAN trained for `cfg.epochs` full-batch epochs.
pub fn train_vaguegan(ds: &Dataset, cfg: &GanConfig) -> Result<GanModel> {
    cfg.validate(true)?;
    supervised_checks(cfg)?;
    Ok(run(ds, cfg, Conditioning::Labels, &[cfg.epochs])?.remove(0))
}

/// One training run snapshotted after each listed epoch count. Each snapshot
/// equals a direct `train_vaguegan` run with that many epochs.
pub fn train_vaguegan_checkpoints(ds: &Dataset, cfg: &GanConfig, checkpoints: &[usize]) -> Result<Vec<GanModel>> {
    let mut cfg = cfg.clone();
    cfg.epochs = checkpoints.last().copied().unwrap_or(0).max(1);
    cfg.validate(true)?;
    supervised_checks(&cfg)?;
    run(ds, &cfg, Conditioning::Labels, checkpoints)
}

/// Label-free variant: the generator is driven by latent codes and a code
/// classifier sharing the discriminator trunk maximizes their recoverability.
pub fn train_unsupervised(ds: &Dataset, cfg: &GanConfig) -> Result<GanModel> {
    cfg.validate(true)?;
    let cond = code_conditioning(ds, cfg, true)?;
    Ok(run(&ds.without_labels(), cfg, cond, &[cfg.epochs])?.remove(0))
}

pub fn train_unsupervised_checkpoints(ds: &Dataset, cfg: &GanConfig, checkpoints: &[usize]) -> Result<Vec<GanModel>> {
    let mut cfg = cfg.clone();
    cfg.epochs = checkpoints.last().copied().unwrap_or(0).max(1);
    cfg.validate(true)?;
    let cond = code_conditioning(ds, &cfg, true)?;
    run(&ds.without_labels(), &cfg, cond, checkpoints)
}

fn sample(gan: &GanModel, cond: ArrayView2<f64>, seed: u64, label: &str) -> Result<Array2<f64>> {
    let mut r = rng::stream(seed, label, &[]);
    let z = gaussian(cond.nrows(), gan.config.noise_dim, &mut r);
    let out = gan.generator.predict(hconcat(z.view(), cond).view())?;
    Ok(out.mapv(|v| v.clamp(0.0, 1.0)))
}

/// Codes the classifier assigns to real samples: argmax category plus
/// predicted style values clipped to the prior's support.
fn infer_codes(gan: &GanModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let q = gan.q_head.as_ref().expect("unsupervised model");
    let shared = gan.discriminator.arch().num_layers() - 2;
    let feats = gan.discriminator.forward(x, Mode::Eval)?;
    let out = q.predict(feats.layer_output(shared).view())?;
    let k = out.ncols() - gan.config.code.as_ref().map_or(0, |c| c.continuous);
    let cat: Vec<usize> = out
        .slice(s![.., ..k])
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect();
    let cont = out.slice(s![.., k..]).mapv(|v| v.clamp(-1.0, 1.0));
    Ok(hconcat(one_hot(&cat, k).view(), cont.view()))
}

/// One poisoned sample per original sample, keeping its label. Supervised
/// models condition on the label; unsupervised ones on the codes their
/// classifier reads off the original sample.
pub fn generate_poisoned(gan: &GanModel, ds: &Dataset) -> Result<Dataset> {
    generate_poisoned_seeded(gan, ds, gan.config.seed)
}

/// `generate_poisoned` with latent noise drawn from `seed` instead of the
/// GAN's own seed; lets one shared GAN poison several shards independently.
pub fn generate_poisoned_seeded(gan: &GanModel, ds: &Dataset, seed: u64) -> Result<Dataset> {
    if ds.is_empty() {
        return Ok(ds.clone());
    }
    if ds.feature_dim() != gan.feature_dim {
        return Err(Error::Shape {
            context: "poisoning dataset features",
            expected: gan.feature_dim,
            found: ds.feature_dim(),
        });
    }
    let cond = if gan.is_unsupervised() {
        infer_codes(gan, ds.features.view())?
    } else {
        if ds.num_classes != gan.num_classes {
            return Err(Error::precondition("dataset classes differ from the GAN's"));
        }
        ds.one_hot_labels()
    };
    let features = sample(gan, cond.view(), seed, "gan-generate")?;
    Ok(Dataset {
        features,
        labels: ds.labels.clone(),
        num_classes: ds.num_classes,
        image_shape: ds.image_shape,
    })
}

/// Append `round(frac * n)` samples from a locally trained regular (unsuppressed)
/// conditional GAN, labeled by the class they were generated for.
pub fn augment_poisongan(ds: &Dataset, frac: f64, cfg: &GanConfig, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::precondition(format!("augmentation fraction {frac} outside [0, 1]")));
    }
    let m = (frac * ds.len() as f64).round() as usize;
    if m == 0 {
        return Ok(ds.clone());
    }
    let mut cfg = cfg.clone();
    cfg.kappa = 0.0;
    cfg.code = None;
    cfg.seed = seed;
    let gan = train_vaguegan(ds, &cfg)?;
    let mut r = rng::stream(seed, "poisongan-labels", &[]);
    let labels: Vec<usize> = (0..m).map(|_| ds.labels[r.random_range(0..ds.len())]).collect();
    let features = sample(&gan, one_hot(&labels, ds.num_classes).view(), seed, "poisongan-generate")?;
    let extra = Dataset {
        features,
        labels,
        num_classes: ds.num_classes,
        image_shape: ds.image_shape,
    };
    ds.concat(&extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::vaguegan::CodeSpec;

    fn small_cfg(epochs: usize) -> GanConfig {
        GanConfig {
            epochs,
            noise_dim: 4,
            gen_hidden: vec![8, 8],
            disc_hidden: vec![8, 8, 6],
            lr: 1e-3,
            seed: 3,
            ..GanConfig::default()
        }
    }

    #[test]
    fn deterministic_and_checkpoints_match_direct_runs() {
        let ds = gen_synthetic(3, 6, 24, 1.0, 1).unwrap();
        let a = train_vaguegan(&ds, &small_cfg(5)).unwrap();
        let b = train_vaguegan(&ds, &small_cfg(5)).unwrap();
        assert_eq!(a, b);
        let snaps = train_vaguegan_checkpoints(&ds, &small_cfg(1), &[2, 5]).unwrap();
        assert_eq!(snaps[1], a);
        assert_eq!(snaps[0], train_vaguegan(&ds, &small_cfg(2)).unwrap());
        assert!(train_vaguegan_checkpoints(&ds, &small_cfg(1), &[5, 2]).is_err());
    }

    #[test]
    fn single_epoch_moves_both_networks_once() {
        let ds = gen_synthetic(2, 6, 16, 1.0, 2).unwrap();
        let cfg = small_cfg(1);
        let m = train_vaguegan(&ds, &cfg).unwrap();
        let fresh = Trainer::new(&ds, &cfg, Conditioning::Labels).unwrap();
        assert_ne!(m.generator.params, fresh.g.params);
        assert_ne!(m.discriminator.params, fresh.d.params);
        assert!(train_vaguegan(&ds, &small_cfg(0)).is_err());
    }

    #[test]
    fn poisoned_set_preserves_labels() {
        let ds = gen_synthetic(3, 6, 30, 1.0, 4).unwrap();
        let gan = train_vaguegan(&ds, &small_cfg(3)).unwrap();
        let p = generate_poisoned(&gan, &ds).unwrap();
        assert_eq!(p.len(), ds.len());
        assert_eq!(p.labels, ds.labels);
        assert!(p.features.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(p, generate_poisoned(&gan, &ds).unwrap());
        assert!(generate_poisoned(&gan, &ds.subset(&[])).unwrap().is_empty());
    }

    #[test]
    fn unsupervised_zero_lambda_ignores_the_information_term() {
        let ds = gen_synthetic(2, 6, 20, 1.0, 5).unwrap();
        let cfg = GanConfig {
            lambda: 0.0,
            code: Some(CodeSpec::default()),
            ..small_cfg(4)
        };
        let with_q = train_unsupervised(&ds, &cfg).unwrap();
        let cond = code_conditioning(&ds, &cfg, false).unwrap();
        let plain = run(&ds.without_labels(), &cfg, cond, &[4]).unwrap().remove(0);
        assert_eq!(with_q.generator, plain.generator);
        assert_eq!(with_q.discriminator, plain.discriminator);
        assert!(train_unsupervised(&ds, &small_cfg(2)).is_err());
    }

    #[test]
    fn unsupervised_ignores_labels() {
        let ds = gen_synthetic(2, 6, 20, 1.0, 6).unwrap();
        let mut relabeled = ds.clone();
        relabeled.labels.reverse();
        let cfg = GanConfig {
            code: Some(CodeSpec::default()),
            ..small_cfg(3)
        };
        let a = train_unsupervised(&ds, &cfg).unwrap();
        let b = train_unsupervised(&relabeled, &cfg).unwrap();
        assert_eq!(a.generator, b.generator);
        let p = generate_poisoned(&a, &ds).unwrap();
        assert_eq!(p.labels, ds.labels);
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    /// Central differences of `f` against `analytic`, skipping directions whose
    /// numeric derivative is pure roundoff.
    fn check(values: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) {
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for j in 0..values.len() {
            let v = values[j];
            values[j] = v + eps;
            let up = f(values);
            values[j] = v - eps;
            let down = f(values);
            values[j] = v;
            let num = (up - down) / (2.0 * eps);
            if num.abs().max(analytic[j].abs()) > 1e-7 {
                worst = worst.max(rel_err(analytic[j], num));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    fn trainer_grads_match(cond_of: impl Fn(&Dataset, &GanConfig) -> Conditioning, cfg: GanConfig) {
        let ds = gen_synthetic(2, 5, 9, 1.0, 8).unwrap();
        let mut t = Trainer::new(&ds, &cfg, cond_of(&ds, &cfg)).unwrap();
        // push the discriminator off its initialization so no term sits in the clamp
        t.epoch(1).unwrap();
        let mut r = rng::stream(99, "probe", &[]);
        let gi = t.gen_input(&mut r);

        let (_, dg, _) = t.d_grads(&gi).unwrap();
        let mut dv = t.d.params.values().to_vec();
        check(&mut dv, &dg, |v| {
            let mut probe = Trainer::new(&ds, &cfg, cond_of(&ds, &cfg)).unwrap();
            probe.g = t.g.clone();
            probe.q = t.q.clone();
            probe.d.params.values_mut().copy_from_slice(v);
            probe.d_grads(&gi).unwrap().0
        });

        let (_, gg, qg, _) = t.g_grads(&gi).unwrap();
        let mut gv = t.g.params.values().to_vec();
        check(&mut gv, &gg, |v| {
            let mut probe = Trainer::new(&ds, &cfg, cond_of(&ds, &cfg)).unwrap();
            probe.d = t.d.clone();
            probe.q = t.q.clone();
            probe.g.params.values_mut().copy_from_slice(v);
            probe.g_grads(&gi).unwrap().0
        });
        if let Some(qg) = qg {
            let mut qv = t.q.as_ref().unwrap().params.values().to_vec();
            check(&mut qv, &qg, |v| {
                let mut probe = Trainer::new(&ds, &cfg, cond_of(&ds, &cfg)).unwrap();
                probe.d = t.d.clone();
                probe.g = t.g.clone();
                probe.q.as_mut().unwrap().params.values_mut().copy_from_slice(v);
                probe.g_grads(&gi).unwrap().0
            });
        }
    }

    #[test]
    fn supervised_gradients_match_finite_differences() {
        trainer_grads_match(|_, _| Conditioning::Labels, small_cfg(1));
    }

    #[test]
    fn information_gradients_match_finite_differences() {
        let cfg = GanConfig {
            lambda: 0.7,
            code: Some(CodeSpec::default()),
            ..small_cfg(1)
        };
        trainer_grads_match(|ds, cfg| code_conditioning(ds, cfg, true).unwrap(), cfg);
    }

    #[test]
    fn generated_pixel_means_track_the_shard() {
        let ds = crate::data::gen_glyphs(100, 11);
        let cfg = GanConfig {
            kappa: 0.2,
            epochs: 600,
            noise_dim: 16,
            gen_hidden: vec![32, 32, 64, 64],
            disc_hidden: vec![64, 64, 32, 32],
            seed: 4,
            ..GanConfig::default()
        };
        let gan = train_vaguegan(&ds, &cfg).unwrap();
        let fake = generate_poisoned(&gan, &ds).unwrap();
        let real_mean = ds.features.mean_axis(Axis(0)).unwrap();
        let fake_mean = fake.features.mean_axis(Axis(0)).unwrap();
        let worst = (&real_mean - &fake_mean).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        assert!(worst <= 0.15, "largest per-pixel mean gap {worst}");
    }

    #[test]
    fn poisongan_adds_a_tenth() {
        let ds = gen_synthetic(2, 4, 200, 1.0, 7).unwrap();
        let cfg = small_cfg(2);
        assert_eq!(augment_poisongan(&ds, 0.0, &cfg, 1).unwrap(), ds);
        let out = augment_poisongan(&ds, 0.1, &cfg, 1).unwrap();
        assert_eq!(out.len(), 220);
        assert!(out.labels[200..].iter().all(|&l| l < 2));
        assert!(augment_poisongan(&ds, 1.5, &cfg, 1).is_err());
    }
}
