use ndarray::Axis;
use rand::seq::SliceRandom;

use super::LocalTrainSpec;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, Loss, Mode, Network, OptimizerKind, OptimizerState, ParamVector};
use crate::rng::Rng;

/// `K` distinct ids out of `0..N`, sorted.
pub fn select_clients(n: usize, k: usize, r: &mut Rng) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::config("fl.per_round", format!("cannot select {k} of {n} clients")));
    }
    let mut ids = rand::seq::index::sample(r, n, k).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Mini-batch SGD with momentum on cross-entropy, starting from `global`.
pub fn local_train(global: &Network, ds: &Dataset, spec: &LocalTrainSpec, r: &mut Rng) -> Result<Network> {
    if ds.feature_dim() != global.arch().input_dim() || ds.num_classes != global.arch().output_dim() {
        return Err(Error::precondition("local dataset does not fit the model architecture"));
    }
    let mut net = global.clone();
    if spec.epochs == 0 || ds.is_empty() {
        return Ok(net);
    }
    let kind = OptimizerKind::Sgd {
        lr: spec.lr,
        momentum: spec.momentum,
    };
    let mut opt = OptimizerState::new(kind, net.params.len())?;
    let targets = ds.one_hot_labels();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for _ in 0..spec.epochs {
        order.shuffle(r);
        for chunk in order.chunks(spec.batch_size.max(1)) {
            let x = ds.features.select(Axis(0), chunk);
            let y = targets.select(Axis(0), chunk);
            let (_, grad) = loss_and_grad(&net, x.view(), y.view(), Loss::CrossEntropy, Mode::Train)?;
            opt.step_in_place(net.params.values_mut(), grad.values())?;
        }
    }
    Ok(net)
}

/// `sum_i (w_i / W) theta_i`.
pub fn aggregate(models: &[&ParamVector], weights: &[f64]) -> Result<ParamVector> {
    let first = models
        .first()
        .ok_or_else(|| Error::precondition("aggregation needs at least one model"))?;
    if weights.len() != models.len() {
        return Err(Error::Shape {
            context: "aggregation weights",
            expected: models.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::precondition("aggregation weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::precondition("aggregation weights are all zero"));
    }
    let mut out = vec![0.0; first.len()];
    for (m, &w) in models.iter().zip(weights) {
        if m.arch() != first.arch() {
            return Err(Error::precondition("aggregated models have different architectures"));
        }
        let share = w / total;
        for (o, v) in out.iter_mut().zip(m.values()) {
            *o += share * v;
        }
    }
    first.with_values(out)
}

/// `sum_c (TP_c + TN_c) / sum_c (TP_c + TN_c + FP_c + FN_c)` over classes.
pub fn one_vs_rest_accuracy(predicted: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::Shape {
            context: "predictions",
            expected: labels.len(),
            found: predicted.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::precondition("accuracy of an empty set"));
    }
    if classes == 0 || predicted.iter().chain(labels).any(|&c| c >= classes) {
        return Err(Error::precondition("class index out of range"));
    }
    // Each sample is a true negative for every class other than its label and
    // its prediction, so only misclassifications cost anything (two cells each).
    let wrong = predicted.iter().zip(labels).filter(|(p, y)| p != y).count();
    let cells = labels.len() * classes;
    Ok((cells - 2 * wrong) as f64 / cells as f64)
}

pub fn evaluate(model: &Network, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::precondition("evaluation needs a nonempty test set"));
    }
    if model.arch().output_dim() != test.num_classes {
        return Err(Error::Shape {
            context: "classifier outputs",
            expected: test.num_classes,
            found: model.arch().output_dim(),
        });
    }
    let out = model.predict(test.features.view())?;
    let predicted: Vec<usize> = out
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect();
    one_vs_rest_accuracy(&predicted, &test.labels, test.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::nn::ArchSpec;
    use crate::rng;

    fn pv(values: Vec<f64>) -> ParamVector {
        // a 1-input, 1-output linear layer has exactly two parameters
        ParamVector::new(values, ArchSpec::classifier(&[1, 1]).unwrap()).unwrap()
    }

    #[test]
    fn selection_contracts() {
        let mut r = rng::from_seed(1);
        assert_eq!(select_clients(5, 5, &mut r).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_clients(3, 4, &mut r).unwrap_err().is_config());
        let mut ones = 0;
        for _ in 0..10_000 {
            ones += select_clients(2, 1, &mut r).unwrap()[0];
        }
        let f = ones as f64 / 10_000.0;
        assert!((f - 0.5).abs() <= 0.05 * 0.5, "frequency {f}");
    }

    #[test]
    fn aggregation_fixtures() {
        let a = pv(vec![0.0, 2.0]);
        let b = pv(vec![2.0, 0.0]);
        assert_eq!(aggregate(&[&a, &b], &[1.0, 1.0]).unwrap().values(), &[1.0, 1.0]);
        let z = pv(vec![0.0, 0.0]);
        let f = pv(vec![4.0, 4.0]);
        assert_eq!(aggregate(&[&z, &f], &[1.0, 3.0]).unwrap().values(), &[3.0, 3.0]);
        assert_eq!(aggregate(&[&a, &a, &a], &[1.0, 2.0, 5.0]).unwrap(), a);
        assert!(aggregate(&[], &[]).is_err());
        assert!(aggregate(&[&a], &[0.0]).is_err());
        let other = ParamVector::zeros(ArchSpec::classifier(&[2, 1]).unwrap());
        assert!(aggregate(&[&other, &a], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn accuracy_fixtures() {
        assert_eq!(one_vs_rest_accuracy(&[0, 1, 1], &[0, 1, 1], 2).unwrap(), 1.0);
        assert_eq!(one_vs_rest_accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0], 2).unwrap(), 0.75);
        assert!(one_vs_rest_accuracy(&[], &[], 2).is_err());
    }

    #[test]
    fn zero_epochs_is_identity_and_training_lowers_loss() {
        let ds = gen_synthetic(3, 8, 60, 1.0, 3).unwrap();
        let arch = ArchSpec::classifier(&[8, 16, 3]).unwrap();
        let global = Network::new(ParamVector::glorot(arch, &mut rng::from_seed(2)));
        let none = LocalTrainSpec { epochs: 0, ..LocalTrainSpec::default() };
        assert_eq!(local_train(&global, &ds, &none, &mut rng::from_seed(3)).unwrap(), global);
        let y = ds.one_hot_labels();
        let loss = |n: &Network| {
            crate::nn::loss_only(n, ds.features.view(), y.view(), Loss::CrossEntropy, Mode::Eval).unwrap()
        };
        let mut prev = loss(&global);
        let mut net = global.clone();
        let spec = LocalTrainSpec { epochs: 1, ..LocalTrainSpec::default() };
        for e in 0..5 {
            net = local_train(&net, &ds, &spec, &mut rng::from_seed(e)).unwrap();
            let cur = loss(&net);
            assert!(cur <= prev + 1e-12, "epoch {e}: {cur} > {prev}");
            prev = cur;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn equal_weight_aggregation_ignores_order(
                models in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..10),
                shuffle in any::<u64>(),
            ) {
                use rand::seq::SliceRandom;
                let pvs: Vec<ParamVector> = models.iter().map(|&(a, b)| pv(vec![a, b])).collect();
                let mut order: Vec<usize> = (0..pvs.len()).collect();
                order.shuffle(&mut rng::from_seed(shuffle));
                let w = vec![1.0; pvs.len()];
                let a = aggregate(&pvs.iter().collect::<Vec<_>>(), &w).unwrap();
                let b = aggregate(&order.iter().map(|&i| &pvs[i]).collect::<Vec<_>>(), &w).unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
            }
        }
    }
}
