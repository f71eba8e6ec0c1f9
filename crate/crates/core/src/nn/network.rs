use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::arch::{sigmoid, ArchSpec, LayerLayout, OutputHead, ParamVector};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Whether batch-norm layers normalize by batch or by running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Parameters plus the non-trainable batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub params: ParamVector,
    pub running: Vec<Option<RunningStats>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    CrossEntropy,
    BinaryCrossEntropy,
    MeanSquared,
}

impl Loss {
    fn head(self) -> OutputHead {
        match self {
            Loss::CrossEntropy => OutputHead::SoftmaxCrossEntropy,
            Loss::BinaryCrossEntropy => OutputHead::SigmoidBce,
            Loss::MeanSquared => OutputHead::Linear,
        }
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
    batch_stats: bool,
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `acts[0]` is the input batch, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Array2<f64>>,
    /// Activation inputs (after batch-norm when present).
    act_in: Vec<Array2<f64>>,
    norms: Vec<Option<NormCache>>,
    output: Array2<f64>,
}

impl Forward {
    /// Head-applied output (probabilities for softmax/sigmoid heads).
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// Output of the last layer before the head transform (logits for classifier heads).
    pub fn last_layer(&self) -> &Array2<f64> {
        self.acts.last().expect("at least one layer")
    }

    /// Output of layer `l` (0-based).
    pub fn layer_output(&self, l: usize) -> &Array2<f64> {
        &self.acts[l + 1]
    }
}

pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Option<Array2<f64>>,
}

fn weight_view<'a>(values: &'a [f64], l: &LayerLayout) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((l.fan_in, l.fan_out), &values[l.weight..l.weight + l.fan_in * l.fan_out])
        .expect("layout matches")
}

fn vec_view<'a>(values: &'a [f64], offset: usize, len: usize) -> ArrayView1<'a, f64> {
    ArrayView1::from(&values[offset..offset + len])
}

fn check_finite(a: &Array2<f64>, layer: usize, context: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer, context })
    }
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Network {
    pub fn new(params: ParamVector) -> Self {
        let running = params
            .arch()
            .layouts()
            .iter()
            .map(|l| {
                l.norm.map(|_| RunningStats {
                    mean: vec![0.0; l.fan_out],
                    var: vec![1.0; l.fan_out],
                })
            })
            .collect();
        Self { params, running }
    }

    pub fn arch(&self) -> &ArchSpec {
        self.params.arch()
    }

    pub fn forward(&self, batch: ArrayView2<f64>, mode: Mode) -> Result<Forward> {
        let arch = self.params.arch();
        if batch.ncols() != arch.input_dim() {
            return Err(Error::Shape {
                context: "forward input columns",
                expected: arch.input_dim(),
                found: batch.ncols(),
            });
        }
        let n = batch.nrows();
        let values = self.params.values();
        let layouts = arch.layouts();
        let mut acts = Vec::with_capacity(layouts.len() + 1);
        let mut act_in = Vec::with_capacity(layouts.len());
        let mut norms = Vec::with_capacity(layouts.len());
        acts.push(batch.to_owned());
        for (li, l) in layouts.iter().enumerate() {
            let w = weight_view(values, l);
            let mut z = acts[li].dot(&w);
            if let Some(b) = l.bias {
                z += &vec_view(values, b, l.fan_out);
            }
            let (y, norm) = match l.norm {
                Some((g_off, b_off)) => {
                    let gamma = vec_view(values, g_off, l.fan_out);
                    let beta = vec_view(values, b_off, l.fan_out);
                    let use_batch = mode == Mode::Train && n > 1;
                    let batch_mean = z.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(l.fan_out));
                    let batch_var = if n > 0 {
                        z.var_axis(Axis(0), 0.0)
                    } else {
                        Array1::zeros(l.fan_out)
                    };
                    let (mean, var) = if use_batch {
                        (batch_mean.clone(), batch_var.clone())
                    } else {
                        let rs = self.running[li].as_ref().expect("running stats for bn layer");
                        (Array1::from(rs.mean.clone()), Array1::from(rs.var.clone()))
                    };
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let xhat = (&z - &mean) * &inv_std;
                    let y = &xhat * &gamma + &beta;
                    (
                        y,
                        Some(NormCache {
                            xhat,
                            inv_std,
                            batch_mean,
                            batch_var,
                            batch_stats: use_batch,
                        }),
                    )
                }
                None => (z, None),
            };
            let act = arch.activations()[li];
            let a = y.mapv(|v| act.apply(v));
            check_finite(&a, li, "layer output")?;
            act_in.push(y);
            norms.push(norm);
            acts.push(a);
        }
        let last = acts.last().expect("non-empty");
        let output = match arch.output_head() {
            OutputHead::SoftmaxCrossEntropy => softmax_rows(last),
            OutputHead::SigmoidBce => last.mapv(sigmoid),
            OutputHead::Linear => last.clone(),
        };
        Ok(Forward {
            acts,
            act_in,
            norms,
            output,
        })
    }

    /// Head-applied outputs in evaluation mode.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(batch, Mode::Eval)?.output)
    }

    /// Backpropagate `grad_last` (gradient w.r.t. the last layer's output, before
    /// the head) plus optional extra gradients injected at intermediate layer
    /// outputs, given as `(layer index, gradient)`.
    pub fn backward(
        &self,
        fwd: &Forward,
        grad_last: ArrayView2<f64>,
        extra: &[(usize, ArrayView2<f64>)],
        need_input: bool,
    ) -> Gradients {
        let arch = self.params.arch();
        let values = self.params.values();
        let layouts = arch.layouts();
        let mut grads = vec![0.0; values.len()];
        let mut g_a = grad_last.to_owned();
        let mut input_grad = None;
        for li in (0..layouts.len()).rev() {
            let l = &layouts[li];
            for (el, eg) in extra {
                if *el == li {
                    g_a += eg;
                }
            }
            let act = arch.activations()[li];
            let mut g = g_a;
            Zip::from(&mut g)
                .and(&fwd.act_in[li])
                .and(&fwd.acts[li + 1])
                .for_each(|g, &y, &a| *g *= act.derivative(y, a));
            let g_z = match (&fwd.norms[li], l.norm) {
                (Some(nc), Some((g_off, b_off))) => {
                    let gamma = vec_view(values, g_off, l.fan_out);
                    let dgamma = (&g * &nc.xhat).sum_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0));
                    grads[g_off..g_off + l.fan_out]
                        .iter_mut()
                        .zip(dgamma.iter())
                        .for_each(|(d, v)| *d += v);
                    grads[b_off..b_off + l.fan_out]
                        .iter_mut()
                        .zip(dbeta.iter())
                        .for_each(|(d, v)| *d += v);
                    let g_xhat = &g * &gamma;
                    if nc.batch_stats {
                        let n = g.nrows() as f64;
                        let sum_g = g_xhat.sum_axis(Axis(0));
                        let sum_gx = (&g_xhat * &nc.xhat).sum_axis(Axis(0));
                        let mut out = &g_xhat * n - &sum_g - &(&nc.xhat * &sum_gx);
                        out *= &(&nc.inv_std / n);
                        out
                    } else {
                        g_xhat * &nc.inv_std
                    }
                }
                _ => g,
            };
            let dw = fwd.acts[li].t().dot(&g_z);
            grads[l.weight..l.weight + l.fan_in * l.fan_out]
                .iter_mut()
                .zip(dw.iter())
                .for_each(|(d, v)| *d += v);
            if let Some(b) = l.bias {
                let db = g_z.sum_axis(Axis(0));
                grads[b..b + l.fan_out]
                    .iter_mut()
                    .zip(db.iter())
                    .for_each(|(d, v)| *d += v);
            }
            if li > 0 || need_input {
                let w = weight_view(values, l);
                let g_prev = g_z.dot(&w.t());
                if li == 0 {
                    input_grad = Some(g_prev);
                    break;
                }
                g_a = g_prev;
            } else {
                break;
            }
        }
        Gradients {
            params: grads,
            input: input_grad,
        }
    }

    /// Fold the batch statistics of a training-mode pass into the running estimates.
    pub fn absorb_batch_stats(&mut self, fwd: &Forward) {
        for (li, nc) in fwd.norms.iter().enumerate() {
            let (Some(nc), Some(rs)) = (nc, self.running[li].as_mut()) else {
                continue;
            };
            if !nc.batch_stats {
                continue;
            }
            let n = fwd.acts[0].nrows() as f64;
            let unbias = n / (n - 1.0);
            for j in 0..rs.mean.len() {
                rs.mean[j] = (1.0 - BN_MOMENTUM) * rs.mean[j] + BN_MOMENTUM * nc.batch_mean[j];
                rs.var[j] = (1.0 - BN_MOMENTUM) * rs.var[j] + BN_MOMENTUM * nc.batch_var[j] * unbias;
            }
        }
    }

    /// Batch statistics (mean, biased variance) observed at each batch-norm layer.
    pub fn batch_stats(fwd: &Forward) -> Vec<Option<RunningStats>> {
        fwd.norms
            .iter()
            .map(|nc| {
                nc.as_ref().map(|nc| RunningStats {
                    mean: nc.batch_mean.to_vec(),
                    var: nc.batch_var.to_vec(),
                })
            })
            .collect()
    }
}

/// Loss value and gradient w.r.t. the last layer output for a head/loss pair.
pub fn head_loss(
    fwd: &Forward,
    targets: ArrayView2<f64>,
    loss: Loss,
) -> Result<(f64, Array2<f64>)> {
    let out = fwd.output();
    if targets.dim() != out.dim() {
        return Err(Error::Shape {
            context: "targets",
            expected: out.len(),
            found: targets.len(),
        });
    }
    let n = out.nrows().max(1) as f64;
    let logits = fwd.last_layer();
    let value = match loss {
        Loss::CrossEntropy => {
            let mut total = 0.0;
            for (row, t) in logits.rows().into_iter().zip(targets.rows()) {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total -= row.iter().zip(t.iter()).map(|(z, t)| t * (z - lse)).sum::<f64>();
            }
            total / n
        }
        Loss::BinaryCrossEntropy => {
            let mut total = 0.0;
            Zip::from(logits).and(&targets).for_each(|&z, &t| {
                total += t * softplus(-z) + (1.0 - t) * softplus(z);
            });
            total / n
        }
        Loss::MeanSquared => {
            let mut total = 0.0;
            Zip::from(out).and(&targets).for_each(|&y, &t| total += 0.5 * (y - t) * (y - t));
            total / n
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFinite {
            layer: fwd.acts.len() - 1,
            context: "loss",
        });
    }
    let grad = (out - &targets) / n;
    Ok((value, grad))
}

/// Loss and parameter gradient for one batch; also returns the forward pass so
/// callers can fold batch statistics into the running estimates.
pub fn loss_grad_forward(
    net: &Network,
    batch: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    loss: Loss,
    mode: Mode,
) -> Result<(f64, ParamVector, Forward)> {
    if loss.head() != net.arch().output_head() {
        return Err(Error::precondition(format!(
            "loss {loss:?} incompatible with head {:?}",
            net.arch().output_head()
        )));
    }
    if targets.nrows() != batch.nrows() {
        return Err(Error::Shape {
            context: "target rows",
            expected: batch.nrows(),
            found: targets.nrows(),
        });
    }
    let fwd = net.forward(batch, mode)?;
    let (value, g) = head_loss(&fwd, targets, loss)?;
    let grads = net.backward(&fwd, g.view(), &[], false);
    let grad = ParamVector::new(grads.params, net.arch().clone()).map_err(|_| Error::NonFinite {
        layer: net.arch().num_layers() - 1,
        context: "gradient",
    })?;
    Ok((value, grad, fwd))
}

pub fn loss_and_grad(
    net: &Network,
    batch: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    loss: Loss,
    mode: Mode,
) -> Result<(f64, ParamVector)> {
    loss_grad_forward(net, batch, targets, loss, mode).map(|(l, g, _)| (l, g))
}

pub fn loss_only(
    net: &Network,
    batch: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    loss: Loss,
    mode: Mode,
) -> Result<f64> {
    let fwd = net.forward(batch, mode)?;
    head_loss(&fwd, targets, loss).map(|(l, _)| l)
}

pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (i, &y) in labels.iter().enumerate() {
        out[[i, y]] = 1.0;
    }
    out
}

/// Column-wise concatenation `[a | b]`.
pub fn hconcat(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(&a);
    out.slice_mut(s![.., a.ncols()..]).assign(&b);
    out
}
