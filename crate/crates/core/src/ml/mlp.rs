//! Small feedforward network: two tanh hidden layers, each followed by batch
//! normalization, additive gaussian noise and dropout; sigmoid or exponential
//! output. Gradients are computed analytically.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::MlError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Sigmoid,
    Exp,
}

impl OutputActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            OutputActivation::Exp => z.exp(),
        }
    }

    // derivative expressed through the output value
    fn derivative(self, out: f64) -> f64 {
        match self {
            OutputActivation::Sigmoid => out * (1.0 - out),
            OutputActivation::Exp => out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub output: usize,
    pub output_activation: OutputActivation,
    pub input_noise: f64,
    pub hidden_noise: f64,
    pub dropout: f64,
    pub l2: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl MlpSpec {
    /// Shape/scale network: 14 → 7 → 2 sigmoid.
    pub fn family_net(input_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden1: 14,
            hidden2: 7,
            output: 2,
            output_activation: OutputActivation::Sigmoid,
            input_noise: 0.01,
            hidden_noise: 0.12,
            dropout: 0.01,
            l2: 0.01,
            bn_momentum: 0.99,
            bn_eps: 1e-3,
        }
    }

    /// Location network: 14 → 1 → 1 exponential.
    pub fn location_net(input_dim: usize) -> Self {
        MlpSpec {
            hidden2: 1,
            output: 1,
            output_activation: OutputActivation::Exp,
            ..MlpSpec::family_net(input_dim)
        }
    }

    fn widths(&self) -> [usize; 4] {
        [self.input_dim, self.hidden1, self.hidden2, self.output]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub moving_mean: Array1<f64>,
    pub moving_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub dense: Vec<Dense>,
    pub bn: Vec<BatchNorm>,
}

/// Noise and dropout draws for one training batch. `keep` already holds the
/// inverted-dropout scaling `1 / (1 - p)` for kept units.
#[derive(Debug, Clone)]
pub struct Masks {
    pub input_noise: Array2<f64>,
    pub noise: [Array2<f64>; 2],
    pub keep: [Array2<f64>; 2],
}

impl Masks {
    pub fn identity(spec: &MlpSpec, batch: usize) -> Self {
        Masks {
            input_noise: Array2::zeros((batch, spec.input_dim)),
            noise: [
                Array2::zeros((batch, spec.hidden1)),
                Array2::zeros((batch, spec.hidden2)),
            ],
            keep: [
                Array2::ones((batch, spec.hidden1)),
                Array2::ones((batch, spec.hidden2)),
            ],
        }
    }

    pub fn sample<R: Rng>(spec: &MlpSpec, batch: usize, rng: &mut R) -> Self {
        let gauss = |rows: usize, cols: usize, sd: f64, rng: &mut R| {
            Array2::from_shape_simple_fn((rows, cols), || {
                sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            })
        };
        let input_noise = gauss(batch, spec.input_dim, spec.input_noise, rng);
        let n1 = gauss(batch, spec.hidden1, spec.hidden_noise, rng);
        let n2 = gauss(batch, spec.hidden2, spec.hidden_noise, rng);
        let p = spec.dropout;
        let keep = |cols: usize, rng: &mut R| {
            Array2::from_shape_simple_fn((batch, cols), || {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    1.0 / (1.0 - p)
                }
            })
        };
        let k1 = keep(spec.hidden1, rng);
        let k2 = keep(spec.hidden2, rng);
        Masks {
            input_noise,
            noise: [n1, n2],
            keep: [k1, k2],
        }
    }
}

struct Cache {
    inputs: [Array2<f64>; 3],
    act: [Array2<f64>; 2],
    xhat: [Array2<f64>; 2],
    inv_std: [Array1<f64>; 2],
    batch_mean: [Array1<f64>; 2],
    batch_var: [Array1<f64>; 2],
    out: Array2<f64>,
}

/// Flat gradient per parameter tensor, in [`Mlp::tensors_mut`] order.
pub type Grads = Vec<Vec<f64>>;

fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit))
}

impl Mlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0);
        let w = spec.widths();
        let dense = (0..3)
            .map(|i| Dense {
                w: glorot(w[i], w[i + 1], &mut r),
                b: Array1::zeros(w[i + 1]),
            })
            .collect();
        let bn = (1..3)
            .map(|i| BatchNorm {
                gamma: Array1::ones(w[i]),
                beta: Array1::zeros(w[i]),
                moving_mean: Array1::zeros(w[i]),
                moving_var: Array1::ones(w[i]),
            })
            .collect();
        Mlp { spec, dense, bn }
    }

    /// Trainable tensors: W1 b1 γ1 β1 W2 b2 γ2 β2 W3 b3.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let (d, bn) = (&mut self.dense, &mut self.bn);
        let [d0, d1, d2] = &mut d[..] else {
            unreachable!()
        };
        let [n0, n1] = &mut bn[..] else { unreachable!() };
        vec![
            d0.w.as_slice_mut().unwrap(),
            d0.b.as_slice_mut().unwrap(),
            n0.gamma.as_slice_mut().unwrap(),
            n0.beta.as_slice_mut().unwrap(),
            d1.w.as_slice_mut().unwrap(),
            d1.b.as_slice_mut().unwrap(),
            n1.gamma.as_slice_mut().unwrap(),
            n1.beta.as_slice_mut().unwrap(),
            d2.w.as_slice_mut().unwrap(),
            d2.b.as_slice_mut().unwrap(),
        ]
    }

    pub fn l2_penalty(&self) -> f64 {
        self.spec.l2 * self.dense.iter().map(|d| d.w.iter().map(|w| w * w).sum::<f64>()).sum::<f64>()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<(), MlError> {
        if x.ncols() != self.spec.input_dim {
            return Err(MlError::Dimension(format!(
                "expected {} inputs, got {}",
                self.spec.input_dim,
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Inference: no noise or dropout, moving batch-norm statistics.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>, MlError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in 0..2 {
            let a = (h.dot(&self.dense[l].w) + &self.dense[l].b).mapv(f64::tanh);
            let bn = &self.bn[l];
            let inv = bn.moving_var.mapv(|v| 1.0 / (v + self.spec.bn_eps).sqrt());
            h = (a - &bn.moving_mean) * &inv * &bn.gamma + &bn.beta;
        }
        let act = self.spec.output_activation;
        Ok((h.dot(&self.dense[2].w) + &self.dense[2].b).mapv(|z| act.apply(z)))
    }

    fn forward_train(&self, x: &Array2<f64>, m: &Masks) -> Cache {
        let n = x.nrows() as f64;
        let mut h = x + &m.input_noise;
        let mut inputs = Vec::with_capacity(3);
        let mut acts = Vec::with_capacity(2);
        let mut xhats = Vec::with_capacity(2);
        let mut invs = Vec::with_capacity(2);
        let mut means = Vec::with_capacity(2);
        let mut vars = Vec::with_capacity(2);
        for l in 0..2 {
            inputs.push(h.clone());
            let a = (h.dot(&self.dense[l].w) + &self.dense[l].b).mapv(f64::tanh);
            let mean = a.sum_axis(Axis(0)) / n;
            let centered = &a - &mean;
            let var = centered.mapv(|c| c * c).sum_axis(Axis(0)) / n;
            let inv = var.mapv(|v| 1.0 / (v + self.spec.bn_eps).sqrt());
            let xhat = centered * &inv;
            let y = &xhat * &self.bn[l].gamma + &self.bn[l].beta;
            h = (y + &m.noise[l]) * &m.keep[l];
            acts.push(a);
            xhats.push(xhat);
            invs.push(inv);
            means.push(mean);
            vars.push(var);
        }
        inputs.push(h.clone());
        let act = self.spec.output_activation;
        let out = (h.dot(&self.dense[2].w) + &self.dense[2].b).mapv(|z| act.apply(z));
        let arr2 = |v: Vec<Array2<f64>>| -> [Array2<f64>; 2] { v.try_into().unwrap() };
        let arr1 = |v: Vec<Array1<f64>>| -> [Array1<f64>; 2] { v.try_into().unwrap() };
        Cache {
            inputs: inputs.try_into().unwrap(),
            act: arr2(acts),
            xhat: arr2(xhats),
            inv_std: arr1(invs),
            batch_mean: arr1(means),
            batch_var: arr1(vars),
            out,
        }
    }

    /// Gradients of `data loss + l2 penalty` given `dL/d(output)`.
    fn backward(&self, c: &Cache, dout: &Array2<f64>, m: &Masks) -> Grads {
        let n = dout.nrows() as f64;
        let act = self.spec.output_activation;
        let l2 = 2.0 * self.spec.l2;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); 10];
        let mut dz = dout * &c.out.mapv(|o| act.derivative(o));
        for l in (0..3).rev() {
            let dw = c.inputs[l].t().dot(&dz) + &self.dense[l].w * l2;
            let db = dz.sum_axis(Axis(0));
            grads[4 * l] = dw.iter().copied().collect();
            grads[4 * l + 1] = db.to_vec();
            if l == 0 {
                break;
            }
            let k = l - 1;
            let dh = dz.dot(&self.dense[l].w.t());
            let dy = dh * &m.keep[k];
            let xhat = &c.xhat[k];
            grads[4 * k + 2] = (&dy * xhat).sum_axis(Axis(0)).to_vec();
            grads[4 * k + 3] = dy.sum_axis(Axis(0)).to_vec();
            let dxhat = dy * &self.bn[k].gamma;
            let s1 = dxhat.sum_axis(Axis(0));
            let s2 = (&dxhat * xhat).sum_axis(Axis(0));
            let da = (dxhat * n - &s1 - xhat * &s2) * &c.inv_std[k] / n;
            dz = da * &c.act[k].mapv(|a| 1.0 - a * a);
        }
        grads
    }

    /// Training-mode loss and gradients for one batch with fixed masks.
    pub fn loss_and_grads(
        &self,
        x: &Array2<f64>,
        rows: &[usize],
        loss: &dyn Loss,
        masks: &Masks,
    ) -> (f64, Grads) {
        let c = self.forward_train(x, masks);
        let (l, dout) = loss.eval(&c.out, rows);
        (l + self.l2_penalty(), self.backward(&c, &dout, masks))
    }

    pub fn loss_train_mode(&self, x: &Array2<f64>, rows: &[usize], loss: &dyn Loss, masks: &Masks) -> f64 {
        let c = self.forward_train(x, masks);
        loss.eval(&c.out, rows).0 + self.l2_penalty()
    }

    /// Largest relative error between analytic gradients and central
    /// differences (h = 1e-5) over every parameter, in training mode with one
    /// fixed noise/dropout draw.
    pub fn max_gradient_error(&self, x: &Array2<f64>, loss: &dyn Loss, seed: u64) -> f64 {
        let mut net = self.clone();
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let mut r = rng::stream(seed, 5);
        let masks = Masks::sample(&net.spec, x.nrows(), &mut r);
        let (_, grads) = net.loss_and_grads(x, &rows, loss, &masks);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (k, g) in grads.iter().enumerate() {
            for (i, &analytic) in g.iter().enumerate() {
                let orig = net.tensors_mut()[k][i];
                net.tensors_mut()[k][i] = orig + h;
                let up = net.loss_train_mode(x, &rows, loss, &masks);
                net.tensors_mut()[k][i] = orig - h;
                let down = net.loss_train_mode(x, &rows, loss, &masks);
                net.tensors_mut()[k][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }

    fn update_moving_stats(&mut self, c: &Cache) {
        let mom = self.spec.bn_momentum;
        for k in 0..2 {
            let bn = &mut self.bn[k];
            bn.moving_mean = &bn.moving_mean * mom + &c.batch_mean[k] * (1.0 - mom);
            bn.moving_var = &bn.moving_var * mom + &c.batch_var[k] * (1.0 - mom);
        }
    }
}

/// A batch loss over network outputs; `rows` index the training targets.
pub trait Loss {
    fn eval(&self, out: &Array2<f64>, rows: &[usize]) -> (f64, Array2<f64>);
}

/// Root-mean-square error against scalar targets.
pub struct Rmse {
    pub targets: Vec<f64>,
}

impl Loss for Rmse {
    fn eval(&self, out: &Array2<f64>, rows: &[usize]) -> (f64, Array2<f64>) {
        let n = rows.len() as f64;
        let diff: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, &r)| out[[i, 0]] - self.targets[r])
            .collect();
        let rmse = (diff.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
        let mut g = Array2::zeros(out.raw_dim());
        if rmse > 0.0 {
            for (i, d) in diff.iter().enumerate() {
                g[[i, 0]] = d / (n * rmse);
            }
        }
        (rmse, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clipnorm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 2000,
            patience: 100,
            val_fraction: 0.1,
            batch_size: 16,
            learning_rate: 5e-4,
            clipnorm: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-7;

    fn step(&mut self, net: &mut Mlp, mut grads: Grads, lr: f64, clipnorm: f64) {
        self.t += 1;
        let lr_t = lr * (1.0 - Self::B2.powi(self.t)).sqrt() / (1.0 - Self::B1.powi(self.t));
        for (k, p) in net.tensors_mut().into_iter().enumerate() {
            let g = &mut grads[k];
            // per-tensor norm clipping
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > clipnorm {
                g.iter_mut().for_each(|x| *x *= clipnorm / norm);
            }
            for i in 0..p.len() {
                self.m[k][i] = Self::B1 * self.m[k][i] + (1.0 - Self::B1) * g[i];
                self.v[k][i] = Self::B2 * self.v[k][i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr_t * self.m[k][i] / (self.v[k][i].sqrt() + Self::EPS);
            }
        }
    }
}

fn rows_of(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Mini-batch Adam with early stopping on a held-out split; the weights of
/// the best validation epoch are restored.
pub fn train_mlp(
    spec: MlpSpec,
    x: &Array2<f64>,
    loss: &dyn Loss,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainLog), MlError> {
    if x.nrows() == 0 {
        return Err(MlError::TooFewExamples { needed: 1, got: 0 });
    }
    let mut net = Mlp::new(spec, cfg.seed);
    net.check_input(x)?;
    let mut r = rng::stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(&mut r);
    let n_val = (cfg.val_fraction * x.nrows() as f64).floor() as usize;
    let n_val = if x.nrows() - n_val < 1 { 0 } else { n_val };
    let (train_rows, val_rows) = order.split_at(x.nrows() - n_val);
    let mut train_rows = train_rows.to_vec();
    let val_x = rows_of(x, val_rows);

    let mut adam = Adam {
        m: net.tensors_mut().iter().map(|t| vec![0.0; t.len()]).collect(),
        v: net.tensors_mut().iter().map(|t| vec![0.0; t.len()]).collect(),
        t: 0,
    };
    let mut log = TrainLog {
        epochs_run: 0,
        best_epoch: 0,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
    };
    let mut best = (f64::INFINITY, net.clone());
    for epoch in 0..cfg.max_epochs {
        train_rows.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        for batch in train_rows.chunks(cfg.batch_size) {
            let bx = rows_of(x, batch);
            let masks = Masks::sample(&net.spec, batch.len(), &mut r);
            let c = net.forward_train(&bx, &masks);
            let (l, dout) = loss.eval(&c.out, batch);
            let grads = net.backward(&c, &dout, &masks);
            epoch_loss += (l + net.l2_penalty()) * batch.len() as f64;
            net.update_moving_stats(&c);
            adam.step(&mut net, grads, cfg.learning_rate, cfg.clipnorm);
        }
        log.train_loss.push(epoch_loss / train_rows.len() as f64);
        let monitored = if val_rows.is_empty() {
            *log.train_loss.last().unwrap()
        } else {
            let out = net.predict(&val_x)?;
            loss.eval(&out, val_rows).0 + net.l2_penalty()
        };
        if !val_rows.is_empty() {
            log.val_loss.push(monitored);
        }
        log.epochs_run = epoch + 1;
        if monitored < best.0 {
            best = (monitored, net.clone());
            log.best_epoch = epoch;
        } else if epoch - log.best_epoch >= cfg.patience {
            break;
        }
    }
    Ok((best.1, log))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn random_inputs(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::stream(seed, 0);
        Array2::from_shape_simple_fn((rows, cols), || r.random::<f64>())
    }

    #[test]
    fn zero_network_outputs() {
        for spec in [MlpSpec::family_net(5), MlpSpec::location_net(5)] {
            let mut net = Mlp::new(spec, 1);
            for t in net.tensors_mut() {
                t.iter_mut().for_each(|x| *x = 0.0);
            }
            let out = net.predict(&random_inputs(4, 5, 2)).unwrap();
            let expected = match spec.output_activation {
                OutputActivation::Sigmoid => 0.5,
                OutputActivation::Exp => 1.0,
            };
            assert!(out.iter().all(|&o| o == expected));
            let c = net.forward_train(&random_inputs(4, 5, 2), &Masks::identity(&spec, 4));
            assert!(c.out.iter().all(|&o| o == expected));
        }
    }

    #[test]
    fn shapes_follow_spec() {
        let mut net = Mlp::new(MlpSpec::family_net(34), 0);
        let lens: Vec<usize> = net.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(lens, [34 * 14, 14, 14, 14, 14 * 7, 7, 7, 7, 7 * 2, 2]);
        let mut net = Mlp::new(MlpSpec::location_net(34), 0);
        let lens: Vec<usize> = net.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(lens, [34 * 14, 14, 14, 14, 14, 1, 1, 1, 1, 1]);
        assert!(net.predict(&random_inputs(2, 33, 0)).is_err());
    }

    pub(crate) fn check_gradients(net: &mut Mlp, x: &Array2<f64>, loss: &dyn Loss, seed: u64) {
        let err = net.max_gradient_error(x, loss, seed);
        assert!(err < 1e-4, "max relative gradient error {err}");
    }

    #[test]
    fn rmse_gradients_match_finite_differences() {
        for seed in 0..3 {
            let mut net = Mlp::new(MlpSpec::location_net(6), seed);
            let x = random_inputs(4, 6, 10 + seed);
            let loss = Rmse {
                targets: vec![0.7, 1.3, 0.9, 2.0],
            };
            check_gradients(&mut net, &x, &loss, seed);
        }
    }

    #[test]
    fn sigmoid_net_gradients_match_finite_differences() {
        // squared error stand-in so every output unit receives gradient
        struct Sq(Vec<[f64; 2]>);
        impl Loss for Sq {
            fn eval(&self, out: &Array2<f64>, rows: &[usize]) -> (f64, Array2<f64>) {
                let mut g = Array2::zeros(out.raw_dim());
                let mut l = 0.0;
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..2 {
                        let d = out[[i, j]] - self.0[r][j];
                        l += d * d;
                        g[[i, j]] = 2.0 * d;
                    }
                }
                (l, g)
            }
        }
        let mut net = Mlp::new(MlpSpec::family_net(5), 3);
        let x = random_inputs(4, 5, 4);
        let loss = Sq(vec![[0.1, 0.9], [0.4, 0.2], [0.8, 0.5], [0.3, 0.3]]);
        check_gradients(&mut net, &x, &loss, 7);
    }

    #[test]
    fn constant_target_is_learned() {
        let x = random_inputs(256, 8, 20);
        let loss = Rmse {
            targets: vec![1.0; 256],
        };
        let cfg = TrainConfig {
            max_epochs: 500,
            patience: 500,
            seed: 3,
            ..TrainConfig::default()
        };
        let (net, log) = train_mlp(MlpSpec::location_net(8), &x, &loss, &cfg).unwrap();
        let rows: Vec<usize> = (0..256).collect();
        let rmse = loss.eval(&net.predict(&x).unwrap(), &rows).0;
        assert!(rmse < 1e-3, "rmse {rmse} after {} epochs", log.epochs_run);
    }

    #[test]
    fn training_is_deterministic() {
        let x = random_inputs(30, 4, 1);
        let loss = Rmse {
            targets: (0..30).map(|i| 0.5 + i as f64 / 30.0).collect(),
        };
        let cfg = TrainConfig {
            max_epochs: 50,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train_mlp(MlpSpec::location_net(4), &x, &loss, &cfg).unwrap();
        let b = train_mlp(MlpSpec::location_net(4), &x, &loss, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
