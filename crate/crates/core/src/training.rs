//! Loss, optimizer and the mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lstm::{net_backward, net_forward, LstmNetwork, NetworkGradients};
use crate::tensor::Vector;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        Ok(())
    }
}

/// One supervised example: `ℓ` station vectors in, one station vector out.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<Vector>,
    pub target: Vector,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean training MAE before the first update.
    pub initial_train_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

/// Running mean-square accumulators, one per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RmspropState {
    accum: Vec<Vec<f64>>,
}

impl RmspropState {
    pub fn new(net: &LstmNetwork) -> Self {
        Self {
            accum: net.blocks().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn accumulators(&self) -> impl Iterator<Item = &f64> {
        self.accum.iter().flatten()
    }
}

/// Mean absolute error and its subgradient (`sign(0) = 0`).
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vector)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("prediction {} vs target {}", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("MAE of empty vectors".into()));
    }
    let m = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let e = p - t;
        loss += e.abs();
        let s = if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad.push(s / m);
    }
    Ok((loss / m, grad.into()))
}

/// Rescales `grads` in place so its global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut NetworkGradients, max_norm: f64) {
    if !(max_norm > 0.0) || !max_norm.is_finite() {
        return;
    }
    let norm = grads.norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

/// One RMSprop step after global-norm clipping:
/// `s ← ρs + (1−ρ)g²`, `θ ← θ − lr·g / (√s + ε)`.
pub fn rmsprop_update(
    net: &mut LstmNetwork,
    grads: &NetworkGradients,
    state: &mut RmspropState,
    cfg: &TrainConfig,
) -> Result<()> {
    let shapes_match = net.blocks().count() == state.accum.len()
        && net.blocks().zip(grads.blocks()).all(|(p, g)| p.len() == g.len())
        && net.blocks().zip(&state.accum).all(|(p, s)| p.len() == s.len())
        && grads.blocks().count() == state.accum.len();
    if !shapes_match {
        return Err(Error::Shape("optimizer state, gradients and parameters disagree".into()));
    }
    let mut clipped = grads.clone();
    clip_global_norm(&mut clipped, cfg.clip_norm);
    let (lr, rho, eps) = (cfg.learning_rate, cfg.rho, cfg.epsilon);
    for ((params, g), s) in net.blocks_mut().zip(clipped.blocks()).zip(state.accum.iter_mut()) {
        for ((theta, &g), s) in params.iter_mut().zip(g).zip(s.iter_mut()) {
            *s = rho * *s + (1.0 - rho) * g * g;
            if g != 0.0 {
                *theta -= lr * g / (s.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// Loss and gradient for a single sample.
pub fn sample_gradient(net: &LstmNetwork, sample: &Sample) -> Result<(f64, NetworkGradients)> {
    let (pred, cache) = net_forward(net, &sample.input)?;
    let (loss, dpred) = mae_loss(&pred, &sample.target)?;
    Ok((loss, net_backward(net, &cache, &dpred)?))
}

/// Mean loss and mean gradient over `batch`.
///
/// Per-sample gradients may be computed concurrently; they are summed in
/// batch order, so the result is bit-identical for every [`Exec`].
pub fn batch_gradient(net: &LstmNetwork, batch: &[&Sample], exec: Exec) -> Result<(f64, NetworkGradients)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let parts = exec.map(batch, |s| sample_gradient(net, s));
    let mut total = NetworkGradients::zeros_like(net);
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_assign(&g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss / batch.len() as f64, total))
}

/// Mean per-sample MAE.
pub fn mean_loss(net: &LstmNetwork, samples: &[Sample], exec: Exec) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to evaluate".into()));
    }
    let losses = exec.map(samples, |s| -> Result<f64> {
        let pred = net.predict(&s.input)?;
        Ok(mae_loss(&pred, &s.target)?.0)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / samples.len() as f64)
}

/// Trains `net` with seeded shuffling, mini-batch RMSprop and early stopping
/// on validation MAE. Returns the parameters from the best validation epoch.
///
/// With no validation samples the training loss is monitored instead.
pub fn train_model(
    net: LstmNetwork,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<(LstmNetwork, TrainHistory)> {
    train_model_with(net, train, val, cfg, Exec::default())
}

pub fn train_model_with(
    net: LstmNetwork,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<(LstmNetwork, TrainHistory)> {
    let mut evaluate = |net: &LstmNetwork, _epoch: usize, train_loss: f64| {
        if val.is_empty() {
            Ok(train_loss)
        } else {
            mean_loss(net, val, exec)
        }
    };
    train_with_evaluator(net, train, cfg, exec, &mut evaluate)
}

pub(crate) fn train_with_evaluator(
    mut net: LstmNetwork,
    train: &[Sample],
    cfg: &TrainConfig,
    exec: Exec,
    evaluate: &mut dyn FnMut(&LstmNetwork, usize, f64) -> Result<f64>,
) -> Result<(LstmNetwork, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let mut history = TrainHistory {
        initial_train_loss: mean_loss(&net, train, exec)?,
        ..TrainHistory::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = RmspropState::new(&net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, net.clone());
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_gradient(&net, &batch, exec)?;
            if !loss.is_finite() || !grads.norm().is_finite() {
                return Err(Error::NonFinite { epoch, batch: b + 1 });
            }
            epoch_loss += loss * batch.len() as f64;
            rmsprop_update(&mut net, &grads, &mut state, cfg)?;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = evaluate(&net, epoch, train_loss)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite { epoch, batch: 0 });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.stopped_epoch = epoch;
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        if val_loss < best.0 {
            best = (val_loss, net.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::init_params;
    use rand::Rng;

    fn scalar_net(theta: f64) -> LstmNetwork {
        let mut net = init_params(&[1], 1, 0).unwrap();
        for b in net.blocks_mut() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        net.head_bias[0] = theta;
        net
    }

    fn single_grad(net: &LstmNetwork, g: f64) -> NetworkGradients {
        let mut grads = NetworkGradients::zeros_like(net);
        grads.head_bias[0] = g;
        grads
    }

    fn toy_samples(count: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let input: Vec<Vector> = (0..4)
                    .map(|_| Vector::from(vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]))
                    .collect();
                let mean = input.iter().flat_map(|v| v.iter()).sum::<f64>() / 8.0;
                Sample {
                    input,
                    target: Vector::from(vec![0.5 * mean, 0.5 * mean]),
                }
            })
            .collect()
    }

    #[test]
    fn mae_cases() {
        let (l, g) = mae_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (l, g) = mae_loss(&[0.0, 0.0], &[1.0, -1.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(&g[..], &[-0.5, 0.5]);
        let (l, g) = mae_loss(&[3.0], &[5.0]).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(&g[..], &[-1.0]);
        assert!(mae_loss(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae_loss(&[], &[]).is_err());
    }

    #[test]
    fn rmsprop_zero_gradient_is_noop() {
        let mut net = scalar_net(0.25);
        let before = net.clone();
        let mut state = RmspropState::new(&net);
        let grads = NetworkGradients::zeros_like(&net);
        rmsprop_update(&mut net, &grads, &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn rmsprop_hand_step() {
        let mut net = scalar_net(0.0);
        let mut state = RmspropState::new(&net);
        let grads = single_grad(&net, 2.0);
        rmsprop_update(&mut net, &grads, &mut state, &TrainConfig::default()).unwrap();
        let s = *state.accumulators().last().unwrap();
        assert!((s - 0.4).abs() < 1e-15);
        assert!((net.head_bias[0] - (-0.001 * 2.0 / 0.4f64.sqrt())).abs() < 1e-9);
        assert!((net.head_bias[0] + 0.0031623).abs() < 1e-7);
    }

    #[test]
    fn rmsprop_moves_monotonically() {
        let mut net = scalar_net(0.0);
        let mut state = RmspropState::new(&net);
        let mut last = 0.0;
        for step in 0..10 {
            let g = 0.5 + step as f64;
            let grads = single_grad(&net, g);
            rmsprop_update(&mut net, &grads, &mut state, &TrainConfig::default()).unwrap();
            assert!(net.head_bias[0] < last);
            last = net.head_bias[0];
        }
    }

    #[test]
    fn rmsprop_first_step_is_scale_free() {
        let cfg = TrainConfig::default();
        let expected = cfg.learning_rate / (1.0 - cfg.rho).sqrt();
        for g in [0.01, 1.0, 100.0] {
            for sign in [1.0, -1.0] {
                let mut net = scalar_net(0.0);
                let mut state = RmspropState::new(&net);
                let grads = single_grad(&net, sign * g);
                rmsprop_update(&mut net, &grads, &mut state, &cfg).unwrap();
                assert!((net.head_bias[0] + sign * expected).abs() < 1e-6, "g = {g}");
            }
        }
    }

    #[test]
    fn clipping_caps_global_norm() {
        let net = init_params(&[3], 2, 1).unwrap();
        let mut g = NetworkGradients::zeros_like(&net);
        for b in g.blocks_mut() {
            b.iter_mut().for_each(|v| *v = 10.0);
        }
        clip_global_norm(&mut g, 5.0);
        assert!((g.norm() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn rmsprop_rejects_mismatched_state() {
        let mut net = init_params(&[3], 2, 1).unwrap();
        let other = init_params(&[4], 2, 1).unwrap();
        let mut state = RmspropState::new(&other);
        let grads = NetworkGradients::zeros_like(&net);
        assert!(rmsprop_update(&mut net, &grads, &mut state, &TrainConfig::default()).is_err());
    }

    #[test]
    fn batch_gradient_is_mean_of_sample_gradients() {
        let net = init_params(&[4], 2, 3).unwrap();
        let samples = toy_samples(5, 3);
        let refs: Vec<&Sample> = samples.iter().collect();
        let (loss, g) = batch_gradient(&net, &refs, Exec::Sequential).unwrap();
        let mut sum = NetworkGradients::zeros_like(&net);
        let mut lsum = 0.0;
        for s in &samples {
            let (l, gs) = sample_gradient(&net, s).unwrap();
            lsum += l;
            sum.add_assign(&gs);
        }
        sum.scale(1.0 / 5.0);
        assert_eq!(g, sum);
        assert_eq!(loss, lsum / 5.0);
        let (_, gp) = batch_gradient(&net, &refs, Exec::Parallel).unwrap();
        assert_eq!(g, gp);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let train = toy_samples(200, 1);
        let val = toy_samples(40, 2);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 15,
            seed: 5,
            ..TrainConfig::default()
        };
        let net = init_params(&[6], 2, 4).unwrap();
        let (a, ha) = train_model(net.clone(), &train, &val, &cfg).unwrap();
        let (b, hb) = train_model(net, &train, &val, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert!(ha.train_loss.last().unwrap() < &ha.initial_train_loss);
        assert_eq!(ha.train_loss.len(), ha.stopped_epoch);
        assert_eq!(ha.val_loss.len(), ha.stopped_epoch);
        let best = ha.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(ha.val_loss[ha.best_epoch - 1], best);
        assert_eq!(mean_loss(&a, &val, Exec::Sequential).unwrap(), best);
    }

    #[test]
    fn early_stopping_arithmetic() {
        let train = toy_samples(10, 1);
        let cfg = TrainConfig {
            patience: 2,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let schedule = [0.9, 0.8, 0.7, 0.75, 0.8, 0.85, 0.9];
        let mut evaluator = |_: &LstmNetwork, epoch: usize, _: f64| Ok(schedule[epoch - 1]);
        let net = init_params(&[2], 2, 0).unwrap();
        let (_, h) = train_with_evaluator(net, &train, &cfg, Exec::Sequential, &mut evaluator).unwrap();
        assert_eq!(h.stopped_epoch, 5);
        assert_eq!(h.best_epoch, 3);
    }

    #[test]
    fn nan_loss_aborts_with_location() {
        let mut train = toy_samples(10, 1);
        train[3].target[0] = f64::NAN;
        let cfg = TrainConfig {
            batch_size: 4,
            ..TrainConfig::default()
        };
        let net = init_params(&[2], 2, 0).unwrap();
        let mut evaluator = |_: &LstmNetwork, _: usize, l: f64| Ok(l);
        let err = train_with_evaluator(net, &train, &cfg, Exec::Sequential, &mut evaluator).unwrap_err();
        assert!(matches!(err, Error::NonFinite { epoch: 1, .. }), "{err}");
        assert!(err.is_numerical());
    }

    #[test]
    fn empty_training_set_rejected() {
        let net = init_params(&[2], 2, 0).unwrap();
        assert!(train_model(net, &[], &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { rho: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
