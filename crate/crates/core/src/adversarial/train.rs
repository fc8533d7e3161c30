use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_model, ArchConfig, LabeledSet, Model, Standardizer};
use crate::ban_synth::mix_seed;
use crate::error::{Error, Result};
use crate::labels::DeviceLabel;
use crate::nn::{Graph, Optimizer, OptimizerConfig, ParamSet};

const SHUFFLE_SALT: u64 = 0x5EED_0000;

/// `L_P - lambda * L_D`.
pub fn value_fn(loss_p: f64, loss_d: f64, lambda: f64) -> f64 {
    loss_p - lambda * loss_d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Adversarial,
    Baseline,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adversarial" => Ok(TrainMode::Adversarial),
            "baseline" => Ok(TrainMode::Baseline),
            other => Err(Error::config(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr_ep: f64,
    pub lr_d: f64,
    /// Update rule; its own `lr` is replaced by `lr_ep` / `lr_d`.
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub d_steps_per_ep_step: usize,
    /// Epochs without improvement of the monitored predictor loss before
    /// stopping; 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            lr_ep: 1e-3,
            lr_d: 1e-3,
            optimizer: OptimizerConfig::default(),
            batch_size: 64,
            epochs: 100,
            seed: 0,
            d_steps_per_ep_step: 1,
            patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.d_steps_per_ep_step == 0 {
            return Err(Error::config("batch_size, epochs and d_steps_per_ep_step must be >= 1"));
        }
        self.optimizer.with_lr(self.lr_ep).validate()?;
        self.optimizer.with_lr(self.lr_d).validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_p_train: f64,
    pub loss_d_train: f64,
    pub loss_p_test: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Cross-entropy rows whose target probability hit the clamp.
    pub clamp_events: usize,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Mean discriminator training loss over the last `window` epochs.
    pub fn converged_loss_d(&self, window: usize) -> f64 {
        let tail = &self.epochs[self.epochs.len().saturating_sub(window.max(1))..];
        tail.iter().map(|e| e.loss_d_train).sum::<f64>() / tail.len() as f64
    }

    /// `epoch,loss_p_train,loss_d_train,loss_p_test`, one row per epoch;
    /// a missing monitor set writes `NaN`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Corrupt(format!("history csv: {e}"));
        w.write_record(["epoch", "loss_p_train", "loss_d_train", "loss_p_test"])
            .map_err(csv_err)?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.loss_p_train.to_string(),
                e.loss_d_train.to_string(),
                e.loss_p_test.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Corrupt(format!("history csv: {e}")))
    }
}

fn check_set(set: &LabeledSet, mode: TrainMode) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if set.devices() != [DeviceLabel::OffBody, DeviceLabel::OnBody] {
        return Err(Error::config(
            "training set must contain both on-body and off-body profiles",
        ));
    }
    if mode == TrainMode::Adversarial && set.motions().len() < 2 {
        return Err(Error::config(
            "adversarial training needs at least two motions; the discriminator has nothing to separate",
        ));
    }
    Ok(())
}

fn at(epoch: usize, batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("epoch {epoch} batch {batch}: {context}"),
        },
        other => other,
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            context: what.to_string(),
        })
    }
}

/// Alternating minimax training. Each minibatch takes
/// `d_steps_per_ep_step` steps on `L_D` for `D` alone, then one step on
/// `L_P - lambda * L_D` for `E` and `P`, with `D` at its updated weights.
/// Baseline mode is the same loop with `lambda = 0`.
///
/// `monitor` drives early stopping and the `loss_p_test` column; the
/// parameters of the best monitored epoch are returned.
pub fn train(
    mode: TrainMode,
    set: &LabeledSet,
    monitor: Option<&LabeledSet>,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    check_set(set, mode)?;
    let lambda = match mode {
        TrainMode::Adversarial => config.lambda,
        TrainMode::Baseline => 0.0,
    };
    let motions = set.motions();
    let mut model = build_model(arch, &motions, Standardizer::fit(&set.rows)?, config.seed)?;
    let mut opt_d = Optimizer::new(config.optimizer.with_lr(config.lr_d), model.discriminator_ids())?;
    let ep_ids = model.extractor_ids().into_iter().chain(model.predictor_ids());
    let mut opt_ep = Optimizer::new(config.optimizer.with_lr(config.lr_ep), ep_ids)?;

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..set.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, SHUFFLE_SALT + epoch as u64));
        order.shuffle(&mut rng);
        let (mut sum_p, mut sum_d) = (0.0, 0.0);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let tag = at(epoch, bi);
            let batch = model.batch(set, chunk)?;
            let mut g = Graph::new();
            let fwd = model.forward(&mut g, &batch)?;
            let lp = finite(g.value(fwd.loss_p).item(), "predictor loss").map_err(&tag)?;

            let mut ld_first = None;
            for _ in 0..config.d_steps_per_ep_step {
                let ld = model.loss_d_node(&mut g, &fwd, &batch.motion, true)?;
                let v = finite(g.value(ld).item(), "discriminator loss").map_err(&tag)?;
                ld_first.get_or_insert(v);
                let grads = g.backward(ld)?;
                opt_d.step(&mut model.params, &grads).map_err(&tag)?;
            }

            let objective = if lambda == 0.0 {
                fwd.loss_p
            } else {
                let ld = model.loss_d_node(&mut g, &fwd, &batch.motion, false)?;
                finite(g.value(ld).item(), "adversarial discriminator loss").map_err(&tag)?;
                let scaled = g.scale(ld, lambda);
                g.sub(fwd.loss_p, scaled)?
            };
            let grads = g.backward(objective)?;
            opt_ep.step(&mut model.params, &grads).map_err(&tag)?;
            history.clamp_events += g.clamp_events();

            let n = chunk.len() as f64;
            sum_p += lp * n;
            sum_d += ld_first.unwrap_or(0.0) * n;
        }
        let n = set.len() as f64;
        let loss_p_test = match monitor {
            Some(m) => model.mean_loss_p(m)?,
            None => f64::NAN,
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss_p_train: sum_p / n,
            loss_d_train: sum_d / n,
            loss_p_test,
        });

        if monitor.is_some() && config.patience > 0 {
            if best.as_ref().is_none_or(|(b, _)| loss_p_test < *b) {
                best = Some((loss_p_test, model.params.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, history))
}

pub fn train_adversarial(
    set: &LabeledSet,
    monitor: Option<&LabeledSet>,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    train(TrainMode::Adversarial, set, monitor, arch, config)
}

/// `D` still learns `L_D`, but `E` and `P` follow `L_P` alone.
pub fn train_baseline(
    set: &LabeledSet,
    monitor: Option<&LabeledSet>,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    train(TrainMode::Baseline, set, monitor, arch, config)
}
