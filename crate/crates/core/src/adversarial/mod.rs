//! Extractor / on-off predictor / motion discriminator model and its
//! minimax training.
//!
//! The extractor `E` maps a standardized profile to a representation, the
//! predictor `P` maps the representation to on/off probabilities, and the
//! discriminator `D` sees the representation concatenated with a
//! gradient-stopped copy of `P`'s output and guesses the motion.

mod checkpoint;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use train::{
    train, train_adversarial, train_baseline, value_fn, EpochRecord, TrainConfig, TrainHistory, TrainMode,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ban_synth::mix_seed;
use crate::error::{Error, Result};
use crate::features::{FeatureRecord, PROFILE_DIM};
use crate::labels::{DeviceLabel, MotionLabel};
use crate::nn::{GradCheck, Graph, ParamId, ParamSet, Tensor, Var};

const INIT_SALT: u64 = 0x1A17;

/// Named, versioned layer layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub name: String,
    pub input_dim: usize,
    pub kernel: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub repr_dim: usize,
    pub predictor_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            name: "conv8-k5-v1".into(),
            input_dim: PROFILE_DIM,
            kernel: 5,
            channels: vec![8, 8, 16, 16, 32, 32, 64, 64],
            strides: vec![2, 1, 2, 1, 2, 1, 2, 1],
            repr_dim: 64,
            predictor_hidden: vec![64, 32],
            discriminator_hidden: vec![64, 32],
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.strides.len() {
            return Err(Error::config(format!(
                "architecture {}: {} channel entries vs {} strides",
                self.name,
                self.channels.len(),
                self.strides.len()
            )));
        }
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return Err(Error::config(format!("kernel width must be odd, got {}", self.kernel)));
        }
        if self.channels.contains(&0) || self.strides.contains(&0) || self.repr_dim == 0 || self.input_dim == 0 {
            return Err(Error::config("architecture widths and strides must be positive"));
        }
        if self.predictor_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        Ok(())
    }

    /// `(channels, length)` after every conv layer.
    pub fn conv_shapes(&self) -> Vec<(usize, usize)> {
        let pad = self.kernel / 2;
        let mut len = self.input_dim;
        self.channels
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| {
                len = (len + 2 * pad - self.kernel) / s + 1;
                (c, len)
            })
            .collect()
    }

    pub fn flat_dim(&self) -> usize {
        let (c, l) = *self.conv_shapes().last().expect("validated");
        c * l
    }
}

/// Per-feature z-score from training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; features with zero spread are divided by 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("training rows"))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::Shape(format!("row of {} values, expected {dim}", r.len())));
            }
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, row: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::Shape(format!(
                "profile of {} values, model expects {}",
                row.len(),
                self.dim()
            )));
        }
        out.extend(row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s));
        Ok(())
    }
}

/// Profiles with their device and motion labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub rows: Vec<Vec<f64>>,
    pub device: Vec<DeviceLabel>,
    pub motion: Vec<MotionLabel>,
}

impl LabeledSet {
    pub fn from_records(records: &[FeatureRecord]) -> Self {
        let mut set = Self::default();
        for r in records {
            set.push(r.profile.to_vec(), r.profile.link, r.profile.motion);
        }
        set
    }

    pub fn push(&mut self, row: Vec<f64>, device: DeviceLabel, motion: MotionLabel) {
        self.rows.push(row);
        self.device.push(device);
        self.motion.push(motion);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct motions in code order.
    pub fn motions(&self) -> Vec<MotionLabel> {
        let mut m: Vec<_> = self.motion.clone();
        m.sort();
        m.dedup();
        m
    }

    pub fn devices(&self) -> Vec<DeviceLabel> {
        let mut d: Vec<_> = self.device.clone();
        d.sort();
        d.dedup();
        d
    }

    pub fn filter(&self, keep: impl Fn(DeviceLabel, MotionLabel) -> bool) -> Self {
        let mut out = Self::default();
        for i in 0..self.len() {
            if keep(self.device[i], self.motion[i]) {
                out.push(self.rows[i].clone(), self.device[i], self.motion[i]);
            }
        }
        out
    }
}

/// On/off output of the predictor for one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnOffDistribution {
    pub p_off: f64,
    pub p_on: f64,
}

impl OnOffDistribution {
    pub fn decide(&self, threshold: f64) -> DeviceLabel {
        if self.p_on >= threshold {
            DeviceLabel::OnBody
        } else {
            DeviceLabel::OffBody
        }
    }
}

/// A standardized minibatch with class indices.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor,
    pub device: Vec<usize>,
    pub motion: Vec<usize>,
}

/// Graph nodes of one forward pass through `E` and `P`.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub rep: Var,
    pub probs: Var,
    pub loss_p: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: ArchConfig,
    pub motions: Vec<MotionLabel>,
    pub standardizer: Standardizer,
    pub params: ParamSet,
}

/// Which loss a gradient audit differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Predictor,
    Discriminator,
    /// `L_P - lambda * L_D` with `D` on the live representation.
    Value(OrderedLambda),
}

/// λ wrapper so [`LossKind`] stays `Eq`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct OrderedLambda(u64);

impl std::fmt::Debug for OrderedLambda {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.get())
    }
}

impl OrderedLambda {
    pub fn new(lambda: f64) -> Self {
        Self(lambda.to_bits())
    }

    pub fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

fn dense_stack(ps: &mut ParamSet, prefix: &str, widths: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
    let last = widths.len() - 2;
    for (i, pair) in widths.windows(2).enumerate() {
        let (fan_in, out) = (pair[0], pair[1]);
        // output layers start small so initial predictions are near uniform
        let bound = if i == last {
            0.1 * (3.0 / fan_in as f64).sqrt()
        } else {
            (6.0 / fan_in as f64).sqrt()
        };
        ps.insert_uniform(&format!("{prefix}.fc{i}.w"), &[fan_in, out], bound, rng)?;
        ps.insert(&format!("{prefix}.fc{i}.b"), Tensor::zeros(&[out]))?;
    }
    Ok(())
}

/// Deterministically initialised model. `n_z = motions.len()`.
pub fn build_model(arch: &ArchConfig, motions: &[MotionLabel], standardizer: Standardizer, seed: u64) -> Result<Model> {
    arch.validate()?;
    if motions.is_empty() {
        return Err(Error::config("discriminator needs at least one motion class"));
    }
    let mut sorted = motions.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != motions.len() {
        return Err(Error::config("duplicate motion in discriminator classes"));
    }
    if standardizer.dim() != arch.input_dim {
        return Err(Error::Shape(format!(
            "standardizer has {} features, architecture expects {}",
            standardizer.dim(),
            arch.input_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, INIT_SALT));
    let mut ps = ParamSet::new();
    let mut cin = 1;
    for (i, &c) in arch.channels.iter().enumerate() {
        let fan_in = cin * arch.kernel;
        ps.insert_uniform(
            &format!("E.conv{i}.w"),
            &[c, cin, arch.kernel],
            (6.0 / fan_in as f64).sqrt(),
            &mut rng,
        )?;
        ps.insert(&format!("E.conv{i}.b"), Tensor::zeros(&[c]))?;
        cin = c;
    }
    let flat = arch.flat_dim();
    ps.insert_uniform("E.proj.w", &[flat, arch.repr_dim], (6.0 / flat as f64).sqrt(), &mut rng)?;
    ps.insert("E.proj.b", Tensor::zeros(&[arch.repr_dim]))?;

    let mut pw = vec![arch.repr_dim];
    pw.extend(&arch.predictor_hidden);
    pw.push(2);
    dense_stack(&mut ps, "P", &pw, &mut rng)?;

    let mut dw = vec![arch.repr_dim + 2];
    dw.extend(&arch.discriminator_hidden);
    dw.push(motions.len());
    dense_stack(&mut ps, "D", &dw, &mut rng)?;

    Ok(Model {
        arch: arch.clone(),
        motions: motions.to_vec(),
        standardizer,
        params: ps,
    })
}

impl Model {
    pub fn n_z(&self) -> usize {
        self.motions.len()
    }

    pub fn motion_index(&self, m: MotionLabel) -> Option<usize> {
        self.motions.iter().position(|&x| x == m)
    }

    fn id(&self, name: &str) -> ParamId {
        self.params
            .id(name)
            .unwrap_or_else(|| panic!("model is missing parameter {name}"))
    }

    pub fn extractor_ids(&self) -> Vec<ParamId> {
        self.params.with_prefix("E.").collect()
    }

    pub fn predictor_ids(&self) -> Vec<ParamId> {
        self.params.with_prefix("P.").collect()
    }

    pub fn discriminator_ids(&self) -> Vec<ParamId> {
        self.params.with_prefix("D.").collect()
    }

    pub fn conv_layer_count(&self) -> usize {
        self.params
            .ids()
            .filter(|&id| {
                let n = self.params.name(id);
                n.starts_with("E.conv") && n.ends_with(".w")
            })
            .count()
    }

    pub fn dense_layer_count(&self, prefix: &str) -> usize {
        let p = format!("{prefix}.fc");
        self.params
            .ids()
            .filter(|&id| {
                let n = self.params.name(id);
                n.starts_with(&p) && n.ends_with(".w")
            })
            .count()
    }

    /// Standardizes `indices` of `set` into a batch. Motions outside the
    /// model's class list map to index 0 and must not reach a D loss.
    pub fn batch(&self, set: &LabeledSet, indices: &[usize]) -> Result<Batch> {
        let dim = self.arch.input_dim;
        let mut data = Vec::with_capacity(indices.len() * dim);
        let mut device = Vec::with_capacity(indices.len());
        let mut motion = Vec::with_capacity(indices.len());
        for &i in indices {
            self.standardizer.apply_into(&set.rows[i], &mut data)?;
            device.push(set.device[i].code() as usize);
            motion.push(self.motion_index(set.motion[i]).unwrap_or(0));
        }
        Ok(Batch {
            x: Tensor::new(vec![indices.len(), 1, dim], data)?,
            device,
            motion,
        })
    }

    /// `E(x)` with `x` a `[B, 1, input_dim]` node.
    pub fn extractor(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let pad = self.arch.kernel / 2;
        let mut h = x;
        for (i, &s) in self.arch.strides.iter().enumerate() {
            let w = g.param(&self.params, self.id(&format!("E.conv{i}.w")));
            let b = g.param(&self.params, self.id(&format!("E.conv{i}.b")));
            h = g.conv1d(h, w, b, s, pad)?;
            h = g.relu(h);
        }
        let flat = g.flatten(h);
        let w = g.param(&self.params, self.id("E.proj.w"));
        let b = g.param(&self.params, self.id("E.proj.b"));
        let rep = g.dense(flat, w, b)?;
        Ok(g.relu(rep))
    }

    fn dense_block(&self, g: &mut Graph, prefix: &str, input: Var, layers: usize) -> Result<Var> {
        let mut h = input;
        for i in 0..layers {
            let w = g.param(&self.params, self.id(&format!("{prefix}.fc{i}.w")));
            let b = g.param(&self.params, self.id(&format!("{prefix}.fc{i}.b")));
            h = g.dense(h, w, b)?;
            if i + 1 < layers {
                h = g.relu(h);
            }
        }
        g.softmax(h)
    }

    /// `P_y(. | rep)`, `[B, 2]`, column 1 is on-body.
    pub fn predictor(&self, g: &mut Graph, rep: Var) -> Result<Var> {
        self.dense_block(g, "P", rep, self.arch.predictor_hidden.len() + 1)
    }

    /// `D_z(. | rep, probs)`, `[B, n_z]`.
    pub fn discriminator(&self, g: &mut Graph, rep: Var, probs: Var) -> Result<Var> {
        let input = g.concat(rep, probs)?;
        self.dense_block(g, "D", input, self.arch.discriminator_hidden.len() + 1)
    }

    /// Builds `E`, `P` and `L_P` for a batch.
    pub fn forward(&self, g: &mut Graph, batch: &Batch) -> Result<Forward> {
        let x = g.input(batch.x.clone());
        self.forward_from(g, x, &batch.device)
    }

    fn forward_from(&self, g: &mut Graph, x: Var, device: &[usize]) -> Result<Forward> {
        let rep = self.extractor(g, x)?;
        let probs = self.predictor(g, rep)?;
        let loss_p = g.cross_entropy(probs, device)?;
        Ok(Forward { rep, probs, loss_p })
    }

    /// `L_D` with `D` fed `[rep, stop_gradient(probs)]`. `detach_rep` also
    /// stops the gradient into `E`, as in the discriminator's own step.
    pub fn loss_d_node(&self, g: &mut Graph, fwd: &Forward, motion: &[usize], detach_rep: bool) -> Result<Var> {
        let rep = if detach_rep { g.stop_gradient(fwd.rep) } else { fwd.rep };
        let probs = g.stop_gradient(fwd.probs);
        let dz = self.discriminator(g, rep, probs)?;
        g.cross_entropy(dz, motion)
    }

    /// Mean predictor cross-entropy and its gradient for every parameter
    /// (zeros where `L_P` does not reach), in [`ParamSet`] order.
    pub fn loss_p(&self, batch: &Batch) -> Result<(f64, Vec<Tensor>)> {
        self.audit_loss(batch, LossKind::Predictor)
    }

    /// Mean discriminator cross-entropy with gradients, with `E` receiving
    /// the gradient through the live representation.
    pub fn loss_d(&self, batch: &Batch) -> Result<(f64, Vec<Tensor>)> {
        self.audit_loss(batch, LossKind::Discriminator)
    }

    /// With `frozen` set, `D` reads that tensor in place of
    /// `stop_gradient(probs)`: same value at the base point, but constant
    /// under perturbation, which is what the stop-gradient differentiates.
    fn loss_node(&self, g: &mut Graph, x: Var, batch: &Batch, kind: LossKind, frozen: Option<&Tensor>) -> Result<Var> {
        let fwd = self.forward_from(g, x, &batch.device)?;
        let ld = |g: &mut Graph| -> Result<Var> {
            match frozen {
                None => self.loss_d_node(g, &fwd, &batch.motion, false),
                Some(p) => {
                    let probs = g.input(p.clone());
                    let dz = self.discriminator(g, fwd.rep, probs)?;
                    g.cross_entropy(dz, &batch.motion)
                }
            }
        };
        match kind {
            LossKind::Predictor => Ok(fwd.loss_p),
            LossKind::Discriminator => ld(g),
            LossKind::Value(l) => {
                let ld = ld(g)?;
                let scaled = g.scale(ld, l.get());
                g.sub(fwd.loss_p, scaled)
            }
        }
    }

    fn probs_of(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, batch)?;
        Ok(g.value(fwd.probs).clone())
    }

    fn loss_value(&self, batch: &Batch, kind: LossKind, frozen: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let x = g.input(batch.x.clone());
        let loss = self.loss_node(&mut g, x, batch, kind, Some(frozen))?;
        Ok(g.value(loss).item())
    }

    /// Loss value and dense per-parameter gradients for `kind`.
    pub fn audit_loss(&self, batch: &Batch, kind: LossKind) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let x = g.input(batch.x.clone());
        let loss = self.loss_node(&mut g, x, batch, kind, None)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: format!("{kind:?} loss"),
            });
        }
        let grads = g.backward(loss)?;
        let dense = self
            .params
            .ids()
            .map(|id| {
                grads
                    .param(id)
                    .unwrap_or_else(|| Tensor::zeros(self.params.get(id).shape()))
            })
            .collect();
        Ok((value, dense))
    }

    /// Central-difference check of `kind` against the analytic gradient at
    /// `probes` scalar coordinates per parameter tensor, plus every input
    /// coordinate of the batch. The on/off probabilities fed to `D` are held
    /// at their base value while differencing.
    pub fn grad_check(&self, batch: &Batch, kind: LossKind, probes: usize, h: f64) -> Result<GradCheck> {
        let (_, analytic) = self.audit_loss(batch, kind)?;
        let frozen = self.probs_of(batch)?;
        let mut worst = GradCheck {
            max_rel_error: 0.0,
            worst_index: 0,
        };
        let mut probe = |a: f64, n: f64, index: usize| {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            if rel > worst.max_rel_error {
                worst = GradCheck {
                    max_rel_error: rel,
                    worst_index: index,
                };
            }
        };
        let mut cursor = 0usize;
        for id in self.params.ids() {
            let len = self.params.get(id).len();
            let count = probes.min(len);
            for k in 0..count {
                let i = ((2 * k + 1) * len) / (2 * count);
                let eval = |delta: f64| -> Result<f64> {
                    let mut m = self.clone();
                    m.params.get_mut(id).data_mut()[i] += delta;
                    m.loss_value(batch, kind, &frozen)
                };
                let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
                probe(analytic[id.0].data()[i], numeric, cursor + i);
            }
            cursor += len;
        }
        let input = crate::nn::grad_check(&batch.x, h, |g, x| self.loss_node(g, x, batch, kind, Some(&frozen)))?;
        if input.max_rel_error > worst.max_rel_error {
            worst = GradCheck {
                max_rel_error: input.max_rel_error,
                worst_index: cursor + input.worst_index,
            };
        }
        Ok(worst)
    }

    /// On/off distribution per row of `set`, in chunks of 256.
    pub fn predict_set(&self, set: &LabeledSet) -> Result<Vec<OnOffDistribution>> {
        let mut out = Vec::with_capacity(set.len());
        let indices: Vec<usize> = (0..set.len()).collect();
        for chunk in indices.chunks(256) {
            let batch = self.batch(set, chunk)?;
            out.extend(self.predict_batch(&batch)?);
        }
        Ok(out)
    }

    pub fn predict_batch(&self, batch: &Batch) -> Result<Vec<OnOffDistribution>> {
        let mut g = Graph::new();
        let x = g.input(batch.x.clone());
        let rep = self.extractor(&mut g, x)?;
        let probs = self.predictor(&mut g, rep)?;
        let p = g.value(probs);
        Ok((0..batch.device.len())
            .map(|r| OnOffDistribution {
                p_off: p.row(r)[0],
                p_on: p.row(r)[1],
            })
            .collect())
    }

    pub fn predict(&self, profile: &[f64]) -> Result<OnOffDistribution> {
        let mut data = Vec::with_capacity(profile.len());
        self.standardizer.apply_into(profile, &mut data)?;
        let batch = Batch {
            x: Tensor::new(vec![1, 1, self.arch.input_dim], data)?,
            device: vec![0],
            motion: vec![0],
        };
        Ok(self.predict_batch(&batch)?[0])
    }

    /// Mean `L_P` over `set`, evaluated in chunks.
    pub fn mean_loss_p(&self, set: &LabeledSet) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let mut total = 0.0;
        let indices: Vec<usize> = (0..set.len()).collect();
        for chunk in indices.chunks(256) {
            let batch = self.batch(set, chunk)?;
            let mut g = Graph::new();
            let fwd = self.forward(&mut g, &batch)?;
            total += g.value(fwd.loss_p).item() * chunk.len() as f64;
        }
        Ok(total / set.len() as f64)
    }
}
