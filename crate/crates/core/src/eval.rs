//! Authentication metrics, ROC analysis and the leave-one-motion-out
//! comparison of adversarial and baseline training.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{train, ArchConfig, LabeledSet, Model, TrainConfig, TrainHistory, TrainMode};
use crate::error::{Error, Result};
use crate::labels::{DeviceLabel, MotionLabel};
use crate::recipe::DataSplits;

pub const EVAL_SCHEMA_VERSION: u32 = 1;
pub const LOMO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub counts: ConfusionCounts,
}

fn check_inputs(scores: &[f64], labels: &[DeviceLabel]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("score {i}"),
        });
    }
    Ok(())
}

fn counts_at(scores: &[f64], labels: &[DeviceLabel], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, DeviceLabel::OnBody) => c.tp += 1,
            (false, DeviceLabel::OnBody) => c.fn_ += 1,
            (true, DeviceLabel::OffBody) => c.fp += 1,
            (false, DeviceLabel::OffBody) => c.tn += 1,
        }
    }
    c
}

/// Accepts as on-body every sample with `p_on >= threshold`.
pub fn confusion_metrics(scores: &[f64], labels: &[DeviceLabel], threshold: f64) -> Result<ConfusionMetrics> {
    check_inputs(scores, labels)?;
    let c = counts_at(scores, labels, threshold);
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedRate("tp_rate needs on-body samples"));
    }
    if c.fp + c.tn == 0 {
        return Err(Error::UndefinedRate("fp_rate needs off-body samples"));
    }
    Ok(ConfusionMetrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        tp_rate: c.tp as f64 / (c.tp + c.fn_) as f64,
        fp_rate: c.fp as f64 / (c.fp + c.tn) as f64,
        counts: c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Lowest score accepted at this point; `+inf` for the origin.
    pub threshold: f64,
    pub fp_rate: f64,
    pub tp_rate: f64,
}

/// Threshold sweep from above the highest score down to the lowest, one
/// point per distinct score; tied scores move in one step.
pub fn roc_curve(scores: &[f64], labels: &[DeviceLabel]) -> Result<Vec<RocPoint>> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == DeviceLabel::OnBody).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedRate("ROC needs both on-body and off-body samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fp_rate: 0.0,
        tp_rate: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                DeviceLabel::OnBody => tp += 1,
                DeviceLabel::OffBody => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fp_rate: fp as f64 / neg as f64,
            tp_rate: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC polyline.
pub fn auroc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fp_rate - w[0].fp_rate) * (w[0].tp_rate + w[1].tp_rate) / 2.0)
        .sum()
}

/// Normalized Mann–Whitney U: the probability that a random on-body score
/// exceeds a random off-body one, ties counting half. Uses average ranks.
pub fn auroc_rank(scores: &[f64], labels: &[DeviceLabel]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == DeviceLabel::OnBody).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::UndefinedRate("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += order[i..j]
            .iter()
            .filter(|&&k| labels[k] == DeviceLabel::OnBody)
            .count() as f64
            * avg;
        i = j;
    }
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// `threshold,fp_rate,tp_rate`; the origin's threshold is written `inf`.
pub fn write_roc_csv<W: Write>(points: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Corrupt(format!("roc csv: {e}"));
    w.write_record(["threshold", "fp_rate", "tp_rate"]).map_err(err)?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fp_rate.to_string(), p.tp_rate.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Corrupt(format!("roc csv: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionBreakdown {
    pub count: usize,
    pub accuracy: f64,
    /// `None` when the motion has no on-body samples.
    pub tp_rate: Option<f64>,
    /// `None` when the motion has no off-body samples.
    pub fp_rate: Option<f64>,
}

/// Versioned evaluation summary. ROC points are `(fp_rate, tp_rate)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub threshold: f64,
    pub accuracy: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub auroc: f64,
    pub counts: ConfusionCounts,
    pub roc_points: Vec<(f64, f64)>,
    pub per_motion: BTreeMap<MotionLabel, MotionBreakdown>,
}

/// Metrics from scores with their labels and motions.
pub fn eval_scores(
    scores: &[f64],
    labels: &[DeviceLabel],
    motions: &[MotionLabel],
    threshold: f64,
) -> Result<(EvalReport, Vec<RocPoint>)> {
    if motions.len() != labels.len() {
        return Err(Error::Shape("one motion per label required".into()));
    }
    let m = confusion_metrics(scores, labels, threshold)?;
    let roc = roc_curve(scores, labels)?;
    let mut per_motion = BTreeMap::new();
    let mut seen: Vec<MotionLabel> = motions.to_vec();
    seen.sort();
    seen.dedup();
    for motion in seen {
        let idx: Vec<usize> = (0..motions.len()).filter(|&i| motions[i] == motion).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<DeviceLabel> = idx.iter().map(|&i| labels[i]).collect();
        let c = counts_at(&s, &l, threshold);
        per_motion.insert(
            motion,
            MotionBreakdown {
                count: c.total(),
                accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
                tp_rate: (c.tp + c.fn_ > 0).then(|| c.tp as f64 / (c.tp + c.fn_) as f64),
                fp_rate: (c.fp + c.tn > 0).then(|| c.fp as f64 / (c.fp + c.tn) as f64),
            },
        );
    }
    let report = EvalReport {
        schema_version: EVAL_SCHEMA_VERSION,
        threshold,
        accuracy: m.accuracy,
        tp_rate: m.tp_rate,
        fp_rate: m.fp_rate,
        auroc: auroc(&roc),
        counts: m.counts,
        roc_points: roc.iter().map(|p| (p.fp_rate, p.tp_rate)).collect(),
        per_motion,
    };
    Ok((report, roc))
}

pub fn evaluate(model: &Model, set: &LabeledSet, threshold: f64) -> Result<(EvalReport, Vec<RocPoint>)> {
    let scores: Vec<f64> = model.predict_set(set)?.iter().map(|p| p.p_on).collect();
    eval_scores(&scores, &set.device, &set.motion, threshold)
}

/// Training history as `epoch,loss_p_train,loss_d_train,loss_p_test`.
pub fn loss_curve_export(history: &TrainHistory) -> Result<String> {
    let mut buf = Vec::new();
    history.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Corrupt(e.to_string()))
}

/// `(seed, held-out motion)` jobs; each runs both arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LomoPlan {
    pub jobs: Vec<(u64, MotionLabel)>,
}

impl LomoPlan {
    /// Every motion held out under every seed.
    pub fn full(seeds: &[u64], holdouts: &[MotionLabel]) -> Self {
        Self {
            jobs: seeds
                .iter()
                .flat_map(|&s| holdouts.iter().map(move |&m| (s, m)))
                .collect(),
        }
    }

    /// Seed `i` holds out motion `i mod len`.
    pub fn rotating(seeds: &[u64], holdouts: &[MotionLabel]) -> Self {
        Self {
            jobs: seeds
                .iter()
                .enumerate()
                .map(|(i, &s)| (s, holdouts[i % holdouts.len()]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub heldout_accuracy: f64,
    pub heldout_auroc: f64,
    pub heldout_tp_rate: f64,
    pub heldout_fp_rate: f64,
    pub uncontrolled_accuracy: Option<f64>,
    pub uncontrolled_auroc: Option<f64>,
    pub converged_loss_d: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LomoRun {
    pub seed: u64,
    pub holdout: MotionLabel,
    pub adversarial: ArmResult,
    pub baseline: ArmResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub heldout_accuracy: MeanStd,
    pub heldout_auroc: MeanStd,
    pub converged_loss_d: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LomoReport {
    pub schema_version: u32,
    pub lambda: f64,
    pub threshold: f64,
    pub runs: Vec<LomoRun>,
    pub adversarial: ArmSummary,
    pub baseline: ArmSummary,
}

/// Epochs averaged for the converged discriminator loss.
pub const CONVERGENCE_WINDOW: usize = 5;

fn run_arm(
    mode: TrainMode,
    data: &DataSplits,
    holdout: MotionLabel,
    arch: &ArchConfig,
    config: &TrainConfig,
    threshold: f64,
) -> Result<ArmResult> {
    let keep = |_: DeviceLabel, m: MotionLabel| m != holdout;
    let train_set = data.train.filter(keep);
    let monitor = data.validation.filter(keep);
    let mut held = data.train.filter(|_, m| m == holdout);
    for part in [&data.validation, &data.test] {
        let extra = part.filter(|_, m| m == holdout);
        held.rows.extend(extra.rows);
        held.device.extend(extra.device);
        held.motion.extend(extra.motion);
    }
    let (model, history) = train(
        mode,
        &train_set,
        (!monitor.is_empty()).then_some(&monitor),
        arch,
        config,
    )?;
    let (held_report, _) = evaluate(&model, &held, threshold)?;
    let (ua, uauc) = if data.uncontrolled.is_empty() {
        (None, None)
    } else {
        let (r, _) = evaluate(&model, &data.uncontrolled, threshold)?;
        (Some(r.accuracy), Some(r.auroc))
    };
    Ok(ArmResult {
        heldout_accuracy: held_report.accuracy,
        heldout_auroc: held_report.auroc,
        heldout_tp_rate: held_report.tp_rate,
        heldout_fp_rate: held_report.fp_rate,
        uncontrolled_accuracy: ua,
        uncontrolled_auroc: uauc,
        converged_loss_d: history.converged_loss_d(CONVERGENCE_WINDOW),
        epochs_run: history.len(),
        best_epoch: history.best_epoch,
    })
}

fn summarize(runs: &[LomoRun], arm: impl Fn(&LomoRun) -> &ArmResult) -> ArmSummary {
    let col = |f: &dyn Fn(&ArmResult) -> f64| MeanStd::of(&runs.iter().map(|r| f(arm(r))).collect::<Vec<_>>());
    ArmSummary {
        heldout_accuracy: col(&|a| a.heldout_accuracy),
        heldout_auroc: col(&|a| a.heldout_auroc),
        converged_loss_d: col(&|a| a.converged_loss_d),
    }
}

/// Trains both arms for every job of `plan` (in parallel) and reports the
/// raw per-run numbers with per-arm mean ± std. Seeds replace
/// `config.seed`.
pub fn leave_one_motion_out(
    data: &DataSplits,
    plan: &LomoPlan,
    arch: &ArchConfig,
    config: &TrainConfig,
    threshold: f64,
) -> Result<LomoReport> {
    let motions = data.train.motions();
    if motions.len() < 3 {
        return Err(Error::config(format!(
            "leave-one-motion-out needs at least 3 motions, the training split has {}",
            motions.len()
        )));
    }
    if plan.jobs.is_empty() {
        return Err(Error::Empty("leave-one-motion-out plan"));
    }
    if let Some((_, m)) = plan.jobs.iter().find(|(_, m)| !motions.contains(m)) {
        return Err(Error::config(format!(
            "held-out motion {m} is not in the training split"
        )));
    }
    let tasks: Vec<(usize, TrainMode)> = (0..plan.jobs.len())
        .flat_map(|j| [(j, TrainMode::Adversarial), (j, TrainMode::Baseline)])
        .collect();
    let results: Vec<ArmResult> = tasks
        .par_iter()
        .map(|&(j, mode)| {
            let (seed, holdout) = plan.jobs[j];
            let cfg = TrainConfig { seed, ..config.clone() };
            run_arm(mode, data, holdout, arch, &cfg, threshold)
        })
        .collect::<Result<_>>()?;
    let mut it = results.into_iter();
    let runs: Vec<LomoRun> = plan
        .jobs
        .iter()
        .map(|&(seed, holdout)| LomoRun {
            seed,
            holdout,
            adversarial: it.next().expect("two results per job"),
            baseline: it.next().expect("two results per job"),
        })
        .collect();
    Ok(LomoReport {
        schema_version: LOMO_SCHEMA_VERSION,
        lambda: config.lambda,
        threshold,
        adversarial: summarize(&runs, |r| &r.adversarial),
        baseline: summarize(&runs, |r| &r.baseline),
        runs,
    })
}
