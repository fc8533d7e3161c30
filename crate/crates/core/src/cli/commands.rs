use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::manifest::{compare_outputs, OutputMismatch, RunManifest};
use super::{Command, EvalArgs, FeaturizeArgs, LomoArgs, PipelineArgs, SynthArgs, TheoryArgs, TrainArgs};
use crate::adversarial::{load_checkpoint, save_checkpoint, train, LabeledSet, TrainMode};
use crate::ban_synth::{ingest_csv, RssTrace};
use crate::error::{Error, Result};
use crate::eval::{evaluate, leave_one_motion_out, write_roc_csv, LomoPlan, LomoReport};
use crate::features::{featurize_traces, read_feature_file, write_feature_file, Featurizer};
use crate::labels::{parse_motion_list, DeviceLabel, MotionLabel};
use crate::recipe::{DataSplits, Split};
use crate::theory::theory_check;

pub const TRACE_INDEX_FILE: &str = "traces.json";
pub const TRACE_INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub split: Split,
    /// Relative to the index file.
    pub file: String,
    pub link: DeviceLabel,
    pub motion: MotionLabel,
    pub seed: u64,
    pub samples: usize,
}

/// Labels of the trace CSVs in a `synth` output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIndex {
    pub schema_version: u32,
    pub sample_rate_hz: f64,
    pub traces: Vec<TraceEntry>,
}

impl TraceIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(TRACE_INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != TRACE_INDEX_VERSION {
            return Err(Error::Version {
                found,
                expected: TRACE_INDEX_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    fs::canonicalize(p).map_err(|e| Error::io(p, e))
}

/// Input paths made absolute so the recorded invocation does not depend on
/// the working directory.
fn absolutize(cmd: &Command) -> Result<Command> {
    let mut cmd = cmd.clone();
    match &mut cmd {
        Command::Featurize(a) => a.traces = absolute(&a.traces)?,
        Command::Train(a) => a.features = absolute(&a.features)?,
        Command::Eval(a) => {
            a.checkpoint = absolute(&a.checkpoint)?;
            a.features = absolute(&a.features)?;
        }
        Command::Lomo(a) => a.features = absolute(&a.features)?,
        Command::Rerun(a) => a.manifest = absolute(&a.manifest)?,
        Command::Synth(_) | Command::TheoryCheck(_) | Command::Pipeline(_) => {}
    }
    Ok(cmd)
}

fn motions_arg(s: &Option<String>) -> Result<Option<Vec<MotionLabel>>> {
    s.as_deref().map(parse_motion_list).transpose()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs one command with an already resolved configuration and writes its
/// manifest.
pub fn execute(cmd: &Command, config: RunConfig, out_dir: &Path) -> Result<RunManifest> {
    let cmd = absolutize(cmd)?;
    create_dir(out_dir)?;
    let out_dir = absolute(out_dir)?;
    match &cmd {
        Command::Synth(a) => cmd_synth(&cmd, a, config, &out_dir),
        Command::Featurize(a) => cmd_featurize(&cmd, a, config, &out_dir),
        Command::Train(a) => cmd_train(&cmd, a, config, &out_dir),
        Command::Eval(a) => cmd_eval(&cmd, a, config, &out_dir),
        Command::Lomo(a) => cmd_lomo(&cmd, a, config, &out_dir),
        Command::TheoryCheck(a) => cmd_theory(&cmd, a, config, &out_dir),
        Command::Pipeline(a) => cmd_pipeline(&cmd, a, config, &out_dir),
        Command::Rerun(_) => Err(Error::config("rerun cannot be nested")),
    }
}

fn cmd_synth(cmd: &Command, a: &SynthArgs, mut config: RunConfig, out: &Path) -> Result<RunManifest> {
    if let Some(s) = a.scale {
        let motions = std::mem::take(&mut config.recipe.motions);
        config.recipe = s.recipe();
        config.recipe.motions = motions;
    }
    if let Some(m) = motions_arg(&a.motions)? {
        config.recipe.motions = m;
    }
    config.validate()?;
    let traces = config.recipe.synthesize(&config.synth, config.seed)?;
    let mut manifest = RunManifest::new(cmd, &config, vec![config.seed], out);
    let mut index = TraceIndex {
        schema_version: TRACE_INDEX_VERSION,
        sample_rate_hz: config.synth.sample_rate_hz,
        traces: Vec::new(),
    };
    for split in Split::ALL {
        let dir = out.join(split.name());
        create_dir(&dir)?;
        for (k, t) in traces.get(split).iter().enumerate() {
            let file = format!("{}/{k:04}-{}-{}.csv", split.name(), t.link.name(), t.motion.name());
            let path = out.join(&file);
            let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            t.write_csv(std::io::BufWriter::new(f))
                .map_err(|e| Error::io(&path, e))?;
            manifest.output(&file)?;
            index.traces.push(TraceEntry {
                split,
                file,
                link: t.link,
                motion: t.motion,
                seed: t.seed,
                samples: t.samples.len(),
            });
        }
    }
    write_json(&out.join(TRACE_INDEX_FILE), &index)?;
    manifest.output(TRACE_INDEX_FILE)?;
    manifest.write()?;
    Ok(manifest)
}

fn feature_file(split: Split) -> String {
    format!("{}.mgf", split.name())
}

fn cmd_featurize(cmd: &Command, a: &FeaturizeArgs, config: RunConfig, out: &Path) -> Result<RunManifest> {
    config.validate()?;
    let index = TraceIndex::load(&a.traces)?;
    let mut manifest = RunManifest::new(cmd, &config, vec![], out);
    manifest.input(&a.traces.join(TRACE_INDEX_FILE))?;
    let featurizer = Featurizer::new(config.features)?;
    for split in Split::ALL {
        let entries: Vec<&TraceEntry> = index.traces.iter().filter(|t| t.split == split).collect();
        if entries.is_empty() {
            continue;
        }
        let traces = entries
            .iter()
            .map(|e| {
                let path = a.traces.join(&e.file);
                let f = fs::File::open(&path).map_err(|err| Error::io(&path, err))?;
                let t = ingest_csv(BufReader::new(f), e.link, e.motion)?;
                Ok(RssTrace { seed: e.seed, ..t })
            })
            .collect::<Result<Vec<_>>>()?;
        let records = featurize_traces(&featurizer, &traces)?;
        let name = feature_file(split);
        let path = out.join(&name);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_feature_file(std::io::BufWriter::new(f), &records)?;
        manifest.output(&name)?;
    }
    manifest.write()?;
    Ok(manifest)
}

fn load_split(dir: &Path, split: Split) -> Result<LabeledSet> {
    let path = dir.join(feature_file(split));
    let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    Ok(LabeledSet::from_records(&read_feature_file(BufReader::new(f))?))
}

fn load_split_if_present(dir: &Path, split: Split) -> Result<Option<LabeledSet>> {
    if dir.join(feature_file(split)).exists() {
        load_split(dir, split).map(Some)
    } else {
        Ok(None)
    }
}

fn select(set: &LabeledSet, motions: &Option<Vec<MotionLabel>>, holdout: Option<MotionLabel>) -> LabeledSet {
    set.filter(|_, m| motions.as_ref().is_none_or(|ms| ms.contains(&m)) && Some(m) != holdout)
}

fn record_inputs(manifest: &mut RunManifest, dir: &Path, splits: &[Split]) -> Result<()> {
    for &s in splits {
        let p = dir.join(feature_file(s));
        if p.exists() {
            manifest.input(&p)?;
        }
    }
    Ok(())
}

fn cmd_train(cmd: &Command, a: &TrainArgs, mut config: RunConfig, out: &Path) -> Result<RunManifest> {
    if let Some(l) = a.lambda {
        config.train.lambda = l;
    }
    config.train.seed = config.seed;
    config.validate()?;
    let motions = motions_arg(&a.motions)?;
    let set = select(&load_split(&a.features, Split::Train)?, &motions, a.holdout_motion);
    let monitor = load_split_if_present(&a.features, Split::Validation)?
        .map(|v| select(&v, &motions, a.holdout_motion))
        .filter(|v| !v.is_empty());
    let (model, history) = train(a.mode, &set, monitor.as_ref(), &config.arch, &config.train)?;
    let mut manifest = RunManifest::new(cmd, &config, vec![config.seed], out);
    record_inputs(&mut manifest, &a.features, &[Split::Train, Split::Validation])?;
    save_checkpoint(&model, &out.join("model.ckpt"))?;
    manifest.output("model.ckpt")?;
    let path = out.join("history.csv");
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    history.write_csv(std::io::BufWriter::new(f))?;
    manifest.output("history.csv")?;
    manifest.write()?;
    Ok(manifest)
}

fn cmd_eval(cmd: &Command, a: &EvalArgs, mut config: RunConfig, out: &Path) -> Result<RunManifest> {
    if let Some(t) = a.threshold {
        config.eval.threshold = t;
    }
    config.validate()?;
    let model = load_checkpoint(&a.checkpoint)?;
    let motions = motions_arg(&a.motions)?;
    let mut manifest = RunManifest::new(cmd, &config, vec![], out);
    manifest.input(&a.checkpoint)?;
    let set = match a.holdout_motion {
        Some(h) => {
            let splits = [Split::Train, Split::Validation, Split::Test];
            record_inputs(&mut manifest, &a.features, &splits)?;
            let mut all = LabeledSet::default();
            for s in splits {
                if let Some(part) = load_split_if_present(&a.features, s)? {
                    let part = part.filter(|_, m| m == h);
                    all.rows.extend(part.rows);
                    all.device.extend(part.device);
                    all.motion.extend(part.motion);
                }
            }
            all
        }
        None => {
            record_inputs(&mut manifest, &a.features, &[a.split])?;
            select(&load_split(&a.features, a.split)?, &motions, None)
        }
    };
    let (report, roc) = evaluate(&model, &set, config.eval.threshold)?;
    write_json(&out.join("report.json"), &report)?;
    manifest.output("report.json")?;
    let path = out.join("roc.csv");
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_roc_csv(&roc, std::io::BufWriter::new(f))?;
    manifest.output("roc.csv")?;
    manifest.write()?;
    Ok(manifest)
}

fn write_lomo_runs(path: &Path, report: &LomoReport) -> Result<()> {
    let err = |e: csv::Error| Error::Corrupt(format!("lomo csv: {e}"));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([
        "seed",
        "holdout",
        "arm",
        "heldout_accuracy",
        "heldout_auroc",
        "heldout_tp_rate",
        "heldout_fp_rate",
        "uncontrolled_accuracy",
        "uncontrolled_auroc",
        "converged_loss_d",
        "epochs_run",
        "best_epoch",
    ])
    .map_err(err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &report.runs {
        for (arm, a) in [("adversarial", &r.adversarial), ("baseline", &r.baseline)] {
            w.write_record([
                r.seed.to_string(),
                r.holdout.name().to_string(),
                arm.to_string(),
                a.heldout_accuracy.to_string(),
                a.heldout_auroc.to_string(),
                a.heldout_tp_rate.to_string(),
                a.heldout_fp_rate.to_string(),
                opt(a.uncontrolled_accuracy),
                opt(a.uncontrolled_auroc),
                a.converged_loss_d.to_string(),
                a.epochs_run.to_string(),
                a.best_epoch.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_lomo(cmd: &Command, a: &LomoArgs, mut config: RunConfig, out: &Path) -> Result<RunManifest> {
    if let Some(l) = a.lambda {
        config.train.lambda = l;
    }
    if let Some(t) = a.threshold {
        config.eval.threshold = t;
    }
    if let Some(n) = a.seeds {
        config.lomo.seeds = n;
    }
    config.train.seed = config.seed;
    config.validate()?;
    let motions = motions_arg(&a.motions)?;
    let load = |s: Split| -> Result<LabeledSet> {
        Ok(load_split_if_present(&a.features, s)?
            .map(|x| select(&x, &motions, None))
            .unwrap_or_default())
    };
    let data = DataSplits {
        train: select(&load_split(&a.features, Split::Train)?, &motions, None),
        validation: load(Split::Validation)?,
        test: load(Split::Test)?,
        uncontrolled: load_split_if_present(&a.features, Split::Uncontrolled)?.unwrap_or_default(),
    };
    let seeds: Vec<u64> = (0..config.lomo.seeds as u64)
        .map(|i| config.seed.wrapping_add(i))
        .collect();
    let plan = match a.holdout_motion {
        Some(h) => LomoPlan::full(&seeds, &[h]),
        None if config.lomo.rotating => LomoPlan::rotating(&seeds, &data.train.motions()),
        None => LomoPlan::full(&seeds, &data.train.motions()),
    };
    let report = leave_one_motion_out(&data, &plan, &config.arch, &config.train, config.eval.threshold)?;
    let mut manifest = RunManifest::new(cmd, &config, seeds, out);
    record_inputs(&mut manifest, &a.features, &Split::ALL)?;
    write_json(&out.join("lomo.json"), &report)?;
    manifest.output("lomo.json")?;
    write_lomo_runs(&out.join("lomo_runs.csv"), &report)?;
    manifest.output("lomo_runs.csv")?;
    manifest.write()?;
    Ok(manifest)
}

fn cmd_theory(cmd: &Command, a: &TheoryArgs, mut config: RunConfig, out: &Path) -> Result<RunManifest> {
    let t = &mut config.theory;
    if let Some(n) = a.instances {
        t.instances = n;
    }
    if let Some(l) = &a.lambdas {
        t.lambdas = l
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("invalid lambda `{s}`")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(v) = a.max_x {
        t.max_x = v;
    }
    if let Some(v) = a.max_z {
        t.max_z = v;
    }
    if let Some(v) = a.codomain {
        t.codomain = v;
    }
    config.validate()?;
    let report = theory_check(&config.theory, config.seed)?;
    let mut manifest = RunManifest::new(cmd, &config, vec![config.seed], out);
    write_json(&out.join("certificates.json"), &report)?;
    manifest.output("certificates.json")?;
    manifest.write()?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PipelineSummary {
    adversarial_auroc: f64,
    adversarial_accuracy: f64,
    baseline_auroc: f64,
    baseline_accuracy: f64,
}

fn cmd_pipeline(cmd: &Command, a: &PipelineArgs, mut config: RunConfig, out: &Path) -> Result<RunManifest> {
    if let Some(l) = a.lambda {
        config.train.lambda = l;
    }
    if let Some(t) = a.threshold {
        config.eval.threshold = t;
    }
    let synth_dir = out.join("synth");
    let features_dir = out.join("features");
    execute(
        &Command::Synth(SynthArgs {
            scale: a.scale,
            motions: a.motions.clone(),
        }),
        config.clone(),
        &synth_dir,
    )?;
    execute(
        &Command::Featurize(FeaturizeArgs { traces: synth_dir }),
        config.clone(),
        &features_dir,
    )?;
    let mut scores = Vec::new();
    for mode in [TrainMode::Adversarial, TrainMode::Baseline] {
        let name = match mode {
            TrainMode::Adversarial => "adversarial",
            TrainMode::Baseline => "baseline",
        };
        let train_dir = out.join(format!("train-{name}"));
        let eval_dir = out.join(format!("eval-{name}"));
        execute(
            &Command::Train(TrainArgs {
                features: features_dir.clone(),
                mode,
                lambda: None,
                motions: None,
                holdout_motion: None,
            }),
            config.clone(),
            &train_dir,
        )?;
        execute(
            &Command::Eval(EvalArgs {
                checkpoint: train_dir.join("model.ckpt"),
                features: features_dir.clone(),
                split: Split::Test,
                threshold: None,
                motions: None,
                holdout_motion: None,
            }),
            config.clone(),
            &eval_dir,
        )?;
        let report: crate::eval::EvalReport = serde_json::from_str(
            &fs::read_to_string(eval_dir.join("report.json"))
                .map_err(|e| Error::io(eval_dir.join("report.json"), e))?,
        )?;
        scores.push((report.auroc, report.accuracy));
    }
    let summary = PipelineSummary {
        adversarial_auroc: scores[0].0,
        adversarial_accuracy: scores[0].1,
        baseline_auroc: scores[1].0,
        baseline_accuracy: scores[1].1,
    };
    let mut manifest = RunManifest::new(cmd, &config, vec![config.seed], out);
    write_json(&out.join("summary.json"), &summary)?;
    manifest.output("summary.json")?;
    manifest.write()?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerunOutcome {
    pub command: String,
    pub out_dir: PathBuf,
    pub compared: usize,
    pub mismatches: Vec<OutputMismatch>,
}

/// Repeats the run recorded in `manifest_path` (into `out_dir`, or the
/// original directory) and compares every recorded output digest.
pub fn rerun(manifest_path: &Path, out_dir: Option<&Path>) -> Result<RerunOutcome> {
    let recorded = RunManifest::load(manifest_path)?;
    let dir = out_dir.map_or_else(|| recorded.out_dir.clone(), Path::to_path_buf);
    let fresh = execute(&recorded.invocation, recorded.config.clone(), &dir)?;
    Ok(RerunOutcome {
        command: recorded.command.clone(),
        out_dir: fresh.out_dir.clone(),
        compared: recorded.outputs.len(),
        mismatches: compare_outputs(&recorded, &fresh),
    })
}
