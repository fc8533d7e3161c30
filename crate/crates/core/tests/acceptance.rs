//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs everything; trailing numbers pick a
//! subset (`cargo test --test acceptance -- 1 2 8`). Failures are reported
//! but do not fail the process unless `MOTIONGUARD_ACCEPTANCE_STRICT=1`.
//! Criteria 6 and 7 share one synthetic dataset built from
//! `configs/default.toml`; the per-seed LOMO table is archived under
//! `artifacts/acceptance/`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use motionguard::adversarial::{
    build_model, train, write_checkpoint, ArchConfig, LabeledSet, LossKind, OrderedLambda, Standardizer, TrainConfig,
    TrainMode,
};
use motionguard::ban_synth::{balanced_counts, synth_dataset};
use motionguard::cli::{
    execute, rerun, Command, EvalArgs, FeaturizeArgs, LomoArgs, PipelineArgs, RunConfig, Scale, SynthArgs, TheoryArgs,
    TrainArgs, MANIFEST_FILE,
};
use motionguard::dsp::{design_fir, fft_forward, filter_zero_phase, FilterKind, StftPlan, SAMPLE_RATE_HZ, STFT_WINDOW};
use motionguard::eval::{evaluate, leave_one_motion_out, LomoPlan, LomoReport};
use motionguard::features::{segment_trace, Featurizer, RssSegment, INTERVALS, PROFILE_DIM, TIME_FEATURES};
use motionguard::nn::{grad_check, GradCheck, Graph, Tensor, Var};
use motionguard::recipe::{DataSplits, Split};
use motionguard::theory::theory_check;
use motionguard::{MotionLabel, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Res<T> = std::result::Result<T, Box<dyn std::error::Error>>;

const ROOT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../..");

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed.as_secs_f64() < limit_s as f64
}

fn default_config() -> RunConfig {
    RunConfig::load(&Path::new(ROOT).join("configs/default.toml")).expect("shipped default config")
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Res<Outcome> {
    let start = Instant::now();
    let cfg = default_config();
    let featurizer = Featurizer::new(cfg.features.clone())?;
    // 100 traces of 50 s give 1000 segments
    let traces = synth_dataset(&cfg.synth, &balanced_counts(&MotionLabel::CONTROLLED, 10), 0xACCE_0001)?;
    let segments: Vec<RssSegment> = traces.iter().map(segment_trace).collect::<Result<Vec<_>>>()?.concat();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0011);
    let (mut bad_layout, mut worst_pc_sum, mut worst_m, mut worst_pc) = (0usize, 0.0f64, 0.0f64, 0.0f64);
    for seg in &segments {
        let p = featurizer.build_profile(seg)?;
        let v = p.to_vec();
        if v.len() != PROFILE_DIM || p.time_features.len() != TIME_FEATURES || !v.iter().all(|f| f.is_finite()) {
            bad_layout += 1;
        }
        let pc = &p.freq_features[p.freq_features.len() - INTERVALS..];
        worst_pc_sum = worst_pc_sum.max((pc.iter().sum::<f64>() - 1.0).abs());

        let k = rng.random_range(0.1..10.0);
        let scaled = RssSegment::new(seg.samples().iter().map(|x| k * x).collect(), seg.link, seg.motion)?;
        let (a, _) = featurizer.freq_features(seg)?;
        let (b, _) = featurizer.freq_features(&scaled)?;
        for (ra, rb) in a.m.iter().zip(&b.m) {
            for (ma, mb) in ra.iter().zip(rb) {
                worst_m = worst_m.max((mb - k * ma).abs() / (k * ma).abs().max(1.0));
            }
        }
        for (pa, pb) in a.pc.iter().zip(&b.pc) {
            worst_pc = worst_pc.max((pa - pb).abs());
        }
    }
    let t = start.elapsed();
    let passed = segments.len() == 1000
        && bad_layout == 0
        && worst_pc_sum <= 1e-9
        && worst_m <= 1e-9
        && worst_pc <= 1e-9
        && within(t, 60);
    Ok(outcome(
        passed,
        format!(
            "{} segments, {bad_layout} bad layouts, max |sum pc - 1| {worst_pc_sum:.1e}, scaling: max rel M err {worst_m:.1e}, max pc err {worst_pc:.1e}, {:.1} s",
            segments.len(),
            t.as_secs_f64()
        ),
    ))
}

// ---------------------------------------------------------------- 2

fn tone(freq: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE_HZ).sin())
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn criterion_2() -> Res<Outcome> {
    let start = Instant::now();
    let cfg = default_config();
    let kernel = design_fir(
        FilterKind::BandPass,
        &[cfg.features.band_hz.0, cfg.features.band_hz.1],
        cfg.features.taps,
        SAMPLE_RATE_HZ,
    )?;
    let g5 = kernel.gain_db_at(5.0);
    let g50 = kernel.gain_db_at(50.0);

    // measured through the zero-phase filter, which applies the kernel twice
    let n = 10_000;
    let mid = n / 4..3 * n / 4;
    let measured = |f: f64| -> Result<f64> {
        let x = tone(f, n);
        let y = filter_zero_phase(&x, &kernel)?;
        Ok(20.0 * (rms(&y[mid.clone()]) / rms(&x[mid.clone()])).log10())
    };
    let (m5, m50) = (measured(5.0)?, measured(50.0)?);

    let plan = StftPlan::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0002);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..STFT_WINDOW).map(|_| rng.random_range(-10.0..10.0)).collect();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let spec = plan.run(&x)?;
        let row = spec.window(0);
        let last = row.len() - 1;
        let one_sided: f64 = row
            .iter()
            .enumerate()
            .map(|(k, m)| if k == 0 || k == last { m * m } else { 2.0 * m * m })
            .sum::<f64>()
            / STFT_WINDOW as f64;
        let full: f64 = fft_forward(&x).iter().map(|c| c.norm_sqr()).sum::<f64>() / STFT_WINDOW as f64;
        worst = worst
            .max((one_sided - time).abs() / time)
            .max((full - time).abs() / time);
    }
    let passed = g5.abs() <= 1.0
        && g50 <= -40.0
        && (m5 - 2.0 * g5).abs() <= 0.05
        && m50 <= -80.0
        && worst <= 1e-6
        && within(start.elapsed(), 30);
    Ok(outcome(
        passed,
        format!(
            "kernel gain 5 Hz {g5:+.4} dB, 50 Hz {g50:.1} dB; zero-phase tone gain 5 Hz {m5:+.4} dB, 50 Hz {m50:.1} dB; Parseval max rel err {worst:.1e} over 100 windows"
        ),
    ))
}

// ---------------------------------------------------------------- 3

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Like [`random_tensor`] but at least `gap` away from zero, so ReLU kinks
/// stay outside the difference stencil.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    let mut t = random_tensor(rng, shape, -1.0, 1.0);
    for v in t.data_mut() {
        *v = v.signum() * (v.abs() + gap);
    }
    t
}

/// Scalar probe `sum(out * r)` of an op output with fixed random weights.
fn project(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let shape = g.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = g.input(random_tensor(&mut rng, &shape, -1.0, 1.0));
    let m = g.mul(out, r)?;
    Ok(g.sum(m))
}

type OpCheck = (&'static str, GradCheck);

fn op_checks() -> Res<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    let h = 1e-6;
    let mut out = Vec::new();
    let x3 = random_tensor(&mut rng, &[2, 3, 9], -1.0, 1.0);
    let w3 = random_tensor(&mut rng, &[4, 3, 3], -1.0, 1.0);
    let b3 = random_tensor(&mut rng, &[4], -0.5, 0.5);
    for (stride, pad, name_x, name_w, name_b) in [
        (1, 1, "conv1d/x s1", "conv1d/w s1", "conv1d/b s1"),
        (2, 1, "conv1d/x s2", "conv1d/w s2", "conv1d/b s2"),
        (2, 0, "conv1d/x s2 p0", "conv1d/w s2 p0", "conv1d/b s2 p0"),
    ] {
        let (w, b) = (w3.clone(), b3.clone());
        out.push((
            name_x,
            grad_check(&x3, h, |g, x| {
                let (w, b) = (g.input(w.clone()), g.input(b.clone()));
                let y = g.conv1d(x, w, b, stride, pad)?;
                project(g, y, 1)
            })?,
        ));
        let x = x3.clone();
        out.push((
            name_w,
            grad_check(&w3, h, |g, w| {
                let (x, b) = (g.input(x.clone()), g.input(b.clone()));
                let y = g.conv1d(x, w, b, stride, pad)?;
                project(g, y, 1)
            })?,
        ));
        let (x, w) = (x3.clone(), w3.clone());
        out.push((
            name_b,
            grad_check(&b3, h, |g, b| {
                let (x, w) = (g.input(x.clone()), g.input(w.clone()));
                let y = g.conv1d(x, w, b, stride, pad)?;
                project(g, y, 1)
            })?,
        ));
    }

    let x2 = random_tensor(&mut rng, &[3, 5], -1.0, 1.0);
    let w2 = random_tensor(&mut rng, &[5, 4], -1.0, 1.0);
    let b2 = random_tensor(&mut rng, &[4], -0.5, 0.5);
    let (w, b) = (w2.clone(), b2.clone());
    out.push((
        "dense/x",
        grad_check(&x2, h, |g, x| {
            let (w, b) = (g.input(w.clone()), g.input(b.clone()));
            let y = g.dense(x, w, b)?;
            project(g, y, 2)
        })?,
    ));
    let (x, b) = (x2.clone(), b2.clone());
    out.push((
        "dense/w",
        grad_check(&w2, h, |g, w| {
            let (x, b) = (g.input(x.clone()), g.input(b.clone()));
            let y = g.dense(x, w, b)?;
            project(g, y, 2)
        })?,
    ));
    let (x, w) = (x2.clone(), w2.clone());
    out.push((
        "dense/b",
        grad_check(&b2, h, |g, b| {
            let (x, w) = (g.input(x.clone()), g.input(w.clone()));
            let y = g.dense(x, w, b)?;
            project(g, y, 2)
        })?,
    ));

    let r = off_zero(&mut rng, &[3, 5], 1e-3);
    out.push((
        "relu",
        grad_check(&r, h, |g, x| {
            let y = g.relu(x);
            project(g, y, 3)
        })?,
    ));
    let logits = random_tensor(&mut rng, &[4, 3], -3.0, 3.0);
    out.push((
        "softmax",
        grad_check(&logits, h, |g, x| {
            let y = g.softmax(x)?;
            project(g, y, 4)
        })?,
    ));
    let probs = random_tensor(&mut rng, &[4, 3], 0.05, 0.95);
    out.push((
        "cross_entropy",
        grad_check(&probs, h, |g, p| g.cross_entropy(p, &[0, 2, 1, 1]))?,
    ));
    out.push((
        "softmax+cross_entropy",
        grad_check(&logits, h, |g, x| {
            let p = g.softmax(x)?;
            g.cross_entropy(p, &[2, 0, 1, 2])
        })?,
    ));

    let other = random_tensor(&mut rng, &[3, 5], -1.0, 1.0);
    let o = other.clone();
    out.push((
        "concat/a",
        grad_check(&x2, h, |g, a| {
            let b = g.input(o.clone());
            let y = g.concat(a, b)?;
            project(g, y, 5)
        })?,
    ));
    let a2 = x2.clone();
    out.push((
        "concat/b",
        grad_check(&other, h, |g, b| {
            let a = g.input(a2.clone());
            let y = g.concat(a, b)?;
            project(g, y, 5)
        })?,
    ));
    out.push((
        "flatten",
        grad_check(&x3, h, |g, x| {
            let y = g.flatten(x);
            project(g, y, 6)
        })?,
    ));
    for (name, which) in [("add", 0), ("sub", 1), ("mul", 2)] {
        let o = other.clone();
        out.push((
            name,
            grad_check(&x2, h, |g, a| {
                let b = g.input(o.clone());
                let y = match which {
                    0 => g.add(a, b)?,
                    1 => g.sub(b, a)?,
                    _ => g.mul(a, b)?,
                };
                project(g, y, 7)
            })?,
        ));
    }
    out.push((
        "mul (same operand)",
        grad_check(&x2, h, |g, a| {
            let y = g.mul(a, a)?;
            project(g, y, 8)
        })?,
    ));
    out.push((
        "scale",
        grad_check(&x2, h, |g, a| {
            let y = g.scale(a, -2.5);
            project(g, y, 9)
        })?,
    ));
    out.push(("sum", grad_check(&x2, h, |g, a| Ok(g.sum(a)))?));
    Ok(out)
}

fn random_set(seed: u64, rows: usize, dim: usize) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = LabeledSet::default();
    for i in 0..rows {
        let row = (0..dim).map(|_| rng.random_range(-75.0..-45.0)).collect();
        let device = motionguard::DeviceLabel::ALL[i % 2];
        set.push(row, device, MotionLabel::CONTROLLED[(i / 2) % 5]);
    }
    set
}

fn criterion_3() -> Res<Outcome> {
    let start = Instant::now();
    let mut worst_op = ("", 0.0f64);
    let mut stop_ok = true;
    for (name, c) in op_checks()? {
        if c.max_rel_error > worst_op.1 {
            worst_op = (name, c.max_rel_error);
        }
    }
    {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 0.5])?);
        let s = g.stop_gradient(x);
        let y = g.sum(s);
        let grads = g.backward(y)?;
        stop_ok &= grads.wrt(x).is_none_or(|t| t.data().iter().all(|&v| v == 0.0));
    }

    // the shipped architecture on a small batch of profile-sized rows
    let arch = ArchConfig::default();
    let set = random_set(0xACCE_0004, 10, arch.input_dim);
    let model = build_model(&arch, &set.motions(), Standardizer::fit(&set.rows)?, 3)?;
    let batch = model.batch(&set, &[0, 1, 2, 3, 4, 5])?;
    let mut worst_model = (String::new(), 0.0f64);
    for kind in [
        LossKind::Predictor,
        LossKind::Discriminator,
        LossKind::Value(OrderedLambda::new(0.1)),
    ] {
        let c = model.grad_check(&batch, kind, 3, 1e-5)?;
        if c.max_rel_error >= worst_model.1 {
            worst_model = (format!("{kind:?}"), c.max_rel_error);
        }
    }
    let (_, grads) = model.loss_d(&batch)?;
    let ids: Vec<_> = model.params.ids().collect();
    let p_ids: BTreeSet<_> = model.predictor_ids().into_iter().collect();
    let mut p_leak = 0.0f64;
    for (id, g) in ids.iter().zip(&grads) {
        if p_ids.contains(id) {
            p_leak = g.data().iter().fold(p_leak, |m, v| m.max(v.abs()));
        }
    }
    let t = start.elapsed();
    let passed = worst_op.1 < 1e-4 && worst_model.1 < 1e-4 && p_leak == 0.0 && stop_ok && within(t, 120);
    Ok(outcome(
        passed,
        format!(
            "ops: worst {} {:.1e}; composed E∘P / E∘D / value: worst {} {:.1e}; max |dL_D/dθ_P| = {p_leak}; stop-gradient {}; {:.1} s",
            worst_op.0,
            worst_op.1,
            worst_model.0,
            worst_model.1,
            if stop_ok { "blocks" } else { "LEAKS" },
            t.as_secs_f64()
        ),
    ))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Res<Outcome> {
    let start = Instant::now();
    let cfg = default_config();
    let r = theory_check(&cfg.theory, cfg.seed)?;
    let line = |name: &str, c: &motionguard::theory::ClaimSummary| {
        format!(
            "    {:<30} {} ({}/{} failed, max dev {:.1e})",
            name,
            if c.passed { "ok" } else { "FAILED" },
            c.failures,
            c.checked,
            c.max_deviation
        )
    };
    let mut detail = format!(
        "{} instances, |X| <= {}, |Z| <= {}, codomain {}, lambdas {:?}, {:.1} s\n",
        r.instances.len(),
        cfg.theory.max_x,
        cfg.theory.max_z,
        cfg.theory.codomain,
        cfg.theory.lambdas,
        start.elapsed().as_secs_f64()
    );
    for (name, c) in [
        ("predictor optimum", &r.predictor_optimum),
        ("discriminator optimum", &r.discriminator_optimum),
        ("extractor lower bound", &r.extractor_bound),
        ("witness attains bound", &r.witness_attains_bound),
        ("optimal outputs at optimum", &r.optimal_outputs),
        ("witness globally optimal", &r.witness_optimal),
        ("minimizers characterized", &r.all_minimizers_characterized),
    ] {
        detail.push_str(&line(name, c));
        detail.push('\n');
    }
    // first counterexample, for the record
    if let Some((inst, lc)) = r
        .instances
        .iter()
        .flat_map(|i| i.per_lambda.iter().map(move |l| (i, l)))
        .find(|(_, l)| !l.output.passed)
    {
        detail.push_str(&format!(
            "    e.g. instance seed {:#x} (|X|={}, |Z|={}), lambda {}: optimum {:?}, predictor dev {:.3}, discriminator dev {:.3}",
            inst.seed, inst.nx, inst.nz, lc.lambda, lc.output.optimum, lc.output.predictor_deviation, lc.output.discriminator_deviation
        ));
    }
    let passed = r.instances.len() >= 20
        && r.predictor_optimum.passed
        && r.discriminator_optimum.passed
        && r.extractor_bound.passed
        && r.witness_attains_bound.passed
        && r.optimal_outputs.passed
        && within(start.elapsed(), 300);
    Ok(outcome(passed, detail.trim_end().to_string()))
}

// ---------------------------------------------------------------- 5, 6, 7

fn default_data(cfg: &RunConfig) -> Result<DataSplits> {
    let traces = cfg.recipe.synthesize(&cfg.synth, cfg.seed)?;
    traces.featurize(&Featurizer::new(cfg.features.clone())?)
}

fn checkpoint_bytes(model: &motionguard::adversarial::Model) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    Ok(buf)
}

fn criterion_5(cfg: &RunConfig, data: &DataSplits) -> Res<Outcome> {
    let start = Instant::now();
    let tc = TrainConfig {
        lambda: 0.0,
        epochs: 8,
        ..cfg.train.clone()
    };
    let (ma, ha) = train(
        TrainMode::Adversarial,
        &data.train,
        Some(&data.validation),
        &cfg.arch,
        &tc,
    )?;
    let (mb, hb) = train(TrainMode::Baseline, &data.train, Some(&data.validation), &cfg.arch, &tc)?;
    let (ca, cb) = (checkpoint_bytes(&ma)?, checkpoint_bytes(&mb)?);
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    ha.write_csv(&mut sa)?;
    hb.write_csv(&mut sb)?;
    let passed = ca == cb && sa == sb && ha == hb;
    Ok(outcome(
        passed,
        format!(
            "{} training profiles, {} epochs: checkpoints {} ({} bytes), histories {}; {:.1} s",
            data.train.len(),
            ha.len(),
            if ca == cb { "identical" } else { "DIFFER" },
            ca.len(),
            if sa == sb && ha == hb { "identical" } else { "DIFFER" },
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn criterion_6(cfg: &RunConfig, data: &DataSplits, data_time: Duration) -> Res<Outcome> {
    let start = Instant::now();
    let profiles: usize = Split::ALL.iter().map(|&s| data.get(s).len()).sum();
    let mut parts = Vec::new();
    let mut ok = profiles >= 2000 && data.train.motions().len() == 5;
    for mode in [TrainMode::Adversarial, TrainMode::Baseline] {
        let (model, history) = train(mode, &data.train, Some(&data.validation), &cfg.arch, &cfg.train)?;
        let (report, _) = evaluate(&model, &data.test, cfg.eval.threshold)?;
        ok &= report.auroc >= 0.90;
        parts.push(format!(
            "{mode:?}: test AUROC {:.4}, accuracy {:.4} ({} epochs, best {})",
            report.auroc,
            report.accuracy,
            history.len(),
            history.best_epoch
        ));
    }
    let t = start.elapsed() + data_time;
    ok &= within(t, 15 * 60);
    Ok(outcome(
        ok,
        format!(
            "{profiles} profiles ({} train / {} val / {} test / {} uncontrolled), lambda {}; {}; {:.0} s",
            data.train.len(),
            data.validation.len(),
            data.test.len(),
            data.uncontrolled.len(),
            cfg.train.lambda,
            parts.join("; "),
            t.as_secs_f64()
        ),
    ))
}

fn archive_lomo(report: &LomoReport) -> Res<PathBuf> {
    let dir = Path::new(ROOT).join("artifacts/acceptance");
    fs::create_dir_all(&dir)?;
    let dir = dir.canonicalize()?;
    let json = dir.join("lomo.json");
    fs::write(&json, serde_json::to_string_pretty(report)? + "\n")?;
    let csv = dir.join("lomo_runs.csv");
    let mut text = String::from(
        "seed,holdout,adv_heldout_accuracy,base_heldout_accuracy,adv_heldout_auroc,base_heldout_auroc,adv_loss_d,base_loss_d,adv_epochs,base_epochs\n",
    );
    for r in &report.runs {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.holdout,
            r.adversarial.heldout_accuracy,
            r.baseline.heldout_accuracy,
            r.adversarial.heldout_auroc,
            r.baseline.heldout_auroc,
            r.adversarial.converged_loss_d,
            r.baseline.converged_loss_d,
            r.adversarial.epochs_run,
            r.baseline.epochs_run
        ));
    }
    fs::write(&csv, text)?;
    Ok(csv)
}

fn criterion_7(cfg: &RunConfig, data: &DataSplits) -> Res<Outcome> {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..cfg.lomo.seeds.max(5) as u64).map(|i| cfg.seed + i).collect();
    let plan = LomoPlan::rotating(&seeds, &MotionLabel::CONTROLLED);
    let report = leave_one_motion_out(data, &plan, &cfg.arch, &cfg.train, cfg.eval.threshold)?;
    let csv = archive_lomo(&report)?;
    let (a, b) = (&report.adversarial, &report.baseline);
    let gate_a = a.converged_loss_d.mean > b.converged_loss_d.mean;
    let gate_b = a.heldout_accuracy.mean >= b.heldout_accuracy.mean;
    let per_seed_a = report
        .runs
        .iter()
        .filter(|r| r.adversarial.converged_loss_d > r.baseline.converged_loss_d)
        .count();
    let mut detail = format!(
        "{} seeds: (a) converged L_D adversarial {:.4} ± {:.4} vs baseline {:.4} ± {:.4} [{}; {per_seed_a}/{} seeds]; \
         (b) held-out accuracy adversarial {:.4} ± {:.4} vs baseline {:.4} ± {:.4} [{}]; {:.0} s\n",
        report.runs.len(),
        a.converged_loss_d.mean,
        a.converged_loss_d.std,
        b.converged_loss_d.mean,
        b.converged_loss_d.std,
        if gate_a { "ok" } else { "FAILED" },
        report.runs.len(),
        a.heldout_accuracy.mean,
        a.heldout_accuracy.std,
        b.heldout_accuracy.mean,
        b.heldout_accuracy.std,
        if gate_b { "ok" } else { "FAILED" },
        start.elapsed().as_secs_f64()
    );
    detail.push_str("    seed holdout     adv_acc base_acc adv_L_D base_L_D\n");
    for r in &report.runs {
        detail.push_str(&format!(
            "    {:<4} {:<11} {:.4}  {:.4}   {:.4}  {:.4}\n",
            r.seed,
            r.holdout.to_string(),
            r.adversarial.heldout_accuracy,
            r.baseline.heldout_accuracy,
            r.adversarial.converged_loss_d,
            r.baseline.converged_loss_d
        ));
    }
    detail.push_str(&format!("    archived {}", csv.display()));
    let passed = report.runs.len() >= 5 && gate_a && gate_b && within(start.elapsed(), 2 * 3600);
    Ok(outcome(passed, detail))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Res<Outcome> {
    let start = Instant::now();
    let tmp = tempfile::tempdir()?;
    let root = tmp.path();
    let config = RunConfig::load(&Path::new(ROOT).join("configs/smoke.toml"))?;
    let synth = root.join("synth");
    let feats = root.join("features");
    let train_dir = root.join("train");
    let tiny = Some(Scale::Tiny);
    let stages: Vec<(Command, PathBuf)> = vec![
        (
            Command::Synth(SynthArgs {
                scale: tiny,
                motions: None,
            }),
            synth.clone(),
        ),
        (
            Command::Featurize(FeaturizeArgs { traces: synth.clone() }),
            feats.clone(),
        ),
        (
            Command::Train(TrainArgs {
                features: feats.clone(),
                mode: TrainMode::Adversarial,
                lambda: None,
                motions: None,
                holdout_motion: None,
            }),
            train_dir.clone(),
        ),
        (
            Command::Train(TrainArgs {
                features: feats.clone(),
                mode: TrainMode::Baseline,
                lambda: None,
                motions: None,
                holdout_motion: Some(MotionLabel::Walking),
            }),
            root.join("train-base"),
        ),
        (
            Command::Eval(EvalArgs {
                checkpoint: train_dir.join("model.ckpt"),
                features: feats.clone(),
                split: Split::Test,
                threshold: None,
                motions: None,
                holdout_motion: None,
            }),
            root.join("eval"),
        ),
        (
            Command::Lomo(LomoArgs {
                features: feats.clone(),
                lambda: None,
                threshold: None,
                motions: None,
                holdout_motion: None,
                seeds: Some(2),
            }),
            root.join("lomo"),
        ),
        (
            Command::TheoryCheck(TheoryArgs {
                instances: Some(4),
                lambdas: None,
                max_x: Some(5),
                max_z: None,
                codomain: None,
            }),
            root.join("theory"),
        ),
        (
            Command::Pipeline(PipelineArgs {
                scale: tiny,
                motions: None,
                lambda: None,
                threshold: None,
            }),
            root.join("pipeline"),
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (cmd, dir) in &stages {
        execute(cmd, config.clone(), dir)?;
        let again = root.join(format!("rerun-{}", dir.file_name().unwrap().to_string_lossy()));
        let o = rerun(&dir.join(MANIFEST_FILE), Some(&again))?;
        ok &= o.mismatches.is_empty() && o.compared > 0;
        lines.push(format!(
            "{} {}/{}",
            cmd.name(),
            o.compared - o.mismatches.len(),
            o.compared
        ));
    }
    Ok(outcome(
        ok,
        format!(
            "bit-identical outputs per stage: {}; {:.1} s",
            lines.join(", "),
            start.elapsed().as_secs_f64()
        ),
    ))
}

// ----------------------------------------------------------------

fn report(n: usize, name: &str, r: Res<Outcome>) -> bool {
    let (passed, detail) = match r {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "{} criterion {n} ({name}): {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    passed
}

fn main() {
    let picked: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| picked.is_empty() || picked.contains(&n);
    let mut results = Vec::new();

    if want(1) {
        results.push(report(1, "feature pipeline", criterion_1()));
    }
    if want(2) {
        results.push(report(2, "dsp", criterion_2()));
    }
    if want(3) {
        results.push(report(3, "gradients", criterion_3()));
    }
    if want(4) {
        results.push(report(4, "theory certificates", criterion_4()));
    }
    if want(5) || want(6) || want(7) {
        let cfg = default_config();
        let t = Instant::now();
        match default_data(&cfg) {
            Ok(data) => {
                let data_time = t.elapsed();
                if want(5) {
                    results.push(report(5, "lambda = 0 equivalence", criterion_5(&cfg, &data)));
                }
                if want(6) {
                    results.push(report(6, "synthetic end-to-end", criterion_6(&cfg, &data, data_time)));
                }
                if want(7) {
                    results.push(report(7, "generalization ordering", criterion_7(&cfg, &data)));
                }
            }
            Err(e) => {
                for (n, name) in [
                    (5, "lambda = 0 equivalence"),
                    (6, "synthetic end-to-end"),
                    (7, "generalization ordering"),
                ] {
                    if want(n) {
                        results.push(report(n, name, Err(format!("dataset: {e}").into())));
                    }
                }
            }
        }
    }
    if want(8) {
        results.push(report(8, "reproducibility", criterion_8()));
    }

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 && std::env::var("MOTIONGUARD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
