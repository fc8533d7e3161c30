//! Synthetic body-area-network RSS traces and CSV ingestion.
//!
//! A synthetic trace is the sum of four independent components on top of a
//! constant baseline:
//!
//! * shadowing: a slow (< 0.5 Hz) drift built from a few random-phase
//!   sinusoids, roughly Gaussian in dB;
//! * motion: 3 to 8 random-phase sinusoids inside the motion band, whose
//!   amplitude follows how dynamic the motion is;
//! * multipath: the dB envelope of a complex Gaussian process passed through
//!   a one-pole low-pass, giving Rayleigh-like fades with most of their energy
//!   above the motion band;
//! * a white noise floor.
//!
//! On-body links get the full motion term and attenuated multipath and
//! shadowing; off-body links get the full multipath and shadowing terms and
//! only a leaked fraction of the motion term.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::SAMPLE_RATE_HZ;
use crate::error::{Error, Result};
use crate::labels::{DeviceLabel, MotionLabel};

/// Shortest trace that still yields one 5 s segment.
pub const MIN_DURATION_S: f64 = 5.0;

/// Timestamped RSS series with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssTrace {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub link: DeviceLabel,
    pub motion: MotionLabel,
    pub seed: u64,
}

impl RssTrace {
    pub fn new(samples: Vec<f64>, sample_rate: f64, link: DeviceLabel, motion: MotionLabel, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("trace samples"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::config(format!("invalid sample rate {sample_rate}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("trace sample {i}"),
            });
        }
        Ok(Self {
            samples,
            sample_rate,
            link,
            motion,
            seed,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Writes the `t_s,rss_dbm` CSV form. Values use shortest round-trip
    /// formatting, so reading the file back is lossless.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_s,rss_dbm")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(out, "{},{}", i as f64 / self.sample_rate, v)?;
        }
        Ok(())
    }
}

/// Per-motion excitation levels, all in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionAmplitudes {
    pub motion_amp_db: f64,
    pub multipath_amp_db: f64,
    pub shadowing_amp_db: f64,
}

impl MotionAmplitudes {
    pub const fn new(motion: f64, multipath: f64, shadowing: f64) -> Self {
        Self {
            motion_amp_db: motion,
            multipath_amp_db: multipath,
            shadowing_amp_db: shadowing,
        }
    }

    const ZERO: Self = Self::new(0.0, 0.0, 0.0);
}

/// Generator parameters. Amplitudes are standard deviations of the
/// corresponding component in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub base_rss_dbm: f64,
    pub sample_rate_hz: f64,
    pub motion_band_hz: (f64, f64),
    pub amplitudes: BTreeMap<MotionLabel, MotionAmplitudes>,
    pub noise_floor_db: f64,
    /// Fraction of the motion term that reaches an off-body link.
    pub offbody_motion_leakage: f64,
    /// Fraction of the multipath term present on an on-body link.
    pub onbody_multipath_scale: f64,
    /// Fraction of the shadowing term present on an on-body link.
    pub onbody_shadowing_scale: f64,
    /// Standard deviation of the per-trace log-normal amplitude spread.
    pub amplitude_jitter: f64,
    /// Corner frequency of the multipath process.
    pub multipath_corner_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let amplitudes = BTreeMap::from([
            (MotionLabel::Sitting, MotionAmplitudes::new(0.6, 2.0, 1.0)),
            (MotionLabel::Standing, MotionAmplitudes::new(0.8, 2.0, 1.0)),
            (MotionLabel::ArmMoving, MotionAmplitudes::new(2.5, 2.5, 1.5)),
            (MotionLabel::Rotating, MotionAmplitudes::new(3.0, 3.0, 2.0)),
            (MotionLabel::Walking, MotionAmplitudes::new(4.0, 3.0, 2.5)),
            (MotionLabel::Uncontrolled, MotionAmplitudes::new(3.5, 3.0, 2.0)),
        ]);
        Self {
            duration_s: 50.0,
            base_rss_dbm: -60.0,
            sample_rate_hz: SAMPLE_RATE_HZ,
            motion_band_hz: (0.5, 15.0),
            amplitudes,
            noise_floor_db: 0.3,
            offbody_motion_leakage: 0.35,
            onbody_multipath_scale: 0.15,
            onbody_shadowing_scale: 0.3,
            amplitude_jitter: 0.3,
            multipath_corner_hz: 40.0,
        }
    }
}

impl SynthConfig {
    /// All excitation switched off: traces are constant at the baseline.
    pub fn silent() -> Self {
        let mut cfg = Self::default();
        cfg.amplitudes.values_mut().for_each(|a| *a = MotionAmplitudes::ZERO);
        cfg.noise_floor_db = 0.0;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("duration_s", self.duration_s),
            ("base_rss_dbm", self.base_rss_dbm),
            ("sample_rate_hz", self.sample_rate_hz),
            ("motion_band_hz.low", self.motion_band_hz.0),
            ("motion_band_hz.high", self.motion_band_hz.1),
            ("noise_floor_db", self.noise_floor_db),
            ("offbody_motion_leakage", self.offbody_motion_leakage),
            ("onbody_multipath_scale", self.onbody_multipath_scale),
            ("onbody_shadowing_scale", self.onbody_shadowing_scale),
            ("amplitude_jitter", self.amplitude_jitter),
            ("multipath_corner_hz", self.multipath_corner_hz),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite, got {v}")));
            }
        }
        if self.duration_s < MIN_DURATION_S {
            return Err(Error::config(format!(
                "duration_s must be >= {MIN_DURATION_S}, got {}",
                self.duration_s
            )));
        }
        if self.sample_rate_hz <= 0.0 {
            return Err(Error::config("sample_rate_hz must be positive"));
        }
        let (lo, hi) = self.motion_band_hz;
        if !(lo > 0.0 && lo < hi && hi < self.sample_rate_hz / 2.0) {
            return Err(Error::config(format!(
                "motion band must satisfy 0 < low < high < fs/2, got ({lo}, {hi})"
            )));
        }
        if !(self.multipath_corner_hz > 0.0 && self.multipath_corner_hz < self.sample_rate_hz / 2.0) {
            return Err(Error::config("multipath_corner_hz must lie inside (0, fs/2)"));
        }
        let scalars = [
            self.noise_floor_db,
            self.offbody_motion_leakage,
            self.onbody_multipath_scale,
            self.onbody_shadowing_scale,
            self.amplitude_jitter,
        ];
        if scalars.iter().any(|v| *v < 0.0) {
            return Err(Error::config("noise, leakage, scale and jitter terms must be >= 0"));
        }
        for (m, a) in &self.amplitudes {
            let v = [a.motion_amp_db, a.multipath_amp_db, a.shadowing_amp_db];
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config(format!("amplitudes for {m} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn amplitudes_for(&self, motion: MotionLabel) -> Result<MotionAmplitudes> {
        self.amplitudes
            .get(&motion)
            .copied()
            .ok_or_else(|| Error::config(format!("no amplitude entry for motion {motion}")))
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(link: DeviceLabel, motion: MotionLabel, seed: u64) -> u64 {
    mix_seed(seed, 1 + ((link.code() as u64) << 8 | motion.code() as u64))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Sum of random-phase sinusoids with total standard deviation `std`.
fn add_sinusoids(
    out: &mut [f64],
    rng: &mut ChaCha8Rng,
    count: usize,
    band: (f64, f64),
    std: f64,
    fs: f64,
    envelope: Option<&[f64]>,
) {
    let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
    let norm = (weights.iter().map(|w| w * w).sum::<f64>() / 2.0).sqrt();
    let (lo, hi) = band;
    for w in weights {
        // log-uniform: motion energy concentrates at the low end of the band
        let f = lo * (hi / lo).powf(rng.random::<f64>());
        let phase = rng.random_range(0.0..2.0 * PI);
        let amp = std * w / norm;
        for (i, o) in out.iter_mut().enumerate() {
            let e = envelope.map_or(1.0, |env| env[i]);
            *o += e * amp * (2.0 * PI * f * i as f64 / fs + phase).sin();
        }
    }
}

/// Mean and standard deviation of `20 log10 |h|`, `h ~ CN(0, 1)`.
const RAYLEIGH_DB_MEAN: f64 = -2.506_815_781_348_522;
const RAYLEIGH_DB_STD: f64 = 5.570_043_140_052_503;

fn add_multipath(out: &mut [f64], rng: &mut ChaCha8Rng, std: f64, corner_hz: f64, fs: f64) {
    let a = (-2.0 * PI * corner_hz / fs).exp();
    let gain = (1.0 - a * a).sqrt();
    let (mut re, mut im) = (gaussian(rng), gaussian(rng));
    for o in out.iter_mut() {
        re = a * re + gain * gaussian(rng);
        im = a * im + gain * gaussian(rng);
        let p = (re * re + im * im) / 2.0;
        let db = 10.0 * p.max(1e-12).log10();
        *o += std * (db - RAYLEIGH_DB_MEAN) / RAYLEIGH_DB_STD;
    }
}

/// Generates one labelled trace. Deterministic in all arguments.
pub fn synth_trace(config: &SynthConfig, link: DeviceLabel, motion: MotionLabel, seed: u64) -> Result<RssTrace> {
    config.validate()?;
    let amps = config.amplitudes_for(motion)?;
    let fs = config.sample_rate_hz;
    let n = (config.duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(link, motion, seed));
    let jitter = |rng: &mut ChaCha8Rng| (config.amplitude_jitter * gaussian(rng)).exp();

    let (motion_scale, multipath_scale, shadow_scale) = match link {
        DeviceLabel::OnBody => (1.0, config.onbody_multipath_scale, config.onbody_shadowing_scale),
        DeviceLabel::OffBody => (config.offbody_motion_leakage, 1.0, 1.0),
    };
    let motion_std = amps.motion_amp_db * motion_scale * jitter(&mut rng);
    let multipath_std = amps.multipath_amp_db * multipath_scale * jitter(&mut rng);
    let shadow_std = amps.shadowing_amp_db * shadow_scale * jitter(&mut rng);

    let mut samples = vec![config.base_rss_dbm; n];

    if shadow_std > 0.0 {
        add_sinusoids(&mut samples, &mut rng, 4, (0.02, 0.45), shadow_std, fs, None);
    }
    if motion_std > 0.0 {
        let count = rng.random_range(3..=8);
        let envelope = (motion == MotionLabel::Uncontrolled).then(|| {
            // casual behaviour: the motion intensity itself wanders
            let mut env = vec![0.9; n];
            add_sinusoids(&mut env, &mut rng, 3, (0.05, 0.3), 0.4, fs, None);
            env.iter_mut().for_each(|e| *e = e.max(0.1));
            env
        });
        add_sinusoids(
            &mut samples,
            &mut rng,
            count,
            config.motion_band_hz,
            motion_std,
            fs,
            envelope.as_deref(),
        );
    }
    if multipath_std > 0.0 {
        add_multipath(&mut samples, &mut rng, multipath_std, config.multipath_corner_hz, fs);
    }
    if config.noise_floor_db > 0.0 {
        for s in samples.iter_mut() {
            *s += config.noise_floor_db * gaussian(&mut rng);
        }
    }
    RssTrace::new(samples, fs, link, motion, seed)
}

/// Number of traces to generate per (device, motion) cell.
pub type CellCounts = BTreeMap<(DeviceLabel, MotionLabel), usize>;

/// Equal counts for both devices over `motions`.
pub fn balanced_counts(motions: &[MotionLabel], per_cell: usize) -> CellCounts {
    DeviceLabel::ALL
        .into_iter()
        .flat_map(|d| motions.iter().map(move |&m| ((d, m), per_cell)))
        .collect()
}

/// Seed of the `index`-th trace of a cell, derived from the master seed.
pub fn trace_seed(master: u64, link: DeviceLabel, motion: MotionLabel, index: usize) -> u64 {
    mix_seed(
        mix_seed(master, 0x5EED_0000 | (link.code() as u64) << 8 | motion.code() as u64),
        index as u64,
    )
}

/// Generates every trace named by `counts`, cell by cell in key order.
pub fn synth_dataset(config: &SynthConfig, counts: &CellCounts, seed: u64) -> Result<Vec<RssTrace>> {
    config.validate()?;
    let mut out = Vec::with_capacity(counts.values().sum());
    for (&(link, motion), &count) in counts {
        for k in 0..count {
            out.push(synth_trace(config, link, motion, trace_seed(seed, link, motion, k))?);
        }
    }
    Ok(out)
}

/// Reads a `t_s,rss_dbm` CSV trace, resampling to 500 Hz when the input
/// spacing is not already exactly 2 ms.
///
/// The covered duration is the timestamp span plus one input period; the
/// output grid starts at the first timestamp and holds the last value past
/// the final input sample.
pub fn ingest_csv<R: Read>(source: R, link: DeviceLabel, motion: MotionLabel) -> Result<RssTrace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.len() != 2 || &header[0] != "t_s" || &header[1] != "rss_dbm" {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header `t_s,rss_dbm`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let fallback_line = row as u64 + 2;
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(fallback_line, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(fallback_line, |p| p.line());
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid {what} `{s}`"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line,
                    msg: format!("non-finite {what}"),
                })
            }
        };
        let t = parse(&record[0], "timestamp")?;
        let v = parse(&record[1], "rss value")?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::Parse {
                    line,
                    msg: format!("timestamp {t} is not after previous {prev}"),
                });
            }
        }
        times.push(t);
        values.push(v);
    }
    if times.len() < 2 {
        return Err(Error::TooShort {
            got: times.len(),
            need: (MIN_DURATION_S * SAMPLE_RATE_HZ) as usize,
        });
    }

    let dt_target = 1.0 / SAMPLE_RATE_HZ;
    let diffs: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let uniform = diffs.iter().all(|d| (d - dt_target).abs() <= 1e-6 * dt_target);
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let period = sorted[sorted.len() / 2];
    let duration = times[times.len() - 1] - times[0] + period;
    if duration < MIN_DURATION_S - 1e-6 {
        return Err(Error::TooShort {
            got: (duration * SAMPLE_RATE_HZ).round() as usize,
            need: (MIN_DURATION_S * SAMPLE_RATE_HZ) as usize,
        });
    }

    let samples = if uniform {
        values
    } else {
        let n = (duration * SAMPLE_RATE_HZ + 1e-6).floor() as usize;
        let t0 = times[0];
        let mut j = 0;
        (0..n)
            .map(|k| {
                let t = t0 + k as f64 * dt_target;
                while j + 1 < times.len() && times[j + 1] <= t {
                    j += 1;
                }
                if j + 1 >= times.len() {
                    values[values.len() - 1]
                } else {
                    let (ta, tb) = (times[j], times[j + 1]);
                    let w = (t - ta) / (tb - ta);
                    values[j] + w * (values[j + 1] - values[j])
                }
            })
            .collect()
    };
    RssTrace::new(samples, SAMPLE_RATE_HZ, link, motion, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_config_is_constant() {
        let cfg = SynthConfig::silent();
        let t = synth_trace(&cfg, DeviceLabel::OffBody, MotionLabel::Walking, 3).unwrap();
        assert_eq!(t.samples.len(), 25_000);
        assert!(t.samples.iter().all(|&v| v == cfg.base_rss_dbm));
    }

    #[test]
    fn deterministic_and_labelled() {
        let cfg = SynthConfig::default();
        let a = synth_trace(&cfg, DeviceLabel::OnBody, MotionLabel::Rotating, 42).unwrap();
        let b = synth_trace(&cfg, DeviceLabel::OnBody, MotionLabel::Rotating, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.link, DeviceLabel::OnBody);
        assert_eq!(a.motion, MotionLabel::Rotating);
        let c = synth_trace(&cfg, DeviceLabel::OffBody, MotionLabel::Rotating, 42).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn rejects_short_or_nonfinite_configs() {
        let mut cfg = SynthConfig::default();
        cfg.duration_s = 4.9;
        assert!(synth_trace(&cfg, DeviceLabel::OnBody, MotionLabel::Sitting, 0).is_err());
        let mut cfg = SynthConfig::default();
        cfg.base_rss_dbm = f64::NAN;
        assert!(synth_trace(&cfg, DeviceLabel::OnBody, MotionLabel::Sitting, 0).is_err());
        let mut cfg = SynthConfig::default();
        cfg.motion_band_hz = (15.0, 0.5);
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.amplitudes.get_mut(&MotionLabel::Walking).unwrap().motion_amp_db = -1.0;
        assert!(cfg.validate().is_err());
    }

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn walking_varies_more_than_standing_on_body() {
        let cfg = SynthConfig::default();
        for seed in 0..20 {
            let w = synth_trace(&cfg, DeviceLabel::OnBody, MotionLabel::Walking, seed).unwrap();
            let s = synth_trace(&cfg, DeviceLabel::OnBody, MotionLabel::Standing, seed).unwrap();
            assert!(variance(&w.samples) > variance(&s.samples), "seed {seed}");
        }
    }

    #[test]
    fn dataset_counts() {
        let cfg = SynthConfig {
            duration_s: 5.0,
            ..SynthConfig::default()
        };
        assert!(synth_dataset(&cfg, &balanced_counts(&MotionLabel::CONTROLLED, 0), 1)
            .unwrap()
            .is_empty());
        let traces = synth_dataset(&cfg, &balanced_counts(&MotionLabel::CONTROLLED, 10), 1).unwrap();
        assert_eq!(traces.len(), 100);
        assert_eq!(traces.iter().filter(|t| t.link == DeviceLabel::OnBody).count(), 50);
        let again = synth_dataset(&cfg, &balanced_counts(&MotionLabel::CONTROLLED, 10), 1).unwrap();
        assert_eq!(traces, again);
    }

    fn csv_with(times: impl Iterator<Item = f64>) -> String {
        let mut s = String::from("t_s,rss_dbm\n");
        for (i, t) in times.enumerate() {
            s.push_str(&format!("{t},{}\n", -60.0 + (i % 7) as f64));
        }
        s
    }

    #[test]
    fn ingest_uniform_trace_verbatim() {
        let src = csv_with((0..2500).map(|i| i as f64 * 0.002));
        let t = ingest_csv(src.as_bytes(), DeviceLabel::OnBody, MotionLabel::Sitting).unwrap();
        assert_eq!(t.samples.len(), 2500);
        assert!(t.samples.iter().enumerate().all(|(i, &v)| v == -60.0 + (i % 7) as f64));
    }

    #[test]
    fn ingest_resamples_coarse_trace() {
        let src = csv_with((0..1250).map(|i| i as f64 * 0.004));
        let t = ingest_csv(src.as_bytes(), DeviceLabel::OffBody, MotionLabel::Sitting).unwrap();
        assert_eq!(t.samples.len(), 2500);
        // midpoint between rows 0 (-60) and 1 (-59)
        assert!((t.samples[1] + 59.5).abs() < 1e-9);
        assert_eq!(t.samples[2], -59.0);
    }

    #[test]
    fn ingest_reports_line_of_bad_timestamp() {
        let mut times: Vec<f64> = (0..3000).map(|i| i as f64 * 0.002).collect();
        // data row 15 sits on line 17 (header is line 1)
        times[15] = times[14];
        let src = csv_with(times.into_iter());
        match ingest_csv(src.as_bytes(), DeviceLabel::OnBody, MotionLabel::Sitting) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 17),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad = "t_s,rss_dbm\n0,1\n0.002,abc\n";
        match ingest_csv(bad.as_bytes(), DeviceLabel::OnBody, MotionLabel::Sitting) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_short_and_bad_header() {
        let src = csv_with((0..2000).map(|i| i as f64 * 0.002));
        assert!(matches!(
            ingest_csv(src.as_bytes(), DeviceLabel::OnBody, MotionLabel::Sitting),
            Err(Error::TooShort { .. })
        ));
        let src = "time,rss\n0,1\n";
        assert!(matches!(
            ingest_csv(src.as_bytes(), DeviceLabel::OnBody, MotionLabel::Sitting),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let cfg = SynthConfig {
            duration_s: 6.0,
            ..SynthConfig::default()
        };
        let t = synth_trace(&cfg, DeviceLabel::OffBody, MotionLabel::Walking, 9).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ingest_csv(&buf[..], t.link, t.motion).unwrap();
        assert_eq!(back.samples, t.samples);
    }
}
