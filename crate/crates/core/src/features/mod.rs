//! Propagation profiles: 380 features per 5 s RSS segment.
//!
//! Layout, frozen because the network consumes it positionally:
//!
//! * `0..180` time features, branch-major (low, band, high), then chunk
//!   index `0..10`, then statistic (max, min, median, variance, kurtosis,
//!   skewness);
//! * `180..340` the 4 × 40 interval-magnitude matrix, row-major;
//! * `340..380` the 40 component proportions.

mod file;
mod stats;

pub use file::{read_feature_file, write_feature_file, FeatureRecord, FEATURE_FILE_MAGIC, FEATURE_FILE_VERSION};
pub use stats::{chunk_stats, ChunkStats};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ban_synth::RssTrace;
use crate::dsp::{self, FilterKernel, FilterKind, StftPlan, SEGMENT_LEN};
use crate::error::{Error, Result};
use crate::labels::{DeviceLabel, MotionLabel};

pub const CHUNKS: usize = 10;
pub const CHUNK_LEN: usize = SEGMENT_LEN / CHUNKS;
pub const STATS_PER_CHUNK: usize = 6;
pub const TIME_FEATURES: usize = 3 * CHUNKS * STATS_PER_CHUNK;
pub const INTERVALS: usize = 40;
pub const LOW_INTERVALS: usize = 30;
pub const WINDOWS: usize = 4;
pub const FREQ_FEATURES: usize = WINDOWS * INTERVALS + INTERVALS;
pub const PROFILE_DIM: usize = TIME_FEATURES + FREQ_FEATURES;

/// One 5 s, 500 Hz slice of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RssSegment {
    samples: Vec<f64>,
    pub link: DeviceLabel,
    pub motion: MotionLabel,
}

impl RssSegment {
    pub fn new(samples: Vec<f64>, link: DeviceLabel, motion: MotionLabel) -> Result<Self> {
        if samples.len() != SEGMENT_LEN {
            return Err(Error::Shape(format!(
                "segment must have {SEGMENT_LEN} samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("segment sample {i}"),
            });
        }
        Ok(Self { samples, link, motion })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Splits a 500 Hz trace into consecutive non-overlapping segments; the
/// trailing partial segment is dropped.
pub fn segment_trace(trace: &RssTrace) -> Result<Vec<RssSegment>> {
    if trace.sample_rate != dsp::SAMPLE_RATE_HZ {
        return Err(Error::config(format!(
            "segmentation expects {} Hz traces, got {}",
            dsp::SAMPLE_RATE_HZ,
            trace.sample_rate
        )));
    }
    if trace.samples.len() < SEGMENT_LEN {
        return Err(Error::TooShort {
            got: trace.samples.len(),
            need: SEGMENT_LEN,
        });
    }
    trace
        .samples
        .chunks_exact(SEGMENT_LEN)
        .map(|c| RssSegment::new(c.to_vec(), trace.link, trace.motion))
        .collect()
}

/// Low (< 0.5 Hz), motion band (0.5 to 15 Hz) and high (> 15 Hz) parts.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleVariations {
    pub low: Vec<f64>,
    pub band: Vec<f64>,
    pub high: Vec<f64>,
}

impl MultiScaleVariations {
    pub fn branches(&self) -> [&[f64]; 3] {
        [&self.low, &self.band, &self.high]
    }
}

/// Interval magnitudes and their proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroSummary {
    /// `m[i][j]`: window `i`, interval `j`.
    pub m: [[f64; INTERVALS]; WINDOWS],
    pub pc: [f64; INTERVALS],
    /// True when the spectrum had no energy and `pc` fell back to uniform.
    pub zero_spectrum: bool,
}

impl SpectroSummary {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.m.iter().flatten().copied().collect();
        out.extend_from_slice(&self.pc);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationProfile {
    pub time_features: Vec<f64>,
    pub freq_features: Vec<f64>,
    pub link: DeviceLabel,
    pub motion: MotionLabel,
    pub zero_spectrum: bool,
}

impl PropagationProfile {
    /// The 380-long network input.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(PROFILE_DIM);
        v.extend_from_slice(&self.time_features);
        v.extend_from_slice(&self.freq_features);
        v
    }

    pub fn from_vec(values: &[f64], link: DeviceLabel, motion: MotionLabel) -> Result<Self> {
        if values.len() != PROFILE_DIM {
            return Err(Error::Shape(format!(
                "profile must have {PROFILE_DIM} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            time_features: values[..TIME_FEATURES].to_vec(),
            freq_features: values[TIME_FEATURES..].to_vec(),
            link,
            motion,
            zero_spectrum: values[TIME_FEATURES..TIME_FEATURES + WINDOWS * INTERVALS]
                .iter()
                .all(|&m| m == 0.0),
        })
    }
}

/// Filter band edges and length used for decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub band_hz: (f64, f64),
    pub taps: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            band_hz: (0.5, 15.0),
            taps: dsp::DEFAULT_TAPS,
        }
    }
}

/// Holds the designed kernels and FFT plan. Immutable and `Sync`, so one
/// instance can featurize segments from many threads.
pub struct Featurizer {
    low: FilterKernel,
    band: FilterKernel,
    high: FilterKernel,
    stft: StftPlan,
}

impl Featurizer {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let fs = dsp::SAMPLE_RATE_HZ;
        let (lo, hi) = config.band_hz;
        Ok(Self {
            low: dsp::design_fir(FilterKind::LowPass, &[lo], config.taps, fs)?,
            band: dsp::design_fir(FilterKind::BandPass, &[lo, hi], config.taps, fs)?,
            high: dsp::design_fir(FilterKind::HighPass, &[hi], config.taps, fs)?,
            stft: StftPlan::canonical(),
        })
    }

    pub fn kernels(&self) -> [&FilterKernel; 3] {
        [&self.low, &self.band, &self.high]
    }

    pub fn decompose(&self, segment: &RssSegment) -> Result<MultiScaleVariations> {
        let x = segment.samples();
        Ok(MultiScaleVariations {
            low: dsp::filter_zero_phase(x, &self.low)?,
            band: dsp::filter_zero_phase(x, &self.band)?,
            high: dsp::filter_zero_phase(x, &self.high)?,
        })
    }

    pub fn freq_features(&self, segment: &RssSegment) -> Result<(SpectroSummary, Vec<f64>)> {
        let spec = self.stft.run(segment.samples())?;
        let mut m = [[0.0; INTERVALS]; WINDOWS];
        for (i, row) in m.iter_mut().enumerate() {
            for (bin, &mag) in spec.window(i).iter().enumerate() {
                row[interval_of_bin(bin)] += mag;
            }
        }
        let column: Vec<f64> = (0..INTERVALS).map(|j| m.iter().map(|r| r[j]).sum()).collect();
        let total: f64 = column.iter().sum();
        let zero_spectrum = total <= 0.0;
        let mut pc = [1.0 / INTERVALS as f64; INTERVALS];
        if !zero_spectrum {
            for (p, c) in pc.iter_mut().zip(&column) {
                *p = c / total;
            }
        }
        let summary = SpectroSummary { m, pc, zero_spectrum };
        let flat = summary.flatten();
        Ok((summary, flat))
    }

    pub fn build_profile(&self, segment: &RssSegment) -> Result<PropagationProfile> {
        let time_features = time_features(&self.decompose(segment)?)?;
        let (summary, freq_features) = self.freq_features(segment)?;
        Ok(PropagationProfile {
            time_features,
            freq_features,
            link: segment.link,
            motion: segment.motion,
            zero_spectrum: summary.zero_spectrum,
        })
    }
}

/// Segments and featurizes every trace, in parallel over traces. Records
/// keep trace order; `trace_id` is the index into `traces`.
pub fn featurize_traces(featurizer: &Featurizer, traces: &[RssTrace]) -> Result<Vec<FeatureRecord>> {
    let per_trace: Vec<Vec<FeatureRecord>> = traces
        .par_iter()
        .enumerate()
        .map(|(id, trace)| {
            segment_trace(trace)?
                .iter()
                .enumerate()
                .map(|(k, seg)| {
                    Ok(FeatureRecord {
                        profile: featurizer.build_profile(seg)?,
                        trace_id: id as u32,
                        segment_index: k as u32,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_trace.into_iter().flatten().collect())
}

/// Interval index (0-based) of an STFT bin at 0.5 Hz resolution.
///
/// Intervals 0..30 are 0.5 Hz wide over [0, 15] Hz with DC folded into the
/// first; intervals 30..40 are 23.5 Hz (47 bins) wide over (15, 250] Hz.
/// Each interval is left-open: it takes bins with frequency in (lo, hi].
pub fn interval_of_bin(bin: usize) -> usize {
    match bin {
        0 => 0,
        1..=30 => bin - 1,
        _ => (LOW_INTERVALS + (bin - 31) / 47).min(INTERVALS - 1),
    }
}

/// The 180 chunked statistics of a decomposition.
pub fn time_features(v: &MultiScaleVariations) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(TIME_FEATURES);
    for branch in v.branches() {
        if branch.len() != SEGMENT_LEN {
            return Err(Error::Shape(format!(
                "variation branch must have {SEGMENT_LEN} samples, got {}",
                branch.len()
            )));
        }
        for chunk in branch.chunks_exact(CHUNK_LEN) {
            out.extend_from_slice(&chunk_stats(chunk)?.to_array());
        }
    }
    Ok(out)
}
