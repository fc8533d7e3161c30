//! Synthetic dataset recipes: how many traces per split and cell.
//!
//! Splits are drawn by trace, each from its own master seed, so no segment
//! of a trace lands in two splits.

use serde::{Deserialize, Serialize};

use crate::adversarial::LabeledSet;
use crate::ban_synth::{balanced_counts, mix_seed, synth_dataset, CellCounts, RssTrace, SynthConfig};
use crate::error::{Error, Result};
use crate::features::{featurize_traces, Featurizer};
use crate::labels::{DeviceLabel, MotionLabel};

const SPLIT_SALT: u64 = 0x5_B117_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Validation,
    Test,
    Uncontrolled,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Validation, Split::Test, Split::Uncontrolled];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Uncontrolled => "uncontrolled",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown split `{s}`")))
    }
}

/// Traces per (device, motion) cell for the controlled splits, and per
/// device for the uncontrolled one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Recipe {
    pub motions: Vec<MotionLabel>,
    pub train_per_cell: usize,
    pub validation_per_cell: usize,
    pub test_per_cell: usize,
    pub uncontrolled_per_link: usize,
}

impl Default for Recipe {
    /// 2000 training, 400 validation, 500 test and 500 uncontrolled
    /// profiles with 50 s traces.
    fn default() -> Self {
        Self {
            motions: MotionLabel::CONTROLLED.to_vec(),
            train_per_cell: 20,
            validation_per_cell: 4,
            test_per_cell: 5,
            uncontrolled_per_link: 25,
        }
    }
}

impl Recipe {
    /// Roughly the size of a week-long collection: 48 training traces per
    /// cell (8 of them held for validation) and 12 test traces.
    pub fn paper_scale() -> Self {
        Self {
            motions: MotionLabel::CONTROLLED.to_vec(),
            train_per_cell: 40,
            validation_per_cell: 8,
            test_per_cell: 12,
            uncontrolled_per_link: 60,
        }
    }

    /// A few seconds of work, for smoke tests.
    pub fn tiny() -> Self {
        Self {
            motions: MotionLabel::CONTROLLED.to_vec(),
            train_per_cell: 2,
            validation_per_cell: 1,
            test_per_cell: 1,
            uncontrolled_per_link: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.motions.is_empty() {
            return Err(Error::config("recipe needs at least one motion"));
        }
        if let Some(m) = self.motions.iter().find(|m| !m.is_controlled()) {
            return Err(Error::config(format!("recipe motions must be controlled, got {m}")));
        }
        if self.train_per_cell == 0 {
            return Err(Error::config("recipe needs at least one training trace per cell"));
        }
        Ok(())
    }

    pub fn counts(&self, split: Split) -> CellCounts {
        match split {
            Split::Train => balanced_counts(&self.motions, self.train_per_cell),
            Split::Validation => balanced_counts(&self.motions, self.validation_per_cell),
            Split::Test => balanced_counts(&self.motions, self.test_per_cell),
            Split::Uncontrolled => balanced_counts(&[MotionLabel::Uncontrolled], self.uncontrolled_per_link),
        }
        .into_iter()
        .filter(|&(_, n)| n > 0)
        .collect()
    }

    pub fn split_seed(seed: u64, split: Split) -> u64 {
        mix_seed(seed, SPLIT_SALT + split as u64)
    }

    pub fn synthesize(&self, config: &SynthConfig, seed: u64) -> Result<SplitTraces> {
        self.validate()?;
        let gen = |s: Split| synth_dataset(config, &self.counts(s), Self::split_seed(seed, s));
        Ok(SplitTraces {
            train: gen(Split::Train)?,
            validation: gen(Split::Validation)?,
            test: gen(Split::Test)?,
            uncontrolled: gen(Split::Uncontrolled)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitTraces {
    pub train: Vec<RssTrace>,
    pub validation: Vec<RssTrace>,
    pub test: Vec<RssTrace>,
    pub uncontrolled: Vec<RssTrace>,
}

impl SplitTraces {
    pub fn get(&self, split: Split) -> &[RssTrace] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
            Split::Uncontrolled => &self.uncontrolled,
        }
    }

    pub fn featurize(&self, featurizer: &Featurizer) -> Result<DataSplits> {
        let f = |traces: &[RssTrace]| Ok::<_, Error>(LabeledSet::from_records(&featurize_traces(featurizer, traces)?));
        Ok(DataSplits {
            train: f(&self.train)?,
            validation: f(&self.validation)?,
            test: f(&self.test)?,
            uncontrolled: f(&self.uncontrolled)?,
        })
    }
}

/// Featurized splits. Every controlled split holds the same motions.
#[derive(Debug, Clone, Default)]
pub struct DataSplits {
    pub train: LabeledSet,
    pub validation: LabeledSet,
    pub test: LabeledSet,
    pub uncontrolled: LabeledSet,
}

impl DataSplits {
    pub fn get(&self, split: Split) -> &LabeledSet {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
            Split::Uncontrolled => &self.uncontrolled,
        }
    }
}

/// Device labels of a split in order, handy for count checks.
pub fn device_counts(set: &LabeledSet) -> (usize, usize) {
    let on = set.device.iter().filter(|&&d| d == DeviceLabel::OnBody).count();
    (on, set.len() - on)
}
