//! Device and motion labels shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Whether a transmitter is worn by the legitimate user or not.
///
/// Encoded as `1` for on-body and `0` for off-body wherever a numeric
/// label is needed (file formats, network targets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviceLabel {
    OffBody,
    OnBody,
}

impl DeviceLabel {
    pub const ALL: [DeviceLabel; 2] = [DeviceLabel::OnBody, DeviceLabel::OffBody];

    pub fn code(self) -> u8 {
        match self {
            DeviceLabel::OffBody => 0,
            DeviceLabel::OnBody => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DeviceLabel::OffBody),
            1 => Some(DeviceLabel::OnBody),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DeviceLabel::OnBody => "on",
            DeviceLabel::OffBody => "off",
        }
    }
}

impl fmt::Display for DeviceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeviceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "on" | "onbody" | "on-body" | "1" => Ok(DeviceLabel::OnBody),
            "off" | "offbody" | "off-body" | "0" => Ok(DeviceLabel::OffBody),
            other => Err(Error::config(format!("unknown device label `{other}`"))),
        }
    }
}

/// Body motion state of the user while a trace was captured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionLabel {
    Sitting,
    Standing,
    ArmMoving,
    Rotating,
    Walking,
    Uncontrolled,
}

impl MotionLabel {
    /// The controlled motions, in class-index order.
    pub const CONTROLLED: [MotionLabel; 5] = [
        MotionLabel::Sitting,
        MotionLabel::Standing,
        MotionLabel::ArmMoving,
        MotionLabel::Rotating,
        MotionLabel::Walking,
    ];

    pub const ALL: [MotionLabel; 6] = [
        MotionLabel::Sitting,
        MotionLabel::Standing,
        MotionLabel::ArmMoving,
        MotionLabel::Rotating,
        MotionLabel::Walking,
        MotionLabel::Uncontrolled,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_controlled(self) -> bool {
        self != MotionLabel::Uncontrolled
    }

    pub fn is_static(self) -> bool {
        matches!(self, MotionLabel::Sitting | MotionLabel::Standing)
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionLabel::Sitting => "sitting",
            MotionLabel::Standing => "standing",
            MotionLabel::ArmMoving => "arm-moving",
            MotionLabel::Rotating => "rotating",
            MotionLabel::Walking => "walking",
            MotionLabel::Uncontrolled => "uncontrolled",
        }
    }
}

impl fmt::Display for MotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        MotionLabel::ALL
            .into_iter()
            .find(|m| m.name().replace('-', "") == norm)
            .ok_or_else(|| Error::config(format!("unknown motion `{s}`")))
    }
}

/// Parses a comma-separated motion list such as `sitting,walking`.
pub fn parse_motion_list(s: &str) -> Result<Vec<MotionLabel>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}
