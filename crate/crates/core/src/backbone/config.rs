use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const NUM_STAGES: usize = 5;
/// Stages that carry two modalities and a fusion module.
pub const DUAL_STAGES: usize = 3;

/// Channel plan and input geometry shared by the dual backbone and the
/// single-stream classifiers. Stages are numbered `1..=5`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    pub tau: f64,
    pub stage_blocks: [usize; NUM_STAGES],
    pub height: usize,
    pub width: usize,
    /// Channels of the main (RGB or grayscale) input.
    pub in_channels: usize,
    /// Channels of the infrared input of the dual backbone.
    pub ir_channels: usize,
}

impl BackboneConfig {
    /// Dual-stream plan with blocks `(1, 2, 4, 3, 2)`.
    pub fn dual(tau: f64, size: usize) -> Self {
        BackboneConfig {
            tau,
            stage_blocks: [1, 2, 4, 3, 2],
            height: size,
            width: size,
            in_channels: 3,
            ir_channels: 1,
        }
    }

    /// Reduced classifier plan: `tau = 0.25`, blocks `(1, 1, 2, 2, 1)`, 32x32
    /// single-channel input.
    pub fn classification() -> Self {
        BackboneConfig {
            tau: 0.25,
            stage_blocks: [1, 1, 2, 2, 1],
            height: 32,
            width: 32,
            in_channels: 1,
            ir_channels: 1,
        }
    }

    fn scaled(&self, stage: usize, base: f64) -> usize {
        assert!(
            (1..=NUM_STAGES).contains(&stage),
            "stage {stage} out of range"
        );
        ((1u64 << stage) as f64 * base * self.tau).round() as usize
    }

    /// `round(2^j * 32 * tau)`.
    pub fn rgb_channels(&self, stage: usize) -> usize {
        self.scaled(stage, 32.0)
    }

    /// `round(2^j * 16 * tau)`.
    pub fn embed_channels(&self, stage: usize) -> usize {
        self.scaled(stage, 16.0)
    }

    pub fn blocks(&self, stage: usize) -> usize {
        self.stage_blocks[stage - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        for j in 1..=NUM_STAGES {
            if self.rgb_channels(j) == 0 || self.embed_channels(j) == 0 {
                return Err(Error::config(format!(
                    "tau = {} leaves stage {j} with zero channels",
                    self.tau
                )));
            }
        }
        if self.in_channels == 0 || self.ir_channels == 0 {
            return Err(Error::config("input channel counts must be positive"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("input size must be positive"));
        }
        Ok(())
    }

    /// Spatial size after `stage` halvings.
    pub fn stage_hw(&self, stage: usize) -> (usize, usize) {
        (self.height >> stage, self.width >> stage)
    }
}

/// Whether a classifier stage is a CNN stage or an ADWT + embedding stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StageKind {
    Cnn,
    Adwt,
}

impl StageKind {
    /// The first `depth` stages ADWT, the rest CNN.
    pub fn prefix(depth: usize) -> Result<[StageKind; NUM_STAGES]> {
        if depth > NUM_STAGES {
            return Err(Error::config(format!(
                "swap depth {depth} exceeds the {NUM_STAGES} stages"
            )));
        }
        let mut kinds = [StageKind::Cnn; NUM_STAGES];
        kinds[..depth].fill(StageKind::Adwt);
        Ok(kinds)
    }

    /// Accepts only a contiguous ADWT prefix over exactly five stages and
    /// returns its depth.
    pub fn validate(kinds: &[StageKind]) -> Result<usize> {
        if kinds.len() != NUM_STAGES {
            return Err(Error::config(format!(
                "expected {NUM_STAGES} stage kinds, got {}",
                kinds.len()
            )));
        }
        let depth = kinds.iter().take_while(|k| **k == StageKind::Adwt).count();
        if kinds[depth..].contains(&StageKind::Adwt) {
            return Err(Error::config(
                "ADWT stages must form a contiguous prefix starting at stage 1",
            ));
        }
        Ok(depth)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Cnn => "cnn",
            StageKind::Adwt => "adwt",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(StageKind::Cnn),
            "adwt" => Ok(StageKind::Adwt),
            _ => Err(Error::config(format!(
                "unknown stage kind `{s}` (cnn, adwt)"
            ))),
        }
    }
}
