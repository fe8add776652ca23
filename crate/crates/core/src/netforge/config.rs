use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulatorMode {
    /// All-ones kernels, stride equal to kernel size.
    #[default]
    Uniform,
    /// Random positive kernels followed by a 1×1 mixing layer.
    NonUniform,
}

pub type Rgb = [u8; 3];

pub const DEFAULT_BACKGROUND: Rgb = [20, 20, 20];

/// Default target colors. Each sits at L1 distance 256 from the default
/// background, which keeps the straight-line paths between them piecewise
/// linear with kinks on a 1/256 grid.
pub const DEFAULT_PALETTE: [Rgb; 4] = [
    [148, 148, 20],
    [20, 148, 148],
    [148, 20, 148],
    [212, 84, 20],
];

/// Counts white pixels and reports the count modulo `modulus`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleColorConfig {
    pub height: usize,
    pub width: usize,
    pub modulus: usize,
    /// Largest count the modulo head must handle.
    pub capacity: usize,
    pub accumulator: AccumulatorMode,
    pub seed: u64,
}

impl Default for SingleColorConfig {
    fn default() -> Self {
        SingleColorConfig {
            height: 64,
            width: 64,
            modulus: 30,
            capacity: 64 * 64,
            accumulator: AccumulatorMode::Uniform,
            seed: 0,
        }
    }
}

impl SingleColorConfig {
    pub fn with_size(height: usize, width: usize) -> Self {
        SingleColorConfig {
            height,
            width,
            capacity: height * width,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("height and width must be positive".into()));
        }
        if self.modulus < 2 {
            return Err(Error::Config(format!("modulus must be at least 2, got {}", self.modulus)));
        }
        if self.capacity < self.height * self.width {
            return Err(Error::Config(format!(
                "capacity {} is below the pixel count {}",
                self.capacity,
                self.height * self.width
            )));
        }
        if self.modulus > self.capacity {
            return Err(Error::Config(format!(
                "modulus {} exceeds capacity {}",
                self.modulus, self.capacity
            )));
        }
        Ok(())
    }
}

/// Classifies an image by which target color covers the most pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiColorConfig {
    pub height: usize,
    pub width: usize,
    pub target_colors: Vec<Rgb>,
    pub background: Rgb,
    pub redundant_channels: usize,
    /// Scale of the random wiring from redundant channels into the
    /// accumulator; 0 disconnects them.
    pub redundant_scale: f64,
    pub accumulator: AccumulatorMode,
    pub seed: u64,
}

impl Default for MultiColorConfig {
    fn default() -> Self {
        MultiColorConfig {
            height: 64,
            width: 64,
            target_colors: DEFAULT_PALETTE.to_vec(),
            background: DEFAULT_BACKGROUND,
            redundant_channels: 4,
            redundant_scale: 1.0,
            accumulator: AccumulatorMode::Uniform,
            seed: 0,
        }
    }
}

impl MultiColorConfig {
    pub fn with_scale(redundant_scale: f64) -> Self {
        MultiColorConfig {
            redundant_scale,
            ..Default::default()
        }
    }

    pub fn classes(&self) -> usize {
        self.target_colors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("height and width must be positive".into()));
        }
        if self.target_colors.is_empty() {
            return Err(Error::Config("target_colors must not be empty".into()));
        }
        for (i, c) in self.target_colors.iter().enumerate() {
            if *c == self.background {
                return Err(Error::Config(format!(
                    "target_colors[{i}] equals the background color {c:?}"
                )));
            }
            if self.target_colors[..i].contains(c) {
                return Err(Error::Config(format!("target_colors[{i}] = {c:?} is duplicated")));
            }
        }
        if !(self.redundant_scale >= 0.0 && self.redundant_scale.is_finite()) {
            return Err(Error::Config(format!(
                "redundant_scale must be finite and non-negative, got {}",
                self.redundant_scale
            )));
        }
        Ok(())
    }
}

/// Which designed environment a network or dataset belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Environment {
    SingleColor(SingleColorConfig),
    MultiColor(MultiColorConfig),
}

impl Environment {
    pub fn height(&self) -> usize {
        match self {
            Environment::SingleColor(c) => c.height,
            Environment::MultiColor(c) => c.height,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Environment::SingleColor(c) => c.width,
            Environment::MultiColor(c) => c.width,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Environment::SingleColor(_) => 1,
            Environment::MultiColor(_) => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Environment::SingleColor(c) => c.validate(),
            Environment::MultiColor(c) => c.validate(),
        }
    }

    /// Tap that gradient-weighted class activation maps attach to by default.
    pub fn default_cam_tap(&self) -> &'static str {
        match self {
            Environment::SingleColor(_) => "accumulator.layers.5",
            Environment::MultiColor(_) => "accumulator.layers.7",
        }
    }
}
