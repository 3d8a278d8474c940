//! Feature domains and MoRF/LeRF subset selection.

mod select;
mod spectrum;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use select::{
    aggregate_spatial, feature_count, select_grid, select_spatial, select_spectral, select_temporal,
    DEFAULT_POWER_TOLERANCE,
};
pub use spectrum::{spectral_saliency, AmplitudeView, Spectrum};
pub(crate) use spectrum::{fft_in_place, irfft, rfft};

use crate::data::Layout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Whole channels of a `[channels, time]` signal.
    Spatial,
    /// A contiguous time window across all channels.
    Temporal,
    /// A contiguous band of DFT bins across all channels.
    Spectral,
    /// Individual pixels of a `[height, width]` image.
    Grid,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Spatial, Domain::Temporal, Domain::Spectral, Domain::Grid];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Spatial => "spatial",
            Domain::Temporal => "temporal",
            Domain::Spectral => "spectral",
            Domain::Grid => "grid",
        }
    }

    pub fn check_layout(self, layout: &Layout) -> Result<()> {
        let ok = match self {
            Domain::Grid => !layout.is_signal(),
            _ => layout.is_signal(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("domain {} does not apply to layout {layout:?}", self.name())))
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown domain {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    /// Most relevant first.
    MoRF,
    /// Least relevant first.
    LeRF,
}

/// The features picked by a selection rule. Intervals are half-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum Features {
    Spatial { channels: Vec<usize> },
    Temporal { start: usize, end: usize },
    /// DFT bins `lo..hi` of every channel.
    Spectral { lo: usize, hi: usize },
    Grid { pixels: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSubset {
    #[serde(flatten)]
    pub features: Features,
    pub ratio: f64,
}

impl FeatureSubset {
    pub fn domain(&self) -> Domain {
        match self.features {
            Features::Spatial { .. } => Domain::Spatial,
            Features::Temporal { .. } => Domain::Temporal,
            Features::Spectral { .. } => Domain::Spectral,
            Features::Grid { .. } => Domain::Grid,
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.features {
            Features::Spatial { channels } => channels.is_empty(),
            Features::Temporal { start, end } => start >= end,
            Features::Spectral { lo, hi } => lo >= hi,
            Features::Grid { pixels } => pixels.is_empty(),
        }
    }

    pub fn empty(domain: Domain) -> Self {
        let features = match domain {
            Domain::Spatial => Features::Spatial { channels: vec![] },
            Domain::Temporal => Features::Temporal { start: 0, end: 0 },
            Domain::Spectral => Features::Spectral { lo: 1, hi: 1 },
            Domain::Grid => Features::Grid { pixels: vec![] },
        };
        Self { features, ratio: 0.0 }
    }

    /// Every feature of `domain` for a sample of the given layout. The
    /// spectral variant covers all bins except DC.
    pub fn all(domain: Domain, layout: &Layout) -> Result<Self> {
        domain.check_layout(layout)?;
        let features = match (domain, layout) {
            (Domain::Spatial, Layout::Signal { channels, .. }) => Features::Spatial { channels: (0..*channels).collect() },
            (Domain::Temporal, Layout::Signal { time, .. }) => Features::Temporal { start: 0, end: *time },
            (Domain::Spectral, Layout::Signal { time, .. }) => Features::Spectral { lo: 1, hi: time / 2 + 1 },
            (Domain::Grid, Layout::Grid { height, width }) => Features::Grid { pixels: (0..height * width).collect() },
            _ => unreachable!("layout checked above"),
        };
        Ok(Self { features, ratio: 1.0 })
    }
}
