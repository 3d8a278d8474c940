use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Tensor,
    pub y: usize,
}

/// Rows × columns arrangement of sensor channels; channel `c` sits at
/// `(c / cols, c % cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Montage {
    pub rows: usize,
    pub cols: usize,
}

/// How a sample tensor is laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// `[channels, time]` multichannel signal.
    Signal { channels: usize, time: usize, sampling_rate: f64, montage: Montage },
    /// `[height, width]` single-channel image.
    Grid { height: usize, width: usize },
}

impl Layout {
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            Layout::Signal { channels, time, .. } => vec![channels, time],
            Layout::Grid { height, width } => vec![height, width],
        }
    }

    pub fn is_signal(&self) -> bool {
        matches!(self, Layout::Signal { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub layout: Layout,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, num_classes: usize, layout: Layout) -> Result<Self> {
        let shape = layout.shape();
        for s in &samples {
            if s.x.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "sample shape {:?} does not match layout {shape:?}",
                    s.x.shape()
                )));
            }
            if s.y >= num_classes {
                return Err(Error::InvalidClass { class: s.y, num_classes });
            }
        }
        Ok(Self { samples, num_classes, layout })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Accuracy of always predicting the most frequent class.
    pub fn chance_level(&self) -> f64 {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            counts[s.y] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / self.samples.len().max(1) as f64
    }

    /// One row per sample: label followed by the flattened tensor.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        let n = self.layout.shape().iter().product::<usize>();
        let header: Vec<String> =
            std::iter::once("label".to_string()).chain((0..n).map(|i| format!("x{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = s.y.to_string();
            for v in s.x.data() {
                row.push(',');
                row.push_str(&format_float(*v));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl std::io::BufRead, num_classes: usize, layout: Layout) -> Result<Self> {
        let shape = layout.shape();
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse_err = |what: &str| Error::Config(format!("dataset csv line {}: bad {what}", i + 1));
            let y = fields.next().and_then(|f| f.trim().parse().ok()).ok_or_else(|| parse_err("label"))?;
            let data = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| parse_err("value"))?;
            samples.push(Sample { x: Tensor::new(shape.clone(), data)?, y });
        }
        Self::new(samples, num_classes, layout)
    }
}

/// Shortest decimal that round-trips exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}
