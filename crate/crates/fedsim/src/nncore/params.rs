//! Flat parameter vectors with named, shaped layouts.
//!
//! A [`ParamVector`] is the single home for every model-sized quantity in the
//! simulator: the meta-initialization, per-client adaptations, stored
//! historical models, and gradients. All element-wise arithmetic checks that
//! both operands share a layout.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// One named record of a layout: a tensor name and its shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered list of layout entries describing how a flat vector maps onto
/// layer weights and biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    entries: Vec<LayoutEntry>,
}

impl ParamLayout {
    pub fn new(entries: Vec<LayoutEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.entries.iter().map(LayoutEntry::len).sum()
    }

    /// Start offset of entry `i` in the flat vector.
    pub fn offset(&self, i: usize) -> usize {
        self.entries[..i].iter().map(LayoutEntry::len).sum()
    }

    /// Compact one-line rendering, also used as the checkpoint header.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let dims = e
                .shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x");
            let _ = write!(out, "{} {}", e.name, dims);
        }
        out
    }

    fn parse_header(line: &str) -> Result<Self> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() || !tokens.len().is_multiple_of(2) {
            return Err(Error::CheckpointFormat(format!(
                "header must hold (name, shape) pairs, found {} tokens",
                tokens.len()
            )));
        }
        let mut entries = Vec::with_capacity(tokens.len() / 2);
        for pair in tokens.chunks(2) {
            let shape = pair[1]
                .split('x')
                .map(|d| {
                    d.parse::<usize>().map_err(|_| {
                        Error::CheckpointFormat(format!("bad dimension `{d}` in `{}`", pair[1]))
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            if shape.contains(&0) {
                return Err(Error::CheckpointFormat(format!(
                    "zero dimension in `{}`",
                    pair[1]
                )));
            }
            entries.push(LayoutEntry {
                name: pair[0].to_string(),
                shape,
            });
        }
        Ok(Self::new(entries))
    }
}

/// Flat model parameters plus the layout that gives them meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl ParamVector {
    /// Wrap a flat value buffer; the buffer length must match the layout.
    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::LengthMismatch {
                expected: layout.total_len(),
                found: values.len(),
            });
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let n = layout.total_len();
        Self {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn layout_arc(&self) -> Arc<ParamLayout> {
        Arc::clone(&self.layout)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Slice holding layout entry `i`.
    pub fn entry_slice(&self, i: usize) -> &[f64] {
        let start = self.layout.offset(i);
        &self.values[start..start + self.layout.entries()[i].len()]
    }

    pub fn check_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout.as_ref() != other.layout.as_ref() {
            return Err(Error::LayoutMismatch {
                expected: self.layout.describe(),
                found: other.layout.describe(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_same_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(ParamVector {
            layout: Arc::clone(&self.layout),
            values,
        })
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_same_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ParamVector {
            layout: Arc::clone(&self.layout),
            values,
        })
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        ParamVector {
            layout: Arc::clone(&self.layout),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Squared Euclidean distance to `other`.
    pub fn squared_distance(&self, other: &ParamVector) -> Result<f64> {
        self.check_same_layout(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Write the checkpoint format: one header line with the layout, then one
    /// value per line. Values use the shortest decimal rendering that parses
    /// back to the same bits, so a write/read round trip is exact.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.layout.describe())?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<ParamVector> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::CheckpointFormat("empty checkpoint".into()))??;
        let layout = Arc::new(ParamLayout::parse_header(&header)?);
        let mut values = Vec::with_capacity(layout.total_len());
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: f64 = line.trim().parse().map_err(|_| {
                Error::CheckpointFormat(format!("bad value `{}` on line {}", line.trim(), i + 2))
            })?;
            values.push(v);
        }
        ParamVector::from_values(layout, values)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<ParamVector> {
        let file = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(file))
    }
}
