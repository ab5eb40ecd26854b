//! Plain CSV ingestion: one example per row, label first, features after.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};

/// Load `label,f1,f2,...` rows. Every row must have the same width. When
/// `max_value` is given, features are divided by it to land in `[0, 1]`.
/// Format problems are reported with their 1-based row number.
pub fn load_csv(path: &Path, classes: usize, max_value: Option<f64>) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    parse_csv(reader, classes, max_value)
}

fn parse_csv<R: BufRead>(
    reader: R,
    classes: usize,
    max_value: Option<f64>,
) -> Result<LabeledDataset> {
    if let Some(max) = max_value {
        if !(max > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "csv max value must be positive, got {max}"
            )));
        }
    }
    let mut width: Option<usize> = None;
    let mut labels = Vec::new();
    let mut flat = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::CsvFormat {
                row,
                reason: "need a label and at least one feature".into(),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::CsvFormat {
                    row,
                    reason: format!("expected {w} fields, found {}", fields.len()),
                });
            }
            _ => {}
        }
        let label: usize = fields[0].parse().map_err(|_| Error::CsvFormat {
            row,
            reason: format!("non-numeric label `{}`", fields[0]),
        })?;
        if label >= classes {
            return Err(Error::CsvFormat {
                row,
                reason: format!("label {label} out of range for {classes} classes"),
            });
        }
        labels.push(label);
        for (col, field) in fields[1..].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::CsvFormat {
                row,
                reason: format!("non-numeric field `{field}` in column {}", col + 2),
            })?;
            flat.push(match max_value {
                Some(max) => v / max,
                None => v,
            });
        }
    }
    let Some(width) = width else {
        return Err(Error::Empty { what: "csv dataset" });
    };
    let features = Array2::from_shape_vec((labels.len(), width - 1), flat)
        .expect("row width enforced above");
    LabeledDataset::new(features, labels, classes)
}

/// Write a dataset in the same format `load_csv` reads. Feature values use
/// the shortest decimal rendering that parses back to the same bits, so a
/// write/read round trip is exact.
pub fn save_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for (row, &label) in dataset.labels().iter().enumerate() {
        write!(w, "{label}")?;
        for j in 0..dataset.feature_dim() {
            write!(w, ",{}", dataset.features()[[row, j]])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
