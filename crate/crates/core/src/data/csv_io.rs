//! CSV datasets: one row per point, the label first, then the features.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

fn format_err<T>(detail: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        format: "CSV",
        detail: detail.into(),
    })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(File::open(path)?)
}

/// Parses CSV text. A first row containing any non-numeric cell is treated
/// as a header. Labels must be the integers `0..c` with no gaps.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let (features, labels) = read_labeled_rows(reader)?;
    let distinct: BTreeSet<i64> = labels.iter().copied().collect();
    let expected: BTreeSet<i64> = (0..distinct.len() as i64).collect();
    if distinct != expected {
        return format_err(format!("labels {distinct:?} are not the contiguous range 0..{}", distinct.len()));
    }
    Dataset::from_original(features, &labels)
}

/// Same layout as [`read_csv`] with any set of integer labels, for files
/// that hold only some classes of a dataset.
pub fn load_labeled_rows(path: impl AsRef<Path>) -> Result<(Tensor, Vec<i64>)> {
    read_labeled_rows(File::open(path)?)
}

pub fn read_labeled_rows<R: Read>(reader: R) -> Result<(Tensor, Vec<i64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let numeric = record.iter().all(|c| c.parse::<f64>().is_ok());
        if !numeric {
            if i == 0 {
                continue;
            }
            return format_err(format!("line {line}: non-numeric cell"));
        }
        if record.len() < 2 {
            return format_err(format!("line {line}: need a label and at least one feature"));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return format_err(format!("line {line}: {} cells, expected {w}", record.len()));
            }
            _ => {}
        }
        let label: i64 = record[0]
            .parse()
            .or_else(|_| format_err(format!("line {line}: label `{}` is not an integer", &record[0])))?;
        labels.push(label);
        for cell in record.iter().skip(1) {
            let v: f64 = cell.parse().expect("checked numeric");
            if !v.is_finite() {
                return format_err(format!("line {line}: non-finite feature"));
            }
            data.push(v);
        }
    }
    let Some(width) = width else {
        return format_err("no data rows");
    };
    Ok((Tensor::matrix(labels.len(), width - 1, data)?, labels))
}

/// Writes original labels and features with a `label,x0,..` header. Values
/// use the shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((0..dataset.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let originals = dataset.original_labels();
    for (r, label) in originals.iter().enumerate() {
        let mut row = vec![label.to_string()];
        row.extend(dataset.features().row(r).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, File::create(path)?)
}
