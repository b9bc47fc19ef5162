//! Dataset and model checkpoint files.
//!
//! Dataset: `#regionfl dataset v1 n=.. d=.. classes=.. n_train=..` then one
//! row per sample, `label,f1,..,fd`; the first `n_train` rows are the
//! training split. Model: `#regionfl model v1 shape=d,h,c n=..` then one
//! parameter per line.

use std::path::Path;

use super::{Dataset, ParamVector};
use crate::error::{Error, Result};
use crate::textio::{body, join, parse_field, read_lines, write_text, Header};

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = Header::render(
        "dataset",
        1,
        &[
            ("n", data.len().to_string()),
            ("d", data.dim().to_string()),
            ("classes", data.classes().to_string()),
            ("n_train", data.n_train().to_string()),
        ],
    );
    out.push('\n');
    for i in 0..data.len() {
        out.push_str(&data.label(i).to_string());
        for v in data.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let lines = read_lines(path)?;
    let header = Header::parse(path, &lines, "dataset", 1)?;
    let n: usize = header.get("n")?;
    let d: usize = header.get("d")?;
    let classes: usize = header.get("classes")?;
    let n_train: usize = header.get("n_train")?;
    let mut labels = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * d);
    for (line, text) in body(&lines) {
        let mut cols = text.split(',');
        let label: usize = parse_field(path, line, cols.next().unwrap_or(""), "label")?;
        if label >= classes {
            return Err(Error::parse(path, line, format!("label {label} out of range for {classes} classes")));
        }
        let before = features.len();
        for tok in cols {
            features.push(parse_field::<f64>(path, line, tok, "feature")?);
        }
        if features.len() - before != d {
            return Err(Error::parse(
                path,
                line,
                format!("expected {d} features, found {}", features.len() - before),
            ));
        }
        labels.push(label);
    }
    if labels.len() != n {
        return Err(Error::parse(
            path,
            lines.len(),
            format!("header declares {n} rows, file has {}", labels.len()),
        ));
    }
    Dataset::new(d, classes, features, labels, n_train).map_err(|e| Error::parse(path, 1, e.to_string()))
}

pub fn write_model(path: &Path, model: &ParamVector) -> Result<()> {
    let mut out = Header::render(
        "model",
        1,
        &[("shape", join(model.shape(), ",")), ("n", model.len().to_string())],
    );
    out.push('\n');
    for v in model.values() {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_model(path: &Path) -> Result<ParamVector> {
    let lines = read_lines(path)?;
    let header = Header::parse(path, &lines, "model", 1)?;
    let shape: Vec<usize> = header.get_list("shape")?;
    let n: usize = header.get("n")?;
    let values = body(&lines)
        .map(|(line, text)| parse_field::<f64>(path, line, text, "parameter"))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n {
        return Err(Error::parse(
            path,
            lines.len(),
            format!("header declares {n} parameters, file has {}", values.len()),
        ));
    }
    ParamVector::from_values(&shape, values).map_err(|e| Error::parse(path, 1, e.to_string()))
}
