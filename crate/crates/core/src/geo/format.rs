//! Fleet, structure and RGB export files.
//!
//! ```text
//! #regionfl fleet v1 n=3 categories=2
//! 0	1.5	-2	0	3,0
//! ```
//! Columns are tab-separated: id, x, y, city, label_counts.

use std::path::Path;

use super::{Centroid, RegionalStructure, RgbRecord, VehicleProfile};
use crate::error::{Error, Result};
use crate::textio::{body, join, parse_field, parse_list, read_lines, write_text, Header};

pub fn write_fleet(path: &Path, fleet: &[VehicleProfile]) -> Result<()> {
    let m = fleet.first().map_or(0, |av| av.label_counts.len());
    let mut out = Header::render("fleet", 1, &[("n", fleet.len().to_string()), ("categories", m.to_string())]);
    out.push('\n');
    for av in fleet {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            av.id,
            av.coords[0],
            av.coords[1],
            av.city,
            join(&av.label_counts, ",")
        ));
    }
    write_text(path, &out)
}

pub fn read_fleet(path: &Path) -> Result<Vec<VehicleProfile>> {
    let lines = read_lines(path)?;
    let header = Header::parse(path, &lines, "fleet", 1)?;
    let n: usize = header.get("n")?;
    let m: usize = header.get("categories")?;
    let mut fleet = Vec::with_capacity(n);
    for (line, text) in body(&lines) {
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(path, line, format!("expected 5 columns, found {}", cols.len())));
        }
        let label_counts: Vec<u64> = parse_list(path, line, cols[4], ',')?;
        if label_counts.len() != m {
            return Err(Error::parse(
                path,
                line,
                format!("expected {m} label counts, found {}", label_counts.len()),
            ));
        }
        fleet.push(VehicleProfile {
            id: parse_field(path, line, cols[0], "id")?,
            coords: [
                parse_field(path, line, cols[1], "x")?,
                parse_field(path, line, cols[2], "y")?,
            ],
            city: parse_field(path, line, cols[3], "city")?,
            label_counts,
        });
    }
    if fleet.len() != n {
        return Err(Error::parse(
            path,
            lines.len(),
            format!("header declares {n} vehicles, file has {}", fleet.len()),
        ));
    }
    Ok(fleet)
}

/// `#regionfl structure v1 k=.. n=.. quantization_error=..` followed by one
/// line per region: index, centroid x, centroid y, centroid abundance,
/// members.
pub fn write_structure(path: &Path, s: &RegionalStructure) -> Result<()> {
    let n: usize = s.regions.iter().map(Vec::len).sum();
    let mut out = Header::render(
        "structure",
        1,
        &[
            ("k", s.k().to_string()),
            ("n", n.to_string()),
            ("quantization_error", s.quantization_error.to_string()),
        ],
    );
    out.push('\n');
    for (k, (members, c)) in s.regions.iter().zip(&s.centroids).enumerate() {
        out.push_str(&format!(
            "{k}\t{}\t{}\t{}\t{}\n",
            c.coords[0],
            c.coords[1],
            join(&c.abundance, ","),
            join(members, ",")
        ));
    }
    write_text(path, &out)
}

pub fn read_structure(path: &Path) -> Result<RegionalStructure> {
    let lines = read_lines(path)?;
    let header = Header::parse(path, &lines, "structure", 1)?;
    let k: usize = header.get("k")?;
    let n: usize = header.get("n")?;
    let quantization_error: f64 = header.get("quantization_error")?;
    let mut regions = Vec::with_capacity(k);
    let mut centroids = Vec::with_capacity(k);
    for (line, text) in body(&lines) {
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(path, line, format!("expected 5 columns, found {}", cols.len())));
        }
        let index: usize = parse_field(path, line, cols[0], "region index")?;
        if index != regions.len() {
            return Err(Error::parse(path, line, format!("expected region {}, found {index}", regions.len())));
        }
        centroids.push(Centroid {
            coords: [
                parse_field(path, line, cols[1], "centroid x")?,
                parse_field(path, line, cols[2], "centroid y")?,
            ],
            abundance: parse_list(path, line, cols[3], ',')?,
        });
        regions.push(parse_list(path, line, cols[4], ',')?);
    }
    if regions.len() != k {
        return Err(Error::parse(
            path,
            lines.len(),
            format!("header declares {k} regions, file has {}", regions.len()),
        ));
    }
    let s = RegionalStructure {
        regions,
        centroids,
        quantization_error,
        error_history: vec![quantization_error],
    };
    s.validate(n)?;
    Ok(s)
}

pub fn write_rgb(path: &Path, rows: &[RgbRecord]) -> Result<()> {
    let mut out = Header::render("rgb", 1, &[("n", rows.len().to_string())]);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.id, r.coords[0], r.coords[1], r.rgb[0], r.rgb[1], r.rgb[2]
        ));
    }
    write_text(path, &out)
}

pub fn read_rgb(path: &Path) -> Result<Vec<RgbRecord>> {
    let lines = read_lines(path)?;
    let header = Header::parse(path, &lines, "rgb", 1)?;
    let n: usize = header.get("n")?;
    let mut rows = Vec::with_capacity(n);
    for (line, text) in body(&lines) {
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::parse(path, line, format!("expected 6 columns, found {}", cols.len())));
        }
        rows.push(RgbRecord {
            id: parse_field(path, line, cols[0], "id")?,
            coords: [
                parse_field(path, line, cols[1], "x")?,
                parse_field(path, line, cols[2], "y")?,
            ],
            rgb: [
                parse_field(path, line, cols[3], "r")?,
                parse_field(path, line, cols[4], "g")?,
                parse_field(path, line, cols[5], "b")?,
            ],
        });
    }
    if rows.len() != n {
        return Err(Error::parse(path, lines.len(), format!("header declares {n} rows, file has {}", rows.len())));
    }
    Ok(rows)
}
