//! On-disk layout of a generated benchmark.
//!
//! ```text
//! <dir>/manifest.toml        generating config plus file names
//! <dir>/fleet.tsv            fleet file
//! <dir>/prototypes.txt       class prototypes
//! <dir>/datasets/av_0000.csv one dataset file per vehicle
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SynthConfig, SynthOutput};
use crate::error::{Error, Result};
use crate::geo::{read_fleet, write_fleet};
use crate::model::{read_dataset, write_dataset};
use crate::textio::{body, join, parse_list, read_lines, write_text, Header};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    seed: u64,
    fleet: String,
    prototypes: String,
    datasets: Vec<String>,
    config: SynthConfig,
}

pub fn dataset_file(id: usize) -> String {
    format!("datasets/av_{id:04}.csv")
}

pub fn save(out: &SynthOutput, dir: &Path) -> Result<()> {
    let manifest = Manifest {
        format: "regionfl-synth".into(),
        version: 1,
        seed: out.config.seed,
        fleet: "fleet.tsv".into(),
        prototypes: "prototypes.txt".into(),
        datasets: (0..out.datasets.len()).map(dataset_file).collect(),
        config: out.config.clone(),
    };
    write_fleet(&dir.join(&manifest.fleet), &out.fleet)?;
    for (name, data) in manifest.datasets.iter().zip(&out.datasets) {
        write_dataset(&dir.join(name), data)?;
    }
    let classes = out.class_prototypes.len();
    let d = out.class_prototypes.first().map_or(0, Vec::len);
    let mut text = Header::render("prototypes", 1, &[("classes", classes.to_string()), ("d", d.to_string())]);
    text.push('\n');
    for row in &out.class_prototypes {
        text.push_str(&join(row, ","));
        text.push('\n');
    }
    write_text(&dir.join(&manifest.prototypes), &text)?;
    let toml = toml::to_string(&manifest).map_err(|e| Error::config(format!("cannot encode manifest: {e}")))?;
    write_text(&dir.join(MANIFEST_FILE), &toml)
}

pub fn load(dir: &Path) -> Result<SynthOutput> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map_or(1, |s| text[..s.start].matches('\n').count() + 1);
        Error::parse(&path, line, e.message().to_string())
    })?;
    if manifest.format != "regionfl-synth" || manifest.version != 1 {
        return Err(Error::parse(&path, 1, "not a version 1 synthetic benchmark manifest"));
    }
    let mut config = manifest.config;
    config.seed = manifest.seed;
    let fleet = read_fleet(&dir.join(&manifest.fleet))?;
    let datasets = manifest
        .datasets
        .iter()
        .map(|name| read_dataset(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    if datasets.len() != fleet.len() {
        return Err(Error::parse(
            &path,
            1,
            format!("{} datasets for {} vehicles", datasets.len(), fleet.len()),
        ));
    }

    let proto_path = dir.join(&manifest.prototypes);
    let lines = read_lines(&proto_path)?;
    let header = Header::parse(&proto_path, &lines, "prototypes", 1)?;
    let classes: usize = header.get("classes")?;
    let d: usize = header.get("d")?;
    let class_prototypes = body(&lines)
        .map(|(line, text)| {
            let row: Vec<f64> = parse_list(&proto_path, line, text, ',')?;
            if row.len() != d {
                return Err(Error::parse(&proto_path, line, format!("expected {d} values")));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    if class_prototypes.len() != classes {
        return Err(Error::parse(
            &proto_path,
            lines.len(),
            format!("header declares {classes} prototypes, file has {}", class_prototypes.len()),
        ));
    }
    Ok(SynthOutput {
        config,
        fleet,
        datasets,
        class_prototypes,
    })
}
