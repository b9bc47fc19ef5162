//! Experiment configuration: one TOML file per run.
//!
//! ```toml
//! mode = "fedrav"
//! seed = 3
//!
//! [paths]
//! data_dir = "data"
//! out_dir = "out"
//!
//! [synth]
//! rho = 0.2
//!
//! [partition]
//! k_regions = 4
//!
//! [federation]
//! rounds = 60
//! [federation.local]
//! learning_rate = 0.05
//! ```
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::FederationConfig;
use crate::geo::PartitionConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Fedrav,
    Fedavg,
    Local,
    Gradcheck,
    Partition,
    Synth,
    ExportRgb,
}

impl Mode {
    pub fn is_training(self) -> bool {
        matches!(self, Mode::Fedrav | Mode::Fedavg | Mode::Local)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Fedrav => "fedrav",
            Mode::Fedavg => "fedavg",
            Mode::Local => "local",
            Mode::Gradcheck => "gradcheck",
            Mode::Partition => "partition",
            Mode::Synth => "synth",
            Mode::ExportRgb => "export-rgb",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory written by `synth` and read by every other data command.
    pub data_dir: Option<PathBuf>,
    /// Directory for structure, metrics, checkpoints and exports.
    pub out_dir: Option<PathBuf>,
    /// Structure file; defaults to `<out_dir>/structure.tsv`.
    pub structure: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub trials: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { trials: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    /// Label categories mapped to the red, green and blue channels.
    pub categories: [usize; 3],
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self { categories: [0, 1, 2] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub partition: PartitionConfig,
    pub federation: FederationConfig,
    pub gradcheck: GradCheckConfig,
    pub export: ExportConfig,
}

impl ExperimentConfig {
    pub fn from_toml(path: &Path, text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(1);
            Error::parse(path, line, e.message().to_string())
        })?;
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(path, &text)
    }

    /// Sets the run seed everywhere it is consumed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.federation.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.partition.validate()?;
        self.federation.validate()?;
        if self.gradcheck.trials == 0 {
            return Err(Error::config("gradcheck.trials must be positive"));
        }
        Ok(())
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.paths
            .data_dir
            .as_deref()
            .ok_or_else(|| Error::config("missing field `paths.data_dir`"))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.paths
            .out_dir
            .as_deref()
            .ok_or_else(|| Error::config("missing field `paths.out_dir`"))
    }

    pub fn structure_path(&self) -> Result<PathBuf> {
        match &self.paths.structure {
            Some(p) => Ok(p.clone()),
            None => Ok(self.out_dir()?.join("structure.tsv")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(Path::new("exp.toml"), text)
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn sections_and_seed_propagate() {
        let cfg = parse(
            "mode = \"local\"\nseed = 9\n[synth]\nrho = 0.5\n[federation]\nrounds = 3\n[federation.local]\nbatch_size = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Local);
        assert_eq!(cfg.synth.rho, 0.5);
        assert_eq!(cfg.federation.rounds, 3);
        assert_eq!(cfg.federation.local.batch_size, 4);
        assert_eq!((cfg.synth.seed, cfg.federation.seed), (9, 9));
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_line() {
        let err = parse("seed = 1\n[synth]\nbogus = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("exp.toml:3:"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn missing_path_names_the_field() {
        let cfg = parse("").unwrap();
        assert!(cfg.data_dir().unwrap_err().to_string().contains("paths.data_dir"));
        assert!(cfg.structure_path().unwrap_err().to_string().contains("paths.out_dir"));
        let cfg = parse("[paths]\nout_dir = \"o\"\n").unwrap();
        assert_eq!(cfg.structure_path().unwrap(), PathBuf::from("o/structure.tsv"));
    }

    #[test]
    fn mode_names() {
        for (text, mode) in [("export-rgb", Mode::ExportRgb), ("fedavg", Mode::Fedavg)] {
            let cfg = parse(&format!("mode = \"{text}\"")).unwrap();
            assert_eq!(cfg.mode, mode);
            assert_eq!(mode.to_string(), text);
        }
    }
}
