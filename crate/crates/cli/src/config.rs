//! TOML run configuration and how it merges with flags and the environment.
//!
//! ```toml
//! data_dir = "data/woz"
//! corpus = "woz"
//!
//! [train]
//! learning_rate = 0.001
//! hidden_per_direction = 200
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use ctxdst::corpus::{load_multiwoz_dataset, load_woz_dataset, Dataset};
use ctxdst::trainer::TrainConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    /// WoZ 2.0 directory (woz_{train,validate,test}_en.json).
    #[default]
    Woz,
    /// MultiWoZ 2.0 data.json, restaurant-only dialogues.
    Multiwoz,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub corpus: Option<CorpusKind>,
    pub output_dir: Option<PathBuf>,
    pub train: TrainConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `flag_or_env` already carries clap's flag-over-`DST_DATA_DIR` choice;
    /// the config file only fills in when both are absent.
    pub fn data_dir(&self, flag_or_env: Option<&Path>) -> Result<PathBuf> {
        match flag_or_env.map(Path::to_path_buf).or_else(|| self.data_dir.clone()) {
            Some(dir) if dir.exists() => Ok(dir),
            Some(dir) => bail!("data directory {} does not exist", dir.display()),
            None => bail!("no data directory: pass --data-dir, set DST_DATA_DIR or set data_dir in the config"),
        }
    }

    pub fn corpus(&self, flag: Option<CorpusKind>) -> CorpusKind {
        flag.or(self.corpus).unwrap_or_default()
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf).or_else(|| self.output_dir.clone())
    }
}

pub fn load_dataset(kind: CorpusKind, dir: &Path) -> Result<Dataset> {
    let ds = match kind {
        CorpusKind::Woz => load_woz_dataset(dir),
        CorpusKind::Multiwoz => load_multiwoz_dataset(dir),
    };
    ds.with_context(|| format!("loading {kind:?} data from {}", dir.display()))
}
