//! JSON configuration documents for each verb.
//!
//! Relative paths inside a document are resolved against the document's
//! directory, so a config and its banks can move together.

use std::fs;
use std::path::{Path, PathBuf};

use civd::data::{load_bank, BankFormat, EpisodeSpec, Manifest, SyntheticSpec};
use civd::pipeline::{Banks, HeadSpec};
use civd::render::{EpisodeRender, RenderOptions};
use civd::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Bank files by split; either a manifest or an explicit `novel` path is required.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankPaths {
    pub manifest: Option<PathBuf>,
    pub base: Option<PathBuf>,
    pub novel: Option<PathBuf>,
    pub validation: Option<PathBuf>,
}

/// Document read by `eval` and `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub banks: BankPaths,
    pub episodes: EpisodeSpec,
    /// Episodes drawn from the validation bank for grid and guided selection;
    /// defaults to `episodes`.
    #[serde(default)]
    pub validation_episodes: Option<EpisodeSpec>,
    pub head: HeadSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Document read by `gen`: a synthetic spec plus the output encoding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub synthetic: SyntheticSpec,
    pub format: BankFormat,
    pub output_dir: Option<PathBuf>,
}

/// Document read by `render2d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    /// A bank with 2-D features.
    pub bank: PathBuf,
    pub episode: EpisodeSpec,
    /// Which episode of the seeded stream to draw.
    #[serde(default)]
    pub episode_index: usize,
    #[serde(default)]
    pub render: EpisodeRender,
    #[serde(default)]
    pub raster: RenderOptions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Reads and parses a config document; unreadable files are config errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Resolves `p` against `dir` and requires it to exist; `key` names the field.
fn existing(dir: &Path, p: &Path, key: &str) -> Result<PathBuf> {
    let full = if p.is_relative() { dir.join(p) } else { p.to_path_buf() };
    if !full.is_file() {
        return Err(Error::Config(format!("{key}: file not found: {}", full.display())));
    }
    Ok(full)
}

pub fn resolve_output(dir: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        dir.join(p)
    } else {
        p.to_path_buf()
    }
}

impl BankPaths {
    /// Resolves every path against `dir`, expanding a manifest; explicit
    /// entries override the manifest's.
    pub fn resolve(&self, dir: &Path) -> Result<BankPaths> {
        let mut out = BankPaths::default();
        if let Some(m) = &self.manifest {
            let m = Manifest::load(existing(dir, m, "banks.manifest")?)?;
            out.base = m.splits.base;
            out.novel = Some(m.splits.novel);
            out.validation = m.splits.validation;
        }
        let pick = |own: &Option<PathBuf>, fallback: Option<PathBuf>, key: &str| -> Result<Option<PathBuf>> {
            match own {
                Some(p) => existing(dir, p, key).map(Some),
                None => fallback.map(|p| existing(Path::new(""), &p, key)).transpose(),
            }
        };
        Ok(BankPaths {
            manifest: None,
            base: pick(&self.base, out.base, "banks.base")?,
            novel: Some(
                pick(&self.novel, out.novel, "banks.novel")?
                    .ok_or_else(|| Error::Config("banks.novel: missing (give `novel` or `manifest`)".into()))?,
            ),
            validation: pick(&self.validation, out.validation, "banks.validation")?,
        })
    }

    /// Loads resolved banks.
    pub fn load(&self) -> Result<Banks> {
        let novel = self.novel.as_ref().expect("resolved paths always carry a novel bank");
        Ok(Banks {
            base: self.base.as_ref().map(load_bank).transpose()?,
            novel: load_bank(novel)?,
            validation: self.validation.as_ref().map(load_bank).transpose()?,
        })
    }
}

impl RunConfig {
    /// Parses the document and checks that every referenced bank exists.
    pub fn load(path: &Path) -> Result<(RunConfig, BankPaths)> {
        let cfg: RunConfig = read_json(path)?;
        let banks = cfg.banks.resolve(&base_dir(path))?;
        Ok((cfg, banks))
    }

    pub fn validation_spec(&self) -> EpisodeSpec {
        self.validation_episodes.unwrap_or(self.episodes)
    }
}

impl RenderConfig {
    pub fn load(path: &Path) -> Result<RenderConfig> {
        let mut cfg: RenderConfig = read_json(path)?;
        cfg.bank = existing(&base_dir(path), &cfg.bank, "bank")?;
        Ok(cfg)
    }
}

/// Output directory precedence: flag, then `CIVD_OUT_DIR`, then the config's
/// `output_dir` (relative to the config file), then the working directory.
pub fn output_dir(flag: Option<&Path>, config_path: Option<&Path>, configured: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os("CIVD_OUT_DIR").filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    match (configured, config_path) {
        (Some(p), Some(c)) => resolve_output(&base_dir(c), p),
        (Some(p), None) => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
