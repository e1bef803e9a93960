//! Experiment configuration files (TOML).
//!
//! ```toml
//! experiment = "artificial_low_resource"
//! output_dir = "runs/artificial"
//! seed = 1
//! repetitions = 3
//! sizes = [100, 232, 541]
//! bins = [60, 66, 72, 78, 85, 89]
//!
//! [encoder]
//! num_layers = 3
//!
//! [[treebanks]]
//! name = "id"
//! train = "id_gsd-ud-train.conllu"
//! dev = "id_gsd-ud-dev.conllu"
//! test = "id_gsd-ud-test.conllu"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! A treebank may instead be generated by the toy grammar:
//! `synthetic = { language = 3, train = 80, dev = 20, test = 40 }`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::neural::{EncoderConfig, TrainConfig};
use crate::parser::{TagMode, DEFAULT_AUX_WEIGHT};
use crate::tagger::{BinSchedule, CaptureOptions, DEFAULT_WINDOW};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RealLowResource,
    ArtificialLowResource,
    Augmented,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::RealLowResource => "real_low_resource",
            ExperimentKind::ArtificialLowResource => "artificial_low_resource",
            ExperimentKind::Augmented => "augmented",
        })
    }
}

/// Parser modes by name, as written in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    None,
    Pred,
    Gold,
    Multi,
}

impl ModeName {
    pub const ALL: [ModeName; 4] = [ModeName::None, ModeName::Pred, ModeName::Gold, ModeName::Multi];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeName::None => "none",
            ModeName::Pred => "pred",
            ModeName::Gold => "gold",
            ModeName::Multi => "multi",
        }
    }

    /// The full mode; `tagger` is the checkpoint behind predicted tags.
    pub fn mode(self, tagger: &Path, aux_weight: f64) -> TagMode {
        match self {
            ModeName::None => TagMode::None,
            ModeName::Pred => TagMode::Predicted {
                checkpoint: tagger.to_path_buf(),
            },
            ModeName::Gold => TagMode::Gold,
            ModeName::Multi => TagMode::Multitask { aux_weight },
        }
    }
}

impl std::str::FromStr for ModeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModeName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown parser mode `{}` (none, pred, gold, multi)", s)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub language: u64,
    pub train: usize,
    #[serde(default)]
    pub dev: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreebankSource {
    pub name: String,
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSource>,
}

impl TreebankSource {
    /// Files that must exist, with their roles.
    pub fn files(&self) -> Vec<(&'static str, &Path)> {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
            .into_iter()
            .filter_map(|(role, p)| p.as_deref().map(|p| (role, p)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Experiment id written to every record; defaults to the kind.
    #[serde(default)]
    pub name: Option<String>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Sample sizes (artificial) or augmentation levels (augmented).
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub bins: Option<Vec<f64>>,
    #[serde(default = "default_window")]
    pub window: f64,
    /// Parser modes of the real low-resource experiment.
    #[serde(default = "default_modes")]
    pub modes: Vec<ModeName>,
    #[serde(default = "default_aux_weight")]
    pub aux_weight: f64,
    /// Tag parser training data by cross-validation instead of with the
    /// tagger trained on it.
    #[serde(default)]
    pub jackknife_folds: Option<usize>,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub capture: CaptureOptions,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub treebanks: Vec<TreebankSource>,
}

fn default_repetitions() -> usize {
    3
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

fn default_modes() -> Vec<ModeName> {
    ModeName::ALL.to_vec()
}

fn default_aux_weight() -> f64 {
    DEFAULT_AUX_WEIGHT
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config and resolve its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for tb in &mut self.treebanks {
            for p in [&mut tb.train, &mut tb.dev, &mut tb.test].into_iter().flatten() {
                fix(p);
            }
        }
    }

    pub fn id(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.to_string())
    }

    /// Configured sizes, or the defaults of the experiment kind.
    pub fn sizes(&self) -> Vec<usize> {
        match (&self.sizes, self.experiment) {
            (Some(s), _) => s.clone(),
            (None, ExperimentKind::ArtificialLowResource) => vec![100, 232, 541],
            (None, ExperimentKind::Augmented) => vec![10, 25, 50],
            (None, ExperimentKind::RealLowResource) => Vec::new(),
        }
    }

    /// Grid levels: the sizes, with the gold-only level 0 added for
    /// augmentation.
    pub fn levels(&self) -> Vec<usize> {
        let mut levels: BTreeSet<usize> = self.sizes().into_iter().collect();
        if self.experiment == ExperimentKind::Augmented {
            levels.insert(0);
        }
        levels.into_iter().collect()
    }

    pub fn schedule(&self) -> Result<BinSchedule> {
        let targets = match (&self.bins, self.experiment) {
            (Some(b), _) => b.clone(),
            (None, ExperimentKind::Augmented) => vec![41.0, 44.0, 48.0, 51.0],
            (None, _) => vec![60.0, 66.0, 72.0, 78.0, 85.0, 89.0],
        };
        BinSchedule::new(targets, self.window)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if self.treebanks.is_empty() {
            return bad("no treebanks configured".into());
        }
        let mut names = BTreeSet::new();
        for tb in &self.treebanks {
            if tb.name.is_empty() || !tb.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return bad(format!("treebank name `{}` must be non-empty ASCII letters, digits, `-`, `_` or `.`", tb.name));
            }
            if !names.insert(&tb.name) {
                return bad(format!("treebank `{}` listed twice", tb.name));
            }
            match (&tb.synthetic, &tb.train, &tb.test) {
                (Some(_), None, None) if tb.dev.is_none() => {}
                (Some(_), _, _) => return bad(format!("treebank `{}` mixes files and a synthetic source", tb.name)),
                (None, Some(_), Some(_)) => {}
                (None, _, _) => return bad(format!("treebank `{}` needs train and test files", tb.name)),
            }
        }
        match self.experiment {
            ExperimentKind::RealLowResource => {
                if self.modes.is_empty() {
                    return bad("no parser modes configured".into());
                }
            }
            _ => {
                if self.sizes().is_empty() {
                    return bad(format!("sizes must be non-empty for {}", self.experiment));
                }
                if self.experiment == ExperimentKind::ArtificialLowResource && self.sizes().iter().any(|&n| n < 2) {
                    return bad("sample sizes must be at least 2".into());
                }
                self.schedule()?;
            }
        }
        if let Some(k) = self.jackknife_folds {
            if k < 2 {
                return bad("jackknife_folds must be at least 2".into());
            }
        }
        self.encoder.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
experiment = "artificial_low_resource"
output_dir = "out"
seed = 4

[[treebanks]]
name = "toy"
synthetic = { language = 1, train = 50, test = 10 }
"#;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_toml(MINI).unwrap();
        assert_eq!(c.repetitions, 3);
        assert_eq!(c.sizes(), vec![100, 232, 541]);
        assert_eq!(c.schedule().unwrap().targets(), &[60.0, 66.0, 72.0, 78.0, 85.0, 89.0]);
        assert_eq!(c.window, 0.25);
        assert_eq!(c.id(), "artificial_low_resource");
        let aug = ExperimentConfig::from_toml(&MINI.replace("artificial_low_resource", "augmented")).unwrap();
        assert_eq!(aug.levels(), vec![0, 10, 25, 50]);
        assert_eq!(aug.schedule().unwrap().targets(), &[41.0, 44.0, 48.0, 51.0]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml(&MINI.replace("seed = 4", "repetitions = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&MINI.replace("seed = 4", "sizes = []")).is_err());
        assert!(ExperimentConfig::from_toml(&MINI.replace("seed = 4", "bins = [70, 60]")).is_err());
        assert!(ExperimentConfig::from_toml(&MINI.replace("seed = 4", "colour = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&MINI.replace("name = \"toy\"", "name = \"a/b\"")).is_err());
        let files = MINI.replace("synthetic = { language = 1, train = 50, test = 10 }", "train = \"a.conllu\"");
        assert!(ExperimentConfig::from_toml(&files).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let text = MINI.replace(
            "synthetic = { language = 1, train = 50, test = 10 }",
            "train = \"a.conllu\"\ntest = \"/abs/t.conllu\"",
        );
        let mut c = ExperimentConfig::from_toml(&text).unwrap();
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(c.output_dir, PathBuf::from("/cfg/out"));
        assert_eq!(c.treebanks[0].train.as_deref(), Some(Path::new("/cfg/a.conllu")));
        assert_eq!(c.treebanks[0].test.as_deref(), Some(Path::new("/abs/t.conllu")));
    }

    #[test]
    fn mode_names() {
        assert_eq!("multi".parse::<ModeName>().unwrap(), ModeName::Multi);
        assert!("both".parse::<ModeName>().is_err());
        assert_eq!(ModeName::Pred.mode(Path::new("t.ckpt"), 1.0).name(), "pred");
    }
}
