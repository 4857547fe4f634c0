//! Declarative run configuration shared by the command-line pipelines.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::composer::SifParams;
use crate::embedding::EmbeddingFormat;
use crate::error::{Error, Result};
use crate::metrics::Task;
use crate::relation::{DiffMode, SplitSpec};
use crate::svm::SvmParams;
use crate::synth::{DaSpec, DupSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: EmbeddingFormat,
    #[serde(default = "default_true")]
    pub lowercase_fallback: bool,
}

fn default_format() -> EmbeddingFormat {
    EmbeddingFormat::TextHeaderless
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComposerKind {
    Mean,
    Sif,
    Import,
}

impl std::str::FromStr for ComposerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(ComposerKind::Mean),
            "sif" => Ok(ComposerKind::Sif),
            "import" => Ok(ComposerKind::Import),
            other => Err(Error::InvalidParameter(format!(
                "unknown composer `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposerConfig {
    pub kind: ComposerKind,
    #[serde(flatten)]
    pub sif: SifParams,
}

impl Default for ComposerConfig {
    fn default() -> Self {
        ComposerConfig {
            kind: ComposerKind::Mean,
            sif: SifParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dup: DupSpec,
    pub da: DaSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub embedding: Option<EmbeddingConfig>,
    pub composer: ComposerConfig,
    /// Unset means the task default: absolute for dup, signed for da.
    pub diff_mode: Option<DiffMode>,
    pub split: SplitSpec,
    pub svm: SvmParams,
    pub output_dir: PathBuf,
    /// Root of externally prepared data; synthetic data is used when unset.
    pub data_dir: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    /// Label used for this system in rendered tables.
    pub model_name: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Dup,
            embedding: None,
            composer: ComposerConfig::default(),
            diff_mode: None,
            split: SplitSpec::default(),
            svm: SvmParams::default(),
            output_dir: PathBuf::from("out"),
            data_dir: None,
            synthetic: SyntheticConfig::default(),
            model_name: None,
        }
    }
}

impl RunConfig {
    pub fn diff_mode(&self) -> DiffMode {
        self.diff_mode.unwrap_or(match self.task {
            Task::Dup => DiffMode::Absolute,
            Task::Da => DiffMode::Signed,
        })
    }

    pub fn model_name(&self) -> String {
        if let Some(n) = &self.model_name {
            return n.clone();
        }
        if self.data_dir.is_none() {
            return "synthetic".to_owned();
        }
        let base = self
            .embedding
            .as_ref()
            .and_then(|e| e.path.file_stem())
            .map(|s| s.to_string_lossy().into_owned());
        match (self.composer.kind, base) {
            (ComposerKind::Mean, Some(b)) => format!("Average({b})"),
            (ComposerKind::Sif, Some(b)) => format!("WR({b})"),
            (ComposerKind::Import, _) => "imported vectors".to_owned(),
            (_, None) => "synthetic".to_owned(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.svm.validate()?;
        if self.composer.kind == ComposerKind::Sif {
            self.composer.sif.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_default_modes() {
        let mut c = RunConfig::default();
        assert_eq!(c.diff_mode(), DiffMode::Absolute);
        c.task = Task::Da;
        assert_eq!(c.diff_mode(), DiffMode::Signed);
        c.diff_mode = Some(DiffMode::Absolute);
        assert_eq!(c.diff_mode(), DiffMode::Absolute);
    }

    #[test]
    fn model_names() {
        let mut c = RunConfig::default();
        assert_eq!(c.model_name(), "synthetic");
        c.data_dir = Some(PathBuf::from("data"));
        c.composer.kind = ComposerKind::Import;
        assert_eq!(c.model_name(), "imported vectors");
        c.composer.kind = ComposerKind::Sif;
        c.embedding = Some(EmbeddingConfig {
            path: PathBuf::from("/x/glove.840B.300d.txt"),
            format: EmbeddingFormat::TextHeaderless,
            lowercase_fallback: true,
        });
        assert_eq!(c.model_name(), "WR(glove.840B.300d)");
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(
            r#"{"task":"da","split":{"seed":5},"composer":{"kind":"sif","a":0.01}}"#,
        )
        .unwrap();
        assert_eq!(c.split.seed, 5);
        assert_eq!(c.split.n_folds, 10);
        assert_eq!(c.composer.kind, ComposerKind::Sif);
        assert_eq!(c.composer.sif.a, 0.01);
        assert!(c.composer.sif.remove_pc);
    }
}
