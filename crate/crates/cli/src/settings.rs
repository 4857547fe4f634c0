use std::path::{Path, PathBuf};

use clap::Args;
use docdiff::config::{ComposerKind, EmbeddingConfig};
use docdiff::svm::HingeLoss;
use docdiff::{DiffMode, EmbeddingFormat, RunConfig, Task};

use crate::error::{CliError, CliResult};

/// Flags accepted by every subcommand. Each one overrides the matching key
/// of the configuration file.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// TOML configuration file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; results do not depend on this
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Sets both the split seed and the solver shuffling seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, value_name = "dup|da")]
    pub task: Option<Task>,

    #[arg(long, global = true, value_name = "signed|absolute")]
    pub diff_mode: Option<DiffMode>,

    #[arg(long, global = true)]
    pub negative_ratio: Option<usize>,

    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,

    #[arg(long, global = true)]
    pub n_folds: Option<usize>,

    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    #[arg(long, global = true, value_name = "mean|sif|import")]
    pub composer: Option<ComposerKind>,

    /// Word embedding text file
    #[arg(long, global = true, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,

    #[arg(long, global = true, value_name = "text-with-header|text-headerless")]
    pub embedding_format: Option<EmbeddingFormat>,

    /// SIF smoothing constant
    #[arg(long = "sif-a", global = true)]
    pub sif_a: Option<f64>,

    /// Regularization constant
    #[arg(long = "c", global = true, value_name = "C")]
    pub c: Option<f64>,

    #[arg(long, global = true)]
    pub max_iter: Option<usize>,

    #[arg(long, global = true)]
    pub tol: Option<f64>,

    #[arg(long, global = true, value_name = "l1|squared")]
    pub loss: Option<HingeLoss>,

    /// Root of prepared datasets; synthetic data is generated when unset
    #[arg(long, global = true, env = "DOCDIFF_DATA_DIR", value_name = "DIR")]
    pub external_data: Option<PathBuf>,

    #[arg(long, global = true)]
    pub model_name: Option<String>,

    /// Repeat for more log output
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl Overrides {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.split.seed = s;
            cfg.svm.seed = s;
        }
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if let Some(m) = self.diff_mode {
            cfg.diff_mode = Some(m);
        }
        if let Some(r) = self.negative_ratio {
            cfg.split.negative_ratio = r;
        }
        if let Some(f) = self.train_fraction {
            cfg.split.train_fraction = f;
        }
        if let Some(k) = self.n_folds {
            cfg.split.n_folds = k;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(k) = self.composer {
            cfg.composer.kind = k;
        }
        if let Some(a) = self.sif_a {
            cfg.composer.sif.a = a;
        }
        if let Some(path) = &self.embeddings {
            match &mut cfg.embedding {
                Some(e) => e.path = path.clone(),
                None => {
                    cfg.embedding = Some(EmbeddingConfig {
                        path: path.clone(),
                        format: EmbeddingFormat::TextHeaderless,
                        lowercase_fallback: true,
                    })
                }
            }
        }
        if let (Some(fmt), Some(e)) = (self.embedding_format, &mut cfg.embedding) {
            e.format = fmt;
        }
        if let Some(c) = self.c {
            cfg.svm.c = c;
        }
        if let Some(m) = self.max_iter {
            cfg.svm.max_iter = m;
        }
        if let Some(t) = self.tol {
            cfg.svm.tol = t;
        }
        if let Some(l) = self.loss {
            cfg.svm.loss = l;
        }
        if let Some(d) = &self.external_data {
            cfg.data_dir = Some(d.clone());
        }
        if let Some(n) = &self.model_name {
            cfg.model_name = Some(n.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "task = \"da\"\n[split]\nseed = 3\nn_folds = 5\n[svm]\nc = 0.5\n",
        )
        .unwrap();
        let o = Overrides {
            config: Some(path),
            seed: Some(11),
            c: Some(2.0),
            ..Overrides::default()
        };
        let cfg = o.resolve().unwrap();
        assert_eq!(cfg.task, Task::Da);
        assert_eq!(cfg.split.seed, 11);
        assert_eq!(cfg.svm.seed, 11);
        assert_eq!(cfg.split.n_folds, 5);
        assert_eq!(cfg.svm.c, 2.0);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "tsak = \"dup\"\n").unwrap();
        let err = load_config(&path).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
