//! Loading task data from a prepared directory or the synthetic generators.
//!
//! Layout under the data root:
//!
//! ```text
//! dup/<subforum>/duplicates.jsonl
//! dup/<subforum>/vectors.jsonl   (composer = import)
//! dup/<subforum>/corpus.jsonl    (composer = mean | sif)
//! da/posts.jsonl
//! da/vectors.jsonl | da/corpus.jsonl
//! ```

use std::path::{Path, PathBuf};

use docdiff::composer::{self, CoverageStats, Document, DocumentVector};
use docdiff::config::ComposerKind;
use docdiff::pipeline::SubforumData;
use docdiff::relation::{self, ThreadPost};
use docdiff::{synth, EmbeddingTable, RunConfig, TokenFrequency};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub struct Composed {
    pub vectors: Vec<DocumentVector>,
    pub manifest: Value,
}

pub fn load_table(cfg: &RunConfig) -> CliResult<(EmbeddingTable, Value)> {
    let emb = cfg.embedding.as_ref().ok_or_else(|| {
        CliError::Config(format!(
            "composer `{:?}` needs an embedding file (--embeddings)",
            cfg.composer.kind
        ))
    })?;
    let (mut table, report) = EmbeddingTable::load(&emb.path, emb.format)?;
    table.set_lowercase_fallback(emb.lowercase_fallback);
    log::info!(
        "loaded {} rows of dim {} from {}",
        table.len(),
        table.dim(),
        emb.path.display()
    );
    let info = json!({
        "path": emb.path,
        "format": emb.format,
        "rows": report.rows,
        "duplicates_skipped": report.duplicates_skipped,
    });
    Ok((table, info))
}

fn coverage(stats: &CoverageStats) -> Value {
    json!({
        "documents": stats.documents,
        "tokens": stats.tokens,
        "oov_tokens": stats.oov_tokens,
        "oov_rate": stats.oov_rate(),
        "degenerate_documents": stats.degenerate_documents,
    })
}

/// Composes one batch. SIF frequencies and the principal component both come
/// from this batch.
pub fn compose(
    docs: &[Document],
    table: &EmbeddingTable,
    cfg: &RunConfig,
    freqs: Option<&TokenFrequency>,
) -> CliResult<Composed> {
    match cfg.composer.kind {
        ComposerKind::Mean => {
            let (vectors, stats) = composer::compose_mean_batch(docs, table);
            Ok(Composed {
                vectors,
                manifest: json!({
                    "composer": {"kind": "mean"},
                    "dim": table.dim(),
                    "coverage": coverage(&stats),
                }),
            })
        }
        ComposerKind::Sif => {
            let owned;
            let freqs = match freqs {
                Some(f) => f,
                None => {
                    let tokens: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
                    owned = TokenFrequency::estimate(&tokens)?;
                    &owned
                }
            };
            let out = composer::compose_sif_batch(docs, table, freqs, &cfg.composer.sif)?;
            let pc_hash = out
                .principal_component
                .as_deref()
                .map(composer::vector_hash);
            Ok(Composed {
                vectors: out.vectors,
                manifest: json!({
                    "composer": {
                        "kind": "sif",
                        "a": cfg.composer.sif.a,
                        "remove_pc": cfg.composer.sif.remove_pc,
                        "pc_hash": pc_hash,
                        "pc_iterations": out.pc_iterations,
                        "pc_converged": out.pc_converged,
                    },
                    "dim": table.dim(),
                    "coverage": coverage(&out.stats),
                }),
            })
        }
        ComposerKind::Import => Err(CliError::Config(
            "the import composer reads vectors and does not compose".into(),
        )),
    }
}

fn require(path: PathBuf) -> CliResult<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(docdiff::Error::Io {
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            path,
        }
        .into())
    }
}

/// Vectors for the documents stored in `dir`, imported or composed
/// depending on the configured composer.
fn vectors_in(
    dir: &Path,
    cfg: &RunConfig,
    table: Option<&EmbeddingTable>,
) -> CliResult<(Vec<DocumentVector>, Value)> {
    match (cfg.composer.kind, table) {
        (ComposerKind::Import, _) => {
            let vectors = composer::import_vectors(require(dir.join("vectors.jsonl"))?)?;
            let dim = vectors.first().map_or(0, |v| v.dim());
            Ok((vectors, json!({"composer": {"kind": "import"}, "dim": dim})))
        }
        (_, Some(table)) => {
            let docs = composer::read_corpus(require(dir.join("corpus.jsonl"))?)?;
            let c = compose(&docs, table, cfg, None)?;
            Ok((c.vectors, c.manifest))
        }
        (_, None) => unreachable!("table is loaded for composing runs"),
    }
}

fn maybe_table(cfg: &RunConfig) -> CliResult<(Option<EmbeddingTable>, Value)> {
    if cfg.composer.kind == ComposerKind::Import {
        Ok((None, Value::Null))
    } else {
        let (t, info) = load_table(cfg)?;
        Ok((Some(t), info))
    }
}

pub struct DupData {
    pub subforums: Vec<SubforumData>,
    pub provenance: Value,
}

pub fn dup_data(cfg: &RunConfig) -> CliResult<DupData> {
    let Some(root) = &cfg.data_dir else {
        let seed = cfg.split.seed;
        let subforums = synth::dup_corpus(&cfg.synthetic.dup, seed)
            .into_iter()
            .map(|f| SubforumData {
                name: f.name,
                vectors: f.vectors,
                duplicates: f.duplicates,
            })
            .collect();
        return Ok(DupData {
            subforums,
            provenance: json!({"source": "synthetic", "generator_seed": seed}),
        });
    };

    let base = require(root.join("dup"))?;
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&base)
        .map_err(|e| docdiff::Error::Io {
            path: base.clone(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(docdiff::Error::Empty(format!(
            "no subforum directories in {}",
            base.display()
        ))
        .into());
    }

    let (table, table_info) = maybe_table(cfg)?;
    let mut subforums = Vec::with_capacity(dirs.len());
    let mut composition = serde_json::Map::new();
    for dir in &dirs {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let duplicates = relation::read_pairs(require(dir.join("duplicates.jsonl"))?)?;
        let (vectors, manifest) = vectors_in(dir, cfg, table.as_ref())?;
        composition.insert(name.clone(), manifest);
        subforums.push(SubforumData {
            name,
            vectors,
            duplicates,
        });
    }
    Ok(DupData {
        subforums,
        provenance: json!({
            "source": root,
            "embedding": table_info,
            "composition": composition,
        }),
    })
}

pub struct DaData {
    pub posts: Vec<ThreadPost>,
    pub vectors: Vec<DocumentVector>,
    pub provenance: Value,
}

pub fn da_data(cfg: &RunConfig) -> CliResult<DaData> {
    let Some(root) = &cfg.data_dir else {
        let seed = cfg.split.seed;
        let corpus = synth::da_corpus(&cfg.synthetic.da, seed);
        return Ok(DaData {
            posts: corpus.posts,
            vectors: corpus.vectors,
            provenance: json!({"source": "synthetic", "generator_seed": seed}),
        });
    };
    let dir = require(root.join("da"))?;
    let posts = relation::read_posts(require(dir.join("posts.jsonl"))?)?;
    let (table, table_info) = maybe_table(cfg)?;
    let (vectors, manifest) = vectors_in(&dir, cfg, table.as_ref())?;
    Ok(DaData {
        posts,
        vectors,
        provenance: json!({
            "source": root,
            "embedding": table_info,
            "composition": manifest,
        }),
    })
}
