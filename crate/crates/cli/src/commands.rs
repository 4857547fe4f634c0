use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{ArgGroup, Args};
use docdiff::composer::{self, Document, DocumentVector};
use docdiff::config::ComposerKind;
use docdiff::io;
use docdiff::metrics::{self, ConfusionMatrix};
use docdiff::pipeline;
use docdiff::relation::{self, RelationInstance, RelationPair};
use docdiff::{synth, EvalReport, RunConfig, SvmModel, Task, TokenFrequency};
use serde::Serialize;
use serde_json::{json, Value};

use crate::data;
use crate::error::{CliError, CliResult};

fn out_path(cfg: &RunConfig, explicit: &Option<PathBuf>, default: &str) -> CliResult<PathBuf> {
    let path = explicit
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(default));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| docdiff::Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    Ok(path)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| {
        docdiff::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Provenance block shared by every report. `generated_at` is the only
/// field that changes between identical runs.
fn meta(cfg: &RunConfig, extra: Value) -> Value {
    json!({
        "config": cfg,
        "seeds": {"split": cfg.split.seed, "svm": cfg.svm.seed},
        "diff_mode": cfg.diff_mode(),
        "model_name": cfg.model_name(),
        "version": env!("CARGO_PKG_VERSION"),
        "data": extra,
        "generated_at": now_unix(),
    })
}

fn write_report(cfg: &RunConfig, report: &EvalReport, stem: &str) -> CliResult<()> {
    let json_path = out_path(cfg, &None, &format!("{stem}.json"))?;
    io::save_json(&json_path, report)?;
    let mut table = report.render_table(&cfg.model_name());
    if let Some(cm) = &report.confusion {
        table.push('\n');
        table.push_str(&cm.render());
    }
    let txt_path = json_path.with_extension("txt");
    write_text(&txt_path, &table)?;
    print!("{table}");
    println!("report: {}", json_path.display());
    Ok(())
}

pub fn run_dup(cfg: &RunConfig) -> CliResult<()> {
    let mut cfg = cfg.clone();
    cfg.task = Task::Dup;
    let data = data::dup_data(&cfg)?;
    let mut report = pipeline::run_dup(&data.subforums, &cfg.split, &cfg.svm, cfg.diff_mode())?;
    report.meta = meta(&cfg, data.provenance);
    write_report(&cfg, &report, "report-dup")
}

pub fn run_da(cfg: &RunConfig) -> CliResult<()> {
    let mut cfg = cfg.clone();
    cfg.task = Task::Da;
    let data = data::da_data(&cfg)?;
    let mut report = pipeline::run_da(
        &data.posts,
        &data.vectors,
        &cfg.split,
        &cfg.svm,
        cfg.diff_mode(),
    )?;
    report.meta = meta(&cfg, data.provenance);
    write_report(&cfg, &report, "report-da")
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Corpus JSON-lines: {"id","tokens"} or {"id","title","body"}
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Precomputed vectors, for the import composer
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Token probabilities (JSON) to use instead of counting the corpus
    #[arg(long, value_name = "FILE")]
    pub frequencies: Option<PathBuf>,
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn embed(cfg: &RunConfig, args: &EmbedArgs) -> CliResult<()> {
    let (vectors, manifest) = if cfg.composer.kind == ComposerKind::Import {
        let input = args
            .input
            .as_ref()
            .ok_or_else(|| CliError::Config("the import composer needs --input".into()))?;
        let vectors = composer::import_vectors(input)?;
        let dim = vectors.first().map_or(0, DocumentVector::dim);
        let manifest = json!({
            "composer": {"kind": "import"},
            "source": input,
            "documents": vectors.len(),
            "dim": dim,
        });
        (vectors, manifest)
    } else {
        let corpus = args
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::Config("embed needs --corpus".into()))?;
        let docs: Vec<Document> = composer::read_corpus(corpus)?;
        let (table, table_info) = data::load_table(cfg)?;
        let freqs = match &args.frequencies {
            Some(p) => Some(TokenFrequency::from_json(&io::load_json(p)?)?),
            None => None,
        };
        let c = data::compose(&docs, &table, cfg, freqs.as_ref())?;
        let mut manifest = c.manifest;
        manifest["embedding"] = table_info;
        manifest["documents"] = json!(c.vectors.len());
        manifest["source"] = json!(corpus);
        (c.vectors, manifest)
    };
    let path = out_path(cfg, &args.output, "vectors.jsonl")?;
    composer::export_vectors(&path, &vectors)?;
    let manifest_path = PathBuf::from(format!("{}.manifest.json", path.display()));
    io::save_json(&manifest_path, &manifest)?;
    println!("{} vectors -> {}", vectors.len(), path.display());
    Ok(())
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("links").required(true).args(["pairs", "posts"])))]
pub struct FeaturizeArgs {
    #[arg(long, value_name = "FILE")]
    pub vectors: PathBuf,
    /// Labelled pairs {"id1","id2","label"}
    #[arg(long, value_name = "FILE")]
    pub pairs: Option<PathBuf>,
    /// Thread posts {"id","thread","parents","labels"}; implies the da task
    #[arg(long, value_name = "FILE")]
    pub posts: Option<PathBuf>,
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn featurize(cfg: &RunConfig, args: &FeaturizeArgs) -> CliResult<()> {
    let mut cfg = cfg.clone();
    let pairs: Vec<RelationPair> = match (&args.pairs, &args.posts) {
        (Some(p), _) => relation::read_pairs(p)?,
        (None, Some(p)) => {
            cfg.task = Task::Da;
            relation::expand_multiparent(&relation::read_posts(p)?)?
        }
        (None, None) => unreachable!("clap requires one of --pairs/--posts"),
    };
    let vectors = composer::import_vectors(&args.vectors)?;
    let index = relation::vector_index(&vectors);
    let instances = relation::featurize(&pairs, &index, cfg.diff_mode())?;
    let path = out_path(&cfg, &args.output, "instances.jsonl")?;
    io::save_jsonl(&path, &instances)?;
    println!("{} instances -> {}", instances.len(), path.display());
    Ok(())
}

fn read_instances(path: &Path) -> CliResult<(Vec<Vec<f64>>, Vec<RelationInstance>)> {
    let instances: Vec<RelationInstance> = io::read_jsonl(path)?;
    if instances.is_empty() {
        return Err(docdiff::Error::Empty(format!("no instances in {}", path.display())).into());
    }
    let x = instances.iter().map(|i| i.features.clone()).collect();
    Ok((x, instances))
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub instances: PathBuf,
    /// Train a binary model with this label as the positive class
    #[arg(long, value_name = "LABEL")]
    pub positive: Option<String>,
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn train(cfg: &RunConfig, args: &TrainArgs) -> CliResult<()> {
    let (x, instances) = read_instances(&args.instances)?;
    let labels: Vec<&str> = instances.iter().map(|i| i.pair.label.as_str()).collect();
    let model = match &args.positive {
        Some(pos) => {
            let mut others: Vec<&str> = labels.iter().copied().filter(|l| l != pos).collect();
            others.sort_unstable();
            others.dedup();
            let negative = if others.len() == 1 { others[0] } else { "rest" };
            let is_pos: Vec<bool> = labels.iter().map(|l| l == pos).collect();
            docdiff::svm::train_binary_classes(&x, &is_pos, negative, pos, &cfg.svm)?
        }
        None => docdiff::svm::train_multiclass(&x, &labels, &cfg.svm)?,
    };
    for (k, s) in model.train_stats.iter().enumerate() {
        if !s.converged {
            log::warn!("separator {k} stopped at max_iter before reaching tol");
        }
    }
    let path = out_path(cfg, &args.output, "model.json")?;
    model.save(&path)?;
    println!(
        "{} classes, {} separators -> {}",
        model.classes.len(),
        model.weights.len(),
        path.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub instances: PathBuf,
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> CliResult<()> {
    let model = SvmModel::load(&args.model)?;
    let (x, instances) = read_instances(&args.instances)?;
    let truth: Vec<&str> = instances.iter().map(|i| i.pair.label.as_str()).collect();
    let predicted = x
        .iter()
        .map(|f| model.predict(f))
        .collect::<docdiff::Result<Vec<&str>>>()?;

    let mut report = EvalReport::new(if model.is_binary() {
        Task::Dup
    } else {
        Task::Da
    });
    report.micro_f1 = Some(metrics::micro_f1(&truth, &predicted)?);
    let confusion = ConfusionMatrix::build(&truth, &predicted, &model.classes)?;
    report.per_class = confusion.class_scores();
    report.confusion = Some(confusion);
    if model.is_binary() {
        let positive = &model.classes[1];
        let labels: Vec<bool> = truth.iter().map(|t| t == positive).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) && x.len() >= 2 {
            let distances = x
                .iter()
                .map(|f| model.decision(f).map(|d| d[0]))
                .collect::<docdiff::Result<Vec<f64>>>()?;
            report.auc = Some(metrics::roc_auc(&metrics::s_dup(&distances)?, &labels)?);
        } else {
            log::warn!("AUC needs both `{positive}` and other labels among the instances");
        }
    }
    report.meta = json!({
        "model": args.model,
        "instances": args.instances,
        "generated_at": now_unix(),
    });
    let path = out_path(cfg, &args.output, "evaluation.json")?;
    io::save_json(&path, &report)?;
    print!("{}", report.render_table(&cfg.model_name()));
    Ok(())
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("scorer").required(true).args(["model", "vectors"])))]
pub struct RankArgs {
    #[arg(long, value_name = "FILE")]
    pub instances: PathBuf,
    /// Score by SVM distance to the decision boundary
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Score by cosine similarity of these document vectors
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Ranked<'a> {
    id1: &'a str,
    id2: &'a str,
    label: &'a str,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_dup: Option<f64>,
}

pub fn rank(cfg: &RunConfig, args: &RankArgs) -> CliResult<()> {
    let (x, instances) = read_instances(&args.instances)?;
    let (scores, normalized) = if let Some(m) = &args.model {
        let model = SvmModel::load(m)?;
        if !model.is_binary() {
            return Err(CliError::Config("rank needs a binary model".into()));
        }
        let d = x
            .iter()
            .map(|f| model.decision(f).map(|d| d[0]))
            .collect::<docdiff::Result<Vec<f64>>>()?;
        let s = if d.len() >= 2 {
            Some(metrics::s_dup(&d)?)
        } else {
            None
        };
        (d, s)
    } else {
        let vectors = composer::import_vectors(args.vectors.as_ref().unwrap())?;
        let index = relation::vector_index(&vectors);
        let lookup = |id: &str| {
            index
                .get(id)
                .map(|v| v.values.as_slice())
                .ok_or_else(|| docdiff::Error::UnknownId(id.to_owned()))
        };
        let left = instances
            .iter()
            .map(|i| lookup(&i.pair.id1))
            .collect::<docdiff::Result<Vec<_>>>()?;
        let right = instances
            .iter()
            .map(|i| lookup(&i.pair.id2))
            .collect::<docdiff::Result<Vec<_>>>()?;
        (metrics::cosine_rank(&left, &right)?, None)
    };
    let mut rows: Vec<Ranked> = instances
        .iter()
        .enumerate()
        .map(|(k, i)| Ranked {
            id1: &i.pair.id1,
            id2: &i.pair.id2,
            label: &i.pair.label,
            score: scores[k],
            s_dup: normalized.as_ref().map(|s| s[k]),
        })
        .collect();
    rows.sort_by(|a, b| b.score.total_cmp(&a.score));
    let path = out_path(cfg, &args.output, "ranking.jsonl")?;
    io::save_jsonl(&path, &rows)?;
    println!("{} ranked pairs -> {}", rows.len(), path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Destination data root
    #[arg(value_name = "DIR")]
    pub dest: PathBuf,
}

/// Writes both synthetic datasets in the data-root layout.
pub fn generate(cfg: &RunConfig, args: &GenerateArgs) -> CliResult<()> {
    let seed = cfg.split.seed;
    for forum in synth::dup_corpus(&cfg.synthetic.dup, seed) {
        let dir = args.dest.join("dup").join(&forum.name);
        composer::export_vectors(
            out_path(cfg, &Some(dir.join("vectors.jsonl")), "")?,
            &forum.vectors,
        )?;
        io::save_jsonl(dir.join("duplicates.jsonl"), &forum.duplicates)?;
    }
    let da = synth::da_corpus(&cfg.synthetic.da, seed);
    let dir = args.dest.join("da");
    composer::export_vectors(
        out_path(cfg, &Some(dir.join("vectors.jsonl")), "")?,
        &da.vectors,
    )?;
    io::save_jsonl(dir.join("posts.jsonl"), &da.posts)?;
    println!("synthetic data -> {}", args.dest.display());
    Ok(())
}
