//! End-to-end experiment protocols over in-memory vectors.
//!
//! Duplicate detection: per subforum, sample a train/test split with
//! negatives, train a binary SVM on absolute offsets, rank test pairs by
//! normalized decision distance and score by ROC AUC. Dialogue acts: expand
//! post links, assign folds, train one-vs-rest per fold and pool the
//! predictions into micro-F1, per-class scores and a confusion matrix.
//!
//! Independent units (subforums, folds) run on the current rayon pool and
//! are collected in input order, so results do not depend on worker count.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde_json::json;

use crate::composer::DocumentVector;
use crate::error::{Error, Result};
use crate::metrics::{self, ConfusionMatrix, EvalReport, GroupResult, Task};
use crate::relation::{
    self, build_dup_dataset, featurize, kfold_assign, AllPairs, DiffMode, RelationInstance,
    RelationPair, SplitSpec, ThreadPost, DUP_LABEL, NONDUP_LABEL,
};
use crate::svm::{self, SvmModel, SvmParams};

/// Vectors and labelled duplicates of one subforum.
#[derive(Clone, Debug, PartialEq)]
pub struct SubforumData {
    pub name: String,
    pub vectors: Vec<DocumentVector>,
    pub duplicates: Vec<RelationPair>,
}

/// Scores of one subforum's test set.
#[derive(Clone, Debug, PartialEq)]
pub struct DupScores {
    pub labels: Vec<bool>,
    pub distances: Vec<f64>,
    pub s_dup: Vec<f64>,
    pub cosine: Vec<f64>,
}

struct DupOutcome {
    group: GroupResult,
    scores: Option<DupScores>,
}

/// Runs the duplicate-detection protocol on one subforum.
pub fn evaluate_subforum(
    data: &SubforumData,
    split: &SplitSpec,
    svm_params: &SvmParams,
    mode: DiffMode,
) -> Result<(GroupResult, Option<DupScores>)> {
    let o = dup_outcome(data, split, svm_params, mode)?;
    Ok((o.group, o.scores))
}

fn skipped(name: &str, note: String) -> DupOutcome {
    log::warn!("subforum `{name}` skipped: {note}");
    DupOutcome {
        group: GroupResult {
            name: name.to_owned(),
            auc: None,
            cosine_auc: None,
            micro_f1: None,
            instances: 0,
            notes: vec![note],
            dataset: None,
        },
        scores: None,
    }
}

fn dup_outcome(
    data: &SubforumData,
    split: &SplitSpec,
    svm_params: &SvmParams,
    mode: DiffMode,
) -> Result<DupOutcome> {
    if data.duplicates.is_empty() {
        return Ok(skipped(&data.name, "no duplicate pairs".into()));
    }
    let ids: Vec<String> = data.vectors.iter().map(|v| v.id.clone()).collect();
    let dataset = build_dup_dataset(&data.duplicates, &AllPairs::new(&ids), split)?;
    let manifest = serde_json::to_value(&dataset.manifest)?;

    let index = relation::vector_index(&data.vectors);
    let train = featurize(&dataset.train, &index, mode)?;
    let test = featurize(&dataset.test, &index, mode)?;
    let has_both = |set: &[RelationInstance]| {
        set.iter().any(|i| i.pair.label == DUP_LABEL)
            && set.iter().any(|i| i.pair.label != DUP_LABEL)
    };
    if !has_both(&train) || !has_both(&test) {
        let mut out = skipped(
            &data.name,
            "train or test split lacks duplicates or non-duplicates".into(),
        );
        out.group.dataset = Some(manifest);
        return Ok(out);
    }

    let x: Vec<Vec<f64>> = train.iter().map(|i| i.features.clone()).collect();
    let is_dup: Vec<bool> = train.iter().map(|i| i.pair.label == DUP_LABEL).collect();
    let model = svm::train_binary_classes(&x, &is_dup, NONDUP_LABEL, DUP_LABEL, svm_params)?;

    let labels: Vec<bool> = test.iter().map(|i| i.pair.label == DUP_LABEL).collect();
    let distances = test
        .iter()
        .map(|i| model.decision(&i.features).map(|s| s[0]))
        .collect::<Result<Vec<f64>>>()?;
    let s_dup = metrics::s_dup(&distances)?;
    let auc = metrics::roc_auc(&s_dup, &labels)?;

    let left: Vec<&[f64]> = dataset
        .test
        .iter()
        .map(|p| index[&p.id1].values.as_slice())
        .collect();
    let right: Vec<&[f64]> = dataset
        .test
        .iter()
        .map(|p| index[&p.id2].values.as_slice())
        .collect();
    let cosine = metrics::cosine_rank(&left, &right)?;
    let cosine_auc = metrics::roc_auc(&cosine, &labels)?;

    let mut notes = Vec::new();
    if !model.train_stats[0].converged {
        notes.push(format!(
            "solver stopped at max_iter={} before reaching tol",
            svm_params.max_iter
        ));
    }
    Ok(DupOutcome {
        group: GroupResult {
            name: data.name.clone(),
            auc: Some(auc),
            cosine_auc: Some(cosine_auc),
            micro_f1: None,
            instances: test.len(),
            notes,
            dataset: Some(json!({
                "manifest": manifest,
                "train_stats": model.train_stats[0],
            })),
        },
        scores: Some(DupScores {
            labels,
            distances,
            s_dup,
            cosine,
        }),
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Duplicate detection over every subforum. The headline AUC is the
/// unweighted mean over evaluated subforums; pooled variants (all test
/// pairs ranked together by `s_dup` or cosine) go to `baselines`.
pub fn run_dup(
    subforums: &[SubforumData],
    split: &SplitSpec,
    svm_params: &SvmParams,
    mode: DiffMode,
) -> Result<EvalReport> {
    let outcomes: Vec<DupOutcome> = subforums
        .par_iter()
        .map(|s| dup_outcome(s, split, svm_params, mode))
        .collect::<Result<_>>()?;

    let mut report = EvalReport::new(Task::Dup);
    let aucs: Vec<f64> = outcomes.iter().filter_map(|o| o.group.auc).collect();
    let cos: Vec<f64> = outcomes.iter().filter_map(|o| o.group.cosine_auc).collect();
    report.auc = mean(&aucs);
    if let Some(c) = mean(&cos) {
        report.baselines.insert("cosine_auc_macro".into(), c);
    }

    let mut pooled_labels = Vec::new();
    let mut pooled_svm = Vec::new();
    let mut pooled_cos = Vec::new();
    for s in outcomes.iter().filter_map(|o| o.scores.as_ref()) {
        pooled_labels.extend_from_slice(&s.labels);
        pooled_svm.extend_from_slice(&s.s_dup);
        pooled_cos.extend_from_slice(&s.cosine);
    }
    if !pooled_labels.is_empty() {
        report.baselines.insert(
            "svm_auc_pooled".into(),
            metrics::roc_auc(&pooled_svm, &pooled_labels)?,
        );
        report.baselines.insert(
            "cosine_auc_pooled".into(),
            metrics::roc_auc(&pooled_cos, &pooled_labels)?,
        );
    }
    report.groups = outcomes.into_iter().map(|o| o.group).collect();
    if report.auc.is_none() {
        log::warn!("no subforum could be evaluated");
    }
    Ok(report)
}

/// Constant predictor used when a training fold holds a single class.
enum FoldModel {
    Svm(SvmModel),
    Constant(String),
}

impl FoldModel {
    fn predict(&self, x: &[f64]) -> Result<String> {
        match self {
            FoldModel::Svm(m) => m.predict(x).map(str::to_owned),
            FoldModel::Constant(c) => Ok(c.clone()),
        }
    }
}

struct FoldOutcome {
    predictions: Vec<(usize, String)>,
    group: GroupResult,
}

fn run_fold(
    fold: usize,
    instances: &[RelationInstance],
    folds: &[usize],
    all_classes: &[String],
    svm_params: &SvmParams,
) -> Result<FoldOutcome> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (inst, &f) in instances.iter().zip(folds) {
        if f != fold {
            x.push(inst.features.clone());
            y.push(inst.pair.label.as_str());
        }
    }
    let mut present: Vec<String> = y.iter().map(|s| s.to_string()).collect();
    present.sort();
    present.dedup();

    let mut notes = Vec::new();
    let omitted: Vec<&str> = all_classes
        .iter()
        .filter(|c| present.binary_search(c).is_err())
        .map(String::as_str)
        .collect();
    if !omitted.is_empty() {
        notes.push(format!(
            "classes absent from training: {}",
            omitted.join(", ")
        ));
    }
    let model = if present.len() == 1 {
        notes.push(format!(
            "single training class `{}`; constant prediction",
            present[0]
        ));
        FoldModel::Constant(present[0].clone())
    } else {
        let m = svm::train_multiclass(&x, &y, svm_params)?;
        if m.train_stats.iter().any(|s| !s.converged) {
            notes.push(format!(
                "solver stopped at max_iter={} before reaching tol",
                svm_params.max_iter
            ));
        }
        FoldModel::Svm(m)
    };

    let mut predictions = Vec::new();
    let mut truth = Vec::new();
    for (i, (inst, &f)) in instances.iter().zip(folds).enumerate() {
        if f == fold {
            predictions.push((i, model.predict(&inst.features)?));
            truth.push(inst.pair.label.as_str());
        }
    }
    let pred: Vec<&str> = predictions.iter().map(|(_, p)| p.as_str()).collect();
    Ok(FoldOutcome {
        group: GroupResult {
            name: format!("fold{fold}"),
            auc: None,
            cosine_auc: None,
            micro_f1: Some(metrics::micro_f1(&truth, &pred)?),
            instances: truth.len(),
            notes,
            dataset: None,
        },
        predictions,
    })
}

/// Posts grouped by thread, in order of first appearance.
pub fn threads_of(posts: &[ThreadPost]) -> Vec<Vec<&str>> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_thread: HashMap<&str, Vec<&str>> = HashMap::new();
    for p in posts {
        let t = p.thread.as_str();
        by_thread
            .entry(t)
            .or_insert_with(|| {
                order.push(t);
                Vec::new()
            })
            .push(p.id.as_str());
    }
    order.iter().map(|t| by_thread.remove(t).unwrap()).collect()
}

/// Heuristic label for each link, taken from the position of its child post.
pub fn heuristic_link_predictions(
    posts: &[ThreadPost],
    pairs: &[RelationPair],
) -> Vec<&'static str> {
    let threads = threads_of(posts);
    let labels = metrics::da_heuristic_baseline(&threads);
    let mut by_post: HashMap<&str, &'static str> = HashMap::new();
    for (ids, preds) in threads.iter().zip(&labels) {
        for (id, p) in ids.iter().zip(preds) {
            by_post.insert(id, p);
        }
    }
    pairs.iter().map(|p| by_post[p.id1.as_str()]).collect()
}

/// Most frequent label, ties to the lexicographically smaller one.
pub fn majority_label<S: AsRef<str>>(labels: &[S]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_insert(0) += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (l, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l.to_owned())
}

/// Dialogue-act protocol with k-fold cross validation.
pub fn run_da(
    posts: &[ThreadPost],
    vectors: &[DocumentVector],
    split: &SplitSpec,
    svm_params: &SvmParams,
    mode: DiffMode,
) -> Result<EvalReport> {
    split.validate()?;
    let pairs = relation::expand_multiparent(posts)?;
    if pairs.is_empty() {
        return Err(Error::Empty("no post links".into()));
    }
    let index = relation::vector_index(vectors);
    let instances = featurize(&pairs, &index, mode)?;
    let folds = kfold_assign(&instances, split)?;
    let mut classes: Vec<String> = pairs.iter().map(|p| p.label.clone()).collect();
    classes.sort();
    classes.dedup();

    let outcomes: Vec<FoldOutcome> = (0..split.n_folds)
        .into_par_iter()
        .map(|k| run_fold(k, &instances, &folds, &classes, svm_params))
        .collect::<Result<_>>()?;

    let mut predicted = vec![String::new(); instances.len()];
    for o in &outcomes {
        for (i, p) in &o.predictions {
            predicted[*i] = p.clone();
        }
    }
    let truth: Vec<&str> = pairs.iter().map(|p| p.label.as_str()).collect();

    let mut report = EvalReport::new(Task::Da);
    report.micro_f1 = Some(metrics::micro_f1(&truth, &predicted)?);
    let confusion = ConfusionMatrix::build(&truth, &predicted, &classes)?;
    report.per_class = confusion.class_scores();
    report.confusion = Some(confusion);

    let heuristic = heuristic_link_predictions(posts, &pairs);
    report
        .baselines
        .insert("heuristic".into(), metrics::micro_f1(&truth, &heuristic)?);
    if let Some(major) = majority_label(&truth) {
        let constant = vec![major.as_str(); truth.len()];
        report
            .baselines
            .insert("majority".into(), metrics::micro_f1(&truth, &constant)?);
    }
    report.groups = outcomes.into_iter().map(|o| o.group).collect();
    Ok(report)
}
