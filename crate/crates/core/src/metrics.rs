//! Evaluation: ranking scores, ROC AUC, micro-F1, per-class scores,
//! confusion matrices and the two reference baselines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

pub const QUESTION_QUESTION: &str = "question-question";
pub const ANSWER_ANSWER: &str = "answer-answer";

/// Min-max normalization of decision distances over one test batch.
/// A batch of identical distances maps to 0.5 everywhere.
pub fn s_dup(distances: &[f64]) -> Result<Vec<f64>> {
    if distances.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "s_dup needs at least two distances, got {}",
            distances.len()
        )));
    }
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("distances".into()));
    }
    let (lo, hi) = distances
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
    if lo == hi {
        log::warn!(
            "all {} distances are equal; s_dup set to 0.5",
            distances.len()
        );
        return Ok(vec![0.5; distances.len()]);
    }
    let span = hi - lo;
    Ok(distances.iter().map(|&d| (d - lo) / span).collect())
}

/// Area under the ROC curve as the normalized Mann-Whitney statistic,
/// with tied scores receiving average ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(
            if n_pos == 0 { "negative" } else { "positive" }.into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (1-based) average ranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += avg_rank * pos_in_group as f64;
        start = end;
    }
    let n_pos_f = n_pos as f64;
    let u = rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0;
    Ok(u / (n_pos_f * n_neg as f64))
}

fn check_lengths<A, B>(truth: &[A], predicted: &[B]) -> Result<()> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("no labels to score".into()));
    }
    Ok(())
}

/// F1 from true/false positive counts pooled over all classes.
pub fn micro_f1<S: AsRef<str>, T: AsRef<str>>(truth: &[S], predicted: &[T]) -> Result<f64> {
    check_lengths(truth, predicted)?;
    let tp = truth
        .iter()
        .zip(predicted)
        .filter(|(t, p)| t.as_ref() == p.as_ref())
        .count() as f64;
    // Single-label data: every miss is one false positive (for the predicted
    // class) and one false negative (for the true class).
    let misses = truth.len() as f64 - tp;
    let (fp, fneg) = (misses, misses);
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fneg);
    let f1 = if tp == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    debug_assert!((f1 - tp / truth.len() as f64).abs() < 1e-12);
    Ok(f1)
}

pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(truth: &[S], predicted: &[T]) -> Result<f64> {
    check_lengths(truth, predicted)?;
    let hits = truth
        .iter()
        .zip(predicted)
        .filter(|(t, p)| t.as_ref() == p.as_ref())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Set when a ratio had a zero denominator and was reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_division: bool,
}

/// Counts indexed by (true, predicted) over a sorted label list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Labels are the sorted union of `truth`, `predicted` and `extra`.
    pub fn build<S: AsRef<str>, T: AsRef<str>>(
        truth: &[S],
        predicted: &[T],
        extra: &[String],
    ) -> Result<Self> {
        check_lengths(truth, predicted)?;
        let mut labels: Vec<String> = truth
            .iter()
            .map(|s| s.as_ref().to_owned())
            .chain(predicted.iter().map(|s| s.as_ref().to_owned()))
            .chain(extra.iter().cloned())
            .collect();
        labels.sort();
        labels.dedup();
        let idx = |l: &str| labels.binary_search_by(|x| x.as_str().cmp(l)).unwrap();
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (t, p) in truth.iter().zip(predicted) {
            counts[idx(t.as_ref())][idx(p.as_ref())] += 1;
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn predicted(&self, k: usize) -> u64 {
        self.counts.iter().map(|row| row[k]).sum()
    }

    /// One-vs-rest precision, recall and F1 per label.
    pub fn class_scores(&self) -> Vec<ClassScores> {
        (0..self.labels.len())
            .map(|k| {
                let tp = self.counts[k][k] as f64;
                let support = self.support(k);
                let predicted = self.predicted(k);
                let mut zero_division = false;
                let mut ratio = |num: f64, den: u64| {
                    if den == 0 {
                        zero_division = true;
                        0.0
                    } else {
                        num / den as f64
                    }
                };
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassScores {
                    label: self.labels[k].clone(),
                    precision,
                    recall,
                    f1,
                    support: support as usize,
                    zero_division,
                }
            })
            .collect()
    }

    /// Fixed-width text rendering, rows are true labels.
    pub fn render(&self) -> String {
        let width = self
            .labels
            .iter()
            .enumerate()
            .map(|(k, l)| format!("[{k}] {l}").len())
            .max()
            .unwrap_or(0)
            .max("true\\pred".len());
        let mut out = format!("{:width$}", "true\\pred");
        for k in 0..self.labels.len() {
            let _ = write!(out, " {:>6}", format!("[{k}]"));
        }
        out.push('\n');
        for (k, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{:width$}", format!("[{k}] {}", self.labels[k]));
            for c in row {
                let _ = write!(out, " {c:>6}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn per_class_prf<S: AsRef<str>, T: AsRef<str>>(
    truth: &[S],
    predicted: &[T],
) -> Result<Vec<ClassScores>> {
    Ok(ConfusionMatrix::build(truth, predicted, &[])?.class_scores())
}

/// Cosine similarity per aligned pair; a zero vector on either side scores 0.
pub fn cosine_rank<A: AsRef<[f64]>, B: AsRef<[f64]>>(left: &[A], right: &[B]) -> Result<Vec<f64>> {
    if left.len() != right.len() {
        return Err(Error::Dimension {
            expected: left.len(),
            found: right.len(),
        });
    }
    left.iter()
        .zip(right)
        .map(|(a, b)| {
            let (a, b) = (a.as_ref(), b.as_ref());
            if a.len() != b.len() {
                return Err(Error::Dimension {
                    expected: a.len(),
                    found: b.len(),
                });
            }
            let (na, nb) = (norm(a), norm(b));
            Ok(if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot(a, b) / (na * nb)
            })
        })
        .collect()
}

/// Positional heuristic: the opening post of each thread is a new question,
/// every later post an answer. Output mirrors the thread layout.
pub fn da_heuristic_baseline<S: AsRef<str>>(threads: &[Vec<S>]) -> Vec<Vec<&'static str>> {
    threads
        .iter()
        .map(|posts| {
            (0..posts.len())
                .map(|i| {
                    if i == 0 {
                        QUESTION_QUESTION
                    } else {
                        ANSWER_ANSWER
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Dup,
    Da,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dup" => Ok(Task::Dup),
            "da" => Ok(Task::Da),
            other => Err(Error::InvalidParameter(format!("unknown task `{other}`"))),
        }
    }
}

/// Result for one evaluation unit (a subforum or a fold).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_f1: Option<f64>,
    pub instances: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    /// Dup: unweighted mean of per-subforum AUCs.
    pub auc: Option<f64>,
    pub micro_f1: Option<f64>,
    pub per_class: Vec<ClassScores>,
    pub confusion: Option<ConfusionMatrix>,
    pub groups: Vec<GroupResult>,
    /// Named scores from comparison systems and alternative aggregations.
    pub baselines: BTreeMap<String, f64>,
    pub meta: serde_json::Value,
}

impl EvalReport {
    pub fn new(task: Task) -> Self {
        EvalReport {
            task,
            auc: None,
            micro_f1: None,
            per_class: Vec::new(),
            confusion: None,
            groups: Vec::new(),
            baselines: BTreeMap::new(),
            meta: serde_json::Value::Null,
        }
    }

    /// Plain-text summary table: one `Model  Score` row per system.
    pub fn render_table(&self, model_name: &str) -> String {
        let (heading, main) = match self.task {
            Task::Dup => ("AUC", self.auc),
            Task::Da => ("F1", self.micro_f1),
        };
        let mut rows: Vec<(String, String)> = vec![(model_name.to_owned(), fmt_score(main))];
        for (name, v) in &self.baselines {
            rows.push((name.clone(), fmt_score(Some(*v))));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
        let rule = "-".repeat(width + 8);
        let mut out = String::new();
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "{:width$}  {heading:>6}", "Model");
        let _ = writeln!(out, "{rule}");
        for (name, score) in rows {
            let _ = writeln!(out, "{name:width$}  {score:>6}");
        }
        let _ = writeln!(out, "{rule}");
        if !self.groups.is_empty() {
            let gw = self
                .groups
                .iter()
                .map(|g| g.name.len())
                .max()
                .unwrap_or(5)
                .max(5);
            for g in &self.groups {
                let score = match self.task {
                    Task::Dup => g.auc,
                    Task::Da => g.micro_f1,
                };
                let _ = writeln!(
                    out,
                    "  {:gw$}  {:>6}  n={}",
                    g.name,
                    fmt_score(score),
                    g.instances
                );
            }
        }
        if !self.per_class.is_empty() {
            let lw = self
                .per_class
                .iter()
                .map(|c| c.label.len())
                .max()
                .unwrap_or(5)
                .max(5);
            let _ = writeln!(
                out,
                "\n{:lw$}  {:>6} {:>6} {:>6} {:>7}",
                "label", "P", "R", "F1", "support"
            );
            for c in &self.per_class {
                let _ = writeln!(
                    out,
                    "{:lw$}  {:>6.3} {:>6.3} {:>6.3} {:>7}",
                    c.label, c.precision, c.recall, c.f1, c.support
                );
            }
        }
        out
    }
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.2}"))
}
