//! Document composition: token sequences to fixed-dimension vectors.
//!
//! Three routes are supported: plain averaging of word vectors, SIF
//! weighting (`a / (a + p(w))`) with removal of the batch's first principal
//! component, and import of vectors computed by an external encoder.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{EmbeddingTable, TokenFrequency};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{axpy, dot, norm};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Document {
            id: id.into(),
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentVector {
    pub id: String,
    #[serde(rename = "vec")]
    pub values: Vec<f64>,
}

impl DocumentVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

const EXTRA_PUNCTUATION: &[char] = &[
    '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{00AB}', '\u{00BB}', '\u{2026}', '\u{2013}',
    '\u{2014}', '\u{00BF}', '\u{00A1}',
];

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCTUATION.contains(&c)
}

/// Lowercases, splits on Unicode whitespace and strips leading and trailing
/// punctuation from every token. Tokens that end up empty are dropped.
pub fn tokenize(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(is_punct))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Token coverage counters for one composition run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub documents: usize,
    pub tokens: usize,
    pub oov_tokens: usize,
    /// Documents that were empty or entirely out of vocabulary.
    pub degenerate_documents: usize,
}

impl CoverageStats {
    pub fn oov_rate(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.oov_tokens as f64 / self.tokens as f64
        }
    }

    fn merge(mut self, other: CoverageStats) -> CoverageStats {
        self.documents += other.documents;
        self.tokens += other.tokens;
        self.oov_tokens += other.oov_tokens;
        self.degenerate_documents += other.degenerate_documents;
        self
    }
}

/// Weighted mean of in-vocabulary token vectors. Returns the vector and the
/// coverage counters for this one document.
fn weighted_mean<F>(doc: &Document, table: &EmbeddingTable, weight: F) -> (Vec<f64>, CoverageStats)
where
    F: Fn(&str) -> f64,
{
    let mut acc = vec![0.0; table.dim()];
    let mut valid = 0usize;
    for token in &doc.tokens {
        if let Some(v) = table.lookup(token) {
            axpy(weight(token), v, &mut acc);
            valid += 1;
        }
    }
    if valid > 0 {
        let inv = 1.0 / valid as f64;
        acc.iter_mut().for_each(|x| *x *= inv);
    }
    let stats = CoverageStats {
        documents: 1,
        tokens: doc.tokens.len(),
        oov_tokens: doc.tokens.len() - valid,
        degenerate_documents: usize::from(valid == 0),
    };
    (acc, stats)
}

/// Element-wise mean of the vectors of in-vocabulary tokens. Empty and
/// all-OOV documents map to the zero vector.
pub fn compose_mean(doc: &Document, table: &EmbeddingTable) -> DocumentVector {
    let (values, _) = weighted_mean(doc, table, |_| 1.0);
    DocumentVector {
        id: doc.id.clone(),
        values,
    }
}

pub fn compose_mean_batch(
    docs: &[Document],
    table: &EmbeddingTable,
) -> (Vec<DocumentVector>, CoverageStats) {
    let parts: Vec<_> = docs
        .par_iter()
        .map(|d| {
            let (values, stats) = weighted_mean(d, table, |_| 1.0);
            (
                DocumentVector {
                    id: d.id.clone(),
                    values,
                },
                stats,
            )
        })
        .collect();
    let mut stats = CoverageStats::default();
    let vectors = parts
        .into_iter()
        .map(|(v, s)| {
            stats = stats.merge(s);
            v
        })
        .collect();
    (vectors, stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SifParams {
    /// Smoothing constant in `a / (a + p(w))`.
    pub a: f64,
    pub remove_pc: bool,
    pub pc_iterations: usize,
    pub pc_tolerance: f64,
}

impl Default for SifParams {
    fn default() -> Self {
        SifParams {
            a: 1e-3,
            remove_pc: true,
            pc_iterations: 100,
            pc_tolerance: 1e-8,
        }
    }
}

impl SifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "SIF constant a must be positive, got {}",
                self.a
            )));
        }
        if self.pc_tolerance.is_nan() || self.pc_tolerance <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "pc_tolerance must be positive, got {}",
                self.pc_tolerance
            )));
        }
        if self.pc_iterations == 0 {
            return Err(Error::InvalidParameter(
                "pc_iterations must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn weight(&self, prob: f64) -> f64 {
        self.a / (self.a + prob)
    }
}

/// Result of a SIF composition over one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct SifOutput {
    pub vectors: Vec<DocumentVector>,
    /// Unit-norm first principal component that was projected out.
    pub principal_component: Option<Vec<f64>>,
    pub pc_iterations: usize,
    pub pc_converged: bool,
    pub stats: CoverageStats,
}

/// First principal component estimate from power iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerIteration {
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Applies the uncentered covariance `Xᵀ X` of the stacked rows to `u`.
fn gram_apply(rows: &[&[f64]], u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for r in rows {
        axpy(dot(r, u), r, &mut out);
    }
    out
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Dominant eigenvector of `Xᵀ X` for the stacked `rows`, starting from the
/// normalized all-ones vector. Stops once the direction moves by less than
/// `tolerance` in Euclidean norm, or after `max_iterations`.
pub fn first_principal_component(
    rows: &[&[f64]],
    max_iterations: usize,
    tolerance: f64,
) -> Result<PowerIteration> {
    let dim = rows
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::Empty("no rows for principal component".into()))?;

    let mut u = vec![1.0; dim];
    normalize(&mut u);
    let mut probe = gram_apply(rows, &u);
    if normalize(&mut probe) == 0.0 {
        // The all-ones start is orthogonal to the row space; restart from the
        // largest row, which always has a component along the dominant direction.
        let largest = rows
            .iter()
            .max_by(|a, b| norm(a).total_cmp(&norm(b)))
            .expect("rows non-empty");
        u = largest.to_vec();
        if normalize(&mut u) == 0.0 {
            return Err(Error::Numerical(
                "all document vectors are zero; no principal component".into(),
            ));
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        let mut next = gram_apply(rows, &u);
        if normalize(&mut next) == 0.0 {
            return Err(Error::Numerical("power iteration collapsed to zero".into()));
        }
        iterations += 1;
        let delta = next
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        u = next;
        if delta < tolerance {
            converged = true;
            break;
        }
    }
    Ok(PowerIteration {
        vector: u,
        iterations,
        converged,
    })
}

/// Removes the projection onto the unit vector `u` in place.
pub fn remove_component(v: &mut [f64], u: &[f64]) {
    let proj = dot(u, v);
    axpy(-proj, u, v);
}

/// SIF composition over a batch. The principal component is a property of
/// the whole batch, so documents cannot be composed one at a time.
pub fn compose_sif_batch(
    docs: &[Document],
    table: &EmbeddingTable,
    freqs: &TokenFrequency,
    params: &SifParams,
) -> Result<SifOutput> {
    params.validate()?;
    if docs.is_empty() {
        return Err(Error::Empty("SIF batch has no documents".into()));
    }
    let parts: Vec<_> = docs
        .par_iter()
        .map(|d| {
            let (values, stats) = weighted_mean(d, table, |t| params.weight(freqs.prob(t)));
            (
                DocumentVector {
                    id: d.id.clone(),
                    values,
                },
                stats,
            )
        })
        .collect();
    let mut stats = CoverageStats::default();
    let mut vectors: Vec<DocumentVector> = parts
        .into_iter()
        .map(|(v, s)| {
            stats = stats.merge(s);
            v
        })
        .collect();
    if stats.degenerate_documents == stats.documents {
        return Err(Error::Empty(
            "every document in the SIF batch is empty or out of vocabulary".into(),
        ));
    }

    if !params.remove_pc {
        return Ok(SifOutput {
            vectors,
            principal_component: None,
            pc_iterations: 0,
            pc_converged: true,
            stats,
        });
    }

    let rows: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    let pc = first_principal_component(&rows, params.pc_iterations, params.pc_tolerance)?;
    if !pc.converged {
        log::warn!(
            "power iteration did not converge within {} iterations; using last iterate",
            params.pc_iterations
        );
    }
    vectors
        .par_iter_mut()
        .for_each(|v| remove_component(&mut v.values, &pc.vector));
    Ok(SifOutput {
        vectors,
        principal_component: Some(pc.vector),
        pc_iterations: pc.iterations,
        pc_converged: pc.converged,
        stats,
    })
}

/// Hex SHA-256 over the little-endian bytes of a vector.
pub fn vector_hash(v: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in v {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Validates imported vectors: unique ids, one shared length, finite values.
pub fn validate_vectors(vectors: &[DocumentVector]) -> Result<usize> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Empty("no document vectors".into()))?;
    let dim = first.dim();
    let mut seen = HashSet::with_capacity(vectors.len());
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::VectorLength {
                id: v.id.clone(),
                expected: dim,
                found: v.dim(),
            });
        }
        if !v.values.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("vector `{}`", v.id)));
        }
        if !seen.insert(v.id.as_str()) {
            return Err(Error::DuplicateId(v.id.clone()));
        }
    }
    if dim == 0 {
        return Err(Error::Empty("document vectors have zero length".into()));
    }
    Ok(dim)
}

/// Reads JSON-lines `{"id", "vec"}` records.
pub fn parse_vectors<R: BufRead>(reader: R) -> Result<Vec<DocumentVector>> {
    let vectors: Vec<DocumentVector> = io::parse_jsonl(reader)?;
    validate_vectors(&vectors)?;
    Ok(vectors)
}

pub fn import_vectors(path: impl AsRef<Path>) -> Result<Vec<DocumentVector>> {
    let vectors: Vec<DocumentVector> = io::read_jsonl(path)?;
    validate_vectors(&vectors)?;
    Ok(vectors)
}

pub fn export_vectors(path: impl AsRef<Path>, vectors: &[DocumentVector]) -> Result<()> {
    io::save_jsonl(path, vectors)
}

/// One line of a document corpus file: either raw forum text or
/// pre-tokenized content.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum CorpusRecord {
    Tokens {
        id: String,
        tokens: Vec<String>,
    },
    Text {
        id: String,
        #[serde(default)]
        title: String,
        #[serde(default)]
        body: String,
    },
}

impl CorpusRecord {
    /// Title tokens come first, then body tokens.
    pub fn into_document(self) -> Document {
        match self {
            CorpusRecord::Tokens { id, tokens } => Document { id, tokens },
            CorpusRecord::Text { id, title, body } => {
                let mut tokens = tokenize(&title);
                tokens.extend(tokenize(&body));
                Document { id, tokens }
            }
        }
    }
}

pub fn documents_from_records(records: Vec<CorpusRecord>) -> Result<Vec<Document>> {
    let docs: Vec<Document> = records
        .into_iter()
        .map(CorpusRecord::into_document)
        .collect();
    let mut seen = HashSet::with_capacity(docs.len());
    for d in &docs {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    Ok(docs)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    documents_from_records(io::read_jsonl(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_rows(
            "toy",
            [
                ("a", vec![1.0, 2.0]),
                ("b", vec![3.0, 4.0]),
                ("c", vec![-1.0, 0.5]),
            ],
        )
        .unwrap()
        .0
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("The man, put it DOWN."),
            vec!["the", "man", "put", "it", "down"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("I walk to school"),
            vec!["i", "walk", "to", "school"]
        );
        assert_eq!(tokenize("  \"quoted\"  -- ... x"), vec!["quoted", "x"]);
        assert_eq!(tokenize("don't e-mail"), vec!["don't", "e-mail"]);
    }

    #[test]
    fn mean_examples() {
        let t = table();
        assert_eq!(
            compose_mean(&Document::new("d", ["a", "b"]), &t).values,
            vec![2.0, 3.0]
        );
        assert_eq!(
            compose_mean(&Document::new("d", ["a", "a"]), &t).values,
            vec![1.0, 2.0]
        );
        assert_eq!(
            compose_mean(&Document::new("d", ["zz", "yy"]), &t).values,
            vec![0.0, 0.0]
        );
        let empty: [&str; 0] = [];
        assert_eq!(
            compose_mean(&Document::new("d", empty), &t).values,
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn mean_batch_counts_coverage() {
        let t = table();
        let docs = vec![
            Document::new("1", ["a", "x"]),
            Document::new("2", ["q"]),
            Document::new("3", ["b", "c"]),
        ];
        let (vs, stats) = compose_mean_batch(&docs, &t);
        assert_eq!(vs.len(), 3);
        assert_eq!(vs[0].values, vec![1.0, 2.0]);
        assert_eq!(stats.tokens, 5);
        assert_eq!(stats.oov_tokens, 2);
        assert_eq!(stats.degenerate_documents, 1);
        assert_eq!(stats.oov_rate(), 0.4);
    }

    #[test]
    fn sif_weights() {
        let p = SifParams::default();
        assert_eq!(p.weight(p.a), 0.5);
        assert_eq!(p.weight(0.0), 1.0);
    }

    #[test]
    fn sif_params_validation() {
        let bad = SifParams {
            a: 0.0,
            ..SifParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = SifParams {
            pc_tolerance: -1.0,
            ..SifParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sif_rejects_all_empty_batch() {
        let t = table();
        let freqs = TokenFrequency::estimate(&[vec!["a"]]).unwrap();
        let docs = vec![
            Document::new("1", ["nope"]),
            Document::new("2", Vec::<String>::new()),
        ];
        let err = compose_sif_batch(&docs, &t, &freqs, &SifParams::default()).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
    }

    #[test]
    fn sif_without_pc_applies_weights() {
        let t = table();
        let freqs = TokenFrequency::estimate(&[vec!["a", "b", "b", "b"]]).unwrap();
        let params = SifParams {
            a: 0.25,
            remove_pc: false,
            ..SifParams::default()
        };
        let out =
            compose_sif_batch(&[Document::new("d", ["a", "b"])], &t, &freqs, &params).unwrap();
        // p(a) = 0.25 -> 0.5, p(b) = 0.75 -> 0.25
        let expect = [
            (0.5 * 1.0 + 0.25 * 3.0) / 2.0,
            (0.5 * 2.0 + 0.25 * 4.0) / 2.0,
        ];
        assert_eq!(out.vectors[0].values, expect);
        assert!(out.principal_component.is_none());
    }

    #[test]
    fn power_iteration_restarts_when_orthogonal_to_ones() {
        let r1 = [1.0, -1.0];
        let r2 = [2.0, -2.0];
        let rows: Vec<&[f64]> = vec![&r1, &r2];
        let pc = first_principal_component(&rows, 100, 1e-12).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pc.vector[0].abs() - s).abs() < 1e-12);
        assert!((pc.vector[0] + pc.vector[1]).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_zero_rows() {
        let z = [0.0, 0.0];
        let rows: Vec<&[f64]> = vec![&z];
        assert!(matches!(
            first_principal_component(&rows, 10, 1e-8),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn vector_validation() {
        let ok = vec![
            DocumentVector {
                id: "a".into(),
                values: vec![1.0; 4],
            },
            DocumentVector {
                id: "b".into(),
                values: vec![2.0; 4],
            },
        ];
        assert_eq!(validate_vectors(&ok).unwrap(), 4);

        let mixed = vec![
            DocumentVector {
                id: "a".into(),
                values: vec![1.0; 3],
            },
            DocumentVector {
                id: "odd".into(),
                values: vec![2.0; 5],
            },
        ];
        match validate_vectors(&mixed) {
            Err(Error::VectorLength { id, .. }) => assert_eq!(id, "odd"),
            other => panic!("unexpected {other:?}"),
        }

        let dup = vec![ok[0].clone(), ok[0].clone()];
        assert!(matches!(validate_vectors(&dup), Err(Error::DuplicateId(_))));

        let nan = vec![DocumentVector {
            id: "n".into(),
            values: vec![f64::NAN],
        }];
        assert!(matches!(validate_vectors(&nan), Err(Error::NonFinite(_))));
    }

    #[test]
    fn parse_vector_lines() {
        let text = "{\"id\":\"x\",\"vec\":[1,2]}\n\n{\"id\":\"y\",\"vec\":[3.5,-4]}\n";
        let vs = parse_vectors(text.as_bytes()).unwrap();
        assert_eq!(vs[1].values, vec![3.5, -4.0]);
    }

    #[test]
    fn corpus_records() {
        let text = r#"{"id":"q1","title":"Hello, World!","body":"How are you?"}
{"id":"q2","tokens":["Pre","tokenized"]}"#;
        let records: Vec<CorpusRecord> = io::parse_jsonl(text.as_bytes()).unwrap();
        let docs = documents_from_records(records).unwrap();
        assert_eq!(docs[0].tokens, vec!["hello", "world", "how", "are", "you"]);
        assert_eq!(docs[1].tokens, vec!["Pre", "tokenized"]);
    }
}
