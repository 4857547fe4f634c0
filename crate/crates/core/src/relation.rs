//! Relation instances built from document pairs.
//!
//! A relation between two documents is represented by the offset between
//! their vectors: `h1 - h2` when direction matters, `|h1 - h2|` element-wise
//! when the relation is unordered.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composer::DocumentVector;
use crate::error::{Error, Result};
use crate::io;

pub const DUP_LABEL: &str = "dup";
pub const NONDUP_LABEL: &str = "nondup";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffMode {
    Signed,
    Absolute,
}

impl std::str::FromStr for DiffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(DiffMode::Signed),
            "absolute" => Ok(DiffMode::Absolute),
            other => Err(Error::InvalidParameter(format!(
                "unknown diff mode `{other}`"
            ))),
        }
    }
}

/// A labeled pair: `id1` is the minuend, `id2` the subtrahend.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationPair {
    pub id1: String,
    pub id2: String,
    pub label: String,
}

impl RelationPair {
    pub fn new(id1: impl Into<String>, id2: impl Into<String>, label: impl Into<String>) -> Self {
        RelationPair {
            id1: id1.into(),
            id2: id2.into(),
            label: label.into(),
        }
    }

    /// Order-insensitive identity of the document pair.
    pub fn unordered_key(&self) -> (String, String) {
        unordered_key(&self.id1, &self.id2)
    }
}

fn unordered_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationInstance {
    #[serde(flatten)]
    pub pair: RelationPair,
    pub features: Vec<f64>,
    pub mode: DiffMode,
}

/// Offset between two document vectors.
pub fn diffvec(h1: &[f64], h2: &[f64], mode: DiffMode) -> Result<Vec<f64>> {
    if h1.len() != h2.len() {
        return Err(Error::Dimension {
            expected: h1.len(),
            found: h2.len(),
        });
    }
    let out = h1.iter().zip(h2).map(|(a, b)| a - b);
    Ok(match mode {
        DiffMode::Signed => out.collect(),
        DiffMode::Absolute => out.map(f64::abs).collect(),
    })
}

/// Featurizes every pair against a vector lookup.
pub fn featurize(
    pairs: &[RelationPair],
    vectors: &HashMap<String, &DocumentVector>,
    mode: DiffMode,
) -> Result<Vec<RelationInstance>> {
    pairs
        .iter()
        .map(|p| {
            let h1 = vectors
                .get(&p.id1)
                .ok_or_else(|| Error::UnknownId(p.id1.clone()))?;
            let h2 = vectors
                .get(&p.id2)
                .ok_or_else(|| Error::UnknownId(p.id2.clone()))?;
            Ok(RelationInstance {
                pair: p.clone(),
                features: diffvec(&h1.values, &h2.values, mode)?,
                mode,
            })
        })
        .collect()
}

/// Index from id to vector.
pub fn vector_index(vectors: &[DocumentVector]) -> HashMap<String, &DocumentVector> {
    vectors.iter().map(|v| (v.id.clone(), v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub negative_ratio: usize,
    pub n_folds: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            train_fraction: 0.9,
            negative_ratio: 5000,
            n_folds: 10,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.n_folds == 0 {
            return Err(Error::InvalidParameter("n_folds must be positive".into()));
        }
        Ok(())
    }
}

/// Indexable space of candidate negative pairs.
pub trait PairSource {
    fn len(&self) -> u64;

    /// The `index`-th candidate, `index < len()`.
    fn get(&self, index: u64) -> (&str, &str);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every unordered pair of distinct documents drawn from one id list.
pub struct AllPairs<'a> {
    ids: &'a [String],
}

impl<'a> AllPairs<'a> {
    pub fn new(ids: &'a [String]) -> Self {
        AllPairs { ids }
    }
}

impl PairSource for AllPairs<'_> {
    fn len(&self) -> u64 {
        let n = self.ids.len() as u64;
        n * n.saturating_sub(1) / 2
    }

    fn get(&self, index: u64) -> (&str, &str) {
        // Row-major upper triangle: row i holds the pairs (i, i+1..n).
        let n = self.ids.len() as u64;
        let mut i = {
            let nf = n as f64;
            let k = index as f64;
            let disc = (2.0 * nf - 1.0) * (2.0 * nf - 1.0) - 8.0 * k;
            ((2.0 * nf - 1.0 - disc.max(0.0).sqrt()) / 2.0).floor() as u64
        };
        let row_start = |i: u64| i * (2 * n - i - 1) / 2;
        // Guard against floating point drift in the closed form.
        while i > 0 && row_start(i) > index {
            i -= 1;
        }
        while i + 1 < n && row_start(i + 1) <= index {
            i += 1;
        }
        let j = i + 1 + (index - row_start(i));
        (&self.ids[i as usize], &self.ids[j as usize])
    }
}

/// An explicit candidate list.
pub struct PairList<'a> {
    pairs: &'a [(String, String)],
}

impl<'a> PairList<'a> {
    pub fn new(pairs: &'a [(String, String)]) -> Self {
        PairList { pairs }
    }
}

impl PairSource for PairList<'_> {
    fn len(&self) -> u64 {
        self.pairs.len() as u64
    }

    fn get(&self, index: u64) -> (&str, &str) {
        let (a, b) = &self.pairs[index as usize];
        (a, b)
    }
}

/// Counts recorded with a duplicate-detection dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub train_fraction: f64,
    pub negative_ratio: usize,
    pub candidate_pairs: u64,
    pub train_positives: usize,
    pub train_negatives: usize,
    pub test_positives: usize,
    pub test_negatives: usize,
    pub requested_negatives: u64,
    /// Negatives per positive actually obtained.
    pub achieved_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DupDataset {
    pub train: Vec<RelationPair>,
    pub test: Vec<RelationPair>,
    pub manifest: DatasetManifest,
}

/// Splits duplicates into train/test and draws `negative_ratio` times as
/// many negatives for each side, without replacement, from `pool`.
///
/// Negatives never coincide with a positive pair (in either order), with
/// each other, or with a self-pair. When the pool cannot supply the request,
/// every valid candidate is used and the shortfall shows in
/// `achieved_ratio`.
pub fn build_dup_dataset<P: PairSource + ?Sized>(
    duplicates: &[RelationPair],
    pool: &P,
    spec: &SplitSpec,
) -> Result<DupDataset> {
    spec.validate()?;
    if duplicates.is_empty() {
        return Err(Error::Empty("no duplicate pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut positives: Vec<RelationPair> = duplicates
        .iter()
        .map(|p| RelationPair::new(p.id1.clone(), p.id2.clone(), DUP_LABEL))
        .collect();
    positives.shuffle(&mut rng);
    let n_train =
        ((positives.len() as f64 * spec.train_fraction).round() as usize).min(positives.len());
    let test_pos = positives.split_off(n_train);
    let train_pos = positives;

    let want_train = (train_pos.len() as u64).saturating_mul(spec.negative_ratio as u64);
    let want_test = (test_pos.len() as u64).saturating_mul(spec.negative_ratio as u64);
    let requested = want_train + want_test;

    let excluded: HashSet<(String, String)> =
        duplicates.iter().map(RelationPair::unordered_key).collect();
    let negatives = sample_negatives(pool, &excluded, requested, &mut rng);

    let (train_neg, test_neg) = if (negatives.len() as u64) < requested {
        // Shortfall: share what exists in proportion to the request.
        let got = negatives.len() as u64;
        let train_share = if requested == 0 {
            0
        } else {
            ((got as u128 * want_train as u128) / requested as u128) as usize
        };
        let mut negatives = negatives;
        let test = negatives.split_off(train_share);
        (negatives, test)
    } else {
        let mut negatives = negatives;
        let test = negatives.split_off(want_train as usize);
        (negatives, test)
    };

    let n_pos = train_pos.len() + test_pos.len();
    let n_neg = train_neg.len() + test_neg.len();
    let manifest = DatasetManifest {
        seed: spec.seed,
        train_fraction: spec.train_fraction,
        negative_ratio: spec.negative_ratio,
        candidate_pairs: pool.len(),
        train_positives: train_pos.len(),
        train_negatives: train_neg.len(),
        test_positives: test_pos.len(),
        test_negatives: test_neg.len(),
        requested_negatives: requested,
        achieved_ratio: n_neg as f64 / n_pos as f64,
    };
    if (n_neg as u64) < requested {
        log::warn!(
            "negative pool exhausted: {} of {} requested negatives (ratio {:.3})",
            n_neg,
            requested,
            manifest.achieved_ratio
        );
    }

    let to_pair = |(a, b): (String, String)| RelationPair::new(a, b, NONDUP_LABEL);
    let mut train = train_pos;
    train.extend(train_neg.into_iter().map(to_pair));
    let mut test = test_pos;
    test.extend(test_neg.into_iter().map(to_pair));
    Ok(DupDataset {
        train,
        test,
        manifest,
    })
}

fn sample_negatives<P: PairSource + ?Sized>(
    pool: &P,
    excluded: &HashSet<(String, String)>,
    requested: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<(String, String)> {
    let size = pool.len();
    if requested == 0 || size == 0 {
        return Vec::new();
    }
    let mut taken: HashSet<(String, String)> = HashSet::new();
    let accept = |a: &str, b: &str, taken: &mut HashSet<(String, String)>| {
        if a == b {
            return None;
        }
        let key = unordered_key(a, b);
        if excluded.contains(&key) || taken.contains(&key) {
            return None;
        }
        taken.insert(key);
        Some((a.to_owned(), b.to_owned()))
    };

    if requested.saturating_mul(2) >= size {
        // Dense request: enumerate, shuffle, take a prefix.
        let mut all: Vec<(String, String)> = (0..size)
            .filter_map(|i| {
                let (a, b) = pool.get(i);
                accept(a, b, &mut taken)
            })
            .collect();
        all.shuffle(rng);
        all.truncate(requested as usize);
        return all;
    }

    // Sparse request: rejection sampling over indices.
    let mut seen_idx: HashSet<u64> = HashSet::with_capacity(requested as usize * 2);
    let mut out = Vec::with_capacity(requested as usize);
    while (out.len() as u64) < requested && (seen_idx.len() as u64) < size {
        let idx = rng.random_range(0..size);
        if !seen_idx.insert(idx) {
            continue;
        }
        let (a, b) = pool.get(idx);
        if let Some(p) = accept(a, b, &mut taken) {
            out.push(p);
        }
    }
    out
}

/// Seeded shuffle followed by round-robin fold assignment.
pub fn kfold_assign<T>(instances: &[T], spec: &SplitSpec) -> Result<Vec<usize>> {
    let n = instances.len();
    if spec.n_folds == 0 {
        return Err(Error::InvalidParameter("n_folds must be positive".into()));
    }
    if spec.n_folds > n {
        return Err(Error::InvalidParameter(format!(
            "{} folds requested for {} instances",
            spec.n_folds, n
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % spec.n_folds;
    }
    Ok(folds)
}

/// A post with its parent links; `labels[k]` tags the link to `parents[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadPost {
    pub id: String,
    #[serde(default)]
    pub thread: String,
    pub parents: Vec<String>,
    pub labels: Vec<String>,
}

/// One relation pair per (post, parent) link, child as minuend.
pub fn expand_multiparent(posts: &[ThreadPost]) -> Result<Vec<RelationPair>> {
    let ids: HashSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
    let mut out = Vec::new();
    for post in posts {
        if post.parents.len() != post.labels.len() {
            return Err(Error::InvalidParameter(format!(
                "post `{}` has {} parents but {} labels",
                post.id,
                post.parents.len(),
                post.labels.len()
            )));
        }
        for (parent, label) in post.parents.iter().zip(&post.labels) {
            if !ids.contains(parent.as_str()) {
                return Err(Error::UnknownId(parent.clone()));
            }
            out.push(RelationPair::new(
                post.id.clone(),
                parent.clone(),
                label.clone(),
            ));
        }
    }
    Ok(out)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<RelationPair>> {
    io::read_jsonl(path)
}

pub fn read_posts(path: impl AsRef<Path>) -> Result<Vec<ThreadPost>> {
    io::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_offsets() {
        let h1 = [1.0, 1.0, 0.0];
        let h2 = [1.0, 0.0, 0.2];
        assert_eq!(
            diffvec(&h1, &h2, DiffMode::Signed).unwrap(),
            vec![0.0, 1.0, -0.2]
        );
        assert_eq!(
            diffvec(&h2, &h1, DiffMode::Signed).unwrap(),
            vec![0.0, -1.0, 0.2]
        );
        assert_eq!(
            diffvec(&h1, &h2, DiffMode::Absolute).unwrap(),
            vec![0.0, 1.0, 0.2]
        );
        for mode in [DiffMode::Signed, DiffMode::Absolute] {
            assert_eq!(diffvec(&h1, &h1, mode).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn diffvec_dimension_mismatch() {
        assert!(matches!(
            diffvec(&[1.0], &[1.0, 2.0], DiffMode::Signed),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn all_pairs_enumerates_upper_triangle() {
        let ids: Vec<String> = (0..7).map(|i| i.to_string()).collect();
        let src = AllPairs::new(&ids);
        assert_eq!(src.len(), 21);
        let mut expect = Vec::new();
        for i in 0..7 {
            for j in i + 1..7 {
                expect.push((ids[i].as_str(), ids[j].as_str()));
            }
        }
        let got: Vec<_> = (0..src.len()).map(|k| src.get(k)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn all_pairs_large_index() {
        let ids: Vec<String> = (0..50_000).map(|i| i.to_string()).collect();
        let src = AllPairs::new(&ids);
        let last = src.get(src.len() - 1);
        assert_eq!(last, ("49998", "49999"));
        assert_eq!(src.get(0), ("0", "1"));
        assert_eq!(src.get(49_999), ("1", "2"));
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    fn dups(n: usize) -> Vec<RelationPair> {
        (0..n)
            .map(|i| RelationPair::new(format!("d{}", 2 * i), format!("d{}", 2 * i + 1), DUP_LABEL))
            .collect()
    }

    #[test]
    fn dup_dataset_counts() {
        let docs = ids(2000);
        let spec = SplitSpec {
            seed: 7,
            negative_ratio: 50,
            ..SplitSpec::default()
        };
        let ds = build_dup_dataset(&dups(100), &AllPairs::new(&docs), &spec).unwrap();
        let m = &ds.manifest;
        assert_eq!((m.train_positives, m.test_positives), (90, 10));
        assert_eq!((m.train_negatives, m.test_negatives), (4500, 500));
        assert_eq!(m.achieved_ratio, 50.0);
        assert_eq!(ds.train.len(), 4590);
        assert_eq!(ds.test.len(), 510);
    }

    #[test]
    fn dup_dataset_zero_ratio() {
        let docs = ids(400);
        let spec = SplitSpec {
            negative_ratio: 0,
            ..SplitSpec::default()
        };
        let ds = build_dup_dataset(&dups(100), &AllPairs::new(&docs), &spec).unwrap();
        assert!(ds
            .train
            .iter()
            .chain(&ds.test)
            .all(|p| p.label == DUP_LABEL));
        assert_eq!(ds.train.len() + ds.test.len(), 100);
    }

    #[test]
    fn dup_dataset_pool_shortfall() {
        // 6 docs -> 15 candidate pairs, 3 of them positive -> 12 negatives.
        let docs = ids(6);
        let spec = SplitSpec {
            negative_ratio: 100,
            ..SplitSpec::default()
        };
        let ds = build_dup_dataset(&dups(3), &AllPairs::new(&docs), &spec).unwrap();
        let m = &ds.manifest;
        assert_eq!(m.train_negatives + m.test_negatives, 12);
        assert_eq!(m.achieved_ratio, 4.0);
        assert_eq!(m.requested_negatives, 300);
    }

    #[test]
    fn dup_dataset_rejects_reversed_positive() {
        let pool = vec![
            ("b".to_string(), "a".to_string()),
            ("a".to_string(), "c".to_string()),
            ("c".to_string(), "c".to_string()),
            ("c".to_string(), "a".to_string()),
        ];
        let positives = vec![RelationPair::new("a", "b", DUP_LABEL)];
        let spec = SplitSpec {
            negative_ratio: 10,
            ..SplitSpec::default()
        };
        let ds = build_dup_dataset(&positives, &PairList::new(&pool), &spec).unwrap();
        let negs: Vec<_> = ds
            .train
            .iter()
            .chain(&ds.test)
            .filter(|p| p.label == NONDUP_LABEL)
            .collect();
        assert_eq!(negs.len(), 1);
        assert_eq!(negs[0].unordered_key(), ("a".into(), "c".into()));
    }

    #[test]
    fn kfold_examples() {
        let items = vec![(); 10];
        let spec = SplitSpec {
            n_folds: 10,
            ..SplitSpec::default()
        };
        let mut folds = kfold_assign(&items, &spec).unwrap();
        folds.sort();
        assert_eq!(folds, (0..10).collect::<Vec<_>>());

        let items = vec![(); 1332];
        let folds = kfold_assign(&items, &SplitSpec::default()).unwrap();
        let mut sizes = [0usize; 10];
        folds.iter().for_each(|&f| sizes[f] += 1);
        assert!(sizes.iter().all(|&s| s == 133 || s == 134), "{sizes:?}");
        assert_eq!(sizes.iter().sum::<usize>(), 1332);
    }

    #[test]
    fn kfold_too_many_folds() {
        let items = vec![(); 3];
        assert!(kfold_assign(&items, &SplitSpec::default()).is_err());
    }

    fn post(id: &str, parents: &[&str], labels: &[&str]) -> ThreadPost {
        ThreadPost {
            id: id.into(),
            thread: "t".into(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn multiparent_expansion() {
        let posts = vec![
            post("p1", &["p1"], &["question-question"]),
            post("p2", &["p1"], &["answer-answer"]),
            post("p3", &["p2"], &["answer-confirmation"]),
        ];
        let pairs = expand_multiparent(&posts).unwrap();
        assert_eq!(
            pairs,
            vec![
                RelationPair::new("p1", "p1", "question-question"),
                RelationPair::new("p2", "p1", "answer-answer"),
                RelationPair::new("p3", "p2", "answer-confirmation"),
            ]
        );

        let posts = vec![
            post("a", &["a"], &["question-question"]),
            post("b", &["a"], &["answer-answer"]),
            post("c", &["a", "b"], &["question-add", "answer-objection"]),
        ];
        let pairs = expand_multiparent(&posts).unwrap();
        assert_eq!(pairs.iter().filter(|p| p.id1 == "c").count(), 2);
    }

    #[test]
    fn multiparent_errors() {
        let dangling = vec![post("a", &["ghost"], &["answer-answer"])];
        assert!(matches!(
            expand_multiparent(&dangling),
            Err(Error::UnknownId(_))
        ));
        let misaligned = vec![post("a", &["a"], &[])];
        assert!(expand_multiparent(&misaligned).is_err());
    }

    #[test]
    fn reentrant_link_has_zero_offset() {
        let v = DocumentVector {
            id: "p1".into(),
            values: vec![0.3, -1.2, 4.0],
        };
        let index = vector_index(std::slice::from_ref(&v));
        let pairs = vec![RelationPair::new("p1", "p1", "question-question")];
        let inst = featurize(&pairs, &index, DiffMode::Signed).unwrap();
        assert_eq!(inst[0].features, vec![0.0; 3]);
    }
}
