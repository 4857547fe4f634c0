//! Seeded synthetic corpora for exercising the pipelines without external
//! downloads.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::composer::DocumentVector;
use crate::linalg::{dot, norm};
use crate::metrics::{ANSWER_ANSWER, QUESTION_QUESTION};
use crate::relation::{RelationPair, ThreadPost, DUP_LABEL};

/// The twelve post-to-post dialogue act tags of the forum annotation scheme.
pub const DA_LABELS: [&str; 12] = [
    "answer-add",
    "answer-answer",
    "answer-confirmation",
    "answer-correction",
    "answer-objection",
    "other",
    "question-add",
    "question-confirmation",
    "question-correction",
    "question-question",
    "reproduction",
    "resolution",
];

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DupSpec {
    pub subforums: usize,
    /// Independent documents per subforum.
    pub documents: usize,
    /// Near-copies per subforum; each forms one duplicate pair.
    pub duplicates: usize,
    pub dim: usize,
    /// Standard deviation of the perturbation applied to duplicates.
    pub noise: f64,
}

impl Default for DupSpec {
    fn default() -> Self {
        DupSpec {
            subforums: 2,
            documents: 2000,
            duplicates: 100,
            dim: 16,
            noise: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DupSubforum {
    pub name: String,
    pub vectors: Vec<DocumentVector>,
    pub duplicates: Vec<RelationPair>,
}

/// Independent standard-normal documents plus `duplicates` near-copies.
/// Copy `k` of document `k` is that document plus `N(0, noise²)` noise.
pub fn dup_subforum(name: &str, spec: &DupSpec, seed: u64) -> DupSubforum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors: Vec<DocumentVector> = (0..spec.documents)
        .map(|i| DocumentVector {
            id: format!("{name}-d{i}"),
            values: gaussian(&mut rng, spec.dim, 1.0),
        })
        .collect();
    let mut duplicates = Vec::with_capacity(spec.duplicates);
    for k in 0..spec.duplicates.min(spec.documents) {
        let noise = gaussian(&mut rng, spec.dim, spec.noise);
        let values = vectors[k]
            .values
            .iter()
            .zip(&noise)
            .map(|(a, b)| a + b)
            .collect();
        let id = format!("{name}-c{k}");
        duplicates.push(RelationPair::new(
            vectors[k].id.clone(),
            id.clone(),
            DUP_LABEL,
        ));
        vectors.push(DocumentVector { id, values });
    }
    DupSubforum {
        name: name.to_owned(),
        vectors,
        duplicates,
    }
}

pub fn dup_corpus(spec: &DupSpec, seed: u64) -> Vec<DupSubforum> {
    (0..spec.subforums)
        .map(|s| dup_subforum(&format!("forum{s}"), spec, seed.wrapping_add(s as u64)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DaSpec {
    /// Total post-to-parent links, one per post.
    pub links: usize,
    /// Links carrying the majority tag `answer-answer`.
    pub majority: usize,
    pub threads: usize,
    pub dim: usize,
    /// Length of each class's offset vector.
    pub offset_scale: f64,
    pub noise: f64,
}

impl Default for DaSpec {
    fn default() -> Self {
        DaSpec {
            links: 1000,
            majority: 403,
            threads: 100,
            dim: 32,
            offset_scale: 3.0,
            noise: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaCorpus {
    pub posts: Vec<ThreadPost>,
    pub vectors: Vec<DocumentVector>,
    /// Unit offset direction per tag; zero for `question-question`.
    pub offsets: Vec<(String, Vec<f64>)>,
}

/// Orthonormal directions obtained by Gram-Schmidt on Gaussian draws.
fn orthonormal(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    assert!(count <= dim, "need dim >= {count} for orthogonal offsets");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim, 1.0);
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Threads whose links follow class-specific offsets.
///
/// Every thread opens with a reentrant `question-question` post (its own
/// parent, so its offset is exactly zero). Every later post picks an earlier
/// post of its thread as parent and sits at `parent + offset(tag) + noise`.
/// Exactly `majority` links are `answer-answer`; the remaining non-opening
/// links cycle through the other ten tags.
pub fn da_corpus(spec: &DaSpec, seed: u64) -> DaCorpus {
    assert!(spec.threads > 0 && spec.links >= spec.threads);
    assert!(spec.majority <= spec.links - spec.threads);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let others: Vec<&str> = DA_LABELS
        .iter()
        .copied()
        .filter(|l| *l != ANSWER_ANSWER && *l != QUESTION_QUESTION)
        .collect();
    let directions = orthonormal(&mut rng, others.len() + 1, spec.dim);
    let mut offsets: Vec<(String, Vec<f64>)> = Vec::new();
    offsets.push((QUESTION_QUESTION.to_owned(), vec![0.0; spec.dim]));
    offsets.push((ANSWER_ANSWER.to_owned(), directions[0].clone()));
    for (k, l) in others.iter().enumerate() {
        offsets.push(((*l).to_owned(), directions[k + 1].clone()));
    }
    let offset_of = |label: &str| &offsets.iter().find(|(l, _)| l == label).unwrap().1;

    let replies = spec.links - spec.threads;
    let mut reply_labels: Vec<&str> = vec![ANSWER_ANSWER; spec.majority];
    for i in 0..replies - spec.majority {
        reply_labels.push(others[i % others.len()]);
    }
    reply_labels.shuffle(&mut rng);

    let mut posts = Vec::with_capacity(spec.links);
    let mut vectors = Vec::with_capacity(spec.links);
    let mut next_reply = 0;
    for t in 0..spec.threads {
        let thread = format!("t{t}");
        // Spread replies as evenly as possible over threads.
        let n_replies = replies / spec.threads + usize::from(t < replies % spec.threads);
        let mut thread_vecs: Vec<(String, Vec<f64>)> = Vec::with_capacity(n_replies + 1);

        let root = format!("{thread}-p0");
        let root_vec = gaussian(&mut rng, spec.dim, 1.0);
        posts.push(ThreadPost {
            id: root.clone(),
            thread: thread.clone(),
            parents: vec![root.clone()],
            labels: vec![QUESTION_QUESTION.to_owned()],
        });
        thread_vecs.push((root, root_vec));

        for r in 0..n_replies {
            let label = reply_labels[next_reply];
            next_reply += 1;
            let parent = rng.random_range(0..thread_vecs.len());
            let (parent_id, parent_vec) = thread_vecs[parent].clone();
            let noise = gaussian(&mut rng, spec.dim, spec.noise);
            let offset = offset_of(label);
            let values: Vec<f64> = parent_vec
                .iter()
                .zip(offset)
                .zip(&noise)
                .map(|((p, o), n)| p + spec.offset_scale * o + n)
                .collect();
            let id = format!("{thread}-p{}", r + 1);
            posts.push(ThreadPost {
                id: id.clone(),
                thread: thread.clone(),
                parents: vec![parent_id],
                labels: vec![label.to_owned()],
            });
            thread_vecs.push((id, values));
        }
        vectors.extend(
            thread_vecs
                .into_iter()
                .map(|(id, values)| DocumentVector { id, values }),
        );
    }
    DaCorpus {
        posts,
        vectors,
        offsets,
    }
}
