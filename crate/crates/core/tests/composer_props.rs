mod oracles;

use std::collections::HashMap;

use docdiff::composer::{
    self, compose_mean, compose_mean_batch, compose_sif_batch, Document, DocumentVector, SifParams,
};
use docdiff::{EmbeddingTable, Error, TokenFrequency};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Word vectors sharing a common offset so the batch has a dominant direction.
fn table(seed: u64, vocab: usize, dim: usize, offset: f64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rows = (0..vocab).map(|i| {
        let v: Vec<f64> = common
            .iter()
            .map(|c| offset * c + rng.random_range(-1.0..1.0))
            .collect();
        (format!("w{i}"), v)
    });
    EmbeddingTable::from_rows("synthetic", rows).unwrap().0
}

fn random_docs(seed: u64, n: usize, vocab: usize, len: usize) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|d| {
            let tokens: Vec<String> = (0..len)
                .map(|_| format!("w{}", rng.random_range(0..vocab)))
                .collect();
            Document::new(format!("doc{d}"), tokens)
        })
        .collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #[test]
    fn mean_ignores_token_order(seed in 0u64..1000, shift in 0usize..20) {
        let t = table(1, 50, 8, 0.0);
        let doc = random_docs(seed, 1, 60, 20).remove(0);
        let mut rotated = doc.tokens.clone();
        rotated.rotate_left(shift);
        rotated.reverse();
        let a = compose_mean(&doc, &t);
        let b = compose_mean(&Document::new("x", rotated), &t);
        prop_assert!(close(&a.values, &b.values, 1e-12));
    }

    #[test]
    fn mean_of_self_concatenation(seed in 0u64..1000) {
        let t = table(2, 50, 8, 0.0);
        let doc = random_docs(seed, 1, 50, 15).remove(0);
        let twice: Vec<String> = doc.tokens.iter().chain(&doc.tokens).cloned().collect();
        let a = compose_mean(&doc, &t);
        let b = compose_mean(&Document::new("x", twice), &t);
        prop_assert!(close(&a.values, &b.values, 1e-12));
    }

    #[test]
    fn sif_output_is_orthogonal_to_component(seed in 0u64..200) {
        let t = table(seed, 40, 6, 3.0);
        let docs = random_docs(seed + 1, 12, 40, 8);
        let freqs = TokenFrequency::estimate(
            &docs.iter().map(|d| d.tokens.clone()).collect::<Vec<_>>(),
        ).unwrap();
        let out = compose_sif_batch(&docs, &t, &freqs, &SifParams::default()).unwrap();
        let u = out.principal_component.unwrap();
        prop_assert!((u.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
        for v in &out.vectors {
            let p: f64 = v.values.iter().zip(&u).map(|(a, b)| a * b).sum();
            prop_assert!(p.abs() < 1e-9, "residual projection {p}");
        }
    }
}

#[test]
fn uniform_frequencies_scale_the_mean() {
    let t = table(3, 30, 5, 0.0);
    let docs = random_docs(4, 20, 30, 10);
    let probs: HashMap<String, f64> = (0..30).map(|i| (format!("w{i}"), 1.0 / 30.0)).collect();
    let freqs = TokenFrequency::from_probs(probs, 300).unwrap();
    let params = SifParams {
        remove_pc: false,
        ..SifParams::default()
    };
    let sif = compose_sif_batch(&docs, &t, &freqs, &params).unwrap();
    let (mean, _) = compose_mean_batch(&docs, &t);
    let k = params.a / (params.a + 1.0 / 30.0);
    for (s, m) in sif.vectors.iter().zip(&mean) {
        let scaled: Vec<f64> = m.values.iter().map(|v| v * k).collect();
        assert!(close(&s.values, &scaled, 1e-12));
    }
}

#[test]
fn component_agrees_with_eigendecomposition() {
    for seed in 0..20 {
        let n = 2 + (seed as usize % 9);
        let t = table(seed, 60, 10, 2.0);
        let docs = random_docs(seed + 100, n, 60, 12);
        let freqs =
            TokenFrequency::estimate(&docs.iter().map(|d| d.tokens.clone()).collect::<Vec<_>>())
                .unwrap();
        let raw = compose_sif_batch(
            &docs,
            &t,
            &freqs,
            &SifParams {
                remove_pc: false,
                ..SifParams::default()
            },
        )
        .unwrap();
        let rows: Vec<Vec<f64>> = raw.vectors.iter().map(|v| v.values.clone()).collect();
        let want = oracles::top_eigenvector(&rows);
        let got = compose_sif_batch(&docs, &t, &freqs, &SifParams::default()).unwrap();
        assert!(got.pc_converged);
        let angle = oracles::unsigned_angle(&got.principal_component.unwrap(), &want);
        assert!(angle < 1e-4, "seed {seed}: angle {angle:e}");
    }
}

#[test]
fn all_oov_batch_is_rejected() {
    let t = table(5, 10, 4, 0.0);
    let docs = vec![
        Document::new("a", ["zzz"]),
        Document::new("b", Vec::<String>::new()),
    ];
    let freqs = TokenFrequency::estimate(&[vec!["zzz"]]).unwrap();
    assert!(matches!(
        compose_sif_batch(&docs, &t, &freqs, &SifParams::default()),
        Err(Error::Empty(_))
    ));
    let (vecs, stats) = compose_mean_batch(&docs, &t);
    assert!(vecs.iter().all(|v| v.values.iter().all(|x| *x == 0.0)));
    assert_eq!(stats.degenerate_documents, 2);
}

#[test]
fn exported_vectors_reimport_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vectors: Vec<DocumentVector> = (0..50)
        .map(|i| DocumentVector {
            id: format!("v{i}"),
            values: (0..7)
                .map(|_| rng.random::<f64>() * 1e-3 - 1e5 * rng.random::<f64>())
                .collect(),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.jsonl");
    composer::export_vectors(&path, &vectors).unwrap();
    let back = composer::import_vectors(&path).unwrap();
    assert_eq!(back.len(), vectors.len());
    for (a, b) in vectors.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(
            composer::vector_hash(&a.values),
            composer::vector_hash(&b.values)
        );
    }
}

#[test]
fn import_rejects_ragged_vectors() {
    let text = "{\"id\":\"a\",\"vec\":[1.0,2.0]}\n{\"id\":\"b\",\"vec\":[1.0]}\n";
    match composer::parse_vectors(text.as_bytes()) {
        Err(Error::VectorLength { id, .. }) => assert_eq!(id, "b"),
        other => panic!("unexpected {other:?}"),
    }
}
