use std::collections::BTreeMap;

use docdiff::{EmbeddingFormat, EmbeddingTable, TokenFrequency};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows() -> impl Strategy<Value = Vec<(String, Vec<f64>)>> {
    (1usize..6).prop_flat_map(|dim| {
        prop::collection::btree_map(
            "[A-Za-z][A-Za-z0-9_'.-]{0,8}",
            prop::collection::vec(
                prop_oneof![-1e6f64..1e6, -1e-300f64..1e-300, Just(0.0), Just(-0.0)],
                dim,
            ),
            1..30,
        )
        .prop_map(|m| m.into_iter().collect())
    })
}

proptest! {
    #[test]
    fn write_then_read_is_lossless(rows in rows(), header in any::<bool>()) {
        let fmt = if header { EmbeddingFormat::TextWithHeader } else { EmbeddingFormat::TextHeaderless };
        let (table, dups) = EmbeddingTable::from_rows("t", rows.clone()).unwrap();
        prop_assert_eq!(dups, 0);
        let mut buf = Vec::new();
        table.write(&mut buf, fmt).unwrap();
        let (back, report) = EmbeddingTable::read(buf.as_slice(), fmt, "t").unwrap();
        prop_assert_eq!(report.rows, rows.len());
        for (token, values) in &rows {
            let got = back.get_exact(token).unwrap();
            let a: Vec<u64> = got.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn frequencies_match_independent_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let corpus: Vec<Vec<String>> = (0..1000)
        .map(|_| {
            let len = rng.random_range(0..40);
            (0..len)
                .map(|_| format!("t{}", rng.random_range(0..500)))
                .collect()
        })
        .collect();
    let freqs = TokenFrequency::estimate(&corpus).unwrap();

    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    corpus
        .iter()
        .flatten()
        .for_each(|t| *counts.entry(t).or_default() += 1);
    let total: u64 = counts.values().sum();
    assert_eq!(freqs.total_count(), total);
    assert_eq!(freqs.len(), counts.len());
    for (t, c) in &counts {
        assert!((freqs.prob(t) - *c as f64 / total as f64).abs() < 1e-15);
    }
    let sum: f64 = freqs.iter().map(|(_, p)| p).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert_eq!(freqs.prob("never-seen"), 0.0);

    let back = TokenFrequency::from_json(&freqs.to_json()).unwrap();
    assert_eq!(back, freqs);
}

#[test]
fn file_round_trip_through_disk() {
    let (table, _) = EmbeddingTable::from_rows(
        "t",
        vec![
            ("Apple", vec![0.1, -2.5]),
            ("apple", vec![3.0, 4.0]),
            ("Pear", vec![1e-17, 7.0]),
        ],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    table.save(&path, EmbeddingFormat::TextWithHeader).unwrap();
    let (back, report) = EmbeddingTable::load(&path, EmbeddingFormat::TextWithHeader).unwrap();
    assert_eq!(report.header_vocab_size, Some(3));
    assert_eq!(back.lookup("Pear"), Some(&[1e-17, 7.0][..]));
    assert_eq!(back.lookup("APPLE"), Some(&[3.0, 4.0][..]));
    assert_eq!(back.lookup("pear"), None);
    assert_eq!(back.lookup("Apple"), Some(&[0.1, -2.5][..]));
}
