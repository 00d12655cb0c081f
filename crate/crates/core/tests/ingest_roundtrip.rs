use mvnmf::engine::WorldAssumption;
use mvnmf::ingest::{
    assemble_view, build_diag_mask, build_labels, build_tf, load_labels, load_view, save_labels,
    save_view, tokenize, DenseBlock, LabelRecord, TfBlock, Vocabulary,
};
use mvnmf::matrix::DenseMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "sleep", "apnea", "diet", "low", "carb", "kp", "org", "a", "x",
];

fn random_docs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(0..12);
            let text: Vec<&str> = (0..len)
                .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                .collect();
            tokenize(&text.join(":"))
        })
        .collect()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("u{j}")).collect()
}

proptest! {
    #[test]
    fn tf_column_sums_are_token_counts(seed in any::<u64>(), n in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = random_docs(&mut rng, n);
        let mut vocab = Vocabulary::new();
        let tf = build_tf(&docs, &mut vocab);
        let dense = tf.counts.to_dense();
        for (j, doc) in docs.iter().enumerate() {
            prop_assert_eq!(dense.column(j).iter().sum::<f64>(), doc.len() as f64);
        }
        prop_assert!(vocab.tokens().iter().all(|t| t.chars().count() >= 2));
    }

    #[test]
    fn assembled_views_round_trip_bit_exactly(seed in any::<u64>(), n in 2usize..10, open in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = random_docs(&mut rng, n);
        let mut vocab = Vocabulary::new();
        let tf = build_tf(&docs, &mut vocab);
        let dim = rng.gen_range(1..4);
        let emb = DenseMatrix::from_vec(dim, n, (0..dim * n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let items = ids(n);
        let world = if open {
            let observed: Vec<String> = items.iter().filter(|_| rng.gen::<bool>()).cloned().collect();
            let rows = vocab.len() + dim;
            WorldAssumption::Open(build_diag_mask(rows, &items, &observed).unwrap())
        } else {
            WorldAssumption::Closed
        };
        let view = assemble_view(
            "search",
            Some(TfBlock { counts: tf.counts, vocab: vocab.into_tokens() }),
            vec![DenseBlock { name: "emb".into(), values: emb }],
            None,
            world,
        ).unwrap();

        let mut next = 0;
        for b in &view.layout.blocks {
            prop_assert_eq!(b.start, next);
            next = b.end;
        }
        prop_assert_eq!(next, view.x.rows());

        let dir = tempfile::tempdir().unwrap();
        save_view(dir.path(), &view, &items).unwrap();
        let (back, back_items) = load_view(dir.path()).unwrap();
        prop_assert_eq!(back_items, items);
        prop_assert_eq!(back.alpha.to_bits(), view.alpha.to_bits());
        prop_assert_eq!(back, view);
    }
}

#[test]
fn labels_round_trip() {
    let items = ids(4);
    let log = vec![
        LabelRecord {
            id: "u0".into(),
            class: "clicked".into(),
            value: 1.0,
        },
        LabelRecord {
            id: "u2".into(),
            class: "clicked".into(),
            value: 0.0,
        },
        LabelRecord {
            id: "u3".into(),
            class: "ignored".into(),
            value: 1.0,
        },
    ];
    let classes = vec!["clicked".to_string(), "ignored".to_string()];
    let labels = build_labels(&log, &items, &classes, None).unwrap();
    assert_eq!(labels.alpha, 0.5);
    let dir = tempfile::tempdir().unwrap();
    save_labels(dir.path(), &labels, &items).unwrap();
    let (back, back_items) = load_labels(dir.path()).unwrap();
    assert_eq!(back_items, items);
    assert_eq!(back, labels);
}
