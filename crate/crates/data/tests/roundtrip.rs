//! Large-corpus round-trip oracle: a save -> load -> save normalization
//! pass must be byte-stable, and loaded records must equal the originals.

use atomgen_data::{load_jsonl, save_jsonl, synthetic_corpus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_record_corpus_is_byte_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let records = synthetic_corpus(500, 9, 500, 8, &mut rng).unwrap();
    assert_eq!(records.len(), 1000);

    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    save_jsonl(&a, &records).unwrap();
    let loaded = load_jsonl(&a).unwrap();
    assert_eq!(loaded.len(), records.len());
    for (orig, back) in records.iter().zip(&loaded) {
        assert_eq!(orig, back, "record {} changed across the round trip", orig.id);
    }
    save_jsonl(&b, &loaded).unwrap();
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "normalization pass must be byte-stable"
    );
}
