//! Hash embedder checked against frozen values from an independent FNV-1a
//! reference (computed outside this crate) plus similarity properties.

use proptest::prelude::*;
use session_intent::embed::{fnv1a64, Embedder, EmbeddingVector, HashEmbedder};

fn embed(d: usize, text: &str) -> EmbeddingVector<f64> {
    HashEmbedder::new(d).unwrap().embed(text).unwrap()
}

#[test]
fn bottled_water_d8_matches_reference() {
    // CUR:bottled -> bucket 7, sign -; CUR:water -> bucket 0, sign +;
    // bigram "CUR:bottled water" -> bucket 0, sign -, cancelling the unigram.
    assert_eq!(fnv1a64(b"CUR:bottled"), 0x9373ac4c7322721f);
    assert_eq!(fnv1a64(b"CUR:water"), 0x78bfa72682a37b18);
    assert_eq!(fnv1a64(b"CUR:bottled water"), 0x91fef9a612ebaf68);
    assert_eq!(HashEmbedder::new(8).unwrap().counts("[CUR] bottled water"), [0, 0, 0, 0, 0, 0, 0, -1]);
    assert_eq!(embed(8, "[CUR] bottled water").as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
}

#[test]
fn context_text_d16_matches_reference() {
    let v = embed(16, "[PREV] bottled water [CUR] gallon water");
    let mut want = [0.0; 16];
    want[6] = 0.5;
    want[7] = 0.5;
    want[9] = -0.5;
    want[13] = -0.5;
    assert_eq!(v.as_slice(), &want);
}

#[test]
fn celsius_d8_matches_reference() {
    let v = embed(8, "[CUR] celsius mix in");
    let a = 0.4472135954999579;
    assert_eq!(v.as_slice(), &[-a, -a, 0.0, a, 0.0, -a, a, 0.0]);
}

const WORDS: &[&str] =
    &["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "lam", "mu"];

proptest! {
    #[test]
    fn deterministic_and_unit(words in prop::collection::vec(prop::sample::select(WORDS), 0..12)) {
        let text = format!("[CUR] {}", words.join(" "));
        let a = embed(512, &text);
        let b = embed(512, &text);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.is_zero() || (a.norm() - 1.0).abs() < 1e-12);
    }

    // Controlled overlap family: b_j shares the first j of 8 tokens with a and
    // fills the rest with tokens a never uses. Bigrams are suppressed by
    // giving every token its own field.
    #[test]
    fn cosine_grows_with_shared_tokens(offset in 0usize..1000) {
        let tok = |i: usize| format!("[CUR] w{}", offset * 100 + i);
        let a: String = (0..8).map(tok).collect::<Vec<_>>().join(" ");
        let all: String = (0..8).chain(50..58).map(tok).collect::<Vec<_>>().join(" ");
        let distinct = HashEmbedder::new(4096).unwrap().counts(&all).iter().filter(|c| **c != 0).count();
        prop_assume!(distinct == 16, "bucket collision");
        let va = embed(4096, &a);
        let mut last = f64::NEG_INFINITY;
        for j in 0..=8 {
            let b: String = (0..8).map(|i| if i < j { tok(i) } else { tok(50 + i) }).collect::<Vec<_>>().join(" ");
            let c = va.cosine(&embed(4096, &b));
            prop_assert!(c > last, "j={} cos={} last={}", j, c, last);
            last = c;
        }
        prop_assert!((last - 1.0).abs() < 1e-12);
    }
}
