//! Frozen text side of the backbone: a tokenizer and a hashed token
//! embedding table shared by the scoring heads and the synthetic generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Width of every text embedding.
pub const TEXT_DIM: usize = 32;

const VOCAB_SEED: u64 = 0x5eed_70ce_a11d_0001;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Unit-norm embedding of a single token. Pure function of the token text.
pub fn token_embedding(token: &str) -> [f64; TEXT_DIM] {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ VOCAB_SEED);
    let mut v = [0.0; TEXT_DIM];
    for x in v.iter_mut() {
        *x = StandardNormal.sample(&mut rng);
    }
    normalize(&mut v);
    v
}

/// Mean of the token embeddings of `text`; zero for text without tokens.
pub fn bag_of_tokens(text: &str) -> [f64; TEXT_DIM] {
    let mut acc = [0.0; TEXT_DIM];
    let mut count = 0usize;
    for tok in tokenize(text) {
        let e = token_embedding(&tok);
        for (a, x) in acc.iter_mut().zip(e) {
            *a += x;
        }
        count += 1;
    }
    if count > 0 {
        for a in acc.iter_mut() {
            *a /= count as f64;
        }
    }
    acc
}

/// Unit-norm bag-of-tokens, used for option strings.
pub fn phrase_embedding(text: &str) -> [f64; TEXT_DIM] {
    let mut v = bag_of_tokens(text);
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        let toks: Vec<_> = tokenize("Option A: Red-ball, 42!").collect();
        assert_eq!(toks, ["option", "a", "red", "ball", "42"]);
    }

    #[test]
    fn embeddings_are_deterministic_and_unit() {
        let a = token_embedding("guitar");
        assert_eq!(a, token_embedding("guitar"));
        assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
        assert_ne!(a, token_embedding("kite"));
    }

    #[test]
    fn empty_text_embeds_to_zero() {
        assert_eq!(bag_of_tokens("  ,; "), [0.0; TEXT_DIM]);
        assert_eq!(phrase_embedding(""), [0.0; TEXT_DIM]);
    }
}
