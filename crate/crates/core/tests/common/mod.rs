#![allow(dead_code)]

use glossalign::{Corpus, NormalizationConfig, Pair};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` pairs, each with 3..=6 words that occur nowhere else in the corpus.
/// Glosses are the same words upper-cased, in a shuffled order.
pub fn disjoint_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n)
        .map(|i| {
            let len = rng.random_range(3..=6);
            let words: Vec<String> = (0..len).map(|j| format!("p{i}w{j}")).collect();
            let mut glosses: Vec<String> = words.iter().map(|w| w.to_uppercase()).collect();
            glosses.shuffle(&mut rng);
            Pair::from_strings(format!("s{i}"), &words.join(" "), &glosses.join(" "))
        })
        .collect();
    normalized(Corpus::new(pairs))
}

/// Pairs drawn from a small shared vocabulary so that sentences overlap and
/// split curves have ties.
pub fn overlapping_corpus(rng: &mut ChaCha8Rng, max_pairs: usize, vocab: usize) -> Corpus {
    let n = rng.random_range(1..=max_pairs);
    let pairs = (0..n)
        .map(|i| {
            let w = rng.random_range(0..=5);
            let g = rng.random_range(0..=5);
            let words: Vec<String> = (0..w).map(|_| format!("v{}", rng.random_range(0..vocab))).collect();
            let glosses: Vec<String> = (0..g)
                .map(|_| format!("V{}", rng.random_range(0..vocab + 3)))
                .collect();
            Pair::from_strings(format!("s{i}"), &words.join(" "), &glosses.join(" "))
        })
        .collect();
    normalized(Corpus::new(pairs))
}

pub fn normalized(mut corpus: Corpus) -> Corpus {
    corpus.normalize(&NormalizationConfig::default());
    corpus
}

pub fn gloss_surfaces(corpus: &Corpus) -> Vec<String> {
    corpus.gloss_stream().map(|t| t.surface.clone()).collect()
}

pub fn text_surfaces(corpus: &Corpus) -> Vec<Vec<String>> {
    corpus
        .pairs
        .iter()
        .map(|p| p.text.iter().map(|t| t.surface.clone()).collect())
        .collect()
}
