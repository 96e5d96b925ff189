#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cmqe_core::corpus::{write_corpus, Format, Instance};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FLUENT: [&str; 4] = ["yaar", "bahut", "accha", "matlab"];
pub const TOKENS_PER_SENTENCE: usize = 8;

fn random_word(rng: &mut ChaCha8Rng, alphabet: &[char]) -> String {
    let len = rng.random_range(3..8);
    (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

/// Hinglish sentences with `k` of 8 tokens from a small fluent pool and the
/// rest from a wide pool of filler words; `rating_avg = 1 + 9k/8`. English
/// and Hindi channels are unrelated noise.
pub fn planted_corpus(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latin: Vec<char> = "bcdfghjklmnpqrstvwxz".chars().collect();
    let devanagari: Vec<char> = "कखगघचछजझटडतदनपबमयरलवसह".chars().collect();
    let filler: Vec<String> = (0..60).map(|_| random_word(&mut rng, &latin)).collect();
    (0..n)
        .map(|i| {
            let k = rng.random_range(0..=TOKENS_PER_SENTENCE);
            let mut words: Vec<&str> = (0..TOKENS_PER_SENTENCE)
                .map(|j| {
                    if j < k {
                        *FLUENT.choose(&mut rng).unwrap()
                    } else {
                        filler.choose(&mut rng).unwrap().as_str()
                    }
                })
                .collect();
            for j in (1..words.len()).rev() {
                words.swap(j, rng.random_range(0..=j));
            }
            let noise = |rng: &mut ChaCha8Rng, a: &[char]| {
                (0..rng.random_range(3..9))
                    .map(|_| random_word(rng, a))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            Instance {
                id: format!("syn-{i:04}"),
                english: noise(&mut rng, &latin),
                hindi: noise(&mut rng, &devanagari),
                hinglish: words.join(" "),
                rating_avg: Some(1.0 + 9.0 * k as f64 / TOKENS_PER_SENTENCE as f64),
                disagreement: Some(f64::from(rng.random_range(0u8..4))),
            }
        })
        .collect()
}

pub fn write(dir: &Path, name: &str, instances: &[Instance]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join(name);
    write_corpus(&path, instances, Format::from_path(&path)).unwrap();
    path
}

pub fn unlabeled(instances: &[Instance]) -> Vec<Instance> {
    instances
        .iter()
        .cloned()
        .map(|mut i| {
            i.rating_avg = None;
            i.disagreement = None;
            i
        })
        .collect()
}
