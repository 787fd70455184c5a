//! Minhash LSH over schema element names and descriptions.
//!
//! Elements are shingled into character 3-grams, hashed with FNV-1a (stable
//! across platforms), and minhashed with a seeded family of multiplicative
//! hash functions. Signatures are split into bands; two elements land in the
//! same bucket when any band agrees, so identical strings always collide.

use crate::model::DatabaseSchema;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeSet, HashMap};

pub const DEFAULT_NGRAM: usize = 3;
pub const DEFAULT_BANDS: usize = 16;
pub const DEFAULT_ROWS: usize = 4;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Character n-gram shingle set of the lowercased text. Texts shorter than
/// one shingle hash as a single whole-string shingle.
pub fn shingles(text: &str, ngram: usize) -> BTreeSet<u64> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut out = BTreeSet::new();
    if chars.len() < ngram {
        if !chars.is_empty() {
            out.insert(fnv1a64(chars.iter().collect::<String>().as_bytes()));
        }
        return out;
    }
    for window in chars.windows(ngram) {
        out.insert(fnv1a64(window.iter().collect::<String>().as_bytes()));
    }
    out
}

/// Exact Jaccard similarity of two shingle sets, the quantity minhash
/// signatures approximate.
pub fn shingle_jaccard(a: &str, b: &str, ngram: usize) -> f64 {
    let sa = shingles(a, ngram);
    let sb = shingles(b, ngram);
    if sa.is_empty() && sb.is_empty() {
        return 0.0;
    }
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    inter / union
}

#[derive(Debug, Clone)]
pub struct LshIndex {
    pub ngram: usize,
    pub bands: usize,
    pub rows: usize,
    /// (a, b) pairs of the minhash family, a forced odd.
    params: Vec<(u64, u64)>,
    /// Element keys, "table" or "table.column", in schema order.
    pub elements: Vec<String>,
    signatures: Vec<Vec<u64>>,
    buckets: Vec<HashMap<u64, Vec<usize>>>,
}

impl LshIndex {
    fn hash_family(bands: usize, rows: usize, seed: u64) -> Vec<(u64, u64)> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..bands * rows).map(|_| (rng.gen::<u64>() | 1, rng.gen::<u64>())).collect()
    }

    fn signature_of(&self, text: &str) -> Vec<u64> {
        signature(text, self.ngram, &self.params)
    }

    fn band_key(signature: &[u64], band: usize, rows: usize) -> u64 {
        let slice = &signature[band * rows..(band + 1) * rows];
        let mut bytes = Vec::with_capacity(rows * 8);
        for v in slice {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fnv1a64(&bytes)
    }

    pub fn signature_for(&self, text: &str) -> Vec<u64> {
        self.signature_of(text)
    }
}

fn signature(text: &str, ngram: usize, params: &[(u64, u64)]) -> Vec<u64> {
    let shingle_set = shingles(text, ngram);
    params
        .iter()
        .map(|(a, b)| {
            shingle_set
                .iter()
                .map(|s| a.wrapping_mul(*s).wrapping_add(*b))
                .min()
                .unwrap_or(u64::MAX)
        })
        .collect()
}

/// The text an element is indexed and ranked by.
pub fn element_text(name: &str, description: &str) -> String {
    if description.is_empty() {
        name.to_lowercase()
    } else {
        format!("{} {}", name.to_lowercase(), description.to_lowercase())
    }
}

/// Enumerates schema elements in schema order as (key, index text) pairs.
pub fn schema_elements(schema: &DatabaseSchema) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for table in &schema.tables {
        out.push((table.name.clone(), element_text(&table.name, "")));
        for col in &table.columns {
            out.push((
                format!("{}.{}", table.name, col.name),
                element_text(&col.name, &col.description),
            ));
        }
    }
    out
}

pub fn build_lsh_index(
    schema: &DatabaseSchema,
    ngram: usize,
    bands: usize,
    rows: usize,
    seed: u64,
) -> LshIndex {
    let params = LshIndex::hash_family(bands, rows, seed);
    let pairs = schema_elements(schema);
    let mut elements = Vec::with_capacity(pairs.len());
    let mut signatures = Vec::with_capacity(pairs.len());
    let mut buckets: Vec<HashMap<u64, Vec<usize>>> = vec![HashMap::new(); bands];
    for (i, (key, text)) in pairs.into_iter().enumerate() {
        let sig = signature(&text, ngram, &params);
        for (band, bucket) in buckets.iter_mut().enumerate() {
            let bk = LshIndex::band_key(&sig, band, rows);
            bucket.entry(bk).or_default().push(i);
        }
        elements.push(key);
        signatures.push(sig);
    }
    LshIndex { ngram, bands, rows, params, elements, signatures, buckets }
}

/// Union of bucket matches across all probes. Superset bias is fine: this
/// feeds a recall-oriented candidate set.
pub fn lsh_candidates(index: &LshIndex, probes: &[String]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for probe in probes {
        if probe.is_empty() {
            continue;
        }
        let sig = index.signature_of(&probe.to_lowercase());
        for band in 0..index.bands {
            let bk = LshIndex::band_key(&sig, band, index.rows);
            if let Some(hits) = index.buckets[band].get(&bk) {
                for &i in hits {
                    out.insert(index.elements[i].clone());
                }
            }
        }
    }
    out
}
