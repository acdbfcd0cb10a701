//! Frozen word + character n-gram embeddings.
//!
//! Rows are the concatenation of a word vector (GloVe-style text file) and a
//! character n-gram vector (the mean of the `2gram-..`, `3gram-..`, `4gram-..`
//! vectors found for the word padded with `#BEGIN#`/`#END#`). When no vector
//! files are configured, both halves are generated from a seeded hash of the
//! token so runs stay reproducible without external downloads.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NGRAM_SIZES: [usize; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub word_dim: usize,
    pub char_dim: usize,
    pub word_vectors: Option<PathBuf>,
    pub char_vectors: Option<PathBuf>,
    pub hash_seed: u64,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            word_dim: 300,
            char_dim: 100,
            word_vectors: None,
            char_vectors: None,
            hash_seed: 0,
        }
    }
}

impl EmbeddingSpec {
    pub fn width(&self) -> usize {
        self.word_dim + self.char_dim
    }

    pub fn source(&self) -> EmbeddingSource {
        if self.word_vectors.is_some() || self.char_vectors.is_some() {
            EmbeddingSource::Files
        } else {
            EmbeddingSource::Hashed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Files,
    Hashed,
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    word_dim: usize,
    char_dim: usize,
    lookup: HashMap<String, Vec<f64>>,
    oov: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds the table for `vocabulary` from the spec's vector files, or
    /// from hashed vectors when no files are configured.
    pub fn build(spec: &EmbeddingSpec, vocabulary: &BTreeSet<String>) -> Result<Self> {
        match spec.source() {
            EmbeddingSource::Hashed => Ok(Self::hashed(spec.word_dim, spec.char_dim, spec.hash_seed, vocabulary)),
            EmbeddingSource::Files => {
                let table =
                    Self::from_vector_files(spec.word_vectors.as_deref(), spec.char_vectors.as_deref(), vocabulary)?;
                if table.word_dim != spec.word_dim || table.char_dim != spec.char_dim {
                    return Err(Error::Config(format!(
                        "embedding files have widths {}+{}, config expects {}+{}",
                        table.word_dim, table.char_dim, spec.word_dim, spec.char_dim
                    )));
                }
                Ok(table)
            }
        }
    }

    pub fn from_map(word_dim: usize, char_dim: usize, lookup: HashMap<String, Vec<f64>>) -> Self {
        let width = word_dim + char_dim;
        assert!(lookup.values().all(|v| v.len() == width), "embedding width mismatch");
        EmbeddingTable {
            word_dim,
            char_dim,
            lookup,
            oov: vec![0.0; width],
        }
    }

    pub fn hashed(word_dim: usize, char_dim: usize, seed: u64, vocabulary: &BTreeSet<String>) -> Self {
        let lookup = vocabulary
            .iter()
            .map(|tok| {
                let mut row = hashed_vector(seed, "word", tok, word_dim);
                row.extend(char_vector(tok, char_dim, |gram| {
                    Some(hashed_vector(seed, "char", gram, char_dim))
                }));
                (tok.clone(), row)
            })
            .collect();
        Self::from_map(word_dim, char_dim, lookup)
    }

    /// Loads text-format vector files, keeping only what `vocabulary` needs.
    pub fn from_vector_files(
        word_path: Option<&Path>,
        char_path: Option<&Path>,
        vocabulary: &BTreeSet<String>,
    ) -> Result<Self> {
        let (word_dim, words) = match word_path {
            Some(p) => read_vectors(p, |tok| vocabulary.contains(tok))?,
            None => (0, HashMap::new()),
        };
        let (char_dim, grams) = match char_path {
            Some(p) => {
                let needed: HashSet<String> = vocabulary.iter().flat_map(|t| ngrams(t)).collect();
                read_vectors(p, |g| needed.contains(g))?
            }
            None => (0, HashMap::new()),
        };
        let mut lookup = HashMap::new();
        for tok in vocabulary {
            let word = words.get(tok);
            let chars = char_vector(tok, char_dim, |g| grams.get(g).cloned());
            let has_chars = char_dim > 0 && ngrams(tok).iter().any(|g| grams.contains_key(g));
            if word.is_none() && !has_chars {
                continue;
            }
            let mut row = word.cloned().unwrap_or_else(|| vec![0.0; word_dim]);
            row.extend(chars);
            lookup.insert(tok.clone(), row);
        }
        Ok(Self::from_map(word_dim, char_dim, lookup))
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn char_dim(&self) -> usize {
        self.char_dim
    }

    pub fn width(&self) -> usize {
        self.word_dim + self.char_dim
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.lookup.get(token).map(Vec::as_slice)
    }

    pub fn oov_vector(&self) -> &[f64] {
        &self.oov
    }

    pub fn len(&self) -> usize {
        self.lookup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lookup.is_empty()
    }
}

/// Embeds a token sequence as an `n × width` matrix. Unknown tokens get the
/// zero vector; the empty sequence becomes a single all-zero sentinel row.
pub fn embed<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Array2<f64> {
    let width = table.width();
    if tokens.is_empty() {
        return Array2::zeros((1, width));
    }
    let mut out = Array2::zeros((tokens.len(), width));
    for (mut row, tok) in out.rows_mut().into_iter().zip(tokens) {
        let v = table.get(tok.as_ref()).unwrap_or(&table.oov);
        row.iter_mut().zip(v).for_each(|(r, x)| *r = *x);
    }
    out
}

fn ngrams(token: &str) -> Vec<String> {
    let mut chars: Vec<String> = vec!["#BEGIN#".to_string()];
    chars.extend(token.chars().map(String::from));
    chars.push("#END#".to_string());
    let mut out = Vec::new();
    for n in NGRAM_SIZES {
        for window in chars.windows(n) {
            out.push(format!("{n}gram-{}", window.concat()));
        }
    }
    out
}

/// Mean of the distinct n-gram vectors found for `token`; zeros if none.
fn char_vector(token: &str, dim: usize, mut find: impl FnMut(&str) -> Option<Vec<f64>>) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    if dim == 0 {
        return sum;
    }
    let mut tried = HashSet::new();
    let mut found = 0usize;
    for gram in ngrams(token) {
        if !tried.insert(gram.clone()) {
            continue;
        }
        if let Some(v) = find(&gram) {
            sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
            found += 1;
        }
    }
    if found > 0 {
        sum.iter_mut().for_each(|s| *s /= found as f64);
    }
    sum
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in *part {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn hashed_vector(seed: u64, kind: &str, key: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&[&seed.to_le_bytes(), kind.as_bytes(), key.as_bytes()]));
    (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect()
}

type VectorMap = HashMap<String, Vec<f64>>;

fn read_vectors(path: &Path, keep: impl Fn(&str) -> bool) -> Result<(usize, VectorMap)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut out = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        // word2vec-style "count dim" header
        if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let width = fields.len() - 1;
        let expected = *dim.get_or_insert(width);
        let loc = || format!("{}:{}", path.display(), lineno + 1);
        if width != expected || width == 0 {
            return Err(Error::parse(
                loc(),
                format!("expected {expected} values, found {width}"),
            ));
        }
        if !keep(fields[0]) {
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(loc(), e))?;
        out.insert(fields[0].to_string(), values);
    }
    Ok((dim.unwrap_or(0), out))
}
