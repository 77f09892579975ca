//! Corpus ingestion: deriving case labels from cased text, the character
//! vocabulary, and padded minibatches.
//!
//! The unit of processing is one line of a UTF-8 plain-text file. Supervision
//! is self-derived: lowercasing a cased line and remembering which positions
//! were uppercase gives a perfectly aligned label sequence for free.
//!
//! Case mapping is the simple one-to-one Unicode mapping so labels always
//! align 1:1 with characters. Characters whose case pair is not one-to-one
//! (e.g. the few with multi-character expansions) still receive labels, but
//! cannot be restored exactly; they are left unchanged on output.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Reserved vocabulary id for padding.
pub const PAD_ID: u32 = 0;
/// Reserved vocabulary id for out-of-vocabulary characters.
pub const UNK_ID: u32 = 1;

/// Sequences longer than this are split into chunks; bounds the memory of
/// the batched recurrences.
pub const MAX_SEQ_CHARS: usize = 512;

/// Per-character case label. `Upper` marks positions that were uppercase in
/// the source text; everything else (including caseless characters) is
/// `Lower`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Upper,
    Lower,
}

impl Label {
    /// Tag index used by emissions and the CRF: U = 0, L = 1.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Label::Upper => 0,
            Label::Lower => 1,
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> Label {
        match i {
            0 => Label::Upper,
            1 => Label::Lower,
            _ => panic!("label index {i} out of range"),
        }
    }
}

/// Simple (one-to-one) lowercase mapping. For the rare characters whose full
/// lowercase expansion is multi-character, the first code point of the
/// expansion coincides with the simple mapping.
#[inline]
pub fn lower_simple(c: char) -> char {
    c.to_lowercase().next().unwrap()
}

/// Simple uppercase mapping, or `None` when the expansion is not
/// one-to-one (e.g. sharp s), in which case the character has no usable
/// single-character uppercase form.
#[inline]
pub fn upper_simple(c: char) -> Option<char> {
    let mut it = c.to_uppercase();
    let first = it.next().unwrap();
    if it.next().is_none() {
        Some(first)
    } else {
        None
    }
}

/// True when the character carries case information that lowercasing
/// removes (uppercase and titlecase letters).
#[inline]
pub fn is_cased_upper(c: char) -> bool {
    lower_simple(c) != c
}

/// One training example: lowercased characters, their vocabulary ids, and
/// the per-character labels. `ids` hold `UNK_ID` placeholders until
/// [`encode`] assigns vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub chars: Vec<char>,
    pub ids: Vec<u32>,
    pub labels: Vec<Label>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}

/// Lowercases a line and records which positions were uppercase. Returns
/// `None` for lines that are empty after stripping the trailing newline,
/// which the caller drops.
pub fn derive_labels(line: &str) -> Option<LabeledSequence> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.is_empty() {
        return None;
    }
    let mut chars = Vec::new();
    let mut labels = Vec::new();
    for c in line.chars() {
        if is_cased_upper(c) {
            chars.push(lower_simple(c));
            labels.push(Label::Upper);
        } else {
            chars.push(c);
            labels.push(Label::Lower);
        }
    }
    let ids = vec![UNK_ID; chars.len()];
    Some(LabeledSequence { chars, ids, labels })
}

/// Reconstructs cased text from lowercased characters and labels; the
/// inverse of [`derive_labels`] wherever the case mapping is one-to-one.
pub fn apply_labels(chars: &[char], labels: &[Label]) -> String {
    debug_assert_eq!(chars.len(), labels.len());
    chars
        .iter()
        .zip(labels)
        .map(|(&c, &l)| match l {
            Label::Upper => match upper_simple(c) {
                // Only restore case when it folds back; keeps output
                // lowercase-equal to the input for oddball characters.
                Some(u) if lower_simple(u) == c => u,
                _ => c,
            },
            Label::Lower => c,
        })
        .collect()
}

/// Splits a sequence into chunks of at most [`MAX_SEQ_CHARS`] characters.
pub fn split_at_cap(seq: LabeledSequence, cap: usize) -> Vec<LabeledSequence> {
    if seq.len() <= cap {
        return vec![seq];
    }
    let mut out = Vec::with_capacity(seq.len() / cap + 1);
    let mut start = 0;
    while start < seq.len() {
        let end = (start + cap).min(seq.len());
        out.push(LabeledSequence {
            chars: seq.chars[start..end].to_vec(),
            ids: seq.ids[start..end].to_vec(),
            labels: seq.labels[start..end].to_vec(),
        });
        start = end;
    }
    out
}

/// Reads a cased corpus file into labeled sequences, one per non-empty
/// line, splitting over-long lines at [`MAX_SEQ_CHARS`].
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledSequence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(seq) = derive_labels(&line) {
            out.extend(split_at_cap(seq, MAX_SEQ_CHARS));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

/// Bijection between characters and integer ids, with PAD = 0 and UNK = 1
/// reserved. Built over lowercased text only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    char_to_id: HashMap<char, u32>,
    /// Characters for ids 2.., in id order.
    chars: Vec<char>,
}

impl Vocabulary {
    /// Builds a vocabulary from the characters seen at least `min_count`
    /// times in the lowercased corpus. Ids are assigned in descending
    /// frequency, ties broken by code point, so the mapping is
    /// deterministic.
    pub fn build(path: impl AsRef<Path>, min_count: u64) -> Result<Vocabulary> {
        assert!(min_count >= 1, "min_count must be at least 1");
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut counts: HashMap<char, u64> = HashMap::new();
        let mut any_line = false;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if let Some(seq) = derive_labels(&line) {
                any_line = true;
                for &c in &seq.chars {
                    *counts.entry(c).or_insert(0) += 1;
                }
            }
        }
        if !any_line {
            return Err(Error::EmptyCorpus);
        }
        Vocabulary::from_counts(&counts, min_count)
    }

    pub fn from_counts(counts: &HashMap<char, u64>, min_count: u64) -> Result<Vocabulary> {
        let mut items: Vec<(char, u64)> = counts
            .iter()
            .filter(|(_, &n)| n >= min_count)
            .map(|(&c, &n)| (c, n))
            .collect();
        if items.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(Vocabulary::from_chars(items.into_iter().map(|(c, _)| c)))
    }

    /// Builds directly from characters already in id order (used when
    /// loading checkpoints).
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Vocabulary {
        let chars: Vec<char> = chars.into_iter().collect();
        let char_to_id = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32 + 2))
            .collect();
        Vocabulary { char_to_id, chars }
    }

    /// Total number of ids including PAD and UNK.
    pub fn size(&self) -> usize {
        self.chars.len() + 2
    }

    /// Id for a character, or `UNK_ID` when absent.
    #[inline]
    pub fn id_for(&self, c: char) -> u32 {
        self.char_to_id.get(&c).copied().unwrap_or(UNK_ID)
    }

    /// Character for a real id; `None` for PAD, UNK, and out-of-range ids.
    pub fn char_for(&self, id: u32) -> Option<char> {
        if id < 2 {
            None
        } else {
            self.chars.get(id as usize - 2).copied()
        }
    }

    /// Characters in id order (ids 2..), e.g. for serialization.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

/// Fills in vocabulary ids; characters absent from the vocabulary map to
/// `UNK_ID`. Labels are untouched.
pub fn encode(mut seq: LabeledSequence, vocab: &Vocabulary) -> LabeledSequence {
    seq.ids = seq.chars.iter().map(|&c| vocab.id_for(c)).collect();
    seq
}

/// A padded minibatch. Row-major `batch_size x t_max` matrices; padded cells
/// hold `PAD_ID` and `Label::Lower`, with `mask` false.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub labels: Vec<Label>,
    pub mask: Vec<bool>,
    pub lengths: Vec<usize>,
    /// Position of each row's example in the original corpus order; used to
    /// seed per-sequence dropout streams.
    pub example_indices: Vec<usize>,
    pub t_max: usize,
}

impl Batch {
    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    /// The unpadded id slice for row `b`.
    #[inline]
    pub fn seq_ids(&self, b: usize) -> &[u32] {
        &self.ids[b * self.t_max..b * self.t_max + self.lengths[b]]
    }

    /// The unpadded label slice for row `b`.
    #[inline]
    pub fn seq_labels(&self, b: usize) -> &[Label] {
        &self.labels[b * self.t_max..b * self.t_max + self.lengths[b]]
    }
}

/// Groups encoded examples into padded batches. With a seed, the example
/// order is shuffled deterministically; without one, corpus order is kept.
/// Every example appears exactly once; the final batch may be smaller.
pub fn make_batches(
    examples: &[LabeledSequence],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Batch>> {
    if examples.is_empty() {
        return Err(Error::EmptyExampleList);
    }
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    if let Some(seed) = shuffle_seed {
        Rng::new(seed).shuffle(&mut order);
    }
    let mut batches = Vec::with_capacity(examples.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let t_max = chunk.iter().map(|&i| examples[i].len()).max().unwrap();
        let b = chunk.len();
        let mut batch = Batch {
            ids: vec![PAD_ID; b * t_max],
            labels: vec![Label::Lower; b * t_max],
            mask: vec![false; b * t_max],
            lengths: Vec::with_capacity(b),
            example_indices: chunk.to_vec(),
            t_max,
        };
        for (row, &i) in chunk.iter().enumerate() {
            let ex = &examples[i];
            let base = row * t_max;
            batch.ids[base..base + ex.len()].copy_from_slice(&ex.ids);
            batch.labels[base..base + ex.len()].copy_from_slice(&ex.labels);
            batch.mask[base..base + ex.len()].iter_mut().for_each(|m| *m = true);
            batch.lengths.push(ex.len());
        }
        batches.push(batch);
    }
    Ok(batches)
}
