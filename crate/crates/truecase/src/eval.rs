//! Evaluation: character-level metrics with U as the positive class,
//! applying a trained model to raw text, and the most-frequent-casing
//! word baseline.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{
    apply_labels, derive_labels, encode, is_cased_upper, lower_simple, split_at_cap, Label,
    LabeledSequence, Vocabulary, MAX_SEQ_CHARS,
};
use crate::error::{Error, Result};
use crate::model::{predict, ModelParams};

/// Confusion counts and derived metrics over non-pad characters, with the
/// uppercase label as the positive class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> EvalReport {
        let total = tp + fp + fn_ + tn;
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            tp,
            fp,
            fn_,
            tn,
            accuracy: ratio(tp + tn, total),
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Machine-readable one-liner; metric values as percentages.
    pub fn record(&self) -> String {
        format!(
            "acc={:.4} p={:.4} r={:.4} f1={:.4} tp={} fp={} fn={} tn={}",
            self.accuracy * 100.0,
            self.precision * 100.0,
            self.recall * 100.0,
            self.f1 * 100.0,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        )
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        format!(
            "characters  {}\n\
             accuracy    {:6.2}%\n\
             precision   {:6.2}%\n\
             recall      {:6.2}%\n\
             f1          {:6.2}%\n\
             confusion   tp={} fp={} fn={} tn={}",
            self.total(),
            self.accuracy * 100.0,
            self.precision * 100.0,
            self.recall * 100.0,
            self.f1 * 100.0,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        )
    }
}

fn count_pair(pred: &[Label], gold: &[Label]) -> Result<(u64, u64, u64, u64)> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    let mut c = (0u64, 0u64, 0u64, 0u64);
    for (p, g) in pred.iter().zip(gold) {
        match (p, g) {
            (Label::Upper, Label::Upper) => c.0 += 1,
            (Label::Upper, Label::Lower) => c.1 += 1,
            (Label::Lower, Label::Upper) => c.2 += 1,
            (Label::Lower, Label::Lower) => c.3 += 1,
        }
    }
    Ok(c)
}

/// Aggregates confusion counts over aligned prediction/gold sequences.
pub fn score(predictions: &[Vec<Label>], golds: &[Vec<Label>]) -> Result<EvalReport> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: golds.len(),
        });
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (p, g) in predictions.iter().zip(golds) {
        let c = count_pair(p, g)?;
        tp += c.0;
        fp += c.1;
        fn_ += c.2;
        tn += c.3;
    }
    Ok(EvalReport::from_counts(tp, fp, fn_, tn))
}

/// Runs the model over encoded sequences and scores against their labels.
pub fn evaluate_model(
    params: &ModelParams,
    seqs: &[LabeledSequence],
) -> Result<EvalReport> {
    let counts: Result<Vec<(u64, u64, u64, u64)>> = seqs
        .par_iter()
        .map(|seq| {
            let pred = predict(params, &seq.ids)?;
            count_pair(&pred, &seq.labels)
        })
        .collect();
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for c in counts? {
        tp += c.0;
        fp += c.1;
        fn_ += c.2;
        tn += c.3;
    }
    Ok(EvalReport::from_counts(tp, fp, fn_, tn))
}

/// Truecases one line of text: lowercases it, predicts per-character
/// labels (in chunks of at most [`MAX_SEQ_CHARS`]), and restores case
/// where the label says U. Characters only ever change by case mapping.
pub fn truecase(params: &ModelParams, vocab: &Vocabulary, line: &str) -> Result<String> {
    let Some(seq) = derive_labels(line) else {
        return Ok(String::new());
    };
    let mut out = String::with_capacity(line.len());
    for chunk in split_at_cap(seq, MAX_SEQ_CHARS) {
        let chunk = encode(chunk, vocab);
        let labels = predict(params, &chunk.ids)?;
        out.push_str(&apply_labels(&chunk.chars, &labels));
    }
    Ok(out)
}

/// Most frequent surface casing per lowercased word, learned from cased
/// training text. The comparison baseline for the character model.
#[derive(Debug, Clone, Default)]
pub struct UnigramTable {
    forms: HashMap<String, String>,
}

/// Maximal alphabetic runs; everything else passes through.
fn word_runs(chars: &[char]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        if c.is_alphabetic() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            runs.push((s, i));
        }
    }
    if let Some(s) = start {
        runs.push((s, chars.len()));
    }
    runs
}

impl UnigramTable {
    /// Counts surface forms in a cased corpus file and keeps, per
    /// lowercased word, the most frequent one. Ties prefer the
    /// all-lowercase form, then the lexicographically smallest.
    pub fn train(path: impl AsRef<Path>) -> Result<UnigramTable> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut counts: HashMap<String, HashMap<String, u64>> = HashMap::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let chars: Vec<char> = line.chars().collect();
            for (s, e) in word_runs(&chars) {
                let surface: String = chars[s..e].iter().collect();
                let key: String = chars[s..e].iter().map(|&c| lower_simple(c)).collect();
                *counts.entry(key).or_default().entry(surface).or_insert(0) += 1;
            }
        }
        let mut forms = HashMap::with_capacity(counts.len());
        for (key, surfaces) in counts {
            let max = *surfaces.values().max().unwrap();
            let mut tied: Vec<&String> = surfaces
                .iter()
                .filter(|(_, &n)| n == max)
                .map(|(s, _)| s)
                .collect();
            tied.sort();
            let pick = if tied.iter().any(|s| **s == key) {
                key.clone()
            } else {
                tied[0].clone()
            };
            forms.insert(key, pick);
        }
        Ok(UnigramTable { forms })
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn surface(&self, word: &str) -> Option<&str> {
        self.forms.get(word).map(String::as_str)
    }

    /// Per-character labels for a lowercased character sequence: each word
    /// takes its most frequent casing, unseen words stay lowercase.
    pub fn label(&self, chars: &[char]) -> Vec<Label> {
        let mut labels = vec![Label::Lower; chars.len()];
        for (s, e) in word_runs(chars) {
            let key: String = chars[s..e].iter().collect();
            if let Some(surface) = self.forms.get(&key) {
                let surf: Vec<char> = surface.chars().collect();
                if surf.len() == e - s {
                    for (i, &c) in surf.iter().enumerate() {
                        if is_cased_upper(c) {
                            labels[s + i] = Label::Upper;
                        }
                    }
                }
            }
        }
        labels
    }

    /// Truecases one line with the word table alone.
    pub fn apply(&self, line: &str) -> String {
        match derive_labels(line) {
            Some(seq) => apply_labels(&seq.chars, &self.label(&seq.chars)),
            None => String::new(),
        }
    }

    /// Scores the baseline against the labels of a held-out corpus.
    pub fn evaluate(&self, seqs: &[LabeledSequence]) -> Result<EvalReport> {
        let mut preds = Vec::with_capacity(seqs.len());
        let mut golds = Vec::with_capacity(seqs.len());
        for seq in seqs {
            preds.push(self.label(&seq.chars));
            golds.push(seq.labels.clone());
        }
        score(&preds, &golds)
    }
}
