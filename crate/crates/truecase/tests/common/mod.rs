//! Shared fixtures for the integration suites: a deterministic generator
//! of English-like cased text, and a small hand-written sentence set for
//! memorization runs.

#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use truecase::rng::Rng;

pub const COMMON: &[&str] = &[
    "the", "a", "of", "to", "and", "in", "that", "it", "was", "for", "on", "with", "as", "his",
    "her", "they", "at", "be", "this", "from", "or", "had", "by", "but", "not", "what", "all",
    "were", "when", "we", "there", "can", "an", "which", "their", "said", "if", "will", "up",
    "about", "out", "many", "then", "them", "these", "so", "some", "would", "into", "has",
    "more", "two", "like", "him", "see", "time", "could", "no", "make", "than", "first", "been",
    "who", "now", "people", "my", "made", "over", "did", "down", "only", "way", "find", "use",
    "water", "long", "little", "very", "after", "word", "called", "just", "where", "most",
    "know", "garden", "river", "market", "letter", "window", "story", "bridge", "answer",
];

pub const VERBS: &[&str] = &[
    "saw", "met", "told", "asked", "helped", "visited", "thanked", "found", "joined", "called",
    "watched", "followed", "greeted", "invited", "warned", "paid", "praised", "taught",
];

/// Words that occur both as ordinary nouns (lowercase) and as given names
/// (capitalized); a word-level most-frequent-casing table cannot get both
/// uses right.
pub const AMBIGUOUS: &[&str] = &[
    "bill", "rose", "mark", "frank", "grace", "hope", "june", "dawn",
];

pub const ACRONYMS: &[&str] = &["USA", "NASA", "UN", "BBC", "IBM", "NATO"];

pub const HONORIFICS: &[&str] = &["mr", "dr", "mrs", "prof"];

const NAME_ONSETS: &[&str] = &[
    "bar", "bel", "car", "dor", "fan", "gar", "hal", "jor", "kel", "lan", "mar", "nor", "pel",
    "quin", "ral", "sam", "tar", "vin", "wes", "yor",
];
const NAME_CODAS: &[&str] = &["a", "an", "en", "ia", "in", "is", "on", "or", "us", "ya"];

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Deterministic synthetic name; `fresh` picks from a disjoint part of the
/// name space so held-out text can contain names never seen in training.
fn name(rng: &mut Rng, fresh: bool) -> String {
    let onsets = if fresh {
        &NAME_ONSETS[..4] // reserved for held-out lines
    } else {
        &NAME_ONSETS[4..]
    };
    let onset = onsets[rng.below(onsets.len() as u64) as usize];
    let coda = NAME_CODAS[rng.below(NAME_CODAS.len() as u64) as usize];
    capitalize(&format!("{onset}{coda}"))
}

fn pick<'a>(rng: &mut Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.below(pool.len() as u64) as usize]
}

/// One English-like sentence with natural casing: sentence-initial
/// capitals, capitalized names (sometimes ambiguous with common nouns),
/// the pronoun I, acronyms, honorifics, numbers.
fn sentence(rng: &mut Rng, fresh_names: bool) -> String {
    let mut words: Vec<String> = Vec::new();
    // subject
    match rng.below(10) {
        0..=2 => words.push(name(rng, fresh_names)),
        3 => {
            words.push(capitalize(pick(rng, HONORIFICS)));
            words.push(name(rng, fresh_names));
        }
        4 => words.push("I".to_string()),
        5 => words.push(capitalize(pick(rng, AMBIGUOUS))), // name use
        _ => {
            words.push(capitalize("the"));
            words.push(pick(rng, COMMON).to_string());
        }
    }
    words.push(pick(rng, VERBS).to_string());
    // object
    match rng.below(10) {
        0..=1 => words.push(name(rng, fresh_names)),
        2 => words.push(pick(rng, ACRONYMS).to_string()),
        3 => {
            words.push("the".to_string());
            words.push(pick(rng, AMBIGUOUS).to_string()); // noun use
        }
        4 => words.push(format!("{}", 1900 + rng.below(140))),
        _ => {
            words.push(if rng.below(2) == 0 { "the" } else { "a" }.to_string());
            words.push(pick(rng, COMMON).to_string());
        }
    }
    // optional trailer
    if rng.below(3) == 0 {
        words.push(pick(rng, &["in", "near", "with", "before"]).to_string());
        match rng.below(4) {
            0 => words.push(name(rng, fresh_names)),
            1 => words.push(pick(rng, ACRONYMS).to_string()),
            _ => {
                words.push("the".to_string());
                words.push(pick(rng, COMMON).to_string());
            }
        }
    }
    let punct = match rng.below(8) {
        0 => "!",
        1 => "?",
        _ => ".",
    };
    format!("{}{}", words.join(" "), punct)
}

/// `n` deterministic cased lines. Lines with index at least
/// `fresh_names_from` may use names from a reserved pool that never occurs
/// before it, so a train/test split at that index has genuinely unseen
/// names in the test part.
pub fn synthetic_corpus(seed: u64, n: usize, fresh_names_from: usize) -> Vec<String> {
    let mut rng = Rng::new(seed);
    (0..n).map(|i| sentence(&mut rng, i >= fresh_names_from)).collect()
}

/// Fifty short cased sentences for memorization checks.
pub const FIFTY_SENTENCES: &[&str] = &[
    "Jim invited Bill to his party",
    "Anna met Omar at the market.",
    "The river rose after the rain.",
    "Mr Dorin paid the bill on time.",
    "I told Grace about the garden.",
    "NASA launched a probe in 1977.",
    "She walked home with Karen.",
    "The letter came from Norway.",
    "Frank fixed the old window.",
    "We visited the BBC studio.",
    "Dawn broke over the bridge.",
    "June is warmer than April.",
    "Dr Halen taught the class.",
    "The answer was not simple.",
    "Mark thanked the whole team.",
    "Hope said it would be fine.",
    "A dog followed Sam all day.",
    "The story began in Paris.",
    "Rose planted a small tree.",
    "People from the UN arrived.",
    "He asked Nora for the key.",
    "My uncle lives in Canada.",
    "The market opened at nine.",
    "Lena read the letter twice.",
    "It rained all day in Oslo.",
    "The IBM office moved away.",
    "Carla found the lost ring.",
    "No one saw the bird leave.",
    "Tom and Ada crossed the road.",
    "The garden gate was open.",
    "Bill paid for the tickets.",
    "They met Professor Quinn.",
    "The bridge closed in March.",
    "I saw Wesia near the river.",
    "Snow fell on the old town.",
    "Grace won the spelling bee.",
    "The USA team played first.",
    "Her cat sat by the window.",
    "Jorin called twice today.",
    "The water level kept rising.",
    "Sam wrote to his sister.",
    "A letter for Mara arrived.",
    "The answer came by post.",
    "Vinora sang an old song.",
    "The first train was late.",
    "Kelis drew a long bridge.",
    "Many people know the story.",
    "The time for words passed.",
    "Nor did Taron ever return.",
    "So ended the long summer.",
];

pub fn write_lines(path: &Path, lines: &[impl AsRef<str>]) {
    let mut f = std::fs::File::create(path).unwrap();
    for line in lines {
        writeln!(f, "{}", line.as_ref()).unwrap();
    }
}
