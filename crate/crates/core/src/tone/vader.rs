//! Rule-based valence scorer: a line-for-line port of the VADER 3.3.2 rule set.
//!
//! The port keeps the reference implementation's quirks (the `but` rescaling
//! walks values by first occurrence, punctuation emphasis is counted over the
//! whole input) so scores agree with the reference to the last bit.

use std::collections::{HashMap, HashSet};

use std::sync::LazyLock as Lazy;

use super::{normalize_valence, ToneScore};

pub const VADER_LEXICON: &str = include_str!("../../assets/lexicon/vader_lexicon.txt");
pub const EMOJI_LEXICON: &str = include_str!("../../assets/lexicon/emoji_utf8_lexicon.txt");

const B_INCR: f64 = 0.293;
const B_DECR: f64 = -0.293;
const C_INCR: f64 = 0.733;
const N_SCALAR: f64 = -0.74;

const NEGATE: &[&str] = &[
    "aint", "arent", "cannot", "cant", "couldnt", "darent", "didnt", "doesnt", "ain't", "aren't",
    "can't", "couldn't", "daren't", "didn't", "doesn't", "dont", "hadnt", "hasnt", "havent",
    "isnt", "mightnt", "mustnt", "neither", "don't", "hadn't", "hasn't", "haven't", "isn't",
    "mightn't", "mustn't", "neednt", "needn't", "never", "none", "nope", "nor", "not", "nothing",
    "nowhere", "oughtnt", "shant", "shouldnt", "uhuh", "wasnt", "werent", "oughtn't", "shan't",
    "shouldn't", "uh-uh", "wasn't", "weren't", "without", "wont", "wouldnt", "won't", "wouldn't",
    "rarely", "seldom", "despite",
];

static BOOSTERS: Lazy<HashMap<&'static str, f64>> = Lazy::new(|| {
    let incr = [
        "absolutely", "amazingly", "awfully", "completely", "considerable", "considerably",
        "decidedly", "deeply", "effing", "enormous", "enormously", "entirely", "especially",
        "exceptional", "exceptionally", "extreme", "extremely", "fabulously", "flipping",
        "flippin", "frackin", "fracking", "fricking", "frickin", "frigging", "friggin", "fully",
        "fuckin", "fucking", "fuggin", "fugging", "greatly", "hella", "highly", "hugely",
        "incredible", "incredibly", "intensely", "major", "majorly", "more", "most",
        "particularly", "purely", "quite", "really", "remarkably", "so", "substantially",
        "thoroughly", "total", "totally", "tremendous", "tremendously", "uber", "unbelievably",
        "unusually", "utter", "utterly", "very",
    ];
    let decr = [
        "almost", "barely", "hardly", "just enough", "kind of", "kinda", "kindof", "kind-of",
        "less", "little", "marginal", "marginally", "occasional", "occasionally", "partly",
        "scarce", "scarcely", "slight", "slightly", "somewhat", "sort of", "sorta", "sortof",
        "sort-of",
    ];
    incr.iter()
        .map(|w| (*w, B_INCR))
        .chain(decr.iter().map(|w| (*w, B_DECR)))
        .collect()
});

static SPECIAL_CASES: Lazy<HashMap<&'static str, f64>> = Lazy::new(|| {
    [
        ("the shit", 3.0),
        ("the bomb", 3.0),
        ("bad ass", 1.5),
        ("badass", 1.5),
        ("bus stop", 0.0),
        ("yeah right", -2.0),
        ("kiss of death", -1.5),
        ("to die for", 3.0),
        ("beating heart", 3.5),
    ]
    .into_iter()
    .collect()
});

static NEGATE_SET: Lazy<HashSet<&'static str>> = Lazy::new(|| NEGATE.iter().copied().collect());

/// Whitespace as understood by Python's `str.split()` / `str.strip()`.
pub(crate) fn is_py_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

fn is_ascii_punct(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// `str.isupper()`: at least one cased character and no lowercase ones.
fn py_isupper(s: &str) -> bool {
    let mut cased = false;
    for c in s.chars() {
        if c.is_lowercase() {
            return false;
        }
        if c.is_uppercase() {
            cased = true;
        }
    }
    cased
}

fn negated_word(word: &str) -> bool {
    NEGATE_SET.contains(word) || word.contains("n't")
}

fn strip_punc_if_word(token: &str) -> &str {
    let stripped = token.trim_matches(is_ascii_punct);
    if stripped.chars().count() <= 2 {
        token
    } else {
        stripped
    }
}

fn allcap_differential(words: &[&str]) -> bool {
    let allcap = words.iter().filter(|w| py_isupper(w)).count();
    let diff = words.len() - allcap;
    0 < diff && diff < words.len()
}

fn scalar_inc_dec(word: &str, word_lower: &str, valence: f64, is_cap_diff: bool) -> f64 {
    let mut scalar = 0.0;
    if let Some(&b) = BOOSTERS.get(word_lower) {
        scalar = b;
        if valence < 0.0 {
            scalar *= -1.0;
        }
        if py_isupper(word) && is_cap_diff {
            if valence > 0.0 {
                scalar += C_INCR;
            } else {
                scalar -= C_INCR;
            }
        }
    }
    scalar
}

/// Unrounded polarity of one pass over a text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polarity {
    pub pos: f64,
    pub neg: f64,
    pub neu: f64,
    pub compound: f64,
    /// False when the text produced no tokens.
    pub has_tokens: bool,
}

impl From<Polarity> for ToneScore {
    fn from(p: Polarity) -> Self {
        ToneScore {
            pos: p.pos,
            neg: p.neg,
            neu: p.neu,
            compound: p.compound,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Vader {
    lexicon: HashMap<String, f64>,
    emojis: HashMap<char, String>,
}

impl Default for Vader {
    fn default() -> Self {
        Self::embedded()
    }
}

impl Vader {
    /// Scorer backed by the lexicons compiled into the crate.
    pub fn embedded() -> Self {
        Self::from_sources(VADER_LEXICON, EMOJI_LEXICON)
    }

    pub fn from_sources(lexicon: &str, emoji: &str) -> Self {
        let mut lex = HashMap::new();
        for line in lexicon.trim_end_matches('\n').split('\n') {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.trim_matches(is_py_space).split('\t');
            let (Some(word), Some(measure)) = (cols.next(), cols.next()) else {
                continue;
            };
            if let Ok(v) = measure.parse::<f64>() {
                lex.insert(word.to_string(), v);
            }
        }
        let mut emojis = HashMap::new();
        for line in emoji.trim_end_matches('\n').split('\n') {
            let mut cols = line.trim_matches(is_py_space).split('\t');
            let (Some(key), Some(desc)) = (cols.next(), cols.next()) else {
                continue;
            };
            // Lookup is per code point, so multi-code-point keys can never match.
            let mut chars = key.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                emojis.insert(c, desc.to_string());
            }
        }
        Vader {
            lexicon: lex,
            emojis,
        }
    }

    pub fn lexicon_len(&self) -> usize {
        self.lexicon.len()
    }

    pub fn valence_of(&self, word: &str) -> Option<f64> {
        self.lexicon.get(word).copied()
    }

    fn replace_emojis(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut prev_space = true;
        for c in text.chars() {
            if let Some(desc) = self.emojis.get(&c) {
                if !prev_space {
                    out.push(' ');
                }
                out.push_str(desc);
                prev_space = false;
            } else {
                out.push(c);
                prev_space = c == ' ';
            }
        }
        out
    }

    /// Single-pass score of `text`, unrounded.
    pub fn polarity_scores(&self, text: &str) -> Polarity {
        let converted = self.replace_emojis(text);
        let text = converted.trim_matches(is_py_space);

        let words: Vec<&str> = text
            .split(is_py_space)
            .filter(|w| !w.is_empty())
            .map(strip_punc_if_word)
            .collect();
        let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
        let is_cap_diff = allcap_differential(&words);

        let mut sentiments: Vec<f64> = Vec::with_capacity(words.len());
        for i in 0..words.len() {
            if BOOSTERS.contains_key(lower[i].as_str()) {
                sentiments.push(0.0);
                continue;
            }
            if i + 1 < words.len() && lower[i] == "kind" && lower[i + 1] == "of" {
                sentiments.push(0.0);
                continue;
            }
            sentiments.push(self.sentiment_valence(&words, &lower, i, is_cap_diff));
        }

        but_check(&lower, &mut sentiments);
        score_valence(&sentiments, text)
    }

    fn in_lexicon(&self, w: &str) -> bool {
        self.lexicon.contains_key(w)
    }

    fn sentiment_valence(&self, words: &[&str], lower: &[String], i: usize, is_cap_diff: bool) -> f64 {
        let item = words[i];
        let item_lower = lower[i].as_str();
        let Some(&base) = self.lexicon.get(item_lower) else {
            return 0.0;
        };
        let mut valence = base;

        if item_lower == "no" && i != words.len() - 1 && self.in_lexicon(&lower[i + 1]) {
            valence = 0.0;
        }
        if (i > 0 && lower[i - 1] == "no")
            || (i > 1 && lower[i - 2] == "no")
            || (i > 2 && lower[i - 3] == "no" && (lower[i - 1] == "or" || lower[i - 1] == "nor"))
        {
            valence = base * N_SCALAR;
        }

        if py_isupper(item) && is_cap_diff {
            if valence > 0.0 {
                valence += C_INCR;
            } else {
                valence -= C_INCR;
            }
        }

        for start_i in 0..3 {
            if i > start_i && !self.in_lexicon(&lower[i - (start_i + 1)]) {
                let prev = i - (start_i + 1);
                let mut s = scalar_inc_dec(words[prev], &lower[prev], valence, is_cap_diff);
                if start_i == 1 && s != 0.0 {
                    s *= 0.95;
                }
                if start_i == 2 && s != 0.0 {
                    s *= 0.9;
                }
                valence += s;
                valence = negation_check(valence, lower, start_i, i);
                if start_i == 2 {
                    valence = special_idioms_check(valence, lower, i);
                }
            }
        }

        self.least_check(valence, lower, i)
    }

    fn least_check(&self, mut valence: f64, lower: &[String], i: usize) -> f64 {
        if i > 1 && !self.in_lexicon(&lower[i - 1]) && lower[i - 1] == "least" {
            if lower[i - 2] != "at" && lower[i - 2] != "very" {
                valence *= N_SCALAR;
            }
        } else if i > 0 && !self.in_lexicon(&lower[i - 1]) && lower[i - 1] == "least" {
            valence *= N_SCALAR;
        }
        valence
    }
}

fn negation_check(mut valence: f64, lower: &[String], start_i: usize, i: usize) -> f64 {
    match start_i {
        0 => {
            if negated_word(&lower[i - 1]) {
                valence *= N_SCALAR;
            }
        }
        1 => {
            if lower[i - 2] == "never" && (lower[i - 1] == "so" || lower[i - 1] == "this") {
                valence *= 1.25;
            } else if lower[i - 2] == "without" && lower[i - 1] == "doubt" {
            } else if negated_word(&lower[i - 2]) {
                valence *= N_SCALAR;
            }
        }
        2 => {
            if (lower[i - 3] == "never" && (lower[i - 2] == "so" || lower[i - 2] == "this"))
                || (lower[i - 1] == "so" || lower[i - 1] == "this")
            {
                valence *= 1.25;
            } else if lower[i - 3] == "without" && (lower[i - 2] == "doubt" || lower[i - 1] == "doubt") {
            } else if negated_word(&lower[i - 3]) {
                valence *= N_SCALAR;
            }
        }
        _ => {}
    }
    valence
}

fn special_idioms_check(mut valence: f64, lower: &[String], i: usize) -> f64 {
    let onezero = format!("{} {}", lower[i - 1], lower[i]);
    let twoonezero = format!("{} {} {}", lower[i - 2], lower[i - 1], lower[i]);
    let twoone = format!("{} {}", lower[i - 2], lower[i - 1]);
    let threetwoone = format!("{} {} {}", lower[i - 3], lower[i - 2], lower[i - 1]);
    let threetwo = format!("{} {}", lower[i - 3], lower[i - 2]);

    for seq in [&onezero, &twoonezero, &twoone, &threetwoone, &threetwo] {
        if let Some(&v) = SPECIAL_CASES.get(seq.as_str()) {
            valence = v;
            break;
        }
    }
    if lower.len() - 1 > i {
        let zeroone = format!("{} {}", lower[i], lower[i + 1]);
        if let Some(&v) = SPECIAL_CASES.get(zeroone.as_str()) {
            valence = v;
        }
    }
    if lower.len() - 1 > i + 1 {
        let zeroonetwo = format!("{} {} {}", lower[i], lower[i + 1], lower[i + 2]);
        if let Some(&v) = SPECIAL_CASES.get(zeroonetwo.as_str()) {
            valence = v;
        }
    }
    for ngram in [&threetwoone, &threetwo, &twoone] {
        if let Some(&b) = BOOSTERS.get(ngram.as_str()) {
            valence += b;
        }
    }
    valence
}

/// Contrastive `but`: halve what precedes it, amplify what follows.
///
/// Mirrors the reference loop, which locates each value by its first
/// occurrence in the (mutating) list rather than by position.
fn but_check(lower: &[String], sentiments: &mut [f64]) {
    let Some(bi) = lower.iter().position(|w| w == "but") else {
        return;
    };
    for k in 0..sentiments.len() {
        let sentiment = sentiments[k];
        let si = sentiments
            .iter()
            .position(|&s| s == sentiment)
            .expect("value taken from the list");
        if si < bi {
            sentiments[si] = sentiment * 0.5;
        } else if si > bi {
            sentiments[si] = sentiment * 1.5;
        }
    }
}

fn punctuation_emphasis(text: &str) -> f64 {
    let ep = text.matches('!').count().min(4);
    let ep_amplifier = ep as f64 * 0.292;
    let qm = text.matches('?').count();
    let qm_amplifier = if qm > 1 {
        if qm <= 3 {
            qm as f64 * 0.18
        } else {
            0.96
        }
    } else {
        0.0
    };
    ep_amplifier + qm_amplifier
}

fn score_valence(sentiments: &[f64], text: &str) -> Polarity {
    if sentiments.is_empty() {
        return Polarity {
            pos: 0.0,
            neg: 0.0,
            neu: 0.0,
            compound: 0.0,
            has_tokens: false,
        };
    }
    let mut sum_s: f64 = sentiments.iter().fold(0.0, |acc, s| acc + s);
    let punct = punctuation_emphasis(text);
    if sum_s > 0.0 {
        sum_s += punct;
    } else if sum_s < 0.0 {
        sum_s -= punct;
    }
    let compound = normalize_valence(sum_s);

    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    let mut neu_count = 0usize;
    for &s in sentiments {
        if s > 0.0 {
            pos_sum += s + 1.0;
        }
        if s < 0.0 {
            neg_sum += s - 1.0;
        }
        if s == 0.0 {
            neu_count += 1;
        }
    }
    if pos_sum > neg_sum.abs() {
        pos_sum += punct;
    } else if pos_sum < neg_sum.abs() {
        neg_sum -= punct;
    }
    let total = pos_sum + neg_sum.abs() + neu_count as f64;
    Polarity {
        pos: (pos_sum / total).abs(),
        neg: (neg_sum / total).abs(),
        neu: (neu_count as f64 / total).abs(),
        compound,
        has_tokens: true,
    }
}
