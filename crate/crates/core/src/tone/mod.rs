//! Emotional tone: the compound valence of a publication, in [-1, 1].
//!
//! A publication is unescaped (HTML entities), split into sentences, each
//! sentence is scored by [`Vader`], and the four polarity fields are averaged
//! over sentences. Sentence-level averaging is what reproduces the tone values
//! reported for real forum messages; single-pass scoring of a long comment
//! saturates toward the extremes.

mod vader;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use vader::{Polarity, Vader, EMOJI_LEXICON, VADER_LEXICON};

/// Saturation constant of the valence normalisation.
pub const NORMALIZATION_ALPHA: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneScore {
    pub pos: f64,
    pub neg: f64,
    pub neu: f64,
    pub compound: f64,
}

impl ToneScore {
    /// Score assigned to empty or whitespace-only text.
    pub const NEUTRAL: ToneScore = ToneScore {
        pos: 0.0,
        neg: 0.0,
        neu: 1.0,
        compound: 0.0,
    };
}

/// Maps a raw valence sum into (-1, 1) with `x / sqrt(x^2 + alpha)`.
pub fn normalize_valence(raw_sum: f64) -> f64 {
    let v = raw_sum / (raw_sum * raw_sum + NORMALIZATION_ALPHA).sqrt();
    v.clamp(-1.0, 1.0)
}

/// Anything that can assign a tone to a text.
pub trait ToneScorer: Send + Sync {
    fn scorer_id(&self) -> &str;
    fn score_text(&self, text: &str) -> ToneScore;
}

/// Sentence boundaries: line breaks, and whitespace following a run of
/// `.`, `!` or `?`. Blank sentences are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for line in text.split(['\n', '\r']) {
        let mut start = 0;
        let mut prev: Option<char> = None;
        let mut iter = line.char_indices().peekable();
        while let Some((idx, c)) = iter.next() {
            if vader_space(c) && matches!(prev, Some('.' | '!' | '?')) {
                push_sentence(&mut out, &line[start..idx]);
                // swallow the rest of the whitespace run
                let mut end = idx + c.len_utf8();
                while let Some(&(j, d)) = iter.peek() {
                    if !vader_space(d) {
                        break;
                    }
                    end = j + d.len_utf8();
                    iter.next();
                }
                start = end;
                prev = None;
                continue;
            }
            prev = Some(c);
        }
        push_sentence(&mut out, &line[start..]);
    }
    out
}

fn vader_space(c: char) -> bool {
    vader::is_py_space(c)
}

fn push_sentence<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    if !s.trim_matches(vader_space).is_empty() {
        out.push(s);
    }
}

/// The reference tone model: VADER over sentences, averaged.
#[derive(Debug, Clone)]
pub struct VaderTone {
    vader: Vader,
    id: String,
}

impl Default for VaderTone {
    fn default() -> Self {
        Self::new(Vader::embedded())
    }
}

impl VaderTone {
    pub fn new(vader: Vader) -> Self {
        VaderTone {
            vader,
            id: "vader-3.3.2-sentence-mean".to_string(),
        }
    }

    pub fn vader(&self) -> &Vader {
        &self.vader
    }
}

impl ToneScorer for VaderTone {
    fn scorer_id(&self) -> &str {
        &self.id
    }

    fn score_text(&self, text: &str) -> ToneScore {
        let unescaped = html_escape::decode_html_entities(text);
        let sentences = split_sentences(&unescaped);
        let scored: Vec<Polarity> = sentences
            .iter()
            .map(|s| self.vader.polarity_scores(s))
            .filter(|p| p.has_tokens)
            .collect();
        if scored.is_empty() {
            return ToneScore::NEUTRAL;
        }
        let n = scored.len() as f64;
        let mut acc = ToneScore {
            pos: 0.0,
            neg: 0.0,
            neu: 0.0,
            compound: 0.0,
        };
        for p in &scored {
            acc.pos += p.pos;
            acc.neg += p.neg;
            acc.neu += p.neu;
            acc.compound += p.compound;
        }
        ToneScore {
            pos: acc.pos / n,
            neg: acc.neg / n,
            neu: acc.neu / n,
            compound: acc.compound / n,
        }
    }
}

/// Hex SHA-256 of the bundled valence and emoji lexicons, concatenated.
pub fn lexicon_checksum() -> String {
    let mut h = Sha256::new();
    h.update(VADER_LEXICON.as_bytes());
    h.update(EMOJI_LEXICON.as_bytes());
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_fixed_points() {
        assert_eq!(normalize_valence(0.0), 0.0);
        assert!((normalize_valence(4.0) - 4.0 / 31f64.sqrt()).abs() < 1e-15);
        assert!((normalize_valence(4.0) - 0.7184).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn normalize_is_odd_bounded_monotone(x in -100f64..100.0, d in 1e-6f64..10.0) {
            let a = normalize_valence(x);
            prop_assert!(a.abs() <= 1.0);
            prop_assert_eq!(a + normalize_valence(-x), 0.0);
            prop_assert!(normalize_valence(x + d) >= a);
        }

        #[test]
        fn fractions_sum_to_one(text in "[a-zA-Z !?.,:)]{1,80}") {
            let s = VaderTone::default().score_text(&text);
            prop_assert!((s.pos + s.neg + s.neu - 1.0).abs() < 1e-6);
            prop_assert!(s.compound.abs() <= 1.0);
        }
    }

    #[test]
    fn empty_text_is_neutral() {
        let t = VaderTone::default();
        assert_eq!(t.score_text(""), ToneScore::NEUTRAL);
        assert_eq!(t.score_text(" \n\t "), ToneScore::NEUTRAL);
    }

    #[test]
    fn negation_and_emphasis() {
        let t = VaderTone::default();
        let good = t.score_text("good").compound;
        assert!(good > 0.0);
        assert!(t.score_text("not good").compound < good);
        assert!(t.score_text("good!!!").compound >= good);
    }

    #[test]
    fn sentence_split_rules() {
        assert_eq!(
            split_sentences("Hi there. How are you?  Fine!\nnext line"),
            vec!["Hi there.", "How are you?", "Fine!", "next line"]
        );
        assert_eq!(split_sentences("out there..."), vec!["out there..."]);
        assert_eq!(split_sentences("a.b c"), vec!["a.b c"]);
        assert!(split_sentences("  \n ").is_empty());
    }

    #[test]
    fn html_entities_are_unescaped() {
        let t = VaderTone::default();
        assert_eq!(t.score_text("I &lt;3 you"), t.score_text("I <3 you"));
    }

    #[test]
    fn checksum_is_stable() {
        assert_eq!(lexicon_checksum(), lexicon_checksum());
        assert_eq!(lexicon_checksum().len(), 64);
    }
}
