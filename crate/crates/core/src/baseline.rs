//! Unsupervised lexicon-rule sentiment scorer.
//!
//! Words are scanned left to right. A polar word scores +1 or −1. A
//! privative directly before a polar word flips and halves it (−s/2) and is
//! itself counted with score 0. A privative with no polar word right after
//! it counts as a halved negative word (−0.5). Everything else is
//! uncounted. The sentence score is the mean over counted words.
//!
//! Adjacency is literal, so `not so bad` scores −0.75: the intervening
//! adverb breaks the negation.

use serde::Serialize;

use crate::corpus::{ClauseSplitter, Sentiment, TokenMode};
use crate::lexicon::{KeyWordCategory, Lexicons};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordScore {
    pub word: String,
    pub score: f64,
    pub counted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleScore {
    pub words: Vec<WordScore>,
    pub score: f64,
    pub label: Sentiment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleThresholds {
    pub positive_above: f64,
    pub negative_below: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            positive_above: 0.2,
            negative_below: -0.2,
        }
    }
}

impl RuleThresholds {
    pub fn classify(&self, score: f64) -> Sentiment {
        if score > self.positive_above {
            Sentiment::Positive
        } else if score < self.negative_below {
            Sentiment::Negative
        } else {
            Sentiment::Neutral
        }
    }
}

fn polarity(c: KeyWordCategory) -> Option<f64> {
    match c {
        KeyWordCategory::Positive => Some(1.0),
        KeyWordCategory::Negative => Some(-1.0),
        _ => None,
    }
}

pub fn lex_rule_score(tokens: &[String], lex: &Lexicons, thresholds: &RuleThresholds) -> RuleScore {
    let cats: Vec<KeyWordCategory> = tokens.iter().map(|t| lex.keywords.category(t)).collect();
    let mut words = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        let (score, counted) = match cats[i] {
            KeyWordCategory::Privative => {
                let next_polar = cats.get(i + 1).copied().and_then(polarity);
                match next_polar {
                    Some(_) => (0.0, true),
                    None => (-0.5, true),
                }
            }
            c => match polarity(c) {
                Some(s) if i > 0 && cats[i - 1] == KeyWordCategory::Privative => (-s / 2.0, true),
                Some(s) => (s, true),
                None => (0.0, false),
            },
        };
        words.push(WordScore {
            word: tok.clone(),
            score,
            counted,
        });
    }
    let counted: Vec<f64> = words.iter().filter(|w| w.counted).map(|w| w.score).collect();
    let score = if counted.is_empty() {
        0.0
    } else {
        counted.iter().sum::<f64>() / counted.len() as f64
    };
    RuleScore {
        label: if counted.is_empty() {
            Sentiment::Neutral
        } else {
            thresholds.classify(score)
        },
        words,
        score,
    }
}

/// Tokenizes `text` and scores it. Word mode splits on whitespace; character
/// mode segments by greedy longest match against the dictionaries.
/// Delimiter punctuation is dropped before scoring.
pub fn lex_rule_classify(text: &str, lex: &Lexicons, mode: TokenMode, thresholds: &RuleThresholds) -> RuleScore {
    let splitter = ClauseSplitter::default();
    let tokens: Vec<String> = match mode {
        TokenMode::Word => splitter.whitespace_tokens(&text.to_lowercase()),
        TokenMode::Char => {
            let chars: Vec<String> = text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect();
            lex.segment(&chars)
        }
    };
    let tokens: Vec<String> = tokens.into_iter().filter(|t| !splitter.is_delimiter_token(t)).collect();
    lex_rule_score(&tokens, lex, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> Lexicons {
        Lexicons::from_entries([("good", "positive"), ("bad", "negative"), ("not", "privative")]).unwrap()
    }

    fn score(text: &str) -> RuleScore {
        lex_rule_classify(text, &lex(), TokenMode::Word, &RuleThresholds::default())
    }

    #[test]
    fn golden_sentences() {
        assert_eq!(score("it is good").score, 1.0);
        assert_eq!(score("it is not bad").score, 0.25);
        assert_eq!(score("it is not so bad").score, -0.75);
    }

    #[test]
    fn golden_breakdowns() {
        let s = score("it is not bad");
        let counted: Vec<(&str, f64)> = s.words.iter().filter(|w| w.counted).map(|w| (w.word.as_str(), w.score)).collect();
        assert_eq!(counted, vec![("not", 0.0), ("bad", 0.5)]);
        let s = score("it is not so bad");
        let counted: Vec<(&str, f64)> = s.words.iter().filter(|w| w.counted).map(|w| (w.word.as_str(), w.score)).collect();
        assert_eq!(counted, vec![("not", -0.5), ("bad", -1.0)]);
    }

    #[test]
    fn classes() {
        assert_eq!(score("nothing polar here").label, Sentiment::Neutral);
        assert_eq!(score("nothing polar here").score, 0.0);
        let gg = score("good good");
        assert_eq!((gg.score, gg.label), (1.0, Sentiment::Positive));
        // reproduces the documented failure
        assert_eq!(score("it is not so bad").label, Sentiment::Negative);
        assert_eq!(score("It is good.").score, 1.0);
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["good", "bad", "not", "so", "it", "is", "the"]).prop_map(String::from)
    }

    proptest! {
        #[test]
        fn score_is_bounded(tokens in prop::collection::vec(word(), 1..20)) {
            let s = lex_rule_score(&tokens, &lex(), &RuleThresholds::default());
            prop_assert!((-1.0..=1.0).contains(&s.score));
        }

        #[test]
        fn appending_isolated_positive_never_lowers(tokens in prop::collection::vec(word(), 1..20)) {
            let l = lex();
            let th = RuleThresholds::default();
            let before = lex_rule_score(&tokens, &l, &th).score;
            let mut more = tokens.clone();
            more.push("the".into());
            more.push("good".into());
            prop_assert!(lex_rule_score(&more, &l, &th).score >= before);
        }

        #[test]
        fn filler_insertion_away_from_privatives(tokens in prop::collection::vec(word(), 1..20), at in 0usize..20) {
            let l = lex();
            let th = RuleThresholds::default();
            let at = at % (tokens.len() + 1);
            prop_assume!(at == 0 || tokens[at - 1] != "not");
            let mut more = tokens.clone();
            more.insert(at, "filler".into());
            prop_assert_eq!(lex_rule_score(&more, &l, &th).score, lex_rule_score(&tokens, &l, &th).score);
        }
    }
}
