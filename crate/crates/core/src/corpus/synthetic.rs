//! Seeded synthetic English review corpora with a matching dictionary.
//!
//! Clauses look like `the room is very clean` or `the staff is not rude`;
//! sentences are `A, but B.` and take the label of the clause after the
//! conjunction. Training sentences draw adjectives from a seeded "seen"
//! subset of each pool while test sentences draw from the full pools, so
//! held-out text contains words only the dictionary knows about.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{CorpusRecord, LabelField};
use super::labels::Sentiment;
use crate::error::{Error, Result};

const POSITIVE: &[&str] = &[
    "good", "great", "excellent", "nice", "clean", "friendly", "comfortable", "lovely", "pleasant", "wonderful",
    "fantastic", "superb", "perfect", "delightful", "helpful", "tidy", "spacious", "quiet", "fresh", "charming",
    "elegant", "gorgeous", "brilliant", "cozy", "attentive", "polite", "reliable", "stylish", "smooth", "affordable",
    "fast", "bright", "delicious", "convenient", "modern", "warm", "cheerful", "neat", "awesome", "amazing",
];
const NEGATIVE: &[&str] = &[
    "bad", "poor", "dirty", "rude", "awful", "terrible", "horrible", "noisy", "smelly", "broken", "cramped", "slow",
    "expensive", "dull", "ugly", "greasy", "stale", "filthy", "shabby", "unhelpful", "disappointing", "mediocre",
    "boring", "cold", "damp", "dark", "dreadful", "nasty", "sloppy", "flimsy", "faulty", "buggy", "laggy",
    "overpriced", "crowded", "leaky", "moldy", "sticky", "sour", "bland",
];
const NEUTRAL: &[&str] = &[
    "ordinary", "average", "normal", "standard", "typical", "usual", "regular", "plain", "simple", "common",
    "moderate", "basic", "fair", "acceptable", "okay", "adequate",
];
const NOUNS: &[&str] = &[
    "room", "staff", "service", "food", "phone", "screen", "battery", "hotel", "bed", "view", "price", "location",
    "breakfast", "camera", "design", "lobby", "pool", "shower", "wifi", "menu", "tour", "guide", "bus", "ticket",
    "seat", "window", "door", "music", "coffee", "trip",
];
const FUNCTION_WORDS: &[&str] = &["the", "is", "very", "not"];
pub const CONJUNCTIONS: &[&str] = &["but", "however", "and", "although", "so", "yet", "because", "while"];

#[derive(Debug, Clone, PartialEq)]
struct Pools {
    nouns: Vec<&'static str>,
    positive: Vec<&'static str>,
    negative: Vec<&'static str>,
    neutral: Vec<&'static str>,
}

impl Pools {
    fn full() -> Self {
        Self {
            nouns: NOUNS.to_vec(),
            positive: POSITIVE.to_vec(),
            negative: NEGATIVE.to_vec(),
            neutral: NEUTRAL.to_vec(),
        }
    }

    /// Pools totalling exactly `vocab` distinct words, function words included.
    fn with_vocab(vocab: usize) -> Result<Self> {
        let content = vocab
            .checked_sub(FUNCTION_WORDS.len())
            .filter(|c| *c >= 8)
            .ok_or_else(|| Error::config(format!("vocabulary {vocab} too small")))?;
        let full = NOUNS.len() + POSITIVE.len() + NEGATIVE.len() + NEUTRAL.len();
        if content > full {
            return Err(Error::config(format!("vocabulary {vocab} exceeds {}", full + FUNCTION_WORDS.len())));
        }
        let mut sizes = [NOUNS.len(), POSITIVE.len(), NEGATIVE.len(), NEUTRAL.len()].map(|n| (n * content / full).max(2));
        // hand out rounding leftovers round-robin
        let mut i = 0;
        while sizes.iter().sum::<usize>() < content {
            sizes[i % 4] += 1;
            i += 1;
        }
        while sizes.iter().sum::<usize>() > content {
            let k = (0..4).max_by_key(|&k| sizes[k]).unwrap();
            sizes[k] -= 1;
        }
        Ok(Self {
            nouns: NOUNS[..sizes[0]].to_vec(),
            positive: POSITIVE[..sizes[1]].to_vec(),
            negative: NEGATIVE[..sizes[2]].to_vec(),
            neutral: NEUTRAL[..sizes[3]].to_vec(),
        })
    }

    fn vocab_size(&self) -> usize {
        FUNCTION_WORDS.len() + self.nouns.len() + self.positive.len() + self.negative.len() + self.neutral.len()
    }

    /// Seeded subset keeping `fraction` of every adjective pool.
    fn seen_subset(&self, fraction: f64, rng: &mut ChaCha8Rng) -> Self {
        let take = |pool: &Vec<&'static str>, rng: &mut ChaCha8Rng| {
            let mut p = pool.clone();
            p.shuffle(rng);
            p.truncate(((fraction * pool.len() as f64).round() as usize).max(1));
            p
        };
        Self {
            nouns: self.nouns.clone(),
            positive: take(&self.positive, rng),
            negative: take(&self.negative, rng),
            neutral: take(&self.neutral, rng),
        }
    }

    fn clause(&self, label: Sentiment, negation_rate: f64, rng: &mut impl Rng) -> Vec<String> {
        let noun = *self.nouns.choose(rng).unwrap();
        let mut words = vec!["the", noun, "is"];
        let negate = label != Sentiment::Neutral && rng.gen_bool(negation_rate);
        if negate {
            words.push("not");
        } else if rng.gen_bool(0.3) {
            words.push("very");
        }
        let pool = match (label, negate) {
            (Sentiment::Positive, false) | (Sentiment::Negative, true) => &self.positive,
            (Sentiment::Negative, false) | (Sentiment::Positive, true) => &self.negative,
            (Sentiment::Neutral, _) => &self.neutral,
        };
        words.push(pool.choose(rng).unwrap());
        words.into_iter().map(String::from).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub train_sentences: usize,
    pub test_sentences: usize,
    /// Fraction of each adjective pool available to training text.
    pub seen_fraction: f64,
    pub negation_rate: f64,
    pub annotators: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_sentences: 300,
            test_sentences: 100,
            seen_fraction: 0.6,
            negation_rate: 0.15,
            annotators: 5,
        }
    }
}

/// Generated records plus the dictionary entries that describe them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<CorpusRecord>,
    pub lexicon: Vec<(String, String)>,
    pub vocab_size: usize,
}

impl SyntheticCorpus {
    pub fn corpus_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn lexicon_tsv(&self) -> String {
        self.lexicon.iter().map(|(w, c)| format!("{w}\t{c}\n")).collect()
    }

    pub fn write(&self, corpus_path: &std::path::Path, lexicon_path: &std::path::Path) -> Result<()> {
        std::fs::write(corpus_path, self.corpus_jsonl()?).map_err(|e| Error::io(corpus_path, e))?;
        std::fs::write(lexicon_path, self.lexicon_tsv()).map_err(|e| Error::io(lexicon_path, e))
    }
}

fn lexicon_for(pools: &Pools) -> Vec<(String, String)> {
    let mut lex = Vec::new();
    let mut add = |w: &str, c: &str| lex.push((w.to_string(), c.to_string()));
    for w in &pools.positive {
        add(w, "positive");
        add(w, "adjective");
    }
    for w in &pools.negative {
        add(w, "negative");
        add(w, "adjective");
    }
    for w in &pools.neutral {
        add(w, "adjective");
    }
    for w in &pools.nouns {
        add(w, "noun");
    }
    add("not", "privative");
    add("not", "adverb");
    add("if", "suppositive");
    add("why", "interrogative");
    add("very", "adverb");
    add("is", "verb");
    add("the", "accessory");
    for c in CONJUNCTIONS {
        add(c, "conjunction");
    }
    lex
}

fn clause_record(id: String, words: Vec<String>, label: Sentiment, split: &str) -> CorpusRecord {
    CorpusRecord {
        id: Some(id),
        text: words.join(" "),
        tokens: Some(words),
        label: Some(LabelField::Name(label.name().into())),
        split: Some(split.into()),
        ..Default::default()
    }
}

/// Single-level clause corpus: `per_class` clauses of each class drawn from
/// a vocabulary of exactly `vocab` words.
pub fn clause_corpus(seed: u64, per_class: usize, vocab: usize, negation_rate: f64) -> Result<SyntheticCorpus> {
    let pools = Pools::with_vocab(vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(3 * per_class);
    for label in Sentiment::ALL {
        for i in 0..per_class {
            let words = pools.clause(label, negation_rate, &mut rng);
            records.push(clause_record(format!("{}-{i}", label.name()), words, label, "train"));
        }
    }
    Ok(SyntheticCorpus {
        lexicon: lexicon_for(&pools),
        vocab_size: pools.vocab_size(),
        records,
    })
}

/// Two-level corpus of `A, but B.` sentences labelled by `B`, plus the
/// stage-one clause records of the training sentences.
pub fn contrast_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.annotators == 0 {
        return Err(Error::config("need at least one annotator"));
    }
    let full = Pools::full();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seen = full.seen_subset(cfg.seen_fraction, &mut rng);
    let mut sentences = Vec::new();
    let mut clauses = Vec::new();
    for (split, count, pools) in [("train", cfg.train_sentences, &seen), ("test", cfg.test_sentences, &full)] {
        for i in 0..count {
            let la = *Sentiment::ALL.choose(&mut rng).unwrap();
            let lb = *Sentiment::ALL.choose(&mut rng).unwrap();
            let mut a = pools.clause(la, cfg.negation_rate, &mut rng);
            let mut b = pools.clause(lb, cfg.negation_rate, &mut rng);
            a.push(",".into());
            b.insert(0, "but".into());
            b.push(".".into());
            let id = format!("{split}-s{i}");
            if split == "train" {
                clauses.push(clause_record(format!("{id}-c1"), a.clone(), la, "train"));
                clauses.push(clause_record(format!("{id}-c2"), b.clone(), lb, "train"));
            }
            let tokens: Vec<String> = a.into_iter().chain(b).collect();
            sentences.push(CorpusRecord {
                id: Some(id),
                text: tokens.join(" "),
                tokens: Some(tokens),
                annotator_scores: Some(vec![lb.score(); cfg.annotators]),
                split: Some(split.into()),
                ..Default::default()
            });
        }
    }
    clauses.extend(sentences);
    Ok(SyntheticCorpus {
        lexicon: lexicon_for(&full),
        vocab_size: full.vocab_size() + 1,
        records: clauses,
    })
}
