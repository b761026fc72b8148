//! Key-word, part-of-speech and conjunction dictionaries and the lexicon
//! embeddings built from them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenMode;
use crate::encoding::RhoHotFamily;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

/// Key lexical word classes in encoding order; `Other` is the catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyWordCategory {
    Positive,
    Negative,
    Privative,
    Suppositive,
    Interrogative,
    Other,
}

impl KeyWordCategory {
    pub const COUNT: usize = 6;
    pub const ALL: [KeyWordCategory; 6] = [
        Self::Positive,
        Self::Negative,
        Self::Privative,
        Self::Suppositive,
        Self::Interrogative,
        Self::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::Privative => "privative",
            Self::Suppositive => "suppositive",
            Self::Interrogative => "interrogative",
            Self::Other => "other",
        }
    }

    pub fn is_polar(self) -> bool {
        matches!(self, Self::Positive | Self::Negative)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosTag {
    Noun,
    Adjective,
    Verb,
    Pronoun,
    Adverb,
    Preposition,
    Accessory,
    Others,
}

impl PosTag {
    pub const COUNT: usize = 8;
    pub const ALL: [PosTag; 8] = [
        Self::Noun,
        Self::Adjective,
        Self::Verb,
        Self::Pronoun,
        Self::Adverb,
        Self::Preposition,
        Self::Accessory,
        Self::Others,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Noun => "noun",
            Self::Adjective => "adjective",
            Self::Verb => "verb",
            Self::Pronoun => "pronoun",
            Self::Adverb => "adverb",
            Self::Preposition => "preposition",
            Self::Accessory => "accessory",
            Self::Others => "others",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match EntryKind::parse(s)? {
            EntryKind::Pos(t) => Some(t),
            _ => None,
        }
    }
}

/// What a dictionary line assigns its word to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    KeyWord(KeyWordCategory),
    Pos(PosTag),
    Conjunction,
}

impl EntryKind {
    pub fn parse(s: &str) -> Option<Self> {
        use KeyWordCategory as K;
        let kind = match s.trim().to_lowercase().as_str() {
            "positive" | "pos" => Self::KeyWord(K::Positive),
            "negative" | "neg" => Self::KeyWord(K::Negative),
            "privative" | "pri" => Self::KeyWord(K::Privative),
            "suppositive" | "sup" => Self::KeyWord(K::Suppositive),
            "interrogative" | "int" => Self::KeyWord(K::Interrogative),
            "noun" => Self::Pos(PosTag::Noun),
            "adjective" | "adj" => Self::Pos(PosTag::Adjective),
            "verb" => Self::Pos(PosTag::Verb),
            "pronoun" | "pron" => Self::Pos(PosTag::Pronoun),
            "adverb" | "adv" => Self::Pos(PosTag::Adverb),
            "preposition" | "prep" => Self::Pos(PosTag::Preposition),
            "accessory" | "aux" => Self::Pos(PosTag::Accessory),
            "others" => Self::Pos(PosTag::Others),
            "conjunction" | "conj" => Self::Conjunction,
            _ => return None,
        };
        Some(kind)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::KeyWord(k) => k.name(),
            Self::Pos(t) => t.name(),
            Self::Conjunction => "conjunction",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyWordLexicon {
    map: BTreeMap<String, KeyWordCategory>,
}

impl KeyWordLexicon {
    pub fn insert(&mut self, word: &str, category: KeyWordCategory) -> Result<()> {
        if category == KeyWordCategory::Other {
            return Err(Error::config(format!("'{word}': 'other' is implicit and cannot be listed")));
        }
        match self.map.get(word) {
            Some(&c) if c != category => Err(Error::config(format!(
                "'{word}' listed as both {} and {}",
                c.name(),
                category.name()
            ))),
            _ => {
                self.map.insert(word.to_string(), category);
                Ok(())
            }
        }
    }

    pub fn category(&self, word: &str) -> KeyWordCategory {
        self.map.get(word).copied().unwrap_or(KeyWordCategory::Other)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.map.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, KeyWordCategory)> {
        self.map.iter().map(|(w, c)| (w.as_str(), *c))
    }

    pub fn count(&self, category: KeyWordCategory) -> usize {
        self.map.values().filter(|&&c| c == category).count()
    }

    /// Keeps a seeded random `fraction` of the positive and of the negative
    /// words; other categories are untouched.
    pub fn with_polar_fraction(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::config(format!("polar fraction {fraction} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = KeyWordLexicon::default();
        for (w, c) in self.iter().filter(|(_, c)| !c.is_polar()) {
            out.insert(w, c)?;
        }
        for polar in [KeyWordCategory::Positive, KeyWordCategory::Negative] {
            let mut words: Vec<&str> = self.iter().filter(|(_, c)| *c == polar).map(|(w, _)| w).collect();
            words.shuffle(&mut rng);
            let keep = (fraction * words.len() as f64).round() as usize;
            for w in &words[..keep] {
                out.insert(w, polar)?;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PosLexicon {
    map: BTreeMap<String, PosTag>,
}

impl PosLexicon {
    pub fn insert(&mut self, word: &str, tag: PosTag) -> Result<()> {
        match self.map.get(word) {
            Some(&t) if t != tag => Err(Error::config(format!(
                "'{word}' tagged both {} and {}",
                t.name(),
                tag.name()
            ))),
            _ => {
                self.map.insert(word.to_string(), tag);
                Ok(())
            }
        }
    }

    pub fn tag(&self, word: &str) -> PosTag {
        self.map.get(word).copied().unwrap_or(PosTag::Others)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.map.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, PosTag)> {
        self.map.iter().map(|(w, t)| (w.as_str(), *t))
    }
}

/// Ordered conjunction list; a word's category index is its first position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConjunctionLexicon {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl ConjunctionLexicon {
    pub fn from_words<I: IntoIterator<Item = T>, T: AsRef<str>>(words: I) -> Self {
        let mut lex = Self::default();
        for w in words {
            lex.insert(w.as_ref());
        }
        lex
    }

    /// Appends `word` unless already present.
    pub fn insert(&mut self, word: &str) {
        if !self.index.contains_key(word) {
            self.index.insert(word.to_string(), self.words.len());
            self.words.push(word.to_string());
        }
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The three dictionaries used by the model and the rule baseline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicons {
    pub keywords: KeyWordLexicon,
    pub pos: PosLexicon,
    pub conjunctions: ConjunctionLexicon,
}

/// One dictionary entry in serialized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub category: String,
}

impl Lexicons {
    pub fn add(&mut self, word: &str, kind: EntryKind) -> Result<()> {
        let word = word.trim();
        if word.is_empty() {
            return Err(Error::config("empty dictionary word"));
        }
        match kind {
            EntryKind::KeyWord(c) => self.keywords.insert(word, c),
            EntryKind::Pos(t) => self.pos.insert(word, t),
            EntryKind::Conjunction => {
                self.conjunctions.insert(word);
                Ok(())
            }
        }
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut lex = Self::default();
        for (word, cat) in entries {
            let kind = EntryKind::parse(cat)
                .ok_or_else(|| Error::config(format!("unknown dictionary category '{cat}' for '{word}'")))?;
            lex.add(word, kind)?;
        }
        Ok(lex)
    }

    /// Parses `word<TAB>category` lines. Lines without a tab take their
    /// category from `default_kind` (the file stem), if any.
    pub fn parse_into(&mut self, text: &str, default_kind: Option<EntryKind>, origin: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, kind) = match line.split_once('\t') {
                Some((w, c)) => {
                    let kind = EntryKind::parse(c).ok_or_else(|| {
                        Error::data_at(format!("{origin}: unknown category '{}'", c.trim()), lineno + 1)
                    })?;
                    (w, kind)
                }
                None => match default_kind {
                    Some(k) => (line, k),
                    None => {
                        return Err(Error::data_at(
                            format!("{origin}: expected 'word<TAB>category'"),
                            lineno + 1,
                        ))
                    }
                },
            };
            self.add(word, kind)
                .map_err(|e| Error::data_at(format!("{origin}: {e}"), lineno + 1))?;
        }
        Ok(())
    }

    /// Loads a dictionary file or every file of a directory (sorted by name).
    pub fn load_path(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for f in files {
                self.load_path(&f)?;
            }
            return Ok(());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).and_then(EntryKind::parse);
        self.parse_into(&text, stem, &path.display().to_string())
    }

    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let mut lex = Self::default();
        for p in paths {
            lex.load_path(p)?;
        }
        Ok(lex)
    }

    pub fn to_entries(&self) -> Vec<LexiconEntry> {
        let kw = self.keywords.iter().map(|(w, c)| (w, c.name()));
        let pos = self.pos.iter().map(|(w, t)| (w, t.name()));
        let conj = self.conjunctions.words().iter().map(|w| (w.as_str(), "conjunction"));
        kw.chain(pos)
            .chain(conj)
            .map(|(w, c)| LexiconEntry {
                word: w.to_string(),
                category: c.to_string(),
            })
            .collect()
    }

    pub fn from_serialized(entries: &[LexiconEntry]) -> Result<Self> {
        Self::from_entries(entries.iter().map(|e| (e.word.as_str(), e.category.as_str())))
    }

    /// Whether `word` appears in any dictionary.
    pub fn knows(&self, word: &str) -> bool {
        self.keywords.contains(word) || self.pos.contains(word) || self.conjunctions.index_of(word).is_some()
    }

    fn longest_word_chars(&self) -> usize {
        let kw = self.keywords.iter().map(|(w, _)| w);
        let pos = self.pos.iter().map(|(w, _)| w);
        let conj = self.conjunctions.words().iter().map(|w| w.as_str());
        kw.chain(pos).chain(conj).map(|w| w.chars().count()).max().unwrap_or(1)
    }

    /// Greedy longest-match segmentation of a character sequence against the
    /// union of all dictionaries; unmatched characters become single-char
    /// words.
    pub fn segment(&self, chars: &[String]) -> Vec<String> {
        let max_len = self.longest_word_chars().max(1);
        let mut words = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let mut taken = 1;
            for len in (2..=max_len.min(chars.len() - i)).rev() {
                let cand: String = chars[i..i + len].concat();
                if self.knows(&cand) {
                    taken = len;
                    break;
                }
            }
            words.push(chars[i..i + taken].concat());
            i += taken;
        }
        words
    }

    pub fn stats(&self) -> LexiconStats {
        let mut keyword_counts = BTreeMap::new();
        for c in KeyWordCategory::ALL.iter().filter(|c| **c != KeyWordCategory::Other) {
            keyword_counts.insert(c.name().to_string(), self.keywords.count(*c));
        }
        let mut pos_counts = BTreeMap::new();
        for t in PosTag::ALL {
            let n = self.pos.iter().filter(|(_, x)| *x == t).count();
            pos_counts.insert(t.name().to_string(), n);
        }
        LexiconStats {
            keyword_counts,
            pos_counts,
            conjunctions: self.conjunctions.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexiconStats {
    pub keyword_counts: BTreeMap<String, usize>,
    pub pos_counts: BTreeMap<String, usize>,
    pub conjunctions: usize,
}

impl fmt::Display for LexiconStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16}{:>8}", "category", "words")?;
        for c in KeyWordCategory::ALL.iter().filter(|c| **c != KeyWordCategory::Other) {
            writeln!(f, "{:<16}{:>8}", c.name(), self.keyword_counts[c.name()])?;
        }
        for t in PosTag::ALL {
            let n = self.pos_counts[t.name()];
            if n > 0 {
                writeln!(f, "{:<16}{:>8}", format!("pos:{}", t.name()), n)?;
            }
        }
        write!(f, "{:<16}{:>8}", "conjunction", self.conjunctions)
    }
}

/// A token with the lexicon classes of the word that contains it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAnnotation {
    pub surface: String,
    /// The containing word (equal to `surface` in word mode).
    pub word: String,
    pub category: KeyWordCategory,
    pub pos: PosTag,
}

/// Pre-segmented words for a token sequence, with optional POS tags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segmentation {
    pub words: Vec<String>,
    pub pos: Option<Vec<PosTag>>,
}

/// Annotates tokens with key-word category and POS. In character mode every
/// character inherits the classes of the word containing it; containing
/// words come from `segmentation` when it covers the characters exactly,
/// and from greedy longest match otherwise.
pub fn attach_lexicon(
    tokens: &[String],
    mode: TokenMode,
    segmentation: Option<&Segmentation>,
    lex: &Lexicons,
) -> Vec<TokenAnnotation> {
    let tag_of = |word: &str, supplied: Option<PosTag>| supplied.unwrap_or_else(|| lex.pos.tag(word));
    match mode {
        TokenMode::Word => {
            let supplied = segmentation
                .filter(|s| s.words.len() == tokens.len())
                .and_then(|s| s.pos.as_ref());
            tokens
                .iter()
                .enumerate()
                .map(|(i, t)| TokenAnnotation {
                    surface: t.clone(),
                    word: t.clone(),
                    category: lex.keywords.category(t),
                    pos: tag_of(t, supplied.map(|p| p[i])),
                })
                .collect()
        }
        TokenMode::Char => {
            let seg = segmentation.filter(|s| s.words.concat() == tokens.concat());
            let (words, tags): (Vec<String>, Option<&Vec<PosTag>>) = match seg {
                Some(s) => (s.words.clone(), s.pos.as_ref().filter(|p| p.len() == s.words.len())),
                None => (lex.segment(tokens), None),
            };
            let mut out = Vec::with_capacity(tokens.len());
            let mut chars = tokens.iter();
            for (wi, word) in words.iter().enumerate() {
                let category = lex.keywords.category(word);
                let pos = tag_of(word, tags.map(|t| t[wi]));
                let mut remaining = word.chars().count();
                while remaining > 0 {
                    let Some(tok) = chars.next() else { break };
                    remaining = remaining.saturating_sub(tok.chars().count());
                    out.push(TokenAnnotation {
                        surface: tok.clone(),
                        word: word.clone(),
                        category,
                        pos,
                    });
                }
            }
            out
        }
    }
}

pub fn keyword_embed<S: Scalar>(token: &TokenAnnotation, family: &RhoHotFamily<S>) -> Result<Tensor<S>> {
    if family.count() != KeyWordCategory::COUNT {
        return Err(Error::shape(format!(
            "key-word family must have {} categories, has {}",
            KeyWordCategory::COUNT,
            family.count()
        )));
    }
    family.encode(token.category.index())
}

pub fn pos_embed<S: Scalar>(token: &TokenAnnotation, family: &RhoHotFamily<S>) -> Result<Tensor<S>> {
    if family.count() != PosTag::COUNT {
        return Err(Error::shape(format!(
            "POS family must have {} categories, has {}",
            PosTag::COUNT,
            family.count()
        )));
    }
    family.encode(token.pos.index())
}

/// ρ-hot vector of a conjunction; the all-zero vector for any other word.
pub fn conjunction_embed<S: Scalar>(
    word: &str,
    lex: &ConjunctionLexicon,
    family: &RhoHotFamily<S>,
) -> Result<Tensor<S>> {
    if family.count() != lex.len() || family.duplication() != 1 {
        return Err(Error::shape(format!(
            "conjunction family must be {}x1, is {}x{}",
            lex.len(),
            family.count(),
            family.duplication()
        )));
    }
    let mut v = vec![S::zero(); family.width()];
    family.write_into(lex.index_of(word), &mut v);
    Tensor::new(vec![v.len()], v)
}
