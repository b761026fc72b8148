use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::{aggregate_labels, Sentiment};
use super::text::{tokenize, ClauseSplitter, TokenMode};
use crate::error::{Error, Result};
use crate::lexicon::{PosTag, Segmentation};

/// A label as written in a record: a class name or a score in {1, 0.5, 0}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelField {
    Name(String),
    Score(f64),
}

impl LabelField {
    fn resolve(&self) -> Result<Sentiment> {
        match self {
            LabelField::Name(s) => Sentiment::parse(s),
            LabelField::Score(x) => match *x {
                v if v == 1.0 => Ok(Sentiment::Positive),
                v if v == 0.5 => Ok(Sentiment::Neutral),
                v if v == 0.0 => Ok(Sentiment::Negative),
                v => Err(Error::data(format!("label score {v} not in {{1, 0.5, 0}}"))),
            },
        }
    }
}

/// One line of a corpus file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

/// Stage 1 samples are single-annotator clauses; stage 2 samples are whole
/// sentences scored by several annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Clause,
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Training view: raw sentences, clauses, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum View {
    #[serde(rename = "R")]
    Raw,
    #[default]
    #[serde(rename = "C")]
    Clauses,
    #[serde(rename = "R+C")]
    Mixed,
}

impl std::str::FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(Self::Raw),
            "C" | "c" => Ok(Self::Clauses),
            "R+C" | "r+c" | "RC" => Ok(Self::Mixed),
            other => Err(Error::config(format!("unknown view '{other}' (R|C|R+C)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub id: String,
    pub text: String,
    pub tokens: Option<Vec<String>>,
    pub pos: Option<Vec<PosTag>>,
    pub stage: Stage,
    pub label: Sentiment,
    pub annotator_scores: Vec<f64>,
    pub mean_score: Option<f64>,
    pub split: Split,
}

/// A clause ready for annotation: its tokens and any supplied word
/// segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClauseInput {
    pub text: String,
    pub tokens: Vec<String>,
    pub segmentation: Option<Segmentation>,
}

impl ClauseInput {
    pub fn new(text: &str, words: Option<&[String]>, pos: Option<&[PosTag]>, mode: TokenMode) -> Result<Self> {
        let segmentation = words.map(|w| Segmentation {
            words: w.to_vec(),
            pos: pos.map(|p| p.to_vec()),
        });
        let tokens = match (mode, words) {
            (TokenMode::Word, Some(w)) => tokenize(text, mode, Some(w))?,
            (TokenMode::Word, None) => tokenize(text, mode, None)?,
            (TokenMode::Char, Some(w)) => tokenize(&w.concat(), mode, None)?,
            (TokenMode::Char, None) => tokenize(text, mode, None)?,
        };
        Ok(Self {
            text: text.trim().to_string(),
            tokens,
            segmentation,
        })
    }

    /// First and last words, skipping delimiter-only tokens.
    pub fn boundary_words(&self, splitter: &ClauseSplitter) -> (Option<&str>, Option<&str>) {
        let words: Vec<&str> = match &self.segmentation {
            Some(s) => s.words.iter().map(String::as_str).collect(),
            None => self.tokens.iter().map(String::as_str).collect(),
        };
        let mut content = words.into_iter().filter(|w| !splitter.is_delimiter_token(w));
        let first = content.next();
        let last = content.next_back().or(first);
        (first, last)
    }
}

impl RawSample {
    /// The whole sample as a single token sequence.
    pub fn as_sequence(&self, mode: TokenMode) -> Result<ClauseInput> {
        ClauseInput::new(&self.text, self.tokens.as_deref(), self.pos.as_deref(), mode)
            .map_err(|e| Error::data_in(e.to_string(), &self.id))
    }

    /// Clauses of the sample: the sample itself for stage 1, the
    /// punctuation-delimited pieces for stage 2.
    pub fn clauses(&self, mode: TokenMode, splitter: &ClauseSplitter) -> Result<Vec<ClauseInput>> {
        if self.stage == Stage::Clause {
            return Ok(vec![self.as_sequence(mode)?]);
        }
        let wrap = |e: Error| Error::data_in(e.to_string(), &self.id);
        let clauses = match &self.tokens {
            Some(tokens) => {
                let joiner = if mode == TokenMode::Word { " " } else { "" };
                splitter
                    .split_tokens(tokens, self.pos.as_deref())
                    .into_iter()
                    .map(|(words, pos)| ClauseInput::new(&words.join(joiner), Some(&words), pos.as_deref(), mode))
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?
            }
            None => splitter
                .split(&self.text)
                .map_err(wrap)?
                .iter()
                .map(|c| ClauseInput::new(c, None, None, mode))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?,
        };
        if clauses.is_empty() {
            return Err(Error::data_in("sentence has zero clauses", &self.id));
        }
        Ok(clauses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub seed: u64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<RawSample>,
}

impl Dataset {
    pub fn from_records(records: Vec<(usize, CorpusRecord)>, cfg: &SplitConfig) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset("no records".into()));
        }
        if !(0.0..=1.0).contains(&cfg.test_fraction) {
            return Err(Error::config(format!("test fraction {} outside [0, 1]", cfg.test_fraction)));
        }
        let mut samples = Vec::with_capacity(records.len());
        let mut explicit = Vec::with_capacity(records.len());
        for (line, rec) in records {
            let (sample, has_split) = parse_record(line, rec)?;
            samples.push(sample);
            explicit.push(has_split);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for stage in [Stage::Clause, Stage::Sentence] {
            let mut idx: Vec<usize> = (0..samples.len())
                .filter(|&i| !explicit[i] && samples[i].stage == stage)
                .collect();
            idx.shuffle(&mut rng);
            let n_test = (cfg.test_fraction * idx.len() as f64).round() as usize;
            for (rank, &i) in idx.iter().enumerate() {
                samples[i].split = if rank < n_test { Split::Test } else { Split::Train };
            }
        }
        Ok(Self { samples })
    }

    pub fn parse_jsonl(text: &str, cfg: &SplitConfig) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusRecord =
                serde_json::from_str(line).map_err(|e| Error::data_at(format!("malformed record: {e}"), i + 1))?;
            records.push((i + 1, rec));
        }
        Self::from_records(records, cfg)
    }

    pub fn sentences(&self, split: Option<Split>) -> impl Iterator<Item = &RawSample> {
        self.view(View::Raw, split)
    }

    /// Samples of a view, optionally restricted to one split. The mixed view
    /// lists raw samples first, then clauses.
    pub fn view(&self, view: View, split: Option<Split>) -> impl Iterator<Item = &RawSample> {
        let stages: &[Stage] = match view {
            View::Raw => &[Stage::Sentence],
            View::Clauses => &[Stage::Clause],
            View::Mixed => &[Stage::Sentence, Stage::Clause],
        };
        stages.iter().flat_map(move |&stage| {
            self.samples
                .iter()
                .filter(move |s| s.stage == stage && split.is_none_or(|sp| s.split == sp))
        })
    }

    pub fn stats(&self) -> CorpusStats {
        let mut st = CorpusStats::default();
        for s in &self.samples {
            let row = match s.stage {
                Stage::Sentence => &mut st.raw,
                Stage::Clause => &mut st.clauses,
            };
            row[s.label.index()] += 1;
        }
        st
    }
}

fn parse_record(line: usize, rec: CorpusRecord) -> Result<(RawSample, bool)> {
    let id = rec.id.clone().unwrap_or_else(|| format!("L{line}"));
    let err = |msg: String| Error::Data {
        message: msg,
        line: Some(line),
        sample: Some(id.clone()),
    };
    if rec.text.trim().is_empty() {
        return Err(err("empty text".into()));
    }
    if let (Some(t), Some(p)) = (&rec.tokens, &rec.pos) {
        if t.len() != p.len() {
            return Err(err(format!("{} tokens but {} POS tags", t.len(), p.len())));
        }
    }
    let pos = match &rec.pos {
        Some(tags) => Some(
            tags.iter()
                .map(|t| PosTag::parse(t).ok_or_else(|| err(format!("unknown POS tag '{t}'"))))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    if rec.pos.is_some() && rec.tokens.is_none() {
        return Err(err("POS tags given without tokens".into()));
    }
    let (stage, label, scores, mean) = match (&rec.label, &rec.annotator_scores) {
        (Some(l), None) => (Stage::Clause, l.resolve().map_err(|e| err(e.to_string()))?, Vec::new(), None),
        (None, Some(scores)) => {
            let agg = aggregate_labels(scores).map_err(|e| err(e.to_string()))?;
            (Stage::Sentence, agg.label, scores.clone(), Some(agg.mean))
        }
        (Some(_), Some(_)) => return Err(err("record has both label and annotator_scores".into())),
        (None, None) => return Err(err("record has neither label nor annotator_scores".into())),
    };
    let split = match rec.split.as_deref() {
        None => None,
        Some("train") => Some(Split::Train),
        Some("test") => Some(Split::Test),
        Some(other) => return Err(err(format!("unknown split '{other}'"))),
    };
    Ok((
        RawSample {
            id,
            text: rec.text,
            tokens: rec.tokens,
            pos,
            stage,
            label,
            annotator_scores: scores,
            mean_score: mean,
            split: split.unwrap_or(Split::Train),
        },
        split.is_some(),
    ))
}

pub fn load_dataset(path: impl AsRef<Path>, cfg: &SplitConfig) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::parse_jsonl(&text, cfg).map_err(|e| match e {
        Error::EmptyDataset(_) => Error::EmptyDataset(path.display().to_string()),
        other => other,
    })
}

/// Per-class counts of raw samples and clauses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub raw: [usize; 3],
    pub clauses: [usize; 3],
}

impl CorpusStats {
    pub fn raw_total(&self) -> usize {
        self.raw.iter().sum()
    }

    pub fn clause_total(&self) -> usize {
        self.clauses.iter().sum()
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8}{:>8}{:>10}", "", "raw", "clauses")?;
        for (name, i) in [("Pos.", 0), ("Neu.", 1), ("Neg.", 2)] {
            writeln!(f, "{:<8}{:>8}{:>10}", name, self.raw[i], self.clauses[i])?;
        }
        write!(f, "{:<8}{:>8}{:>10}", "Total", self.raw_total(), self.clause_total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"id":"c1","text":"the room is clean","label":"positive"}
{"id":"c2","text":"the room is dirty","label":0}
{"id":"s1","text":"the room is clean, but the staff is rude.","annotator_scores":[0,0,0.5,0,0]}
{"id":"s2","text":"nice view.","annotator_scores":[1,1,1,0.5,1],"split":"test"}
"#;

    #[test]
    fn parses_both_stages() {
        let ds = Dataset::parse_jsonl(SAMPLE, &SplitConfig { seed: 1, test_fraction: 0.0 }).unwrap();
        assert_eq!(ds.samples.len(), 4);
        assert_eq!(ds.samples[1].label, Sentiment::Negative);
        assert_eq!(ds.samples[2].stage, Stage::Sentence);
        assert_eq!(ds.samples[2].label, Sentiment::Negative);
        assert_eq!(ds.samples[3].split, Split::Test);
        let st = ds.stats();
        assert_eq!(st.raw_total(), 2);
        assert_eq!(st.clause_total(), 2);
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = "{\"text\":\"ok\",\"label\":\"positive\"}\n{\"text\": 3}\n";
        match Dataset::parse_jsonl(text, &SplitConfig::default()) {
            Err(Error::Data { line: Some(2), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(matches!(Dataset::parse_jsonl("\n", &SplitConfig::default()), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn same_seed_same_split() {
        let lines: String = (0..50)
            .map(|i| format!("{{\"text\":\"t{i}\",\"label\":\"neutral\"}}\n"))
            .collect();
        let cfg = SplitConfig { seed: 7, test_fraction: 0.3 };
        let a = Dataset::parse_jsonl(&lines, &cfg).unwrap();
        let b = Dataset::parse_jsonl(&lines, &cfg).unwrap();
        let test_a: Vec<_> = a.samples.iter().map(|s| s.split).collect();
        let test_b: Vec<_> = b.samples.iter().map(|s| s.split).collect();
        assert_eq!(test_a, test_b);
        assert_eq!(test_a.iter().filter(|s| **s == Split::Test).count(), 15);
    }

    #[test]
    fn mixed_view_is_union() {
        let ds = Dataset::parse_jsonl(SAMPLE, &SplitConfig { seed: 1, test_fraction: 0.0 }).unwrap();
        let r = ds.view(View::Raw, None).count();
        let c = ds.view(View::Clauses, None).count();
        let rc: Vec<_> = ds.view(View::Mixed, None).map(|s| s.id.clone()).collect();
        assert_eq!(rc.len(), r + c);
        let mut dedup = rc.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), rc.len());
    }

    #[test]
    fn sentence_clauses_from_text_and_tokens() {
        let ds = Dataset::parse_jsonl(SAMPLE, &SplitConfig::default()).unwrap();
        let splitter = ClauseSplitter::default();
        let cl = ds.samples[2].clauses(TokenMode::Word, &splitter).unwrap();
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[1].tokens, vec!["but", "the", "staff", "is", "rude", "."]);
        assert_eq!(cl[1].boundary_words(&splitter), (Some("but"), Some("rude")));

        let rec = r#"{"text":"服务差，但是好吃。","tokens":["服务","差","，","但是","好吃","。"],"pos":["noun","adj","others","others","adj","others"],"annotator_scores":[1]}"#;
        let ds = Dataset::parse_jsonl(rec, &SplitConfig::default()).unwrap();
        let cl = ds.samples[0].clauses(TokenMode::Char, &splitter).unwrap();
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].tokens, vec!["服", "务", "差", "，"]);
        assert_eq!(cl[1].boundary_words(&splitter), (Some("但是"), Some("好吃")));
    }

    #[test]
    fn rejects_label_and_scores_together() {
        let rec = r#"{"text":"x","label":"positive","annotator_scores":[1]}"#;
        assert!(Dataset::parse_jsonl(rec, &SplitConfig::default()).is_err());
    }
}
