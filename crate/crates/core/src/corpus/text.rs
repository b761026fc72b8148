use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clause delimiters: full-width and half-width sentence punctuation.
pub const DEFAULT_DELIMITERS: &[char] = &['，', '。', '！', '？', '；', ',', '.', '!', '?', ';'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    #[default]
    Char,
    Word,
}

impl std::str::FromStr for TokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(Self::Char),
            "word" => Ok(Self::Word),
            other => Err(Error::config(format!("unknown token mode '{other}' (char|word)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseSplitter {
    delimiters: Vec<char>,
}

impl Default for ClauseSplitter {
    fn default() -> Self {
        Self {
            delimiters: DEFAULT_DELIMITERS.to_vec(),
        }
    }
}

impl ClauseSplitter {
    pub fn new(delimiters: impl IntoIterator<Item = char>) -> Result<Self> {
        let delimiters: Vec<char> = delimiters.into_iter().collect();
        if delimiters.is_empty() {
            return Err(Error::config("clause delimiter set is empty"));
        }
        Ok(Self { delimiters })
    }

    pub fn is_delimiter(&self, c: char) -> bool {
        self.delimiters.contains(&c)
    }

    /// Whether a token consists only of delimiter characters.
    pub fn is_delimiter_token(&self, token: &str) -> bool {
        !token.is_empty() && token.chars().all(|c| self.is_delimiter(c))
    }

    /// Splits text after each run of delimiters; delimiters stay with the
    /// preceding clause and every clause is trimmed.
    pub fn split(&self, text: &str) -> Result<Vec<String>> {
        if text.trim().is_empty() {
            return Err(Error::EmptySample("text has no content".into()));
        }
        let mut clauses = Vec::new();
        let mut current = String::new();
        let mut chars = text.chars().peekable();
        while let Some(c) = chars.next() {
            current.push(c);
            if self.is_delimiter(c) && !chars.peek().is_some_and(|n| self.is_delimiter(*n)) {
                push_trimmed(&mut clauses, &current);
                current.clear();
            }
        }
        push_trimmed(&mut clauses, &current);
        Ok(clauses)
    }

    /// Splits a token sequence at delimiter tokens, which stay with the
    /// preceding clause.
    pub fn split_tokens<T: Clone>(&self, tokens: &[String], tags: Option<&[T]>) -> Vec<(Vec<String>, Option<Vec<T>>)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 0..tokens.len() {
            let next_is_delim = tokens.get(i + 1).is_some_and(|t| self.is_delimiter_token(t));
            if self.is_delimiter_token(&tokens[i]) && !next_is_delim {
                out.push((tokens[start..=i].to_vec(), tags.map(|t| t[start..=i].to_vec())));
                start = i + 1;
            }
        }
        if start < tokens.len() {
            out.push((tokens[start..].to_vec(), tags.map(|t| t[start..].to_vec())));
        }
        out
    }

    /// Word tokens from whitespace, with delimiter punctuation split off as
    /// separate tokens.
    pub fn whitespace_tokens(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            let mut word = String::new();
            let mut delims = String::new();
            for c in chunk.chars() {
                if self.is_delimiter(c) {
                    delims.push(c);
                } else {
                    if !delims.is_empty() {
                        if !word.is_empty() {
                            out.push(std::mem::take(&mut word));
                        }
                        out.push(std::mem::take(&mut delims));
                    }
                    word.push(c);
                }
            }
            if !word.is_empty() {
                out.push(word);
            }
            if !delims.is_empty() {
                out.push(delims);
            }
        }
        out
    }
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

pub fn split_clauses(text: &str) -> Result<Vec<String>> {
    ClauseSplitter::default().split(text)
}

/// Splits `text` into tokens.
///
/// Character mode yields one token per non-whitespace character, punctuation
/// included. Word mode yields the supplied segmentation, or whitespace tokens
/// when the text is whitespace-delimited; unsegmented text in a script
/// without spaces is a config error.
pub fn tokenize(text: &str, mode: TokenMode, segmentation: Option<&[String]>) -> Result<Vec<String>> {
    let tokens: Vec<String> = match mode {
        TokenMode::Char => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
        TokenMode::Word => match segmentation {
            Some(words) => words.to_vec(),
            None => {
                let delimited = text.trim().contains(char::is_whitespace) || text.is_ascii();
                if !delimited {
                    return Err(Error::config(
                        "word mode needs whitespace-delimited text or a supplied segmentation",
                    ));
                }
                ClauseSplitter::default().whitespace_tokens(text)
            }
        },
    };
    if tokens.is_empty() {
        return Err(Error::EmptySample("no tokens".into()));
    }
    Ok(tokens)
}
