use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// One training pair: `{"query": "...", "reply": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatPair {
    pub query: String,
    pub reply: String,
}

pub fn read_pairs(reader: impl BufRead) -> Result<Vec<ChatPair>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::DataLine {
            line: n + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::DataLine {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<ChatPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::DataLine { line, message } => Error::Data(format!("{}:{line}: {message}", path.display())),
        other => other,
    })
}

pub fn write_pairs(mut out: impl Write, pairs: &[ChatPair]) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Lowercased token surfaces, punctuation kept so replies can be rebuilt.
pub fn chat_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.surface.to_lowercase()).collect()
}

/// Joins tokens with spaces, attaching punctuation and clitics to the
/// previous word, and capitalizes the first letter.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    for t in tokens {
        let attach = t.chars().all(|c| ".,!?;:%)".contains(c)) || t.starts_with('\'');
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    let mut chars = out.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => out,
    }
}

/// Pairs with identical token sequences collapse to the first occurrence.
pub fn dedup_pairs(pairs: &[ChatPair]) -> Vec<ChatPair> {
    let mut seen = HashSet::new();
    pairs
        .iter()
        .filter(|p| seen.insert((chat_tokens(&p.query), chat_tokens(&p.reply))))
        .cloned()
        .collect()
}

/// Token table with `<pad>`, `<unk>`, `<bos>`, `<eos>` at ids 0 to 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatVocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl ChatVocab {
    /// Tokens seen at least `min_freq` times, most frequent first, ties by
    /// token.
    pub fn build(pairs: &[ChatPair], min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for p in pairs {
            for t in chat_tokens(&p.query).into_iter().chain(chat_tokens(&p.reply)) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq.max(1) && !RESERVED.contains(&t.as_str()))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_words(words.into_iter().map(|(t, _)| t))
    }

    fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(words).collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        ChatVocab { tokens, ids }
    }

    /// Rebuilds from a full token list, which must start with the reserved
    /// tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Model("chit-chat vocabulary must start with the reserved tokens".into()));
        }
        let v = Self::from_words(tokens.into_iter().skip(RESERVED.len()));
        if v.ids.len() != v.tokens.len() {
            return Err(Error::Model("chit-chat vocabulary has duplicate tokens".into()));
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        chat_tokens(text).iter().map(|t| self.id(t)).collect()
    }
}

impl Serialize for ChatVocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChatVocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        ChatVocab::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}
