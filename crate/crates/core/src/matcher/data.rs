//! Dialogue corpus files: one JSON object per line,
//! `{"context": [..oldest first..], "response": "..", "label": 0|1}`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueExample {
    pub context: Vec<String>,
    pub response: String,
    pub label: u8,
}

/// Token ids after truncation: at most `max_utterances` utterances (the most
/// recent) of at most `max_tokens` ids each (the last ones).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub context: Vec<Vec<usize>>,
    pub response: Vec<usize>,
    pub label: u8,
}

pub fn read_examples(reader: impl BufRead) -> Result<Vec<DialogueExample>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::DataLine {
            line: n + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: DialogueExample = serde_json::from_str(&line).map_err(|e| Error::DataLine {
            line: n + 1,
            message: e.to_string(),
        })?;
        if ex.label > 1 {
            return Err(Error::DataLine {
                line: n + 1,
                message: format!("label must be 0 or 1, got {}", ex.label),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn load_examples(path: &Path) -> Result<Vec<DialogueExample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_examples(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::DataLine { line, message } => Error::Data(format!("{}:{line}: {message}", path.display())),
        other => other,
    })
}

pub fn write_examples(mut out: impl Write, examples: &[DialogueExample]) -> std::io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn keep_last<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    items[items.len().saturating_sub(n)..].to_vec()
}

pub fn encode_utterance(vocab: &Vocabulary, text: &str, max_tokens: usize) -> Vec<usize> {
    keep_last(&vocab.encode(text), max_tokens)
}

pub fn encode_context(
    vocab: &Vocabulary,
    context: &[String],
    max_utterances: usize,
    max_tokens: usize,
) -> Vec<Vec<usize>> {
    keep_last(context, max_utterances)
        .iter()
        .map(|u| encode_utterance(vocab, u, max_tokens))
        .collect()
}

pub fn encode_example(vocab: &Vocabulary, ex: &DialogueExample, max_utterances: usize, max_tokens: usize) -> EncodedExample {
    EncodedExample {
        context: encode_context(vocab, &ex.context, max_utterances, max_tokens),
        response: encode_utterance(vocab, &ex.response, max_tokens),
        label: ex.label,
    }
}

/// Splits an evaluation file into consecutive groups of `n` candidates that
/// share one context.
pub fn group_candidates(examples: &[DialogueExample], n: usize) -> Result<Vec<&[DialogueExample]>> {
    if n == 0 {
        return Err(Error::Usage("candidates per context must be positive".into()));
    }
    if !examples.len().is_multiple_of(n) {
        return Err(Error::Data(format!(
            "{} lines do not split into groups of {n}",
            examples.len()
        )));
    }
    let groups: Vec<&[DialogueExample]> = examples.chunks(n).collect();
    for (g, group) in groups.iter().enumerate() {
        if group.iter().any(|ex| ex.context != group[0].context) {
            return Err(Error::DataLine {
                line: g * n + 1,
                message: format!("candidate group starting here mixes contexts (n = {n})"),
            });
        }
    }
    Ok(groups)
}
