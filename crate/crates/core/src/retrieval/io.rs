//! Binary index file.
//!
//! Layout, all integers little-endian, strings as `u32` byte length + UTF-8:
//!
//! ```text
//! magic "DBIX" | u32 version
//! u32 n_sentences
//!   per sentence: str doc_id | u32 index | str text | u32 n_tokens
//!     per token: str surface | u8 tag | u32 start | u32 end
//! u32 n_sentences (lengths) | u32 length...
//! u32 n_terms
//!   per term (sorted): str term | u32 n_postings | (u32 sentence, u32 tf)...
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Posting, SentenceIndex, SentenceRef};
use crate::error::{Error, Result};
use crate::text::{Sentence, Tag, Token};

pub const INDEX_MAGIC: &[u8; 4] = b"DBIX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.inner.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn len(&mut self, v: usize) -> std::io::Result<()> {
        let v = u32::try_from(v).map_err(|_| std::io::Error::other("length exceeds u32"))?;
        self.u32(v)
    }
    fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.len(s.len())?;
        self.inner.write_all(s.as_bytes())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated index file: {e}")))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>()?))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn str(&mut self) -> Result<String> {
        let len = self.usize()?;
        let mut buf = Vec::new();
        (&mut self.inner)
            .take(len as u64)
            .read_to_end(&mut buf)
            .map_err(|e| Error::Format(format!("truncated index file: {e}")))?;
        if buf.len() != len {
            return Err(Error::Format("truncated string in index file".into()));
        }
        String::from_utf8(buf).map_err(|_| Error::Format("invalid UTF-8 in index file".into()))
    }
}

fn tag_code(tag: Tag) -> u8 {
    Tag::ALL.iter().position(|&t| t == tag).unwrap() as u8
}

impl SentenceIndex {
    pub fn write_to(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = Writer { inner: out };
        w.inner.write_all(INDEX_MAGIC)?;
        w.u32(INDEX_FORMAT_VERSION)?;
        w.len(self.sentences.len())?;
        for s in &self.sentences {
            w.str(&s.doc_id)?;
            w.len(s.index)?;
            w.str(&s.text)?;
            w.len(s.tokens.len())?;
            for t in &s.tokens {
                w.str(&t.surface)?;
                w.u8(tag_code(t.pos))?;
                w.len(t.span.start)?;
                w.len(t.span.end)?;
            }
        }
        w.len(self.sentence_lengths.len())?;
        for &l in &self.sentence_lengths {
            w.u32(l)?;
        }
        w.len(self.postings.len())?;
        for (term, list) in &self.postings {
            w.str(term)?;
            w.len(list.len())?;
            for p in list {
                w.len(p.sentence.0)?;
                w.u32(p.tf)?;
            }
        }
        w.inner.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let mut r = Reader { inner: input };
        if &r.bytes::<4>()? != INDEX_MAGIC {
            return Err(Error::Format("not an index file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported index format version {version}")));
        }
        let n = r.usize()?;
        let mut sentences = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let doc_id = r.str()?;
            let index = r.usize()?;
            let text = r.str()?;
            let n_tokens = r.usize()?;
            let mut tokens = Vec::with_capacity(n_tokens.min(1 << 16));
            for _ in 0..n_tokens {
                let surface = r.str()?;
                let pos = *Tag::ALL
                    .get(r.u8()? as usize)
                    .ok_or_else(|| Error::Format("unknown tag code".into()))?;
                let start = r.usize()?;
                let end = r.usize()?;
                if start >= end || end > text.len() {
                    return Err(Error::Format("token span outside sentence".into()));
                }
                tokens.push(Token {
                    surface,
                    pos,
                    span: start..end,
                });
            }
            sentences.push(Sentence {
                doc_id,
                index,
                text,
                tokens,
            });
        }
        let n_lengths = r.usize()?;
        if n_lengths != n || n == 0 {
            return Err(Error::Format("sentence length table does not match sentences".into()));
        }
        let lengths = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n_terms = r.usize()?;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = r.str()?;
            let len = r.usize()?;
            let mut list = Vec::with_capacity(len.min(n));
            for _ in 0..len {
                let sentence = r.usize()?;
                if sentence >= n {
                    return Err(Error::Format("posting references a missing sentence".into()));
                }
                list.push(Posting {
                    sentence: SentenceRef(sentence),
                    tf: r.u32()?,
                });
            }
            postings.insert(term, list);
        }
        Ok(SentenceIndex::from_parts(sentences, postings, lengths))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{preprocess_document, PosTagger, RawDocument};

    fn sample() -> SentenceIndex {
        let doc = RawDocument::new("doc-1", "The ZenBook Pro is light. It weighs 1.8 kg. Déjà vu!");
        SentenceIndex::build(preprocess_document(&doc, &PosTagger::default()).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let index = sample();
        let bytes = index.to_bytes();
        let back = SentenceIndex::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, index);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.avg_length().to_bits(), index.avg_length().to_bits());
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(SentenceIndex::read_from(bad.as_slice()), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(SentenceIndex::read_from(bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(
            SentenceIndex::read_from(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
    }
}
