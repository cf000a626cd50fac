//! Ingested documents with their sentence indexes, optionally persisted as
//! `documents/<doc_id>.json` plus `documents/<doc_id>.idx` under a data
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::candidates::extract_triples;
use crate::error::{Error, Result};
use crate::retrieval::SentenceIndex;
use crate::text::{RawDocument, TextPipeline};

/// Persisted description of a document; the index lives next to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub doc_id: String,
    #[serde(default)]
    pub title: Option<String>,
    pub text: String,
    pub n_sentences: usize,
    pub n_triples: usize,
}

#[derive(Debug)]
pub struct StoredDocument {
    pub meta: DocumentMeta,
    pub index: Arc<SentenceIndex>,
}

/// `"doc-"` and the first 16 hex digits of the SHA-256 of the text, so
/// ingesting the same text twice yields the same document.
pub fn document_id(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("doc-{hex}")
}

#[derive(Debug)]
pub struct DocStore {
    dir: Option<PathBuf>,
    pipeline: TextPipeline,
    docs: RwLock<BTreeMap<String, Arc<StoredDocument>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl DocStore {
    pub fn in_memory(pipeline: TextPipeline) -> Self {
        DocStore {
            dir: None,
            pipeline,
            docs: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens (creating if needed) `<data_dir>/documents` and loads every
    /// stored document. A missing or unreadable index is rebuilt from the
    /// stored text.
    pub fn open(data_dir: &Path, pipeline: TextPipeline) -> Result<Self> {
        let dir = data_dir.join("documents");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let store = DocStore {
            dir: Some(dir.clone()),
            pipeline,
            docs: RwLock::new(BTreeMap::new()),
        };
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let meta: DocumentMeta = serde_json::from_slice(&raw)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let index = match SentenceIndex::load(&path.with_extension("idx")) {
                Ok(index) => index,
                Err(_) => {
                    let (index, _) = store.build(&meta.doc_id, &meta.text, meta.title.clone())?;
                    index.save(&path.with_extension("idx"))?;
                    index
                }
            };
            store.docs.write().insert(
                meta.doc_id.clone(),
                Arc::new(StoredDocument {
                    meta,
                    index: Arc::new(index),
                }),
            );
        }
        Ok(store)
    }

    pub fn pipeline(&self) -> &TextPipeline {
        &self.pipeline
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn build(&self, doc_id: &str, text: &str, title: Option<String>) -> Result<(SentenceIndex, usize)> {
        let mut raw = RawDocument::new(doc_id, text);
        raw.title = title;
        let sentences = self.pipeline.preprocess(&raw)?;
        let n_triples = sentences.iter().map(|s| extract_triples(s).len()).sum();
        Ok((SentenceIndex::build(sentences)?, n_triples))
    }

    /// Preprocesses, indexes and (with a data directory) persists a
    /// document. Re-ingesting identical text returns the stored document.
    pub fn ingest(&self, title: Option<String>, text: &str) -> Result<Arc<StoredDocument>> {
        if text.trim().is_empty() {
            return Err(Error::Ingest("document text is empty".into()));
        }
        let doc_id = document_id(text);
        if let Some(doc) = self.get(&doc_id) {
            return Ok(doc);
        }
        let (index, n_triples) = self.build(&doc_id, text, title.clone())?;
        let meta = DocumentMeta {
            doc_id: doc_id.clone(),
            title,
            text: text.to_string(),
            n_sentences: index.n_sentences(),
            n_triples,
        };
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(format!("{doc_id}.idx")), &index.to_bytes())?;
            let json = serde_json::to_vec_pretty(&meta)?;
            write_atomic(&dir.join(format!("{doc_id}.json")), &json)?;
        }
        let doc = Arc::new(StoredDocument {
            meta,
            index: Arc::new(index),
        });
        Ok(self.docs.write().entry(doc_id).or_insert(doc).clone())
    }

    pub fn get(&self, doc_id: &str) -> Option<Arc<StoredDocument>> {
        self.docs.read().get(doc_id).cloned()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.docs.read().contains_key(doc_id)
    }

    pub fn len(&self) -> usize {
        self.docs.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.read().is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.docs.read().keys().cloned().collect()
    }

    /// Rebuilds and rewrites every index from the stored text. Returns the
    /// number of documents indexed.
    pub fn rebuild_indexes(&self) -> Result<usize> {
        let docs: Vec<Arc<StoredDocument>> = self.docs.read().values().cloned().collect();
        for doc in &docs {
            let (index, n_triples) = self.build(&doc.meta.doc_id, &doc.meta.text, doc.meta.title.clone())?;
            let meta = DocumentMeta {
                n_sentences: index.n_sentences(),
                n_triples,
                ..doc.meta.clone()
            };
            if let Some(dir) = &self.dir {
                write_atomic(&dir.join(format!("{}.idx", meta.doc_id)), &index.to_bytes())?;
                write_atomic(&dir.join(format!("{}.json", meta.doc_id)), &serde_json::to_vec_pretty(&meta)?)?;
            }
            self.docs.write().insert(
                meta.doc_id.clone(),
                Arc::new(StoredDocument {
                    meta,
                    index: Arc::new(index),
                }),
            );
        }
        Ok(docs.len())
    }

    /// One index over the sentences of all `doc_ids`, which must exist.
    pub fn combined_index(&self, doc_ids: &[String]) -> Result<Option<Arc<SentenceIndex>>> {
        let docs: Vec<Arc<StoredDocument>> = doc_ids
            .iter()
            .map(|id| self.get(id).ok_or_else(|| Error::DocumentNotFound(id.clone())))
            .collect::<Result<_>>()?;
        match docs.as_slice() {
            [] => Ok(None),
            [one] => Ok(Some(one.index.clone())),
            many => {
                let sentences = many.iter().flat_map(|d| d.index.sentences().iter().cloned()).collect();
                Ok(Some(Arc::new(SentenceIndex::build(sentences)?)))
            }
        }
    }
}
