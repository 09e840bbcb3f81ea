use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Example, Vocabulary};

pub const CACHE_VERSION: u32 = 1;

/// On-disk form of an encoded dataset split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCache {
    pub version: u32,
    pub vocab: Vec<String>,
    pub examples: Vec<Example>,
}

pub fn write_cache(
    path: &Path,
    vocab: &Vocabulary,
    examples: &[Example],
) -> Result<(), CorpusError> {
    let cache = DatasetCache {
        version: CACHE_VERSION,
        vocab: vocab.tokens().to_vec(),
        examples: examples.to_vec(),
    };
    let json = serde_json::to_string(&cache).map_err(|e| CorpusError::Cache(e.to_string()))?;
    fs::write(path, json).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_cache(path: &Path) -> Result<(Vocabulary, Vec<Example>), CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cache: DatasetCache =
        serde_json::from_str(&text).map_err(|e| CorpusError::Cache(e.to_string()))?;
    if cache.version != CACHE_VERSION {
        return Err(CorpusError::Cache(format!(
            "unsupported version {} (expected {CACHE_VERSION})",
            cache.version
        )));
    }
    let vocab = Vocabulary::from_tokens(cache.vocab)?;
    for ex in &cache.examples {
        let in_range = ex
            .sentences
            .iter()
            .flatten()
            .chain(&ex.question)
            .chain(std::iter::once(&ex.answer))
            .all(|&id| id < vocab.len());
        if !in_range {
            return Err(CorpusError::Cache("token id outside vocabulary".into()));
        }
    }
    Ok((vocab, cache.examples))
}
