//! bAbI corpus ingestion.
//!
//! Task files are parsed into [`TextExample`]s (lower-cased tokens), a sorted
//! per-task [`Vocabulary`] is built over every split, and examples are then
//! encoded to token ids. Supporting-fact annotations are carried along for
//! analysis but never used as a training signal.

mod batch;
mod cache;
mod parse;
mod tasks;
mod vocab;

pub use batch::{batchify, Batch};
pub use cache::{read_cache, write_cache, DatasetCache, CACHE_VERSION};
pub use parse::{parse_task_file, to_babi_text, tokenize};
pub use tasks::{load_task, locate_task_files, task_name, TaskData, TaskFiles, TASK_NAMES};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_TOKEN};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no files for task {task} under {dir}")]
    MissingTask { task: u8, dir: PathBuf },
    #[error("dataset cache: {0}")]
    Cache(String),
}

/// One statement of a story, with its original bAbI line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSentence {
    pub line: usize,
    pub tokens: Vec<String>,
}

/// A parsed question with the story statements that precede it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextExample {
    pub sentences: Vec<TextSentence>,
    pub question: Vec<String>,
    pub question_line: usize,
    pub answer: String,
    pub support: Vec<usize>,
}

/// Token-id form of a [`TextExample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub sentences: Vec<Vec<usize>>,
    /// Original bAbI line number of each sentence.
    #[serde(default)]
    pub lines: Vec<usize>,
    pub question: Vec<usize>,
    pub answer: usize,
    /// Supporting-fact line numbers; analysis only.
    pub support: Vec<usize>,
}

impl Example {
    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    /// Longest token sequence among the sentences and the question.
    pub fn max_len(&self) -> usize {
        self.sentences
            .iter()
            .map(Vec::len)
            .chain(std::iter::once(self.question.len()))
            .max()
            .unwrap_or(0)
    }
}

/// Keeps the most recent `limit` sentences. Panics if `limit` is zero.
pub fn truncate(example: &Example, limit: usize) -> Example {
    assert!(limit > 0, "truncation limit must be positive");
    let skip = example.sentences.len().saturating_sub(limit);
    Example {
        sentences: example.sentences[skip..].to_vec(),
        lines: example
            .lines
            .get(skip..)
            .map(<[usize]>::to_vec)
            .unwrap_or_default(),
        question: example.question.clone(),
        answer: example.answer,
        support: example.support.clone(),
    }
}
