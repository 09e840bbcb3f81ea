use std::collections::{BTreeSet, HashMap};

use super::{CorpusError, Example, TextExample};

pub const PAD: usize = 0;
pub const PAD_TOKEN: &str = "<pad>";

/// Bijective token/id table with `PAD` at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Sorted vocabulary over story, question, and answer tokens.
pub fn build_vocab<'a>(examples: impl IntoIterator<Item = &'a TextExample>) -> Vocabulary {
    let mut words = BTreeSet::new();
    for ex in examples {
        for s in &ex.sentences {
            words.extend(s.tokens.iter().cloned());
        }
        words.extend(ex.question.iter().cloned());
        words.insert(ex.answer.clone());
    }
    words.remove(PAD_TOKEN);
    let tokens = std::iter::once(PAD_TOKEN.to_string())
        .chain(words)
        .collect();
    Vocabulary::from_tokens(tokens).expect("sorted unique tokens")
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(CorpusError::InvalidVocabulary(format!(
                "id 0 must be `{PAD_TOKEN}`"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CorpusError::InvalidVocabulary(format!(
                    "duplicate token `{t}`"
                )));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn ids(&self, tokens: &[String]) -> Result<Vec<usize>, CorpusError> {
        tokens
            .iter()
            .map(|t| {
                self.id(t)
                    .ok_or_else(|| CorpusError::UnknownToken(t.clone()))
            })
            .collect()
    }

    pub fn encode(&self, ex: &TextExample) -> Result<Example, CorpusError> {
        Ok(Example {
            sentences: ex
                .sentences
                .iter()
                .map(|s| self.ids(&s.tokens))
                .collect::<Result<_, _>>()?,
            lines: ex.sentences.iter().map(|s| s.line).collect(),
            question: self.ids(&ex.question)?,
            answer: self
                .id(&ex.answer)
                .ok_or_else(|| CorpusError::UnknownToken(ex.answer.clone()))?,
            support: ex.support.clone(),
        })
    }
}
