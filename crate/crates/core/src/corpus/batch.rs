use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Example, PAD};

/// Examples padded with `PAD` to a common sentence count and token length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// `[batch][max sentences][max len]`
    pub stories: Vec<Vec<Vec<usize>>>,
    /// `[batch][max len]`
    pub questions: Vec<Vec<usize>>,
    pub answers: Vec<usize>,
    pub sentence_counts: Vec<usize>,
    pub sentence_lengths: Vec<Vec<usize>>,
    pub question_lengths: Vec<usize>,
}

impl Batch {
    pub fn from_examples(examples: &[&Example]) -> Self {
        let max_sentences = examples
            .iter()
            .map(|e| e.sentences.len())
            .max()
            .unwrap_or(0);
        let max_len = examples.iter().map(|e| e.max_len()).max().unwrap_or(0);
        let pad = |seq: &[usize]| {
            let mut v = seq.to_vec();
            v.resize(max_len, PAD);
            v
        };
        let mut batch = Batch {
            stories: Vec::with_capacity(examples.len()),
            questions: Vec::with_capacity(examples.len()),
            answers: Vec::with_capacity(examples.len()),
            sentence_counts: Vec::with_capacity(examples.len()),
            sentence_lengths: Vec::with_capacity(examples.len()),
            question_lengths: Vec::with_capacity(examples.len()),
        };
        for ex in examples {
            let mut story: Vec<Vec<usize>> = ex.sentences.iter().map(|s| pad(s)).collect();
            story.resize(max_sentences, vec![PAD; max_len]);
            batch.stories.push(story);
            batch.questions.push(pad(&ex.question));
            batch.answers.push(ex.answer);
            batch.sentence_counts.push(ex.sentences.len());
            batch
                .sentence_lengths
                .push(ex.sentences.iter().map(Vec::len).collect());
            batch.question_lengths.push(ex.question.len());
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// Strips the padding from row `i`. Line numbers and supporting facts are
    /// not carried by batches.
    pub fn unpadded(&self, i: usize) -> Example {
        Example {
            sentences: self.stories[i][..self.sentence_counts[i]]
                .iter()
                .zip(&self.sentence_lengths[i])
                .map(|(s, &n)| s[..n].to_vec())
                .collect(),
            lines: Vec::new(),
            question: self.questions[i][..self.question_lengths[i]].to_vec(),
            answer: self.answers[i],
            support: Vec::new(),
        }
    }
}

/// Shuffles with a seeded ChaCha stream and cuts into batches; the last
/// batch may be short. Panics if `batch_size` is zero.
pub fn batchify(examples: &[Example], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let members: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            Batch::from_examples(&members)
        })
        .collect()
}
