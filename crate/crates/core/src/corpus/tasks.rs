use std::fs;
use std::path::{Path, PathBuf};

use super::{build_vocab, parse_task_file, CorpusError, Example, TextExample, Vocabulary};

pub const TASK_NAMES: [&str; 20] = [
    "1 supporting fact",
    "2 supporting facts",
    "3 supporting facts",
    "2 argument relations",
    "3 argument relations",
    "yes/no questions",
    "counting",
    "lists/sets",
    "simple negation",
    "indefinite knowledge",
    "basic coreference",
    "conjunction",
    "compound coreference",
    "time reasoning",
    "basic deduction",
    "basic induction",
    "positional reasoning",
    "size reasoning",
    "path finding",
    "agents motivation",
];

pub fn task_name(task: u8) -> Option<&'static str> {
    TASK_NAMES.get(usize::from(task).checked_sub(1)?).copied()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskFiles {
    pub train: PathBuf,
    /// Present for the `en-valid-10k` layout.
    pub valid: Option<PathBuf>,
    pub test: PathBuf,
}

/// Finds the files of one task. Accepts the extracted archive root, the
/// `tasks_1-20_v1-2` directory, or a split directory itself. The
/// `en-valid-10k` partition is preferred over `en-10k`.
pub fn locate_task_files(dir: &Path, task: u8) -> Result<TaskFiles, CorpusError> {
    let roots = [dir.to_path_buf(), dir.join("tasks_1-20_v1-2")];
    for root in &roots {
        for split_dir in [root.join("en-valid-10k"), root.clone()] {
            let train = split_dir.join(format!("qa{task}_train.txt"));
            let valid = split_dir.join(format!("qa{task}_valid.txt"));
            let test = split_dir.join(format!("qa{task}_test.txt"));
            if train.is_file() && test.is_file() {
                return Ok(TaskFiles {
                    train,
                    valid: valid.is_file().then_some(valid),
                    test,
                });
            }
        }
        for split_dir in [root.join("en-10k"), root.clone()] {
            if let (Some(train), Some(test)) = (
                find_named(&split_dir, task, "train"),
                find_named(&split_dir, task, "test"),
            ) {
                return Ok(TaskFiles {
                    train,
                    valid: None,
                    test,
                });
            }
        }
    }
    Err(CorpusError::MissingTask {
        task,
        dir: dir.to_path_buf(),
    })
}

/// Matches `qa{task}_<name>_{split}.txt`, e.g. `qa1_single-supporting-fact_train.txt`.
fn find_named(dir: &Path, task: u8, split: &str) -> Option<PathBuf> {
    let prefix = format!("qa{task}_");
    let suffix = format!("_{split}.txt");
    let mut hits: Vec<PathBuf> = fs::read_dir(dir)
        .ok()?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&prefix) && n.ends_with(&suffix))
        })
        .collect();
    hits.sort();
    hits.into_iter().next()
}

fn read(path: &Path) -> Result<Vec<TextExample>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_task_file(&text)
}

/// All splits of one task, encoded with a shared per-task vocabulary.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub task: u8,
    pub vocab: Vocabulary,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

impl TaskData {
    /// Builds the vocabulary over every split and encodes them. With no
    /// validation split, the last 10% of training questions are held out.
    pub fn from_text(
        task: u8,
        train: Vec<TextExample>,
        valid: Option<Vec<TextExample>>,
        test: Vec<TextExample>,
    ) -> Result<Self, CorpusError> {
        let (train, valid) = match valid {
            Some(v) => (train, v),
            None => {
                let mut train = train;
                let held = train.len() / 10;
                let valid = train.split_off(train.len() - held);
                (train, valid)
            }
        };
        let vocab = build_vocab(train.iter().chain(&valid).chain(&test));
        let encode = |xs: &[TextExample]| -> Result<Vec<Example>, CorpusError> {
            xs.iter().map(|e| vocab.encode(e)).collect()
        };
        Ok(Self {
            task,
            train: encode(&train)?,
            valid: encode(&valid)?,
            test: encode(&test)?,
            vocab,
        })
    }

    pub fn split(&self, name: &str) -> Option<&[Example]> {
        match name {
            "train" => Some(&self.train),
            "valid" => Some(&self.valid),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// Longest sentence or question over all splits.
    pub fn max_len(&self) -> usize {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .map(Example::max_len)
            .max()
            .unwrap_or(1)
    }
}

pub fn load_task(dir: &Path, task: u8) -> Result<TaskData, CorpusError> {
    let files = locate_task_files(dir, task)?;
    let train = read(&files.train)?;
    let valid = files.valid.as_deref().map(read).transpose()?;
    let test = read(&files.test)?;
    TaskData::from_text(task, train, valid, test)
}
