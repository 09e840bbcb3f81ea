use std::fmt::Write;

use super::{CorpusError, TextExample, TextSentence};

/// Lower-cases, drops a terminal `.` or `?`, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let trimmed = text.trim();
    let trimmed = trimmed
        .strip_suffix('.')
        .or_else(|| trimmed.strip_suffix('?'))
        .unwrap_or(trimmed);
    trimmed.split_whitespace().map(str::to_lowercase).collect()
}

/// Parses a bAbI task file into one example per question line.
///
/// A line id that does not increase starts a new story. Each question sees
/// every statement of its story that precedes it.
pub fn parse_task_file(text: &str) -> Result<Vec<TextExample>, CorpusError> {
    let mut examples = Vec::new();
    let mut story: Vec<TextSentence> = Vec::new();
    let mut last_id = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| CorpusError::Malformed {
            line: lineno,
            reason: reason.to_string(),
        };

        let (id_str, rest) = line
            .trim_start()
            .split_once(' ')
            .ok_or_else(|| malformed("expected `ID text`"))?;
        let id: usize = id_str
            .parse()
            .map_err(|_| malformed("line does not start with a numeric id"))?;
        if id <= last_id {
            story.clear();
        }
        last_id = id;

        if !rest.contains('\t') {
            let tokens = tokenize(rest);
            if tokens.is_empty() {
                return Err(malformed("empty statement"));
            }
            story.push(TextSentence { line: id, tokens });
            continue;
        }

        let fields: Vec<&str> = rest.split('\t').collect();
        if fields.len() != 3 {
            return Err(malformed(&format!(
                "question lines need exactly 2 tabs, found {}",
                fields.len() - 1
            )));
        }
        let question = tokenize(fields[0]);
        let answer = fields[1].trim().to_lowercase();
        if question.is_empty() || answer.is_empty() {
            return Err(malformed("empty question or answer"));
        }
        let support = fields[2]
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| malformed("supporting facts must be line ids"))?;
        if story.is_empty() {
            return Err(malformed("question has no preceding statements"));
        }
        examples.push(TextExample {
            sentences: story.clone(),
            question,
            question_line: id,
            answer,
            support,
        });
    }
    Ok(examples)
}

/// Writes examples back in bAbI format, one story per example.
pub fn to_babi_text(examples: &[TextExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        for s in &ex.sentences {
            let _ = writeln!(out, "{} {}.", s.line, s.tokens.join(" "));
        }
        let support: Vec<String> = ex.support.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "{} {}?\t{}\t{}",
            ex.question_line,
            ex.question.join(" "),
            ex.answer,
            support.join(" ")
        );
    }
    out
}
