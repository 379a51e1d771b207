//! JSON Lines dataset manifests.
//!
//! One object per line:
//! `{"id": "u1", "audio": "wav/u1.wav", "label": 7, "transcript": "...", "word_times": [[0.1, 0.4], ...], "split": "train"}`.
//! `label` is a 0-10 score or a class name; `word_times` and `split` are optional. Relative
//! audio paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, FluencyLabel};
use crate::features::Transcript;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawLabel {
    Score(i64),
    Name(String),
}

impl RawLabel {
    pub fn class(&self) -> Result<FluencyLabel, EvalError> {
        match self {
            RawLabel::Score(s) => super::bucket_score(*s),
            RawLabel::Name(n) => FluencyLabel::parse(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub audio: PathBuf,
    pub label: RawLabel,
    #[serde(default)]
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_times: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl ManifestEntry {
    pub fn transcript(&self) -> Result<Transcript, EvalError> {
        let tokens: Vec<String> = self.transcript.split_whitespace().map(str::to_string).collect();
        let tr = match &self.word_times {
            Some(times) => Transcript::timed(tokens, times.clone()),
            None => Transcript { tokens, word_times: None },
        };
        if !tr.is_valid() {
            return Err(EvalError::BadEntry {
                id: self.id.clone(),
                msg: "word_times must be sorted with one pair per token".into(),
            });
        }
        Ok(tr)
    }
}

/// Parses manifest lines; `base` resolves relative audio paths.
pub fn parse_manifest(reader: impl BufRead, base: &Path) -> Result<Vec<ManifestEntry>, EvalError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut e: ManifestEntry =
            serde_json::from_str(&line).map_err(|err| EvalError::Manifest { line: i + 1, msg: err.to_string() })?;
        e.label.class().map_err(|err| EvalError::Manifest { line: i + 1, msg: err.to_string() })?;
        if !ids.insert(e.id.clone()) {
            return Err(EvalError::Manifest { line: i + 1, msg: format!("duplicate id {}", e.id) });
        }
        if e.audio.is_relative() {
            e.audio = base.join(&e.audio);
        }
        out.push(e);
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, EvalError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(std::io::BufReader::new(f), base)
}

pub fn write_manifest(mut w: impl std::io::Write, entries: &[ManifestEntry]) -> Result<(), EvalError> {
    for e in entries {
        writeln!(
            w,
            "{}",
            serde_json::to_string(e).map_err(|err| EvalError::BadEntry { id: e.id.clone(), msg: err.to_string() })?
        )?;
    }
    Ok(())
}
