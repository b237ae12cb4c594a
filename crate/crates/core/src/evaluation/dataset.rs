use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    #[serde(rename = "task")]
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl Task {
    pub fn new(input: impl Into<String>, reference: Option<String>) -> Self {
        Self {
            input: input.into(),
            reference,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Ordered tasks plus a content hash used in cache keys and reports.
///
/// File format: one JSON object per line, `{"task": "...", "reference":
/// "..."}`; `reference` is optional and blank lines are skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub tasks: Vec<Task>,
    pub hash: String,
}

impl Dataset {
    pub fn new(tasks: Vec<Task>) -> Self {
        let bytes = serde_json::to_vec(&tasks).expect("tasks serialize");
        Self {
            hash: crate::sha256_hex(&bytes),
            tasks,
        }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, DatasetError> {
        let mut tasks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let task: Task = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            tasks.push(task);
        }
        Ok(Self::new(tasks))
    }

    pub fn to_jsonl(&self) -> String {
        self.tasks
            .iter()
            .map(|t| serde_json::to_string(t).expect("task serializes") + "\n")
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}
