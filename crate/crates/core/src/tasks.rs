//! Study tasks: one medical question with a reference answer per topic.
//!
//! ```toml
//! [[task]]
//! topic = "probiotics"
//! question = "Do probiotics help treat eczema?"
//! ground_truth = "not_helpful"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::AnswerLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub topic: String,
    pub question: String,
    pub ground_truth: AnswerLabel,
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("failed to read task file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("task file is not valid TOML: {0}")]
    Syntax(String),
    #[error("topic `{0}` is defined twice")]
    DuplicateTopic(String),
    #[error("task file defines no tasks")]
    Empty,
}

#[derive(Debug, Deserialize, Serialize)]
struct TaskFile {
    #[serde(default)]
    task: Vec<TaskDefinition>,
}

/// Ordered task list; order drives round-robin topic assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    tasks: Vec<TaskDefinition>,
}

const DEFAULT_TASKS: &str = include_str!("../../../data/tasks.toml");

impl TaskSet {
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_TASKS).expect("bundled task file is valid")
    }

    pub fn new(tasks: Vec<TaskDefinition>) -> Result<Self, TaskError> {
        if tasks.is_empty() {
            return Err(TaskError::Empty);
        }
        for (i, t) in tasks.iter().enumerate() {
            if tasks[..i].iter().any(|o| o.topic == t.topic) {
                return Err(TaskError::DuplicateTopic(t.topic.clone()));
            }
        }
        Ok(Self { tasks })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TaskError> {
        let file: TaskFile = toml::from_str(text).map_err(|e| TaskError::Syntax(e.to_string()))?;
        Self::new(file.task)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaskError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn get(&self, topic: &str) -> Option<&TaskDefinition> {
        self.tasks.iter().find(|t| t.topic == topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().map(|t| t.topic.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskDefinition> {
        self.tasks.iter()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}
