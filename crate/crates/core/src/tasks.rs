//! Task-file parsing.
//!
//! A task file is a JSON array. Each domain has a short form:
//!
//! - wikiqa: `{"id", "question", "answer"}`
//! - household: `{"id", "world"}` where `world` is a path relative to the
//!   task file or an inline world object
//! - codeexec: `{"id", "prompt", "tests": [...]}`
//!
//! Entries already in the full [`TaskInstance`] shape (as written into run
//! directories) are accepted too.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::assets;
use crate::envs::WorldSpec;
use crate::types::{validate_task_set, Domain, Gold, TaskError, TaskInstance};

#[derive(Debug, Error)]
pub enum TaskFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("task file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("task {index}: {message}")]
    Entry { index: usize, message: String },
    #[error(transparent)]
    Invalid(#[from] TaskError),
}

/// Where household `world` paths resolve.
pub enum WorldSource {
    /// Relative to this directory on disk.
    Dir(PathBuf),
    /// The worlds compiled into the crate.
    Bundled,
}

impl WorldSource {
    fn load(&self, path: &str) -> Result<String, String> {
        match self {
            WorldSource::Dir(dir) => {
                let full = dir.join(path);
                std::fs::read_to_string(&full).map_err(|e| format!("{}: {e}", full.display()))
            }
            WorldSource::Bundled => assets::world(path).map(str::to_string).ok_or_else(|| format!("no bundled world `{path}`")),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTask {
    Full(TaskInstance),
    Wiki { id: String, question: String, answer: String },
    Code { id: String, prompt: String, tests: Vec<String> },
    World { id: String, world: serde_json::Value },
}

fn household_task(id: String, world: serde_json::Value, source: &WorldSource) -> Result<TaskInstance, String> {
    let world = match world {
        serde_json::Value::String(path) => serde_json::from_str(&source.load(&path)?).map_err(|e| format!("world `{path}`: {e}"))?,
        inline => inline,
    };
    let spec: WorldSpec = serde_json::from_value(world.clone()).map_err(|e| e.to_string())?;
    spec.validate().map_err(|e| e.to_string())?;
    Ok(TaskInstance {
        id,
        domain: Domain::Household,
        prompt_body: spec.task_description(),
        gold: Gold::Goal(spec.goal.predicate_id()),
        env_config: world,
    })
}

pub fn parse_tasks(text: &str, domain: Domain, worlds: &WorldSource) -> Result<Vec<TaskInstance>, TaskFileError> {
    let raw: Vec<RawTask> = serde_json::from_str(text)?;
    let mut tasks = Vec::with_capacity(raw.len());
    for (index, entry) in raw.into_iter().enumerate() {
        let err = |message: String| TaskFileError::Entry { index, message };
        let task = match (domain, entry) {
            (_, RawTask::Full(t)) if t.domain == domain => t,
            (Domain::Wikiqa, RawTask::Wiki { id, question, answer }) => {
                TaskInstance { id, domain, prompt_body: question, gold: Gold::Answer(answer), env_config: serde_json::Value::Null }
            }
            (Domain::Codeexec, RawTask::Code { id, prompt, tests }) => {
                TaskInstance { id, domain, prompt_body: prompt, gold: Gold::Tests(tests), env_config: serde_json::Value::Null }
            }
            (Domain::Household, RawTask::World { id, world }) => household_task(id, world, worlds).map_err(err)?,
            _ => return Err(err(format!("entry does not match the {domain} task shape"))),
        };
        tasks.push(task);
    }
    validate_task_set(&tasks)?;
    Ok(tasks)
}

/// Loads a task file, or the bundled set when `path` is `bundled`.
pub fn load_tasks(path: &Path, domain: Domain) -> Result<Vec<TaskInstance>, TaskFileError> {
    if path.as_os_str() == "bundled" {
        return Ok(assets::tasks(domain));
    }
    let text = std::fs::read_to_string(path).map_err(|source| TaskFileError::Io { path: path.display().to_string(), source })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_tasks(&text, domain, &WorldSource::Dir(dir))
}
