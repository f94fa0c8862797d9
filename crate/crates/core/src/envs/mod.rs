//! Environment contract and the three task environments.

pub mod codeexec;
pub mod household;
pub mod wikiqa;

use std::sync::Arc;

use thiserror::Error;

use crate::types::{ActionKind, Domain, Feedback, Gold, ParsedAction, StepKind, TaskInstance, Trajectory};

pub use codeexec::{code_feedback, Sandbox, SandboxLimits, TestReport, TestResult};
pub use household::{loop_detected, HouseholdEnv, WorldSpec, WorldState};
pub use wikiqa::{em_evaluate, normalize_answer, similar_titles, wiki_lookup, wiki_search, WikiCorpus, WikiEnv, WikiSearchState};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("sandbox unavailable: interpreter `{0}` not found")]
    SandboxUnavailable(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("world: {0}")]
    World(String),
    #[error("task `{0}` does not match this environment")]
    TaskMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub observation: String,
    pub done: bool,
}

/// One episode's worth of environment state. Handles are never reused
/// across episodes.
pub trait Environment: Send {
    fn domain(&self) -> Domain;
    /// Applies a non-terminal action; increments the action count exactly once.
    fn step(&mut self, action: &ParsedAction) -> Transition;
    /// Ground-truth verdict on the finished trajectory.
    fn evaluate(&mut self, traj: &Trajectory) -> Result<Feedback, EnvError>;
    fn action_count(&self) -> usize;
}

/// Hands out fresh environment handles for tasks.
#[derive(Clone)]
pub struct EnvFactory {
    corpus: Arc<WikiCorpus>,
    sandbox: Option<Arc<Sandbox>>,
    threshold: f64,
}

impl EnvFactory {
    pub fn new(threshold: f64) -> Self {
        Self { corpus: Arc::new(WikiCorpus::default()), sandbox: None, threshold }
    }

    pub fn with_corpus(mut self, corpus: WikiCorpus) -> Self {
        self.corpus = Arc::new(corpus);
        self
    }

    pub fn with_sandbox(mut self, sandbox: Sandbox) -> Self {
        self.sandbox = Some(Arc::new(sandbox));
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn sandbox(&self) -> Option<&Sandbox> {
        self.sandbox.as_deref()
    }

    pub fn corpus(&self) -> &WikiCorpus {
        &self.corpus
    }

    pub fn make(&self, task: &TaskInstance) -> Result<Box<dyn Environment>, EnvError> {
        match (task.domain, &task.gold) {
            (Domain::Wikiqa, Gold::Answer(gold)) => Ok(Box::new(WikiEnv::new(self.corpus.clone(), gold.clone(), self.threshold))),
            (Domain::Household, Gold::Goal(_)) => {
                let spec: WorldSpec =
                    serde_json::from_value(task.env_config.clone()).map_err(|e| EnvError::World(format!("task `{}`: {e}", task.id)))?;
                spec.validate()?;
                Ok(Box::new(HouseholdEnv::new(spec, self.threshold)))
            }
            (Domain::Codeexec, Gold::Tests(tests)) => {
                let sandbox = self.sandbox.clone().ok_or_else(|| EnvError::SandboxUnavailable("python3".into()))?;
                Ok(Box::new(codeexec::CodeEnv::new(sandbox, tests.clone(), self.threshold)))
            }
            _ => Err(EnvError::TaskMismatch(task.id.clone())),
        }
    }

    /// Re-executes a trajectory's actions in a fresh handle and evaluates it.
    pub fn replay(&self, task: &TaskInstance, traj: &Trajectory) -> Result<Feedback, EnvError> {
        let mut env = self.make(task)?;
        for step in traj.steps.iter().filter(|s| s.kind == StepKind::Action) {
            if let Some(action) = &step.action_parsed {
                if !matches!(action.kind, ActionKind::Finish | ActionKind::CodeSubmission) {
                    env.step(action);
                }
            }
        }
        env.evaluate(traj)
    }
}
