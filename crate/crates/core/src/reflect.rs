//! Single-iteration reflection and the reflector's training records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::Backend;
use crate::envs::{EnvError, EnvFactory};
use crate::prompts::{examples_for, PromptError, TemplateId};
use crate::react::{run_episode, EpisodeContext, Mode};
use crate::types::{Feedback, Origin, Sample, TaskInstance, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    /// A failed and a passed agent sample of the same task.
    CrossPair,
    /// A verified correction written by the base reflector.
    ReflectorGenerated,
}

/// A failed attempt, its feedback, and a passing attempt at the same task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionRecord {
    pub task_id: String,
    pub failed_index: usize,
    pub failed_trajectory: Trajectory,
    pub feedback: Feedback,
    pub corrected_index: usize,
    pub corrected_trajectory: Trajectory,
    /// The reflector's free-text reflection, when it wrote one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
    pub source: RecordSource,
}

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error("sample `{0}` passed; only failed samples are reflected on")]
    PassedSample(String),
    #[error("sample `{0}` is a reflector output; reflection does not chain")]
    Chained(String),
    #[error("task `{sample}` does not match task `{task}`")]
    WrongTask { sample: String, task: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

fn check_failed(failed: &Sample, task: &TaskInstance) -> Result<(), ReflectError> {
    if failed.task_id != task.id {
        return Err(ReflectError::WrongTask { sample: failed.task_id.clone(), task: task.id.clone() });
    }
    if failed.origin == Origin::Reflector {
        return Err(ReflectError::Chained(failed.id()));
    }
    if failed.passed() {
        return Err(ReflectError::PassedSample(failed.id()));
    }
    Ok(())
}

/// Runs the reflector once on `trial` with the given feedback text, in a
/// fresh environment, and returns the attempt whether or not it passed.
pub fn reflector_attempt(
    trial: &Sample,
    feedback_text: &str,
    task: &TaskInstance,
    factory: &EnvFactory,
    backend: &dyn Backend,
    ctx: &EpisodeContext<'_>,
) -> Result<Sample, ReflectError> {
    let id = TemplateId::reflector(task.domain);
    let examples = examples_for(ctx.prompts, id, ctx.config.few_shot);
    let prompt = ctx.prompts.render_reflector_prompt_with(id, task, &trial.trajectory, feedback_text, examples)?;
    let mut env = factory.make(task)?;
    let mode = Mode::Reflector { prompt, parent_id: trial.id() };
    Ok(run_episode(task, env.as_mut(), backend, ctx, mode, trial.sample_index))
}

/// Like [`reflect_once`] but also returns failed attempts, for logging.
pub fn attempt_reflection(
    failed: &Sample,
    task: &TaskInstance,
    factory: &EnvFactory,
    backend: &dyn Backend,
    ctx: &EpisodeContext<'_>,
) -> Result<Sample, ReflectError> {
    check_failed(failed, task)?;
    reflector_attempt(failed, &failed.feedback.verbal, task, factory, backend, ctx)
}

/// One reflection on a failed agent sample. Returns the corrected sample only
/// if it passes; a backend failure counts as no correction.
pub fn reflect_once(
    failed: &Sample,
    task: &TaskInstance,
    factory: &EnvFactory,
    backend: &dyn Backend,
    ctx: &EpisodeContext<'_>,
) -> Result<Option<Sample>, ReflectError> {
    let attempt = attempt_reflection(failed, task, factory, backend, ctx)?;
    if !attempt.passed() {
        tracing::debug!(parent = %failed.id(), verbal = %attempt.feedback.verbal, "reflection did not pass");
    }
    Ok(attempt.passed().then_some(attempt))
}

/// Every (failed, passed) couple among one task's agent samples, in
/// ascending (failed index, passed index) order, truncated to `cap`.
pub fn build_cross_pairs(samples: &[Sample], cap: usize) -> Vec<ReflectionRecord> {
    let mut sorted: Vec<&Sample> = samples.iter().filter(|s| s.origin == Origin::Agent).collect();
    sorted.sort_by_key(|s| s.sample_index);
    let fails = sorted.iter().filter(|s| !s.passed());
    let mut out = Vec::new();
    for l in fails {
        for w in sorted.iter().filter(|s| s.passed()) {
            if out.len() == cap {
                return out;
            }
            debug_assert_eq!(l.task_id, w.task_id);
            out.push(ReflectionRecord {
                task_id: l.task_id.clone(),
                failed_index: l.sample_index,
                failed_trajectory: l.trajectory.clone(),
                feedback: l.feedback.clone(),
                corrected_index: w.sample_index,
                corrected_trajectory: w.trajectory.clone(),
                reflection: None,
                source: RecordSource::CrossPair,
            });
        }
    }
    out
}

/// Record for a verified correction of `parent`.
pub fn selfgen_record(parent: &Sample, corrected: &Sample) -> ReflectionRecord {
    ReflectionRecord {
        task_id: parent.task_id.clone(),
        failed_index: parent.sample_index,
        failed_trajectory: parent.trajectory.clone(),
        feedback: parent.feedback.clone(),
        corrected_index: corrected.sample_index,
        corrected_trajectory: corrected.trajectory.clone(),
        reflection: corrected.reflection.clone(),
        source: RecordSource::ReflectorGenerated,
    }
}

/// Reflects on every failed sample and keeps the verified corrections as
/// reflector training records.
pub fn build_reflector_selfgen(
    failed: &[Sample],
    tasks: &[TaskInstance],
    backend: &dyn Backend,
    factory: &EnvFactory,
    ctx: &EpisodeContext<'_>,
) -> Result<Vec<ReflectionRecord>, ReflectError> {
    let mut out = Vec::new();
    for s in failed {
        let task =
            tasks.iter().find(|t| t.id == s.task_id).ok_or_else(|| ReflectError::WrongTask { sample: s.task_id.clone(), task: String::new() })?;
        if let Some(fixed) = reflect_once(s, task, factory, backend, ctx)? {
            out.push(selfgen_record(s, &fixed));
        }
    }
    Ok(out)
}
