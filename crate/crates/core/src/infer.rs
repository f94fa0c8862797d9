//! Inference: direct decoding, self-consistency with optional reflector
//! votes, and the gold-feedback oracle used only for evaluation.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{code_feedback, normalize_answer, EnvError};
use crate::pipeline::RunContext;
use crate::react::{run_episode, Mode};
use crate::reflect::{reflector_attempt, ReflectError};
use crate::types::{Domain, FeedbackDetails, Gold, Sample, TaskInstance};

/// Answer reported when an episode produced none.
pub const FAILURE_MARKER: &str = "";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InferMode {
    Direct,
    Sc,
    Oracle,
}

/// The answer a sample commits to: the Finish argument, the submitted
/// program, or `done` for a household episode the world reported finished.
pub fn answer_of(sample: &Sample) -> String {
    match sample.domain {
        Domain::Household => if sample.trajectory.terminal { "done" } else { FAILURE_MARKER }.to_string(),
        _ => sample.trajectory.final_answer.clone().unwrap_or_default(),
    }
}

/// Grouping key for a vote; `None` for the failure marker. An answer that
/// normalizes to nothing (a bare article, say) keys on its lowercase form.
pub fn vote_key(answer: &str) -> Option<String> {
    if answer.trim().is_empty() {
        return None;
    }
    let key = normalize_answer(answer);
    Some(if key.is_empty() { answer.trim().to_lowercase() } else { key })
}

/// Most frequent answer after answer normalization; ties go to the answer
/// whose first occurrence comes earliest. Failure markers only win when
/// every vote is one. Returns the first raw spelling of the winner.
pub fn majority_vote(answers: &[String]) -> String {
    let mut counts: Vec<(String, usize, usize)> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (i, a) in answers.iter().enumerate() {
        let Some(key) = vote_key(a) else { continue };
        match slot.get(&key) {
            Some(&j) => counts[j].1 += 1,
            None => {
                slot.insert(key, counts.len());
                counts.push((a.clone(), 1, i));
            }
        }
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2))).map(|(raw, _, _)| raw).unwrap_or_else(|| FAILURE_MARKER.to_string())
}

/// A single agent episode; gold is never consulted for the answer.
pub fn infer_direct(task: &TaskInstance, ctx: &RunContext<'_>) -> Result<(String, Sample), EnvError> {
    let mut env = ctx.factory.make(task)?;
    let sample = run_episode(task, env.as_mut(), ctx.backend, &ctx.episode(), Mode::Agent, 0);
    Ok((answer_of(&sample), sample))
}

/// What a reflector may see without ground truth: nothing for QA and the
/// text world, the provided unit tests' results for code.
pub fn observable_feedback(task: &TaskInstance, sample: &Sample) -> String {
    match (&sample.feedback.details, task.domain) {
        (FeedbackDetails::UnitTests { .. }, Domain::Codeexec) => sample.feedback.verbal.clone(),
        _ => String::new(),
    }
}

pub struct Votes {
    pub answer: String,
    /// Agent answers first, then reflector answers.
    pub votes: Vec<String>,
    pub samples: Vec<Sample>,
}

/// `n_agent` agent episodes, a reflection on each of the first `n_reflect`
/// regardless of correctness, and a majority vote over all answers.
pub fn infer_self_consistency(task: &TaskInstance, ctx: &RunContext<'_>, n_agent: usize, n_reflect: usize) -> Result<Votes, ReflectError> {
    assert!(n_agent >= 1 && n_reflect <= n_agent, "need n_agent >= 1 and n_reflect <= n_agent");
    let agents: Vec<Sample> = (0..n_agent)
        .into_par_iter()
        .map(|i| {
            let mut env = ctx.factory.make(task)?;
            Ok(run_episode(task, env.as_mut(), ctx.backend, &ctx.episode(), Mode::Agent, i))
        })
        .collect::<Result<_, EnvError>>()?;
    let reflected: Vec<Sample> = agents[..n_reflect]
        .par_iter()
        .map(|s| reflector_attempt(s, &observable_feedback(task, s), task, ctx.factory, ctx.backend, &ctx.episode()))
        .collect::<Result<_, _>>()?;
    let samples: Vec<Sample> = agents.into_iter().chain(reflected).collect();
    let votes: Vec<String> = samples.iter().map(answer_of).collect();
    Ok(Votes { answer: majority_vote(&votes), votes, samples })
}

/// Agent episode followed, on failure, by one reflection fed the true
/// feedback. Evaluation only: it reads the gold verdict.
pub fn infer_oracle(task: &TaskInstance, ctx: &RunContext<'_>) -> Result<Votes, ReflectError> {
    let (answer, first) = infer_direct(task, ctx)?;
    if first.passed() {
        return Ok(Votes { answer: answer.clone(), votes: vec![answer], samples: vec![first] });
    }
    let second = reflector_attempt(&first, &first.feedback.verbal.clone(), task, ctx.factory, ctx.backend, &ctx.episode())?;
    let answer = answer_of(&second);
    Ok(Votes { answer: answer.clone(), votes: vec![answer_of(&first), answer], samples: vec![first, second] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub answer: String,
    pub gold: Gold,
    pub passed: bool,
    pub mode: InferMode,
    pub votes: Vec<String>,
}

/// Scores the chosen answer: the verdict of the first sample that gave it,
/// or for code without such a sample, a fresh run of the tests.
fn score(task: &TaskInstance, answer: &str, samples: &[Sample], ctx: &RunContext<'_>) -> Result<bool, EnvError> {
    let Some(key) = vote_key(answer) else { return Ok(false) };
    if let Some(s) = samples.iter().find(|s| vote_key(&answer_of(s)).as_ref() == Some(&key)) {
        return Ok(s.passed());
    }
    match &task.gold {
        Gold::Tests(tests) => {
            let sandbox = ctx.factory.sandbox().ok_or_else(|| EnvError::SandboxUnavailable("python3".into()))?;
            Ok(code_feedback(&sandbox.run_candidate(answer, tests)?, ctx.factory.threshold()).passed)
        }
        _ => Ok(false),
    }
}

pub fn evaluate_task(
    task: &TaskInstance,
    ctx: &RunContext<'_>,
    mode: InferMode,
    n_agent: usize,
    n_reflect: usize,
) -> Result<EvalReport, ReflectError> {
    let votes = match mode {
        InferMode::Direct => {
            let (answer, s) = infer_direct(task, ctx)?;
            Votes { answer: answer.clone(), votes: vec![answer], samples: vec![s] }
        }
        InferMode::Sc => infer_self_consistency(task, ctx, n_agent, n_reflect)?,
        InferMode::Oracle => infer_oracle(task, ctx)?,
    };
    let passed = score(task, &votes.answer, &votes.samples, ctx)?;
    Ok(EvalReport { task_id: task.id.clone(), answer: votes.answer, gold: task.gold.clone(), passed, mode, votes: votes.votes })
}

/// Name of the headline metric for a domain.
pub fn metric_name(domain: Domain) -> &'static str {
    match domain {
        Domain::Wikiqa => "EM",
        Domain::Household => "success rate",
        Domain::Codeexec => "pass@1",
    }
}
