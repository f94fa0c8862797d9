//! Initial generation, the reflection phase, and bundle assembly.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::Backend;
use crate::datasets::{build_dpo_pairs, bundle_stats, reflector_record, sft_record, DatasetBundle};
use crate::envs::{EnvError, EnvFactory};
use crate::prompts::{PromptError, PromptStore};
use crate::react::{run_episode, EpisodeContext, Mode};
use crate::reflect::{attempt_reflection, build_cross_pairs, selfgen_record, ReflectError, ReflectionRecord};
use crate::types::{Origin, Sample, TaskInstance};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reflect(#[from] ReflectError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("inconsistent inputs: {0}")]
    Consistency(String),
    #[error("{0}")]
    Invalid(String),
}

/// What every stage needs: the model, environments, and settings.
#[derive(Clone, Copy)]
pub struct RunContext<'a> {
    pub backend: &'a dyn Backend,
    pub factory: &'a EnvFactory,
    pub config: &'a crate::types::GenerationConfig,
    pub prompts: &'a PromptStore,
}

impl<'a> RunContext<'a> {
    pub fn episode(&self) -> EpisodeContext<'a> {
        EpisodeContext { config: self.config, prompts: self.prompts }
    }
}

/// Content hash of the run inputs, used as the run id.
pub fn compute_run_id(config: &impl Serialize, tasks: &[TaskInstance]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    for t in tasks {
        h.update(serde_json::to_vec(t).expect("task serializes"));
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Canonical order: task id, then sample index, agent before reflector.
pub fn sort_samples(samples: &mut [Sample]) {
    samples.sort_by(|a, b| (&a.task_id, a.sample_index, a.origin as u8).cmp(&(&b.task_id, b.sample_index, b.origin as u8)));
}

pub struct Generation {
    pub all_samples: Vec<Sample>,
    pub accepted: Vec<Sample>,
}

/// `k` independent episodes per task. Backend failures become failed samples.
pub fn generate_initial(tasks: &[TaskInstance], ctx: &RunContext<'_>) -> Result<Generation, PipelineError> {
    let k = ctx.config.k;
    if k == 0 {
        return Err(PipelineError::Invalid("k must be at least 1".into()));
    }
    let per_task: Vec<Vec<Sample>> = tasks
        .par_iter()
        .map(|task| {
            (0..k)
                .map(|i| {
                    let mut env = ctx.factory.make(task)?;
                    Ok(run_episode(task, env.as_mut(), ctx.backend, &ctx.episode(), Mode::Agent, i))
                })
                .collect::<Result<Vec<_>, EnvError>>()
        })
        .collect::<Result<_, _>>()?;
    let all_samples: Vec<Sample> = per_task.into_iter().flatten().collect();
    let accepted = accept(&all_samples, ctx.config.score_threshold);
    Ok(Generation { all_samples, accepted })
}

/// Passing agent samples, deduplicated per task by action sequence with the
/// lowest sample index kept.
pub fn accept(samples: &[Sample], threshold: f64) -> Vec<Sample> {
    let mut ordered: Vec<&Sample> = samples.iter().filter(|s| s.origin == Origin::Agent && s.feedback.score >= threshold).collect();
    ordered.sort_by(|a, b| (&a.task_id, a.sample_index).cmp(&(&b.task_id, b.sample_index)));
    let mut seen = HashSet::new();
    ordered.into_iter().filter(|s| seen.insert((s.task_id.clone(), s.trajectory.dedup_key()))).cloned().collect()
}

pub struct ReflectionPhase {
    /// Verified corrections, one per repaired failed sample.
    pub corrected: Vec<Sample>,
    /// Attempts that did not pass; kept for the run log only.
    pub failed_attempts: Vec<Sample>,
}

/// One reflection per failed agent sample.
pub fn run_reflection_phase(all_samples: &[Sample], tasks: &[TaskInstance], ctx: &RunContext<'_>) -> Result<ReflectionPhase, PipelineError> {
    let by_id: HashMap<&str, &TaskInstance> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let failed: Vec<&Sample> = all_samples.iter().filter(|s| s.origin == Origin::Agent && !s.passed()).collect();
    let attempts: Vec<Sample> = failed
        .par_iter()
        .map(|s| {
            let task = by_id.get(s.task_id.as_str()).ok_or_else(|| PipelineError::Consistency(format!("sample `{}` has no task", s.id())))?;
            Ok(attempt_reflection(s, task, ctx.factory, ctx.backend, &ctx.episode())?)
        })
        .collect::<Result<_, PipelineError>>()?;
    let (corrected, failed_attempts) = attempts.into_iter().partition(|s| s.passed());
    Ok(ReflectionPhase { corrected, failed_attempts })
}

/// Cross pairs for every task, grouped by task id.
pub fn all_cross_pairs(samples: &[Sample], cap: usize) -> Vec<ReflectionRecord> {
    let mut by_task: BTreeMap<&str, Vec<Sample>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.origin == Origin::Agent) {
        by_task.entry(&s.task_id).or_default().push(s.clone());
    }
    by_task.values().flat_map(|group| build_cross_pairs(group, cap)).collect()
}

/// Reflection records for the verified corrections, paired with their parents.
pub fn selfgen_records(all_samples: &[Sample], corrected: &[Sample]) -> Result<Vec<ReflectionRecord>, PipelineError> {
    let parents: HashMap<String, &Sample> = all_samples.iter().map(|s| (s.id(), s)).collect();
    let mut out = Vec::with_capacity(corrected.len());
    for c in corrected {
        let parent = c
            .parent_sample_id
            .as_ref()
            .and_then(|p| parents.get(p))
            .ok_or_else(|| PipelineError::Consistency(format!("reflector sample `{}` has no parent in the run", c.id())))?;
        out.push(selfgen_record(parent, c));
    }
    out.sort_by(|a, b| (&a.task_id, a.failed_index).cmp(&(&b.task_id, b.failed_index)));
    Ok(out)
}

/// Settings for turning samples into training records.
pub struct BundleInputs<'a> {
    pub tasks: &'a [TaskInstance],
    pub prompts: &'a PromptStore,
    pub run_id: &'a str,
    pub cross_pair_cap: usize,
}

/// Builds every corpus. `reflector_samples` are deduplicated per task, and
/// against the task's accepted agent trajectories, before entering `d_r`.
pub fn assemble_bundle(
    inputs: &BundleInputs<'_>,
    all_samples: &[Sample],
    accepted: &[Sample],
    reflector_samples: &[Sample],
    cross_pairs: Vec<ReflectionRecord>,
    selfgen: Vec<ReflectionRecord>,
) -> Result<DatasetBundle, PipelineError> {
    let tasks: HashMap<&str, &TaskInstance> = inputs.tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let task_of = |id: &str| tasks.get(id).copied().ok_or_else(|| PipelineError::Consistency(format!("unknown task `{id}`")));
    let parents: HashMap<String, &Sample> = all_samples.iter().map(|s| (s.id(), s)).collect();

    for s in accepted {
        if s.origin != Origin::Agent || !s.passed() {
            return Err(PipelineError::Consistency(format!("accepted sample `{}` is not a passing agent sample", s.id())));
        }
    }
    let mut keys: HashSet<(String, String)> = accepted.iter().map(|s| (s.task_id.clone(), s.trajectory.dedup_key())).collect();
    let mut reflector: Vec<&Sample> = reflector_samples.iter().collect();
    reflector.sort_by(|a, b| (&a.task_id, a.sample_index).cmp(&(&b.task_id, b.sample_index)));
    let mut d_r_samples = Vec::new();
    for s in reflector {
        let parent = s.parent_sample_id.as_ref().and_then(|p| parents.get(p));
        let ok = s.origin == Origin::Reflector && s.passed() && parent.is_some_and(|p| p.origin == Origin::Agent && !p.passed());
        if !ok {
            return Err(PipelineError::Consistency(format!("reflector sample `{}` lacks a failed agent parent", s.id())));
        }
        if keys.insert((s.task_id.clone(), s.trajectory.dedup_key())) {
            d_r_samples.push(s);
        }
    }

    let sft = |s: &Sample| -> Result<_, PipelineError> { Ok(sft_record(task_of(&s.task_id)?, s, inputs.prompts, inputs.run_id)?) };
    let refl = |r: &ReflectionRecord| -> Result<_, PipelineError> { Ok(reflector_record(task_of(&r.task_id)?, r, inputs.prompts, inputs.run_id)?) };
    let mut accepted_sorted: Vec<&Sample> = accepted.iter().collect();
    accepted_sorted.sort_by(|a, b| (&a.task_id, a.sample_index).cmp(&(&b.task_id, b.sample_index)));

    let mut bundle = DatasetBundle {
        run_id: inputs.run_id.to_string(),
        task_domains: inputs.tasks.iter().map(|t| (t.id.clone(), t.domain)).collect(),
        d_m: accepted_sorted.into_iter().map(sft).collect::<Result<_, _>>()?,
        d_r: d_r_samples.into_iter().map(sft).collect::<Result<_, _>>()?,
        d_m_refl_sft: cross_pairs.iter().map(refl).collect::<Result<_, _>>()?,
        d_r_refl_sft: selfgen.iter().map(refl).collect::<Result<_, _>>()?,
        dpo: build_dpo_pairs(inputs.tasks, &selfgen, all_samples, inputs.cross_pair_cap, inputs.prompts, inputs.run_id)?,
        d_m_refl: cross_pairs,
        d_r_refl: selfgen,
        stats: Default::default(),
    };
    bundle.stats = bundle_stats(&bundle);
    Ok(bundle)
}

/// Everything one generate → reflect → assemble round produces.
pub struct RoundOutput {
    pub all_samples: Vec<Sample>,
    pub reflection: ReflectionPhase,
    pub bundle: DatasetBundle,
}

/// One full self-training data round in memory.
pub fn run_round(tasks: &[TaskInstance], ctx: &RunContext<'_>, run_id: &str) -> Result<RoundOutput, PipelineError> {
    let generation = generate_initial(tasks, ctx)?;
    let reflection = run_reflection_phase(&generation.all_samples, tasks, ctx)?;
    let cross = all_cross_pairs(&generation.all_samples, ctx.config.cross_pair_cap);
    let selfgen = selfgen_records(&generation.all_samples, &reflection.corrected)?;
    let inputs = BundleInputs { tasks, prompts: ctx.prompts, run_id, cross_pair_cap: ctx.config.cross_pair_cap };
    let bundle = assemble_bundle(&inputs, &generation.all_samples, &generation.accepted, &reflection.corrected, cross, selfgen)?;
    Ok(RoundOutput { all_samples: generation.all_samples, reflection, bundle })
}

/// Tasks with at least one passing sample.
pub fn solved_tasks<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> BTreeSet<&'a str> {
    samples.into_iter().filter(|s| s.passed()).map(|s| s.task_id.as_str()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub accepted: usize,
    pub solved: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solved_with_reflection: Option<usize>,
}

pub fn parse_k_values(spec: &str) -> Result<Vec<usize>, PipelineError> {
    let bad = || PipelineError::Invalid(format!("bad k range `{spec}`: use `1..6` or `1,2,3`"));
    let values: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        spec.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if values.is_empty() || values[0] == 0 || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad());
    }
    Ok(values)
}

/// Accepted and solved counts for each k. Sample `i` of a task does not
/// depend on k, so one run at the largest k is read back as prefixes.
pub fn sweep_k(tasks: &[TaskInstance], ctx: &RunContext<'_>, k_values: &[usize], with_reflection: bool) -> Result<Vec<SweepRow>, PipelineError> {
    if k_values.is_empty() || k_values[0] == 0 || k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PipelineError::Invalid("k values must be nonempty, positive and ascending".into()));
    }
    let max_k = *k_values.last().expect("nonempty");
    let config = crate::types::GenerationConfig { k: max_k, ..ctx.config.clone() };
    let run = RunContext { config: &config, ..*ctx };
    let generation = generate_initial(tasks, &run)?;
    let corrected = if with_reflection { run_reflection_phase(&generation.all_samples, tasks, &run)?.corrected } else { Vec::new() };
    Ok(k_values
        .iter()
        .map(|&k| {
            let prefix: Vec<Sample> = generation.all_samples.iter().filter(|s| s.sample_index < k).cloned().collect();
            let solved = solved_tasks(&prefix);
            let solved_with_reflection = with_reflection.then(|| {
                let fixed = corrected.iter().filter(|s| s.sample_index < k);
                solved.iter().copied().chain(fixed.map(|s| s.task_id.as_str())).collect::<BTreeSet<_>>().len()
            });
            SweepRow { k, accepted: accept(&prefix, config.score_threshold).len(), solved: solved.len(), solved_with_reflection }
        })
        .collect())
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("    k  accepted    solved  solved+refl\n");
    for r in rows {
        let refl = r.solved_with_reflection.map_or("-".to_string(), |v| v.to_string());
        out.push_str(&format!("{:>5}  {:>8}  {:>8}  {:>11}\n", r.k, r.accepted, r.solved, refl));
    }
    out
}

/// Replays every sample in a fresh environment and returns the ids whose
/// verdict differs from the stored one.
pub fn verify_samples(samples: &[Sample], tasks: &[TaskInstance], factory: &EnvFactory) -> Result<Vec<String>, PipelineError> {
    let by_id: HashMap<&str, &TaskInstance> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let mismatches: Vec<Option<String>> = samples
        .par_iter()
        .map(|s| {
            let task = by_id.get(s.task_id.as_str()).ok_or_else(|| PipelineError::Consistency(format!("unknown task `{}`", s.task_id)))?;
            let fb = factory.replay(task, &s.trajectory)?;
            Ok((fb.passed != s.passed()).then(|| s.id()))
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(mismatches.into_iter().flatten().collect())
}
