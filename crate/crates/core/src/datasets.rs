//! Training records, preference pairs, JSONL I/O and bundle statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::{PromptError, PromptStore, TemplateId};
use crate::reflect::{build_cross_pairs, ReflectionRecord};
use crate::types::{Domain, Origin, Sample, TaskInstance, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftMeta {
    pub task_id: String,
    pub origin: Origin,
    pub sample_index: usize,
    pub run_id: String,
}

/// Agent training pair: prompt without in-context examples, and the
/// rendered trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SFTRecord {
    pub input: String,
    pub target: String,
    pub meta: SftMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectorMeta {
    pub task_id: String,
    pub source: crate::reflect::RecordSource,
    pub failed_index: usize,
    pub corrected_index: usize,
    pub run_id: String,
}

/// Reflector training pair: the reflector prompt for a failed trial, and the
/// reflection followed by the corrected attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectorSFTRecord {
    pub input: String,
    pub target: String,
    pub meta: ReflectorMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    ReflectionRecord,
    SiblingSamples,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoMeta {
    pub task_id: String,
    pub pair_source: PairSource,
    pub chosen_index: usize,
    pub rejected_index: usize,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DPOPair {
    pub input: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: DpoMeta,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
}

// ---------------------------------------------------------------------------
// Record builders
// ---------------------------------------------------------------------------

pub fn sft_record(task: &TaskInstance, sample: &Sample, prompts: &PromptStore, run_id: &str) -> Result<SFTRecord, PromptError> {
    Ok(SFTRecord {
        input: prompts.render_agent_prompt(TemplateId::agent(task.domain), task, "")?,
        target: sample.trajectory.render(task.domain.render_style()),
        meta: SftMeta { task_id: task.id.clone(), origin: sample.origin, sample_index: sample.sample_index, run_id: run_id.to_string() },
    })
}

/// What the reflector is trained to write after its prompt.
pub fn reflector_target(domain: Domain, reflection: Option<&str>, corrected: &Trajectory) -> String {
    let reflection = reflection.map(str::trim).filter(|r| !r.is_empty());
    let attempt = match domain {
        Domain::Codeexec => {
            let code = corrected.final_answer.clone().unwrap_or_default();
            format!("[improved impl]:\n```python\n{code}\n```")
        }
        d => corrected.render(d.render_style()),
    };
    match (domain, reflection) {
        (Domain::Codeexec, Some(r)) => format!("{r}\n\n{attempt}"),
        (_, Some(r)) => format!("{r}\n{attempt}"),
        (_, None) => attempt,
    }
}

pub fn reflector_record(
    task: &TaskInstance,
    record: &ReflectionRecord,
    prompts: &PromptStore,
    run_id: &str,
) -> Result<ReflectorSFTRecord, PromptError> {
    let id = TemplateId::reflector(task.domain);
    Ok(ReflectorSFTRecord {
        input: prompts.render_reflector_prompt(id, task, &record.failed_trajectory, &record.feedback, "")?,
        target: reflector_target(task.domain, record.reflection.as_deref(), &record.corrected_trajectory),
        meta: ReflectorMeta {
            task_id: record.task_id.clone(),
            source: record.source,
            failed_index: record.failed_index,
            corrected_index: record.corrected_index,
            run_id: run_id.to_string(),
        },
    })
}

/// Preference pairs: one per reflection record (corrected over failed), then
/// one per (passed, failed) sibling couple up to `cap` per task. Duplicate
/// (input, chosen, rejected) triples keep their first occurrence. Output is
/// grouped by task id in ascending order.
pub fn build_dpo_pairs(
    tasks: &[TaskInstance],
    records: &[ReflectionRecord],
    samples: &[Sample],
    cap: usize,
    prompts: &PromptStore,
    run_id: &str,
) -> Result<Vec<DPOPair>, PromptError> {
    let mut by_task: Vec<&TaskInstance> = tasks.iter().collect();
    by_task.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = Vec::new();
    for task in by_task {
        let style = task.domain.render_style();
        let input = prompts.render_agent_prompt(TemplateId::agent(task.domain), task, "")?;
        let agent: Vec<Sample> = samples.iter().filter(|s| s.task_id == task.id && s.origin == Origin::Agent).cloned().collect();
        let mut own: Vec<&ReflectionRecord> = records.iter().filter(|r| r.task_id == task.id).collect();
        own.sort_by_key(|r| (r.failed_index, r.corrected_index));
        let siblings = build_cross_pairs(&agent, cap);
        let candidates = own.into_iter().map(|r| (r, PairSource::ReflectionRecord)).chain(siblings.iter().map(|r| (r, PairSource::SiblingSamples)));
        let mut seen = HashSet::new();
        for (r, pair_source) in candidates {
            let chosen = r.corrected_trajectory.render(style);
            let rejected = r.failed_trajectory.render(style);
            if chosen == rejected || !seen.insert((chosen.clone(), rejected.clone())) {
                continue;
            }
            out.push(DPOPair {
                input: input.clone(),
                chosen,
                rejected,
                meta: DpoMeta {
                    task_id: task.id.clone(),
                    pair_source,
                    chosen_index: r.corrected_index,
                    rejected_index: r.failed_index,
                    run_id: run_id.to_string(),
                },
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

/// One compact JSON object per line, in the order given.
pub fn emit_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, DatasetError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| serde_json::from_str(line).map_err(|e| DatasetError::Schema { line: i + 1, reason: e.to_string() }))
        .collect()
}

pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_jsonl(&text)
}

// ---------------------------------------------------------------------------
// Bundle and statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub tasks: usize,
    pub solved_before: usize,
    pub solved_after: usize,
    pub d_m_count: usize,
    pub d_r_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BundleStats {
    pub d_m_count: usize,
    pub d_r_count: usize,
    pub d_m_refl_count: usize,
    pub d_r_refl_count: usize,
    pub dpo_count: usize,
    pub sample_acc_before: f64,
    pub sample_acc_after: f64,
    pub task_count: usize,
    pub train_count: usize,
    pub per_domain: BTreeMap<Domain, DomainStats>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetBundle {
    pub run_id: String,
    /// Every task the run covered, for the solved-task fractions.
    pub task_domains: BTreeMap<String, Domain>,
    pub d_m: Vec<SFTRecord>,
    pub d_r: Vec<SFTRecord>,
    pub d_m_refl: Vec<ReflectionRecord>,
    pub d_r_refl: Vec<ReflectionRecord>,
    /// The reflection records rendered as reflector training pairs.
    pub d_m_refl_sft: Vec<ReflectorSFTRecord>,
    pub d_r_refl_sft: Vec<ReflectorSFTRecord>,
    pub dpo: Vec<DPOPair>,
    pub stats: BundleStats,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn bundle_stats(bundle: &DatasetBundle) -> BundleStats {
    let before: BTreeSet<&str> = bundle.d_m.iter().map(|r| r.meta.task_id.as_str()).collect();
    let after: BTreeSet<&str> = before.iter().copied().chain(bundle.d_r.iter().map(|r| r.meta.task_id.as_str())).collect();
    let mut per_domain: BTreeMap<Domain, DomainStats> = BTreeMap::new();
    for (id, domain) in &bundle.task_domains {
        let d = per_domain.entry(*domain).or_default();
        d.tasks += 1;
        d.solved_before += usize::from(before.contains(id.as_str()));
        d.solved_after += usize::from(after.contains(id.as_str()));
    }
    for (records, is_dm) in [(&bundle.d_m, true), (&bundle.d_r, false)] {
        for r in records {
            if let Some(domain) = bundle.task_domains.get(&r.meta.task_id) {
                let d = per_domain.entry(*domain).or_default();
                if is_dm {
                    d.d_m_count += 1;
                } else {
                    d.d_r_count += 1;
                }
            }
        }
    }
    let tasks = bundle.task_domains.len();
    BundleStats {
        d_m_count: bundle.d_m.len(),
        d_r_count: bundle.d_r.len(),
        d_m_refl_count: bundle.d_m_refl.len(),
        d_r_refl_count: bundle.d_r_refl.len(),
        dpo_count: bundle.dpo.len(),
        sample_acc_before: ratio(before.len(), tasks),
        sample_acc_after: ratio(after.len(), tasks),
        task_count: tasks,
        train_count: bundle.d_m.len() + bundle.d_r.len(),
        per_domain,
    }
}

/// Aligned two-column text rendering of the statistics.
pub fn stats_table(stats: &BundleStats) -> String {
    let mut rows: Vec<(String, String)> = vec![
        ("#train (d_m + d_r)".into(), stats.train_count.to_string()),
        ("d_m".into(), stats.d_m_count.to_string()),
        ("d_r".into(), stats.d_r_count.to_string()),
        ("d_m_refl".into(), stats.d_m_refl_count.to_string()),
        ("d_r_refl".into(), stats.d_r_refl_count.to_string()),
        ("dpo".into(), stats.dpo_count.to_string()),
        ("tasks".into(), stats.task_count.to_string()),
        ("sample acc before".into(), format!("{:.1}%", stats.sample_acc_before * 100.0)),
        ("sample acc after".into(), format!("{:.1}%", stats.sample_acc_after * 100.0)),
    ];
    for (domain, d) in &stats.per_domain {
        rows.push((format!("{domain} solved before/after"), format!("{}/{} of {}", d.solved_before, d.solved_after, d.tasks)));
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v:>8}");
    }
    out
}

/// Writes `bundle/*.jsonl` under `run_dir`; `dpo.jsonl` only when asked.
pub fn write_bundle(run_dir: &Path, bundle: &DatasetBundle, with_dpo: bool) -> Result<(), DatasetError> {
    let dir = run_dir.join("bundle");
    fs::create_dir_all(&dir).map_err(|source| DatasetError::Io { path: dir.display().to_string(), source })?;
    emit_jsonl(&bundle.d_m, &dir.join("d_m.jsonl"))?;
    emit_jsonl(&bundle.d_r, &dir.join("d_r.jsonl"))?;
    emit_jsonl(&bundle.d_m_refl_sft, &dir.join("d_m_refl.jsonl"))?;
    emit_jsonl(&bundle.d_r_refl_sft, &dir.join("d_r_refl.jsonl"))?;
    if with_dpo {
        emit_jsonl(&bundle.dpo, &dir.join("dpo.jsonl"))?;
    }
    Ok(())
}
