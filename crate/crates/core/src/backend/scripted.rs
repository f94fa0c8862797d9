//! Deterministic stand-in for a language model.
//!
//! Each task has a canned success text and a canned failure text. Whether
//! completion `(task, index)` replays the success text is a pure function of
//! `(seed, task, index)`: the FNV-1a bucket of `"seed|task|index"` (with a
//! `|reflector` suffix for reflector draws) compared against the role's rate.
//! Multi-turn episodes are served one turn at a time, keyed by the turn
//! number in the request tag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cut_at_stop, Backend, BackendError, FinishReason, ModelRequest, ModelResponse, Role, TurnKind};
use crate::hash::{bucket_succeeds, scripted_bucket};
use crate::types::Domain;

/// Salt that decorrelates reflector draws from agent draws on the same sample.
pub const REFLECTOR_SALT: &str = "reflector";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEntry {
    pub success: String,
    pub failure: String,
}

#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub success_rate_agent: f64,
    pub success_rate_reflector: f64,
    pub seed: u64,
    bank: BTreeMap<String, BankEntry>,
}

impl ScriptedPolicy {
    pub fn new(bank: BTreeMap<String, BankEntry>, success_rate_agent: f64, success_rate_reflector: f64, seed: u64) -> Self {
        Self { success_rate_agent, success_rate_reflector, seed, bank }
    }

    pub fn bank_from_json(text: &str) -> Result<BTreeMap<String, BankEntry>, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn bank(&self) -> &BTreeMap<String, BankEntry> {
        &self.bank
    }

    /// Adds entries from another bank; later entries win on key collisions.
    pub fn extend_bank(&mut self, more: BTreeMap<String, BankEntry>) {
        self.bank.extend(more);
    }

    pub fn rate(&self, role: Role) -> f64 {
        match role {
            Role::Agent => self.success_rate_agent,
            Role::Reflector => self.success_rate_reflector,
        }
    }

    /// Whether draw `index` for `task_id` replays the success text.
    pub fn outcome(&self, role: Role, task_id: &str, index: usize) -> bool {
        let salt = match role {
            Role::Agent => None,
            Role::Reflector => Some(REFLECTOR_SALT),
        };
        bucket_succeeds(scripted_bucket(self.seed, task_id, index, salt), self.rate(role))
    }

    pub fn text_for(&self, role: Role, task_id: &str, index: usize) -> Result<&str, BackendError> {
        let entry = self.bank.get(task_id).ok_or_else(|| BackendError::InvalidRequest(format!("scripted bank has no entry for `{task_id}`")))?;
        Ok(if self.outcome(role, task_id, index) { &entry.success } else { &entry.failure })
    }
}

/// Splits a canned transcript into model turns. Environment lines are dropped;
/// the live environment produces its own observations.
pub fn split_turns(domain: Domain, text: &str) -> Vec<String> {
    match domain {
        Domain::Wikiqa => {
            let mut turns = Vec::new();
            let mut current: Vec<&str> = Vec::new();
            for line in text.lines() {
                if line.starts_with("Observation") {
                    turns.push(current.join("\n"));
                    current.clear();
                } else {
                    current.push(line);
                }
            }
            if !current.is_empty() {
                turns.push(current.join("\n"));
            }
            turns
        }
        Domain::Household => text.lines().filter(|l| l.starts_with("> ")).map(str::to_string).collect(),
        Domain::Codeexec => vec![text.to_string()],
    }
}

pub fn reflection_text(domain: Domain) -> &'static str {
    match domain {
        Domain::Wikiqa => {
            "My previous answer was wrong. I should search every entity the question depends on and confirm the fact in a retrieved passage before calling Finish."
        }
        Domain::Household => {
            "I did not complete the task in my previous trial. I should find the target object first, take it, and go straight to where the task needs it."
        }
        Domain::Codeexec => {
            "The implementation failed some of the unit tests. The returned value does not match the expected output, so the core expression has to be rewritten to compute exactly what the task asks for."
        }
    }
}

fn code_body(text: &str) -> &str {
    let inner = text.strip_prefix("[PYTHON]\n").unwrap_or(text);
    inner.strip_suffix("\n[/PYTHON]").unwrap_or(inner)
}

impl ScriptedPolicy {
    fn completion(&self, request: &ModelRequest, index: usize) -> Result<String, BackendError> {
        let tag = &request.tag;
        let text = self.text_for(tag.role, &tag.task_id, index)?;
        let out = match (tag.role, tag.domain, tag.turn) {
            (Role::Reflector, Domain::Codeexec, _) => {
                format!("{}\n\n[improved impl]:\n```python\n{}\n```", reflection_text(Domain::Codeexec), code_body(text))
            }
            (_, _, TurnKind::Reflection) => reflection_text(tag.domain).to_string(),
            (_, _, TurnKind::Whole) => text.to_string(),
            (_, domain, TurnKind::Step(t)) => {
                let turns = split_turns(domain, text);
                (t as usize).checked_sub(1).and_then(|i| turns.get(i)).cloned().unwrap_or_default()
            }
        };
        Ok(out)
    }
}

impl Backend for ScriptedPolicy {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.validate()?;
        let mut completions = Vec::with_capacity(request.n);
        for j in 0..request.n {
            let raw = self.completion(request, request.tag.sample_index + j)?;
            completions.push(cut_at_stop(&raw, &request.stop_sequences).0.to_string());
        }
        let finish_reasons = vec![FinishReason::Stop; completions.len()];
        Ok(ModelResponse { completions, finish_reasons })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::RequestTag;
    use crate::hash::fnv1a64;

    fn policy(agent: f64, refl: f64, seed: u64) -> ScriptedPolicy {
        let bank = (1..=100).map(|i| (format!("t{i}"), BankEntry { success: format!("S{i}"), failure: format!("F{i}") })).collect();
        ScriptedPolicy::new(bank, agent, refl, seed)
    }

    fn whole(task: &str, index: usize) -> ModelRequest {
        ModelRequest {
            prompt: String::new(),
            n: 1,
            temperature: 0.7,
            stop_sequences: vec![],
            max_new_tokens: 16,
            tag: RequestTag { role: Role::Agent, domain: Domain::Codeexec, task_id: task.into(), sample_index: index, turn: TurnKind::Whole },
        }
    }

    #[test]
    fn forced_rates() {
        assert_eq!(policy(1.0, 0.0, 7).generate(&whole("t1", 0)).unwrap().completions, vec!["S1"]);
        assert_eq!(policy(0.0, 0.0, 7).generate(&whole("t1", 0)).unwrap().completions, vec!["F1"]);
    }

    #[test]
    fn count_matches_enumeration() {
        // Independent re-statement of the draw rule, FNV-1a written out inline.
        let oracle = (1..=100)
            .filter(|i| {
                let key = format!("7|t{i}|0");
                let mut h: u64 = 0xcbf29ce484222325;
                for b in key.bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x100000001b3);
                }
                h % 1000 < 400
            })
            .count();
        let p = policy(0.4, 0.0, 7);
        let got = (1..=100).filter(|i| p.generate(&whole(&format!("t{i}"), 0)).unwrap().completions[0].starts_with('S')).count();
        assert_eq!(got, oracle);
        assert_eq!(got, 41);
        assert_eq!(fnv1a64(b"7|t1|0") % 1000, scripted_bucket(7, "t1", 0, None));
    }

    #[test]
    fn n_completions_use_consecutive_indices() {
        let p = policy(0.4, 0.0, 7);
        let mut r = whole("t5", 0);
        r.n = 3;
        let batch = p.generate(&r).unwrap().completions;
        let single: Vec<String> = (0..3).map(|i| p.generate(&whole("t5", i)).unwrap().completions[0].clone()).collect();
        assert_eq!(batch, single);
    }

    #[test]
    fn missing_bank_entry() {
        assert!(policy(1.0, 0.0, 7).generate(&whole("nope", 0)).is_err());
    }

    #[test]
    fn wikiqa_turns() {
        let text = "Thought 1: a\nAction 1: Search[x]\nObservation 1: o\nThought 2: b\nAction 2: Finish[y]";
        assert_eq!(split_turns(Domain::Wikiqa, text), vec!["Thought 1: a\nAction 1: Search[x]", "Thought 2: b\nAction 2: Finish[y]"]);
        let hh = "> think: t\nOK.\n> go to a 1\n(arrives)";
        assert_eq!(split_turns(Domain::Household, hh), vec!["> think: t", "> go to a 1"]);
    }

    #[test]
    fn reflector_code_output() {
        let mut bank = BTreeMap::new();
        bank.insert(
            "m".to_string(),
            BankEntry { success: "[PYTHON]\ndef add(a, b):\n    return a + b\n[/PYTHON]".into(), failure: "[PYTHON]\nx\n[/PYTHON]".into() },
        );
        let p = ScriptedPolicy::new(bank, 0.0, 1.0, 1);
        let mut r = whole("m", 0);
        r.tag.role = Role::Reflector;
        let out = &p.generate(&r).unwrap().completions[0];
        assert!(out.ends_with("[improved impl]:\n```python\ndef add(a, b):\n    return a + b\n```"));
    }
}
