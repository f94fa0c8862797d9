//! Agent and reflector prompt templates.
//!
//! Templates are plain text with `{slot}` markers. The bundled copies are
//! compiled in; a directory with the same file names overrides them. A slot
//! that is filled with an empty string and sits alone on its line takes the
//! line with it, so zero-shot rendering leaves no blank gap.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Domain, Feedback, TaskInstance, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    AgentWikiqa,
    ReflectorWikiqa,
    AgentMbpp,
    ReflectorMbpp,
    AgentHousehold,
    ReflectorHousehold,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::AgentWikiqa,
        TemplateId::ReflectorWikiqa,
        TemplateId::AgentMbpp,
        TemplateId::ReflectorMbpp,
        TemplateId::AgentHousehold,
        TemplateId::ReflectorHousehold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::AgentWikiqa => "agent_wikiqa",
            TemplateId::ReflectorWikiqa => "reflector_wikiqa",
            TemplateId::AgentMbpp => "agent_mbpp",
            TemplateId::ReflectorMbpp => "reflector_mbpp",
            TemplateId::AgentHousehold => "agent_household",
            TemplateId::ReflectorHousehold => "reflector_household",
        }
    }

    pub fn agent(domain: Domain) -> Self {
        match domain {
            Domain::Wikiqa => TemplateId::AgentWikiqa,
            Domain::Household => TemplateId::AgentHousehold,
            Domain::Codeexec => TemplateId::AgentMbpp,
        }
    }

    pub fn reflector(domain: Domain) -> Self {
        match domain {
            Domain::Wikiqa => TemplateId::ReflectorWikiqa,
            Domain::Household => TemplateId::ReflectorHousehold,
            Domain::Codeexec => TemplateId::ReflectorMbpp,
        }
    }

    pub fn is_reflector(self) -> bool {
        matches!(self, TemplateId::ReflectorWikiqa | TemplateId::ReflectorMbpp | TemplateId::ReflectorHousehold)
    }

    pub fn required_slots(self) -> &'static [&'static str] {
        match self {
            TemplateId::AgentWikiqa | TemplateId::AgentHousehold => &["in_context_examples", "input"],
            TemplateId::AgentMbpp => &["in_context_examples", "input", "tests"],
            TemplateId::ReflectorWikiqa | TemplateId::ReflectorMbpp | TemplateId::ReflectorHousehold => {
                &["in_context_examples", "input", "previous_trial", "feedback"]
            }
        }
    }

    fn bundled(self) -> (&'static str, &'static str) {
        macro_rules! pair {
            ($name:literal) => {
                (include_str!(concat!("../assets/prompts/", $name, ".txt")), include_str!(concat!("../assets/prompts/examples/", $name, ".txt")))
            };
        }
        match self {
            TemplateId::AgentWikiqa => pair!("agent_wikiqa"),
            TemplateId::ReflectorWikiqa => pair!("reflector_wikiqa"),
            TemplateId::AgentMbpp => pair!("agent_mbpp"),
            TemplateId::ReflectorMbpp => pair!("reflector_mbpp"),
            TemplateId::AgentHousehold => pair!("agent_household"),
            TemplateId::ReflectorHousehold => pair!("reflector_household"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template}: slot `{slot}` must appear exactly once, found {count}")]
    SlotCount { template: TemplateId, slot: &'static str, count: usize },
    #[error("template {template} needs `{slot}`, which task `{task}` does not provide")]
    MissingSlot { template: TemplateId, slot: &'static str, task: String },
    #[error("reflector prompts need a failed trial; feedback for `{0}` passed")]
    PassedFeedback(String),
    #[error("template {template} does not fit a {domain} task")]
    WrongDomain { template: TemplateId, domain: Domain },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
    pub required_slots: Vec<&'static str>,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let body = body.strip_suffix('\n').unwrap_or(&body).to_string();
        for &slot in id.required_slots() {
            let count = body.matches(&format!("{{{slot}}}")).count();
            if count != 1 {
                return Err(PromptError::SlotCount { template: id, slot, count });
            }
        }
        Ok(Self { id, body, required_slots: id.required_slots().to_vec() })
    }

    /// Substitutes slots in a single pass; filled values are never rescanned.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> String {
        let mut lines_out: Vec<String> = Vec::new();
        for line in self.body.split('\n') {
            let trimmed = line.trim();
            if let Some(name) = trimmed.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                if self.required_slots.contains(&name) && values.get(name).is_none_or(|v| v.is_empty()) {
                    continue;
                }
            }
            let mut out = String::with_capacity(line.len());
            let mut rest = line;
            while let Some(open) = rest.find('{') {
                out.push_str(&rest[..open]);
                let after = &rest[open + 1..];
                match after.find('}') {
                    Some(close) if self.required_slots.contains(&&after[..close]) => {
                        out.push_str(values.get(&after[..close]).map(String::as_str).unwrap_or(""));
                        rest = &after[close + 1..];
                    }
                    _ => {
                        out.push('{');
                        rest = after;
                    }
                }
            }
            out.push_str(rest);
            lines_out.push(out);
        }
        lines_out.join("\n")
    }
}

/// All six templates plus their bundled in-context examples.
#[derive(Debug, Clone)]
pub struct PromptStore {
    templates: BTreeMap<TemplateId, PromptTemplate>,
    examples: BTreeMap<TemplateId, String>,
}

fn clean_examples(text: &str) -> String {
    text.trim_end_matches('\n').to_string()
}

impl PromptStore {
    pub fn bundled() -> Self {
        let mut templates = BTreeMap::new();
        let mut examples = BTreeMap::new();
        for id in TemplateId::ALL {
            let (body, ex) = id.bundled();
            templates.insert(id, PromptTemplate::new(id, body).expect("bundled templates are well formed"));
            examples.insert(id, clean_examples(ex));
        }
        Self { templates, examples }
    }

    /// Loads `<dir>/<id>.txt` and `<dir>/examples/<id>.txt`, falling back to
    /// the bundled copy for any file that is absent.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut store = Self::bundled();
        for id in TemplateId::ALL {
            let tpl = dir.join(format!("{id}.txt"));
            if tpl.exists() {
                let body = std::fs::read_to_string(&tpl).map_err(|e| PromptError::Io { path: tpl.display().to_string(), message: e.to_string() })?;
                store.templates.insert(id, PromptTemplate::new(id, body)?);
            }
            let ex = dir.join("examples").join(format!("{id}.txt"));
            if ex.exists() {
                let text = std::fs::read_to_string(&ex).map_err(|e| PromptError::Io { path: ex.display().to_string(), message: e.to_string() })?;
                store.examples.insert(id, clean_examples(&text));
            }
        }
        Ok(store)
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    /// Bundled in-context examples for a template (empty if none ship).
    pub fn examples(&self, id: TemplateId) -> &str {
        &self.examples[&id]
    }

    pub fn render_agent_prompt(&self, id: TemplateId, task: &TaskInstance, examples: &str) -> Result<String, PromptError> {
        if id != TemplateId::agent(task.domain) {
            return Err(PromptError::WrongDomain { template: id, domain: task.domain });
        }
        let mut values = BTreeMap::new();
        values.insert("in_context_examples", examples.to_string());
        values.insert("input", task.prompt_body.clone());
        if id == TemplateId::AgentMbpp {
            let tests = task.gold.tests().ok_or_else(|| PromptError::MissingSlot { template: id, slot: "tests", task: task.id.clone() })?;
            values.insert("tests", tests.join("\n"));
        }
        Ok(self.template(id).render(&values))
    }

    /// Reflector prompt for a failed trial. Refuses passing feedback.
    pub fn render_reflector_prompt(
        &self,
        id: TemplateId,
        task: &TaskInstance,
        failed: &Trajectory,
        feedback: &Feedback,
        examples: &str,
    ) -> Result<String, PromptError> {
        if feedback.passed {
            return Err(PromptError::PassedFeedback(task.id.clone()));
        }
        self.render_reflector_prompt_with(id, task, failed, &feedback.verbal, examples)
    }

    /// Reflector prompt with caller-chosen feedback text and no pass/fail
    /// guard. Inference uses this to reflect without ground truth.
    pub fn render_reflector_prompt_with(
        &self,
        id: TemplateId,
        task: &TaskInstance,
        trial: &Trajectory,
        feedback_text: &str,
        examples: &str,
    ) -> Result<String, PromptError> {
        if id != TemplateId::reflector(task.domain) {
            return Err(PromptError::WrongDomain { template: id, domain: task.domain });
        }
        let previous_trial = match task.domain {
            Domain::Codeexec => trial.final_answer.clone().unwrap_or_else(|| trial.actions().map(|s| s.text.clone()).collect::<Vec<_>>().join("\n")),
            d => trial.render(d.render_style()),
        };
        let mut values = BTreeMap::new();
        values.insert("in_context_examples", examples.to_string());
        values.insert("input", task.prompt_body.clone());
        values.insert("previous_trial", previous_trial);
        values.insert("feedback", feedback_text.to_string());
        Ok(self.template(id).render(&values))
    }
}

impl Default for PromptStore {
    fn default() -> Self {
        Self::bundled()
    }
}

/// Examples to use for a template under the given mode.
pub fn examples_for(store: &PromptStore, id: TemplateId, few_shot: bool) -> &str {
    if few_shot {
        store.examples(id)
    } else {
        ""
    }
}
