//! Domain types shared by every stage of the engine.
//!
//! All of these are plain data: immutable once built, `Send + Sync`, and
//! serializable. Trajectory rendering and the deduplication key live here;
//! the inverse of rendering (the turn grammar) lives in [`crate::react`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

/// Which environment family a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Wikiqa,
    Household,
    Codeexec,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Wikiqa, Domain::Household, Domain::Codeexec];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Wikiqa => "wikiqa",
            Domain::Household => "household",
            Domain::Codeexec => "codeexec",
        }
    }

    /// Training targets and prompts use the ReAct line grammar for QA and the
    /// raw transcript for the text world and code.
    pub fn render_style(self) -> RenderStyle {
        match self {
            Domain::Wikiqa => RenderStyle::React,
            Domain::Household | Domain::Codeexec => RenderStyle::Plain,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wikiqa" | "hotpotqa" => Ok(Domain::Wikiqa),
            "household" | "alfworld" => Ok(Domain::Household),
            "codeexec" | "mbpp" => Ok(Domain::Codeexec),
            other => Err(format!("unknown domain `{other}` (expected wikiqa, household or codeexec)")),
        }
    }
}

/// Ground-truth success criterion for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Gold {
    /// Gold answer string, scored by exact match.
    Answer(String),
    /// Goal predicate id such as `at(spraybottle, toilet 1)`.
    Goal(String),
    /// Executable assertion statements.
    Tests(Vec<String>),
}

impl Gold {
    pub fn is_empty(&self) -> bool {
        match self {
            Gold::Answer(s) | Gold::Goal(s) => s.trim().is_empty(),
            Gold::Tests(t) => t.is_empty(),
        }
    }

    pub fn answer(&self) -> Option<&str> {
        match self {
            Gold::Answer(s) => Some(s),
            _ => None,
        }
    }

    pub fn tests(&self) -> Option<&[String]> {
        match self {
            Gold::Tests(t) => Some(t),
            _ => None,
        }
    }

    /// Display form used in evaluation reports.
    pub fn label(&self) -> String {
        match self {
            Gold::Answer(s) | Gold::Goal(s) => s.clone(),
            Gold::Tests(t) => format!("{} tests", t.len()),
        }
    }
}

/// One unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub domain: Domain,
    /// Question, goal statement (with the room description), or program spec.
    pub prompt_body: String,
    pub gold: Gold,
    /// Per-domain payload; the household world spec lives here.
    #[serde(default)]
    pub env_config: serde_json::Value,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("task id is empty")]
    EmptyId,
    #[error("task `{0}` has an empty gold criterion")]
    EmptyGold(String),
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("task `{id}`: gold kind does not match domain {domain}")]
    GoldMismatch { id: String, domain: Domain },
}

impl TaskInstance {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.id.is_empty() {
            return Err(TaskError::EmptyId);
        }
        if self.gold.is_empty() {
            return Err(TaskError::EmptyGold(self.id.clone()));
        }
        let ok = matches!(
            (self.domain, &self.gold),
            (Domain::Wikiqa, Gold::Answer(_)) | (Domain::Household, Gold::Goal(_)) | (Domain::Codeexec, Gold::Tests(_))
        );
        if !ok {
            return Err(TaskError::GoldMismatch { id: self.id.clone(), domain: self.domain });
        }
        Ok(())
    }
}

/// Validates a whole task set, including id uniqueness.
pub fn validate_task_set(tasks: &[TaskInstance]) -> Result<(), TaskError> {
    let mut seen = std::collections::HashSet::new();
    for t in tasks {
        t.validate()?;
        if !seen.insert(t.id.as_str()) {
            return Err(TaskError::DuplicateId(t.id.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Actions and steps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Search,
    Lookup,
    Finish,
    EnvCommand,
    CodeSubmission,
    Think,
}

impl ActionKind {
    pub fn allowed_in(self, domain: Domain) -> bool {
        match self {
            ActionKind::Search | ActionKind::Lookup | ActionKind::Finish => domain == Domain::Wikiqa,
            ActionKind::EnvCommand | ActionKind::Think => domain == Domain::Household,
            ActionKind::CodeSubmission => domain == Domain::Codeexec,
        }
    }

    /// Finish and code submission end an episode.
    pub fn is_terminal(self) -> bool {
        matches!(self, ActionKind::Finish | ActionKind::CodeSubmission)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAction {
    pub kind: ActionKind,
    pub argument: String,
}

impl ParsedAction {
    pub fn new(kind: ActionKind, argument: impl Into<String>) -> Self {
        Self { kind, argument: argument.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Thought,
    Action,
    Observation,
}

impl StepKind {
    fn label(self) -> &'static str {
        match self {
            StepKind::Thought => "Thought",
            StepKind::Action => "Action",
            StepKind::Observation => "Observation",
        }
    }
}

/// One element of a trajectory. `index` is a 1-based per-kind counter.
///
/// `action_parsed` is only ever set on action steps; it is `None` for an
/// action step that recorded a turn the grammar rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub kind: StepKind,
    pub index: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_parsed: Option<ParsedAction>,
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderStyle {
    /// `Thought i: …` / `Action i: …` / `Observation i: …` lines.
    React,
    /// Raw step texts, one per line.
    Plain,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StepOrderError {
    #[error("step {position}: {kind:?} index {found}, expected {expected}")]
    Index { position: usize, kind: StepKind, found: u32, expected: u32 },
    #[error("step {0}: observation before the first action")]
    ObservationFirst(usize),
    #[error("step {0}: parsed action present on a non-action step")]
    StrayAction(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    fn next_index(&self, kind: StepKind) -> u32 {
        self.steps.iter().filter(|s| s.kind == kind).count() as u32 + 1
    }

    pub fn push_thought(&mut self, text: impl Into<String>) {
        let index = self.next_index(StepKind::Thought);
        self.steps.push(Step { kind: StepKind::Thought, index, text: text.into(), action_parsed: None });
    }

    pub fn push_action(&mut self, text: impl Into<String>, parsed: Option<ParsedAction>) {
        let index = self.next_index(StepKind::Action);
        self.steps.push(Step { kind: StepKind::Action, index, text: text.into(), action_parsed: parsed });
    }

    pub fn push_observation(&mut self, text: impl Into<String>) {
        let index = self.next_index(StepKind::Observation);
        self.steps.push(Step { kind: StepKind::Observation, index, text: text.into(), action_parsed: None });
    }

    /// Marks the trajectory finished with `answer`.
    pub fn finish(&mut self, answer: Option<String>) {
        self.terminal = true;
        self.final_answer = answer;
    }

    pub fn action_count(&self) -> usize {
        self.steps.iter().filter(|s| s.kind == StepKind::Action).count()
    }

    pub fn observation_count(&self) -> usize {
        self.steps.iter().filter(|s| s.kind == StepKind::Observation).count()
    }

    pub fn actions(&self) -> impl Iterator<Item = &Step> {
        self.steps.iter().filter(|s| s.kind == StepKind::Action)
    }

    /// Single-pass check of the per-kind index invariants.
    pub fn check_steps(&self) -> Result<(), StepOrderError> {
        let mut counters = [0u32; 3];
        for (position, step) in self.steps.iter().enumerate() {
            let slot = step.kind as usize;
            counters[slot] += 1;
            if step.index != counters[slot] {
                return Err(StepOrderError::Index { position, kind: step.kind, found: step.index, expected: counters[slot] });
            }
            if step.kind == StepKind::Observation && counters[StepKind::Action as usize] == 0 {
                return Err(StepOrderError::ObservationFirst(position));
            }
            if step.kind != StepKind::Action && step.action_parsed.is_some() {
                return Err(StepOrderError::StrayAction(position));
            }
        }
        Ok(())
    }

    pub fn render(&self, style: RenderStyle) -> String {
        trajectory_render(self, style)
    }

    pub fn dedup_key(&self) -> String {
        trajectory_dedup_key(self)
    }
}

/// Renders a trajectory as text. Lines are newline-separated with no trailing
/// newline; an empty trajectory renders as the empty string.
pub fn trajectory_render(traj: &Trajectory, style: RenderStyle) -> String {
    let lines: Vec<String> = match style {
        RenderStyle::React => traj.steps.iter().map(|s| format!("{} {}: {}", s.kind.label(), s.index, s.text)).collect(),
        RenderStyle::Plain => traj.steps.iter().map(|s| s.text.clone()).collect(),
    };
    lines.join("\n")
}

/// Action texts only, each whitespace-collapsed, joined by newlines.
pub fn trajectory_dedup_key(traj: &Trajectory) -> String {
    traj.actions().map(|s| collapse_whitespace(&s.text)).collect::<Vec<_>>().join("\n")
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// Feedback and samples
// ---------------------------------------------------------------------------

/// Result of one unit test, as carried in feedback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub assert_text: String,
    pub passed: bool,
    /// `output: <repr>` on a failed equality assertion, otherwise the error text.
    pub observed: String,
}

/// Domain-specific payload attached to feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackDetails {
    #[default]
    None,
    ExactMatch {
        given: String,
        gold: String,
    },
    Household {
        goal: String,
        reason: String,
    },
    UnitTests {
        syntax_ok: bool,
        tests: Vec<TestOutcome>,
    },
    Error {
        message: String,
    },
}

/// Environment verdict on a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub passed: bool,
    pub score: f64,
    pub verbal: String,
    #[serde(default)]
    pub details: FeedbackDetails,
}

impl Feedback {
    /// `passed` is derived from `score >= threshold`.
    pub fn from_score(score: f64, threshold: f64, verbal: impl Into<String>, details: FeedbackDetails) -> Self {
        let score = score.clamp(0.0, 1.0);
        let passed = score >= threshold;
        let mut verbal = verbal.into();
        if !passed && verbal.trim().is_empty() {
            verbal = "The attempt did not pass.".to_string();
        }
        Self { passed, score, verbal, details }
    }

    /// A zero-score failure.
    pub fn failure(verbal: impl Into<String>, details: FeedbackDetails) -> Self {
        Self::from_score(0.0, f64::INFINITY, verbal, details)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Agent,
    Reflector,
}

impl Origin {
    fn tag(self) -> char {
        match self {
            Origin::Agent => 'a',
            Origin::Reflector => 'r',
        }
    }
}

/// A trajectory with its feedback and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub task_id: String,
    pub domain: Domain,
    pub sample_index: usize,
    pub origin: Origin,
    /// Set iff `origin` is reflector; references the failed agent sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_sample_id: Option<String>,
    /// Reflection text emitted before the corrected attempt, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
    pub trajectory: Trajectory,
    pub feedback: Feedback,
}

impl Sample {
    pub fn id(&self) -> String {
        sample_id(&self.task_id, self.origin, self.sample_index)
    }

    pub fn passed(&self) -> bool {
        self.feedback.passed
    }
}

/// Stable identifier, e.g. `hotpot-003#a1` or `hotpot-003#r1`.
pub fn sample_id(task_id: &str, origin: Origin, index: usize) -> String {
    format!("{task_id}#{}{index}", origin.tag())
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Per-domain cap on turns in one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLimits {
    pub wikiqa: usize,
    pub household: usize,
    pub codeexec: usize,
}

impl Default for StepLimits {
    fn default() -> Self {
        Self { wikiqa: 7, household: 50, codeexec: 1 }
    }
}

impl StepLimits {
    pub fn for_domain(&self, domain: Domain) -> usize {
        match domain {
            Domain::Wikiqa => self.wikiqa,
            Domain::Household => self.household,
            Domain::Codeexec => self.codeexec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Samples drawn per task in the initial generation step.
    pub k: usize,
    pub score_threshold: f64,
    pub temperature: f64,
    pub max_react_steps: StepLimits,
    /// Environment actions allowed in one household episode.
    pub max_env_actions: usize,
    /// Always 1: each failed sample gets at most one corrected counterpart.
    pub reflection_iterations: usize,
    pub rng_seed: u64,
    pub max_new_tokens: usize,
    /// Cap on cross pairs (and sibling preference pairs) per task.
    pub cross_pair_cap: usize,
    /// Render agent and reflector prompts with the bundled in-context examples.
    pub few_shot: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            k: 3,
            score_threshold: 1.0,
            temperature: 0.7,
            max_react_steps: StepLimits::default(),
            max_env_actions: 30,
            reflection_iterations: 1,
            rng_seed: 0,
            max_new_tokens: 512,
            cross_pair_cap: 4,
            few_shot: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("reflection_iterations must be 1, got {0}")]
    ReflectionIterations(usize),
    #[error("score_threshold must lie in [0, 1], got {0}")]
    Threshold(f64),
    #[error("temperature must be non-negative, got {0}")]
    Temperature(f64),
    #[error("{0} must be positive")]
    ZeroLimit(&'static str),
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::ZeroK);
        }
        if self.reflection_iterations != 1 {
            return Err(ConfigError::ReflectionIterations(self.reflection_iterations));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(ConfigError::Threshold(self.score_threshold));
        }
        if self.temperature < 0.0 || self.temperature.is_nan() {
            return Err(ConfigError::Temperature(self.temperature));
        }
        let limits = self.max_react_steps;
        if limits.wikiqa == 0 || limits.household == 0 || limits.codeexec == 0 {
            return Err(ConfigError::ZeroLimit("max_react_steps"));
        }
        if self.max_env_actions == 0 {
            return Err(ConfigError::ZeroLimit("max_env_actions"));
        }
        if self.cross_pair_cap == 0 {
            return Err(ConfigError::ZeroLimit("cross_pair_cap"));
        }
        if self.max_new_tokens == 0 {
            return Err(ConfigError::ZeroLimit("max_new_tokens"));
        }
        Ok(())
    }
}
