//! Turn grammar and the episode loop.

use thiserror::Error;

use crate::backend::{cut_at_stop, generate_stepwise, Backend, ModelRequest, RequestTag, Role, TurnKind};
use crate::envs::{loop_detected, Environment};
use crate::prompts::{PromptStore, TemplateId};
use crate::types::{
    collapse_whitespace, sample_id, ActionKind, Domain, Feedback, FeedbackDetails, GenerationConfig, Origin, ParsedAction, RenderStyle, Sample,
    StepKind, TaskInstance, Trajectory,
};

pub const INVALID_ACTION: &str = "Invalid action format.";

/// One parsed model turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub thought: Option<String>,
    pub action: ParsedAction,
    /// Text recorded on the action step.
    pub action_text: String,
}

/// A turn the grammar rejects. Whatever could be salvaged is kept so the
/// episode can record it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed turn: {raw:?}")]
pub struct MalformedTurn {
    pub raw: String,
    pub thought: Option<String>,
    pub action_text: String,
}

/// `Search[x]`, `Lookup[x]`, `Finish[x]`; the kind is case-sensitive and the
/// argument is the bracket contents verbatim.
pub fn parse_wiki_action(text: &str) -> Option<ParsedAction> {
    let text = text.trim();
    let open = text.find('[')?;
    let inner = text.strip_suffix(']')?.get(open + 1..)?;
    let kind = match &text[..open] {
        "Search" => ActionKind::Search,
        "Lookup" => ActionKind::Lookup,
        "Finish" => ActionKind::Finish,
        _ => return None,
    };
    Some(ParsedAction::new(kind, inner))
}

/// `> think: …` or `> <command>`.
pub fn parse_household_action(line: &str) -> Option<ParsedAction> {
    let body = line.trim().strip_prefix('>')?.trim();
    if body.is_empty() {
        return None;
    }
    match body.strip_prefix("think:") {
        Some(t) => Some(ParsedAction::new(ActionKind::Think, t.trim())),
        None => Some(ParsedAction::new(ActionKind::EnvCommand, body)),
    }
}

/// The first `[PYTHON] … [/PYTHON]` block or fenced code block.
pub fn extract_code(raw: &str) -> Option<String> {
    let tagged = raw.find("[PYTHON]").and_then(|s| {
        let body = &raw[s + "[PYTHON]".len()..];
        body.find("[/PYTHON]").map(|e| (s, body[..e].to_string()))
    });
    let fenced = raw.find("```").and_then(|s| {
        let after = &raw[s + 3..];
        let nl = after.find('\n')?;
        let lang = after[..nl].trim();
        if !lang.chars().all(|c| c.is_ascii_alphanumeric()) {
            return None;
        }
        let body = &after[nl + 1..];
        body.find("```").map(|e| (s, body[..e].to_string()))
    });
    let (_, code) = match (tagged, fenced) {
        (Some(a), Some(b)) => {
            if a.0 <= b.0 {
                a
            } else {
                b
            }
        }
        (a, b) => a.or(b)?,
    };
    let code = code.trim_matches('\n').to_string();
    (!code.trim().is_empty()).then_some(code)
}

pub fn code_step_text(code: &str) -> String {
    format!("[PYTHON]\n{code}\n[/PYTHON]")
}

fn labelled<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(label)?.strip_prefix(' ')?;
    let (num, text) = rest.split_once(':')?;
    if num.is_empty() || !num.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some(text.strip_prefix(' ').unwrap_or(text))
}

pub fn parse_turn(raw: &str, domain: Domain) -> Result<Turn, MalformedTurn> {
    match domain {
        Domain::Wikiqa => {
            let mut thought = None;
            let mut action_line = None;
            for line in raw.lines() {
                let line = line.trim();
                if let Some(t) = labelled(line, "Thought") {
                    thought.get_or_insert_with(|| t.trim().to_string());
                } else if let Some(a) = labelled(line, "Action") {
                    action_line = Some(a.trim().to_string());
                    break;
                }
            }
            match action_line.as_deref().and_then(parse_wiki_action) {
                Some(action) => Ok(Turn { thought, action, action_text: action_line.unwrap_or_default() }),
                None => {
                    let action_text = match action_line {
                        Some(a) => a,
                        None if thought.is_some() => String::new(),
                        None => collapse_whitespace(raw),
                    };
                    Err(MalformedTurn { raw: raw.to_string(), thought, action_text })
                }
            }
        }
        Domain::Household => {
            let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
            match parse_household_action(line) {
                Some(action) => {
                    let action_text = match action.kind {
                        ActionKind::Think => format!("> think: {}", action.argument),
                        _ => format!("> {}", action.argument),
                    };
                    Ok(Turn { thought: None, action, action_text })
                }
                None => Err(MalformedTurn { raw: raw.to_string(), thought: None, action_text: collapse_whitespace(raw) }),
            }
        }
        Domain::Codeexec => match extract_code(raw) {
            Some(code) => Ok(Turn { thought: None, action_text: code_step_text(&code), action: ParsedAction::new(ActionKind::CodeSubmission, code) }),
            None => Err(MalformedTurn { raw: raw.to_string(), thought: None, action_text: raw.trim().to_string() }),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryParseError {
    #[error("line {line}: expected `{kind} {expected}: …`")]
    BadLine { line: usize, kind: &'static str, expected: u32 },
    #[error("line {0}: unrecognised step")]
    Unrecognised(usize),
}

fn finish_if_terminal(traj: &mut Trajectory) {
    let last = traj.steps.last().and_then(|s| s.action_parsed.clone());
    if let Some(a) = last {
        if a.kind.is_terminal() {
            traj.finish(Some(a.argument));
        }
    }
}

/// Inverse of [`Trajectory::render`] in the domain's style.
pub fn parse_trajectory(text: &str, domain: Domain) -> Result<Trajectory, TrajectoryParseError> {
    let mut traj = Trajectory::new();
    if text.is_empty() {
        return Ok(traj);
    }
    match domain {
        Domain::Wikiqa => {
            let mut counters = [0u32; 3];
            for (i, line) in text.split('\n').enumerate() {
                let (kind, label, slot) = if line.starts_with("Thought ") {
                    (StepKind::Thought, "Thought", 0)
                } else if line.starts_with("Action ") {
                    (StepKind::Action, "Action", 1)
                } else if line.starts_with("Observation ") {
                    (StepKind::Observation, "Observation", 2)
                } else {
                    return Err(TrajectoryParseError::Unrecognised(i + 1));
                };
                counters[slot] += 1;
                let expected = counters[slot];
                let prefix = format!("{label} {expected}: ");
                let body = line.strip_prefix(&prefix).ok_or(TrajectoryParseError::BadLine { line: i + 1, kind: label, expected })?;
                match kind {
                    StepKind::Thought => traj.push_thought(body),
                    StepKind::Action => traj.push_action(body, parse_wiki_action(body)),
                    StepKind::Observation => traj.push_observation(body),
                }
            }
        }
        Domain::Household => {
            let lines: Vec<&str> = text.split('\n').collect();
            for pair in lines.chunks(2) {
                traj.push_action(pair[0], parse_household_action(pair[0]));
                if let Some(obs) = pair.get(1) {
                    traj.push_observation(*obs);
                }
            }
        }
        Domain::Codeexec => {
            let parsed =
                extract_code(text).filter(|code| code_step_text(code) == text).map(|code| ParsedAction::new(ActionKind::CodeSubmission, code));
            traj.push_action(text, parsed);
        }
    }
    finish_if_terminal(&mut traj);
    Ok(traj)
}

/// Whether the episode is the agent's own attempt or a reflector retry.
#[derive(Debug, Clone)]
pub enum Mode {
    Agent,
    /// `prompt` is the rendered reflector prompt for the failed parent.
    Reflector {
        prompt: String,
        parent_id: String,
    },
}

pub struct EpisodeContext<'a> {
    pub config: &'a GenerationConfig,
    pub prompts: &'a PromptStore,
}

const REFLECTION_STOPS: [&str; 4] = ["\nThought", "\nAction", "\n>", "\nObservation"];

fn continuation(base: &str, traj: &Trajectory, style: RenderStyle) -> String {
    if traj.steps.is_empty() {
        format!("{base}\n")
    } else {
        format!("{base}\n{}\n", traj.render(style))
    }
}

fn env_command_count(traj: &Trajectory) -> usize {
    traj.actions().filter(|s| s.action_parsed.as_ref().is_some_and(|a| a.kind == ActionKind::EnvCommand)).count()
}

fn generation_error(task: &TaskInstance, index: usize, origin: Origin, parent: Option<String>, traj: Trajectory, err: String) -> Sample {
    Sample {
        task_id: task.id.clone(),
        domain: task.domain,
        sample_index: index,
        origin,
        parent_sample_id: parent,
        reflection: None,
        trajectory: traj,
        feedback: Feedback::failure(format!("generation error: {err}"), FeedbackDetails::Error { message: err }),
    }
}

/// Runs one episode to termination or a limit. Backend failures become a
/// failed sample rather than an error.
pub fn run_episode(
    task: &TaskInstance,
    env: &mut dyn Environment,
    backend: &dyn Backend,
    ctx: &EpisodeContext<'_>,
    mode: Mode,
    sample_index: usize,
) -> Sample {
    let cfg = ctx.config;
    let domain = task.domain;
    let style = domain.render_style();
    let (role, origin, parent) = match &mode {
        Mode::Agent => (Role::Agent, Origin::Agent, None),
        Mode::Reflector { parent_id, .. } => (Role::Reflector, Origin::Reflector, Some(parent_id.clone())),
    };
    let tag = |turn| RequestTag { role, domain, task_id: task.id.clone(), sample_index, turn };
    let request = |prompt: String, turn, stops: Vec<String>| ModelRequest {
        prompt,
        n: 1,
        temperature: cfg.temperature,
        stop_sequences: stops,
        max_new_tokens: cfg.max_new_tokens,
        tag: tag(turn),
    };

    let mut reflection = None;
    let base = match &mode {
        Mode::Agent => {
            let id = TemplateId::agent(domain);
            let examples = if cfg.few_shot { ctx.prompts.examples(id) } else { "" };
            match ctx.prompts.render_agent_prompt(id, task, examples) {
                Ok(p) => p,
                Err(e) => return generation_error(task, sample_index, origin, parent, Trajectory::new(), e.to_string()),
            }
        }
        Mode::Reflector { prompt, .. } if domain != Domain::Codeexec => {
            let stops = REFLECTION_STOPS.iter().map(|s| s.to_string()).collect();
            let req = request(prompt.clone(), TurnKind::Reflection, stops);
            let text = match backend.generate(&req) {
                Ok(r) => r.completions.into_iter().next().unwrap_or_default(),
                Err(e) => return generation_error(task, sample_index, origin, parent, Trajectory::new(), e.to_string()),
            };
            let text = cut_at_stop(&text, &req.stop_sequences).0.trim().to_string();
            let base = format!("{prompt} {text}");
            reflection = Some(text);
            base
        }
        Mode::Reflector { prompt, .. } => prompt.clone(),
    };

    let turn_limit = cfg.max_react_steps.for_domain(domain);
    let mut traj = Trajectory::new();
    let mut stop_reason: Option<String> = None;
    let mut turn = 0u32;
    loop {
        if turn as usize >= turn_limit {
            stop_reason = Some(format!("step limit of {turn_limit} turns reached"));
            break;
        }
        turn += 1;
        let req = request(continuation(&base, &traj, style), TurnKind::Step(turn), Vec::new());
        let raw = match generate_stepwise(backend, &req) {
            Ok(r) => r,
            Err(e) => return generation_error(task, sample_index, origin, parent, traj, e.to_string()),
        };
        if role == Role::Reflector && domain == Domain::Codeexec && reflection.is_none() {
            let head = raw.split("[improved impl]:").next().unwrap_or("");
            let head = head.split("```").next().unwrap_or("").trim();
            reflection = Some(head.to_string());
        }
        if raw.trim().is_empty() {
            stop_reason = Some("the model produced no further output".to_string());
            break;
        }
        match parse_turn(&raw, domain) {
            Ok(Turn { thought, action, action_text }) => {
                if let Some(t) = thought {
                    traj.push_thought(t);
                }
                if action.kind.is_terminal() {
                    let answer = action.argument.clone();
                    traj.push_action(action_text, Some(action));
                    traj.finish(Some(answer));
                    break;
                }
                if action.kind == ActionKind::EnvCommand && env_command_count(&traj) >= cfg.max_env_actions {
                    stop_reason = Some(format!("action limit of {} environment actions reached", cfg.max_env_actions));
                    break;
                }
                let transition = env.step(&action);
                traj.push_action(action_text, Some(action));
                traj.push_observation(transition.observation);
                if transition.done {
                    traj.terminal = true;
                    break;
                }
                if domain == Domain::Household && loop_detected(&traj.steps, cfg.max_env_actions) {
                    stop_reason = Some("loop detected: the same action and observation repeated more than 3 times".into());
                    break;
                }
            }
            Err(m) => {
                if let Some(t) = m.thought {
                    traj.push_thought(t);
                }
                traj.push_action(m.action_text, None);
                traj.push_observation(INVALID_ACTION);
            }
        }
    }

    let mut feedback = match env.evaluate(&traj) {
        Ok(f) => f,
        Err(e) => Feedback::failure(format!("evaluation error: {e}"), FeedbackDetails::Error { message: e.to_string() }),
    };
    if let (Some(reason), false) = (&stop_reason, feedback.passed) {
        feedback.verbal = format!("{} Stopped: {reason}.", feedback.verbal);
    }
    tracing::debug!(sample = %sample_id(&task.id, origin, sample_index), passed = feedback.passed, "episode finished");
    Sample { task_id: task.id.clone(), domain, sample_index, origin, parent_sample_id: parent, reflection, trajectory: traj, feedback }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wiki_turns() {
        let t = parse_turn("Thought 1: I need to search Colorado orogeny…\nAction 1: Search[Colorado orogeny]", Domain::Wikiqa).unwrap();
        assert!(t.thought.is_some());
        assert_eq!(t.action, ParsedAction::new(ActionKind::Search, "Colorado orogeny"));
        let t = parse_turn("Action 2: Lookup[eastern sector]", Domain::Wikiqa).unwrap();
        assert_eq!(t.thought, None);
        assert_eq!(t.action, ParsedAction::new(ActionKind::Lookup, "eastern sector"));
        assert!(parse_turn("I think the answer is 42", Domain::Wikiqa).is_err());
        assert!(parse_turn("Action 1: search[x]", Domain::Wikiqa).is_err());
    }

    #[test]
    fn first_action_wins() {
        let t = parse_turn("Action 1: Search[a]\nAction 2: Finish[b]", Domain::Wikiqa).unwrap();
        assert_eq!(t.action.kind, ActionKind::Search);
    }

    #[test]
    fn malformed_keeps_pieces() {
        let m = parse_turn("Thought 2: hmm\nAction 2: I will just guess the year.", Domain::Wikiqa).unwrap_err();
        assert_eq!(m.thought.as_deref(), Some("hmm"));
        assert_eq!(m.action_text, "I will just guess the year.");
    }

    #[test]
    fn code_turns() {
        let t = parse_turn("[PYTHON]\ndef add(a,b): return a+b\n[/PYTHON]", Domain::Codeexec).unwrap();
        assert_eq!(t.action, ParsedAction::new(ActionKind::CodeSubmission, "def add(a,b): return a+b"));
        let t = parse_turn("reasoning\n```python\nx = 1\n```\ntrailer", Domain::Codeexec).unwrap();
        assert_eq!(t.action.argument, "x = 1");
        assert!(parse_turn("no code here", Domain::Codeexec).is_err());
    }

    #[test]
    fn household_turns() {
        let t = parse_turn("> think: plan it", Domain::Household).unwrap();
        assert_eq!(t.action, ParsedAction::new(ActionKind::Think, "plan it"));
        assert_eq!(t.action_text, "> think: plan it");
        let t = parse_turn("> go to cabinet 1", Domain::Household).unwrap();
        assert_eq!(t.action, ParsedAction::new(ActionKind::EnvCommand, "go to cabinet 1"));
        assert!(parse_turn("go to cabinet 1", Domain::Household).is_err());
    }

    fn line_text() -> impl Strategy<Value = String> {
        "[A-Za-z0-9 ,.()'-]{0,24}".prop_map(|s| s.trim().to_string())
    }

    fn wiki_traj() -> impl Strategy<Value = Trajectory> {
        let turn = (proptest::option::of(line_text()), 0..4usize, line_text(), line_text());
        (proptest::collection::vec(turn, 0..6), any::<bool>()).prop_map(|(turns, finish)| {
            let mut t = Trajectory::new();
            for (thought, kind, arg, obs) in turns {
                if let Some(th) = thought {
                    t.push_thought(th);
                }
                let text = match kind {
                    0 => format!("Search[{arg}]"),
                    1 => format!("Lookup[{arg}]"),
                    2 => format!("Finish[{arg}]"),
                    _ => arg.clone(),
                };
                let parsed = parse_wiki_action(&text);
                t.push_action(text, parsed);
                t.push_observation(obs);
            }
            if finish {
                t.push_action("Finish[done]", Some(ParsedAction::new(ActionKind::Finish, "done")));
                t.finish(Some("done".into()));
            }
            t
        })
    }

    proptest! {
        #[test]
        fn wiki_render_parse_round_trip(t in wiki_traj()) {
            let text = t.render(RenderStyle::React);
            let back = parse_trajectory(&text, Domain::Wikiqa).unwrap();
            prop_assert_eq!(back.render(RenderStyle::React), text);
            prop_assert_eq!(&back.steps, &t.steps);
            prop_assert!(back.check_steps().is_ok());
        }
    }

    #[test]
    fn household_round_trip() {
        let mut t = Trajectory::new();
        t.push_action("> think: plan", Some(ParsedAction::new(ActionKind::Think, "plan")));
        t.push_observation("OK.");
        t.push_action("> go to cabinet 1", Some(ParsedAction::new(ActionKind::EnvCommand, "go to cabinet 1")));
        t.push_observation("On the cabinet 1, you see nothing.");
        let back = parse_trajectory(&t.render(RenderStyle::Plain), Domain::Household).unwrap();
        assert_eq!(back.steps, t.steps);
    }

    #[test]
    fn code_round_trip() {
        let text = code_step_text("def f():\n    return 1");
        let t = parse_trajectory(&text, Domain::Codeexec).unwrap();
        assert_eq!(t.final_answer.as_deref(), Some("def f():\n    return 1"));
        assert_eq!(t.render(RenderStyle::Plain), text);
    }

    #[test]
    fn bad_numbering_rejected() {
        assert!(parse_trajectory("Thought 2: x", Domain::Wikiqa).is_err());
        assert!(parse_trajectory("Nonsense", Domain::Wikiqa).is_err());
    }
}
