//! A small text world: receptacles, portable objects, one goal predicate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EnvError, Environment, Transition};
use crate::types::{ActionKind, Domain, Feedback, FeedbackDetails, ParsedAction, Step, StepKind, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptacleSpec {
    pub name: String,
    pub openable: bool,
    #[serde(default)]
    pub contents: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    At,
    ExaminedWith,
}

/// `at(object, receptacle)` or `examined_with(object, tool)`. The object may
/// name a class (`spraybottle`) or an instance (`spraybottle 2`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub kind: GoalKind,
    pub object: String,
    #[serde(alias = "tool")]
    pub receptacle: String,
}

impl GoalSpec {
    pub fn predicate_id(&self) -> String {
        match self.kind {
            GoalKind::At => format!("at({}, {})", self.object, self.receptacle),
            GoalKind::ExaminedWith => format!("examined_with({}, {})", self.object, self.receptacle),
        }
    }

    pub fn instruction(&self) -> String {
        match self.kind {
            GoalKind::At => format!("put some {} on {}.", self.object, class_of(&self.receptacle)),
            GoalKind::ExaminedWith => format!("examine the {} with the {}.", self.object, class_of(&self.receptacle)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub receptacles: Vec<ReceptacleSpec>,
    pub objects: Vec<String>,
    pub goal: GoalSpec,
}

/// `"spraybottle 2"` -> `"spraybottle"`.
pub fn class_of(name: &str) -> &str {
    match name.rsplit_once(' ') {
        Some((class, n)) if n.chars().all(|c| c.is_ascii_digit()) => class,
        _ => name,
    }
}

fn matches_name(name: &str, wanted: &str) -> bool {
    name == wanted || class_of(name) == wanted
}

/// `a x` / `a x, and a y` / `a x, a y, a z`; empty is `nothing`.
pub fn contents_listing(items: &[String]) -> String {
    match items.len() {
        0 => "nothing".to_string(),
        2 => format!("a {}, and a {}", items[0], items[1]),
        _ => items.iter().map(|i| format!("a {i}")).collect::<Vec<_>>().join(", "),
    }
}

fn room_listing(names: &[&str]) -> String {
    match names.len() {
        0 => "nothing".to_string(),
        1 => format!("a {}", names[0]),
        _ => {
            let head: Vec<String> = names[..names.len() - 1].iter().map(|n| format!("a {n}")).collect();
            format!("{}, and a {}", head.join(", "), names[names.len() - 1])
        }
    }
}

impl WorldSpec {
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let spec: WorldSpec = serde_json::from_str(text).map_err(|e| EnvError::World(format!("world json: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let mut placed: HashMap<&str, usize> = HashMap::new();
        for r in &self.receptacles {
            for o in &r.contents {
                *placed.entry(o.as_str()).or_default() += 1;
            }
        }
        for o in &self.objects {
            match placed.get(o.as_str()) {
                Some(1) => {}
                Some(_) => return Err(EnvError::World(format!("object `{o}` placed more than once"))),
                None => return Err(EnvError::World(format!("object `{o}` is not in any receptacle"))),
            }
        }
        if placed.len() != self.objects.len() {
            return Err(EnvError::World("a receptacle holds an undeclared object".into()));
        }
        let goal = &self.goal;
        if !self.objects.iter().any(|o| matches_name(o, &goal.object)) {
            return Err(EnvError::World(format!("goal object `{}` is not declared", goal.object)));
        }
        let target_ok = match goal.kind {
            GoalKind::At => self.receptacles.iter().any(|r| matches_name(&r.name, &goal.receptacle)),
            GoalKind::ExaminedWith => self.objects.iter().any(|o| matches_name(o, &goal.receptacle)),
        };
        if !target_ok {
            return Err(EnvError::World(format!("goal target `{}` is not declared", goal.receptacle)));
        }
        Ok(())
    }

    /// Opening description and instruction, as shown to the agent.
    pub fn task_description(&self) -> String {
        let names: Vec<&str> = self.receptacles.iter().map(|r| r.name.as_str()).collect();
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.\nYour task is to: {}",
            room_listing(&names),
            self.goal.instruction()
        )
    }
}

#[derive(Debug, Clone)]
struct Receptacle {
    name: String,
    openable: bool,
    open: bool,
    contents: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    receptacles: Vec<Receptacle>,
    location: Option<usize>,
    inventory: Option<String>,
    examined: Vec<(String, String)>,
    goal: GoalSpec,
}

enum Command<'a> {
    GoTo(&'a str),
    Open(&'a str),
    Close(&'a str),
    Take(&'a str, &'a str),
    Put(&'a str, &'a str),
    Examine(&'a str),
    Use(&'a str),
}

fn parse_command(cmd: &str) -> Option<Command<'_>> {
    let cmd = cmd.trim();
    if let Some(r) = cmd.strip_prefix("go to ") {
        return Some(Command::GoTo(r.trim()));
    }
    if let Some(r) = cmd.strip_prefix("open ") {
        return Some(Command::Open(r.trim()));
    }
    if let Some(r) = cmd.strip_prefix("close ") {
        return Some(Command::Close(r.trim()));
    }
    if let Some(rest) = cmd.strip_prefix("take ") {
        let (o, r) = rest.split_once(" from ")?;
        return Some(Command::Take(o.trim(), r.trim()));
    }
    if let Some(rest) = cmd.strip_prefix("put ") {
        for sep in [" in/on ", " in ", " on "] {
            if let Some((o, r)) = rest.split_once(sep) {
                return Some(Command::Put(o.trim(), r.trim()));
            }
        }
        return None;
    }
    if let Some(r) = cmd.strip_prefix("examine ") {
        return Some(Command::Examine(r.trim()));
    }
    if let Some(r) = cmd.strip_prefix("use ") {
        return Some(Command::Use(r.trim()));
    }
    None
}

const NOTHING: &str = "Nothing happens.";

impl WorldState {
    pub fn new(spec: &WorldSpec) -> Self {
        let receptacles = spec
            .receptacles
            .iter()
            .map(|r| Receptacle { name: r.name.clone(), openable: r.openable, open: false, contents: r.contents.clone() })
            .collect();
        Self { receptacles, location: None, inventory: None, examined: Vec::new(), goal: spec.goal.clone() }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.receptacles.iter().position(|r| r.name == name)
    }

    fn accessible(&self, idx: usize) -> bool {
        let r = &self.receptacles[idx];
        !r.openable || r.open
    }

    /// The receptacle the agent stands at, if it is `name` and reachable.
    fn here(&self, name: &str) -> Option<usize> {
        let idx = self.find(name)?;
        (self.location == Some(idx)).then_some(idx)
    }

    pub fn inventory(&self) -> Option<&str> {
        self.inventory.as_deref()
    }

    pub fn location(&self) -> Option<&str> {
        self.location.map(|i| self.receptacles[i].name.as_str())
    }

    /// Every object location: `(object, receptacle or "inventory")`.
    pub fn placements(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> =
            self.receptacles.iter().flat_map(|r| r.contents.iter().map(move |o| (o.clone(), r.name.clone()))).collect();
        if let Some(held) = &self.inventory {
            out.push((held.clone(), "inventory".into()));
        }
        out
    }

    fn describe(&self, idx: usize) -> String {
        let r = &self.receptacles[idx];
        if r.openable {
            if r.open {
                format!("The {} is open. In it, you see {}.", r.name, contents_listing(&r.contents))
            } else {
                format!("The {} is closed.", r.name)
            }
        } else {
            format!("On the {}, you see {}.", r.name, contents_listing(&r.contents))
        }
    }

    pub fn goal_satisfied(&self) -> bool {
        let g = &self.goal;
        match g.kind {
            GoalKind::At => self
                .receptacles
                .iter()
                .filter(|r| matches_name(&r.name, &g.receptacle))
                .any(|r| r.contents.iter().any(|o| matches_name(o, &g.object))),
            GoalKind::ExaminedWith => self.examined.iter().any(|(held, tool)| matches_name(held, &g.object) && matches_name(tool, &g.receptacle)),
        }
    }

    pub fn apply(&mut self, command: &str) -> String {
        let Some(cmd) = parse_command(command) else {
            return NOTHING.to_string();
        };
        match cmd {
            Command::GoTo(name) => {
                let Some(idx) = self.find(name) else { return NOTHING.into() };
                if self.location == Some(idx) {
                    return NOTHING.into();
                }
                self.location = Some(idx);
                self.describe(idx)
            }
            Command::Open(name) => {
                let Some(idx) = self.here(name) else { return NOTHING.into() };
                let r = &mut self.receptacles[idx];
                if !r.openable || r.open {
                    return NOTHING.into();
                }
                r.open = true;
                let name = r.name.clone();
                format!("You open the {name}. {}", self.describe(idx))
            }
            Command::Close(name) => {
                let Some(idx) = self.here(name) else { return NOTHING.into() };
                let r = &mut self.receptacles[idx];
                if !r.openable || !r.open {
                    return NOTHING.into();
                }
                r.open = false;
                format!("You close the {}.", r.name)
            }
            Command::Take(obj, name) => {
                let Some(idx) = self.here(name) else { return NOTHING.into() };
                if self.inventory.is_some() || !self.accessible(idx) {
                    return NOTHING.into();
                }
                let r = &mut self.receptacles[idx];
                let Some(pos) = r.contents.iter().position(|o| o == obj) else { return NOTHING.into() };
                let taken = r.contents.remove(pos);
                let msg = format!("You pick up the {} from the {}.", taken, r.name);
                self.inventory = Some(taken);
                msg
            }
            Command::Put(obj, name) => {
                let Some(idx) = self.here(name) else { return NOTHING.into() };
                if self.inventory.as_deref() != Some(obj) || !self.accessible(idx) {
                    return NOTHING.into();
                }
                let held = self.inventory.take().unwrap_or_default();
                let r = &mut self.receptacles[idx];
                let msg = format!("You put the {} in/on the {}.", held, r.name);
                r.contents.push(held);
                msg
            }
            Command::Examine(target) => {
                if let Some(idx) = self.here(target) {
                    return self.describe(idx);
                }
                let visible = self.inventory.as_deref() == Some(target)
                    || self.location.is_some_and(|i| self.accessible(i) && self.receptacles[i].contents.iter().any(|o| o == target));
                if visible {
                    format!("There's nothing special about {target}.")
                } else {
                    NOTHING.into()
                }
            }
            Command::Use(tool) => {
                let Some(idx) = self.location else { return NOTHING.into() };
                if !self.accessible(idx) || !self.receptacles[idx].contents.iter().any(|o| o == tool) {
                    return NOTHING.into();
                }
                if let Some(held) = &self.inventory {
                    self.examined.push((held.clone(), tool.to_string()));
                }
                format!("You turn on the {tool}.")
            }
        }
    }
}

/// True when the latest (action, observation) pair has repeated more than
/// three times in a row, or more than `max_env_actions` environment commands
/// have been issued.
pub fn loop_detected(history: &[Step], max_env_actions: usize) -> bool {
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    let mut env_actions = 0;
    let mut iter = history.iter().peekable();
    while let Some(step) = iter.next() {
        if step.kind != StepKind::Action {
            continue;
        }
        if step.action_parsed.as_ref().is_some_and(|a| a.kind == ActionKind::EnvCommand) {
            env_actions += 1;
        }
        let obs = match iter.peek() {
            Some(next) if next.kind == StepKind::Observation => iter.next().map(|s| s.text.as_str()).unwrap_or(""),
            _ => "",
        };
        pairs.push((step.text.as_str(), obs));
    }
    if env_actions > max_env_actions {
        return true;
    }
    let Some(last) = pairs.last() else { return false };
    pairs.iter().rev().take_while(|p| *p == last).count() > 3
}

pub struct HouseholdEnv {
    spec: WorldSpec,
    state: WorldState,
    threshold: f64,
    actions: usize,
}

impl HouseholdEnv {
    pub fn new(spec: WorldSpec, threshold: f64) -> Self {
        let state = WorldState::new(&spec);
        Self { spec, state, threshold, actions: 0 }
    }

    pub fn world(&self) -> &WorldState {
        &self.state
    }
}

impl Environment for HouseholdEnv {
    fn domain(&self) -> Domain {
        Domain::Household
    }

    fn step(&mut self, action: &ParsedAction) -> Transition {
        self.actions += 1;
        let observation = match action.kind {
            ActionKind::Think => "OK.".to_string(),
            ActionKind::EnvCommand => self.state.apply(&action.argument),
            _ => NOTHING.to_string(),
        };
        Transition { observation, done: self.state.goal_satisfied() }
    }

    fn evaluate(&mut self, _traj: &Trajectory) -> Result<Feedback, EnvError> {
        let done = self.state.goal_satisfied();
        let goal = self.spec.goal.predicate_id();
        let (verbal, reason) = if done {
            (format!("Task succeeded: {goal} holds."), "goal reached".to_string())
        } else {
            (format!("Task failed: {goal} does not hold."), "goal not reached".to_string())
        };
        let score = if done { 1.0 } else { 0.0 };
        Ok(Feedback::from_score(score, self.threshold, verbal, FeedbackDetails::Household { goal, reason }))
    }

    fn action_count(&self) -> usize {
        self.actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> WorldSpec {
        WorldSpec {
            receptacles: vec![
                ReceptacleSpec { name: "cabinet 2".into(), openable: true, contents: vec!["candle 1".into(), "spraybottle 2".into()] },
                ReceptacleSpec {
                    name: "cabinet 1".into(),
                    openable: false,
                    contents: vec!["cloth 1".into(), "soapbar 1".into(), "soapbottle 1".into()],
                },
                ReceptacleSpec { name: "toilet 1".into(), openable: false, contents: vec!["soapbottle 2".into()] },
            ],
            objects: ["candle 1", "spraybottle 2", "cloth 1", "soapbar 1", "soapbottle 1", "soapbottle 2"].map(String::from).to_vec(),
            goal: GoalSpec { kind: GoalKind::At, object: "spraybottle".into(), receptacle: "toilet 1".into() },
        }
    }

    fn cmd(s: &str) -> ParsedAction {
        ParsedAction::new(ActionKind::EnvCommand, s)
    }

    #[test]
    fn listings() {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(contents_listing(&[]), "nothing");
        assert_eq!(contents_listing(&v(&["x 1"])), "a x 1");
        assert_eq!(contents_listing(&v(&["candle 1", "spraybottle 2"])), "a candle 1, and a spraybottle 2");
        assert_eq!(contents_listing(&v(&["a 1", "b 1", "c 1"])), "a a 1, a b 1, a c 1");
        assert_eq!(room_listing(&["a 1", "b 1", "c 1"]), "a a 1, a b 1, and a c 1");
    }

    #[test]
    fn spraybottle_sequence() {
        let mut env = HouseholdEnv::new(world(), 1.0);
        let steps = [
            ("go to cabinet 1", "On the cabinet 1, you see a cloth 1, a soapbar 1, a soapbottle 1.", false),
            ("go to cabinet 2", "The cabinet 2 is closed.", false),
            ("open cabinet 2", "You open the cabinet 2. The cabinet 2 is open. In it, you see a candle 1, and a spraybottle 2.", false),
            ("open cabinet 2", "Nothing happens.", false),
            ("take spraybottle 2 from cabinet 2", "You pick up the spraybottle 2 from the cabinet 2.", false),
            ("go to toilet 1", "On the toilet 1, you see a soapbottle 2.", false),
            ("put spraybottle 2 in/on toilet 1", "You put the spraybottle 2 in/on the toilet 1.", true),
        ];
        for (c, obs, done) in steps {
            let t = env.step(&cmd(c));
            assert_eq!(t.observation, obs, "{c}");
            assert_eq!(t.done, done, "{c}");
        }
        assert!(env.evaluate(&Trajectory::new()).unwrap().passed);
        assert_eq!(env.action_count(), 7);
    }

    #[test]
    fn think_and_invalid() {
        let mut env = HouseholdEnv::new(world(), 1.0);
        assert_eq!(env.step(&ParsedAction::new(ActionKind::Think, "plan")).observation, "OK.");
        assert_eq!(env.step(&cmd("dance")).observation, "Nothing happens.");
        assert_eq!(env.step(&cmd("take candle 1 from cabinet 2")).observation, "Nothing happens.");
        assert!(!env.evaluate(&Trajectory::new()).unwrap().passed);
    }

    #[test]
    fn examine_with_tool() {
        let mut spec = world();
        spec.receptacles[2].contents.push("desklamp 1".into());
        spec.objects.push("desklamp 1".into());
        spec.goal = GoalSpec { kind: GoalKind::ExaminedWith, object: "candle".into(), receptacle: "desklamp 1".into() };
        spec.validate().unwrap();
        assert_eq!(spec.goal.instruction(), "examine the candle with the desklamp.");
        let mut env = HouseholdEnv::new(spec, 1.0);
        env.step(&cmd("go to cabinet 2"));
        env.step(&cmd("open cabinet 2"));
        env.step(&cmd("take candle 1 from cabinet 2"));
        env.step(&cmd("go to toilet 1"));
        let t = env.step(&cmd("use desklamp 1"));
        assert_eq!(t.observation, "You turn on the desklamp 1.");
        assert!(t.done);
    }

    #[test]
    fn description() {
        let d = world().task_description();
        assert_eq!(
            d,
            "You are in the middle of a room. Looking quickly around you, you see a cabinet 2, a cabinet 1, and a toilet 1.\nYour task is to: put some spraybottle on toilet."
        );
    }

    #[test]
    fn validation() {
        let mut w = world();
        w.objects.push("ghost 1".into());
        assert!(w.validate().is_err());
        let mut w = world();
        w.goal.receptacle = "sofa 1".into();
        assert!(w.validate().is_err());
    }

    fn history(pairs: &[(&str, &str)]) -> Vec<Step> {
        let mut t = Trajectory::new();
        for (a, o) in pairs {
            t.push_action(format!("> {a}"), Some(cmd(a)));
            t.push_observation(*o);
        }
        t.steps
    }

    #[test]
    fn loop_boundaries() {
        let rep = |n| history(&vec![("take x 1 from y 1", "Nothing happens."); n]);
        assert!(!loop_detected(&rep(3), 30));
        assert!(loop_detected(&rep(4), 30));
        let distinct: Vec<(String, String)> = (0..31).map(|i| (format!("go to r {i}"), format!("o{i}"))).collect();
        let pairs: Vec<(&str, &str)> = distinct.iter().map(|(a, o)| (a.as_str(), o.as_str())).collect();
        assert!(!loop_detected(&history(&pairs[..30]), 30));
        assert!(loop_detected(&history(&pairs), 30));
        let mut ten: Vec<(&str, &str)> = pairs[..7].to_vec();
        ten.extend(std::iter::repeat_n(("take x 1 from y 1", "Nothing happens."), 3));
        assert!(!loop_detected(&history(&ten), 30));
    }
}
