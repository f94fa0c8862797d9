//! Search / Lookup / Finish over a local document collection, scored by
//! exact match.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EnvError, Environment, Transition};
use crate::types::{ActionKind, Domain, Feedback, FeedbackDetails, ParsedAction, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiDocument {
    pub title: String,
    /// Paragraphs, each a list of sentences.
    pub paragraphs: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default)]
pub struct WikiCorpus {
    documents: Vec<WikiDocument>,
}

impl WikiCorpus {
    pub fn new(documents: Vec<WikiDocument>) -> Result<Self, EnvError> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.title.to_lowercase()) {
                return Err(EnvError::Corpus(format!("duplicate title `{}`", doc.title)));
            }
            if doc.paragraphs.is_empty() || doc.paragraphs.iter().any(|p| p.is_empty()) {
                return Err(EnvError::Corpus(format!("`{}` has an empty paragraph", doc.title)));
            }
        }
        Ok(Self { documents })
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let docs: Vec<WikiDocument> = serde_json::from_str(text).map_err(|e| EnvError::Corpus(format!("corpus json: {e}")))?;
        Self::new(docs)
    }

    pub fn documents(&self) -> &[WikiDocument] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    fn find(&self, entity: &str) -> Option<&WikiDocument> {
        let wanted = entity.trim().to_lowercase();
        self.documents.iter().find(|d| d.title.to_lowercase() == wanted)
    }
}

/// Retrieval state carried across one episode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WikiSearchState {
    pub last_passage: Option<Vec<String>>,
    pub lookup_keyword: Option<String>,
    pub lookup_cursor: usize,
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Titles ranked by token overlap with `entity`, ties broken lexicographically.
pub fn similar_titles(corpus: &WikiCorpus, entity: &str, n: usize) -> Vec<String> {
    let wanted = tokens(entity);
    let mut scored: Vec<(usize, &str)> = corpus
        .documents
        .iter()
        .map(|d| (tokens(&d.title).intersection(&wanted).count(), d.title.as_str()))
        .filter(|(overlap, _)| *overlap > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(n).map(|(_, t)| t.to_string()).collect()
}

/// Quotes a string the way a Python list repr would.
fn py_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

pub fn wiki_search(corpus: &WikiCorpus, entity: &str, state: &mut WikiSearchState) -> String {
    match corpus.find(entity) {
        Some(doc) => {
            state.last_passage = Some(doc.paragraphs.iter().flatten().cloned().collect());
            state.lookup_keyword = None;
            state.lookup_cursor = 0;
            doc.paragraphs[0].join(" ")
        }
        None => {
            let similar: Vec<String> = similar_titles(corpus, entity, 5).iter().map(|t| py_repr(t)).collect();
            format!("Could not find [{entity}]. Similar: [{}]", similar.join(", "))
        }
    }
}

pub fn wiki_lookup(state: &mut WikiSearchState, keyword: &str) -> String {
    if state.lookup_keyword.as_deref() != Some(keyword) {
        state.lookup_keyword = Some(keyword.to_string());
        state.lookup_cursor = 0;
    }
    let Some(passage) = &state.last_passage else {
        return "No more results.".to_string();
    };
    let needle = keyword.to_lowercase();
    let hits: Vec<&String> = passage.iter().filter(|s| s.to_lowercase().contains(&needle)).collect();
    if state.lookup_cursor >= hits.len() {
        return "No more results.".to_string();
    }
    state.lookup_cursor += 1;
    format!("(Result {} / {}) {}", state.lookup_cursor, hits.len(), hits[state.lookup_cursor - 1])
}

/// Lowercase, strip punctuation, collapse whitespace, drop a leading article.
pub fn normalize_answer(s: &str) -> String {
    let cleaned: String = s.to_lowercase().chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
    let mut words: Vec<&str> = cleaned.split_whitespace().collect();
    if matches!(words.first(), Some(&"a" | &"an" | &"the")) {
        words.remove(0);
    }
    words.join(" ")
}

pub fn em_evaluate(answer: &str, gold: &str) -> Feedback {
    let passed = normalize_answer(answer) == normalize_answer(gold);
    let verbal = if passed { format!("Answer {answer} is correct.") } else { format!("Answer {answer} is incorrect; the gold answer is {gold}.") };
    let details = FeedbackDetails::ExactMatch { given: answer.to_string(), gold: gold.to_string() };
    Feedback::from_score(if passed { 1.0 } else { 0.0 }, 1.0, verbal, details)
}

pub struct WikiEnv {
    corpus: Arc<WikiCorpus>,
    gold: String,
    threshold: f64,
    state: WikiSearchState,
    actions: usize,
}

impl WikiEnv {
    pub fn new(corpus: Arc<WikiCorpus>, gold: impl Into<String>, threshold: f64) -> Self {
        Self { corpus, gold: gold.into(), threshold, state: WikiSearchState::default(), actions: 0 }
    }

    pub fn state(&self) -> &WikiSearchState {
        &self.state
    }
}

impl Environment for WikiEnv {
    fn domain(&self) -> Domain {
        Domain::Wikiqa
    }

    fn step(&mut self, action: &ParsedAction) -> Transition {
        self.actions += 1;
        let observation = match action.kind {
            ActionKind::Search => wiki_search(&self.corpus, &action.argument, &mut self.state),
            ActionKind::Lookup => wiki_lookup(&mut self.state, &action.argument),
            ActionKind::Finish => return Transition { observation: "Episode finished.".into(), done: true },
            _ => "Invalid action format.".to_string(),
        };
        Transition { observation, done: false }
    }

    fn evaluate(&mut self, traj: &Trajectory) -> Result<Feedback, EnvError> {
        let mut fb = match &traj.final_answer {
            Some(answer) => em_evaluate(answer, &self.gold),
            None => Feedback::failure(
                "The trial ended without a Finish action.",
                FeedbackDetails::ExactMatch { given: String::new(), gold: self.gold.clone() },
            ),
        };
        fb.passed = fb.score >= self.threshold;
        Ok(fb)
    }

    fn action_count(&self) -> usize {
        self.actions
    }
}
