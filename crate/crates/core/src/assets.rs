//! Task sets, corpus, worlds and scripted banks compiled into the binary.

use std::collections::BTreeMap;

use crate::backend::BankEntry;
use crate::envs::WikiCorpus;
use crate::tasks::{parse_tasks, TaskFileError, WorldSource};
use crate::types::{Domain, TaskInstance};

pub const WIKI_CORPUS: &str = include_str!("../assets/wikiqa/corpus.json");
pub const WIKI_TASKS: &str = include_str!("../assets/wikiqa/tasks.json");
pub const WIKI_BANK: &str = include_str!("../assets/wikiqa/bank.json");
pub const HOUSEHOLD_TASKS: &str = include_str!("../assets/household/tasks.json");
pub const HOUSEHOLD_BANK: &str = include_str!("../assets/household/bank.json");
pub const CODE_TASKS: &str = include_str!("../assets/codeexec/tasks.json");
pub const CODE_BANK: &str = include_str!("../assets/codeexec/bank.json");

macro_rules! worlds {
    ($($name:literal),* $(,)?) => {
        &[$((concat!("worlds/", $name, ".json"), include_str!(concat!("../assets/household/worlds/", $name, ".json")))),*]
    };
}

/// Bundled household worlds keyed by their path relative to the task file.
pub const WORLDS: &[(&str, &str)] = worlds![
    "spraybottle",
    "world_01",
    "world_02",
    "world_03",
    "world_04",
    "world_05",
    "world_06",
    "world_07",
    "world_08",
    "world_09",
    "world_10",
    "world_11",
];

pub fn world(path: &str) -> Option<&'static str> {
    WORLDS.iter().find(|(p, _)| *p == path).map(|(_, text)| *text)
}

pub fn corpus() -> WikiCorpus {
    WikiCorpus::from_json(WIKI_CORPUS).expect("bundled corpus is valid")
}

pub fn tasks(domain: Domain) -> Vec<TaskInstance> {
    try_tasks(domain).expect("bundled tasks are valid")
}

fn try_tasks(domain: Domain) -> Result<Vec<TaskInstance>, TaskFileError> {
    let text = match domain {
        Domain::Wikiqa => WIKI_TASKS,
        Domain::Household => HOUSEHOLD_TASKS,
        Domain::Codeexec => CODE_TASKS,
    };
    parse_tasks(text, domain, &WorldSource::Bundled)
}

pub fn bank(domain: Domain) -> BTreeMap<String, BankEntry> {
    let text = match domain {
        Domain::Wikiqa => WIKI_BANK,
        Domain::Household => HOUSEHOLD_BANK,
        Domain::Codeexec => CODE_BANK,
    };
    serde_json::from_str(text).expect("bundled bank is valid")
}

/// Every bundled bank merged; task ids are unique across domains.
pub fn all_banks() -> BTreeMap<String, BankEntry> {
    Domain::ALL.into_iter().flat_map(bank).collect()
}
