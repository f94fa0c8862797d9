//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rerest::backend::ScriptedPolicy;
use rerest::envs::EnvFactory;
use rerest::pipeline::RunContext;
use rerest::prompts::PromptStore;
use rerest::{assets, Domain, GenerationConfig};

/// Scripted draw written out independently of the crate: FNV-1a 64 over
/// `seed|task|index[|salt]`, bucket = hash mod 1000, success iff bucket/1000 < rate.
pub fn draw(seed: u64, task: &str, index: usize, rate: f64, salt: Option<&str>) -> bool {
    let key = match salt {
        Some(s) => format!("{seed}|{task}|{index}|{s}"),
        None => format!("{seed}|{task}|{index}"),
    };
    let mut h: u64 = 0xcbf29ce484222325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    ((h % 1000) as f64) / 1000.0 < rate
}

pub fn policy(agent: f64, reflector: f64, seed: u64) -> ScriptedPolicy {
    ScriptedPolicy::new(assets::all_banks(), agent, reflector, seed)
}

pub fn factory(domain: Domain) -> EnvFactory {
    let f = EnvFactory::new(1.0);
    match domain {
        Domain::Wikiqa => f.with_corpus(assets::corpus()),
        Domain::Codeexec => f.with_sandbox(rerest::envs::Sandbox::new("python3", Default::default()).expect("python3 on PATH")),
        Domain::Household => f,
    }
}

pub struct Fixture {
    pub backend: ScriptedPolicy,
    pub factory: EnvFactory,
    pub config: GenerationConfig,
    pub prompts: PromptStore,
}

impl Fixture {
    pub fn new(domain: Domain, agent: f64, reflector: f64, seed: u64, k: usize) -> Self {
        Self {
            backend: policy(agent, reflector, seed),
            factory: factory(domain),
            config: GenerationConfig { k, ..Default::default() },
            prompts: PromptStore::bundled(),
        }
    }

    pub fn ctx(&self) -> RunContext<'_> {
        RunContext { backend: &self.backend, factory: &self.factory, config: &self.config, prompts: &self.prompts }
    }
}
