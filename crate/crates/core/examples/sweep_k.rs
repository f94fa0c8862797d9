//! How solved-task coverage grows with more samples per task, against one
//! reflection per failure at k = 3.
//!
//! cargo run --example sweep_k

use rerest::backend::ScriptedPolicy;
use rerest::envs::EnvFactory;
use rerest::pipeline::{sweep_k, sweep_table, RunContext};
use rerest::prompts::PromptStore;
use rerest::{assets, Domain, GenerationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tasks = assets::tasks(Domain::Wikiqa);
    // A weak agent and a stronger reflector.
    let backend = ScriptedPolicy::new(assets::all_banks(), 0.04, 0.16, 7);
    let factory = EnvFactory::new(1.0).with_corpus(assets::corpus());
    let config = GenerationConfig::default();
    let prompts = PromptStore::bundled();
    let ctx = RunContext { backend: &backend, factory: &factory, config: &config, prompts: &prompts };

    let rows = sweep_k(&tasks, &ctx, &[1, 2, 3, 4, 5, 6], true)?;
    print!("{}", sweep_table(&rows));
    Ok(())
}
