//! A full data round: sample k trajectories per task, reflect on the
//! failures, and assemble the training corpora.
//!
//! cargo run --example self_training_round [OUT_DIR]

use rerest::backend::ScriptedPolicy;
use rerest::datasets::{stats_table, write_bundle};
use rerest::envs::EnvFactory;
use rerest::pipeline::{run_round, RunContext};
use rerest::prompts::PromptStore;
use rerest::{assets, Domain, GenerationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tasks = assets::tasks(Domain::Wikiqa);
    let backend = ScriptedPolicy::new(assets::all_banks(), 0.4, 0.5, 7);
    let factory = EnvFactory::new(1.0).with_corpus(assets::corpus());
    let config = GenerationConfig { k: 3, ..Default::default() };
    let prompts = PromptStore::bundled();
    let ctx = RunContext { backend: &backend, factory: &factory, config: &config, prompts: &prompts };

    let round = run_round(&tasks, &ctx, "example")?;
    print!("{}", stats_table(&round.bundle.stats));

    let out = match std::env::args().nth(1) {
        Some(dir) => std::path::PathBuf::from(dir),
        None => std::env::temp_dir().join("rerest-round"),
    };
    write_bundle(&out, &round.bundle, true)?;
    println!("bundle written to {}", out.join("bundle").display());
    Ok(())
}
