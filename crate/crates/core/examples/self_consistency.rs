//! Majority voting over agent samples plus reflector revisions, without
//! access to the gold answer.
//!
//! cargo run --example self_consistency

use rerest::backend::ScriptedPolicy;
use rerest::envs::EnvFactory;
use rerest::infer::{infer_self_consistency, majority_vote};
use rerest::pipeline::RunContext;
use rerest::prompts::PromptStore;
use rerest::{assets, Domain, GenerationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let votes: Vec<String> = ["Paris", "the Paris", "Lyon", ""].iter().map(|s| s.to_string()).collect();
    println!("majority_vote({votes:?}) = {:?}", majority_vote(&votes));

    let backend = ScriptedPolicy::new(assets::all_banks(), 0.4, 0.5, 7);
    let factory = EnvFactory::new(1.0).with_corpus(assets::corpus());
    let config = GenerationConfig::default();
    let prompts = PromptStore::bundled();
    let ctx = RunContext { backend: &backend, factory: &factory, config: &config, prompts: &prompts };
    for task in assets::tasks(Domain::Wikiqa).iter().take(5) {
        let sc = infer_self_consistency(task, &ctx, 3, 3)?;
        println!("{}: {:?} from {:?} (gold {})", task.id, sc.answer, sc.votes, task.gold.label());
    }
    Ok(())
}
