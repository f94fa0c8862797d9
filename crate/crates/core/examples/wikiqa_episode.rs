//! One agent episode on a bundled multi-hop question, with the scripted
//! backend standing in for a model.
//!
//! cargo run --example wikiqa_episode

use rerest::backend::ScriptedPolicy;
use rerest::envs::EnvFactory;
use rerest::prompts::PromptStore;
use rerest::react::{run_episode, EpisodeContext, Mode};
use rerest::{assets, Domain, GenerationConfig};

fn main() {
    let task = assets::tasks(Domain::Wikiqa).remove(0);
    let backend = ScriptedPolicy::new(assets::all_banks(), 1.0, 0.0, 7);
    let factory = EnvFactory::new(1.0).with_corpus(assets::corpus());
    let config = GenerationConfig::default();
    let prompts = PromptStore::bundled();
    let ctx = EpisodeContext { config: &config, prompts: &prompts };

    let mut env = factory.make(&task).expect("wikiqa env");
    let sample = run_episode(&task, env.as_mut(), &backend, &ctx, Mode::Agent, 0);
    println!("Question: {}", task.prompt_body);
    println!("{}", sample.trajectory.render(Domain::Wikiqa.render_style()));
    println!("\npassed={} score={} ({})", sample.passed(), sample.feedback.score, sample.feedback.verbal);
}
