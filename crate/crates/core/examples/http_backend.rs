//! Runs a few agent episodes against an OpenAI-compatible chat endpoint.
//!
//! RE_REST_ENDPOINT=http://localhost:8000/v1/chat/completions \
//! RE_REST_MODEL=my-model cargo run --example http_backend

use rerest::backend::{HttpBackend, HttpConfig};
use rerest::envs::EnvFactory;
use rerest::prompts::PromptStore;
use rerest::react::{run_episode, EpisodeContext, Mode};
use rerest::{assets, Domain, GenerationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut http = HttpConfig::default();
    http.apply_env();
    if http.endpoint.is_empty() {
        eprintln!("set RE_REST_ENDPOINT (and RE_REST_MODEL, RE_REST_API_KEY as needed)");
        return Ok(());
    }
    let backend = HttpBackend::new(http)?;
    let factory = EnvFactory::new(1.0).with_corpus(assets::corpus());
    let config = GenerationConfig { temperature: 0.0, ..Default::default() };
    let prompts = PromptStore::bundled();
    let ctx = EpisodeContext { config: &config, prompts: &prompts };
    for task in assets::tasks(Domain::Wikiqa).iter().take(3) {
        let mut env = factory.make(task)?;
        let s = run_episode(task, env.as_mut(), &backend, &ctx, Mode::Agent, 0);
        println!("{} passed={} answer={:?}", task.id, s.passed(), s.trajectory.final_answer);
    }
    Ok(())
}
