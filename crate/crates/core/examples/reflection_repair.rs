//! One reflection on a failed program: the reflector reads the unit-test
//! results and proposes a fix, which is then verified. Needs python3.
//!
//! cargo run --example reflection_repair

use rerest::backend::ScriptedPolicy;
use rerest::envs::{EnvFactory, Sandbox};
use rerest::pipeline::{generate_initial, RunContext};
use rerest::prompts::PromptStore;
use rerest::reflect::reflect_once;
use rerest::{assets, Domain, GenerationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = assets::tasks(Domain::Codeexec).remove(0);
    // The agent always fails; the reflector always repairs.
    let backend = ScriptedPolicy::new(assets::all_banks(), 0.0, 1.0, 1);
    let factory = EnvFactory::new(1.0).with_sandbox(Sandbox::new("python3", Default::default())?);
    let config = GenerationConfig { k: 1, ..Default::default() };
    let prompts = PromptStore::bundled();
    let ctx = RunContext { backend: &backend, factory: &factory, config: &config, prompts: &prompts };

    let failed = generate_initial(std::slice::from_ref(&task), &ctx)?.all_samples.remove(0);
    println!("failed attempt:\n{}\n\nfeedback:\n{}\n", failed.trajectory.render(Domain::Codeexec.render_style()), failed.feedback.verbal);
    match reflect_once(&failed, &task, &factory, &backend, &ctx.episode())? {
        Some(fixed) => {
            println!("reflection: {}\n", fixed.reflection.unwrap_or_default());
            println!("corrected attempt:\n{}", fixed.trajectory.render(Domain::Codeexec.render_style()));
        }
        None => println!("the reflection did not fix it"),
    }
    Ok(())
}
