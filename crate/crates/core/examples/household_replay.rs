//! Drives the bundled text household world by hand.
//!
//! cargo run --example household_replay

use rerest::envs::{WorldSpec, WorldState};
use rerest::{assets, Domain};

fn main() {
    let task = assets::tasks(Domain::Household).remove(0);
    let spec: WorldSpec = serde_json::from_value(task.env_config).expect("world spec");
    let mut world = WorldState::new(&spec);
    println!("{}", spec.task_description());
    for cmd in [
        "go to cabinet 1",
        "go to cabinet 2",
        "open cabinet 2",
        "take spraybottle 2 from cabinet 2",
        "go to toilet 1",
        "put spraybottle 2 in/on toilet 1",
    ] {
        println!("> {cmd}\n{}", world.apply(cmd));
    }
    println!("goal satisfied: {}", world.goal_satisfied());
}
