//! Runs a buggy candidate against unit tests in the sandbox and prints the
//! feedback a reflector would see. Needs python3 on PATH.
//!
//! cargo run --example code_feedback

use rerest::envs::{code_feedback, Sandbox, SandboxLimits};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sandbox = Sandbox::new("python3", SandboxLimits::default())?;
    let program = "def add(a: int, b: int):\n    return a - b\n";
    let tests = vec!["assert add(1, 2) == 3".to_string(), "assert add(0, 0) == 0".to_string()];
    let report = sandbox.run_candidate(program, &tests)?;
    for t in &report.per_test {
        println!("{:<28} passed={:<5} {} ({} ms)", t.assert_text, t.passed, t.observed, t.duration_ms);
    }
    let fb = code_feedback(&report, 1.0);
    println!("\nscore {:.2}\n{}", fb.score, fb.verbal);
    Ok(())
}
