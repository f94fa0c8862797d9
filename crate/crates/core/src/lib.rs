//! Reflection-reinforced self-training for language agents.
//!
//! The crate samples ReAct-style agent trajectories in task environments,
//! turns environment feedback into reflection prompts that repair failed
//! trajectories, and assembles the resulting self-training, reflector-training
//! and preference corpora. It also implements direct decoding and
//! reflector-augmented self-consistency at inference time.
//!
//! Layout:
//! - [`types`]: tasks, trajectories, feedback and samples, plus rendering
//! - [`backend`]: model invocation (HTTP chat completions, scripted oracle)
//! - [`prompts`]: agent and reflector prompt templates
//! - [`react`]: turn parsing and the episode loop
//! - [`envs`]: wiki search, household text world, and code sandbox
//! - [`reflect`]: single-iteration reflection and reflector training records
//! - [`pipeline`]: initial generation, reflection phase, bundle assembly
//! - [`datasets`]: SFT / reflector / DPO records, JSONL, statistics
//! - [`infer`]: direct decoding and self-consistency voting
//! - [`cli`]: the `rerest` command line
//!
//! Runnable walkthroughs live in `examples/`; see the README.

pub mod assets;
pub mod backend;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod envs;
pub mod hash;
pub mod infer;
pub mod pipeline;
pub mod prompts;
pub mod react;
pub mod reflect;
pub mod runlog;
pub mod sync;
pub mod tasks;
pub mod types;

pub use types::{
    ActionKind, Domain, Feedback, FeedbackDetails, GenerationConfig, Gold, Origin, ParsedAction, RenderStyle, Sample, Step, StepKind, TaskInstance,
    Trajectory,
};
