//! Iterative design for robotic assembly.
//!
//! A target name and a block inventory go in; a loop of plan, execute,
//! visually judge and re-plan comes out, followed by knockout selection of
//! the best design and the evaluation harnesses used to score runs.

pub mod evalkit;
pub mod gateway;
pub mod geometry;
pub mod matching;
pub mod model;
pub mod orchestrator;
pub mod prompts;
pub mod render;
pub mod sim;
pub mod validate;
