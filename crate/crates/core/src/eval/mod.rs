//! Experiment orchestration: batch attack runs, transferability matrices,
//! defense sweeps, reporting and persistence behind the `semadv` CLI.

mod record;

pub use record::{AttackResult, AttackTrace};
