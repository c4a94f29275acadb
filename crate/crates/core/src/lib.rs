//! Semantic adversarial attacks on image classifiers and captioners.
//!
//! Two attack families are implemented. The colorization attack ([`cadv`])
//! drives a hint-guided colorization network to produce natural-looking but
//! adversarial colors by optimizing the color hints and their mask. The
//! texture attack ([`tadv`]) optimizes the victim image directly under a
//! cross-layer Gram-matrix texture loss blended with a weighted adversarial
//! cross-entropy term. Both produce large-norm, photorealistic perturbations
//! rather than small Lp-bounded noise.
//!
//! Supporting modules: [`imaging`] (CIELAB conversion, smoothing, Lp
//! metrics, PNG I/O), [`grad`] (a small reverse-mode autodiff tape all
//! attacks backpropagate through), [`nn`] + [`models`] (network definitions,
//! the model registry and the built-in toy zoo), [`defenses`]
//! (input-transformation defenses and defended evaluation), [`captioning`]
//! (targeted caption attacks) and [`eval`] (batch experiment orchestration
//! behind the `semadv` CLI).

pub mod cadv;
pub mod captioning;
pub mod defenses;
pub mod error;
pub mod eval;
pub mod grad;
pub mod imaging;
pub mod models;
pub mod nn;
pub mod tadv;

pub use error::{Error, Result};
