//! World models for visual and conceptual perspective-taking in
//! partially observable two-agent domains.
//!
//! The crate is organized around a small differentiable-computation core
//! ([`numerics`]), probability primitives ([`distributions`]), three
//! simulated domains with exact Bayes-filter oracles ([`envs`]), the
//! world-model variants and their training loops ([`worldmodel`]), the
//! perspective-taking pipeline ([`perspective`]) and the KL-based
//! evaluation machinery ([`eval`]).

pub mod distributions;
pub mod envs;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod perspective;
pub mod worldmodel;

pub use error::{Error, Result};
