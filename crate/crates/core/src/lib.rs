//! Personalized jargon familiarity prediction.
//!
//! Corpus statistics at domain, subdomain and individual granularity feed an
//! L1-regularized logistic regression per reader; prompt-based baselines run
//! against any chat-completions endpoint. The `eval` module reproduces the
//! individual-versus-mixed protocol, coefficient-frequency analysis and
//! training-size sweeps.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod http;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
