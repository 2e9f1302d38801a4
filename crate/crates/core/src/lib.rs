//! Direct-cause identification for dialogue responses.
//!
//! A response `r_t` in a conversation is assumed to have at most two direct
//! causes among its history `u_0..u_{t-1}`: the preceding utterance `u_{t-1}`
//! and at most one earlier utterance `u_j`. The earlier cause is found with a
//! classifier-based conditional-independence test over `(u_j, u_{t-1}, r_t)`
//! triples, trained with constrained incremental self-training.
//!
//! Module map:
//!
//! - [`corpus`]: cause-annotated dialogue corpora (JSONL), statistics, splits.
//! - [`metrics`]: agreement, BLEU family, distinct-n, Best-Worst Scaling, Welch t-test.
//! - [`ci`]: the conditional-independence classifier and its encoder contract.
//! - [`constrain`]: constrained incremental self-training and its ablations.
//! - [`cause_id`]: second-cause identification, heuristic baselines, evaluation.
//! - [`pipeline`]: cause-filtered training data and CI-scored response selection.
//! - [`perturbation`]: history perturbation study (perplexity and output drift).
//! - [`synthetic`]: dialogue worlds with known latent causal graphs.
//! - [`adapter`]: newline-delimited JSON adapters for external encoders and generators.
//! - [`run`]: run manifests and output directories.
//! - [`cli`]: the `causal-dialog` command-line interface.

pub mod adapter;
pub mod cause_id;
pub mod ci;
pub mod cli;
pub mod constrain;
pub mod corpus;
pub mod metrics;
pub mod perturbation;
pub mod pipeline;
pub mod run;
pub mod seed;
pub mod synthetic;
pub mod text;

pub use corpus::{Corpus, Dialogue, HistoryResponsePair, Speaker, Utterance};
