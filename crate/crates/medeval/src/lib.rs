//! Benchmark evaluation and model-ops toolkit for medical LLMs served over
//! OpenAI-compatible endpoints.
//!
//! The pieces, bottom to top:
//!
//! - [`corpus`] — benchmark loaders (MedQA, MedMCQA, PubMedQA, MMLU medical
//!   subsets, translation, EHR tasks) into one item schema, with manifest
//!   validation and seeded exemplar selection.
//! - [`prompt`] — templates (plain, few-shot, seven chain-of-thought
//!   variants, rubrics), rendering, and ensembling variants with
//!   choice-order permutation tracked through a label map.
//! - [`client`] — generation and logprob scoring against any
//!   OpenAI-compatible endpoint, with retries, bounded parallelism,
//!   order-preserving batches, and a replay log for offline reruns.
//! - [`scoring`] — answer extraction, self-consistency voting,
//!   log-likelihood argmax, accuracy with standard error.
//! - [`bleu`] — corpus BLEU with clipped n-gram precisions and brevity
//!   penalty.
//! - [`judge`] — LLM-as-judge verdicts over the 18 EHR task categories,
//!   rank distributions, histograms.
//! - [`filter`] — 0-10 quality scoring and threshold filtering of
//!   instruction pairs.
//! - [`merge`] — checkpoint container I/O and SLERP weight merging.
//! - [`runner`] — config-driven commands tying it all together.
//!
//! See the crate examples for one runnable walkthrough per capability.

pub mod bleu;
pub mod client;
pub mod corpus;
pub mod error;
pub mod filter;
pub mod judge;
pub mod merge;
pub mod numfmt;
pub mod prompt;
pub mod runner;
pub mod scoring;

pub use error::{Error, Result};
