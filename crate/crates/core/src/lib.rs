//! Critique-driven alignment for retrieval-augmented question answering.
//!
//! The crate covers the whole control-flow layer of the pipeline:
//!
//! * [`retrieval`] supplies top-K documents (precomputed run files or BM25).
//! * [`corpus_builder`] labels instances with relevance/helpfulness/
//!   completeness and samples the four-tier granularity hierarchy.
//! * [`critique_synthesis`] contrasts weak and strong rationales to produce
//!   critique fine-tuning and preference datasets.
//! * [`cda`] runs the critique-and-refine loop with a fixed budget or with
//!   `[Good]`/`[Bad]` dynamic stopping.
//! * [`evaluation`] scores generations and writes report bundles.
//! * [`config`] and [`commands`] wire the stages to TOML run files and the
//!   `alignrag` binary; [`io`] holds the shared JSONL helpers.
//! * [`synthetic`] builds deterministic toy pools and scripted scenarios.
//!
//! Model calls go through [`backends::Backend`], so every stage runs offline
//! against [`backends::ScriptedBackend`].

pub mod backends;
pub mod cda;
pub mod commands;
pub mod config;
pub mod corpus_builder;
pub mod critique_synthesis;
pub mod domain;
pub mod evaluation;
pub mod exec;
pub mod io;
pub mod prompts;
pub mod retrieval;
pub mod synthetic;
