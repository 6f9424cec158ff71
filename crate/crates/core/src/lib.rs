//! Evolutionary search for training-free few-shot adaptation algorithms over
//! cached vision-language features.
//!
//! The crate is organized by subsystem:
//!
//! - [`store`]: feature containers, few-shot sampling, synthetic datasets
//! - [`adapt`]: baseline algorithms, the fitness grid and fitness function
//! - [`rewrite`]: lookup-table conversion of candidate code to half precision
//! - [`llm`]: prompt construction, response parsing, chat gateways
//! - [`fabric`]: the evaluation service protocol, workers, dispatch and healing
//! - [`evolve`]: population search, strategies and telemetry
//! - [`downstream`]: hyper-parameter optimization and accuracy tables

pub mod adapt;
pub mod downstream;
pub mod evolve;
pub mod fabric;
pub mod llm;
pub mod rewrite;
pub mod store;
