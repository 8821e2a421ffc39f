//! Data factory and quantized-adapter numerics for building a domain-adapted
//! accounting language model.
//!
//! The crate has two halves:
//!
//! - the dataset pipeline: [`corpus`] ingestion and cleaning, [`chunker`]
//!   line windows, [`selfinstruct`] prompt assembly and response parsing,
//!   [`llmclient`] for talking to a completion endpoint, [`mixer`] for
//!   seeded ratio mixing and validation splits, and [`stats`] for dataset
//!   statistics;
//! - [`quant`]: NormalFloat codebooks, block-wise quantization with double
//!   quantization of the block constants, and a quantized linear layer with
//!   a low-rank adapter (forward pass plus adapter-only gradients).
//!
//! [`config`] emits and validates the training hyperparameter bundle that is
//! handed to an external trainer.

pub mod chunker;
pub mod config;
pub mod corpus;
pub mod jsonl;
pub mod llmclient;
pub mod mixer;
pub mod quant;
pub mod rng;
pub mod selfinstruct;
pub mod stats;
pub mod text;

pub use chunker::{chunk_document, Chunk, WindowSpec};
pub use corpus::{CpaSubject, RawDocument, SourceCategory};
pub use selfinstruct::InstructionRecord;
