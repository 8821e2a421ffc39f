//! NormalFloat block-wise quantization with double-quantized constants,
//! and a quantized linear layer carrying a low-rank adapter.
//!
//! Values are quantized in blocks of `block_size` elements. Each block is
//! scaled by its absolute maximum (c2) and every element is replaced by the
//! index of the nearest NormalFloat level. The block constants are then
//! quantized themselves: per group of `const_group_size` blocks a single
//! f32 scale (c1) maps them to `const_bits`-bit integers (c2_q).
//! Reconstruction runs the two stages in reverse, constants first.

mod blockwise;
mod codebook;
mod container;
mod lora;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use blockwise::{
    block_absmax, block_error_bounds, dequantize, dequantize_codes, dequantize_constants,
    dequantize_staged, quant_error_stats, quantize_blockwise, quantize_constants, BlockSpec,
    ErrorStats, QuantizedTensor, DEFAULT_BLOCK_SIZE, DEFAULT_CONST_BITS, DEFAULT_CONST_GROUP_SIZE,
};
pub use codebook::{Codebook, MAX_BITS, MIN_BITS};
pub use container::{header_len, serialized_len, MAGIC, VERSION};
pub use lora::{
    finite_difference_check, random_layer, relative_error, AdapterGrads, GradCheck, LoraAdapter,
    QuantLinear, DEFAULT_RANK,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantError {
    #[error("codebook bits must be in {MIN_BITS}..={MAX_BITS}, got {0}")]
    BitsOutOfRange(u8),
    #[error("invalid block spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("code {code} at index {index} is out of range for a {bits}-bit codebook")]
    CodeOutOfRange { index: usize, code: u8, bits: u8 },
    #[error("tensor was quantized with {tensor} bits but the codebook has {codebook}")]
    CodebookMismatch { tensor: u8, codebook: u8 },
    #[error("corrupt quantized tensor: {0}")]
    Corrupt(String),
}

/// `n` standard-normal samples from a ChaCha8 stream seeded with `seed`.
pub fn gaussian_values(seed: u64, n: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}
