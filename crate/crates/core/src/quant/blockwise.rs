use rayon::prelude::*;

use super::{Codebook, QuantError};

pub const DEFAULT_BLOCK_SIZE: usize = 64;
pub const DEFAULT_CONST_GROUP_SIZE: usize = 256;
pub const DEFAULT_CONST_BITS: u8 = 8;

/// Block layout and constant quantization width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    block_size: usize,
    const_group_size: usize,
    const_bits: u8,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            const_group_size: DEFAULT_CONST_GROUP_SIZE,
            const_bits: DEFAULT_CONST_BITS,
        }
    }
}

impl BlockSpec {
    pub fn new(
        block_size: usize,
        const_group_size: usize,
        const_bits: u8,
    ) -> Result<Self, QuantError> {
        if block_size == 0 || const_group_size == 0 {
            return Err(QuantError::InvalidSpec(
                "block and group sizes must be positive".into(),
            ));
        }
        if !(2..=8).contains(&const_bits) {
            return Err(QuantError::InvalidSpec(format!(
                "const_bits must be in 2..=8, got {const_bits}"
            )));
        }
        Ok(Self {
            block_size,
            const_group_size,
            const_bits,
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn const_group_size(&self) -> usize {
        self.const_group_size
    }

    pub fn const_bits(&self) -> u8 {
        self.const_bits
    }

    /// Largest stored constant level, 2^(const_bits - 1) - 1.
    pub fn const_qmax(&self) -> u8 {
        (1u8 << (self.const_bits - 1)) - 1
    }
}

/// Codes plus double-quantized block constants. Codes are held one per
/// byte in memory and bit-packed only in the container format.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub(crate) shape: Vec<usize>,
    pub(crate) bits: u8,
    pub(crate) spec: BlockSpec,
    pub(crate) codes: Vec<u8>,
    pub(crate) c2_q: Vec<u8>,
    pub(crate) c1: Vec<f32>,
}

fn div_ceil(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

impl QuantizedTensor {
    /// Assemble a tensor from raw parts, checking only the count
    /// invariants. Code values are checked at dequantization.
    pub fn from_parts(
        shape: Vec<usize>,
        bits: u8,
        spec: BlockSpec,
        codes: Vec<u8>,
        c2_q: Vec<u8>,
        c1: Vec<f32>,
    ) -> Result<Self, QuantError> {
        let n: usize = shape.iter().product();
        let blocks = div_ceil(n, spec.block_size);
        let groups = div_ceil(blocks, spec.const_group_size);
        if codes.len() != n {
            return Err(QuantError::Corrupt(format!(
                "{} codes for {n} elements",
                codes.len()
            )));
        }
        if c2_q.len() != blocks || c1.len() != groups {
            return Err(QuantError::Corrupt(format!(
                "{} block constants and {} scales, expected {blocks} and {groups}",
                c2_q.len(),
                c1.len()
            )));
        }
        Ok(Self {
            shape,
            bits,
            spec,
            codes,
            c2_q,
            c1,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn spec(&self) -> &BlockSpec {
        &self.spec
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn c2_q(&self) -> &[u8] {
        &self.c2_q
    }

    pub fn c1(&self) -> &[f32] {
        &self.c1
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.c2_q.len()
    }

    pub fn group_count(&self) -> usize {
        self.c1.len()
    }
}

/// Per-block absmax constants (c2) before constant quantization.
pub fn block_absmax(values: &[f32], block_size: usize) -> Vec<f32> {
    values
        .chunks(block_size)
        .map(|b| b.iter().fold(0.0f32, |m, v| m.max(v.abs())))
        .collect()
}

/// Quantize block constants: per group, c1 = max c2 / qmax and
/// c2_q = round(c2 / c1).
pub fn quantize_constants(c2: &[f32], spec: &BlockSpec) -> (Vec<u8>, Vec<f32>) {
    let qmax = spec.const_qmax();
    let mut c2_q = Vec::with_capacity(c2.len());
    let mut c1 = Vec::with_capacity(div_ceil(c2.len(), spec.const_group_size));
    for group in c2.chunks(spec.const_group_size) {
        let scale = group.iter().fold(0.0f32, |m, &v| m.max(v)) / qmax as f32;
        c1.push(scale);
        for &c in group {
            let q = if scale > 0.0 {
                (c / scale).round().clamp(0.0, qmax as f32) as u8
            } else {
                0
            };
            c2_q.push(q);
        }
    }
    (c2_q, c1)
}

/// Block-wise NormalFloat quantization with double-quantized constants.
/// `shape` must multiply out to `values.len()`.
pub fn quantize_blockwise(
    values: &[f32],
    shape: &[usize],
    spec: &BlockSpec,
    cb: &Codebook,
) -> Result<QuantizedTensor, QuantError> {
    let n: usize = shape.iter().product();
    if n != values.len() {
        return Err(QuantError::ShapeMismatch(format!(
            "shape {shape:?} has {n} elements, got {}",
            values.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite { index: i });
    }
    let c2 = block_absmax(values, spec.block_size);
    let zero = cb.zero_code();
    let codes: Vec<u8> = values
        .par_chunks(spec.block_size)
        .zip(c2.par_iter())
        .flat_map_iter(|(block, &c)| {
            block
                .iter()
                .map(move |&w| if c == 0.0 { zero } else { cb.nearest(w / c) })
        })
        .collect();
    let (c2_q, c1) = quantize_constants(&c2, spec);
    QuantizedTensor::from_parts(shape.to_vec(), cb.bits(), *spec, codes, c2_q, c1)
}

fn check_codebook(qt: &QuantizedTensor, cb: &Codebook) -> Result<(), QuantError> {
    if cb.bits() != qt.bits {
        return Err(QuantError::CodebookMismatch {
            tensor: qt.bits,
            codebook: cb.bits(),
        });
    }
    Ok(())
}

/// Inner dequantization: block constants c2' = c1 · c2_q.
pub fn dequantize_constants(qt: &QuantizedTensor) -> Vec<f32> {
    let g = qt.spec.const_group_size;
    qt.c2_q
        .iter()
        .enumerate()
        .map(|(b, &q)| qt.c1[b / g] * q as f32)
        .collect()
}

/// Outer dequantization: element = cb[code] · c2' for its block.
pub fn dequantize_codes(
    codes: &[u8],
    c2: &[f32],
    block_size: usize,
    cb: &Codebook,
) -> Result<Vec<f32>, QuantError> {
    let v = cb.values();
    codes
        .chunks(block_size)
        .zip(c2)
        .enumerate()
        .flat_map(|(b, (block, &c))| {
            block.iter().enumerate().map(move |(i, &code)| {
                v.get(code as usize)
                    .map(|&level| level * c)
                    .ok_or(QuantError::CodeOutOfRange {
                        index: b * block_size + i,
                        code,
                        bits: cb.bits(),
                    })
            })
        })
        .collect()
}

/// Staged double dequantization: constants first, then codes.
pub fn dequantize_staged(qt: &QuantizedTensor, cb: &Codebook) -> Result<Vec<f32>, QuantError> {
    check_codebook(qt, cb)?;
    let c2 = dequantize_constants(qt);
    dequantize_codes(&qt.codes, &c2, qt.spec.block_size, cb)
}

/// Fused double dequantization in a single pass over the blocks. Produces
/// the same bits as [`dequantize_staged`].
pub fn dequantize(qt: &QuantizedTensor, cb: &Codebook) -> Result<Vec<f32>, QuantError> {
    check_codebook(qt, cb)?;
    let v = cb.values();
    let bs = qt.spec.block_size;
    let g = qt.spec.const_group_size;
    let mut out = vec![0.0f32; qt.codes.len()];
    out.par_chunks_mut(bs)
        .zip(qt.codes.par_chunks(bs))
        .enumerate()
        .try_for_each(|(b, (dst, src))| {
            let c = qt.c1[b / g] * qt.c2_q[b] as f32;
            for (i, (d, &code)) in dst.iter_mut().zip(src).enumerate() {
                let level = v.get(code as usize).ok_or(QuantError::CodeOutOfRange {
                    index: b * bs + i,
                    code,
                    bits: cb.bits(),
                })?;
                *d = level * c;
            }
            Ok(())
        })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub rms_error: f64,
    pub max_abs_error: f64,
}

/// Reconstruction error of `qt` against the original values.
pub fn quant_error_stats(
    values: &[f32],
    qt: &QuantizedTensor,
    cb: &Codebook,
) -> Result<ErrorStats, QuantError> {
    if values.len() != qt.len() {
        return Err(QuantError::ShapeMismatch(format!(
            "{} values for a tensor of {}",
            values.len(),
            qt.len()
        )));
    }
    let deq = dequantize(qt, cb)?;
    let (mut sq, mut max) = (0.0f64, 0.0f64);
    for (&w, &d) in values.iter().zip(&deq) {
        let e = (w as f64 - d as f64).abs();
        sq += e * e;
        max = max.max(e);
    }
    let rms = if values.is_empty() {
        0.0
    } else {
        (sq / values.len() as f64).sqrt()
    };
    Ok(ErrorStats {
        rms_error: rms,
        max_abs_error: max,
    })
}

/// Worst-case absolute error for each block: the codebook rounding bound
/// at the block's true absmax, plus the error introduced by quantizing that
/// absmax, plus a few float ulps.
pub fn block_error_bounds(values: &[f32], qt: &QuantizedTensor, cb: &Codebook) -> Vec<f64> {
    let c2 = block_absmax(values, qt.spec.block_size);
    let c2_deq = dequantize_constants(qt);
    let half_gap = cb.half_max_gap() as f64;
    c2.iter()
        .zip(&c2_deq)
        .map(|(&c, &cd)| {
            let (c, cd) = (c as f64, cd as f64);
            c * half_gap + (c - cd).abs() + 4.0 * f32::EPSILON as f64 * c.max(cd)
        })
        .collect()
}
