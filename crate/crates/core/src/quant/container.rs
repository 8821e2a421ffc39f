//! Binary container for a [`QuantizedTensor`].
//!
//! Layout, all integers little-endian:
//!
//! | bytes            | field                                   |
//! |------------------|-----------------------------------------|
//! | 4                | magic `NFQT`                            |
//! | 2                | format version (1)                      |
//! | 1                | codebook bits k                         |
//! | 1                | constant bits                           |
//! | 4                | block size                              |
//! | 4                | constant group size                     |
//! | 4                | number of dimensions                    |
//! | 8 per dimension  | shape                                   |
//! | ⌈N·k/8⌉          | codes, LSB-first bit stream             |
//! | ⌈blocks·cb/8⌉    | quantized block constants, same packing |
//! | 4 per group      | group scales as f32                     |
//!
//! With k = 4 two codes share a byte, low nibble first; with k = 8 each
//! code is one byte.

use super::{BlockSpec, QuantError, QuantizedTensor};

pub const MAGIC: &[u8; 4] = b"NFQT";
pub const VERSION: u16 = 1;
const FIXED_HEADER: usize = 20;

pub fn header_len(ndim: usize) -> usize {
    FIXED_HEADER + 8 * ndim
}

fn packed_len(count: usize, bits: u8) -> usize {
    (count * bits as usize).div_ceil(8)
}

/// Exact serialized size for a tensor with this layout.
pub fn serialized_len(shape: &[usize], bits: u8, spec: &BlockSpec) -> usize {
    let n: usize = shape.iter().product();
    let blocks = n.div_ceil(spec.block_size());
    let groups = blocks.div_ceil(spec.const_group_size());
    header_len(shape.len())
        + packed_len(n, bits)
        + packed_len(blocks, spec.const_bits())
        + 4 * groups
}

pub(crate) fn pack_bits(values: &[u8], bits: u8) -> Vec<u8> {
    let mut out = vec![0u8; packed_len(values.len(), bits)];
    let mut pos = 0usize;
    for &v in values {
        let v = v as u16 & ((1u16 << bits) - 1);
        let (byte, shift) = (pos / 8, pos % 8);
        let wide = v << shift;
        out[byte] |= wide as u8;
        if shift + bits as usize > 8 {
            out[byte + 1] |= (wide >> 8) as u8;
        }
        pos += bits as usize;
    }
    out
}

pub(crate) fn unpack_bits(bytes: &[u8], bits: u8, count: usize) -> Vec<u8> {
    let mask = (1u16 << bits) - 1;
    (0..count)
        .map(|i| {
            let pos = i * bits as usize;
            let (byte, shift) = (pos / 8, pos % 8);
            let lo = bytes[byte] as u16;
            let hi = bytes.get(byte + 1).copied().unwrap_or(0) as u16;
            (((hi << 8 | lo) >> shift) & mask) as u8
        })
        .collect()
}

impl QuantizedTensor {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(serialized_len(&self.shape, self.bits, &self.spec));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.bits);
        out.push(self.spec.const_bits());
        out.extend_from_slice(&(self.spec.block_size() as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.const_group_size() as u32).to_le_bytes());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend(pack_bits(&self.codes, self.bits));
        out.extend(pack_bits(&self.c2_q, self.spec.const_bits()));
        for c in &self.c1 {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, QuantError> {
        let corrupt = |m: &str| QuantError::Corrupt(m.to_string());
        if bytes.len() < FIXED_HEADER {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(QuantError::Corrupt(format!(
                "unsupported version {version}"
            )));
        }
        let bits = bytes[6];
        if !(super::MIN_BITS..=super::MAX_BITS).contains(&bits) {
            return Err(QuantError::BitsOutOfRange(bits));
        }
        let spec = BlockSpec::new(u32_at(8), u32_at(12), bytes[7])?;
        let ndim = u32_at(16);
        let hlen = header_len(ndim);
        if bytes.len() < hlen {
            return Err(corrupt("truncated shape"));
        }
        let shape: Vec<usize> = (0..ndim)
            .map(|i| {
                let o = FIXED_HEADER + 8 * i;
                u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize
            })
            .collect();
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| corrupt("shape overflows"))?;
        if bytes.len() != serialized_len(&shape, bits, &spec) {
            return Err(QuantError::Corrupt(format!(
                "{} bytes, layout requires {}",
                bytes.len(),
                serialized_len(&shape, bits, &spec)
            )));
        }
        let blocks = n.div_ceil(spec.block_size());
        let groups = blocks.div_ceil(spec.const_group_size());
        let mut o = hlen;
        let codes = unpack_bits(&bytes[o..o + packed_len(n, bits)], bits, n);
        o += packed_len(n, bits);
        let c2_q = unpack_bits(
            &bytes[o..o + packed_len(blocks, spec.const_bits())],
            spec.const_bits(),
            blocks,
        );
        o += packed_len(blocks, spec.const_bits());
        let c1 = (0..groups)
            .map(|g| f32::from_le_bytes(bytes[o + 4 * g..o + 4 * g + 4].try_into().unwrap()))
            .collect();
        QuantizedTensor::from_parts(shape, bits, spec, codes, c2_q, c1)
    }
}
