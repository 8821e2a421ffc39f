use statrs::distribution::{ContinuousCDF, Normal};

use super::QuantError;

pub const MIN_BITS: u8 = 2;
pub const MAX_BITS: u8 = 8;

/// A k-bit NormalFloat codebook: 2^k sorted levels in [-1, 1] with exact
/// endpoints and an exact zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    bits: u8,
    values: Vec<f32>,
}

fn linspace_head(start: f64, end: f64, n: usize) -> impl Iterator<Item = f64> {
    // `n` points of an `n + 1` point linspace, dropping the last.
    let step = (end - start) / n as f64;
    (0..n).map(move |i| start + step * i as f64)
}

impl Codebook {
    /// Build the NF-k codebook. The positive half holds 2^(k-1) quantile
    /// levels and the negative half 2^(k-1) - 1, so together with zero
    /// there are exactly 2^k levels. Quantiles are taken at evenly spaced
    /// probabilities from `offset` down toward 0.5, where `offset` sits
    /// midway between the outermost quantile positions of the two halves.
    pub fn normal_float(bits: u8) -> Result<Self, QuantError> {
        if !(MIN_BITS..=MAX_BITS).contains(&bits) {
            return Err(QuantError::BitsOutOfRange(bits));
        }
        let total = 1usize << bits;
        let n_pos = total / 2;
        let n_neg = n_pos - 1;
        let offset =
            0.5 * ((1.0 - 1.0 / (2.0 * (total - 1) as f64)) + (1.0 - 1.0 / (2.0 * total as f64)));
        let std = Normal::standard();
        let norm_ppf = |p: f64| std.inverse_cdf(p);
        let scale = norm_ppf(offset);

        let mut levels: Vec<f64> = Vec::with_capacity(total);
        levels.extend(linspace_head(offset, 0.5, n_pos).map(|p| norm_ppf(p) / scale));
        levels.extend(linspace_head(offset, 0.5, n_neg).map(|p| -norm_ppf(p) / scale));
        levels.push(0.0);
        levels.sort_by(f64::total_cmp);

        let mut values: Vec<f32> = levels.into_iter().map(|v| v as f32).collect();
        values[0] = -1.0;
        values[total - 1] = 1.0;
        Ok(Self { bits, values })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, code: u8) -> Option<f32> {
        self.values.get(code as usize).copied()
    }

    /// Index of the exact zero level.
    pub fn zero_code(&self) -> u8 {
        self.values
            .iter()
            .position(|&v| v == 0.0)
            .expect("codebook has a zero level") as u8
    }

    /// Index of the level nearest to `x`; ties go to the lower index.
    pub fn nearest(&self, x: f32) -> u8 {
        let v = &self.values;
        let hi = v.partition_point(|&c| c < x);
        if hi == 0 {
            return 0;
        }
        if hi == v.len() {
            return (v.len() - 1) as u8;
        }
        let lo = hi - 1;
        if (x - v[lo]).abs() <= (v[hi] - x).abs() {
            lo as u8
        } else {
            hi as u8
        }
    }

    /// Half of the widest gap between adjacent levels: the worst-case
    /// rounding error for inputs in [-1, 1].
    pub fn half_max_gap(&self) -> f32 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f32::max)
            / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_for_every_width() {
        for k in MIN_BITS..=MAX_BITS {
            let cb = Codebook::normal_float(k).unwrap();
            let v = cb.values();
            assert_eq!(v.len(), 1 << k);
            assert!(v.windows(2).all(|w| w[0] < w[1]), "k={k}");
            assert_eq!((v[0], v[v.len() - 1]), (-1.0, 1.0));
            assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), 1);
        }
        assert_eq!(Codebook::normal_float(8).unwrap().len(), 256);
    }

    #[test]
    fn two_bit_levels_from_independent_quantiles() {
        // offset = (1 - 1/6 + 1 - 1/8) / 2; the inner positive level is
        // ppf((offset + 0.5) / 2) / ppf(offset), evaluated with scipy.
        let cb = Codebook::normal_float(2).unwrap();
        let want = [-1.0, 0.0, 0.435_818_164_583_115_7_f64 as f32, 1.0];
        assert_eq!(cb.values(), want);
    }

    #[test]
    fn four_bit_matches_published_table() {
        // The widely used NF4 level table, rounded to 7 decimals.
        let nf4: [f64; 16] = [
            -1.0, -0.6961928, -0.5250731, -0.3949175, -0.2844414, -0.1847734, -0.0910500, 0.0,
            0.0795803, 0.1609302, 0.2461123, 0.3379152, 0.4407098, 0.5626170, 0.7229568, 1.0,
        ];
        let cb = Codebook::normal_float(4).unwrap();
        for (a, b) in cb.values().iter().zip(nf4) {
            assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_width_out_of_range() {
        assert!(matches!(
            Codebook::normal_float(1),
            Err(QuantError::BitsOutOfRange(1))
        ));
        assert!(Codebook::normal_float(9).is_err());
    }

    #[test]
    fn nearest_ties_go_low() {
        let cb = Codebook::normal_float(2).unwrap();
        let v = cb.values();
        let mid = (v[1] + v[2]) / 2.0;
        let code = cb.nearest(mid);
        let d_lo = (mid - v[1]).abs();
        let d_hi = (v[2] - mid).abs();
        assert_eq!(code, if d_lo <= d_hi { 1 } else { 2 });
        assert_eq!(cb.nearest(-3.0), 0);
        assert_eq!(cb.nearest(3.0), 3);
        assert_eq!(cb.nearest(1.0), 3);
        assert_eq!(cb.nearest(0.0), cb.zero_code());
        assert_eq!(cb.nearest(-0.0), cb.zero_code());
    }
}
