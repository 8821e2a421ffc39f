//! Seeded ratio mixing of two pools and train/validation splitting.
//!
//! All randomness comes from [`SplitMix64`], so a seed reproduces the same
//! selection and order on every platform.

use std::fmt;
use std::str::FromStr;

use crate::corpus::RawDocument;
use crate::rng::SplitMix64;
use crate::selfinstruct::InstructionRecord;

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixError {
    #[error("invalid ratio {0:?}: expected two positive integers like 7:3")]
    BadRatio(String),
    #[error("pool {pool} is empty; the only achievable ratio is {achievable}")]
    EmptyPool { pool: char, achievable: String },
    #[error("validation fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("need at least 2 records to split, got {0}")]
    TooFewRecords(usize),
}

/// What the ratio counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixUnit {
    #[default]
    DocumentCount,
    /// Ratio of summed [`Weighted::weight`] (bytes) rather than item counts.
    ByteWeighted,
}

impl FromStr for MixUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "count" | "document_count" | "documents" => Ok(MixUnit::DocumentCount),
            "bytes" | "byte_weighted" => Ok(MixUnit::ByteWeighted),
            _ => Err(format!("unknown mix unit {s:?}; expected count or bytes")),
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A gcd-reduced `a:b` ratio with its unit and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixSpec {
    ratio_a: u64,
    ratio_b: u64,
    pub unit: MixUnit,
    pub seed: u64,
}

impl MixSpec {
    pub fn new(ratio_a: u64, ratio_b: u64, unit: MixUnit, seed: u64) -> Result<Self, MixError> {
        if ratio_a == 0 || ratio_b == 0 {
            return Err(MixError::BadRatio(format!("{ratio_a}:{ratio_b}")));
        }
        let g = gcd(ratio_a, ratio_b);
        Ok(Self {
            ratio_a: ratio_a / g,
            ratio_b: ratio_b / g,
            unit,
            seed,
        })
    }

    /// Parse `"7:3"` or `"80:20"`.
    pub fn parse(ratio: &str, unit: MixUnit, seed: u64) -> Result<Self, MixError> {
        let bad = || MixError::BadRatio(ratio.to_string());
        let (a, b) = ratio.split_once(':').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        Self::new(a, b, unit, seed)
    }

    pub fn ratio(&self) -> (u64, u64) {
        (self.ratio_a, self.ratio_b)
    }
}

impl fmt::Display for MixSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ratio_a, self.ratio_b)
    }
}

/// Size of an item for byte-weighted mixing.
pub trait Weighted {
    fn weight(&self) -> u64;
}

impl Weighted for String {
    fn weight(&self) -> u64 {
        self.len() as u64
    }
}

impl Weighted for &str {
    fn weight(&self) -> u64 {
        self.len() as u64
    }
}

impl Weighted for RawDocument {
    fn weight(&self) -> u64 {
        self.byte_size()
    }
}

impl Weighted for InstructionRecord {
    fn weight(&self) -> u64 {
        (self.instruction.len() + self.input.len() + self.output.len()) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixOutcome<T> {
    pub items: Vec<T>,
    pub taken_a: usize,
    pub taken_b: usize,
    pub weight_a: u64,
    pub weight_b: u64,
}

/// `round(num / den)` with halves rounded up.
fn div_round_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

/// Indices of `pool` whose weights sum closest to `target`, visiting items
/// in a seeded random order and taking each one that does not overshoot
/// by more than half its own weight.
fn greedy_by_weight<T: Weighted>(pool: &[T], target: f64, rng: &mut SplitMix64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    rng.shuffle(&mut order);
    let mut acc = 0u64;
    let mut picked = Vec::new();
    for i in order {
        let w = pool[i].weight();
        if (acc + w) as f64 <= target + w as f64 / 2.0 {
            acc += w;
            picked.push(i);
        }
    }
    picked.sort_unstable();
    picked
}

/// Combine two pools at `spec`'s ratio. The pool that limits the ratio is
/// used whole; the other is subsampled without replacement. Survivors keep
/// their relative order within each pool, and the two streams are
/// interleaved in a seeded random order.
///
/// Under [`MixUnit::DocumentCount`] the realized counts satisfy
/// `|taken_a·b − taken_b·a| ≤ max(a, b)` for the reduced ratio `a:b`.
pub fn mix<T: Clone + Weighted>(
    pool_a: &[T],
    pool_b: &[T],
    spec: &MixSpec,
) -> Result<MixOutcome<T>, MixError> {
    let (ra, rb) = spec.ratio();
    if pool_a.is_empty() {
        return Err(MixError::EmptyPool {
            pool: 'A',
            achievable: "0:1".into(),
        });
    }
    if pool_b.is_empty() {
        return Err(MixError::EmptyPool {
            pool: 'B',
            achievable: "1:0".into(),
        });
    }
    let mut rng = SplitMix64::new(spec.seed);
    let all = |n: usize| (0..n).collect::<Vec<_>>();
    let (idx_a, idx_b) = match spec.unit {
        MixUnit::DocumentCount => {
            let (na, nb) = (pool_a.len() as u128, pool_b.len() as u128);
            if na * rb as u128 <= nb * ra as u128 {
                let take = div_round_half_up(na * rb as u128, ra as u128) as usize;
                (all(pool_a.len()), rng.sample_indices(pool_b.len(), take))
            } else {
                let take = div_round_half_up(nb * ra as u128, rb as u128) as usize;
                (rng.sample_indices(pool_a.len(), take), all(pool_b.len()))
            }
        }
        MixUnit::ByteWeighted => {
            let wa: u64 = pool_a.iter().map(Weighted::weight).sum();
            let wb: u64 = pool_b.iter().map(Weighted::weight).sum();
            if wa as u128 * rb as u128 <= wb as u128 * ra as u128 {
                let target = wa as f64 * rb as f64 / ra as f64;
                (
                    all(pool_a.len()),
                    greedy_by_weight(pool_b, target, &mut rng),
                )
            } else {
                let target = wb as f64 * ra as f64 / rb as f64;
                (
                    greedy_by_weight(pool_a, target, &mut rng),
                    all(pool_b.len()),
                )
            }
        }
    };

    let mut labels: Vec<bool> = std::iter::repeat_n(true, idx_a.len())
        .chain(std::iter::repeat_n(false, idx_b.len()))
        .collect();
    rng.shuffle(&mut labels);
    let (mut ia, mut ib) = (idx_a.iter(), idx_b.iter());
    let items = labels
        .iter()
        .map(|&from_a| {
            if from_a {
                pool_a[*ia.next().unwrap()].clone()
            } else {
                pool_b[*ib.next().unwrap()].clone()
            }
        })
        .collect();
    Ok(MixOutcome {
        items,
        taken_a: idx_a.len(),
        taken_b: idx_b.len(),
        weight_a: idx_a.iter().map(|&i| pool_a[i].weight()).sum(),
        weight_b: idx_b.iter().map(|&i| pool_b[i].weight()).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(validation_fraction: f64, seed: u64) -> Result<Self, MixError> {
        if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
            return Err(MixError::BadFraction(validation_fraction));
        }
        Ok(Self {
            validation_fraction,
            seed,
        })
    }

    pub fn validation_fraction(&self) -> f64 {
        self.validation_fraction
    }

    /// `round_half_up(n · fraction)`, at least 1 and at most `n - 1`.
    pub fn validation_size(&self, n: usize) -> usize {
        let v = (n as f64 * self.validation_fraction + 0.5).floor() as usize;
        v.clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Partition into `(train, validation)`. Validation members are drawn with
/// the seed; both sides keep input order.
pub fn split<T: Clone>(records: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>), MixError> {
    let n = records.len();
    if n < 2 {
        return Err(MixError::TooFewRecords(n));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let picked = rng.sample_indices(n, spec.validation_size(n));
    let mut is_val = vec![false; n];
    for i in picked {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (r, v) in records.iter().zip(is_val) {
        if v {
            val.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn spec(r: &str, seed: u64) -> MixSpec {
        MixSpec::parse(r, MixUnit::DocumentCount, seed).unwrap()
    }

    #[test]
    fn ratio_is_reduced() {
        assert_eq!(spec("80:20", 0).ratio(), (4, 1));
        assert_eq!(spec("7:3", 0).ratio(), (7, 3));
        assert!(MixSpec::parse("7:0", MixUnit::DocumentCount, 0).is_err());
        assert!(MixSpec::parse("seven", MixUnit::DocumentCount, 0).is_err());
    }

    #[test]
    fn exact_ratio_keeps_everything() {
        let out = mix(&pool("s", 70), &pool("r", 30), &spec("7:3", 1)).unwrap();
        assert_eq!((out.taken_a, out.taken_b), (70, 30));
        let out = mix(&pool("d", 8), &pool("g", 2), &spec("80:20", 1)).unwrap();
        assert_eq!((out.taken_a, out.taken_b), (8, 2));
    }

    #[test]
    fn surplus_pool_is_subsampled() {
        let b = pool("r", 600);
        let out = mix(&pool("s", 700), &b, &spec("7:3", 9)).unwrap();
        assert_eq!((out.taken_a, out.taken_b), (700, 300));
        let from_b: Vec<&String> = out.items.iter().filter(|s| s.starts_with('r')).collect();
        let pos: Vec<usize> = from_b.iter().map(|s| s[1..].parse().unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "pool order kept");
    }

    #[test]
    fn empty_pool_names_the_pool() {
        let err = mix(&pool("a", 3), &[], &spec("7:3", 0)).unwrap_err();
        assert!(matches!(err, MixError::EmptyPool { pool: 'B', .. }));
        assert!(err.to_string().contains("pool B"));
    }

    #[test]
    fn byte_weighted_tracks_weight_ratio() {
        let a: Vec<String> = (0..50).map(|i| "x".repeat(10 + i % 7)).collect();
        let b: Vec<String> = (0..400).map(|i| "y".repeat(5 + i % 11)).collect();
        let out = mix(
            &a,
            &b,
            &MixSpec::new(7, 3, MixUnit::ByteWeighted, 4).unwrap(),
        )
        .unwrap();
        assert_eq!(out.taken_a, 50);
        let want_b = out.weight_a as f64 * 3.0 / 7.0;
        assert!(
            (out.weight_b as f64 - want_b).abs() <= 15.0 / 2.0,
            "{} vs {want_b}",
            out.weight_b
        );
    }

    #[test]
    fn split_sizes() {
        let s = SplitSpec::default();
        let (t, v) = split(&pool("x", 100), &s).unwrap();
        assert_eq!((t.len(), v.len()), (90, 10));
        let (t, v) = split(&pool("x", 10), &s).unwrap();
        assert_eq!((t.len(), v.len()), (9, 1));
        let (t, v) = split(&pool("x", 2), &SplitSpec::new(0.9, 0).unwrap()).unwrap();
        assert_eq!((t.len(), v.len()), (1, 1));
        assert!(matches!(
            split(&pool("x", 1), &s),
            Err(MixError::TooFewRecords(1))
        ));
        assert!(SplitSpec::new(1.0, 0).is_err());
        assert!(SplitSpec::new(0.0, 0).is_err());
    }

    #[test]
    fn split_depends_on_seed() {
        let p = pool("x", 100);
        let a = split(&p, &SplitSpec::new(0.1, 1).unwrap()).unwrap();
        let b = split(&p, &SplitSpec::new(0.1, 1).unwrap()).unwrap();
        let c = split(&p, &SplitSpec::new(0.1, 2).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.1, c.1);
        assert_eq!(a.1.len(), c.1.len());
    }

    proptest! {
        #[test]
        fn counts_within_bound(na in 1usize..2000, nb in 1usize..2000, ra in 1u64..20, rb in 1u64..20, seed in any::<u64>()) {
            let s = MixSpec::new(ra, rb, MixUnit::DocumentCount, seed).unwrap();
            let out = mix(&pool("a", na), &pool("b", nb), &s).unwrap();
            let (ra, rb) = s.ratio();
            let lhs = (out.taken_a as i128 * rb as i128 - out.taken_b as i128 * ra as i128).abs();
            prop_assert!(lhs <= ra.max(rb) as i128);
            prop_assert!(out.taken_a <= na && out.taken_b <= nb);
            prop_assert!(out.taken_a == na || out.taken_b == nb);
            let mut seen = out.items.clone();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), out.items.len());
        }

        #[test]
        fn split_partitions(n in 2usize..500, f in 0.01f64..0.99, seed in any::<u64>()) {
            let p = pool("x", n);
            let (t, v) = split(&p, &SplitSpec::new(f, seed).unwrap()).unwrap();
            prop_assert_eq!(t.len() + v.len(), n);
            prop_assert!(!v.is_empty() && !t.is_empty());
            let mut all: Vec<String> = t.into_iter().chain(v).collect();
            all.sort();
            let mut want = p;
            want.sort();
            prop_assert_eq!(all, want);
        }
    }
}
