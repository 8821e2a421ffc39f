use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use super::{CleanReport, RawDocument};
use crate::text::{jaccard, MinIndexUnion};

/// Shingle width in characters.
pub const SHINGLE_CHARS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("similarity threshold must be in (0, 1], got {0}")]
pub struct ThresholdError(pub f64);

pub(crate) fn check_threshold(t: f64) -> Result<(), ThresholdError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(ThresholdError(t))
    }
}

/// Set of character 5-grams. A text shorter than five characters is its own
/// single shingle; the empty text has none.
pub fn shingles(text: &str) -> HashSet<&str> {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain([text.len()])
        .collect();
    let n_chars = bounds.len() - 1;
    if n_chars == 0 {
        return HashSet::new();
    }
    if n_chars < SHINGLE_CHARS {
        return HashSet::from([text]);
    }
    (0..=n_chars - SHINGLE_CHARS)
        .map(|i| &text[bounds[i]..bounds[i + SHINGLE_CHARS]])
        .collect()
}

/// Remove exact duplicates, then near-duplicates whose 5-gram Jaccard
/// similarity is at least `threshold`.
///
/// Near-duplicate pairs are linked into clusters (single linkage) and the
/// earliest document of each cluster survives. Survivors keep their input
/// order. Candidate pairs come from an inverted shingle index, so documents
/// sharing no shingle are never compared.
pub fn dedup_corpus(
    docs: &[RawDocument],
    threshold: f64,
) -> Result<(Vec<RawDocument>, CleanReport), ThresholdError> {
    check_threshold(threshold)?;
    let mut report = CleanReport {
        docs_in: docs.len(),
        ..Default::default()
    };

    let mut seen: HashSet<&str> = HashSet::new();
    let unique: Vec<&RawDocument> = docs.iter().filter(|d| seen.insert(d.text())).collect();
    report.exact_dupes_removed = docs.len() - unique.len();

    let sets: Vec<HashSet<&str>> = unique.par_iter().map(|d| shingles(d.text())).collect();

    let mut index: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, set) in sets.iter().enumerate() {
        for s in set {
            index.entry(s).or_default().push(i);
        }
    }

    let mut uf = MinIndexUnion::new(unique.len());
    let mut candidates: Vec<usize> = Vec::new();
    for (i, set) in sets.iter().enumerate() {
        candidates.clear();
        for s in set {
            candidates.extend(index[s].iter().copied().take_while(|&j| j < i));
        }
        candidates.sort_unstable();
        candidates.dedup();
        for &j in &candidates {
            if jaccard(set, &sets[j]) >= threshold {
                uf.union(i, j);
            }
        }
    }

    let survivors: Vec<RawDocument> = unique
        .iter()
        .enumerate()
        .filter(|(i, _)| uf.find(*i) == *i)
        .map(|(_, d)| (*d).clone())
        .collect();
    report.near_dupes_removed = unique.len() - survivors.len();
    report.docs_out = survivors.len();
    Ok((survivors, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CpaSubject, SourceCategory};

    fn docs(texts: &[&str]) -> Vec<RawDocument> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                RawDocument::new(
                    format!("d{i}"),
                    "",
                    SourceCategory::General,
                    CpaSubject::Others,
                    *t,
                )
            })
            .collect()
    }

    fn ids(d: &[RawDocument]) -> Vec<&str> {
        d.iter().map(|x| x.id.as_str()).collect()
    }

    #[test]
    fn exact_duplicates() {
        let (out, rep) = dedup_corpus(&docs(&["same text", "same text"]), 0.9).unwrap();
        assert_eq!(ids(&out), vec!["d0"]);
        assert_eq!(rep.exact_dupes_removed, 1);
        assert_eq!(rep.near_dupes_removed, 0);
    }

    #[test]
    fn disjoint_texts_survive_any_threshold() {
        for t in [0.01, 0.5, 1.0] {
            let (out, _) = dedup_corpus(&docs(&["abcdefg", "uvwxyz12"]), t).unwrap();
            assert_eq!(out.len(), 2);
        }
    }

    #[test]
    fn one_char_difference() {
        // {abcde,bcdef,cdefg,defgh} vs {abcde,bcdef,cdefg,defgx}: 3 / 5.
        let a = shingles("abcdefgh");
        let b = shingles("abcdefgx");
        assert_eq!(a.intersection(&b).count(), 3);
        assert_eq!(a.union(&b).count(), 5);
        let d = docs(&["abcdefgh", "abcdefgx"]);
        assert_eq!(dedup_corpus(&d, 0.6).unwrap().0.len(), 1);
        assert_eq!(dedup_corpus(&d, 0.61).unwrap().0.len(), 2);
    }

    #[test]
    fn cluster_keeps_earliest_even_through_chains() {
        // d1~d2 and d0~d1 by construction; all collapse onto d0.
        let base = "会计准则规定资产负债表应当按照流动性列示各项资产与负债";
        let v1 = base.replacen('列', "排", 1);
        let v2 = v1.replacen('负', "付", 1);
        let d = docs(&[base, &v1, &v2, "完全无关的另一段文本内容示例"]);
        let (out, rep) = dedup_corpus(&d, 0.6).unwrap();
        assert!(
            dedup_corpus(&d[..3].iter().step_by(2).cloned().collect::<Vec<_>>(), 0.6)
                .unwrap()
                .0
                .len()
                == 2
        );
        assert_eq!(ids(&out), vec!["d0", "d3"]);
        assert_eq!(rep.near_dupes_removed, 2);
    }

    #[test]
    fn short_texts_are_single_shingles() {
        assert_eq!(shingles("abc").len(), 1);
        assert!(shingles("").is_empty());
        assert_eq!(shingles("资产负债表").len(), 1);
    }

    #[test]
    fn threshold_must_be_in_range() {
        assert!(dedup_corpus(&[], 0.0).is_err());
        assert!(dedup_corpus(&[], 1.5).is_err());
        assert!(dedup_corpus(&[], 1.0).is_ok());
    }
}
