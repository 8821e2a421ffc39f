use std::collections::{HashMap, HashSet};

use super::InstructionRecord;
use crate::corpus::dedup_threshold_check;
use crate::text::{jaccard, word_tokens, MinIndexUnion};

pub use crate::corpus::ThresholdError;

pub const DEFAULT_INSTRUCTION_SIMILARITY: f64 = 0.7;

/// Word-unigram Jaccard similarity of two instructions (see
/// [`word_tokens`]: alphanumeric runs plus single CJK characters).
pub fn instruction_similarity(a: &str, b: &str) -> f64 {
    let sa: HashSet<String> = word_tokens(a).into_iter().collect();
    let sb: HashSet<String> = word_tokens(b).into_iter().collect();
    jaccard(&sa, &sb)
}

/// Cluster records whose instruction similarity is at least `threshold`
/// (single linkage) and keep the earliest record of each cluster, in input
/// order.
pub fn dedup_instructions(
    records: &[InstructionRecord],
    threshold: f64,
) -> Result<Vec<InstructionRecord>, ThresholdError> {
    dedup_threshold_check(threshold)?;
    let sets: Vec<HashSet<String>> = records
        .iter()
        .map(|r| word_tokens(&r.instruction).into_iter().collect())
        .collect();

    let mut index: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in sets.iter().enumerate() {
        for tok in s {
            index.entry(tok.as_str()).or_default().push(i);
        }
    }

    let mut uf = MinIndexUnion::new(records.len());
    let mut cands = Vec::new();
    for (i, s) in sets.iter().enumerate() {
        cands.clear();
        if s.is_empty() {
            // Token-less instructions only match each other.
            cands.extend((0..i).filter(|&j| sets[j].is_empty()));
        }
        for tok in s {
            cands.extend(index[tok.as_str()].iter().copied().take_while(|&j| j < i));
        }
        cands.sort_unstable();
        cands.dedup();
        for &j in &cands {
            if jaccard(s, &sets[j]) >= threshold {
                uf.union(i, j);
            }
        }
    }
    Ok(records
        .iter()
        .enumerate()
        .filter(|(i, _)| uf.find(*i) == *i)
        .map(|(_, r)| r.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CpaSubject;
    use crate::selfinstruct::Origin;
    use proptest::prelude::*;

    fn rec(instruction: &str) -> InstructionRecord {
        InstructionRecord {
            instruction: instruction.into(),
            input: String::new(),
            output: "o".into(),
            origin: Origin::Exam,
            subject: CpaSubject::Others,
            source_chunk_id: None,
            task_kind: None,
        }
    }

    #[test]
    fn identical_instructions_collapse() {
        let out = dedup_instructions(&[rec("解释 折旧"), rec("解释 折旧")], 0.7).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn disjoint_vocabulary_survives() {
        let out = dedup_instructions(&[rec("explain depreciation"), rec("list tax rates")], 0.01)
            .unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn eight_of_ten_shared_words() {
        // 8 shared + 2 private each: |A∩B| = 8, |A∪B| = 12, J = 2/3.
        let a = "w1 w2 w3 w4 w5 w6 w7 w8 alpha beta";
        let b = "w1 w2 w3 w4 w5 w6 w7 w8 gamma delta";
        assert!((instruction_similarity(a, b) - 8.0 / 12.0).abs() < 1e-12);
        assert_eq!(dedup_instructions(&[rec(a), rec(b)], 0.7).unwrap().len(), 2);
        assert_eq!(dedup_instructions(&[rec(a), rec(b)], 0.6).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn idempotent_and_order_stable(words in prop::collection::vec(prop::collection::vec(0u8..12, 1..6), 0..25), t in 0.2f64..=1.0) {
            let recs: Vec<_> = words
                .iter()
                .map(|ws| rec(&ws.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" ")))
                .collect();
            let once = dedup_instructions(&recs, t).unwrap();
            let twice = dedup_instructions(&once, t).unwrap();
            prop_assert_eq!(&once, &twice);
            // Survivors appear as a subsequence of the input.
            let mut it = recs.iter();
            for r in &once {
                prop_assert!(it.any(|x| x == r));
            }
        }
    }
}
