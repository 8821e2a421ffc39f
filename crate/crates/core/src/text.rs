//! Small text helpers shared by the corpus, self-instruct and stats modules.

/// True for Han ideographs, kana and Hangul syllables. These scripts are
/// written without spaces, so each character is treated as one word.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2EBEF  // ext B..F
        | 0x30000..=0x3134F) // ext G
}

/// Lower-cased word unigrams: maximal runs of alphanumeric non-CJK
/// characters, plus every CJK character on its own. Punctuation is dropped.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Jaccard similarity of two sets; two empty sets are identical (1.0).
pub fn jaccard<T: Eq + std::hash::Hash>(
    a: &std::collections::HashSet<T>,
    b: &std::collections::HashSet<T>,
) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(x)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Union-find with path halving; the root of each set is its smallest index,
/// which is what "earliest survives" dedup needs.
#[derive(Debug, Clone)]
pub struct MinIndexUnion {
    parent: Vec<usize>,
}

impl MinIndexUnion {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn tokens_mix_scripts() {
        assert_eq!(
            word_tokens("净利润 Net-Income 100!"),
            vec!["净", "利", "润", "net", "income", "100"]
        );
    }

    #[test]
    fn jaccard_basics() {
        let a: HashSet<_> = [1, 2, 3].into_iter().collect();
        let b: HashSet<_> = [2, 3, 4].into_iter().collect();
        assert!((jaccard(&a, &b) - 0.5).abs() < 1e-12);
        let e: HashSet<i32> = HashSet::new();
        assert_eq!(jaccard(&e, &e), 1.0);
        assert_eq!(jaccard(&a, &e), 0.0);
    }

    #[test]
    fn union_roots_are_minimal() {
        let mut uf = MinIndexUnion::new(5);
        uf.union(4, 2);
        uf.union(2, 3);
        uf.union(3, 1);
        assert_eq!(uf.find(4), 1);
        assert_eq!(uf.find(0), 0);
    }
}
