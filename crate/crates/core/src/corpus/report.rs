use std::collections::BTreeMap;

use serde::Serialize;

use super::{CpaSubject, RawDocument, SourceCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BucketStats {
    pub category: SourceCategory,
    pub subject: CpaSubject,
    pub documents: usize,
    pub bytes: u64,
}

/// Document counts and byte totals per (category, subject), in category
/// then subject order. Only non-empty buckets appear as rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub rows: Vec<BucketStats>,
    pub total_documents: usize,
    pub total_bytes: u64,
}

impl CorpusStats {
    /// Roll the rows up to one (documents, bytes) pair per category.
    pub fn by_category(&self) -> BTreeMap<SourceCategory, (usize, u64)> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            let e = out.entry(r.category).or_insert((0, 0));
            e.0 += r.documents;
            e.1 += r.bytes;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,subject,documents,bytes\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.category, r.subject, r.documents, r.bytes
            ));
        }
        s
    }
}

pub fn corpus_stats(docs: &[RawDocument]) -> CorpusStats {
    let mut buckets: BTreeMap<(SourceCategory, CpaSubject), (usize, u64)> = BTreeMap::new();
    for d in docs {
        let e = buckets.entry((d.category, d.subject)).or_insert((0, 0));
        e.0 += 1;
        e.1 += d.byte_size();
    }
    let rows: Vec<BucketStats> = buckets
        .into_iter()
        .map(|((category, subject), (documents, bytes))| BucketStats {
            category,
            subject,
            documents,
            bytes,
        })
        .collect();
    CorpusStats {
        total_documents: rows.iter().map(|r| r.documents).sum(),
        total_bytes: rows.iter().map(|r| r.bytes).sum(),
        rows,
    }
}
