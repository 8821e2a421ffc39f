//! Raw domain documents: ingestion, cleaning, deduplication and the
//! per-source size report.

mod clean;
mod dedup;
mod ingest;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use clean::{clean_corpus, clean_document, CleanRules, Cleaned, PiiPattern};
pub(crate) use dedup::check_threshold as dedup_threshold_check;
pub use dedup::{dedup_corpus, shingles, ThresholdError, SHINGLE_CHARS};
pub use ingest::{ingest_directory, IngestError, IngestOutcome};
pub use report::{corpus_stats, BucketStats, CorpusStats};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} {value:?}; expected one of {expected}")]
pub struct UnknownVariant {
    pub kind: &'static str,
    pub value: String,
    pub expected: String,
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownVariant;

            /// Accepts the snake_case label, case-insensitively, with spaces
            /// or hyphens in place of underscores.
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let norm: String = s
                    .trim()
                    .chars()
                    .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
                    .collect();
                match norm.as_str() {
                    $($label => Ok($name::$variant),)+
                    _ => Err(UnknownVariant {
                        kind: $kind,
                        value: s.to_string(),
                        expected: [$($label),+].join(", "),
                    }),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

label_enum!(
    /// Where a document came from, mirroring the pre-training source table.
    SourceCategory, "category", {
        Specialized => "specialized",
        WikiData => "wiki_data",
        RelatedField => "related_field",
        General => "general",
    }
);

label_enum!(
    /// CPA exam subject used to label documents and instruction records.
    CpaSubject, "subject", {
        Accounting => "accounting",
        Auditing => "auditing",
        StrategyAndRisk => "strategy_and_risk",
        TaxLaws => "tax_laws",
        EconomicLaws => "economic_laws",
        FinancialAndCostManagement => "financial_and_cost_management",
        Others => "others",
    }
);

/// One source document. `byte_size` always equals the UTF-8 length of
/// `text`; the only way to change the text is [`RawDocument::set_text`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "DocRecord", into = "DocRecord")]
pub struct RawDocument {
    pub id: String,
    pub source_uri: String,
    pub category: SourceCategory,
    pub subject: CpaSubject,
    text: String,
    byte_size: u64,
    /// Set by a human reviewer; never computed.
    pub expert_validated: bool,
}

impl RawDocument {
    pub fn new(
        id: impl Into<String>,
        source_uri: impl Into<String>,
        category: SourceCategory,
        subject: CpaSubject,
        text: impl Into<String>,
    ) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            source_uri: source_uri.into(),
            category,
            subject,
            byte_size: text.len() as u64,
            text,
            expert_validated: false,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn byte_size(&self) -> u64 {
        self.byte_size
    }

    pub fn set_text(&mut self, text: String) {
        self.byte_size = text.len() as u64;
        self.text = text;
    }

    /// Source lines as the chunker sees them: split on `\n`, with a single
    /// trailing empty line (from a final newline) dropped.
    pub fn lines(&self) -> Vec<&str> {
        split_lines(&self.text)
    }
}

pub(crate) fn split_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines
}

/// Wire shape of a document line. `id`, `source_uri`, `byte_size` and
/// `expert_validated` are optional on input.
#[derive(Serialize, Deserialize)]
struct DocRecord {
    #[serde(default)]
    id: String,
    #[serde(default)]
    source_uri: String,
    category: SourceCategory,
    subject: CpaSubject,
    text: String,
    #[serde(default)]
    byte_size: u64,
    #[serde(default)]
    expert_validated: bool,
}

impl From<DocRecord> for RawDocument {
    fn from(r: DocRecord) -> Self {
        let mut doc = RawDocument::new(r.id, r.source_uri, r.category, r.subject, r.text);
        doc.expert_validated = r.expert_validated;
        doc
    }
}

impl From<RawDocument> for DocRecord {
    fn from(d: RawDocument) -> Self {
        DocRecord {
            id: d.id,
            source_uri: d.source_uri,
            category: d.category,
            subject: d.subject,
            byte_size: d.byte_size,
            text: d.text,
            expert_validated: d.expert_validated,
        }
    }
}

/// Counters for one clean + dedup pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub docs_in: usize,
    pub docs_out: usize,
    pub exact_dupes_removed: usize,
    pub near_dupes_removed: usize,
    /// Documents dropped because cleaning left no text.
    pub emptied: usize,
    pub pii_redactions: usize,
    pub chars_removed: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_parse_leniently() {
        assert_eq!(
            "Wiki Data".parse::<SourceCategory>().unwrap(),
            SourceCategory::WikiData
        );
        assert_eq!(
            "related-field".parse::<SourceCategory>().unwrap(),
            SourceCategory::RelatedField
        );
        assert_eq!(
            "TAX_LAWS".parse::<CpaSubject>().unwrap(),
            CpaSubject::TaxLaws
        );
        let err = "finance".parse::<CpaSubject>().unwrap_err();
        assert!(err.to_string().contains("accounting"));
        assert_eq!(CpaSubject::ALL.len(), 7);
        assert_eq!(SourceCategory::ALL.len(), 4);
    }

    #[test]
    fn byte_size_tracks_text() {
        let mut d = RawDocument::new("a", "", SourceCategory::General, CpaSubject::Others, "资产");
        assert_eq!(d.byte_size(), 6);
        d.set_text("ab".into());
        assert_eq!(d.byte_size(), 2);
    }

    #[test]
    fn record_without_optional_fields() {
        let d: RawDocument = serde_json::from_str(
            r#"{"text":"hello","category":"specialized","subject":"auditing","byte_size":999}"#,
        )
        .unwrap();
        assert_eq!(d.byte_size(), 5);
        assert_eq!(d.subject, CpaSubject::Auditing);
        let back = serde_json::to_string(&d).unwrap();
        assert!(back.contains(r#""byte_size":5"#));
    }

    #[test]
    fn lines_drop_single_trailing_newline() {
        assert_eq!(split_lines("a\nb\n"), vec!["a", "b"]);
        assert_eq!(split_lines("a\n\n"), vec!["a", ""]);
        assert!(split_lines("").is_empty());
    }
}
