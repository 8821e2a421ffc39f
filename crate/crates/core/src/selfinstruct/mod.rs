//! Self-instruct generation: prompt assembly around a background chunk,
//! parsing of the generator's reply into instruction records, record
//! validation and near-duplicate removal, plus ingestion of exam-derived
//! records.

mod dedup;
mod exam;
mod parse;
mod prompt;
mod validate;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CpaSubject, UnknownVariant};

pub use dedup::{dedup_instructions, instruction_similarity, DEFAULT_INSTRUCTION_SIMILARITY};
pub use exam::{ingest_exam_records, parse_exam_records, ExamOutcome, LineIssue};
pub use parse::{parse_generation, to_reference_format, ParseError, ParseOutcome, RejectedObject};
pub(crate) use prompt::background_of;
pub use prompt::{
    build_prompt, PromptRequest, DEFAULT_INSTRUCTIONS_PER_CHUNK, REFERENCE_FORMAT_EXAMPLE,
};
pub use validate::{sentence_count, validate_record, Violation};

/// Task types the generator is asked to cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Brainstorming,
    OpenQa,
    ClosedQa,
    Rewriting,
    Extraction,
    Generation,
    Classification,
    Chat,
    Summarization,
}

impl TaskKind {
    pub const ALL: [TaskKind; 9] = [
        TaskKind::Brainstorming,
        TaskKind::OpenQa,
        TaskKind::ClosedQa,
        TaskKind::Rewriting,
        TaskKind::Extraction,
        TaskKind::Generation,
        TaskKind::Classification,
        TaskKind::Chat,
        TaskKind::Summarization,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Brainstorming => "brainstorming",
            TaskKind::OpenQa => "open_qa",
            TaskKind::ClosedQa => "closed_qa",
            TaskKind::Rewriting => "rewriting",
            TaskKind::Extraction => "extraction",
            TaskKind::Generation => "generation",
            TaskKind::Classification => "classification",
            TaskKind::Chat => "chat",
            TaskKind::Summarization => "summarization",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TaskKind {
    type Err = UnknownVariant;

    /// English labels in any case/spacing, or the common Chinese names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_lowercase()
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .collect();
        let kind = match key.as_str() {
            "brainstorming" | "头脑风暴" => TaskKind::Brainstorming,
            "openqa" | "开放式问答" | "开放问答" => TaskKind::OpenQa,
            "closedqa" | "封闭式问答" | "封闭问答" => TaskKind::ClosedQa,
            "rewriting" | "rewrite" | "改写" => TaskKind::Rewriting,
            "extraction" | "抽取" | "提取" => TaskKind::Extraction,
            "generation" | "生成" => TaskKind::Generation,
            "classification" | "分类" => TaskKind::Classification,
            "chat" | "对话" | "聊天" => TaskKind::Chat,
            "summarization" | "summary" | "摘要" | "总结" => TaskKind::Summarization,
            _ => {
                return Err(UnknownVariant {
                    kind: "task kind",
                    value: s.to_string(),
                    expected: TaskKind::ALL
                        .iter()
                        .map(|k| k.label())
                        .collect::<Vec<_>>()
                        .join(", "),
                })
            }
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Converted from exam and exercise collections.
    Exam,
    /// Produced by the generator from a background chunk.
    Llm,
}

/// One supervised fine-tuning example in the canonical line format.
/// An empty `input` means the instruction takes no input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    #[serde(default)]
    pub input: String,
    pub output: String,
    pub origin: Origin,
    pub subject: CpaSubject,
    #[serde(default)]
    pub source_chunk_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_kind: Option<TaskKind>,
}

/// Indices of LLM-origin records whose chunk id is missing or not in
/// `chunk_ids`.
pub fn dangling_chunk_refs(
    records: &[InstructionRecord],
    chunk_ids: &HashSet<String>,
) -> Vec<usize> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            r.origin == Origin::Llm
                && !r
                    .source_chunk_id
                    .as_ref()
                    .is_some_and(|id| chunk_ids.contains(id))
        })
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_kind_labels() {
        assert_eq!("Open QA".parse::<TaskKind>().unwrap(), TaskKind::OpenQa);
        assert_eq!("closed_qa".parse::<TaskKind>().unwrap(), TaskKind::ClosedQa);
        assert_eq!("摘要".parse::<TaskKind>().unwrap(), TaskKind::Summarization);
        assert!("poetry".parse::<TaskKind>().is_err());
        for k in TaskKind::ALL {
            assert_eq!(k.label().parse::<TaskKind>().unwrap(), k);
        }
    }

    #[test]
    fn canonical_line_format() {
        let r = InstructionRecord {
            instruction: "什么是权责发生制？".into(),
            input: String::new(),
            output: "以权利和责任的发生来确认收入和费用。".into(),
            origin: Origin::Exam,
            subject: CpaSubject::Accounting,
            source_chunk_id: None,
            task_kind: None,
        };
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(
            line,
            r#"{"instruction":"什么是权责发生制？","input":"","output":"以权利和责任的发生来确认收入和费用。","origin":"exam","subject":"accounting","source_chunk_id":null}"#
        );
        let back: InstructionRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn dangling_refs() {
        let mut r = InstructionRecord {
            instruction: "a".into(),
            input: String::new(),
            output: "b".into(),
            origin: Origin::Llm,
            subject: CpaSubject::Others,
            source_chunk_id: Some("d:0-49".into()),
            task_kind: None,
        };
        let ids: HashSet<String> = ["d:0-49".to_string()].into();
        assert!(dangling_chunk_refs(std::slice::from_ref(&r), &ids).is_empty());
        r.source_chunk_id = Some("d:30-79".into());
        assert_eq!(dangling_chunk_refs(&[r], &ids), vec![0]);
    }
}
