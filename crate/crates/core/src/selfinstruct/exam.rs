use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_record, InstructionRecord, Origin, TaskKind, Violation};
use crate::corpus::CpaSubject;

/// A rejected line, or a loaded record that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineIssue {
    /// 1-based.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExamOutcome {
    pub records: Vec<InstructionRecord>,
    /// Lines that could not be turned into a record.
    pub errors: Vec<LineIssue>,
    /// Loaded records with validation findings; the record is kept.
    pub warnings: Vec<(usize, Vec<Violation>)>,
}

#[derive(Deserialize)]
struct ExamLine {
    #[serde(alias = "Instruction")]
    instruction: Option<String>,
    #[serde(default, alias = "Input")]
    input: Option<String>,
    #[serde(alias = "Output")]
    output: Option<String>,
    #[serde(default)]
    subject: Option<CpaSubject>,
    #[serde(default)]
    task_kind: Option<TaskKind>,
}

pub fn ingest_exam_records(path: &Path, default_subject: CpaSubject) -> io::Result<ExamOutcome> {
    let text = fs::read_to_string(path)?;
    Ok(parse_exam_records(&text, default_subject))
}

/// Load exam-derived records from line-delimited JSON. Every record is
/// tagged [`Origin::Exam`] and validated; structural problems reject the
/// line, validation findings are reported as warnings.
pub fn parse_exam_records(text: &str, default_subject: CpaSubject) -> ExamOutcome {
    let mut out = ExamOutcome::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: ExamLine = match serde_json::from_str(raw) {
            Ok(p) => p,
            Err(e) => {
                out.errors.push(LineIssue {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let (Some(instruction), Some(output)) = (parsed.instruction, parsed.output) else {
            out.errors.push(LineIssue {
                line,
                reason: "missing instruction or output field".into(),
            });
            continue;
        };
        let rec = InstructionRecord {
            instruction,
            input: parsed.input.unwrap_or_default(),
            output,
            origin: Origin::Exam,
            subject: parsed.subject.unwrap_or(default_subject),
            source_chunk_id: None,
            task_kind: parsed.task_kind,
        };
        let violations = validate_record(&rec);
        if violations.contains(&Violation::EmptyInstruction)
            || violations.contains(&Violation::EmptyOutput)
        {
            out.errors.push(LineIssue {
                line,
                reason: violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            });
            continue;
        }
        if !violations.is_empty() {
            out.warnings.push((line, violations));
        }
        out.records.push(rec);
    }
    out
}
