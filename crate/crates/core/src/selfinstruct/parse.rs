use serde_json::{Map, Value};

use super::{InstructionRecord, Origin, TaskKind};
use crate::corpus::CpaSubject;

const NO_INPUT_MARKERS: [&str; 3] = ["no input", "无输入", "无"];
const NO_INPUT: &str = "No Input";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed generation at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Malformed { offset, .. } => *offset,
        }
    }
}

/// An array element that could not become a record.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RejectedObject {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOutcome {
    pub records: Vec<InstructionRecord>,
    pub rejected: Vec<RejectedObject>,
}

/// Parse a generator reply holding an array of objects keyed
/// Instruction / Input / Output (key case is ignored; an optional Task or
/// Type key fills [`InstructionRecord::task_kind`]).
///
/// Text around the array (prose, code fences) is skipped. Besides strict
/// JSON the parser accepts TeX-style ``quotes'' and escaped braces, and
/// typographic double quotes as a last resort. Inputs reading "No Input"
/// (or 无输入 / 无) become empty.
pub fn parse_generation(
    raw: &str,
    source_chunk_id: &str,
    subject: CpaSubject,
) -> Result<ParseOutcome, ParseError> {
    let items = extract_array(raw)?;
    let mut out = ParseOutcome::default();
    for (index, item) in items.into_iter().enumerate() {
        match item {
            Value::Object(map) => match object_to_record(&map, source_chunk_id, subject) {
                Ok(r) => out.records.push(r),
                Err(reason) => out.rejected.push(RejectedObject { index, reason }),
            },
            other => out.rejected.push(RejectedObject {
                index,
                reason: format!("expected an object, found {}", json_kind(&other)),
            }),
        }
    }
    Ok(out)
}

/// Inverse of [`parse_generation`] for valid records: a JSON array in the
/// reference format, with empty inputs written as "No Input".
pub fn to_reference_format(records: &[InstructionRecord]) -> String {
    let items: Vec<Value> = records
        .iter()
        .map(|r| {
            let mut m = Map::new();
            m.insert("Instruction".into(), Value::String(r.instruction.clone()));
            let input = if r.input.is_empty() {
                NO_INPUT.to_string()
            } else {
                r.input.clone()
            };
            m.insert("Input".into(), Value::String(input));
            m.insert("Output".into(), Value::String(r.output.clone()));
            if let Some(k) = r.task_kind {
                m.insert("Task".into(), Value::String(k.label().into()));
            }
            Value::Object(m)
        })
        .collect();
    serde_json::to_string_pretty(&items).expect("records serialize")
}

fn extract_array(raw: &str) -> Result<Vec<Value>, ParseError> {
    let Some(start) = find_array_start(raw) else {
        let offset = raw.len() - raw.trim_start().len();
        return Err(ParseError::Malformed {
            offset,
            message: "expected an array of instruction objects".into(),
        });
    };
    let body = &raw[start..];
    let strict_err = match first_value(body) {
        Ok(Value::Array(items)) => return Ok(items),
        Ok(_) => unreachable!("array start always yields an array"),
        Err(e) => e,
    };
    for variant in [
        normalize_tex(body),
        normalize_typographic(&normalize_tex(body)),
    ] {
        if let Ok(Value::Array(items)) = first_value(&variant) {
            return Ok(items);
        }
    }
    Err(ParseError::Malformed {
        offset: start + byte_offset(body, strict_err.line(), strict_err.column()),
        message: strict_err.to_string(),
    })
}

/// First `[` whose next non-blank text opens an object (or closes the
/// array), so section labels such as "[Reference Format]" are skipped.
fn find_array_start(raw: &str) -> Option<usize> {
    raw.match_indices('[').map(|(i, _)| i).find(|&i| {
        let rest = raw[i + 1..].trim_start();
        rest.starts_with('{') || rest.starts_with("\\{") || rest.starts_with(']')
    })
}

fn first_value(s: &str) -> Result<Value, serde_json::Error> {
    let mut stream = serde_json::Deserializer::from_str(s).into_iter::<Value>();
    match stream.next() {
        Some(v) => v,
        None => serde_json::from_str::<Value>(s),
    }
}

fn normalize_tex(s: &str) -> String {
    s.replace("``", "\"")
        .replace("''", "\"")
        .replace("\\{", "{")
        .replace("\\}", "}")
}

fn normalize_typographic(s: &str) -> String {
    s.replace(['\u{201C}', '\u{201D}'], "\"")
}

/// serde_json reports 1-based line and byte column.
fn byte_offset(s: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in s.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(s.len());
        }
        offset += l.len();
    }
    s.len()
}

fn object_to_record(
    map: &Map<String, Value>,
    chunk_id: &str,
    subject: CpaSubject,
) -> Result<InstructionRecord, String> {
    let mut instruction = None;
    let mut input = None;
    let mut output = None;
    let mut task = None;
    for (k, v) in map {
        let key = k
            .trim()
            .trim_matches(|c| c == '*' || c == '"' || c == '`')
            .to_lowercase();
        match key.as_str() {
            "instruction" | "指令" => instruction = Some(value_text(v)),
            "input" | "输入" => input = Some(value_text(v)),
            "output" | "输出" => output = Some(value_text(v)),
            "task" | "type" | "task_type" | "任务类型" => {
                task = value_text(v).parse::<TaskKind>().ok()
            }
            _ => {}
        }
    }
    let instruction = instruction.ok_or("missing key \"Instruction\"")?;
    let output = output.ok_or("missing key \"Output\"")?;
    if instruction.is_empty() {
        return Err("empty instruction".into());
    }
    if output.is_empty() {
        return Err("empty output".into());
    }
    Ok(InstructionRecord {
        instruction,
        input: normalize_input(input.unwrap_or_default()),
        output,
        origin: Origin::Llm,
        subject,
        source_chunk_id: Some(chunk_id.to_string()),
        task_kind: task,
    })
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.trim().to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn normalize_input(s: String) -> String {
    let bare = s
        .trim_matches(|c: char| {
            c.is_whitespace() || matches!(c, '.' | '。' | '(' | ')' | '（' | '）' | '<' | '>')
        })
        .to_lowercase();
    if NO_INPUT_MARKERS.contains(&bare.as_str()) {
        String::new()
    } else {
        s
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}
