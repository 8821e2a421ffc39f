use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

use super::{InstructionRecord, Origin};

pub const MAX_INSTRUCTION_SENTENCES: usize = 2;

/// File extensions that mark an input as pointing at audio, image or video
/// content instead of carrying text.
pub const MEDIA_EXTENSIONS: &[&str] = &[
    "jpg", "jpeg", "png", "gif", "bmp", "webp", "tif", "tiff", "svg", "heic", // images
    "mp3", "wav", "flac", "aac", "ogg", "m4a", "wma", // audio
    "mp4", "avi", "mov", "mkv", "wmv", "flv", "webm", "m4v", // video
];

static MEDIA_RE: LazyLock<Regex> = LazyLock::new(|| {
    let exts = MEDIA_EXTENSIONS.join("|");
    Regex::new(&format!(
        r"(?i)[A-Za-z0-9_\-./:%~?=&]*[A-Za-z0-9_\-]\.(?:{exts})\b"
    ))
    .expect("media regex")
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyInstruction,
    EmptyOutput,
    TooManySentences { count: usize },
    LineBreakInInstruction,
    MediaReference { reference: String },
    MissingSourceChunk,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyInstruction => write!(f, "instruction is empty"),
            Violation::EmptyOutput => write!(f, "output is empty"),
            Violation::TooManySentences { count } => {
                write!(
                    f,
                    "instruction has {count} sentences (max {MAX_INSTRUCTION_SENTENCES})"
                )
            }
            Violation::LineBreakInInstruction => write!(f, "instruction contains a line break"),
            Violation::MediaReference { reference } => {
                write!(f, "input references media resource {reference:?}")
            }
            Violation::MissingSourceChunk => write!(f, "generated record has no source chunk id"),
        }
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '。' | '！' | '？' | '.' | '!' | '?')
}

/// Sentences in `text`, counted as runs of terminal punctuation
/// (。！？.!?), plus one for trailing text after the last run. A period
/// directly followed by an alphanumeric character (decimals, "e.g", file
/// names) does not end a sentence. Non-blank text counts at least 1.
pub fn sentence_count(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut content_pending = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if is_terminal(c) && !(c == '.' && next.is_some_and(|n| n.is_alphanumeric())) {
            while i + 1 < chars.len() && is_terminal(chars[i + 1]) {
                i += 1;
            }
            count += 1;
            content_pending = false;
        } else if c.is_alphanumeric() {
            content_pending = true;
        }
        i += 1;
    }
    if content_pending {
        count += 1;
    }
    if count == 0 && !text.trim().is_empty() {
        1
    } else {
        count
    }
}

/// Check a record against the generation requirements. Empty result
/// means valid.
pub fn validate_record(rec: &InstructionRecord) -> Vec<Violation> {
    let mut v = Vec::new();
    if rec.instruction.trim().is_empty() {
        v.push(Violation::EmptyInstruction);
    } else {
        let n = sentence_count(&rec.instruction);
        if n > MAX_INSTRUCTION_SENTENCES {
            v.push(Violation::TooManySentences { count: n });
        }
    }
    if rec.instruction.contains(['\n', '\r']) {
        v.push(Violation::LineBreakInInstruction);
    }
    if rec.output.trim().is_empty() {
        v.push(Violation::EmptyOutput);
    }
    if let Some(m) = MEDIA_RE.find(&rec.input) {
        v.push(Violation::MediaReference {
            reference: m.as_str().to_string(),
        });
    }
    if rec.origin == Origin::Llm && rec.source_chunk_id.as_deref().is_none_or(str::is_empty) {
        v.push(Violation::MissingSourceChunk);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CpaSubject;
    use crate::selfinstruct::{parse_generation, REFERENCE_FORMAT_EXAMPLE};

    fn rec(instruction: &str, input: &str, output: &str) -> InstructionRecord {
        InstructionRecord {
            instruction: instruction.into(),
            input: input.into(),
            output: output.into(),
            origin: Origin::Exam,
            subject: CpaSubject::Accounting,
            source_chunk_id: None,
            task_kind: None,
        }
    }

    #[test]
    fn reference_records_are_valid() {
        let out = parse_generation(REFERENCE_FORMAT_EXAMPLE, "c", CpaSubject::Accounting).unwrap();
        for r in &out.records {
            assert_eq!(validate_record(r), vec![]);
        }
    }

    #[test]
    fn sentence_counting() {
        assert_eq!(sentence_count("什么是资产？"), 1);
        assert_eq!(sentence_count("请解释折旧。并举例说明！"), 2);
        assert_eq!(sentence_count("Compute 3.5% of revenue."), 1);
        assert_eq!(sentence_count("Wait... what?!"), 2);
        assert_eq!(sentence_count("No terminal mark"), 1);
        assert_eq!(sentence_count("First. Second"), 2);
        assert_eq!(sentence_count(""), 0);
    }

    #[test]
    fn three_sentences_flagged_once() {
        let v = validate_record(&rec("列出方法。解释原则。给出例子。", "", "答"));
        assert_eq!(v, vec![Violation::TooManySentences { count: 3 }]);
    }

    #[test]
    fn media_reference() {
        let v = validate_record(&rec("描述图片内容。", "see photo.jpg", "x"));
        assert_eq!(
            v,
            vec![Violation::MediaReference {
                reference: "photo.jpg".into()
            }]
        );
        let v = validate_record(&rec("a", "听 https://x.cn/a/b/talk.MP3 回答", "x"));
        assert!(
            matches!(&v[0], Violation::MediaReference { reference } if reference == "https://x.cn/a/b/talk.MP3")
        );
        // Text input mentioning a report file is fine.
        assert!(validate_record(&rec("a", "附件 report.pdf 的摘要如下", "x")).is_empty());
    }

    #[test]
    fn line_breaks_and_empty_fields() {
        let v = validate_record(&rec("第一行\n第二行", "", " "));
        assert!(v.contains(&Violation::LineBreakInInstruction));
        assert!(v.contains(&Violation::EmptyOutput));
        assert_eq!(
            validate_record(&rec("", "", "x")),
            vec![Violation::EmptyInstruction]
        );
    }

    #[test]
    fn llm_records_need_chunk() {
        let mut r = rec("a", "", "b");
        r.origin = Origin::Llm;
        assert_eq!(validate_record(&r), vec![Violation::MissingSourceChunk]);
    }
}
