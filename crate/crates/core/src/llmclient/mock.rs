use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::{AttemptError, CompletionParams, Transport};
use crate::rng::{fnv1a, SplitMix64};
use crate::selfinstruct::{background_of, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    Fail(AttemptError),
}

#[derive(Debug)]
enum Mode {
    Canned(String),
    Scripted(Mutex<VecDeque<MockReply>>),
    Synthetic { seed: u64 },
}

/// Offline transport. Counts attempts and tracks peak concurrency so tests
/// can assert on the client's behaviour.
#[derive(Debug)]
pub struct MockTransport {
    mode: Mode,
    requires_key: bool,
    latency: Option<Duration>,
    attempts: AtomicUsize,
    inflight: AtomicUsize,
    peak: AtomicUsize,
}

impl MockTransport {
    fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            requires_key: false,
            latency: None,
            attempts: AtomicUsize::new(0),
            inflight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Always answer with `reply`.
    pub fn canned(reply: impl Into<String>) -> Self {
        Self::with_mode(Mode::Canned(reply.into()))
    }

    /// Answer attempts in order from `script`; an exhausted script reports
    /// the service as unavailable.
    pub fn scripted(script: Vec<MockReply>) -> Self {
        Self::with_mode(Mode::Scripted(Mutex::new(script.into())))
    }

    /// Answer generation prompts with a reference-format array built from
    /// the prompt's background text. Output depends only on `seed` and the
    /// prompt bytes.
    pub fn synthetic(seed: u64) -> Self {
        Self::with_mode(Mode::Synthetic { seed })
    }

    pub fn requiring_credentials(mut self) -> Self {
        self.requires_key = true;
        self
    }

    /// Hold each attempt open for `d`, to exercise concurrency limits.
    pub fn with_latency(mut self, d: Duration) -> Self {
        self.latency = Some(d);
        self
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    pub fn peak_inflight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn requires_credentials(&self) -> bool {
        self.requires_key
    }

    fn send(
        &self,
        prompt: &str,
        _params: &CompletionParams,
        _api_key: Option<&str>,
    ) -> Result<String, AttemptError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let now = self.inflight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if let Some(d) = self.latency {
            std::thread::sleep(d);
        }
        let reply = match &self.mode {
            Mode::Canned(s) => Ok(s.clone()),
            Mode::Scripted(q) => match q.lock().expect("script lock").pop_front() {
                Some(MockReply::Text(s)) => Ok(s),
                Some(MockReply::Fail(e)) => Err(e),
                None => Err(AttemptError::Unavailable("mock script exhausted".into())),
            },
            Mode::Synthetic { seed } => Ok(synthesize(prompt, *seed)),
        };
        self.inflight.fetch_sub(1, Ordering::SeqCst);
        reply
    }
}

fn requested_count(prompt: &str) -> usize {
    prompt
        .split_once("providing ")
        .and_then(|(_, rest)| rest.split_whitespace().next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(crate::selfinstruct::DEFAULT_INSTRUCTIONS_PER_CHUNK)
}

/// Short label drawn from a line: up to 12 characters, stopping at
/// sentence or clause punctuation, with quotes dropped.
fn topic_of(line: &str) -> String {
    let t: String = line
        .chars()
        .take_while(|c| {
            !matches!(
                c,
                '。' | '！' | '？' | '.' | '!' | '?' | '，' | ',' | '；' | ';' | ':' | '：'
            )
        })
        .filter(|c| !matches!(c, '"' | '“' | '”' | '\'' | '`') && !c.is_control())
        .take(12)
        .collect();
    let t = t.trim().to_string();
    if t.is_empty() {
        "本段内容".to_string()
    } else {
        t
    }
}

fn synthesize(prompt: &str, seed: u64) -> String {
    let background = background_of(prompt);
    let mut lines: Vec<&str> = background
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        lines.push("会计基础知识");
    }
    let mut rng = SplitMix64::new(seed ^ fnv1a(prompt.as_bytes()));
    let n = requested_count(prompt);
    let kind_offset = rng.below(TaskKind::ALL.len() as u64) as usize;
    let items: Vec<Value> = (0..n)
        .map(|i| {
            let line = lines[rng.below(lines.len() as u64) as usize];
            let topic = topic_of(line);
            let kind = TaskKind::ALL[(i + kind_offset) % TaskKind::ALL.len()];
            let (instruction, input, output) = match kind {
                TaskKind::Brainstorming => (
                    format!("围绕“{topic}”列举三个值得关注的实务问题。"),
                    "No Input".to_string(),
                    format!("1. {topic}的确认；2. {topic}的计量；3. {topic}的披露。"),
                ),
                TaskKind::OpenQa => (
                    format!("请说明“{topic}”在会计实务中的意义。"),
                    "No Input".to_string(),
                    line.to_string(),
                ),
                TaskKind::ClosedQa => (
                    "根据给定材料，指出其讨论的核心概念。".to_string(),
                    line.to_string(),
                    topic.clone(),
                ),
                TaskKind::Rewriting => (
                    format!("请用更简洁的语言改写关于“{topic}”的这段文字。"),
                    line.to_string(),
                    line.chars().take(60).collect(),
                ),
                TaskKind::Extraction => {
                    let nums: Vec<String> = line
                        .split(|c: char| !c.is_ascii_digit() && c != '.' && c != '%')
                        .filter(|s| s.chars().any(|c| c.is_ascii_digit()))
                        .map(str::to_string)
                        .collect();
                    let out = if nums.is_empty() {
                        "材料中没有出现数字。".to_string()
                    } else {
                        nums.join("、")
                    };
                    (
                        format!("从下列关于“{topic}”的材料中提取全部数字。"),
                        line.to_string(),
                        out,
                    )
                }
                TaskKind::Generation => (
                    format!("以“{topic}”为主题写一句培训提示语。"),
                    "No Input".to_string(),
                    format!("请牢记：{topic}是财务工作的重要环节。"),
                ),
                TaskKind::Classification => (
                    "判断下列材料最可能出自哪一门注册会计师考试科目。".to_string(),
                    line.to_string(),
                    "会计".to_string(),
                ),
                TaskKind::Chat => (
                    format!("你好，能和我简单聊聊“{topic}”吗？"),
                    "No Input".to_string(),
                    format!("当然可以。{line}"),
                ),
                TaskKind::Summarization => (
                    format!("概括这段关于“{topic}”的文字主旨。"),
                    line.to_string(),
                    format!("主旨：{topic}。"),
                ),
            };
            json!({
                "Instruction": instruction,
                "Input": input,
                "Output": output,
                "Task": kind.label(),
            })
        })
        .collect();
    serde_json::to_string_pretty(&items).expect("mock reply serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::Chunk;
    use crate::corpus::CpaSubject;
    use crate::selfinstruct::{build_prompt, parse_generation, validate_record, PromptRequest};

    fn prompt(text: &str, n: usize) -> String {
        let chunk = Chunk {
            doc_id: "d".into(),
            start_line: 0,
            end_line: 1,
            text: text.into(),
            subject: CpaSubject::Auditing,
        };
        build_prompt(&PromptRequest::new(&chunk).with_count(n))
    }

    #[test]
    fn synthetic_replies_parse_and_validate() {
        let p = prompt("财务报表审计是注册会计师的核心业务。\n审计报告应在2024年3月31日前出具，重要性水平为5%。", 10);
        let raw = synthesize(&p, 7);
        let out = parse_generation(&raw, "d:0-1", CpaSubject::Auditing).unwrap();
        assert_eq!(out.records.len(), 10);
        assert!(out.rejected.is_empty());
        for r in &out.records {
            assert_eq!(validate_record(r), vec![], "{r:?}");
        }
    }

    #[test]
    fn synthetic_is_deterministic_per_seed_and_prompt() {
        let p = prompt("存货按成本与可变现净值孰低计量。", 4);
        assert_eq!(synthesize(&p, 1), synthesize(&p, 1));
        assert_ne!(
            synthesize(&p, 1),
            synthesize(&prompt("固定资产折旧。", 4), 1)
        );
        assert_eq!(requested_count(&p), 4);
    }

    #[test]
    fn topic_stops_at_punctuation() {
        assert_eq!(topic_of("“收入确认”，五步法模型"), "收入确认");
        assert_eq!(topic_of("。"), "本段内容");
    }
}
