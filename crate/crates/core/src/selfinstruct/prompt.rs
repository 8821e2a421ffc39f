use crate::chunker::Chunk;

pub const DEFAULT_INSTRUCTIONS_PER_CHUNK: usize = 10;

/// Two-record example shown to the generator under `[Reference Format]`.
pub const REFERENCE_FORMAT_EXAMPLE: &str = r#"[{
"Instruction": "According to the provided accounting rules, classify the following words into the correct categories: Assets, Equity, Expenses, Revenue.",
"Input": "Understanding the accounting rules: Debit increases and credit decreases assets and equity oppositely. Fixed assets are the same overall, remember details clearly and don't confused. Distinguish between profit and loss accounts; expenses and revenue are not the same.",
"Output": "Assets: Fixed assets Equity: Debit increases and credit decreases Expenses: Expenses Revenue: Revenue"
},
{
"Instruction": "Based on the following text, summarize the important characteristics or definitions of the relationship between tax law and tax legislation.",
"Input": "Main question: Is national taxation based on political power or property rights? Subquestion 1: Expression of tax law and tax legislation relationship.",
"Output": "Tax law fundamentally embodies a distribution relationship. The content of tax legislation relationship is the most substantial aspect of tax legislation and the essence of tax law."
}]"#;

const REQUIREMENTS: &str = "\
1) Avoid repeating verbs in each instruction and strive for diversity in both instructions and tone.
2) Instructions should encompass various types of tasks, including brainstorming, open and closed QA, rewriting, extraction, generation, classification, chat, and summarization.
3) Instructions should be in Chinese and consist of 1 to 2 sentences. Imperative or interrogative sentences are allowed, without line breaks.
4) You should generate appropriate input for the instruction, including specific examples that involve real data to make the instruction challenging.
5) Not all instructions require input. For example, for common sense information inquiries, such as \"what is the highest mountain in the world\", simply state \"No Input\" in the input field. Text materials (e.g., articles, links) should provide examples directly in the input section. Other media types, like audio, images, videos, or links, do not meet the requirements.
6) The output should be an appropriate response to the instruction and input.";

#[derive(Debug, Clone)]
pub struct PromptRequest<'a> {
    pub chunk: &'a Chunk,
    pub n_instructions: usize,
}

impl<'a> PromptRequest<'a> {
    pub fn new(chunk: &'a Chunk) -> Self {
        Self {
            chunk,
            n_instructions: DEFAULT_INSTRUCTIONS_PER_CHUNK,
        }
    }

    pub fn with_count(mut self, n: usize) -> Self {
        self.n_instructions = n;
        self
    }
}

/// Assemble the generation prompt: task description, requirements,
/// reference format, then the chunk text verbatim as background knowledge.
///
/// Everything before the chunk text depends only on `n_instructions`, so
/// prompts for different chunks differ only in their final section.
pub fn build_prompt(req: &PromptRequest<'_>) -> String {
    let mut p = String::with_capacity(
        REQUIREMENTS.len() + REFERENCE_FORMAT_EXAMPLE.len() + req.chunk.text.len() + 512,
    );
    p.push_str("[Task Description]\n");
    p.push_str(&format!(
        "You are currently an expert in the field of accounting and finance and have been tasked with \
         providing {} diverse task instructions based on [Background Knowledge]. The following \
         [Requirements] outline the criteria you need to meet when providing instructions, as detailed \
         in the [Reference Format].\n\n",
        req.n_instructions
    ));
    p.push_str("[Requirements]\n");
    p.push_str(REQUIREMENTS);
    p.push_str("\n\n[Reference Format]\n");
    p.push_str(REFERENCE_FORMAT_EXAMPLE);
    p.push_str("\n\n[Background Knowledge]\n");
    p.push_str(&req.chunk.text);
    p
}

/// Text of the `[Background Knowledge]` section of a prompt built by
/// [`build_prompt`].
pub(crate) fn background_of(prompt: &str) -> &str {
    const MARK: &str = "\n[Background Knowledge]\n";
    prompt
        .rfind(MARK)
        .map(|i| &prompt[i + MARK.len()..])
        .unwrap_or("")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CpaSubject;

    fn chunk(text: &str) -> Chunk {
        Chunk {
            doc_id: "d".into(),
            start_line: 0,
            end_line: 0,
            text: text.into(),
            subject: CpaSubject::Auditing,
        }
    }

    const HEADERS: [&str; 4] = [
        "[Task Description]",
        "[Requirements]",
        "[Reference Format]",
        "[Background Knowledge]",
    ];

    #[test]
    fn sections_in_order() {
        let c = chunk("财务报表审计是注册会计师的核心业务。");
        let p = build_prompt(&PromptRequest::new(&c));
        let positions: Vec<usize> = HEADERS
            .iter()
            .map(|h| p.find(&format!("{h}\n")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(p.starts_with("[Task Description]\n"));
        assert!(p.ends_with("财务报表审计是注册会计师的核心业务。"));
    }

    #[test]
    fn count_substituted_in_task_description() {
        let c = chunk("x");
        let p = build_prompt(&PromptRequest::new(&c));
        let task = &p[..p.find("[Requirements]").unwrap()];
        assert!(task.contains("providing 10 diverse"));
        let p7 = build_prompt(&PromptRequest::new(&c).with_count(7));
        assert!(p7.contains("providing 7 diverse"));
    }

    #[test]
    fn prompts_differ_only_in_background() {
        let a = build_prompt(&PromptRequest::new(&chunk("资产")));
        let b = build_prompt(&PromptRequest::new(&chunk("负债")));
        let cut = |p: &str| p.rfind("[Background Knowledge]\n").unwrap();
        assert_eq!(&a[..cut(&a)], &b[..cut(&b)]);
        assert_ne!(a, b);
        assert_eq!(background_of(&a), "资产");
    }

    #[test]
    fn byte_stable() {
        let c = chunk("同一段文本");
        assert_eq!(
            build_prompt(&PromptRequest::new(&c)),
            build_prompt(&PromptRequest::new(&c))
        );
    }

    #[test]
    fn reference_example_is_valid_json() {
        let v: serde_json::Value = serde_json::from_str(REFERENCE_FORMAT_EXAMPLE).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
    }
}
