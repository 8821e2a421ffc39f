use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use super::{CleanReport, RawDocument};

pub const EMAIL_PLACEHOLDER: &str = "[EMAIL]";
pub const PHONE_PLACEHOLDER: &str = "[PHONE]";
pub const ID_PLACEHOLDER: &str = "[ID]";

/// A redaction rule. Matches are replaced with `placeholder`.
#[derive(Debug, Clone)]
pub struct PiiPattern {
    pub name: String,
    pub regex: Regex,
    pub placeholder: String,
    /// Reject matches that touch an ASCII digit on either side, so a
    /// phone-shaped substring of a longer number is left alone.
    pub digit_bounded: bool,
}

impl PiiPattern {
    pub fn new(
        name: &str,
        pattern: &str,
        placeholder: &str,
        digit_bounded: bool,
    ) -> Result<Self, regex::Error> {
        Ok(Self {
            name: name.to_string(),
            regex: Regex::new(pattern)?,
            placeholder: placeholder.to_string(),
            digit_bounded,
        })
    }
}

/// Cleaning configuration. Patterns are applied in order, each to the
/// output of the previous one.
#[derive(Debug, Clone)]
pub struct CleanRules {
    pub patterns: Vec<PiiPattern>,
}

impl Default for CleanRules {
    /// Email addresses, national-ID-shaped digit runs (15+ digits, or 17
    /// digits plus a trailing X), then mainland mobile, landline and
    /// NANP-style phone numbers.
    fn default() -> Self {
        let p = |n, re, ph, b| PiiPattern::new(n, re, ph, b).expect("builtin pattern compiles");
        Self {
            patterns: vec![
                p(
                    "email",
                    r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}",
                    EMAIL_PLACEHOLDER,
                    false,
                ),
                p(
                    "national_id",
                    r"[0-9]{17}[Xx]|[0-9]{15,}",
                    ID_PLACEHOLDER,
                    true,
                ),
                p(
                    "phone",
                    r"(?:\+?86[- ]?)?1[3-9][0-9]{9}",
                    PHONE_PLACEHOLDER,
                    true,
                ),
                p("phone", r"0[0-9]{2,3}-[0-9]{7,8}", PHONE_PLACEHOLDER, true),
                p(
                    "phone",
                    r"\(?[0-9]{3}\)?[- .][0-9]{3}[- .][0-9]{4}",
                    PHONE_PLACEHOLDER,
                    true,
                ),
            ],
        }
    }
}

impl CleanRules {
    pub fn with_pattern(mut self, pattern: PiiPattern) -> Self {
        self.patterns.push(pattern);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Cleaned {
    pub doc: RawDocument,
    pub redactions: usize,
    /// Characters dropped by control-character and whitespace cleanup.
    pub chars_removed: usize,
}

impl Cleaned {
    /// A document cleaned down to nothing is flagged here rather than
    /// treated as an error.
    pub fn is_empty(&self) -> bool {
        self.doc.text().is_empty()
    }
}

/// NFKC-normalize, strip control and zero-width characters, collapse
/// horizontal whitespace, trim lines, drop blank lines, then redact PII.
pub fn clean_document(doc: &RawDocument, rules: &CleanRules) -> Cleaned {
    let input_chars = doc.text().chars().count();
    let normalized = normalize_text(doc.text());
    let chars_removed = input_chars.saturating_sub(normalized.chars().count());

    let mut text = normalized;
    let mut redactions = 0;
    for pat in &rules.patterns {
        let (next, n) = redact(&text, pat);
        text = next;
        redactions += n;
    }

    let mut out = doc.clone();
    out.set_text(text);
    Cleaned {
        doc: out,
        redactions,
        chars_removed,
    }
}

/// Clean every document, dropping the ones that end up empty. The report
/// carries `docs_in`, `docs_out`, `emptied`, `pii_redactions` and
/// `chars_removed`.
pub fn clean_corpus(docs: &[RawDocument], rules: &CleanRules) -> (Vec<RawDocument>, CleanReport) {
    use rayon::prelude::*;
    let cleaned: Vec<Cleaned> = docs.par_iter().map(|d| clean_document(d, rules)).collect();
    let mut report = CleanReport {
        docs_in: docs.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(docs.len());
    for c in cleaned {
        report.pii_redactions += c.redactions;
        report.chars_removed += c.chars_removed;
        if c.is_empty() {
            report.emptied += 1;
        } else {
            out.push(c.doc);
        }
    }
    report.docs_out = out.len();
    (out, report)
}

fn normalize_text(raw: &str) -> String {
    let nfkc: String = raw.nfkc().collect();
    let mut lines = Vec::new();
    for line in nfkc.split(['\n', '\r']) {
        let mut cleaned = String::with_capacity(line.len());
        let mut pending_space = false;
        for c in line.chars() {
            if c.is_whitespace() {
                pending_space = true;
            } else if c.is_control() || is_invisible(c) {
                continue;
            } else {
                if pending_space && !cleaned.is_empty() {
                    cleaned.push(' ');
                }
                pending_space = false;
                cleaned.push(c);
            }
        }
        if !cleaned.is_empty() {
            lines.push(cleaned);
        }
    }
    lines.join("\n")
}

fn is_invisible(c: char) -> bool {
    matches!(c, '\u{200B}'..='\u{200F}' | '\u{2060}'..='\u{2064}' | '\u{FEFF}' | '\u{00AD}')
}

fn redact(text: &str, pat: &PiiPattern) -> (String, usize) {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let mut count = 0;
    for m in pat.regex.find_iter(text) {
        if m.start() == m.end() {
            continue;
        }
        if pat.digit_bounded {
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            if before.is_some_and(|c| c.is_ascii_digit())
                || after.is_some_and(|c| c.is_ascii_digit())
            {
                continue;
            }
        }
        out.push_str(&text[last..m.start()]);
        out.push_str(&pat.placeholder);
        last = m.end();
        count += 1;
    }
    out.push_str(&text[last..]);
    (out, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CpaSubject, SourceCategory};
    use proptest::prelude::*;

    fn doc(text: &str) -> RawDocument {
        RawDocument::new(
            "d",
            "",
            SourceCategory::Specialized,
            CpaSubject::Accounting,
            text,
        )
    }

    fn clean(text: &str) -> Cleaned {
        clean_document(&doc(text), &CleanRules::default())
    }

    #[test]
    fn single_email() {
        let c = clean("联系: a@b.com");
        assert_eq!(c.doc.text(), "联系: [EMAIL]");
        assert_eq!(c.redactions, 1);
    }

    #[test]
    fn no_pii_only_whitespace_changes() {
        let c = clean("  资产负债表 \t  balance   sheet\n\n\n现金流量表  ");
        assert_eq!(c.doc.text(), "资产负债表 balance sheet\n现金流量表");
        assert_eq!(c.redactions, 0);
    }

    #[test]
    fn two_emails_one_phone() {
        // Fixture matches: zhang@firm.cn, li.wei@audit.com.cn, 13812345678.
        // The 12-digit invoice number is neither an ID (< 15) nor a phone
        // (mobile match would touch digits).
        let c = clean(
            "请联系 zhang@firm.cn 或 li.wei@audit.com.cn，电话13812345678。发票号 913812345678",
        );
        assert_eq!(c.redactions, 3);
        assert!(c.doc.text().contains("[PHONE]"));
        assert!(c.doc.text().contains("913812345678"));
    }

    #[test]
    fn id_shaped_runs() {
        let c = clean("身份证 11010519491231002X 账号 6222020200112233445");
        assert_eq!(c.doc.text(), "身份证 [ID] 账号 [ID]");
        assert_eq!(c.redactions, 2);
        // 14 digits is below the threshold and not phone-shaped.
        assert_eq!(clean("12345678901234").redactions, 0);
    }

    #[test]
    fn fullwidth_digits_are_normalized_before_matching() {
        let c = clean("手机：１３８１２３４５６７８");
        assert_eq!(c.doc.text(), "手机:[PHONE]");
    }

    #[test]
    fn landline_and_us_style() {
        assert_eq!(clean("电话 010-12345678").doc.text(), "电话 [PHONE]");
        assert_eq!(
            clean("call (555) 123-4567 now").doc.text(),
            "call [PHONE] now"
        );
    }

    #[test]
    fn control_chars_and_zero_width_removed() {
        let c = clean("a\u{0007}b\u{200B}c\r\nd");
        assert_eq!(c.doc.text(), "abc\nd");
        assert!(c.chars_removed >= 3);
    }

    #[test]
    fn emptied_document_is_flagged() {
        let c = clean(" \n\t\u{0000} ");
        assert!(c.is_empty());
        let (docs, report) = clean_corpus(&[doc(" "), doc("x")], &CleanRules::default());
        assert_eq!(docs.len(), 1);
        assert_eq!(report.emptied, 1);
        assert_eq!(report.docs_out, 1);
    }

    #[test]
    fn custom_rule_extends_defaults() {
        let rules = CleanRules::default()
            .with_pattern(PiiPattern::new("name", "张三", "[NAME]", false).unwrap());
        let c = clean_document(&doc("客户张三 a@b.io"), &rules);
        assert_eq!(c.doc.text(), "客户[NAME] [EMAIL]");
        assert_eq!(c.redactions, 2);
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(s in "[a-c0-9@. \\-\n\t()+xX资产]{0,80}") {
            let once = clean(&s);
            let twice = clean_document(&once.doc, &CleanRules::default());
            prop_assert_eq!(once.doc.text(), twice.doc.text());
            prop_assert_eq!(twice.redactions, 0);
        }
    }
}
