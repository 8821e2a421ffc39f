//! Word-count histograms and subject distributions for instruction sets,
//! emitted as CSV tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::CpaSubject;
use crate::selfinstruct::InstructionRecord;
use crate::text::is_cjk;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("no records to summarize")]
    Empty,
    #[error("unknown field {0:?}; expected instruction, input or output")]
    UnknownField(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Instruction,
    Input,
    Output,
}

impl Field {
    pub fn of<'a>(&self, r: &'a InstructionRecord) -> &'a str {
        match self {
            Field::Instruction => &r.instruction,
            Field::Input => &r.input,
            Field::Output => &r.output,
        }
    }
}

impl FromStr for Field {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "instruction" => Ok(Field::Instruction),
            "input" => Ok(Field::Input),
            "output" => Ok(Field::Output),
            _ => Err(StatsError::UnknownField(s.to_string())),
        }
    }
}

/// Each CJK character counts as one word; every other maximal run of
/// non-whitespace, non-CJK characters counts as one word if it contains a
/// letter or digit.
pub fn word_count(text: &str) -> usize {
    let mut count = 0;
    let mut in_run = false;
    let mut run_has_alnum = false;
    let close = |in_run: &mut bool, has: &mut bool, count: &mut usize| {
        if *in_run && *has {
            *count += 1;
        }
        *in_run = false;
        *has = false;
    };
    for c in text.chars() {
        if is_cjk(c) {
            close(&mut in_run, &mut run_has_alnum, &mut count);
            count += 1;
        } else if c.is_whitespace() {
            close(&mut in_run, &mut run_has_alnum, &mut count);
        } else {
            in_run = true;
            run_has_alnum |= c.is_alphanumeric();
        }
    }
    close(&mut in_run, &mut run_has_alnum, &mut count);
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub word_count: usize,
    pub frequency: usize,
    pub log10_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub field: Field,
    /// Sorted by word count; only non-empty bins.
    pub bins: Vec<Bin>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.frequency).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("word_count,frequency,log10_frequency\n");
        for b in &self.bins {
            let _ = writeln!(
                s,
                "{},{},{:.6}",
                b.word_count, b.frequency, b.log10_frequency
            );
        }
        s
    }
}

pub fn histogram(records: &[InstructionRecord], field: Field) -> Result<Histogram, StatsError> {
    histogram_of(records.iter().map(|r| field.of(r)), field)
}

/// Histogram over arbitrary texts, labelled with `field`.
pub fn histogram_of<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    field: Field,
) -> Result<Histogram, StatsError> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in texts {
        *counts.entry(word_count(t)).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(StatsError::Empty);
    }
    let bins = counts
        .into_iter()
        .map(|(word_count, frequency)| Bin {
            word_count,
            frequency,
            log10_frequency: (frequency as f64).log10(),
        })
        .collect();
    Ok(Histogram { field, bins })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectShare {
    pub subject: CpaSubject,
    pub count: usize,
    pub percent: f64,
}

/// Count and percentage per subject, in subject order, omitting subjects
/// with no records.
pub fn category_distribution(
    records: &[InstructionRecord],
) -> Result<Vec<SubjectShare>, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut counts: BTreeMap<CpaSubject, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.subject).or_default() += 1;
    }
    let n = records.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(subject, count)| SubjectShare {
            subject,
            count,
            percent: 100.0 * count as f64 / n,
        })
        .collect())
}

pub fn distribution_csv(rows: &[SubjectShare]) -> String {
    let mut s = String::from("subject,count,percent\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.4}", r.subject, r.count, r.percent);
    }
    s
}
