//! Overlapping line windows over a document, used as background knowledge
//! for instruction generation.

use serde::{Deserialize, Serialize};

use crate::corpus::{split_lines, CpaSubject, RawDocument};

pub const DEFAULT_WINDOW_LINES: usize = 50;
pub const DEFAULT_STRIDE_LINES: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("window and stride must be positive (window={window}, stride={stride})")]
    ZeroSize { window: usize, stride: usize },
    #[error("stride {stride} exceeds window {window}; lines would be skipped")]
    StrideExceedsWindow { window: usize, stride: usize },
    #[error("document {0:?} has no lines")]
    EmptyDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    size_lines: usize,
    stride_lines: usize,
    pub emit_tail: bool,
}

impl WindowSpec {
    pub fn new(
        size_lines: usize,
        stride_lines: usize,
        emit_tail: bool,
    ) -> Result<Self, ChunkError> {
        if size_lines == 0 || stride_lines == 0 {
            return Err(ChunkError::ZeroSize {
                window: size_lines,
                stride: stride_lines,
            });
        }
        if stride_lines > size_lines {
            return Err(ChunkError::StrideExceedsWindow {
                window: size_lines,
                stride: stride_lines,
            });
        }
        Ok(Self {
            size_lines,
            stride_lines,
            emit_tail,
        })
    }

    pub fn size_lines(&self) -> usize {
        self.size_lines
    }

    pub fn stride_lines(&self) -> usize {
        self.stride_lines
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            size_lines: DEFAULT_WINDOW_LINES,
            stride_lines: DEFAULT_STRIDE_LINES,
            emit_tail: true,
        }
    }
}

/// A window of source lines. `start_line..=end_line` is 0-based inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub start_line: usize,
    pub end_line: usize,
    pub text: String,
    /// Carried from the source document so generated records can be labeled.
    #[serde(default = "default_subject")]
    pub subject: CpaSubject,
}

fn default_subject() -> CpaSubject {
    CpaSubject::Others
}

impl Chunk {
    /// Identifier referenced by generated instruction records.
    pub fn id(&self) -> String {
        format!("{}:{}-{}", self.doc_id, self.start_line, self.end_line)
    }
}

/// Window start positions and (inclusive) ends for a document of
/// `n_lines` lines. Full windows start at 0, s, 2s, ... while they fit;
/// a shorter tail window starting one stride after the last full window
/// covers whatever is left. Documents shorter than the window yield one
/// span over the whole document.
pub fn window_spans(n_lines: usize, spec: &WindowSpec) -> Vec<(usize, usize)> {
    let (w, s) = (spec.size_lines, spec.stride_lines);
    if n_lines == 0 {
        return Vec::new();
    }
    if n_lines <= w {
        return vec![(0, n_lines - 1)];
    }
    let mut spans = Vec::new();
    let mut start = 0;
    while start + w <= n_lines {
        spans.push((start, start + w - 1));
        start += s;
    }
    let last_end = spans.last().map(|&(_, e)| e).unwrap_or(0);
    if spec.emit_tail && last_end < n_lines - 1 {
        spans.push((start, n_lines - 1));
    }
    spans
}

pub fn chunk_document(doc: &RawDocument, spec: &WindowSpec) -> Result<Vec<Chunk>, ChunkError> {
    let lines = split_lines(doc.text());
    if lines.is_empty() {
        return Err(ChunkError::EmptyDocument(doc.id.clone()));
    }
    Ok(window_spans(lines.len(), spec)
        .into_iter()
        .map(|(start, end)| Chunk {
            doc_id: doc.id.clone(),
            start_line: start,
            end_line: end,
            text: lines[start..=end].join("\n"),
            subject: doc.subject,
        })
        .collect())
}
