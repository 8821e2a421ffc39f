use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use walkdir::WalkDir;

use super::{CpaSubject, RawDocument, SourceCategory};

/// A problem with one file (or one record line) that did not stop the
/// rest of the directory from being ingested.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct IngestError {
    pub path: String,
    /// 1-based line number for record files.
    pub line: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub documents: Vec<RawDocument>,
    pub errors: Vec<IngestError>,
}

#[derive(Deserialize)]
struct LineRecord {
    text: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    category: Option<SourceCategory>,
    #[serde(default)]
    subject: Option<CpaSubject>,
}

/// Walk `root` in sorted path order. Files ending in `.jsonl` yield one
/// document per line record, everything else one document per file.
///
/// Ids are the `/`-separated path relative to `root`, suffixed `#<line index>`
/// for record files, so they are stable across runs and machines. Records may
/// override `category` and `subject`.
pub fn ingest_directory(
    root: &Path,
    category: SourceCategory,
    subject: CpaSubject,
) -> io::Result<IngestOutcome> {
    let meta = fs::metadata(root)?;
    if !meta.is_dir() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("{} is not a directory", root.display()),
        ));
    }
    fs::read_dir(root)?;

    let mut out = IngestOutcome::default();
    let walker = WalkDir::new(root).sort_by_file_name().follow_links(false);
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                out.errors.push(IngestError {
                    path: e
                        .path()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default(),
                    line: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = relative_id(root, entry.path());
        let bytes = match fs::read(entry.path()) {
            Ok(b) => b,
            Err(e) => {
                out.errors.push(IngestError {
                    path: rel,
                    line: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let text = match String::from_utf8(bytes) {
            Ok(t) => t,
            Err(e) => {
                out.errors.push(IngestError {
                    path: rel,
                    line: None,
                    reason: format!("invalid UTF-8 at byte {}", e.utf8_error().valid_up_to()),
                });
                continue;
            }
        };
        let uri = entry.path().display().to_string();
        if is_record_file(entry.path()) {
            ingest_records(&rel, &uri, &text, category, subject, &mut out);
        } else {
            out.documents
                .push(RawDocument::new(rel, uri, category, subject, text));
        }
    }
    Ok(out)
}

fn ingest_records(
    rel: &str,
    uri: &str,
    text: &str,
    category: SourceCategory,
    subject: CpaSubject,
    out: &mut IngestOutcome,
) {
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LineRecord>(line) {
            Ok(rec) => out.documents.push(RawDocument::new(
                rec.id.unwrap_or_else(|| format!("{rel}#{idx}")),
                uri,
                rec.category.unwrap_or(category),
                rec.subject.unwrap_or(subject),
                rec.text,
            )),
            Err(e) => out.errors.push(IngestError {
                path: rel.to_string(),
                line: Some(idx + 1),
                reason: e.to_string(),
            }),
        }
    }
}

fn is_record_file(p: &Path) -> bool {
    p.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl"))
}

fn relative_id(root: &Path, p: &Path) -> String {
    let rel: PathBuf = p
        .strip_prefix(root)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| p.to_path_buf());
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(dir: &Path) -> IngestOutcome {
        ingest_directory(dir, SourceCategory::Specialized, CpaSubject::Accounting).unwrap()
    }

    #[test]
    fn three_files_three_docs_stable_ids() {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in [("b.txt", "beta"), ("a.txt", "alpha"), ("sub/c.md", "gamma")] {
            let p = dir.path().join(name);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, body).unwrap();
        }
        let first = ingest(dir.path());
        let second = ingest(dir.path());
        let ids: Vec<_> = first.documents.iter().map(|d| d.id.clone()).collect();
        assert_eq!(ids, vec!["a.txt", "b.txt", "sub/c.md"]);
        assert_eq!(first.documents, second.documents);
        assert!(first.errors.is_empty());
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let out = ingest(dir.path());
        assert!(out.documents.is_empty());
        assert!(out.errors.is_empty());
    }

    #[test]
    fn invalid_bytes_reported_per_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("1.txt"), "会计").unwrap();
        fs::write(dir.path().join("2.txt"), [0x61, 0xff, 0xfe, 0x62]).unwrap();
        fs::write(dir.path().join("3.txt"), "审计").unwrap();
        let out = ingest(dir.path());
        assert_eq!(out.documents.len(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].path, "2.txt");
        assert!(out.errors[0].reason.contains("byte 1"));
    }

    #[test]
    fn record_files_one_doc_per_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("r.jsonl"),
            "{\"text\":\"x\"}\n\n{\"text\":\"y\",\"category\":\"related_field\",\"subject\":\"tax_laws\"}\nnot json\n",
        )
        .unwrap();
        let out = ingest(dir.path());
        let ids: Vec<_> = out.documents.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["r.jsonl#0", "r.jsonl#2"]);
        assert_eq!(out.documents[1].category, SourceCategory::RelatedField);
        assert_eq!(out.documents[1].subject, CpaSubject::TaxLaws);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, Some(4));
    }

    #[test]
    fn missing_root_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ingest_directory(
            &dir.path().join("nope"),
            SourceCategory::General,
            CpaSubject::Others
        )
        .is_err());
    }
}
