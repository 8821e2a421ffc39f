//! `ledgerlm`: command-line front end for the dataset pipeline, the
//! quantization tools and the training-config bundle.
//!
//! Every subcommand reads and writes the line-record formats of
//! `ledgerlm-core`. Output goes to `--output` or stdout; a one-line JSON
//! summary goes to stdout when records are written to a file. Failures exit
//! nonzero with a JSON object on stderr.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ledgerlm_core::chunker::{chunk_document, Chunk, WindowSpec};
use ledgerlm_core::config::{emit_config, validate_config};
use ledgerlm_core::corpus::{
    clean_corpus, corpus_stats, dedup_corpus, ingest_directory, CleanRules, CpaSubject,
    RawDocument, SourceCategory,
};
use ledgerlm_core::jsonl::{read_jsonl, to_jsonl_string};
use ledgerlm_core::llmclient::{
    ClientPolicy, CompletionParams, HttpTransport, LlmClient, MockTransport, Transport,
};
use ledgerlm_core::mixer::{mix, split, MixSpec, MixUnit, SplitSpec};
use ledgerlm_core::quant::{
    dequantize, finite_difference_check, gaussian_values, quant_error_stats, quantize_blockwise,
    random_layer, BlockSpec, Codebook, QuantizedTensor,
};
use ledgerlm_core::selfinstruct::{
    build_prompt, dangling_chunk_refs, dedup_instructions, ingest_exam_records, parse_generation,
    validate_record, InstructionRecord, PromptRequest, DEFAULT_INSTRUCTIONS_PER_CHUNK,
    DEFAULT_INSTRUCTION_SIMILARITY,
};
use ledgerlm_core::stats::{category_distribution, distribution_csv, histogram, Field};

#[derive(Parser)]
#[command(
    name = "ledgerlm",
    version,
    about = "Accounting-LLM data factory and NormalFloat/LoRA numerics"
)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Use the offline mock instead of the completion endpoint.
    #[arg(long, global = true)]
    mock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a directory tree into document records.
    Ingest(IngestArgs),
    /// Normalize text and redact PII.
    Clean(CleanArgs),
    /// Remove exact and near-duplicate documents or instruction records.
    Dedup(DedupArgs),
    /// Cut documents into overlapping line windows.
    Chunk(ChunkArgs),
    /// Generate instruction records from chunks.
    Generate(GenerateArgs),
    /// Check instruction records, or load exam records.
    ValidateRecords(ValidateRecordsArgs),
    /// Mix two pre-training pools (default 7:3).
    MixCpt(MixArgs),
    /// Mix domain and general instruction pools (default 80:20).
    MixSft(MixArgs),
    /// Split records into train and validation sets.
    Split(SplitArgs),
    /// Quantize a tensor into the NFQT container.
    Quantize(QuantizeArgs),
    /// Reconstruct a tensor from an NFQT container.
    Dequantize(DequantizeArgs),
    /// Check quantized-linear forward and adapter gradients on random layers.
    QlinearCheck(QlinearCheckArgs),
    /// Word-count histogram or subject distribution of a record file.
    Stats(StatsArgs),
    /// Write the training config with optional overrides.
    EmitConfig(EmitConfigArgs),
    /// Check a training config file.
    ValidateConfig(ValidateConfigArgs),
    /// Per category/subject counts and bytes of a document file.
    CorpusStats(InOut),
}

#[derive(Args)]
struct InOut {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    io: InOut,
    #[arg(long)]
    category: SourceCategory,
    #[arg(long, default_value = "others")]
    subject: CpaSubject,
}

#[derive(Args)]
struct CleanArgs {
    #[command(flatten)]
    io: InOut,
    /// Write the clean report here as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DedupKind {
    Docs,
    Records,
}

#[derive(Args)]
struct DedupArgs {
    #[command(flatten)]
    io: InOut,
    #[arg(long, value_enum, default_value = "docs")]
    kind: DedupKind,
    /// Jaccard threshold; defaults to 0.9 for documents and 0.7 for records.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ChunkArgs {
    /// Document records (`.jsonl`) or a plain text file.
    #[command(flatten)]
    io: InOut,
    #[arg(long, default_value_t = 50)]
    window: usize,
    #[arg(long, default_value_t = 30)]
    stride: usize,
    #[arg(long)]
    no_tail: bool,
    /// Subject for a plain text input.
    #[arg(long, default_value = "others")]
    subject: CpaSubject,
}

#[derive(Args)]
struct GenerateArgs {
    /// Chunk records.
    #[command(flatten)]
    io: InOut,
    #[arg(long, default_value_t = DEFAULT_INSTRUCTIONS_PER_CHUNK)]
    count: usize,
    #[arg(long, default_value = "https://api.openai.com/v1")]
    base_url: String,
    #[arg(long, default_value = "gpt-4o-mini")]
    model: String,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    #[arg(long, default_value_t = 4096)]
    max_output_tokens: u32,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 4)]
    max_inflight: usize,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long)]
    requests_per_minute: Option<u32>,
    /// Keep records that fail validation.
    #[arg(long)]
    keep_invalid: bool,
}

#[derive(Args)]
struct ValidateRecordsArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Chunk file used to check that every generated record points at a chunk.
    #[arg(long)]
    chunks: Option<PathBuf>,
    /// Treat the input as exam records (loose keys) and write canonical ones.
    #[arg(long)]
    exam: bool,
    #[arg(long, default_value = "others")]
    subject: CpaSubject,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MixArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long, default_value = "count")]
    unit: MixUnit,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    fraction: f64,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    validation: PathBuf,
}

#[derive(Args)]
struct QuantizeArgs {
    /// JSON array of numbers. Without it, `--random N` Gaussian values are used.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long)]
    random: Option<usize>,
    /// Comma-separated dimensions; defaults to a flat vector.
    #[arg(long, value_delimiter = ',')]
    shape: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    bits: u8,
    #[arg(long, default_value_t = 64)]
    block_size: usize,
    #[arg(long, default_value_t = 256)]
    group_size: usize,
    #[arg(long, default_value_t = 8)]
    const_bits: u8,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct DequantizeArgs {
    #[command(flatten)]
    io: InOut,
}

#[derive(Args)]
struct QlinearCheckArgs {
    #[arg(long, default_value_t = 20)]
    cases: u64,
    #[arg(long, default_value_t = 8)]
    bits: u8,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    io: InOut,
    #[arg(long, default_value = "output")]
    field: Field,
    /// Report the subject distribution instead of a histogram.
    #[arg(long)]
    categories: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct EmitConfigArgs {
    /// `key=value`, repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateConfigArgs {
    #[arg(long, short)]
    input: PathBuf,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing stdout"),
    }
}

fn summary(path: Option<&Path>, value: serde_json::Value) {
    if path.is_some() {
        println!("{value}");
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

fn lines_text(lines: &[String]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

fn ingest(a: IngestArgs) -> Result<()> {
    let out = ingest_directory(&a.io.input, a.category, a.subject)
        .with_context(|| format!("reading {}", a.io.input.display()))?;
    for e in &out.errors {
        eprintln!(
            "{}",
            json!({"warning": "ingest", "path": e.path, "line": e.line, "reason": e.reason})
        );
    }
    write_out(a.io.output.as_deref(), &to_jsonl_string(&out.documents))?;
    summary(
        a.io.output.as_deref(),
        json!({"documents": out.documents.len(), "errors": out.errors.len()}),
    );
    Ok(())
}

fn clean(a: CleanArgs) -> Result<()> {
    let docs: Vec<RawDocument> = read_jsonl(&a.io.input)?;
    let (docs, report) = clean_corpus(&docs, &CleanRules::default());
    write_out(a.io.output.as_deref(), &to_jsonl_string(&docs))?;
    if let Some(p) = &a.report {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    summary(a.io.output.as_deref(), serde_json::to_value(&report)?);
    Ok(())
}

fn dedup(a: DedupArgs) -> Result<()> {
    match a.kind {
        DedupKind::Docs => {
            let docs: Vec<RawDocument> = read_jsonl(&a.io.input)?;
            let (kept, report) = dedup_corpus(&docs, a.threshold.unwrap_or(0.9))?;
            write_out(a.io.output.as_deref(), &to_jsonl_string(&kept))?;
            if let Some(p) = &a.report {
                fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            summary(a.io.output.as_deref(), serde_json::to_value(&report)?);
        }
        DedupKind::Records => {
            let recs: Vec<InstructionRecord> = read_jsonl(&a.io.input)?;
            let kept =
                dedup_instructions(&recs, a.threshold.unwrap_or(DEFAULT_INSTRUCTION_SIMILARITY))?;
            write_out(a.io.output.as_deref(), &to_jsonl_string(&kept))?;
            summary(
                a.io.output.as_deref(),
                json!({"records_in": recs.len(), "records_out": kept.len()}),
            );
        }
    }
    Ok(())
}

fn chunk(a: ChunkArgs) -> Result<()> {
    let spec = WindowSpec::new(a.window, a.stride, !a.no_tail)?;
    let docs: Vec<RawDocument> = if a.io.input.extension().is_some_and(|e| e == "jsonl") {
        read_jsonl(&a.io.input)?
    } else {
        let text = fs::read_to_string(&a.io.input)
            .with_context(|| format!("reading {}", a.io.input.display()))?;
        let id =
            a.io.input
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
        vec![RawDocument::new(
            id,
            a.io.input.display().to_string(),
            SourceCategory::Specialized,
            a.subject,
            text,
        )]
    };
    let mut chunks: Vec<Chunk> = Vec::new();
    for d in &docs {
        chunks.extend(chunk_document(d, &spec).with_context(|| format!("document {}", d.id))?);
    }
    write_out(a.io.output.as_deref(), &to_jsonl_string(&chunks))?;
    summary(
        a.io.output.as_deref(),
        json!({"documents": docs.len(), "chunks": chunks.len()}),
    );
    Ok(())
}

fn generate_with<T: Transport>(
    client: LlmClient<T>,
    a: &GenerateArgs,
    chunks: &[Chunk],
) -> Result<()> {
    let params = CompletionParams {
        model_name: a.model.clone(),
        temperature: a.temperature,
        max_output_tokens: a.max_output_tokens,
        timeout: Duration::from_secs(a.timeout_secs),
    };
    let prompts: Vec<String> = chunks
        .iter()
        .map(|c| build_prompt(&PromptRequest::new(c).with_count(a.count)))
        .collect();
    let replies = client.complete_all(&prompts, &params);

    let (mut records, mut rejected, mut invalid, mut failed) = (Vec::new(), 0usize, 0usize, 0usize);
    for (c, reply) in chunks.iter().zip(replies) {
        let id = c.id();
        let raw = match reply {
            Ok(r) => r,
            Err(e) => {
                failed += 1;
                eprintln!(
                    "{}",
                    json!({"warning": "completion", "chunk": id, "reason": e.to_string()})
                );
                continue;
            }
        };
        match parse_generation(&raw, &id, c.subject) {
            Ok(out) => {
                for r in &out.rejected {
                    eprintln!(
                        "{}",
                        json!({"warning": "rejected", "chunk": id, "index": r.index, "reason": r.reason})
                    );
                }
                rejected += out.rejected.len();
                for rec in out.records {
                    let v = validate_record(&rec);
                    if v.is_empty() || a.keep_invalid {
                        records.push(rec);
                    } else {
                        invalid += 1;
                    }
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!(
                    "{}",
                    json!({"warning": "unparsable", "chunk": id, "offset": e.offset(), "reason": e.to_string()})
                );
            }
        }
    }
    write_out(a.io.output.as_deref(), &to_jsonl_string(&records))?;
    summary(
        a.io.output.as_deref(),
        json!({"chunks": chunks.len(), "records": records.len(), "rejected": rejected, "invalid": invalid, "failed_chunks": failed}),
    );
    if failed == chunks.len() && !chunks.is_empty() {
        bail!("no chunk produced a usable reply");
    }
    Ok(())
}

fn generate(a: GenerateArgs, seed: u64, mock: bool) -> Result<()> {
    let chunks: Vec<Chunk> = read_jsonl(&a.io.input)?;
    let policy = ClientPolicy {
        max_retries: a.max_retries,
        max_inflight: a.max_inflight,
        requests_per_minute: a.requests_per_minute,
        ..ClientPolicy::default()
    };
    if mock {
        generate_with(
            LlmClient::new(MockTransport::synthetic(seed), policy, None),
            &a,
            &chunks,
        )
    } else {
        generate_with(
            LlmClient::from_env(HttpTransport::new(&a.base_url), policy),
            &a,
            &chunks,
        )
    }
}

fn validate_records(a: ValidateRecordsArgs) -> Result<()> {
    if a.exam {
        let out = ingest_exam_records(&a.input, a.subject)
            .with_context(|| format!("reading {}", a.input.display()))?;
        write_out(a.output.as_deref(), &to_jsonl_string(&out.records))?;
        let warnings: Vec<_> = out
            .warnings
            .iter()
            .map(|(line, v)| json!({"line": line, "violations": v}))
            .collect();
        let report =
            json!({"records": out.records.len(), "errors": out.errors, "warnings": warnings});
        if out.errors.is_empty() {
            summary(a.output.as_deref(), report);
            return Ok(());
        }
        bail!("{report}");
    }
    let recs: Vec<InstructionRecord> = read_jsonl(&a.input)?;
    let mut problems: Vec<serde_json::Value> = recs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let v = validate_record(r);
            (!v.is_empty()).then(|| json!({"line": i + 1, "violations": v}))
        })
        .collect();
    if let Some(p) = &a.chunks {
        let chunks: Vec<Chunk> = read_jsonl(p)?;
        let ids = chunks.iter().map(Chunk::id).collect();
        for i in dangling_chunk_refs(&recs, &ids) {
            problems.push(json!({"line": i + 1, "violations": [{"kind": "dangling_chunk_ref"}]}));
        }
    }
    let report = json!({"records": recs.len(), "invalid": problems.len(), "problems": problems});
    if let Some(out) = &a.output {
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if problems.is_empty() {
        println!("{}", json!({"records": recs.len(), "invalid": 0}));
        Ok(())
    } else {
        bail!("{report}")
    }
}

fn mix_cmd(a: MixArgs, seed: u64, default_ratio: &str) -> Result<()> {
    let pool_a = read_lines(&a.a)?;
    let pool_b = read_lines(&a.b)?;
    let spec = MixSpec::parse(a.ratio.as_deref().unwrap_or(default_ratio), a.unit, seed)?;
    let out = mix(&pool_a, &pool_b, &spec)?;
    write_out(a.output.as_deref(), &lines_text(&out.items))?;
    summary(
        a.output.as_deref(),
        json!({"ratio": spec.to_string(), "taken_a": out.taken_a, "taken_b": out.taken_b,
               "bytes_a": out.weight_a, "bytes_b": out.weight_b}),
    );
    Ok(())
}

fn split_cmd(a: SplitArgs, seed: u64) -> Result<()> {
    let lines = read_lines(&a.input)?;
    let (train, val) = split(&lines, &SplitSpec::new(a.fraction, seed)?)?;
    fs::write(&a.train, lines_text(&train))?;
    fs::write(&a.validation, lines_text(&val))?;
    println!("{}", json!({"train": train.len(), "validation": val.len()}));
    Ok(())
}

fn quantize_cmd(a: QuantizeArgs, seed: u64) -> Result<()> {
    let values: Vec<f32> = match (&a.input, a.random) {
        (Some(p), _) => serde_json::from_str(&fs::read_to_string(p)?)
            .context("input must be a JSON array of numbers")?,
        (None, Some(n)) => gaussian_values(seed, n),
        (None, None) => bail!("give --input or --random"),
    };
    let shape = if a.shape.is_empty() {
        vec![values.len()]
    } else {
        a.shape.clone()
    };
    let cb = Codebook::normal_float(a.bits)?;
    let spec = BlockSpec::new(a.block_size, a.group_size, a.const_bits)?;
    let qt = quantize_blockwise(&values, &shape, &spec, &cb)?;
    let bytes = qt.to_bytes();
    fs::write(&a.output, &bytes)?;
    let err = quant_error_stats(&values, &qt, &cb)?;
    println!(
        "{}",
        json!({"elements": values.len(), "bytes": bytes.len(), "blocks": qt.block_count(), "groups": qt.group_count(),
               "rms_error": err.rms_error, "max_abs_error": err.max_abs_error})
    );
    Ok(())
}

fn dequantize_cmd(a: DequantizeArgs) -> Result<()> {
    let bytes = fs::read(&a.io.input)?;
    let qt = QuantizedTensor::from_bytes(&bytes)?;
    let cb = Codebook::normal_float(qt.bits())?;
    let values = dequantize(&qt, &cb)?;
    write_out(
        a.io.output.as_deref(),
        &(json!({"shape": qt.shape(), "values": values}).to_string() + "\n"),
    )
}

fn qlinear_check(a: QlinearCheckArgs, seed: u64) -> Result<()> {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for case in 0..a.cases {
        let s = seed.wrapping_add(case.wrapping_mul(0x9E37_79B9));
        let in_f = 2 + (s % 7) as usize;
        let out_f = 2 + (s / 7 % 7) as usize;
        let rank = 1 + (s / 49 % 4) as usize;
        let (layer, x) = random_layer(s, 3, in_f, out_f, rank, a.bits)?;
        let check = finite_difference_check(&layer, x.view(), 1e-3)?;
        let ok = check.max_rel_error() < a.tolerance;
        failures += usize::from(!ok);
        worst = worst.max(check.max_rel_error());
        println!(
            "{}",
            json!({"case": case, "shape": [in_f, out_f], "rank": rank, "max_rel_error": check.max_rel_error(), "pass": ok})
        );
    }
    println!(
        "{}",
        json!({"cases": a.cases, "failures": failures, "worst_rel_error": worst})
    );
    if failures > 0 {
        bail!(
            "{failures} of {} gradient checks exceeded {}",
            a.cases,
            a.tolerance
        );
    }
    Ok(())
}

fn stats_cmd(a: StatsArgs) -> Result<()> {
    let recs: Vec<InstructionRecord> = read_jsonl(&a.io.input)?;
    let text = if a.categories {
        let rows = category_distribution(&recs)?;
        match a.format {
            Format::Csv => distribution_csv(&rows),
            Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
        }
    } else {
        let h = histogram(&recs, a.field)?;
        match a.format {
            Format::Csv => h.to_csv(),
            Format::Json => serde_json::to_string_pretty(&h)? + "\n",
        }
    };
    write_out(a.io.output.as_deref(), &text)
}

fn corpus_stats_cmd(a: InOut) -> Result<()> {
    let docs: Vec<RawDocument> = read_jsonl(&a.input)?;
    write_out(a.output.as_deref(), &corpus_stats(&docs).to_csv())
}

fn run(cli: Cli) -> Result<()> {
    let Cli {
        seed,
        mock,
        command,
    } = cli;
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Clean(a) => clean(a),
        Command::Dedup(a) => dedup(a),
        Command::Chunk(a) => chunk(a),
        Command::Generate(a) => generate(a, seed, mock),
        Command::ValidateRecords(a) => validate_records(a),
        Command::MixCpt(a) => mix_cmd(a, seed, "7:3"),
        Command::MixSft(a) => mix_cmd(a, seed, "80:20"),
        Command::Split(a) => split_cmd(a, seed),
        Command::Quantize(a) => quantize_cmd(a, seed),
        Command::Dequantize(a) => dequantize_cmd(a),
        Command::QlinearCheck(a) => qlinear_check(a, seed),
        Command::Stats(a) => stats_cmd(a),
        Command::EmitConfig(a) => {
            let text = emit_config(&a.overrides)?;
            write_out(a.output.as_deref(), &text)
        }
        Command::ValidateConfig(a) => {
            let text = fs::read_to_string(&a.input)
                .with_context(|| format!("reading {}", a.input.display()))?;
            match validate_config(&text) {
                Ok(cfg) => {
                    println!("{}", serde_json::to_string(&cfg)?);
                    Ok(())
                }
                Err(e) => bail!("{}", json!({"violations": e.0})),
            }
        }
        Command::CorpusStats(a) => corpus_stats_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            e.exit()
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": e.kind().to_string(), "kind": "usage", "detail": e.to_string().trim()})
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": format!("{e:#}"), "kind": "runtime"}));
            ExitCode::FAILURE
        }
    }
}
