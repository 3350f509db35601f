//! Command implementations behind the `lmseg` binary: prepare-data, train,
//! segment, evaluate, compare.
//!
//! Exit-code contract: 0 success, 1 usage error, 2 data error, 3 internal
//! error. Every command is reproducible: identical inputs and seed give
//! byte-identical outputs.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{self, RawDocument};
use crate::endpoint::{self, WordEvent};
use crate::fusion::{self, Policy, PolicyMode, Segment, SegmenterTrace};
use crate::metrics::{self, BoundarySet};
use crate::tagger::{self, Hyperparams, TaggerModel};
use crate::DefaultScalar;

/// Errors carrying the exit-code classification.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected text or json)")),
        }
    }
}

/// Runtime configuration: config-file values overridden by CLI flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: PolicyMode,
    pub silence_threshold_ms: u64,
    pub hard_timeout_ms: u64,
    pub lm_threshold: f64,
    pub lookahead_wait_ms: Option<u64>,
    pub model_path: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: PolicyMode::V1,
            silence_threshold_ms: 500,
            hard_timeout_ms: 2000,
            lm_threshold: 0.5,
            lookahead_wait_ms: None,
            model_path: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parse a `key=value` config file. Unknown keys are errors; blank lines
    /// and `#` comments are ignored.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config {} line {}: expected key=value",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| {
                CliError::Usage(format!(
                    "config {} line {}: {key}: {e}",
                    path.display(),
                    lineno + 1
                ))
            };
            match key {
                "mode" => cfg.mode = value.parse().map_err(|e: String| bad(&e))?,
                "silence_threshold_ms" => {
                    cfg.silence_threshold_ms = value.parse().map_err(|e| bad(&e))?
                }
                "hard_timeout_ms" => cfg.hard_timeout_ms = value.parse().map_err(|e| bad(&e))?,
                "lm_threshold" => cfg.lm_threshold = value.parse().map_err(|e| bad(&e))?,
                "lookahead_wait_ms" => {
                    cfg.lookahead_wait_ms = Some(value.parse().map_err(|e| bad(&e))?)
                }
                "model_path" => cfg.model_path = Some(PathBuf::from(value)),
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                other => {
                    return Err(CliError::Usage(format!(
                        "config {} line {}: unknown key '{other}'",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn policy(&self) -> Policy {
        Policy {
            mode: self.mode,
            silence_threshold_ms: self.silence_threshold_ms,
            hard_timeout_ms: self.hard_timeout_ms,
            lm_threshold: self.lm_threshold,
            lookahead_wait_ms: self.lookahead_wait_ms,
        }
    }
}

/// Read a corpus: a directory of `.txt` files (one document per file) or a
/// JSON Lines file of `{"doc_id","text"}`.
pub fn read_corpus(input: &Path) -> Result<Vec<RawDocument>, CliError> {
    let mut docs = Vec::new();
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |x| x == "txt"))
            .collect();
        paths.sort();
        for p in paths {
            let text = fs::read_to_string(&p).map_err(data_err)?;
            docs.push(RawDocument {
                doc_id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                text,
            });
        }
    } else {
        let text = fs::read_to_string(input)
            .map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: RawDocument = serde_json::from_str(line).map_err(|e| {
                CliError::Data(format!("{} line {}: {e}", input.display(), lineno + 1))
            })?;
            docs.push(doc);
        }
    }
    Ok(docs)
}

/// `prepare-data`: corpus in, JSONL training examples out, stats printed.
pub fn cmd_prepare_data(
    input: &Path,
    out: &Path,
    lookahead: bool,
    format: OutputFormat,
    mut stdout: impl Write,
) -> Result<(), CliError> {
    let docs = read_corpus(input)?;
    let (examples, stats) = corpus::generate_examples(&docs, lookahead);
    let file = fs::File::create(out).map_err(data_err)?;
    corpus::write_examples(std::io::BufWriter::new(file), &examples).map_err(data_err)?;
    match format {
        OutputFormat::Json => {
            let line = serde_json::to_string(&stats).map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(stdout, "{line}").map_err(data_err)?;
        }
        OutputFormat::Text => {
            writeln!(stdout, "documents:            {}", stats.documents).map_err(data_err)?;
            writeln!(stdout, "sentences kept:       {}", stats.sentences_kept).map_err(data_err)?;
            writeln!(stdout, "rejected bad_terminal: {}", stats.rejected_bad_terminal)
                .map_err(data_err)?;
            writeln!(stdout, "rejected forbidden_punct: {}", stats.rejected_forbidden_punct)
                .map_err(data_err)?;
            writeln!(stdout, "rejected empty:       {}", stats.rejected_empty).map_err(data_err)?;
            writeln!(stdout, "full examples:        {}", stats.full_examples).map_err(data_err)?;
            writeln!(stdout, "truncated examples:   {}", stats.truncated_examples)
                .map_err(data_err)?;
            writeln!(stdout, "lookahead examples:   {}", stats.lookahead_examples)
                .map_err(data_err)?;
        }
    }
    if examples.is_empty() {
        writeln!(stdout, "warning: no examples produced").map_err(data_err)?;
    }
    Ok(())
}

/// `train`: examples JSONL in, model file plus CSV training log out.
#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    examples_path: &Path,
    out_model: &Path,
    hp: &Hyperparams,
    vocab_size: usize,
    min_frequency: u64,
    lookahead: bool,
    seed: u64,
    mut stdout: impl Write,
) -> Result<(), CliError> {
    let file = fs::File::open(examples_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", examples_path.display())))?;
    let examples = corpus::read_examples(BufReader::new(file)).map_err(data_err)?;
    let vocab = tagger::build_vocab(&examples, vocab_size, min_frequency).map_err(data_err)?;
    let (model, log) =
        tagger::train::<DefaultScalar>(&examples, &vocab, hp, lookahead, seed).map_err(|e| {
            match e {
                tagger::TaggerError::NonFiniteLoss { .. } => CliError::Internal(e.to_string()),
                other => CliError::Data(other.to_string()),
            }
        })?;
    model
        .save(out_model)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let log_path = out_model.with_extension("log.csv");
    let log_file = fs::File::create(&log_path).map_err(data_err)?;
    log.write_csv(std::io::BufWriter::new(log_file)).map_err(data_err)?;
    let last = log.epochs.last();
    writeln!(
        stdout,
        "trained {} epochs (loss {:.6}), model {} log {}",
        log.epochs.len(),
        last.map_or(f64::NAN, |e| e.train_loss),
        out_model.display(),
        log_path.display()
    )
    .map_err(data_err)?;
    Ok(())
}

/// Segment record as written to JSON Lines output.
#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub tokens: Vec<String>,
    pub start_ms: u64,
    pub end_ms: u64,
    pub boundary_index: usize,
    pub decision: String,
    pub p_eos: Option<f64>,
    pub latency_ms: u64,
}

impl SegmentRecord {
    pub fn from_segment(s: &Segment) -> Self {
        SegmentRecord {
            tokens: s.tokens.iter().map(|w| w.word.clone()).collect(),
            start_ms: s.tokens.first().map_or(0, |w| w.start_ms),
            end_ms: s.tokens.last().map_or(0, |w| w.end_ms),
            boundary_index: s.boundary_index,
            decision: format!("{:?}", s.decision).to_lowercase(),
            p_eos: s.p_eos_at_boundary,
            latency_ms: s.decision_latency_ms,
        }
    }
}

pub fn write_segments(path: &Path, segments: &[Segment]) -> Result<(), CliError> {
    let mut out = String::new();
    for s in segments {
        let rec = SegmentRecord::from_segment(s);
        out.push_str(&serde_json::to_string(&rec).map_err(|e| CliError::Internal(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(data_err)
}

fn write_trace(path_base: &Path, trace: &SegmenterTrace) -> Result<(), CliError> {
    let mut jsonl = String::new();
    let mut text = String::new();
    for e in &trace.entries {
        jsonl.push_str(&serde_json::to_string(e).map_err(|x| CliError::Internal(x.to_string()))?);
        jsonl.push('\n');
        text.push_str(&format!(
            "candidate {:?} after token {} (silence {}ms, fired {}ms): p_eos={} verdict={:?} decided_at={}ms\n",
            e.candidate.kind,
            e.candidate.after_token_index,
            e.candidate.silence_ms,
            e.candidate.fired_at_ms,
            e.p_eos.map_or("-".to_string(), |p| format!("{p:.4}")),
            e.verdict,
            e.decided_at_ms,
        ));
    }
    fs::write(path_base.with_extension("trace.jsonl"), jsonl).map_err(data_err)?;
    fs::write(path_base.with_extension("trace.txt"), text).map_err(data_err)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<TaggerModel<f32>, CliError> {
    TaggerModel::<f32>::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// `segment`: word-event stream in, segment JSONL out (plus optional trace).
pub fn cmd_segment(
    stream_path: &Path,
    cfg: &RunConfig,
    out: &Path,
    trace: bool,
    mut stdout: impl Write,
) -> Result<(), CliError> {
    let file = fs::File::open(stream_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", stream_path.display())))?;
    let csv_format = stream_path.extension().map_or(false, |x| x == "csv");
    let stream = endpoint::read_word_events(BufReader::new(file), csv_format)
        .map_err(|e| CliError::Data(format!("{}: {e}", stream_path.display())))?;

    let model = match cfg.mode {
        PolicyMode::V1 => None,
        PolicyMode::V2 | PolicyMode::V3 => {
            let path = cfg.model_path.as_ref().ok_or_else(|| {
                CliError::Usage(format!(
                    "mode {:?} requires a model; pass --model <path>",
                    cfg.mode
                ))
            })?;
            Some(load_model(path)?)
        }
    };

    let policy = cfg.policy();
    let (segments, seg_trace) = fusion::segment(&stream, &policy, model.as_ref())
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_segments(out, &segments)?;
    if trace {
        write_trace(out, &seg_trace)?;
    }
    writeln!(stdout, "{} segments -> {}", segments.len(), out.display()).map_err(data_err)?;
    Ok(())
}

/// One evaluation reference: tokens plus internal boundary indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reference {
    pub tokens: Vec<String>,
    pub boundaries: Vec<usize>,
}

/// Parse a reference: JSON Lines `{"tokens","boundaries"}` (single stream:
/// one line) or plain text with one segment per line.
pub fn read_reference(path: &Path) -> Result<Reference, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if let Some(first) = lines.first() {
        if first.trim_start().starts_with('{') {
            if lines.len() != 1 {
                return Err(CliError::Data(format!(
                    "{}: expected one JSON reference line per stream, found {}",
                    path.display(),
                    lines.len()
                )));
            }
            return serde_json::from_str(first)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())));
        }
    }
    // Segment-per-line text.
    let mut tokens = Vec::new();
    let mut boundaries = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        tokens.extend(line.split_whitespace().map(|t| t.to_string()));
        if i + 1 < lines.len() && !tokens.is_empty() {
            boundaries.push(tokens.len() - 1);
        }
    }
    Ok(Reference { tokens, boundaries })
}

pub fn read_segment_records(path: &Path) -> Result<Vec<SegmentRecord>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SegmentRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Hypothesis boundary set over the reference token stream, aligning through
/// token errors if needed.
pub fn hypothesis_boundaries(
    records: &[SegmentRecord],
    reference: &Reference,
) -> Result<BoundarySet, CliError> {
    let seg_tokens: Vec<Vec<String>> = records.iter().map(|r| r.tokens.clone()).collect();
    match metrics::boundaries_from_segments(&seg_tokens, &reference.tokens) {
        Ok(bs) => Ok(bs),
        Err(metrics::MetricsError::TokenMismatch(_) | metrics::MetricsError::LengthMismatch { .. }) => {
            // Tokens differ (e.g. recognition errors): align and project.
            let hyp_tokens: Vec<String> = seg_tokens.iter().flatten().cloned().collect();
            if hyp_tokens.is_empty() {
                return Ok(BoundarySet::new([], reference.tokens.len()));
            }
            let alignment = metrics::align_tokens(&hyp_tokens, &reference.tokens);
            let mut indices = BTreeSet::new();
            let mut pos = 0usize;
            for (i, seg) in seg_tokens.iter().enumerate() {
                pos += seg.len();
                if i + 1 < seg_tokens.len() && pos > 0 {
                    indices.insert(pos - 1);
                }
            }
            let hyp_bs = BoundarySet {
                indices,
                total_tokens: hyp_tokens.len(),
            };
            Ok(alignment.project_boundaries(&hyp_bs))
        }
        Err(e) => Err(CliError::Data(e.to_string())),
    }
}

#[derive(Debug, Serialize)]
struct EvaluateOutput {
    precision: f64,
    recall: f64,
    f05: f64,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_f05: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gain_percent: Option<f64>,
}

/// `evaluate`: hypothesis segments vs a reference, optional baseline gain.
pub fn cmd_evaluate(
    hyp_path: &Path,
    ref_path: &Path,
    baseline_path: Option<&Path>,
    format: OutputFormat,
    mut stdout: impl Write,
) -> Result<(), CliError> {
    let reference = read_reference(ref_path)?;
    let ref_bs = BoundarySet::new(reference.boundaries.iter().copied(), reference.tokens.len());
    let hyp = read_segment_records(hyp_path)?;
    let hyp_bs = hypothesis_boundaries(&hyp, &reference)?;
    let report = metrics::score(&hyp_bs, &ref_bs).map_err(|e| CliError::Data(e.to_string()))?;

    let (baseline_f05, gain_percent) = if let Some(bp) = baseline_path {
        let base = read_segment_records(bp)?;
        let base_bs = hypothesis_boundaries(&base, &reference)?;
        let base_report = metrics::score(&base_bs, &ref_bs).map_err(|e| CliError::Data(e.to_string()))?;
        let gain = metrics::relative_gain(report.f_beta, base_report.f_beta)
            .map_err(|e| CliError::Data(e.to_string()))?;
        (Some(base_report.f_beta), Some(gain))
    } else {
        (None, None)
    };

    let out = EvaluateOutput {
        precision: report.precision,
        recall: report.recall,
        f05: report.f_beta,
        tp: report.true_positives,
        fp: report.false_positives,
        fn_: report.false_negatives,
        baseline_f05,
        gain_percent,
    };
    match format {
        OutputFormat::Json => {
            let line = serde_json::to_string(&out).map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(stdout, "{line}").map_err(data_err)?;
        }
        OutputFormat::Text => {
            writeln!(
                stdout,
                "P {:.2}  R {:.2}  F0.5 {:.2}  (tp {} fp {} fn {})",
                out.precision, out.recall, out.f05, out.tp, out.fp, out.fn_
            )
            .map_err(data_err)?;
            if let (Some(b), Some(g)) = (out.baseline_f05, out.gain_percent) {
                writeln!(stdout, "baseline F0.5 {b:.2}  gain {g:.1}%").map_err(data_err)?;
            }
        }
    }
    Ok(())
}

/// One suite stream for `compare`: word events plus reference boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteStream {
    pub words: Vec<WordEvent>,
    pub boundaries: Vec<usize>,
}

pub fn read_suite(path: &Path) -> Result<Vec<SuiteStream>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: SuiteStream = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), lineno + 1)))?;
        out.push(s);
    }
    Ok(out)
}

/// Micro-averaged P/R/F0.5 of one policy over a suite.
pub fn score_policy_on_suite(
    suite: &[SuiteStream],
    policy: &Policy,
    model: Option<&TaggerModel<f32>>,
) -> Result<(f64, f64, f64), CliError> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for s in suite {
        let (segments, _) = fusion::segment(&s.words, policy, model)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let hyp = BoundarySet::new(
            fusion::boundary_indices(&segments),
            s.words.len(),
        );
        let reference = BoundarySet::new(s.boundaries.iter().copied(), s.words.len());
        let report = metrics::score(&hyp, &reference).map_err(|e| CliError::Data(e.to_string()))?;
        tp += report.true_positives;
        fp += report.false_positives;
        fn_ += report.false_negatives;
    }
    let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    Ok((p, r, metrics::f_beta(p, r, 0.5)))
}

/// `compare`: run v1/v2/v3 over a suite and print a results matrix.
pub fn cmd_compare(
    suite_path: &Path,
    cfg: &RunConfig,
    model_v2_path: &Path,
    model_v3_path: &Path,
    format: OutputFormat,
    mut stdout: impl Write,
) -> Result<(), CliError> {
    let suite = read_suite(suite_path)?;
    let m2 = load_model(model_v2_path)?;
    let m3 = load_model(model_v3_path)?;
    let mut rows = Vec::new();
    let mut base_f = None;
    for mode in [PolicyMode::V1, PolicyMode::V2, PolicyMode::V3] {
        let mut policy = cfg.policy();
        policy.mode = mode;
        let model = match mode {
            PolicyMode::V1 => None,
            PolicyMode::V2 => Some(&m2),
            PolicyMode::V3 => Some(&m3),
        };
        let (p, r, f) = score_policy_on_suite(&suite, &policy, model)?;
        let gain = base_f
            .map(|b| metrics::relative_gain(f, b))
            .transpose()
            .map_err(|e| CliError::Data(e.to_string()))?;
        if mode == PolicyMode::V1 {
            base_f = Some(f);
        }
        rows.push((mode, p, r, f, gain));
    }
    match format {
        OutputFormat::Json => {
            let json: Vec<serde_json::Value> = rows
                .iter()
                .map(|(m, p, r, f, g)| {
                    serde_json::json!({
                        "model": format!("{m:?}").to_lowercase(),
                        "precision": p, "recall": r, "f05": f, "gain_percent": g,
                    })
                })
                .collect();
            let line =
                serde_json::to_string(&json).map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(stdout, "{line}").map_err(data_err)?;
        }
        OutputFormat::Text => {
            writeln!(stdout, "{:<6} {:>5} {:>5} {:>6} {:>10}", "Model", "P", "R", "F0.5", "F0.5-gain")
                .map_err(data_err)?;
            for (m, p, r, f, g) in &rows {
                let gain = g.map_or(String::new(), |g| format!("{g:.1}%"));
                writeln!(
                    stdout,
                    "{:<6} {:>5.2} {:>5.2} {:>6.2} {:>10}",
                    format!("{m:?}").to_lowercase(),
                    p,
                    r,
                    f,
                    gain
                )
                .map_err(data_err)?;
            }
        }
    }
    Ok(())
}
