use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lmseg::cli::{self, CliError, OutputFormat, RunConfig};
use lmseg::fusion::PolicyMode;
use lmseg::tagger::Hyperparams;

#[derive(Parser)]
#[command(name = "lmseg", about = "Streaming speech segmentation: silence endpointing fused with an end-of-segment language model", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonPolicyArgs {
    /// key=value config file; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Segmentation policy: v1 (silence only), v2 (LM gate), v3 (look-ahead)
    #[arg(long)]
    mode: Option<PolicyMode>,
    #[arg(long = "silence-ms")]
    silence_threshold_ms: Option<u64>,
    #[arg(long)]
    hard_timeout_ms: Option<u64>,
    /// LM end-of-segment probability threshold (tie accepts)
    #[arg(long)]
    lm_threshold: Option<f64>,
    /// How long v3 waits for the next word before a forced flush
    #[arg(long)]
    lookahead_wait_ms: Option<u64>,
    /// Trained tagger model (required for v2/v3)
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonPolicyArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(v) = self.silence_threshold_ms {
            cfg.silence_threshold_ms = v;
        }
        if let Some(v) = self.hard_timeout_ms {
            cfg.hard_timeout_ms = v;
        }
        if let Some(v) = self.lm_threshold {
            cfg.lm_threshold = v;
        }
        if let Some(v) = self.lookahead_wait_ms {
            cfg.lookahead_wait_ms = Some(v);
        }
        if let Some(p) = &self.model {
            cfg.model_path = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.policy()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Turn raw text documents into tagged training examples
    PrepareData {
        /// Directory of .txt files or a JSONL file of {"doc_id","text"}
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also emit look-ahead examples (for v3 models)
        #[arg(long)]
        lookahead: bool,
        #[arg(long, default_value = "text")]
        format: OutputFormat,
    },
    /// Train the end-of-segment tagger on prepared examples
    Train {
        /// Training examples (JSONL from prepare-data)
        examples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train with one-word look-ahead (v3); otherwise causal (v2)
        #[arg(long)]
        lookahead: bool,
        #[arg(long, default_value_t = 32)]
        embed_dim: usize,
        #[arg(long, default_value_t = 64)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long, default_value_t = 200)]
        max_epochs: usize,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long, default_value_t = 5.0)]
        clip_norm: f64,
        #[arg(long, default_value_t = 5000)]
        vocab_size: usize,
        #[arg(long, default_value_t = 1)]
        min_frequency: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Segment one word-event stream (JSONL or CSV) into utterances
    Segment {
        stream: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write <out>.trace.{txt,jsonl} with per-candidate decisions
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        policy: CommonPolicyArgs,
    },
    /// Score hypothesis segments against a reference
    Evaluate {
        /// Hypothesis segments (JSONL from segment)
        hypothesis: PathBuf,
        /// Reference: JSONL {"tokens","boundaries"} or one segment per line
        #[arg(long)]
        reference: PathBuf,
        /// Baseline segments; adds relative F0.5 gain to the report
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: OutputFormat,
    },
    /// Run v1/v2/v3 over a labelled suite and print the results matrix
    Compare {
        /// Suite: JSONL of {"words":[{word,start_ms,end_ms}],"boundaries":[..]}
        suite: PathBuf,
        /// Causal model used for v2
        #[arg(long)]
        model_v2: PathBuf,
        /// Look-ahead model used for v3
        #[arg(long)]
        model_v3: PathBuf,
        #[arg(long, default_value = "text")]
        format: OutputFormat,
        #[command(flatten)]
        policy: CommonPolicyArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    match cli.command {
        Command::PrepareData {
            input,
            out,
            lookahead,
            format,
        } => cli::cmd_prepare_data(&input, &out, lookahead, format, stdout.lock()),
        Command::Train {
            examples,
            out,
            lookahead,
            embed_dim,
            hidden_dim,
            learning_rate,
            max_epochs,
            patience,
            clip_norm,
            vocab_size,
            min_frequency,
            seed,
        } => {
            let hp = Hyperparams {
                embed_dim,
                hidden_dim,
                learning_rate,
                max_epochs,
                patience,
                clip_norm,
            };
            cli::cmd_train(
                &examples,
                &out,
                &hp,
                vocab_size,
                min_frequency,
                lookahead,
                seed,
                stdout.lock(),
            )
        }
        Command::Segment {
            stream,
            out,
            trace,
            policy,
        } => {
            let cfg = policy.resolve()?;
            cli::cmd_segment(&stream, &cfg, &out, trace, stdout.lock())
        }
        Command::Evaluate {
            hypothesis,
            reference,
            baseline,
            format,
        } => cli::cmd_evaluate(
            &hypothesis,
            &reference,
            baseline.as_deref(),
            format,
            stdout.lock(),
        ),
        Command::Compare {
            suite,
            model_v2,
            model_v3,
            format,
            policy,
        } => {
            let cfg = policy.resolve()?;
            cli::cmd_compare(&suite, &cfg, &model_v2, &model_v3, format, stdout.lock())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; bad flags are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
