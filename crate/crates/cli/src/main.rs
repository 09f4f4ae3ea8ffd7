//! `freb`: perturb datasets, label question types, evaluate models and render
//! reports.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for data
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use freb_core::classify::{classify_all, HttpClassifier, Strategy, SubprocessClassifier};
use freb_core::harness::pipeline::{default_kinds, DEFAULT_SEEDS};
use freb_core::harness::{length_filter, run_pipeline, PipelineConfig};
use freb_core::ingest::{load_dataset, write_dataset, write_records, DatasetRecord};
use freb_core::perturb::{self, value, Family, PerturbationKind};
use freb_core::{ComparativeLexicon, MetricsReport, PositionalWordList};

#[derive(Parser)]
#[command(
    name = "freb",
    version,
    about = "Fine-grained robustness benchmarking for table question answering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write perturbed copies of a dataset, one file per kind and seed.
    Perturb(PerturbArgs),
    /// Label questions as extraction (EQ) or reasoning (RQ).
    Classify(ClassifyArgs),
    /// Drop positional questions and, optionally, over-long inputs.
    Filter(FilterArgs),
    /// Run the evaluation pipeline described by a TOML config.
    Evaluate(EvaluateArgs),
    /// Render a JSON report as text.
    Report(ReportArgs),
    /// Write the bundled synthetic dataset.
    Toy(ToyArgs),
    /// Oracle-check externally annotated value perturbations.
    ImportAnnotated(ImportArgs),
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated kinds; all kinds when omitted.
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<PerturbationKind>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep an EQ label only when a secondary classifier agrees.
    #[arg(long, requires = "secondary")]
    combined: bool,
    /// Shell command reading question and table on stdin, printing EQ or RQ.
    #[arg(long, group = "secondary")]
    secondary_cmd: Option<String>,
    /// Endpoint receiving {question, table_serialized, answers}, returning {label}.
    #[arg(long, group = "secondary")]
    secondary_url: Option<String>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 0)]
    retries: usize,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// JSON lexicon overrides.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Overwrite existing EQ/RQ labels.
    #[arg(long)]
    relabel: bool,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// One word per line; the built-in list when omitted.
    #[arg(long)]
    positional_words: Option<PathBuf>,
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Where to write the removed instances.
    #[arg(long)]
    removed: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also print the text rendering to stdout.
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) => m,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn config<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

fn ensure_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))
}

fn perturb_cmd(args: PerturbArgs) -> CmdResult {
    let instances = load_dataset(&args.input).map_err(data)?;
    let kinds = if args.kinds.is_empty() {
        default_kinds()
    } else {
        args.kinds
    };
    let seeds = if args.seeds.is_empty() {
        DEFAULT_SEEDS.to_vec()
    } else {
        args.seeds
    };
    ensure_dir(&args.out)?;
    let mut skipped = Vec::new();
    let mut run = |kind: PerturbationKind, seed: u64, file: String| -> CmdResult {
        let mut records = Vec::new();
        for inst in instances
            .iter()
            .filter(|i| i.question_type == kind.question_type())
        {
            match perturb::apply(kind, inst, seed) {
                Ok(p) => records.push(DatasetRecord {
                    instance: p.instance,
                    provenance: Some(p.record),
                }),
                Err(e) => skipped.push(serde_json::json!({
                    "kind": kind.name(),
                    "seed": seed,
                    "instance_id": inst.id,
                    "reason": e.to_string(),
                })),
            }
        }
        log::info!("{file}: {} instances", records.len());
        write_records(args.out.join(file), &records).map_err(data)
    };
    if kinds.iter().any(|k| k.family() == Family::Value) {
        run(PerturbationKind::Shortened, 0, "shortened.jsonl".into())?;
    }
    for &kind in kinds.iter().filter(|k| **k != PerturbationKind::Shortened) {
        for &seed in &seeds {
            run(kind, seed, format!("{}.seed{seed}.jsonl", kind.name()))?;
        }
    }
    let lines: Vec<String> = skipped.iter().map(|s| s.to_string()).collect();
    let path = args.out.join("skipped.jsonl");
    let body = if lines.is_empty() {
        String::new()
    } else {
        lines.join("\n") + "\n"
    };
    std::fs::write(&path, body).map_err(|e| data(format!("{}: {e}", path.display())))?;
    if !skipped.is_empty() {
        log::warn!(
            "{} instance-perturbations skipped; see {}",
            skipped.len(),
            path.display()
        );
    }
    Ok(())
}

fn classify_cmd(args: ClassifyArgs) -> CmdResult {
    let lexicon = match &args.lexicon {
        Some(p) => ComparativeLexicon::load(p).map_err(config)?,
        None => ComparativeLexicon::default(),
    };
    let instances = load_dataset(&args.input).map_err(data)?;
    let timeout = Duration::from_secs(args.timeout_secs);
    let subprocess;
    let http;
    let strategy = match (args.combined, args.secondary_cmd, args.secondary_url) {
        (true, Some(command), _) => {
            subprocess = SubprocessClassifier {
                command,
                timeout,
                retries: args.retries,
            };
            Strategy::Combined(&subprocess)
        }
        (true, None, Some(url)) => {
            http = HttpClassifier {
                url,
                timeout,
                retries: args.retries,
            };
            Strategy::Combined(&http)
        }
        (true, None, None) => {
            return Err(Failure::Config(
                "--combined needs a secondary classifier".into(),
            ))
        }
        (false, _, _) => Strategy::RuleBased,
    };
    let outcome = classify_all(
        instances,
        &lexicon,
        &strategy,
        args.max_in_flight,
        args.relabel,
    );
    for (id, err) in &outcome.failures {
        log::warn!("{id}: left UNKNOWN: {err}");
    }
    write_dataset(&args.out, &outcome.instances).map_err(data)
}

fn filter_cmd(args: FilterArgs) -> CmdResult {
    let words = match &args.positional_words {
        Some(p) => PositionalWordList::load(p).map_err(config)?,
        None => PositionalWordList::default(),
    };
    if args.max_tokens == Some(0) {
        return Err(Failure::Config("--max-tokens must be at least 1".into()));
    }
    let instances = load_dataset(&args.input).map_err(data)?;
    let (mut kept, mut removed) = freb_core::filter_positional_questions(instances, &words);
    if let Some(max) = args.max_tokens {
        let (k, dropped) = length_filter(kept, max);
        kept = k;
        removed.extend(dropped);
    }
    log::info!("kept {}, removed {}", kept.len(), removed.len());
    write_dataset(&args.out, &kept).map_err(data)?;
    if let Some(path) = &args.removed {
        write_dataset(path, &removed).map_err(data)?;
    }
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> CmdResult {
    let cfg = PipelineConfig::load(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    let report = run_pipeline(&cfg).map_err(|e| match e.exit_code() {
        1 => Failure::Config(e.to_string()),
        _ => Failure::Data(e.to_string()),
    })?;
    let json = serde_json::to_string_pretty(&report).map_err(data)? + "\n";
    match &args.out {
        Some(path) => {
            std::fs::write(path, &json).map_err(|e| data(format!("{}: {e}", path.display())))?;
            if args.text {
                print!("{}", report.render_text());
            }
        }
        None => {
            print!("{json}");
            if args.text {
                eprint!("{}", report.render_text());
            }
        }
    }
    Ok(())
}

fn report_cmd(args: ReportArgs) -> CmdResult {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| data(format!("{}: {e}", args.input.display())))?;
    let report: MetricsReport = serde_json::from_str(&text).map_err(data)?;
    print!("{}", report.render_text());
    Ok(())
}

fn import_cmd(args: ImportArgs) -> CmdResult {
    let imported = value::import_annotated(&args.input).map_err(data)?;
    let mut lines = String::new();
    let mut flagged = 0;
    for a in &imported {
        if matches!(a.status, value::ImportStatus::Inconsistent(_)) {
            flagged += 1;
        }
        let line = serde_json::json!({
            "source_id": a.original.id,
            "kind": a.kind,
            "status": a.status,
            "instance": a.instance,
            "edits": a.edits,
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
    }
    std::fs::write(&args.out, lines).map_err(|e| data(format!("{}: {e}", args.out.display())))?;
    log::info!("{} records, {flagged} flagged inconsistent", imported.len());
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Perturb(a) => perturb_cmd(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Filter(a) => filter_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Toy(a) => write_dataset(&a.out, &freb_core::toy::toy_dataset()).map_err(data),
        Command::ImportAnnotated(a) => import_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
