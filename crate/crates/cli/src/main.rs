use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dkg_cli::config::{BackendChoice, RunConfig, RunConfigFile};
use dkg_cli::repl::{run_repl, Session};
use dkg_norms::agent::{Backend, ScriptedBackend, ScriptedReply};
use dkg_norms::corpus::{
    annotate, bundled_corpus_dir, load_corpus_with, load_grids, planner_mismatches, CorpusEntry,
    CorpusExpectations,
};
use dkg_norms::evalharness::{
    ingest_ratings, load_ratings, load_records, run_experiment, save_records, write_report,
    ExperimentConfig,
};
use dkg_norms::grid::{parse_grid, Grid};
use dkg_norms::instruction::parse_instruction;
use dkg_norms::norms::{classify, infer_response, InstructionType};
use dkg_norms::prompting::{build_prompt, load_exemplars, Condition, Exemplar, PromptConfig};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "dkg", version, about = "Doors, keys and gems: norm-aware instruction following")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus: grids, gold annotations, exemplars and planner agreement.
    Validate {
        corpus: Option<PathBuf>,
        /// Skip the size and distribution checks.
        #[arg(long)]
        relaxed: bool,
    },
    /// Classify an instruction against a grid and print the oracle response.
    Classify {
        /// Grid file, or the id of a bundled grid.
        grid: String,
        instruction: String,
        #[arg(long)]
        json: bool,
    },
    /// Print the prompt sent to a language model.
    Prompt {
        grid: String,
        instruction: String,
        #[arg(long, default_value = "with_norms")]
        condition: Condition,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Run the experiment and write records and a report.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// with_norms, without_norms or both; repeatable.
        #[arg(long = "condition")]
        conditions: Vec<String>,
        #[arg(long, value_enum)]
        backend: Option<BackendChoice>,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        api_key_env: Option<String>,
        #[arg(long)]
        temperature: Option<f32>,
        #[arg(long)]
        max_tokens: Option<u32>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Re-render the report from saved records.
    Report { records: PathBuf },
    /// Turn saved records into a replay script for the scripted backend.
    Script { records: PathBuf, output: PathBuf },
    /// Interactive session on one grid.
    Repl {
        grid: String,
        #[arg(long, value_enum, default_value = "oracle")]
        backend: BackendChoice,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value = "with_norms")]
        condition: Condition,
    },
    /// Fill gold annotations for draft entries from the oracle.
    #[command(hide = true)]
    Annotate { entries: PathBuf, grids: PathBuf },
}

enum Failure {
    Usage(String),
    Check(String),
    Closed,
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure::Closed;
        }
        Failure::Check(e.to_string())
    }
}

macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(io::stdout(), $($arg)*)?
    };
}

type Outcome = Result<(), Failure>;

fn check<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Check(e.to_string())
}

fn resolve_grid(arg: &str) -> Result<Grid, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(check)?;
        let g = parse_grid(&text).map_err(|e| Failure::Check(format!("{arg}: {e}")))?;
        if g.id().is_empty() {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            return Ok(g.with_id(stem));
        }
        return Ok(g);
    }
    let grids = load_grids(&bundled_corpus_dir().join("grids")).map_err(check)?;
    grids
        .get(arg)
        .cloned()
        .ok_or_else(|| Failure::Usage(format!("{arg} is neither a grid file nor a bundled grid id")))
}

fn corpus_exemplars(corpus: &Path, condition: Condition) -> Result<Vec<Exemplar>, Failure> {
    let grids = load_grids(&corpus.join("grids")).map_err(check)?;
    let known: HashSet<String> = grids.into_keys().collect();
    let file = corpus.join("exemplars").join(format!("{}.jsonl", condition.as_str()));
    load_exemplars(&file, &known).map_err(check)
}

fn validate(corpus: Option<PathBuf>, relaxed: bool) -> Outcome {
    let dir = corpus.unwrap_or_else(bundled_corpus_dir);
    let expect = if relaxed {
        CorpusExpectations::relaxed()
    } else {
        CorpusExpectations::standard()
    };
    let corpus = load_corpus_with(&dir, &expect).map_err(check)?;
    let mismatches = planner_mismatches(&corpus.grids);
    if let Some(m) = mismatches.first() {
        return Err(Failure::Check(format!(
            "planner disagrees with exhaustive search on {} gem {}: {:?} vs {:?}",
            m.grid_id, m.gem, m.planner, m.brute_force
        )));
    }
    let gems: usize = corpus.grids.values().map(|g| g.gems().len()).sum();
    let counts = corpus.type_counts();
    let dist: Vec<String> = InstructionType::ALL
        .iter()
        .map(|t| format!("{t:?} {}", counts.get(t).copied().unwrap_or(0)))
        .collect();
    out!(
        "ok: {} grids, {} instructions ({}), {} + {} exemplars",
        corpus.grids.len(),
        corpus.entries.len(),
        dist.join(", "),
        corpus.with_norms.len(),
        corpus.without_norms.len()
    );
    out!("planner matches exhaustive search on all {gems} gems");
    Ok(())
}

fn classify_cmd(grid: &str, instruction: &str, json: bool) -> Outcome {
    let g = resolve_grid(grid)?;
    let s = parse_instruction(instruction);
    let (label, _) = classify(&g, &s).map_err(check)?;
    let r = infer_response(&g, &s, label).map_err(check)?;
    if json {
        out!("{}", serde_json::to_string_pretty(&r).map_err(check)?);
        return Ok(());
    }
    out!("Label: {}", label.title());
    out!("Rationale: {}", r.rationale);
    out!("Response: {}", r.nl_text);
    if let Some(plan) = &r.plan {
        out!("Plan ({} steps):", plan.total_steps);
        for a in &plan.actions {
            out!("  {a}");
        }
    }
    for o in &r.options {
        out!("Option: {}", o.description);
    }
    Ok(())
}

fn prompt_cmd(grid: &str, instruction: &str, condition: Condition, corpus: Option<PathBuf>) -> Outcome {
    let g = resolve_grid(grid)?;
    let dir = corpus.unwrap_or_else(bundled_corpus_dir);
    let exemplars = corpus_exemplars(&dir, condition)?;
    let p = build_prompt(&g, instruction, &PromptConfig::new(condition), &exemplars).map_err(check)?;
    out!("{}", p.full_text);
    Ok(())
}

fn make_backend(choice: BackendChoice, script: Option<&Path>, cfg: Option<&RunConfig>) -> Result<Backend, Failure> {
    match choice {
        BackendChoice::Oracle => Ok(Backend::OracleBacked),
        BackendChoice::Scripted => {
            let path = script.ok_or_else(|| Failure::Usage("the scripted backend needs --script".into()))?;
            Ok(Backend::scripted(ScriptedBackend::load(path).map_err(check)?))
        }
        BackendChoice::Remote => {
            let remote = cfg.map(RunConfig::remote).unwrap_or_default();
            if std::env::var(&remote.api_key_env).map_or(true, |v| v.is_empty()) {
                return Err(Failure::Check(format!(
                    "environment variable {} holding the API key is not set",
                    remote.api_key_env
                )));
            }
            Ok(Backend::remote(remote))
        }
    }
}

fn run_cmd(config: Option<PathBuf>, flags: RunConfigFile) -> Outcome {
    let file = match config {
        Some(path) => RunConfigFile::load(&path).map_err(Failure::Usage)?,
        None => RunConfigFile::default(),
    };
    let cfg = RunConfig::resolve(file.merged(flags), bundled_corpus_dir()).map_err(Failure::Usage)?;
    let corpus = load_corpus_with(&cfg.corpus, &CorpusExpectations::relaxed()).map_err(check)?;
    let backend = make_backend(cfg.backend, cfg.script.as_deref(), Some(&cfg))?;
    let exp = ExperimentConfig {
        conditions: cfg.conditions.clone(),
        max_tokens: cfg.max_tokens,
        temperature: cfg.temperature,
        parallelism: cfg.parallelism,
    };
    let mut records = run_experiment(&corpus, &exp, &backend);
    if let Some(path) = &cfg.ratings {
        let ratings = load_ratings(path).map_err(check)?;
        ingest_ratings(&mut records, &ratings).map_err(check)?;
    }
    fs::create_dir_all(&cfg.output_dir)?;
    save_records(&cfg.output_dir.join("records.jsonl"), &records).map_err(check)?;
    let report = write_report(&records);
    fs::write(cfg.output_dir.join("report.txt"), &report.text)?;
    fs::write(cfg.output_dir.join("summary.csv"), &report.csv)?;
    write!(io::stdout(), "{}", report.text)?;
    let failed = records.iter().filter(|r| r.failed.is_some()).count();
    if failed > 0 {
        let first = records.iter().find_map(|r| r.failed.as_deref()).unwrap_or_default();
        eprintln!("{failed} of {} records failed; first error: {first}", records.len());
        if failed == records.len() {
            return Err(Failure::Check("every record failed".into()));
        }
    }
    Ok(())
}

fn report_cmd(records: &Path) -> Outcome {
    let records = load_records(records).map_err(check)?;
    if records.is_empty() {
        return Err(Failure::Check("no records".into()));
    }
    write!(io::stdout(), "{}", write_report(&records).text)?;
    Ok(())
}

fn script_cmd(records: &Path, output: &Path) -> Outcome {
    let records = load_records(records).map_err(check)?;
    let mut out = String::new();
    let mut seen = HashSet::new();
    for r in records.iter().filter(|r| r.failed.is_none()) {
        if seen.insert(r.prompt_digest.clone()) {
            let line = ScriptedReply {
                digest: r.prompt_digest.clone(),
                reply: r.raw_reply.clone(),
            };
            out.push_str(&serde_json::to_string(&line).map_err(check)?);
            out.push('\n');
        }
    }
    fs::write(output, out)?;
    out!("wrote {} replies to {}", seen.len(), output.display());
    Ok(())
}

fn repl_cmd(grid: &str, backend: BackendChoice, script: Option<PathBuf>, condition: Condition) -> Outcome {
    let g = resolve_grid(grid)?;
    let backend = make_backend(backend, script.as_deref(), None)?;
    let exemplars = if matches!(backend, Backend::OracleBacked) {
        Vec::new()
    } else {
        corpus_exemplars(&bundled_corpus_dir(), condition)?
    };
    let mut session = Session::new(g, backend, condition, exemplars);
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    run_repl(stdin.lock(), &mut stdout, &mut session)?;
    stdout.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct DraftEntry {
    instruction_id: String,
    grid_id: String,
    text: String,
    #[serde(default)]
    instruction_type: Option<InstructionType>,
}

fn annotate_cmd(entries: &Path, grids: &Path) -> Outcome {
    let grids = load_grids(grids).map_err(check)?;
    let text = fs::read_to_string(entries)?;
    let mut mismatched = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let draft: DraftEntry = serde_json::from_str(line).map_err(check)?;
        let g = grids
            .get(&draft.grid_id)
            .ok_or_else(|| Failure::Check(format!("unknown grid {}", draft.grid_id)))?;
        let gold = annotate(g, &draft.text).map_err(check)?;
        let found = gold.gold_label.instruction_type();
        if draft.instruction_type.is_some_and(|t| t != found) {
            mismatched += 1;
            eprintln!(
                "{}: intended {:?}, oracle says {:?}",
                draft.instruction_id,
                draft.instruction_type.unwrap(),
                found
            );
        }
        let entry = CorpusEntry {
            instruction_id: draft.instruction_id,
            grid_id: draft.grid_id,
            text: draft.text,
            instruction_type: found,
            gold,
        };
        out!("{}", serde_json::to_string(&entry).map_err(check)?);
    }
    if mismatched > 0 {
        return Err(Failure::Check(format!("{mismatched} entries changed type")));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { corpus, relaxed } => validate(corpus, relaxed),
        Command::Classify { grid, instruction, json } => classify_cmd(&grid, &instruction, json),
        Command::Prompt {
            grid,
            instruction,
            condition,
            corpus,
        } => prompt_cmd(&grid, &instruction, condition, corpus),
        Command::Run {
            config,
            corpus,
            conditions,
            backend,
            script,
            model,
            endpoint,
            api_key_env,
            temperature,
            max_tokens,
            parallelism,
            output_dir,
            ratings,
        } => run_cmd(
            config,
            RunConfigFile {
                corpus,
                conditions: (!conditions.is_empty()).then_some(conditions),
                backend,
                script,
                model,
                endpoint,
                api_key_env,
                temperature,
                max_tokens,
                parallelism,
                output_dir,
                ratings,
            },
        ),
        Command::Report { records } => report_cmd(&records),
        Command::Script { records, output } => script_cmd(&records, &output),
        Command::Repl {
            grid,
            backend,
            script,
            condition,
        } => repl_cmd(&grid, backend, script, condition),
        Command::Annotate { entries, grids } => annotate_cmd(&entries, &grids),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

