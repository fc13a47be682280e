use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use veriq_core::engine::{run_batch, Administration, Engine, Query};
use veriq_core::pipeline::{Candidate, PipelineConfig, QuestionPlan};
use veriq_core::psychometrics::transcript::{self, Clock};
use veriq_core::psychometrics::{Age, Composition, ItemPool, NormTable};
use veriq_core::{container, Error, IngestConfig, KnowledgeModel, PruneConfig, Subtest, SvdOptions, Weighting};

use crate::server;

#[derive(Debug, Parser)]
#[command(name = "veriq", version, about = "Spectral commonsense QA engine and verbal subtest harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a model file from an assertion dump.
    Ingest(IngestArgs),
    /// Answer one question and print the top five answers.
    Answer(AnswerArgs),
    /// Answer every item and clue of a pool into an unscored transcript.
    Batch(BatchArgs),
    /// Run the examiner HTTP service.
    Serve(ServeArgs),
    /// Replay a scored transcript and print the report.
    Score(ScoreArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    Sqrt,
    Identity,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub dump: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = veriq_core::spectral::DEFAULT_RANK)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub min_strength: f64,
    #[arg(long, default_value_t = 2)]
    pub min_degree: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Sqrt)]
    pub weighting: WeightingArg,
    #[arg(long, default_value_t = 10.0)]
    pub weight_cap: f64,
    /// Language tag to keep; "all" keeps every record.
    #[arg(long, default_value = "en")]
    pub language: String,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long, env = "VERIQ_MODEL")]
    pub model: PathBuf,
    /// Keep one-word concepts that are part of a matched two-word concept.
    #[arg(long)]
    pub keep_subsumed: bool,
    /// Comma-separated relations for "what" questions.
    #[arg(long, value_delimiter = ',')]
    pub what_relations: Option<Vec<String>>,
    /// Comma-separated reference concepts for "how many" questions.
    #[arg(long, value_delimiter = ',')]
    pub numbers: Option<Vec<String>>,
}

impl EngineArgs {
    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut config = PipelineConfig {
            drop_subsumed: !self.keep_subsumed,
            ..PipelineConfig::default()
        };
        if let Some(what) = &self.what_relations {
            config.what_relations = what.iter().cloned().collect();
        }
        if let Some(numbers) = &self.numbers {
            config.numbers = numbers.clone();
        }
        config
    }

    pub fn engine(&self) -> anyhow::Result<Engine> {
        let model = container::load(&self.model).with_context(|| format!("loading model {}", self.model.display()))?;
        Ok(Engine::new(model, self.pipeline_config()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Information,
    Comprehension,
    Vocabulary,
    WordReasoning,
    Similarities,
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    /// The question, the word, one argument per clue, or two words.
    #[arg(required = true)]
    pub input: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClockArg {
    System,
    Logical,
}

impl From<ClockArg> for Clock {
    fn from(c: ClockArg) -> Self {
        match c {
            ClockArg::System => Clock::System,
            ClockArg::Logical => Clock::Logical,
        }
    }
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ClockArg::Logical)]
    pub clock: ClockArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Where session transcripts are kept; sessions found here are resumed.
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub norms: PathBuf,
    #[arg(long)]
    pub transcript: PathBuf,
    #[arg(long, default_value = "4y0m")]
    pub age: Age,
    /// standard, best3, worst3 or custom:a,b,c; repeatable.
    #[arg(long = "composition")]
    pub compositions: Vec<Composition>,
    /// Write the replayed transcript here.
    #[arg(long)]
    pub out_transcript: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ClockArg::Logical)]
    pub clock: ClockArg,
}

/// Exit code 2 for usage problems and missing inputs, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let missing = err.chain().any(|cause| {
        cause
            .downcast_ref::<io::Error>()
            .or_else(|| match cause.downcast_ref::<Error>() {
                Some(Error::Io(e)) => Some(e),
                _ => None,
            })
            .is_some_and(|e| e.kind() == io::ErrorKind::NotFound)
    });
    if missing {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Answer(args) => answer(args),
        Command::Batch(args) => batch(args),
        Command::Serve(args) => serve(args),
        Command::Score(args) => score(args),
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn ingest(args: IngestArgs) -> anyhow::Result<()> {
    let dump = open(&args.dump)?;
    let config = IngestConfig {
        language: (args.language != "all").then(|| args.language.clone()),
        prune: PruneConfig {
            min_strength: args.min_strength,
            min_concept_degree: args.min_degree,
        },
        weighting: match args.weighting {
            WeightingArg::Sqrt => Weighting::SqrtCapped { cap: args.weight_cap },
            WeightingArg::Identity => Weighting::Identity,
        },
        k: args.k,
        svd: SvdOptions {
            seed: args.seed,
            ..SvdOptions::default()
        },
    };
    let (model, summary) = KnowledgeModel::ingest(dump, &config)?;
    if summary.parse.warn_malformed() {
        log::warn!("{} of {} lines were malformed", summary.parse.malformed, summary.parse.lines);
    }
    container::save(&model, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let s = model.spectral().singular_values();
    println!("assertions  {} kept, {} malformed, {} other language", summary.parse.assertions.len(), summary.parse.malformed, summary.parse.filtered_language);
    println!("concepts    {}", summary.n_concepts);
    println!("features    {}", summary.n_features);
    println!("nonzeros    {}", summary.nnz);
    println!("k           {} (requested {})", s.len(), summary.requested_k);
    let head: Vec<String> = s.iter().take(5).map(|x| format!("{x:.4}")).collect();
    println!("spectrum    {}{}", head.join(" "), if s.len() > 5 { " ..." } else { "" });
    println!("wrote       {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct AnswerOutput<'a> {
    kind: Subtest,
    plan: &'a QuestionPlan,
    answers: Vec<RankedCandidate<'a>>,
}

#[derive(Serialize)]
struct RankedCandidate<'a> {
    rank: usize,
    #[serde(flatten)]
    candidate: &'a Candidate,
}

fn query_for(kind: Kind, input: &[String]) -> anyhow::Result<Query> {
    let joined = input.join(" ");
    Ok(match kind {
        Kind::Information => Query::Open {
            subtest: Subtest::Information,
            question: joined,
        },
        Kind::Comprehension => Query::Open {
            subtest: Subtest::Comprehension,
            question: joined,
        },
        Kind::Vocabulary => Query::Vocabulary(joined),
        Kind::WordReasoning => Query::WordReasoning(input.to_vec()),
        Kind::Similarities => match input {
            [a, b] => Query::Similarities(a.clone(), b.clone()),
            [frame] => Query::Open {
                subtest: Subtest::Similarities,
                question: frame.clone(),
            },
            _ => bail!("similarities takes two words or one \"X and Y are both\" prompt"),
        },
    })
}

fn answer(args: AnswerArgs) -> anyhow::Result<()> {
    let engine = args.engine.engine()?;
    let query = query_for(args.kind, &args.input)?;
    let answer = engine.answer(&query)?;
    let candidates = answer.candidates();
    let mut out = io::stdout().lock();
    if args.json {
        let output = AnswerOutput {
            kind: answer.plan.subtest,
            plan: &answer.plan,
            answers: candidates
                .iter()
                .enumerate()
                .map(|(i, candidate)| RankedCandidate { rank: i + 1, candidate })
                .collect(),
        };
        serde_json::to_writer_pretty(&mut out, &output)?;
        writeln!(out)?;
    } else if candidates.is_empty() {
        writeln!(out, "(no answers)")?;
    } else {
        for (i, c) in candidates.iter().enumerate() {
            writeln!(out, "{}  {:<40} {:.6}", i + 1, c.text, c.score)?;
        }
    }
    Ok(())
}

fn batch(args: BatchArgs) -> anyhow::Result<()> {
    let engine = args.engine.engine()?;
    let pool = ItemPool::load(&args.pool).with_context(|| format!("loading pool {}", args.pool.display()))?;
    let records = run_batch(&engine, &pool, args.clock.into());
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    transcript::write_transcript(BufWriter::new(file), &records)?;
    eprintln!("{} records, {} with errors, written to {}", records.len(), failures, args.out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let engine = Arc::new(args.engine.engine()?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let state = server::AppState::open(engine, args.state_dir)?;
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, server::router(state)).await?;
        Ok(())
    })
}

fn score(args: ScoreArgs) -> anyhow::Result<()> {
    let engine = Arc::new(args.engine.engine()?);
    let pool = Arc::new(ItemPool::load(&args.pool).with_context(|| format!("loading pool {}", args.pool.display()))?);
    let norms = NormTable::load(&args.norms).with_context(|| format!("loading norms {}", args.norms.display()))?;
    let records = transcript::load_transcript(&args.transcript)
        .with_context(|| format!("loading transcript {}", args.transcript.display()))?;
    let admin = Administration::replay(engine, pool, args.clock.into(), &records)?;
    if !admin.session().is_complete() {
        log::warn!("transcript ends before the session is complete");
    }
    let compositions = if args.compositions.is_empty() {
        Composition::NAMED.to_vec()
    } else {
        args.compositions
    };
    let report = admin.report(&norms, args.age, &compositions)?;
    if let Some(path) = &args.out_transcript {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        transcript::write_transcript(BufWriter::new(file), admin.transcript())?;
    }
    let json = report.to_json_pretty()? + "\n";
    match &args.report {
        Some(path) => std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().lock().write_all(json.as_bytes())?,
    }
    Ok(())
}
