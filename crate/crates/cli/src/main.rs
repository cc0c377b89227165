use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use tvl_core::datagen::{fixture_registry, generate_corpus, synthetic_store, GenConfig, SynthConfig};
use tvl_core::geo::{execute, AreaRegistry, ResultTable, TrajStore};
use tvl_core::metrics::{compare_pair, format_table, score_verdicts, EvalReport, FormatFailure, TableRow};
use tvl_core::sqlgen::compile_to_sql;
use tvl_core::tvl::{parse_tvl, render_tvl, TvlQuery};
use tvl_core::visgen::emit_spec;
use tvl_harness::prompts::Demo;
use tvl_harness::{
    build_correction_prompt, build_fewshot_prompt, build_nlq_prompts, default_demos, parse_model_output, questions_for,
    read_jsonl, run_experiment, split_dataset, write_jsonl, EmbeddingRetriever, HttpModel, Issue, LexicalRetriever,
    ModelConfig, Retriever, RetrieverConfig, RunOptions, ShotPolicy, StubMode, StubServer,
};

mod png;

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "tvl", version, about = "Parse, compile, run, render and evaluate TVL statements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Sources {
    /// Area registry as GeoJSON.
    #[arg(long)]
    areas: PathBuf,
    /// Trajectory points as CSV.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form of a TVL statement.
    Parse {
        /// TVL file, or `-` for stdin.
        file: PathBuf,
    },
    /// Print the SQL a statement compiles to.
    Compile {
        file: PathBuf,
        #[arg(long)]
        areas: PathBuf,
    },
    /// Run a statement and print its result table as CSV.
    Exec {
        file: PathBuf,
        #[command(flatten)]
        src: Sources,
        /// Field delimiter.
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Write the Vega-Lite (or map) document for a statement's result.
    RenderSpec {
        file: PathBuf,
        #[command(flatten)]
        src: Sources,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a PNG preview of a statement's chart or map.
    RenderPng {
        file: PathBuf,
        #[command(flatten)]
        src: Sources,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 800)]
        width: u32,
        #[arg(long, default_value_t = 600)]
        height: u32,
    },
    /// Generate a TVL corpus from a trajectory store.
    Generate {
        #[command(flatten)]
        src: Sources,
        /// Generator settings as TOML; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `rng_seed` from the config.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write one question record per applicable scenario instead of
        /// bare TVL records.
        #[arg(long)]
        questions: bool,
    },
    /// Write a synthetic trajectory store as CSV.
    Synth {
        /// Areas to anchor trajectories in; the bundled fixture when omitted.
        #[arg(long)]
        areas: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long, default_value_t = 10)]
        users: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the bundled fixture area registry as GeoJSON.
    Areas,
    /// Print prompt text.
    #[command(subcommand)]
    Prompts(PromptCommand),
    /// Stratified train/test split of a question dataset.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        train_n: usize,
        #[arg(long)]
        test_n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Run a model over a test set and score it.
    Evaluate(EvaluateArgs),
    /// Score predictions against gold records without calling a model.
    Score {
        /// Gold question records (JSONL).
        #[arg(long)]
        gold: PathBuf,
        /// Predictions (JSONL) with `id` and either `tvl` or `completion`.
        #[arg(long)]
        pred: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a stub chat-completion endpoint answering from gold records.
    Stub {
        #[arg(long)]
        records: PathBuf,
        /// echo, area-corruptor or garbage-every-N.
        #[arg(long, default_value = "echo")]
        mode: String,
    },
}

#[derive(Subcommand)]
enum PromptCommand {
    /// Question-generation prompts for a statement.
    Gen { file: PathBuf },
    /// Correction prompt for a flawed question.
    Correct {
        file: PathBuf,
        #[arg(long)]
        question: String,
        /// redundancy, missing or error.
        #[arg(long)]
        issue: Issue,
    },
    /// Translation prompt with demonstrations.
    Fewshot {
        #[arg(long)]
        question: String,
        /// Demonstrations (JSONL with `question` and `tvl`); the bundled set
        /// when omitted.
        #[arg(long, conflicts_with = "train")]
        demos: Option<PathBuf>,
        /// Retrieve demonstrations from these training records instead.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Number of demonstrations.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Print chat messages as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct EvaluateArgs {
    /// Test question records (JSONL).
    #[arg(long)]
    test: PathBuf,
    /// Model config (TOML).
    #[arg(long)]
    model: PathBuf,
    /// Retrieve demonstrations from `--train`.
    #[arg(long, requires = "train")]
    rag: bool,
    /// Retrieved demonstrations per question (1-3); defaults to the config's
    /// retriever k.
    #[arg(long, requires = "rag", value_parser = clap::value_parser!(u8).range(1..=3))]
    k: Option<u8>,
    #[arg(long)]
    train: Option<PathBuf>,
    /// Fixed demonstrations per question (1-6).
    #[arg(long, conflicts_with = "rag", value_parser = clap::value_parser!(u8).range(1..=6))]
    shots: Option<u8>,
    /// Fixed demonstrations (JSONL); the bundled set when omitted.
    #[arg(long, conflicts_with = "rag")]
    demos: Option<PathBuf>,
    /// Concurrent model calls.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Per-pair log; an existing log is resumed.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report output (JSON).
    #[arg(long)]
    out: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_query(path: &Path) -> Result<TvlQuery> {
    let text = read_text(path)?;
    parse_tvl(text.trim()).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_registry(path: &Path) -> Result<AreaRegistry> {
    Ok(AreaRegistry::from_geojson(&read_text(path)?).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn load_store(path: &Path) -> Result<TrajStore> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(TrajStore::from_csv(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn load_records(path: &Path) -> Result<Vec<tvl_harness::DatasetRecord>> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(read_jsonl(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn load_demos(path: Option<&Path>) -> Result<Vec<Demo>> {
    let Some(path) = path else { return Ok(default_demos()) };
    read_text(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| format!("{}: {e}", path.display()).into()))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| format!("{}: {e}", path.display()))?))
}

fn run_query(file: &Path, src: &Sources) -> Result<(TvlQuery, AreaRegistry, ResultTable)> {
    let q = load_query(file)?;
    let reg = load_registry(&src.areas)?;
    let store = load_store(&src.data)?;
    let compiled = compile_to_sql(&q, &reg)?;
    let table = execute(&compiled, &store, &reg)?;
    Ok((q, reg, table))
}

#[derive(Deserialize)]
struct PredLine {
    id: String,
    #[serde(default)]
    tvl: Option<String>,
    #[serde(default)]
    completion: Option<String>,
}

fn report_rows<'a>(model: &'a str, sets: &'a [(String, EvalReport)]) -> Vec<TableRow<'a>> {
    sets.iter().map(|(s, r)| TableRow { test_set: s, model, report: r }).collect()
}

fn score(gold: &Path, pred: &Path, out: Option<&Path>) -> Result<()> {
    let gold = load_records(gold)?;
    let mut preds = std::collections::HashMap::new();
    for (i, line) in read_text(pred)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PredLine = serde_json::from_str(line).map_err(|e| format!("{}:{}: {e}", pred.display(), i + 1))?;
        preds.insert(p.id, p.tvl.or(p.completion).unwrap_or_default());
    }
    let mut by_scenario: std::collections::BTreeMap<String, Vec<_>> = Default::default();
    let mut all = Vec::new();
    for (i, g) in gold.iter().enumerate() {
        let gq = parse_tvl(&g.tvl).map_err(|e| format!("gold record {}: {e}", i + 1))?;
        let prediction = match preds.get(&g.id) {
            Some(text) => parse_model_output(text),
            None => Err(FormatFailure::Empty),
        };
        let v = compare_pair(&gq, &prediction).verdicts;
        by_scenario.entry(g.scenario.to_string()).or_default().push(v);
        all.push(v);
    }
    let mut sets: Vec<(String, EvalReport)> = Vec::new();
    for (s, vs) in by_scenario {
        sets.push((s, score_verdicts(vs)?));
    }
    sets.push(("all".into(), score_verdicts(all)?));
    print!("{}", format_table(&report_rows("offline", &sets)));
    if let Some(out) = out {
        let doc: serde_json::Map<String, serde_json::Value> =
            sets.iter().map(|(s, r)| (s.clone(), serde_json::to_value(r).expect("report serializes"))).collect();
        let mut w = create(out)?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let test = load_records(&a.test)?;
    let cfg = ModelConfig::load(&a.model)?;
    let model = HttpModel::new(cfg.clone())?;
    let opts = RunOptions { jobs: a.jobs, checkpoint: a.checkpoint.clone(), limit: None };
    let retriever: Option<Box<dyn Retriever>> = match (&a.train, a.rag) {
        (Some(train), true) => {
            let train = load_records(train)?;
            Some(match cfg.retriever {
                RetrieverConfig::Embedding { .. } => Box::new(EmbeddingRetriever::new(train, HttpModel::new(cfg.clone())?)?),
                _ => Box::new(LexicalRetriever::new(train)),
            })
        }
        _ => None,
    };
    let shots = match &retriever {
        Some(r) => {
            let k = a.k.map(usize::from).or(cfg.retriever.k()).unwrap_or(3);
            ShotPolicy::Retrieved { retriever: r.as_ref(), k }
        }
        None => ShotPolicy::Fixed { demos: load_demos(a.demos.as_deref())?, k: a.shots.map_or(1, usize::from) },
    };
    let res = run_experiment(&test, &model, &shots, &opts)?;
    print!("{}", res.table());
    let mut w = create(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &res)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    match cli.command {
        Command::Parse { file } => println!("{}", render_tvl(&load_query(&file)?)),
        Command::Compile { file, areas } => {
            let compiled = compile_to_sql(&load_query(&file)?, &load_registry(&areas)?)?;
            println!("{}", compiled.text);
        }
        Command::Exec { file, src, delimiter } => {
            let (_, _, table) = run_query(&file, &src)?;
            let delim = u8::try_from(delimiter).map_err(|_| "delimiter must be a single ASCII character")?;
            let mut w = csv::WriterBuilder::new().delimiter(delim).from_writer(stdout.lock());
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
        }
        Command::RenderSpec { file, src, out } => {
            let (q, reg, table) = run_query(&file, &src)?;
            let spec = emit_spec(&q, &table, &reg)?;
            match out {
                Some(p) => std::fs::write(&p, format!("{}\n", spec.document)).map_err(|e| format!("{}: {e}", p.display()))?,
                None => println!("{}", spec.document),
            }
        }
        Command::RenderPng { file, src, out, width, height } => {
            let (q, reg, table) = run_query(&file, &src)?;
            let spec = emit_spec(&q, &table, &reg)?;
            let outline = q.area.as_ref().and_then(|a| reg.get(a)).map(|r| r.polygon.exterior.clone());
            png::render_png(&spec, &table, outline.as_deref(), &out, (width, height))?;
        }
        Command::Generate { src, config, seed, out, questions } => {
            let mut cfg = match config {
                Some(p) => toml::from_str::<GenConfig>(&read_text(&p)?).map_err(|e| format!("{}: {e}", p.display()))?,
                None => GenConfig::default(),
            };
            cfg.rng_seed = seed;
            let reg = load_registry(&src.areas)?;
            let store = load_store(&src.data)?;
            let corpus = generate_corpus(&store, &reg, &cfg)?;
            if questions {
                write_jsonl(create(&out)?, &questions_for(&corpus)?)?;
            } else {
                write_jsonl(create(&out)?, &corpus)?;
            }
            eprintln!("wrote {} statements to {}", corpus.len(), out.display());
        }
        Command::Synth { areas, seed, points, users, out } => {
            let reg = match areas {
                Some(p) => load_registry(&p)?,
                None => fixture_registry(),
            };
            if users < 1 {
                return Err("--users must be at least 1".into());
            }
            let store = synthetic_store(SynthConfig { seed, points, users }, &reg);
            store.write_csv(create(&out)?)?;
        }
        Command::Areas => println!("{}", fixture_registry().to_geojson()),
        Command::Prompts(p) => prompts(p)?,
        Command::Split { input, train_n, test_n, seed, train_out, test_out } => {
            let records = load_records(&input)?;
            let (train, test) = split_dataset(&records, train_n, test_n, seed)?;
            write_jsonl(create(&train_out)?, &train)?;
            write_jsonl(create(&test_out)?, &test)?;
        }
        Command::Evaluate(a) => evaluate(&a)?,
        Command::Score { gold, pred, out } => score(&gold, &pred, out.as_deref())?,
        Command::Stub { records, mode } => {
            let mode: StubMode = mode.parse()?;
            let stub = StubServer::start(mode, &load_records(&records)?)?;
            println!("{}", stub.url());
            io::stdout().flush()?;
            loop {
                std::thread::park();
            }
        }
    }
    Ok(())
}

fn prompts(p: PromptCommand) -> Result<()> {
    let specs = match p {
        PromptCommand::Gen { file } => build_nlq_prompts(&load_query(&file)?),
        PromptCommand::Correct { file, question, issue } => vec![build_correction_prompt(&load_query(&file)?, &question, issue)],
        PromptCommand::Fewshot { question, demos, train, k, json } => {
            if k == 0 {
                return Err("--k must be at least 1".into());
            }
            let demos = match train {
                Some(t) => LexicalRetriever::new(load_records(&t)?)
                    .top_k(&question, k)?
                    .into_iter()
                    .rev()
                    .map(|(_, r)| Demo::from(r))
                    .collect(),
                None => load_demos(demos.as_deref())?.into_iter().take(k).collect::<Vec<_>>(),
            };
            if demos.is_empty() {
                return Err("no demonstrations available".into());
            }
            let spec = build_fewshot_prompt(&question, &demos);
            if json {
                println!("{}", serde_json::to_string_pretty(&spec.messages())?);
                return Ok(());
            }
            vec![spec]
        }
    };
    let text: Vec<String> = specs.iter().map(|s| s.render()).collect();
    print!("{}", text.join("\n"));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
