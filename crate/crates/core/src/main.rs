use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use biasweat::config::{self, SetRef};
use biasweat::corpus::{
    self, GloveConfig, InputFormat, PreprocessOptions, Rules, TokenizedCorpus, Weighting,
};
use biasweat::embedding::{self, EmbeddingTable, LoadOptions};
use biasweat::lexicon::{self, BalancePolicy, BiasTestSpec};
use biasweat::report::{self, ReportFormat, Rounding};
use biasweat::weat::{
    self, Comparator, PermutationAxis, PermutationMode, PermutationPlan, StdConvention, WeatResult,
};
use biasweat::{parallel, Error};

#[derive(Parser)]
#[command(
    name = "biasweat",
    version,
    about = "Word embedding association tests for tweet embeddings"
)]
struct Cli {
    /// Worker threads (1 forces the sequential path); capped by BIASWEAT_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one association test against an embedding file.
    Weat(WeatArgs),
    /// Run every test × embedding cell of a JSON experiment config.
    Suite(SuiteArgs),
    /// Preprocess a tweet dump and train GloVe embeddings on it.
    Train(TrainArgs),
    /// Tokenize a tweet dump, one document per output line.
    Preprocess(PreprocessArgs),
    /// Print vocabulary size, dimension and word-set coverage of an embedding file.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Glove,
    Word2vec,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Mc,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum ComparatorArg {
    Geq,
    Gt,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Target,
    Attribute,
}

#[derive(Clone, Copy, ValueEnum)]
enum StdArg {
    Population,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum BalanceArg {
    Error,
    TruncateSeeded,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundingArg {
    Paper,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormatArg {
    Auto,
    Jsonl,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    InverseDistance,
    Flat,
}

#[derive(Args)]
struct EmbeddingArgs {
    #[arg(long, value_enum, default_value = "glove")]
    format: FormatArg,
    /// Keep tokens exactly as stored instead of case-folding them.
    #[arg(long)]
    no_lowercase: bool,
}

impl EmbeddingArgs {
    fn load(&self, path: &Path) -> Result<EmbeddingTable, Error> {
        let options = LoadOptions {
            lowercase: !self.no_lowercase,
            ..Default::default()
        };
        Ok(match self.format {
            FormatArg::Glove => embedding::load_glove_text(path, &options)?,
            FormatArg::Word2vec => embedding::load_word2vec_text(path, &options)?,
        })
    }
}

#[derive(Args)]
struct WeatArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[command(flatten)]
    embedding: EmbeddingArgs,
    /// Builtin set name or comma-separated tokens.
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    #[arg(long, default_value_t = weat::DEFAULT_DRAWS)]
    draws: u64,
    #[arg(long, value_enum, default_value = "geq")]
    comparator: ComparatorArg,
    #[arg(long, value_enum, default_value = "target")]
    axis: AxisArg,
    #[arg(long, default_value_t = weat::DEFAULT_MAX_EXACT_PARTITIONS)]
    max_exact_partitions: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "std", value_enum, default_value = "population")]
    std_convention: StdArg,
    #[arg(long, value_enum, default_value = "truncate-seeded")]
    balance: BalanceArg,
    #[arg(long, default_value_t = lexicon::DEFAULT_MIN_SET_SIZE)]
    min_set_size: usize,
    /// Print the full result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: ReportFormatArg,
    #[arg(long, value_enum, default_value = "paper")]
    rounding: RoundingArg,
    /// Also write bar-chart data (JSON) here.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    input_format: InputFormatArg,
    /// JSON field holding the text (default: full_text, then text).
    #[arg(long)]
    text_field: Option<String>,
    #[arg(long)]
    no_lowercase: bool,
    #[arg(long)]
    keep_urls: bool,
    #[arg(long)]
    drop_hashtags: bool,
    #[arg(long)]
    drop_mentions: bool,
    #[arg(long)]
    dedupe_exact: bool,
    /// `anti_chinese_14` or comma-separated hashtags; keeps only matching tweets.
    #[arg(long)]
    hashtag_filter: Option<String>,
}

impl CorpusArgs {
    fn load(&self) -> Result<TokenizedCorpus, Error> {
        let options = PreprocessOptions {
            rules: Rules {
                lowercase: !self.no_lowercase,
                strip_urls: !self.keep_urls,
                keep_hashtags: !self.drop_hashtags,
                keep_mentions: !self.drop_mentions,
                dedupe_exact: self.dedupe_exact,
            },
            format: match self.input_format {
                InputFormatArg::Auto => InputFormat::Auto,
                InputFormatArg::Jsonl => InputFormat::JsonLines,
                InputFormatArg::Text => InputFormat::PlainText,
            },
            text_field: self.text_field.clone(),
        };
        let corpus = corpus::preprocess_tweets(&self.input, &options)?;
        let corpus = match &self.hashtag_filter {
            None => corpus,
            Some(spec) => {
                let tags: Vec<String> = if spec == "anti_chinese_14" {
                    corpus::ANTI_CHINESE_14.iter().map(|s| s.to_string()).collect()
                } else {
                    split_list(spec)
                };
                let filtered = corpus::filter_by_hashtags(&corpus, &tags);
                for w in &filtered.warnings {
                    eprintln!("warning: {w}");
                }
                if filtered.is_empty() {
                    return Err(corpus::CorpusError::EmptyCorpus.into());
                }
                filtered
            }
        };
        Ok(corpus)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = GloveConfig::default().dimension)]
    dimension: usize,
    #[arg(long, default_value_t = GloveConfig::default().window)]
    window: usize,
    #[arg(long, default_value_t = GloveConfig::default().x_max)]
    x_max: f64,
    #[arg(long, default_value_t = GloveConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = GloveConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = GloveConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = GloveConfig::default().min_count)]
    min_count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "inverse-distance")]
    weighting: WeightingArg,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    path: PathBuf,
    #[command(flatten)]
    embedding: EmbeddingArgs,
    /// Builtin word set whose coverage to report; repeatable.
    #[arg(long)]
    check_wordset: Vec<String>,
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn set_ref(s: &str) -> SetRef {
    if s.contains(',') {
        SetRef::Inline(split_list(s))
    } else {
        SetRef::Builtin(s.to_string())
    }
}

fn print_result(r: &WeatResult, json: bool) -> Result<(), Error> {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(r).map_err(report::ReportError::from)?
        );
        return Ok(());
    }
    let se = r
        .mc_standard_error
        .map(|s| format!(" (se {s:.2e})"))
        .unwrap_or_default();
    println!("test        {}", r.test_name);
    println!("d           {:.6}", r.effect_size_d);
    println!("p           {:.6}{se}", r.p_value);
    println!("statistic   {:.6}", r.statistic_observed);
    println!("m / n       {} / {}", r.m, r.n);
    println!(
        "method      {} over {} {}",
        r.method,
        r.partitions_or_draws,
        if r.method == weat::Method::Exact {
            "partitions"
        } else {
            "draws"
        }
    );
    println!(
        "settings    comparator={} std={} axis={} seed={} balance_seed={}",
        r.comparator, r.std_convention, r.axis, r.seed, r.balance_seed
    );
    if r.audit.is_empty() {
        println!("audit       none");
    }
    for e in &r.audit {
        let why = match e.reason {
            lexicon::DropReason::Oov => "oov",
            lexicon::DropReason::DroppedForBalance => "dropped_for_balance",
        };
        println!("audit       {}:{} {why}", e.set, e.token);
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_weat(args: &WeatArgs) -> Result<(), Error> {
    let role = |r: &str, v: &str| set_ref(v).to_wordset(&format!("cli.{r}"));
    let spec = BiasTestSpec::new(
        format!("{}/{} vs {}/{}", args.x, args.y, args.a, args.b),
        role("x", &args.x)?,
        role("y", &args.y)?,
        role("a", &args.a)?,
        role("b", &args.b)?,
    )?
    .with_balance_policy(match args.balance {
        BalanceArg::Error => BalancePolicy::Error,
        BalanceArg::TruncateSeeded => BalancePolicy::TruncateSeeded,
    })
    .with_min_set_size(args.min_set_size);
    let table = args.embedding.load(&args.embeddings)?;
    let resolved = lexicon::resolve(&spec, &table, args.seed)?;
    let plan = PermutationPlan {
        mode: match args.mode {
            ModeArg::Exact => PermutationMode::Exact,
            ModeArg::Mc => PermutationMode::Mc,
            ModeArg::Auto => PermutationMode::Auto,
        },
        comparator: match args.comparator {
            ComparatorArg::Geq => Comparator::Geq,
            ComparatorArg::Gt => Comparator::Gt,
        },
        draws: args.draws,
        seed: args.seed,
        max_exact_partitions: args.max_exact_partitions,
        axis: match args.axis {
            AxisArg::Target => PermutationAxis::Target,
            AxisArg::Attribute => PermutationAxis::Attribute,
        },
    };
    let convention = match args.std_convention {
        StdArg::Population => StdConvention::Population,
        StdArg::Sample => StdConvention::Sample,
    };
    let result = weat::run_weat(&resolved, &plan, convention)?;
    print_result(&result, args.json)
}

fn cmd_suite(args: &SuiteArgs) -> Result<(), Error> {
    let experiment = config::load_experiment(&args.config)?;
    let report = report::run_suite(&experiment);
    for row in report.rows.iter().filter(|r| !r.is_computed()) {
        eprintln!("{} / {}: {}", row.test, row.embedding, row.status.label());
    }
    let format = match args.format {
        ReportFormatArg::Csv => ReportFormat::Csv,
        ReportFormatArg::Json => ReportFormat::Json,
    };
    let rounding = match args.rounding {
        RoundingArg::Paper => Rounding::Paper,
        RoundingArg::Full => Rounding::Full,
    };
    match &args.output {
        Some(path) => report::emit_report(&report, format, rounding, path)?,
        None => report::write_report(&report, format, rounding, std::io::stdout().lock())?,
    }
    if let Some(path) = &args.plot_data {
        report::emit_plot_data(&report, path)?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let corpus = args.corpus.load()?;
    let config = GloveConfig {
        dimension: args.dimension,
        window: args.window,
        x_max: args.x_max,
        alpha: args.alpha,
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        min_count: args.min_count,
        seed: args.seed,
    };
    config.validate()?;
    let vocab = corpus::build_vocab(&corpus, config.min_count)?;
    let weighting = match args.weighting {
        WeightingArg::InverseDistance => Weighting::InverseDistance,
        WeightingArg::Flat => Weighting::Flat,
    };
    let coocc = corpus::count_cooccurrence(&corpus, &vocab, config.window, weighting)?;
    println!(
        "documents {} tokens {} vocab {} pairs {}",
        corpus.len(),
        corpus.token_count(),
        vocab.len(),
        coocc.len()
    );
    let trained = corpus::train_glove_with(&coocc, &config, |epoch, loss| {
        println!("epoch {epoch:>3} loss {loss:.6}");
    })?;
    embedding::save_glove_text(&trained.table, &args.output)?;
    println!(
        "wrote {} vectors of dimension {} to {}",
        trained.table.len(),
        config.dimension,
        args.output.display()
    );
    Ok(())
}

fn cmd_preprocess(args: &PreprocessArgs) -> Result<(), Error> {
    let corpus = args.corpus.load()?;
    let io = |source| embedding::EmbeddingError::Io {
        path: args.output.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(&args.output).map_err(io)?);
    for doc in &corpus.documents {
        writeln!(out, "{}", doc.join(" ")).map_err(io)?;
    }
    out.flush().map_err(io)?;
    let meta = &corpus.rules_meta;
    println!(
        "records {} kept {} empty {} duplicates {}",
        meta.records_read,
        corpus.len(),
        meta.empty_dropped,
        meta.duplicates_dropped
    );
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<(), Error> {
    let table = args.embedding.load(&args.path)?;
    println!("vocab {}", table.len());
    println!("dimension {}", table.dimension());
    for name in &args.check_wordset {
        let set = lexicon::builtin(name)?;
        let missing: Vec<&str> = set
            .tokens()
            .iter()
            .filter(|t| !table.contains(t))
            .map(String::as_str)
            .collect();
        println!(
            "wordset {name}: {}/{} present; missing [{}]",
            set.len() - missing.len(),
            set.len(),
            missing.join(", ")
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = parallel::resolve_threads(cli.threads);
    let outcome = parallel::install(threads, || match &cli.command {
        Command::Weat(a) => cmd_weat(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Train(a) => cmd_train(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Inspect(a) => cmd_inspect(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
