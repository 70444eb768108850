//! Command-line pipeline: ingest, build the corpus, fit models, update, score
//! sentiment, embed, measure coherence, index and serve.
//!
//! Every stage reads and writes fixed file names under the work directory, so
//! stages can be rerun independently.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use trendweave_core::analytics::{embed_model, model_coherence};
use trendweave_core::corpus::{
    self, ingest_file, normalize, normalize_batch, Granularity, Language, NormalizationConfig,
    RawRecord, SlicedCorpus, Vocabulary,
};
use trendweave_core::dtm::{self, DtmConfig};
use trendweave_core::exports::{self, read_json, write_json, TOPIC_WORDS};
use trendweave_core::incremental::{sequential_update, UpdateBatch};
use trendweave_core::lda::{fit_lda, LdaConfig, DEFAULT_TOPICS};
use trendweave_core::sentiment::{aggregate, read_scores, score_records, Lexicon, SentimentReport};
use trendweave_core::synthetic::{self, SyntheticSpec};
use trendweave_server::{BuildInputs, IndexStore, ServeOptions};

pub const WORKDIR_ENV: &str = "TRENDWEAVE_WORKDIR";
const DEFAULT_WORKDIR: &str = "trendweave-work";
const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or parameter values; exit code 1.
    Usage(String),
    /// Missing, malformed or inconsistent data; exit code 2.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<trendweave_core::Error> for CliError {
    fn from(e: trendweave_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<trendweave_server::Error> for CliError {
    fn from(e: trendweave_server::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "trendweave", version, about = "Trend tracking over time-sliced opinion corpora")]
pub struct Cli {
    /// Work directory holding every stage's files [env: TRENDWEAVE_WORKDIR]
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// TOML file of default values; flags win over it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSON array of raw records into the work directory
    Ingest(IngestArgs),
    /// Normalize, build the vocabulary, slice by time and export the corpus
    Corpus(CorpusArgs),
    /// Fit a static topic model over the whole corpus
    FitLda(FitArgs),
    /// Fit the dynamic topic model over all slices
    FitDtm(FitArgs),
    /// Add a batch of records as a new slice without refitting earlier slices
    Update(UpdateArgs),
    /// Score sentences and aggregate sentiment to documents, topics and terms
    Sentiment(SentimentArgs),
    /// Embed topics in two dimensions for every slice
    Embed,
    /// Topic coherence of the dynamic model
    Coherence(CoherenceArgs),
    /// Build the query index store
    Index,
    /// Serve the index store over HTTP
    Serve(ServeArgs),
    /// Write a synthetic record file drawn from a known drifting model
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON array of records with id, created_at, title, body and url
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Slice length: daily, weekly, monthly or yearly
    #[arg(long)]
    pub granularity: Option<String>,
    /// Stopword language: english or spanish
    #[arg(long)]
    pub language: Option<String>,
    /// File of stopwords, one per line, replacing the bundled list
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Drop terms occurring fewer times than this
    #[arg(long)]
    pub min_frequency: Option<u64>,
    /// Drop terms shorter than this many characters
    #[arg(long)]
    pub min_length: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Number of topics
    #[arg(long)]
    pub topics: Option<usize>,
    /// Symmetric Dirichlet prior on document proportions (default 1/topics)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Process variance of the topic chains (dynamic model only)
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum EM iterations
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    /// JSON array of records falling in the period after the last slice
    #[arg(long)]
    pub batch: PathBuf,
}

#[derive(Debug, Args)]
pub struct SentimentArgs {
    /// Lexicon file of `term tag` lines (tag positive or negative)
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Precomputed sentence scores, used instead of the lexicon scorer
    #[arg(long)]
    pub scores_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoherenceArgs {
    /// Top words per topic entering the score
    #[arg(long)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on
    #[arg(long)]
    pub bind: Option<String>,
    /// Directory of browser files served under /ui/
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Seconds between checks for a newly published store (0 disables)
    #[arg(long)]
    pub poll_secs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output JSON file
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub slices: usize,
    #[arg(long, default_value_t = 100)]
    pub docs_per_slice: usize,
    #[arg(long, default_value_t = 500)]
    pub terms: usize,
    /// Number of generating topics
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write only the last slice here and the others to --output
    #[arg(long)]
    pub split_last: Option<PathBuf>,
}

/// Values read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub granularity: Option<String>,
    pub language: Option<String>,
    pub stopwords: Option<PathBuf>,
    #[serde(alias = "min-frequency")]
    pub min_frequency: Option<u64>,
    #[serde(alias = "min-length")]
    pub min_length: Option<usize>,
    pub topics: Option<usize>,
    pub alpha: Option<f64>,
    pub sigma2: Option<f64>,
    pub seed: Option<u64>,
    #[serde(alias = "max-iter")]
    pub max_iter: Option<usize>,
    pub lexicon: Option<PathBuf>,
    #[serde(alias = "scores-file")]
    pub scores_file: Option<PathBuf>,
    #[serde(alias = "top-n")]
    pub top_n: Option<usize>,
    pub bind: Option<String>,
    #[serde(alias = "ui-dir")]
    pub ui_dir: Option<PathBuf>,
    #[serde(alias = "poll-secs")]
    pub poll_secs: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Paths of every file the pipeline reads or writes.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn records(&self) -> PathBuf {
        self.root.join("records.json")
    }
    pub fn ingest_errors(&self) -> PathBuf {
        self.root.join("ingest-errors.json")
    }
    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }
    pub fn normalization(&self) -> PathBuf {
        self.corpus().join("normalization.json")
    }
    pub fn lda(&self) -> PathBuf {
        self.root.join("lda")
    }
    pub fn dtm(&self) -> PathBuf {
        self.root.join("dtm")
    }
    pub fn model(&self) -> PathBuf {
        self.dtm().join("model.bin")
    }
    pub fn dtm_config(&self) -> PathBuf {
        self.dtm().join("config.json")
    }
    pub fn sentiment(&self) -> PathBuf {
        self.root.join("sentiment")
    }
    pub fn sentiment_report(&self) -> PathBuf {
        self.sentiment().join("report.json")
    }
    pub fn analytics(&self) -> PathBuf {
        self.root.join("analytics")
    }
    pub fn embedding(&self) -> PathBuf {
        self.analytics().join("embedding.json")
    }
    pub fn index(&self) -> PathBuf {
        self.root.join("index")
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn require(p: &Path, stage: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} is missing; run `trendweave {stage}` first", p.display())))
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parse `argv` and run. Returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.verbose {
        let _ = env_logger::Builder::new().filter_level(log::LevelFilter::Info).try_init();
    } else {
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    }
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let root = cli
        .workdir
        .clone()
        .or_else(|| cfg.workdir.clone())
        .or_else(|| std::env::var_os(WORKDIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_WORKDIR));
    let layout = Layout { root };
    match cli.command {
        Command::Ingest(a) => ingest(&layout, &cfg, a),
        Command::Corpus(a) => build_corpus(&layout, &cfg, a),
        Command::FitLda(a) => run_lda(&layout, &cfg, a),
        Command::FitDtm(a) => run_dtm(&layout, &cfg, a),
        Command::Update(a) => update(&layout, a),
        Command::Sentiment(a) => sentiment(&layout, &cfg, a),
        Command::Embed => embed(&layout),
        Command::Coherence(a) => coherence(&layout, &cfg, a),
        Command::Index => index(&layout),
        Command::Serve(a) => serve(&layout, &cfg, a),
        Command::Synth(a) => synth(a),
    }
}

fn ingest(layout: &Layout, cfg: &FileConfig, a: IngestArgs) -> Result<()> {
    let input = a
        .input
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| CliError::Usage("ingest needs --input".into()))?;
    let got = ingest_file(&input)?;
    mkdir(&layout.root)?;
    write_json(&layout.records(), &got.records)?;
    write_json(&layout.ingest_errors(), &got.errors)?;
    for e in &got.errors {
        log::warn!("record {} ({:?}): {}", e.index, e.id, e.message);
    }
    println!("ingested {} records, {} errors", got.records.len(), got.errors.len());
    Ok(())
}

fn build_corpus(layout: &Layout, cfg: &FileConfig, a: CorpusArgs) -> Result<()> {
    let granularity: Granularity = a
        .granularity
        .or_else(|| cfg.granularity.clone())
        .unwrap_or_else(|| "monthly".into())
        .parse()
        .map_err(usage)?;
    let mut norm = NormalizationConfig::default();
    if let Some(l) = a.language.or_else(|| cfg.language.clone()) {
        norm.language = l.parse::<Language>().map_err(usage)?;
    }
    if let Some(v) = a.min_frequency.or(cfg.min_frequency) {
        norm.min_frequency = v;
    }
    if let Some(v) = a.min_length.or(cfg.min_length) {
        norm.min_length = v;
    }
    norm.validate().map_err(usage)?;
    if let Some(p) = a.stopwords.or_else(|| cfg.stopwords.clone()) {
        norm = norm.with_stopword_file(&p)?;
    }
    require(&layout.records(), "ingest")?;
    let records: Vec<RawRecord> = read_json(&layout.records())?;
    let (vocab, docs) = normalize(&records, &norm)?;
    let sliced = corpus::slice(&docs, granularity)?;
    let dir = layout.corpus();
    corpus::export(&sliced, &vocab, &dir)?;
    write_json(&layout.normalization(), &norm)?;
    write_frequency(&dir, &vocab)?;
    let empty = sliced.slices.iter().filter(|s| s.empty).count();
    println!(
        "{} documents, {} terms, {} {granularity} slices ({empty} empty)",
        sliced.num_docs(),
        vocab.len(),
        sliced.num_slices()
    );
    Ok(())
}

fn write_frequency(dir: &Path, vocab: &Vocabulary) -> Result<()> {
    let p = dir.join("frequency.txt");
    std::fs::write(&p, exports::frequency_text(vocab)).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
}

fn load_corpus(layout: &Layout) -> Result<(SlicedCorpus, Vocabulary)> {
    require(&layout.corpus().join(corpus::VOCAB_FILE), "corpus")?;
    Ok(corpus::import(&layout.corpus())?)
}

fn topics_arg(a: &FitArgs, cfg: &FileConfig) -> Result<usize> {
    let k = a.topics.or(cfg.topics).unwrap_or(DEFAULT_TOPICS);
    if k == 0 {
        return Err(CliError::Usage("--topics must be at least 1".into()));
    }
    Ok(k)
}

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Usage(format!("--{name} must be positive, got {x}"))),
        other => Ok(other),
    }
}

/// Fit report without the wall-clock timings, which go to a separate file so
/// that reruns produce identical reports.
#[derive(Serialize)]
struct LdaReport<'a> {
    bounds: &'a [f64],
    converged: bool,
}

fn run_lda(layout: &Layout, cfg: &FileConfig, a: FitArgs) -> Result<()> {
    let mut lc = LdaConfig {
        num_topics: topics_arg(&a, cfg)?,
        alpha: positive("alpha", a.alpha.or(cfg.alpha))?,
        ..LdaConfig::default()
    };
    if let Some(s) = a.seed.or(cfg.seed) {
        lc.seed = s;
    }
    if let Some(n) = a.max_iter.or(cfg.max_iter) {
        lc.max_iter = n;
    }
    let (sliced, vocab) = load_corpus(layout)?;
    let docs: Vec<_> = sliced.documents.iter().map(|d| d.counts.clone()).collect();
    let fitted = fit_lda(&docs, vocab.len(), &lc)?;
    let dir = layout.lda();
    mkdir(&dir)?;
    write_json(&dir.join("model.json"), &fitted.model)?;
    write_json(&dir.join("topic-word.json"), &exports::lda_topic_words(&fitted.model, &vocab, TOPIC_WORDS)?)?;
    write_json(&dir.join("doc-topic.json"), &exports::lda_doc_topics(&sliced, &fitted.docs)?)?;
    write_json(
        &dir.join("report.json"),
        &LdaReport {
            bounds: &fitted.bounds,
            converged: fitted.converged,
        },
    )?;
    if !fitted.converged {
        log::warn!("LDA stopped at the iteration limit before converging");
    }
    println!("fitted {} topics over {} documents", lc.num_topics, docs.len());
    Ok(())
}

#[derive(Serialize)]
struct DtmReportOut<'a> {
    iterations: usize,
    converged: bool,
    bounds: &'a [f64],
    slice_ledger: &'a [dtm::LedgerEntry],
    topic_terms: &'a [Vec<dtm::TopicTerms>],
}

fn run_dtm(layout: &Layout, cfg: &FileConfig, a: FitArgs) -> Result<()> {
    let k = topics_arg(&a, cfg)?;
    let mut dc = DtmConfig::new(k);
    if let Some(al) = positive("alpha", a.alpha.or(cfg.alpha))? {
        dc.hyper.alpha = al;
    }
    if let Some(s2) = positive("sigma2", a.sigma2.or(cfg.sigma2))? {
        dc.hyper.sigma2 = s2;
        dc.hyper.delta2 = s2;
    }
    if let Some(s) = a.seed.or(cfg.seed) {
        dc.seed = s;
    }
    if let Some(n) = a.max_iter.or(cfg.max_iter) {
        dc.max_iter = n;
    }
    let (sliced, vocab) = load_corpus(layout)?;
    let (model, report) = dtm::fit(&sliced, vocab.len(), &dc)?;
    let dir = layout.dtm();
    mkdir(&dir)?;
    dtm::write_model(&model, &layout.model())?;
    write_json(&layout.dtm_config(), &dc)?;
    write_dtm_views(layout, &model, &sliced, &vocab)?;
    write_json(
        &dir.join("fit-report.json"),
        &DtmReportOut {
            iterations: report.iterations,
            converged: report.converged,
            bounds: &report.bounds,
            slice_ledger: &report.slice_ledger,
            topic_terms: &report.topic_terms,
        },
    )?;
    write_json(&dir.join("fit-timings.json"), &report.timings)?;
    if !report.converged {
        log::warn!("EM stopped at the iteration limit before converging");
    }
    println!(
        "fitted {k} topics over {} slices in {} iterations ({:.2} s)",
        model.num_slices(),
        report.iterations,
        report.timings.total_secs
    );
    Ok(())
}

fn write_dtm_views(layout: &Layout, model: &dtm::DtmModel, sliced: &SlicedCorpus, vocab: &Vocabulary) -> Result<()> {
    let dir = layout.dtm();
    write_json(&dir.join("topic-word.json"), &exports::dtm_topic_words(model, vocab, TOPIC_WORDS)?)?;
    write_json(&dir.join("doc-topic.json"), &exports::dtm_doc_topics(model, sliced)?)?;
    Ok(())
}

fn load_model(layout: &Layout) -> Result<dtm::DtmModel> {
    require(&layout.model(), "fit-dtm")?;
    Ok(dtm::read_model(&layout.model())?)
}

#[derive(Serialize)]
struct UpdateReportOut<'a> {
    new_documents: usize,
    new_terms: usize,
    alignment: &'a [usize],
    bounds: &'a [f64],
    global_bound: f64,
    iterations: usize,
    converged: bool,
}

fn update(layout: &Layout, a: UpdateArgs) -> Result<()> {
    let model = load_model(layout)?;
    let (sliced, mut vocab) = load_corpus(layout)?;
    require(&layout.normalization(), "corpus")?;
    let norm: NormalizationConfig = read_json(&layout.normalization())?;
    let dc: DtmConfig = read_json(&layout.dtm_config())?;
    let got = ingest_file(&a.batch)?;
    for e in &got.errors {
        log::warn!("batch record {} ({:?}): {}", e.index, e.id, e.message);
    }
    let old_terms = vocab.len();
    let (docs, new_ids) = normalize_batch(&got.records, &norm, &mut vocab)?;
    debug_assert!(new_ids.iter().enumerate().all(|(i, &w)| w == old_terms + i));
    let mut documents: Vec<_> = docs
        .iter()
        .map(|d| corpus::Document {
            id: d.id.clone(),
            timestamp: d.created_at,
            counts: d.counts(),
        })
        .collect();
    documents.sort_by(|x, y| x.timestamp.cmp(&y.timestamp).then_with(|| x.id.cmp(&y.id)));
    let batch = UpdateBatch {
        documents,
        new_terms: new_ids.len(),
    };
    let up = sequential_update(&model, &sliced, &batch, &dc, None)?;

    dtm::write_model(&up.model, &layout.model())?;
    corpus::export(&up.corpus, &vocab, &layout.corpus())?;
    write_frequency(&layout.corpus(), &vocab)?;
    let mut records: Vec<RawRecord> = read_json(&layout.records())?;
    records.extend(got.records);
    write_json(&layout.records(), &records)?;
    write_dtm_views(layout, &up.model, &up.corpus, &vocab)?;
    let r = &up.report;
    write_json(
        &layout.dtm().join("update-report.json"),
        &UpdateReportOut {
            new_documents: r.new_documents,
            new_terms: r.new_terms,
            alignment: &r.alignment,
            bounds: &r.bounds,
            global_bound: r.global_bound,
            iterations: r.iterations,
            converged: r.converged,
        },
    )?;
    write_json(&layout.dtm().join("update-timings.json"), &r.timings)?;
    println!(
        "added slice {} with {} documents and {} new terms ({:.2} s)",
        up.model.num_slices() - 1,
        r.new_documents,
        r.new_terms,
        r.timings.total_secs
    );
    Ok(())
}

fn sentiment(layout: &Layout, cfg: &FileConfig, a: SentimentArgs) -> Result<()> {
    let model = load_model(layout)?;
    let (sliced, vocab) = load_corpus(layout)?;
    let sentences = match a.scores_file.or_else(|| cfg.scores_file.clone()) {
        Some(p) => read_scores(&p)?,
        None => {
            let lexicon = match a.lexicon.or_else(|| cfg.lexicon.clone()) {
                Some(p) => Lexicon::load(&p)?,
                None => Lexicon::bundled(),
            };
            let records: Vec<RawRecord> = read_json(&layout.records())?;
            score_records(&records, &lexicon)
        }
    };
    let report = aggregate(&model, &sliced, sentences)?;
    let dir = layout.sentiment();
    mkdir(&dir)?;
    report.write(&dir, vocab.terms())?;
    write_json(&layout.sentiment_report(), &report)?;
    if report.neutral_docs > 0 {
        log::warn!("{} documents had no scored sentence and count as neutral", report.neutral_docs);
    }
    println!(
        "scored {} sentences over {} documents",
        report.sentences.len(),
        report.doc_ids.len()
    );
    Ok(())
}

fn embed(layout: &Layout) -> Result<()> {
    let model = load_model(layout)?;
    let emb = embed_model(&model)?;
    mkdir(&layout.analytics())?;
    write_json(&layout.embedding(), &emb)?;
    println!("embedded {} topics in {} slices", model.num_topics(), emb.len());
    Ok(())
}

fn coherence(layout: &Layout, cfg: &FileConfig, a: CoherenceArgs) -> Result<()> {
    let top_n = a.top_n.or(cfg.top_n).unwrap_or(10);
    if top_n < 2 {
        return Err(CliError::Usage("--top-n must be at least 2".into()));
    }
    let model = load_model(layout)?;
    let (sliced, _) = load_corpus(layout)?;
    let rep = model_coherence(&model, &sliced, top_n)?;
    mkdir(&layout.analytics())?;
    write_json(&layout.analytics().join("coherence.json"), &rep)?;
    println!("mean coherence {:.4} (variance {:.4})", rep.mean, rep.variance);
    Ok(())
}

fn index(layout: &Layout) -> Result<()> {
    let model = load_model(layout)?;
    let (sliced, vocab) = load_corpus(layout)?;
    let records: Vec<RawRecord> = read_json(&layout.records())?;
    let sentiment: Option<SentimentReport> = if layout.sentiment_report().exists() {
        Some(read_json(&layout.sentiment_report())?)
    } else {
        log::warn!("no sentiment report; the index will have no sentiment views");
        None
    };
    let embedding = if layout.embedding().exists() {
        read_json(&layout.embedding())?
    } else {
        embed_model(&model)?
    };
    let store = IndexStore::build(&BuildInputs {
        model: &model,
        corpus: &sliced,
        vocab: &vocab,
        records: &records,
        sentiment: sentiment.as_ref(),
        embedding: &embedding,
    })?;
    store.save(&layout.index())?;
    println!("published index version {}", store.version());
    Ok(())
}

fn serve(layout: &Layout, cfg: &FileConfig, a: ServeArgs) -> Result<()> {
    let bind = a.bind.or_else(|| cfg.bind.clone()).unwrap_or_else(|| DEFAULT_BIND.into());
    let poll = a.poll_secs.or(cfg.poll_secs).unwrap_or(5);
    require(&layout.index().join("manifest.json"), "index")?;
    let opts = ServeOptions {
        store_dir: layout.index(),
        bind,
        ui_dir: a.ui_dir.or_else(|| cfg.ui_dir.clone()),
        poll: (poll > 0).then(|| Duration::from_secs(poll)),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    rt.block_on(trendweave_server::serve(opts))?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_slices: a.slices,
        docs_per_slice: a.docs_per_slice,
        num_terms: a.terms,
        num_topics: a.topics,
        seed: a.seed.unwrap_or(SyntheticSpec::default().seed),
        ..SyntheticSpec::default()
    };
    let syn = synthetic::generate(&spec).map_err(usage)?;
    let mut records = syn.records;
    if let Some(p) = &a.split_last {
        if spec.num_slices < 2 {
            return Err(CliError::Usage("--split-last needs at least two slices".into()));
        }
        let tail = records.split_off(syn.corpus.slices[spec.num_slices - 1].start);
        write_json(p, &tail)?;
    }
    write_json(&a.output, &records)?;
    println!("wrote {} records", records.len());
    Ok(())
}
