use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use puma_core::corpus::{filter_corpus, Corpus, DEFAULT_MAX_LEN};
use puma_core::cutoff::Cutoff;
use puma_core::error::{Error, Result};
use puma_core::matrices::SubstitutionMatrix;
use puma_core::metrics;
use puma_core::segmenter::Encoder;
use puma_core::topic_model::{self as tm, Aspect, ClassFilter, Documents, GraphWeights, TopicParams};
use puma_core::trainer::{Trainer, TrainerConfig};
use puma_core::variant_eval::{self as ve, QueryOptions};
use puma_core::vocabulary::Vocabulary;

#[derive(Parser)]
#[command(name = "puma", version, about = "Mutation-aware protein unit tokenizer")]
struct Cli {
    /// Worker threads (outputs do not depend on it)
    #[arg(long, global = true, env = "PUMA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a vocabulary on a FASTA corpus
    Train(TrainArgs),
    /// Segment sequences with a vocabulary
    Encode(EncodeArgs),
    /// Family, length and usage statistics of a vocabulary
    VocabStats(VocabStatsArgs),
    /// Pairwise identity of vocabularies
    CompareVocabs(CompareArgs),
    /// Random vocabulary with the length profile of a reference
    RandomVocab(RandomVocabArgs),
    /// SAME-sibling rate of labeled point mutations
    EvalSiblings(EvalSiblingsArgs),
    /// Uniformly random point mutations
    RandomVariants(RandomVariantsArgs),
    /// Masked-residue queries comparing siblings with alternatives
    GenQueries(GenQueriesArgs),
    /// Win rates from masked-position logits
    WinRate(WinRateArgs),
    /// c-TF-IDF units per GO term
    TopicModel(TopicArgs),
    /// Correlate c-TF-IDF GO vectors with embedding-derived ones
    GoEval(GoEvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training sequences (FASTA)
    #[arg(long, short)]
    input: PathBuf,
    /// Bundled matrix name or path to a matrix file
    #[arg(long, short, default_value = "BLOSUM62")]
    matrix: String,
    /// Alignment score cut-off a
    #[arg(short = 'a', long = "align-cutoff", default_value = "0.7")]
    align_cutoff: Cutoff,
    /// Frequency cut-off f
    #[arg(short = 'f', long = "freq-cutoff", default_value = "0.05")]
    freq_cutoff: Cutoff,
    /// Target vocabulary size
    #[arg(short = 'V', long = "vocab-size", default_value_t = 3200)]
    vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    min_mut_len: usize,
    #[arg(long, default_value_t = 12)]
    max_mut_len: usize,
    /// Plain BPE training
    #[arg(long)]
    no_mutations: bool,
    /// Never substitute to ambiguity codes (B, Z, X)
    #[arg(long)]
    standard_targets_only: bool,
    /// Drop sequences longer than this
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Write filtered-out sequence ids here
    #[arg(long)]
    rejects: Option<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    /// Defaults to stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VocabStatsArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Corpus for occurrence-based statistics and the Zipf table
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Second vocabulary for the shared-usage ratio
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Directory for summary.csv, family_sizes.csv and zipf.csv
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Vocabulary files, or directories of *.puma files
    #[arg(required = true)]
    vocabs: Vec<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RandomVocabArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalSiblingsArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Variant table (seq_id, pos, ref, alt, label)
    #[arg(long)]
    variants: PathBuf,
    /// Sequences referenced by the variant table
    #[arg(long)]
    fasta: PathBuf,
    /// Per-label rates; defaults to stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Per-record outcomes
    #[arg(long)]
    details: Option<PathBuf>,
    /// Rows that failed validation
    #[arg(long)]
    rejects: Option<PathBuf>,
}

#[derive(Args)]
struct RandomVariantsArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(short = 'n', long, default_value_t = 10000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenQueriesArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    /// Defaults to the matrix the vocabulary was trained with, else BLOSUM62
    #[arg(long, short)]
    matrix: Option<String>,
    /// Alternatives may be any residue, not only vocabulary units
    #[arg(long)]
    no_vocab_constraint: bool,
    /// Alternatives need not be inserted after the sibling
    #[arg(long)]
    no_order_constraint: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
    /// Occurrences that produced no query
    #[arg(long)]
    skipped: Option<PathBuf>,
}

#[derive(Args)]
struct WinRateArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    logits: PathBuf,
    /// Exchange the sibling and alternative roles
    #[arg(long)]
    swap: bool,
    /// Summary; defaults to stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    per_query: Option<PathBuf>,
}

#[derive(Args)]
struct TopicInputs {
    /// Vocabulary used to segment proteins
    #[arg(long, conflicts_with = "kmer", required_unless_present = "kmer")]
    vocab: Option<PathBuf>,
    /// Fixed-length k-mer segmentation instead of a vocabulary
    #[arg(long)]
    kmer: Option<usize>,
    #[arg(long, short)]
    input: PathBuf,
    /// GO annotations (protein_id, go_id, aspect)
    #[arg(long)]
    go: PathBuf,
    /// Restrict to one aspect (MF, BP, CC)
    #[arg(long)]
    aspect: Option<Aspect>,
    /// Smoothing weight
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Hierarchical parent-child weight
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Mutational sibling weight
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    /// Mutational parent-child weight
    #[arg(long, default_value_t = 2.0)]
    theta: f64,
    #[arg(long, default_value_t = 100)]
    min_proteins: usize,
    /// Keep at most this many proteins per GO term
    #[arg(long)]
    undersample_cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TopicArgs {
    #[command(flatten)]
    inputs: TopicInputs,
    /// Share of the term space reported per GO term
    #[arg(long, default_value_t = 0.01)]
    top_fraction: f64,
    /// Top units per GO term (CSV); defaults to stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GoEvalArgs {
    #[command(flatten)]
    inputs: TopicInputs,
    /// Per-protein embeddings
    #[arg(long)]
    embeddings: PathBuf,
    /// Null-control runs with shuffled protein-GO pairs
    #[arg(long, default_value_t = 0)]
    shuffles: usize,
    /// Correlation table (CSV); defaults to stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Encode(a) => encode(a),
        Command::VocabStats(a) => vocab_stats(a),
        Command::CompareVocabs(a) => compare_vocabs(a),
        Command::RandomVocab(a) => {
            let reference = Vocabulary::load(&a.reference)?;
            metrics::random_vocab(&reference, a.seed)?.save(&a.output)
        }
        Command::EvalSiblings(a) => eval_siblings(a),
        Command::RandomVariants(a) => {
            let corpus = Corpus::load(&a.input)?;
            let records = ve::random_variants(&corpus, a.count, a.seed)?;
            let mut w = output(a.output.as_deref())?;
            ve::write_variants_tsv(&records, &mut w)?;
            Ok(w.flush()?)
        }
        Command::GenQueries(a) => gen_queries(a),
        Command::WinRate(a) => win_rate(a),
        Command::TopicModel(a) => topic_model(a),
        Command::GoEval(a) => go_eval(a),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let (corpus, report) = filter_corpus(Corpus::load(&a.input)?, a.max_len);
    if !report.rejected.is_empty() {
        log::warn!("{} sequences filtered out", report.rejected.len());
    }
    if let Some(p) = &a.rejects {
        report.write_tsv(create(p)?)?;
    }
    let mut cfg = TrainerConfig::new(a.vocab_size);
    cfg.matrix = SubstitutionMatrix::resolve(&a.matrix)?;
    cfg.align_cutoff = a.align_cutoff;
    cfg.freq_cutoff = a.freq_cutoff;
    cfg.min_mut_len = a.min_mut_len;
    cfg.max_mut_len = a.max_mut_len;
    cfg.mutations = !a.no_mutations;
    cfg.standard_targets_only = a.standard_targets_only;
    let vocab = Trainer::new(&corpus, cfg)?.run();
    log::info!("trained {}: {} units", vocab.meta.label, vocab.len());
    vocab.save(&a.output)
}

fn encode(a: EncodeArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let corpus = Corpus::load(&a.input)?;
    let encoded = Encoder::new(&vocab).encode_corpus(&corpus)?;
    let mut w = output(a.output.as_deref())?;
    writeln!(w, "id\tunits")?;
    for (r, ids) in corpus.records.iter().zip(&encoded) {
        let units: Vec<&str> = ids.iter().map(|&i| vocab.string(i)).collect();
        writeln!(w, "{}\t{}", r.id, units.join(" "))?;
    }
    Ok(w.flush()?)
}

fn vocab_stats(a: VocabStatsArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let corpus = a.input.as_deref().map(Corpus::load).transpose()?;
    let stats = metrics::vocab_stats(&vocab, corpus.as_ref())?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut summary = create(&a.out_dir.join("summary.csv"))?;
    stats.write_summary_csv(&mut summary)?;
    let other = a.compare.as_deref().map(Vocabulary::load).transpose()?;
    if let Some(other) = &other {
        writeln!(summary, "identity,{}", metrics::vocab_identity(&vocab, other))?;
    }
    if let Some(c) = &corpus {
        let counts = metrics::unit_counts(&vocab, c)?;
        if let Some(other) = &other {
            writeln!(summary, "shared_usage_ratio,{}", metrics::shared_usage_ratio(&vocab, &counts, other))?;
        }
        metrics::write_zipf_csv(&metrics::zipf_rows(&vocab, &counts), create(&a.out_dir.join("zipf.csv"))?)?;
    }
    summary.flush()?;
    stats.write_histogram_csv(create(&a.out_dir.join("family_sizes.csv"))?)
}

fn vocab_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|x| x == "puma"));
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn compare_vocabs(a: CompareArgs) -> Result<()> {
    let files = vocab_files(&a.vocabs)?;
    let vocabs: Vec<Vocabulary> = files.iter().map(Vocabulary::load).collect::<Result<_>>()?;
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_stem().map_or_else(|| f.display().to_string(), |s| s.to_string_lossy().into_owned()))
        .collect();
    let mut w = output(a.output.as_deref())?;
    writeln!(w, "vocab,{}", names.join(","))?;
    for (name, v1) in names.iter().zip(&vocabs) {
        let row: Vec<String> = vocabs.iter().map(|v2| metrics::vocab_identity(v1, v2).to_string()).collect();
        writeln!(w, "{name},{}", row.join(","))?;
    }
    Ok(w.flush()?)
}

fn eval_siblings(a: EvalSiblingsArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let corpus = Corpus::load(&a.fasta)?;
    let set = ve::load_variants(&a.variants, &corpus)?;
    if !set.rejects.is_empty() || set.duplicates > 0 {
        log::warn!("{} rows rejected, {} duplicates dropped", set.rejects.len(), set.duplicates);
    }
    if let Some(p) = &a.rejects {
        set.write_rejects(create(p)?)?;
    }
    let report = ve::same_sibling_rate(&vocab, &set.records)?;
    if let Some(p) = &a.details {
        report.write_details(&vocab, &set.records, create(p)?)?;
    }
    let mut w = output(a.output.as_deref())?;
    report.write_rates(&mut w)?;
    Ok(w.flush()?)
}

fn gen_queries(a: GenQueriesArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let corpus = Corpus::load(&a.input)?;
    let matrix = match a.matrix.as_deref().or(vocab.meta.matrix.as_deref()) {
        Some(m) => SubstitutionMatrix::resolve(m)?,
        None => SubstitutionMatrix::blosum62(),
    };
    let opts = QueryOptions { vocab_constraint: !a.no_vocab_constraint, order_constraint: !a.no_order_constraint };
    let batch = ve::gen_plm_queries(&vocab, &corpus, &matrix, opts, a.seed)?;
    log::info!("{} queries, {} skipped occurrences", batch.queries.len(), batch.skipped.len());
    let mut w = create(&a.output)?;
    ve::write_queries(&batch.queries, &mut w)?;
    w.flush()?;
    if let Some(p) = &a.skipped {
        batch.write_skipped(create(p)?)?;
    }
    Ok(())
}

fn win_rate(a: WinRateArgs) -> Result<()> {
    let mut queries = ve::read_queries(BufReader::new(File::open(&a.queries)?))?;
    if a.swap {
        queries = queries.iter().map(ve::MaskedQuery::swapped).collect();
    }
    let logits = ve::read_logits(BufReader::new(File::open(&a.logits)?))?;
    let report = ve::compute_win_rate(&queries, &logits)?;
    if let Some(p) = &a.per_query {
        report.write_per_query(create(p)?)?;
    }
    let mut w = output(a.output.as_deref())?;
    report.write_summary(&mut w)?;
    Ok(w.flush()?)
}

struct TopicSetup {
    docs: Documents,
    graph: Option<tm::GenealogyGraph>,
    annotations: Vec<tm::GoAnnotation>,
    aspects: Vec<Aspect>,
    params: TopicParams,
    method: &'static str,
}

fn topic_setup(i: &TopicInputs) -> Result<TopicSetup> {
    let corpus = Corpus::load(&i.input)?;
    let weights = GraphWeights { alpha: i.alpha, beta: i.beta, theta: i.theta };
    let (docs, graph, method) = match (&i.vocab, i.kmer) {
        (Some(v), _) => {
            let vocab = Vocabulary::load(v)?;
            let method = if vocab.meta.mutations { "puma" } else { "vocab" };
            (Documents::from_vocab(&vocab, &corpus)?, Some(tm::build_adjacency(&vocab, weights)), method)
        }
        (None, Some(k)) => (Documents::kmers(&corpus, k)?, None, "kmer"),
        (None, None) => return Err(Error::Config("either --vocab or --kmer is required".into())),
    };
    if !(0.0..=1.0).contains(&i.lambda) {
        return Err(Error::Config(format!("lambda must be in [0, 1], got {}", i.lambda)));
    }
    let params = TopicParams {
        filter: ClassFilter { min_proteins: i.min_proteins, undersample_cap: i.undersample_cap, seed: i.seed },
        lambda: i.lambda,
        weights,
    };
    let aspects = i.aspect.map_or_else(|| Aspect::ALL.to_vec(), |a| vec![a]);
    Ok(TopicSetup { docs, graph, annotations: tm::load_annotations(&i.go)?, aspects, params, method })
}

/// Fits every requested aspect, skipping (with a warning) aspects that keep
/// no GO term when more than one aspect was requested.
fn fit_all<'a>(
    s: &'a TopicSetup,
    annotations: &'a [tm::GoAnnotation],
    lambda: f64,
) -> impl Iterator<Item = Result<(Aspect, tm::AspectModel)>> + 'a {
    let params = TopicParams { lambda, ..s.params };
    let graph = if lambda == 0.0 { None } else { s.graph.as_ref() };
    s.aspects.iter().filter_map(move |&aspect| {
        match tm::fit_aspect(&s.docs, graph, annotations, aspect, params) {
            Ok(m) => Some(Ok((aspect, m))),
            Err(e) if s.aspects.len() > 1 && !e.is_io() => {
                log::warn!("{aspect}: {e}");
                None
            }
            Err(e) => Some(Err(e)),
        }
    })
}

fn topic_model(a: TopicArgs) -> Result<()> {
    let s = topic_setup(&a.inputs)?;
    let mut w = output(a.output.as_deref())?;
    writeln!(w, "{}", tm::TOP_TERMS_HEADER)?;
    for fitted in fit_all(&s, &s.annotations, s.params.lambda) {
        let (aspect, m) = fitted?;
        tm::write_top_terms(aspect, &m.model.top_terms(&s.docs.term_names, a.top_fraction), &mut w)?;
    }
    Ok(w.flush()?)
}

fn go_eval(a: GoEvalArgs) -> Result<()> {
    let s = topic_setup(&a.inputs)?;
    let embeddings = tm::load_embeddings(&a.embeddings)?;
    let mut variants: Vec<(&str, f64)> = vec![("standard", 0.0)];
    if s.graph.is_some() && s.params.lambda != 0.0 {
        variants.push(("graph-aware", s.params.lambda));
    }
    let mut w = output(a.output.as_deref())?;
    writeln!(w, "aspect,method,model,lambda,shuffle_seed,terms,rho")?;
    let mut runs: Vec<(String, Vec<tm::GoAnnotation>)> = vec![("-".into(), s.annotations.clone())];
    for i in 0..a.shuffles {
        let seed = a.inputs.seed.wrapping_add(i as u64);
        runs.push((seed.to_string(), tm::shuffle_annotations(&s.annotations, seed)));
    }
    for (shuffle, annotations) in &runs {
        for &(model, lambda) in &variants {
            for fitted in fit_all(&s, annotations, lambda) {
                let (aspect, m) = fitted?;
                // the embedding side always uses the true annotations
                let truth = TopicParams { lambda, ..s.params };
                let reference = tm::fit_aspect(&s.docs, None, &s.annotations, aspect, truth)?;
                let (rho, terms) = tm::correlate_with_embeddings(&m, &reference.class_members(), &embeddings)?;
                writeln!(w, "{aspect},{},{model},{lambda},{shuffle},{terms},{rho}", s.method)?;
            }
        }
    }
    Ok(w.flush()?)
}
