use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edgefactor_core::cohort::{apply_floor, diagnostics_tsv, CohortMode, DEFAULT_FLOOR};
use edgefactor_core::config::{RunConfig, YearRange};
use edgefactor_core::corpus::{
    classify_research_area_groups, load_publications, passes_sample_filters, resolve_location, translational_status,
    FilterConfig, Gazetteer, JournalTable, StatusRules,
};
use edgefactor_core::matcher::MatchTable;
use edgefactor_core::par;
use edgefactor_core::pipeline::{self, area_groups_csv, cohorts_from_matches, load_vocab, run_until, Stage};
use edgefactor_core::synth::{generate, SynthConfig};
use edgefactor_core::{Error, Result};

#[derive(Parser)]
#[command(name = "edgefactor", version, about = "Location-level novelty indicators for scientific corpora")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thesaurus checks.
    #[command(subcommand)]
    Vocab(VocabCmd),
    /// Corpus statistics and research-area classification.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Match the vocabulary against every publication.
    Scan(ScanArgs),
    /// First-appearance year of every matched term.
    Cohorts(CohortArgs),
    /// Run the configured pipeline through scoring.
    Score(RunArgs),
    /// Run the configured pipeline through the edge factor report.
    Report(RunArgs),
    /// Generate a synthetic thesaurus and corpus.
    Synth(SynthArgs),
    /// Run every stage of the configured pipeline.
    Pipeline(RunArgs),
}

#[derive(Subcommand)]
enum VocabCmd {
    Check {
        #[arg(long)]
        vocab: PathBuf,
        /// Defaults to the bundled category table.
        #[arg(long)]
        categories: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long)]
        regions: Option<PathBuf>,
        #[arg(long, default_value = "2015-2016")]
        years: YearRange,
    },
    ClassifyAreas {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        journals: PathBuf,
        #[arg(long)]
        status_rules: Option<PathBuf>,
        #[arg(long, default_value = "2015-2016")]
        years: YearRange,
        /// Include every article type.
        #[arg(long)]
        all_types: bool,
        #[arg(long)]
        no_char_limits: bool,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "matches.bin")]
    out: PathBuf,
    /// Also write the matches as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Report scanning throughput.
    #[arg(long)]
    bench: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Term,
    Synonym,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct CohortArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long, default_value = "matches.bin")]
    matches: PathBuf,
    #[arg(long, value_enum, default_value = "term")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    floor: i32,
    /// Only papers from these years date terms.
    #[arg(long)]
    years: Option<YearRange>,
    #[arg(long, default_value = "cohorts.tsv")]
    out: PathBuf,
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reporting window, e.g. 2015-2016.
    #[arg(long, alias = "period")]
    years: Option<String>,
    #[arg(long)]
    cutoff: Option<f64>,
    /// global | own | period:YYYY-YYYY
    #[arg(long)]
    weights: Option<String>,
    /// own-avg | zero | hundred
    #[arg(long)]
    missing: Option<String>,
    #[arg(long, value_enum)]
    synonyms: Option<OnOff>,
    #[arg(long)]
    floor: Option<i32>,
    /// Bootstrap confidence intervals.
    #[arg(long)]
    ci: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// uniform | weighted
    #[arg(long)]
    bootstrap_draw: Option<String>,
    /// Extra reporting periods, comma separated.
    #[arg(long, value_delimiter = ',')]
    periods: Vec<String>,
    #[arg(long)]
    all_types: bool,
    #[arg(long)]
    no_char_limits: bool,
    /// Any config field, e.g. `--set top_terms=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn vocab_check(vocab: &Path, categories: Option<&Path>) -> Result<()> {
    let v = load_vocab(vocab, categories)?;
    let th = &v.thesaurus;
    println!("records\t{}", v.records);
    println!("terms\t{}", th.terms().len());
    println!("concepts\t{}", th.concept_index().len());
    println!("categories\t{}", th.categories().len());
    println!("dropped_empty\t{}", v.dropped_empty);
    println!("diagnostics\t{}", v.diagnostics.len());
    for d in &v.diagnostics {
        eprintln!("{}: {d}", vocab.display());
    }
    Ok(())
}

fn corpus_stats(corpus: &Path, gazetteer: Option<&Path>, regions: Option<&Path>, years: YearRange) -> Result<()> {
    let (pubs, report) = load_publications(open(corpus)?, &corpus.display().to_string(), None)?;
    let filter = FilterConfig {
        year_lo: years.lo,
        year_hi: years.hi,
        ..FilterConfig::default()
    };
    println!("records\t{}", report.records);
    println!("loaded\t{}", pubs.len());
    println!("skipped\t{}", report.skipped);
    println!("invalid_utf8_records\t{}", report.invalid_utf8_records);
    if let (Some(lo), Some(hi)) = (pubs.iter().map(|p| p.year).min(), pubs.iter().map(|p| p.year).max()) {
        println!("years\t{lo}-{hi}");
    }
    println!("original_research\t{}", pubs.iter().filter(|p| p.is_original_research).count());
    println!("with_affiliation\t{}", pubs.iter().filter(|p| p.affiliation.is_some()).count());
    let sample: Vec<_> = pubs.iter().filter(|p| passes_sample_filters(p, &filter)).collect();
    println!("sample_{years}\t{}", sample.len());
    if let Some(g) = gazetteer {
        let gaz = match regions {
            Some(r) => Gazetteer::load(open(g)?, Some(open(r)?))?,
            None => Gazetteer::load(open(g)?, None::<BufReader<File>>)?,
        };
        let located = sample
            .iter()
            .filter(|p| resolve_location(p.affiliation.as_deref(), &gaz).is_some())
            .count();
        println!("sample_located\t{located}");
    }
    for d in report.diagnostics.iter() {
        eprintln!("{}: line {}: {}", corpus.display(), d.line, d.message);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn classify_areas(
    corpus: &Path,
    journals: &Path,
    status_rules: Option<&Path>,
    years: YearRange,
    all_types: bool,
    no_char_limits: bool,
    out: Option<&Path>,
) -> Result<()> {
    let (pubs, _) = load_publications(open(corpus)?, &corpus.display().to_string(), None)?;
    let table = JournalTable::load(open(journals)?)?;
    let rules = match status_rules {
        Some(p) => StatusRules::load(open(p)?)?,
        None => StatusRules::standard(),
    };
    let filter = FilterConfig {
        year_lo: years.lo,
        year_hi: years.hi,
        char_lo: (!no_char_limits).then_some(200),
        char_hi: (!no_char_limits).then_some(5000),
        original_only: !all_types,
    };
    let papers: Vec<_> = pubs
        .iter()
        .filter(|p| passes_sample_filters(p, &filter))
        .filter_map(|p| {
            let areas = table.areas_of(&p.journal_id)?;
            Some((translational_status(&p.keyword_codes, &rules).0, areas))
        })
        .collect();
    let groups = classify_research_area_groups(papers.iter().copied(), &table);
    let names: Vec<String> = table.areas().iter().map(|a| a.name.clone()).collect();
    let csv = area_groups_csv(&names, &groups);
    match out {
        Some(p) => write_file(p, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn scan(a: &ScanArgs) -> Result<()> {
    let v = load_vocab(&a.vocab, a.categories.as_deref())?;
    let (pubs, _) = load_publications(open(&a.corpus)?, &a.corpus.display().to_string(), None)?;
    let start = Instant::now();
    let (table, counts) = pipeline::scan_publications(&v.thesaurus, &pubs);
    let secs = start.elapsed().as_secs_f64();
    let mut w = create(&a.out)?;
    table.write_binary(&mut w).map_err(|e| Error::io(&a.out, e))?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    if let Some(p) = &a.csv {
        table
            .write_csv(create(p)?)
            .map_err(|e| Error::Runtime(format!("{}: {e}", p.display())))?;
    }
    println!("documents\t{}", counts.documents);
    println!("tokens\t{}", counts.tokens);
    println!("matches\t{}", counts.matches);
    if a.bench {
        println!("patterns\t{}", v.thesaurus.terms().len());
        println!("workers\t{}", par::current_workers());
        println!("seconds\t{secs:.3}");
        println!("tokens_per_second\t{:.0}", counts.tokens as f64 / secs.max(1e-9));
        println!("matches_per_second\t{:.0}", counts.matches as f64 / secs.max(1e-9));
    }
    Ok(())
}

fn cohorts(a: &CohortArgs) -> Result<()> {
    let v = load_vocab(&a.vocab, a.categories.as_deref())?;
    let th = &v.thesaurus;
    let matches = MatchTable::read_binary(open(&a.matches)?)
        .map_err(|e| Error::Validation(format!("{}: {e}", a.matches.display())))?;
    let ids: Vec<&str> = th.terms().iter().map(|t| t.term_id.as_str()).collect();
    if matches.term_ids != ids {
        return Err(Error::Validation(format!(
            "{} was produced with a different vocabulary",
            a.matches.display()
        )));
    }
    let art = cohorts_from_matches(&matches, th, a.years, a.floor);
    let table = match a.mode {
        ModeArg::Term => art.term,
        ModeArg::Synonym => art.pooled,
    };
    let table = apply_floor(&table, a.floor);
    debug_assert!(matches!(table.mode(), CohortMode::TermOnly | CohortMode::SynonymPooled));
    write_file(&a.out, table.to_tsv(th).as_bytes())?;
    if let Some(p) = &a.diagnostics {
        write_file(p, diagnostics_tsv(&table, th).as_bytes())?;
    }
    let kept = table.observed().filter(|(t, _)| !table.is_excluded(*t)).count();
    println!("observed\t{}", table.observed().count());
    println!("kept\t{kept}");
    Ok(())
}

fn run_config(a: &RunArgs, workers: Option<usize>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(o) = &a.out {
        cfg.out_dir = o.clone();
    }
    if let Some(y) = &a.years {
        cfg.years = y.parse()?;
    }
    if let Some(c) = a.cutoff {
        cfg.cutoff = c;
    }
    if let Some(w) = &a.weights {
        cfg.weights = w.parse()?;
    }
    if let Some(m) = &a.missing {
        cfg.missing = m.parse()?;
    }
    if let Some(s) = a.synonyms {
        cfg.synonyms = s == OnOff::On;
    }
    if let Some(f) = a.floor {
        cfg.floor = f;
    }
    if a.ci {
        cfg.bootstrap.enabled = true;
    }
    if let Some(s) = a.seed {
        cfg.bootstrap.seed = s;
    }
    if let Some(n) = a.samples {
        cfg.bootstrap.samples = n;
    }
    if let Some(d) = &a.bootstrap_draw {
        cfg.bootstrap.draw = d.parse()?;
    }
    if !a.periods.is_empty() {
        cfg.periods = a.periods.iter().map(|p| p.parse()).collect::<Result<_>>()?;
    }
    if a.all_types {
        cfg.filters.original_only = false;
    }
    if a.no_char_limits {
        cfg.filters.char_limits = false;
    }
    for s in &a.set {
        cfg.set(s)?;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: &RunArgs, workers: Option<usize>, last: Stage) -> Result<()> {
    let cfg = run_config(a, workers)?;
    let out = run_until(&cfg, last)?;
    for s in &out.manifest.stages {
        println!(
            "{:<8} {:<8} {:>9.3}s {:>10} rows",
            s.stage.name(),
            match s.status {
                pipeline::StageStatus::Cached => "cached",
                pipeline::StageStatus::Computed => "computed",
            },
            s.seconds,
            s.rows
        );
    }
    for n in &out.manifest.notes {
        eprintln!("note: {n}");
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SynthConfig::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let out = generate(&cfg)?;
    out.write_to(&a.out)?;
    println!("ideas\t{}", out.truth.ideas);
    println!("papers\t{}", out.truth.papers);
    println!("wrote\t{}", a.out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let workers = cli.workers;
    if workers == Some(0) {
        return Err(Error::Config("--workers must be positive".into()));
    }
    match cli.command {
        Command::Score(a) => run(&a, workers, Stage::Score),
        Command::Report(a) | Command::Pipeline(a) => run(&a, workers, Stage::Report),
        other => par::with_workers(workers, || match other {
            Command::Vocab(VocabCmd::Check { vocab, categories }) => vocab_check(&vocab, categories.as_deref()),
            Command::Corpus(CorpusCmd::Stats { corpus, gazetteer, regions, years }) => {
                corpus_stats(&corpus, gazetteer.as_deref(), regions.as_deref(), years)
            }
            Command::Corpus(CorpusCmd::ClassifyAreas {
                corpus,
                journals,
                status_rules,
                years,
                all_types,
                no_char_limits,
                out,
            }) => classify_areas(&corpus, &journals, status_rules.as_deref(), years, all_types, no_char_limits, out.as_deref()),
            Command::Scan(a) => scan(&a),
            Command::Cohorts(a) => cohorts(&a),
            Command::Synth(a) => synth(&a),
            Command::Score(_) | Command::Report(_) | Command::Pipeline(_) => unreachable!("handled above"),
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
