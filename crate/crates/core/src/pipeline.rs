//! Staged run over files: vocab → scan → cohorts → score → report.
//!
//! Each stage's output is cached under `out/.cache`, keyed by a SHA-256
//! digest of its input files, its parameters and the digest of the stage
//! before it. Output files are written with a `.partial` suffix and renamed
//! once every requested stage has succeeded.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{apply_floor, compute_cohorts, diagnostics_tsv, pool_synonyms, CohortTable};
use crate::config::{RunConfig, WeightSpec, YearRange};
use crate::corpus::{
    classify_research_area_groups, load_publications, resolve_location, translational_status, AreaGroup, Gazetteer,
    JournalTable, Publication, StatusRules,
};
use crate::edgefactor::{
    bootstrap_ci, cell_counts, overall_edge_factor, period_edge_factors, top_terms_csv, top_terms_report, CellTable,
    EdgeFactorReport, GroupMaps, LocationRow, TopTermRow, WeightTable,
};
use crate::error::{Error, Result};
use crate::matcher::{build_matcher, MatchRecord, MatchTable, ScanCounts};
use crate::par;
use crate::scoring::{extract_contributions, flag_novelty, normalize, Contribution, LocationIdx, PaperRef};
use crate::vocab::{load_categories, load_thesaurus, standard_categories, CategoryGroup, Thesaurus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Vocab,
    Scan,
    Cohorts,
    Score,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Vocab => "vocab",
            Stage::Scan => "scan",
            Stage::Cohorts => "cohorts",
            Stage::Score => "score",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Cached,
    Computed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub digest: String,
    pub seconds: f64,
    pub rows: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

pub fn digest_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

fn digest_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("parameters serialize")
}

struct Cache {
    dir: PathBuf,
}

impl Cache {
    fn path(&self, stage: Stage, digest: &str) -> PathBuf {
        self.dir.join(format!("{}-{}.bin", stage.name(), &digest[..32]))
    }

    fn load<T: DeserializeOwned>(&self, stage: Stage, digest: &str) -> Option<T> {
        let f = File::open(self.path(stage, digest)).ok()?;
        bincode::deserialize_from(BufReader::new(f)).ok()
    }

    fn store<T: Serialize>(&self, stage: Stage, digest: &str, value: &T) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path(stage, digest);
        let tmp = path.with_extension("tmp");
        let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(f);
        bincode::serialize_into(&mut w, value).map_err(|e| Error::Runtime(format!("cache write: {e}")))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabArtifact {
    pub thesaurus: Thesaurus,
    pub records: usize,
    pub dropped_empty: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortArtifact {
    /// Own first-appearance years, floor applied.
    pub term: CohortTable,
    /// Synonym-pooled years, floor applied.
    pub pooled: CohortTable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub sample_papers: u64,
    pub located_papers: u64,
    pub unknown_journals: u64,
    pub unmatched_papers: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreArtifact {
    pub n_categories: usize,
    pub n_areas: usize,
    pub locations: Vec<String>,
    pub area_names: Vec<String>,
    pub area_groups: Vec<AreaGroup>,
    pub category_groups: Vec<CategoryGroup>,
    pub paper_ids: Vec<String>,
    pub contributions: Vec<Contribution>,
    pub main: CellTable,
    pub periods: Vec<(YearRange, CellTable)>,
    pub weight_counts: Option<Vec<u64>>,
    pub fallback: Option<CellTable>,
    pub top_terms: Vec<TopTermRow>,
    pub stats: ScoreStats,
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub vocab: VocabArtifact,
    pub matches: Option<MatchTable>,
    pub cohorts: Option<CohortArtifact>,
    pub score: Option<ScoreArtifact>,
    pub report: Option<EdgeFactorReport>,
}

pub fn load_vocab(vocab: &Path, categories: Option<&Path>) -> Result<VocabArtifact> {
    let cats = match categories {
        Some(p) => load_categories(open(p)?, &p.display().to_string())?,
        None => standard_categories(),
    };
    let (thesaurus, report) = load_thesaurus(open(vocab)?, &vocab.display().to_string(), cats)?;
    Ok(VocabArtifact {
        thesaurus,
        records: report.records,
        dropped_empty: report.dropped_empty,
        diagnostics: report
            .diagnostics
            .iter()
            .map(|d| format!("line {}: {}", d.line, d.message))
            .collect(),
    })
}

/// Matches every publication in the corpus, whatever its year or type.
pub fn scan_corpus(th: &Thesaurus, corpus: &Path) -> Result<MatchTable> {
    let (pubs, _) = load_publications(open(corpus)?, &corpus.display().to_string(), None)?;
    Ok(scan_publications(th, &pubs).0)
}

pub fn scan_publications(th: &Thesaurus, pubs: &[Publication]) -> (MatchTable, ScanCounts) {
    let matcher = build_matcher(th);
    let texts: Vec<String> = pubs.iter().map(Publication::text).collect();
    let (found, counts) = matcher.scan_batch(&texts);
    let table = MatchTable {
        term_ids: th.terms().iter().map(|t| t.term_id.clone()).collect(),
        records: pubs
            .iter()
            .zip(found)
            .map(|(p, terms)| MatchRecord {
                paper_id: p.paper_id.clone(),
                year: p.year,
                terms,
            })
            .collect(),
    };
    (table, counts)
}

pub fn cohorts_from_matches(
    matches: &MatchTable,
    th: &Thesaurus,
    years: Option<YearRange>,
    floor: i32,
) -> CohortArtifact {
    let table = match years {
        Some(r) => {
            let kept: Vec<MatchRecord> = matches.records.iter().filter(|m| r.contains(m.year)).cloned().collect();
            compute_cohorts(&kept, th.terms().len())
        }
        None => compute_cohorts(&matches.records, th.terms().len()),
    };
    CohortArtifact {
        pooled: apply_floor(&pool_synonyms(&table, th), floor),
        term: apply_floor(&table, floor),
    }
}

struct ScoreInputs<'a> {
    cfg: &'a RunConfig,
    th: &'a Thesaurus,
    matches: &'a MatchTable,
    cohorts: &'a CohortArtifact,
    pubs: Vec<Publication>,
    journals: JournalTable,
    gazetteer: Gazetteer,
    rules: StatusRules,
}

struct Window {
    papers: Vec<usize>,
    contributions: Vec<Contribution>,
}

impl ScoreInputs<'_> {
    fn run_cohorts(&self) -> &CohortTable {
        if self.cfg.synonyms {
            &self.cohorts.pooled
        } else {
            &self.cohorts.term
        }
    }

    fn score_window(
        &self,
        years: YearRange,
        record_of: &HashMap<&str, usize>,
        locations: &[Option<LocationIdx>],
        stats: Option<&mut ScoreStats>,
    ) -> Result<Window> {
        let filter = self.cfg.filters.for_years(years);
        let mut unknown = 0u64;
        let mut unmatched = 0u64;
        let mut papers = Vec::new();
        for (i, p) in self.pubs.iter().enumerate() {
            if !crate::corpus::passes_sample_filters(p, &filter) {
                continue;
            }
            if self.journals.areas_of(&p.journal_id).is_none() {
                unknown += 1;
                continue;
            }
            if !record_of.contains_key(p.paper_id.as_str()) {
                unmatched += 1;
                continue;
            }
            papers.push(i);
        }
        if let Some(s) = stats {
            s.sample_papers = papers.len() as u64;
            s.located_papers = papers.iter().filter(|&&i| locations[i].is_some()).count() as u64;
            s.unknown_journals = unknown;
            s.unmatched_papers = unmatched;
        }
        let cohorts = self.run_cohorts();
        let per_paper = par::map(&papers, |&i| {
            let p = &self.pubs[i];
            let rec = &self.matches.records[record_of[p.paper_id.as_str()]];
            let paper = PaperRef {
                index: i as u32,
                year: p.year,
                terms: &rec.terms,
                location: locations[i],
            };
            extract_contributions(paper, self.journals.areas_of(&p.journal_id).unwrap_or(&[]), cohorts, self.th)
        });
        let mut contributions = Vec::new();
        for c in per_paper {
            contributions.extend(c?);
        }
        flag_novelty(&mut contributions, self.cfg.cutoff)?;
        normalize(&mut contributions)?;
        Ok(Window { papers, contributions })
    }

    fn table(&self, contribs: &[Contribution], n_locations: usize) -> CellTable {
        CellTable::from_contributions(
            contribs,
            self.th.categories().len(),
            self.journals.areas().len(),
            n_locations,
        )
    }

    fn score(&self) -> Result<ScoreArtifact> {
        let cfg = self.cfg;
        let locations = self.gazetteer.reporting_locations();
        let loc_index: HashMap<&str, LocationIdx> = locations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), LocationIdx(i as u32)))
            .collect();
        let paper_locations: Vec<Option<LocationIdx>> = par::map(&self.pubs, |p| {
            resolve_location(p.affiliation.as_deref(), &self.gazetteer).and_then(|l| loc_index.get(l.as_str()).copied())
        });
        let record_of: HashMap<&str, usize> = self
            .matches
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.paper_id.as_str(), i))
            .collect();
        let n_locations = locations.len();

        let mut stats = ScoreStats::default();
        let main = self.score_window(cfg.years, &record_of, &paper_locations, Some(&mut stats))?;

        let area_groups = classify_research_area_groups(
            main.papers.iter().map(|&i| {
                let p = &self.pubs[i];
                let (status, _) = translational_status(&p.keyword_codes, &self.rules);
                (status, self.journals.areas_of(&p.journal_id).unwrap_or(&[]))
            }),
            &self.journals,
        );

        let mut periods = Vec::new();
        for &r in &cfg.periods {
            let w = self.score_window(r, &record_of, &paper_locations, None)?;
            periods.push((r, self.table(&w.contributions, n_locations)));
        }
        let weight_counts = match cfg.weights {
            WeightSpec::Period(r) => {
                let w = self.score_window(r, &record_of, &paper_locations, None)?;
                Some(cell_counts(&w.contributions, self.th.categories().len(), self.journals.areas().len()))
            }
            _ => None,
        };
        let fallback = match &cfg.group_fallback {
            Some(g) if cfg.groups => {
                let w = self.score_window(g.years, &record_of, &paper_locations, None)?;
                Some(self.table(&w.contributions, n_locations))
            }
            _ => None,
        };

        let top_terms = top_terms_report(
            main.papers
                .iter()
                .map(|&i| self.matches.records[record_of[self.pubs[i].paper_id.as_str()]].terms.as_slice()),
            self.run_cohorts(),
            &self.cohorts.term,
            &self.cohorts.pooled,
            self.th,
            cfg.top_terms,
        );

        // contributions refer to sample papers by position in `paper_ids`
        let position: HashMap<usize, u32> = main.papers.iter().enumerate().map(|(k, &i)| (i, k as u32)).collect();
        let mut contributions = main.contributions;
        for c in &mut contributions {
            c.paper = position[&(c.paper as usize)];
        }
        Ok(ScoreArtifact {
            n_categories: self.th.categories().len(),
            n_areas: self.journals.areas().len(),
            main: self.table(&contributions, n_locations),
            paper_ids: main.papers.iter().map(|&i| self.pubs[i].paper_id.clone()).collect(),
            contributions,
            locations,
            area_names: self.journals.areas().iter().map(|a| a.name.clone()).collect(),
            area_groups,
            category_groups: self.th.categories().iter().map(|c| c.group).collect(),
            periods,
            weight_counts,
            fallback,
            top_terms,
            stats,
        })
    }
}

fn weights_for(cfg: &RunConfig, table: &CellTable, weight_counts: Option<&[u64]>) -> WeightTable {
    match (cfg.weights, weight_counts) {
        (WeightSpec::Own, _) => WeightTable::own(table),
        (WeightSpec::Period(r), Some(counts)) => WeightTable::fixed_period(counts, (r.lo, r.hi)),
        _ => WeightTable::global(table),
    }
}

pub fn build_report(cfg: &RunConfig, s: &ScoreArtifact, notes: &mut Vec<String>) -> Result<EdgeFactorReport> {
    let weights = weights_for(cfg, &s.main, s.weight_counts.as_deref());
    let policy = cfg.missing;
    let maps = GroupMaps {
        category_groups: s.category_groups.clone(),
        area_groups: s.area_groups.clone(),
    };
    let ci = if cfg.bootstrap.enabled {
        Some(bootstrap_ci(&s.main, &weights, policy, &cfg.bootstrap.config())?)
    } else {
        None
    };
    let live_periods: Vec<&(YearRange, CellTable)> =
        s.periods.iter().filter(|(_, t)| t.totals().iter().any(|&n| n > 0)).collect();
    for (r, _) in s.periods.iter().filter(|(_, t)| t.totals().iter().all(|&n| n == 0)) {
        notes.push(format!("period {r} has no contributions; column omitted"));
    }
    let period_tables: Vec<CellTable> = live_periods.iter().map(|(_, t)| t.clone()).collect();
    let period_values = period_edge_factors(&period_tables, &weights, policy, s.locations.len());
    let fallback_weights = s.fallback.as_ref().map(|t| weights_for(cfg, t, s.weight_counts.as_deref()));

    let mut rows = Vec::with_capacity(s.locations.len());
    for (l, name) in s.locations.iter().enumerate() {
        let loc = LocationIdx(l as u32);
        let contributions = s.main.location_total(loc);
        let (idea_groups, area_groups) = if cfg.groups {
            let small = cfg.group_fallback.as_ref().is_some_and(|g| contributions < g.min_contributions);
            match (&s.fallback, &fallback_weights) {
                (Some(t), Some(w)) if small => (
                    maps.idea_group_edge_factors(t, loc, w, policy),
                    maps.area_group_edge_factors(t, loc, w, policy),
                ),
                _ => (
                    maps.idea_group_edge_factors(&s.main, loc, &weights, policy),
                    maps.area_group_edge_factors(&s.main, loc, &weights, policy),
                ),
            }
        } else {
            (Vec::new(), Vec::new())
        };
        let interval = ci.as_ref().and_then(|c| c[l]);
        let edge_factor = overall_edge_factor(&s.main, loc, &weights, policy);
        if ci.is_some() && interval.is_none() && edge_factor.is_some() {
            notes.push(format!("{name}: absent from more than half of the bootstrap replicates, no interval"));
        }
        rows.push(LocationRow {
            location: name.clone(),
            contributions,
            edge_factor,
            ci: interval,
            idea_groups,
            area_groups,
            periods: period_values[l].clone(),
        });
    }
    let mut report = EdgeFactorReport {
        rows,
        with_ci: cfg.bootstrap.enabled,
        with_groups: cfg.groups,
        period_labels: live_periods.iter().map(|(r, _)| r.to_string()).collect(),
    };
    report.sort();
    Ok(report)
}

pub fn contributions_csv(s: &ScoreArtifact, th: &Thesaurus) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Runtime(e.to_string());
    w.write_record([
        "paper_id",
        "year",
        "idea_category",
        "research_area",
        "cohort_year",
        "location",
        "novel",
        "score",
    ])
    .map_err(err)?;
    for c in &s.contributions {
        w.write_record([
            s.paper_ids[c.paper as usize].as_str(),
            &c.pub_year.to_string(),
            th.category(c.cell.category).name.as_str(),
            s.area_names[c.cell.area.index()].as_str(),
            &c.cohort_year.to_string(),
            c.location.map(|l| s.locations[l.index()].as_str()).unwrap_or(""),
            if c.novel { "1" } else { "0" },
            &format!("{:.6}", c.score),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn area_groups_csv(names: &[String], groups: &[AreaGroup]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["research_area", "group"]).expect("in-memory write");
    for (n, g) in names.iter().zip(groups) {
        w.write_record([n.as_str(), g.label()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Output files collected during a run, committed together at the end.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(format!("{name}.partial"));
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn commit(&self) -> Result<()> {
        for name in &self.written {
            let from = self.dir.join(format!("{name}.partial"));
            let to = self.dir.join(name);
            std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
        }
        Ok(())
    }
}

struct Runner {
    cache: Cache,
    stages: Vec<StageRecord>,
}

impl Runner {
    fn stage<T, F>(&mut self, stage: Stage, digest: &str, rows: impl Fn(&T) -> u64, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let start = Instant::now();
        let (value, status) = match self.cache.load::<T>(stage, digest) {
            Some(v) => (v, StageStatus::Cached),
            None => {
                let v = compute()?;
                self.cache.store(stage, digest, &v)?;
                (v, StageStatus::Computed)
            }
        };
        self.stages.push(StageRecord {
            stage,
            status,
            digest: digest.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            rows: rows(&value),
        });
        Ok(value)
    }
}

/// Runs every stage.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    run_until(cfg, Stage::Report)
}

/// Runs the stages up to and including `last`.
pub fn run_until(cfg: &RunConfig, last: Stage) -> Result<RunOutput> {
    cfg.validate()?;
    par::with_workers(cfg.workers, || run_inner(cfg, last))
}

fn run_inner(cfg: &RunConfig, last: Stage) -> Result<RunOutput> {
    let out_dir = &cfg.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut outputs = Outputs {
        dir: out_dir.clone(),
        written: Vec::new(),
    };
    let mut notes = Vec::new();
    let mut runner = Runner {
        cache: Cache {
            dir: out_dir.join(".cache"),
        },
        stages: Vec::new(),
    };

    let mut inputs = BTreeMap::new();
    let mut digest_of = |p: &Path| -> Result<String> {
        let d = digest_file(p)?;
        inputs.insert(p.display().to_string(), d.clone());
        Ok(d)
    };
    let i = &cfg.inputs;
    let d_vocab = digest_of(&i.vocab)?;
    let d_cats = i.categories.as_deref().map(&mut digest_of).transpose()?.unwrap_or_default();
    let d_corpus = digest_of(&i.corpus)?;
    let mut d_score_inputs = vec![digest_of(&i.journals)?, digest_of(&i.gazetteer)?];
    for p in [&i.regions, &i.status_rules].into_iter().flatten() {
        d_score_inputs.push(digest_of(p)?);
    }

    let result = (|| -> Result<RunOutput> {
        let key_vocab = digest_parts(&[b"vocab", d_vocab.as_bytes(), d_cats.as_bytes()]);
        let vocab = runner.stage(Stage::Vocab, &key_vocab, |v: &VocabArtifact| v.thesaurus.terms().len() as u64, || {
            load_vocab(&i.vocab, i.categories.as_deref())
        })?;
        for d in &vocab.diagnostics {
            notes.push(format!("vocab {d}"));
        }
        let th = &vocab.thesaurus;
        let mut out = RunOutput {
            manifest: Manifest {
                config: cfg.clone(),
                inputs: BTreeMap::new(),
                stages: Vec::new(),
                outputs: Vec::new(),
                notes: Vec::new(),
            },
            vocab: vocab.clone(),
            matches: None,
            cohorts: None,
            score: None,
            report: None,
        };
        if last == Stage::Vocab {
            return Ok(out);
        }

        let key_scan = digest_parts(&[b"scan", key_vocab.as_bytes(), d_corpus.as_bytes()]);
        let matches = runner.stage(Stage::Scan, &key_scan, |m: &MatchTable| m.records.len() as u64, || {
            scan_corpus(th, &i.corpus)
        })?;
        let mut bin = Vec::new();
        matches.write_binary(&mut bin).map_err(|e| Error::Runtime(e.to_string()))?;
        outputs.write("matches.bin", &bin)?;
        if last == Stage::Scan {
            out.matches = Some(matches);
            return Ok(out);
        }

        let key_cohorts = digest_parts(&[
            b"cohorts",
            key_scan.as_bytes(),
            &json(&cfg.cohort_years),
            &cfg.floor.to_le_bytes(),
        ]);
        let cohorts = runner.stage(
            Stage::Cohorts,
            &key_cohorts,
            |c: &CohortArtifact| c.term.observed().count() as u64,
            || Ok(cohorts_from_matches(&matches, th, cfg.cohort_years, cfg.floor)),
        )?;
        let run_table = if cfg.synonyms { &cohorts.pooled } else { &cohorts.term };
        outputs.write("cohorts.tsv", run_table.to_tsv(th).as_bytes())?;
        outputs.write("cohort_diagnostics.tsv", diagnostics_tsv(run_table, th).as_bytes())?;
        if last == Stage::Cohorts {
            out.matches = Some(matches);
            out.cohorts = Some(cohorts);
            return Ok(out);
        }

        let score_params = json(&(
            cfg.years,
            &cfg.filters,
            cfg.cutoff,
            cfg.synonyms,
            &cfg.periods,
            match cfg.weights {
                WeightSpec::Period(r) => Some(r),
                _ => None,
            },
            cfg.groups.then_some(&cfg.group_fallback),
            cfg.top_terms,
        ));
        let mut score_parts: Vec<&[u8]> = vec![b"score", key_cohorts.as_bytes(), d_corpus.as_bytes(), &score_params];
        score_parts.extend(d_score_inputs.iter().map(|d| d.as_bytes()));
        let key_score = digest_parts(&score_parts);
        let score = runner.stage(Stage::Score, &key_score, |s: &ScoreArtifact| s.contributions.len() as u64, || {
            let (pubs, _) = load_publications(open(&i.corpus)?, &i.corpus.display().to_string(), None)?;
            let journals = JournalTable::load(open(&i.journals)?)?;
            let gazetteer = match &i.regions {
                Some(r) => Gazetteer::load(open(&i.gazetteer)?, Some(open(r)?))?,
                None => Gazetteer::load(open(&i.gazetteer)?, None::<BufReader<File>>)?,
            };
            let rules = match &i.status_rules {
                Some(p) => StatusRules::load(open(p)?)?,
                None => StatusRules::standard(),
            };
            ScoreInputs {
                cfg,
                th,
                matches: &matches,
                cohorts: &cohorts,
                pubs,
                journals,
                gazetteer,
                rules,
            }
            .score()
        })?;
        outputs.write("contributions.csv", contributions_csv(&score, th)?.as_bytes())?;
        outputs.write("research_area_groups.csv", area_groups_csv(&score.area_names, &score.area_groups).as_bytes())?;
        outputs.write("top_terms.csv", top_terms_csv(&score.top_terms, th)?.as_bytes())?;
        if score.stats.unknown_journals > 0 {
            notes.push(format!("{} sample papers skipped: journal not in journals table", score.stats.unknown_journals));
        }
        if last == Stage::Score {
            out.matches = Some(matches);
            out.cohorts = Some(cohorts);
            out.score = Some(score);
            return Ok(out);
        }

        let report_params = json(&(cfg.weights, cfg.missing, &cfg.bootstrap, cfg.groups, &cfg.group_fallback));
        let key_report = digest_parts(&[b"report", key_score.as_bytes(), &report_params]);
        let mut report_notes = Vec::new();
        let report = runner.stage(
            Stage::Report,
            &key_report,
            |r: &EdgeFactorReport| r.rows.len() as u64,
            || build_report(cfg, &score, &mut report_notes),
        )?;
        notes.extend(report_notes);
        outputs.write("edge_factors.csv", report.to_csv()?.as_bytes())?;
        outputs.write("plot_data.csv", report.plot_data_csv(&cfg.years.to_string()).as_bytes())?;
        out.matches = Some(matches);
        out.cohorts = Some(cohorts);
        out.score = Some(score);
        out.report = Some(report);
        Ok(out)
    })();

    let mut manifest = Manifest {
        config: cfg.clone(),
        inputs,
        stages: runner.stages,
        outputs: outputs.written.clone(),
        notes,
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    match result {
        Ok(mut out) => {
            outputs.write("manifest.json", body.as_bytes())?;
            outputs.commit()?;
            manifest.outputs = outputs.written.clone();
            out.manifest = manifest;
            Ok(out)
        }
        Err(e) => {
            let _ = outputs.write("manifest.json", body.as_bytes());
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_separate_parts() {
        assert_ne!(digest_parts(&[b"ab", b"c"]), digest_parts(&[b"a", b"bc"]));
        assert_eq!(digest_parts(&[b"x"]).len(), 64);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache {
            dir: dir.path().join(".cache"),
        };
        let key = digest_parts(&[b"k"]);
        assert!(cache.load::<Vec<u32>>(Stage::Score, &key).is_none());
        cache.store(Stage::Score, &key, &vec![1u32, 2, 3]).unwrap();
        assert_eq!(cache.load::<Vec<u32>>(Stage::Score, &key), Some(vec![1, 2, 3]));
    }
}
