//! Synthetic thesaurus and corpus generator with planted idea births and
//! per-location adoption lags.
//!
//! Every idea gets a unique token spelled from `q`-prefixed syllables, so
//! filler text never matches the vocabulary by accident. Each paper draws an
//! adoption lag `L` from its location's distribution (geometric with the
//! configured mean, or fixed); written in year `y` it only mentions ideas born
//! in or before `y - L`, chosen with a geometric bias towards the newest
//! eligible idea.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{default_status_rules_tsv, HUMAN_CODE, ORIGINAL_RESEARCH};
use crate::error::{Error, Result};
use crate::vocab::{standard_categories, CategoryGroup, IdeaCategory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationSpec {
    pub name: String,
    /// Mean adoption lag in years.
    pub lag: f64,
    /// Use `lag` for every paper instead of drawing a geometric lag per paper.
    #[serde(default)]
    pub fixed_lag: bool,
    /// Reporting location, when it differs from the name.
    #[serde(default)]
    pub region: Option<String>,
    /// Later mean lags, each applying from its year onward.
    #[serde(default)]
    pub schedule: Vec<LagStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagStep {
    pub from: i32,
    pub lag: f64,
}

impl LocationSpec {
    /// Mean lag in force for papers published in `year`.
    pub fn lag_in(&self, year: i32) -> f64 {
        self.schedule.iter().filter(|s| s.from <= year).max_by_key(|s| s.from).map_or(self.lag, |s| s.lag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub first_year: i32,
    pub last_year: i32,
    /// Number of idea categories, drawn round-robin over the four groups of
    /// the standard table.
    pub categories: usize,
    pub research_areas: usize,
    pub journals_per_area: usize,
    /// Extra journals linked to two adjacent areas.
    pub multi_area_journals: usize,
    /// Ideas per category born during the twenty years before `first_year`.
    pub initial_ideas: usize,
    /// Poisson mean of idea births per category and year.
    pub births_per_year: f64,
    /// Success probability of the geometric rank offset from the newest
    /// eligible idea; larger means stronger recency bias.
    pub recency: f64,
    pub categories_per_paper: (usize, usize),
    pub synonym_share: f64,
    pub multi_category_share: f64,
    pub papers_per_location_year: usize,
    pub recent_papers_per_location_year: usize,
    pub recent_from_year: i32,
    pub review_share: f64,
    pub short_text_share: f64,
    pub unlocated_share: f64,
    pub locations: Vec<LocationSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            first_year: 1990,
            last_year: 2016,
            categories: 8,
            research_areas: 6,
            journals_per_area: 2,
            multi_area_journals: 2,
            initial_ideas: 30,
            births_per_year: 2.0,
            recency: 0.25,
            categories_per_paper: (1, 3),
            synonym_share: 0.3,
            multi_category_share: 0.1,
            papers_per_location_year: 20,
            recent_papers_per_location_year: 100,
            recent_from_year: 2015,
            review_share: 0.05,
            short_text_share: 0.02,
            unlocated_share: 0.03,
            locations: vec![
                LocationSpec { name: "Alderland".into(), lag: 0.0, fixed_lag: false, region: None, schedule: Vec::new() },
                LocationSpec { name: "Brightwater".into(), lag: 3.0, fixed_lag: false, region: None, schedule: Vec::new() },
                LocationSpec { name: "Cobalt Coast".into(), lag: 6.0, fixed_lag: false, region: None, schedule: Vec::new() },
            ],
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synth config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.last_year < self.first_year {
            return bad(format!("last_year {} before first_year {}", self.last_year, self.first_year));
        }
        let span = (self.last_year - self.first_year) as u32;
        if self.locations.is_empty() {
            return bad("at least one location is required".into());
        }
        for l in &self.locations {
            for lag in std::iter::once(l.lag).chain(l.schedule.iter().map(|s| s.lag)) {
                if !(lag >= 0.0 && lag.is_finite()) {
                    return bad(format!("location `{}` has invalid lag {lag}", l.name));
                }
                if lag > span as f64 {
                    return bad(format!(
                        "location `{}` has lag {lag} larger than the corpus span of {span} years",
                        l.name
                    ));
                }
            }
            if l.name.trim().is_empty() || l.name.contains(['\t', '\n', ',']) {
                return bad(format!("location name `{}` must be non-empty without tabs or commas", l.name));
            }
        }
        let n_std = standard_categories().len();
        if self.categories == 0 || self.categories > n_std {
            return bad(format!("categories must be in 1..={n_std}"));
        }
        if self.research_areas == 0 || self.journals_per_area == 0 {
            return bad("research_areas and journals_per_area must be positive".into());
        }
        if self.initial_ideas == 0 {
            return bad("initial_ideas must be positive".into());
        }
        let (lo, hi) = self.categories_per_paper;
        if lo == 0 || lo > hi || hi > self.categories {
            return bad(format!("categories_per_paper ({lo}, {hi}) must satisfy 1 <= lo <= hi <= categories"));
        }
        if self.papers_per_location_year == 0 && self.recent_papers_per_location_year == 0 {
            return bad("paper counts must not both be zero".into());
        }
        if !(self.recency > 0.0 && self.recency <= 1.0) {
            return bad("recency must be in (0, 1]".into());
        }
        if !(self.births_per_year >= 0.0 && self.births_per_year.is_finite()) {
            return bad("births_per_year must be non-negative".into());
        }
        for (name, v) in [
            ("synonym_share", self.synonym_share),
            ("multi_category_share", self.multi_category_share),
            ("review_share", self.review_share),
            ("short_text_share", self.short_text_share),
            ("unlocated_share", self.unlocated_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1]"));
            }
        }
        Ok(())
    }

    fn papers_in(&self, year: i32) -> usize {
        if year >= self.recent_from_year {
            self.recent_papers_per_location_year
        } else {
            self.papers_per_location_year
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationTruth {
    pub name: String,
    pub code: String,
    pub reporting: String,
    pub lag: f64,
    pub papers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub locations: Vec<LocationTruth>,
    /// Reporting locations from most to least novel (ascending lag).
    pub expected_order: Vec<String>,
    pub ideas: usize,
    pub papers: usize,
    /// Planted birth year of every canonical term.
    pub births: BTreeMap<String, i32>,
}

/// Generated files by name.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub files: BTreeMap<&'static str, String>,
    pub truth: Truth,
}

impl SynthOutput {
    pub fn file(&self, name: &str) -> &str {
        self.files.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprst";
const VOWELS: &[u8] = b"aeiou";

/// `q` followed by consonant-vowel syllables encoding `n`; distinct for
/// distinct `n` and never containing `v`, `x` or `z`.
fn syllable_word(mut n: usize) -> String {
    let mut s = String::from("q");
    let base = CONSONANTS.len() * VOWELS.len();
    loop {
        let d = n % base;
        s.push(CONSONANTS[d / VOWELS.len()] as char);
        s.push(VOWELS[d % VOWELS.len()] as char);
        n /= base;
        if n == 0 {
            break;
        }
    }
    s
}

const NOUNS: &[&str] = &["receptor", "kinase", "syndrome", "assay", "protein", "lesion", "pathway", "marker"];

const FILLER: &[&str] = &[
    "we", "report", "the", "results", "of", "a", "study", "in", "which", "patients", "samples", "were", "analysed",
    "using", "standard", "methods", "and", "compared", "with", "controls", "our", "findings", "suggest", "that",
    "further", "work", "is", "needed", "to", "confirm", "these", "observations", "across", "larger", "groups",
    "data", "show", "an", "association", "between", "exposure", "outcome", "measured", "over", "time", "for",
    "each", "group", "effect", "was", "significant", "after", "adjustment", "baseline", "differences",
];

const INSTITUTES: &[&str] = &["Department of Medicine", "Institute of Biology", "School of Public Health", "Faculty of Science"];

struct Idea {
    term: String,
    synonym: Option<String>,
    birth: i32,
    categories: Vec<usize>,
}

fn pick_categories(cfg: &SynthConfig) -> Vec<IdeaCategory> {
    let std = standard_categories();
    let mut by_group: Vec<Vec<&IdeaCategory>> = CategoryGroup::ALL
        .iter()
        .map(|g| std.iter().filter(|c| c.group == *g).collect())
        .collect();
    let mut out = Vec::new();
    let mut g = 0;
    while out.len() < cfg.categories {
        let bucket = &mut by_group[g % 4];
        if !bucket.is_empty() {
            out.push(bucket.remove(0).clone());
        }
        g += 1;
    }
    out
}

fn geometric_offset(rng: &mut ChaCha8Rng, p: f64) -> usize {
    if p >= 1.0 {
        return 0;
    }
    Geometric::new(p).map(|g| g.sample(rng) as usize).unwrap_or(0)
}

fn filler(rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<String>) {
    for _ in 0..n {
        out.push((*FILLER.choose(rng).expect("filler list")).to_string());
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cats = pick_categories(cfg);
    let n_cat = cats.len();

    // ideas per category, sorted by birth
    let mut ideas: Vec<Idea> = Vec::new();
    let mut by_cat: Vec<Vec<usize>> = vec![Vec::new(); n_cat];
    let births = Poisson::new(cfg.births_per_year.max(1e-12)).map_err(|e| Error::Config(e.to_string()))?;
    for (c, members) in by_cat.iter_mut().enumerate() {
        let mut years: Vec<i32> = (0..cfg.initial_ideas)
            .map(|_| rng.random_range(cfg.first_year - 20..cfg.first_year))
            .collect();
        for y in cfg.first_year..=cfg.last_year {
            let k = if cfg.births_per_year > 0.0 { births.sample(&mut rng) as usize } else { 0 };
            years.extend(std::iter::repeat_n(y, k));
        }
        years.sort_unstable();
        for birth in years {
            let id = ideas.len();
            let noun = NOUNS[rng.random_range(0..NOUNS.len())];
            let term = format!("{} {noun}", syllable_word(id));
            let synonym = rng.random_bool(cfg.synonym_share).then(|| format!("qv{}", &syllable_word(id)[1..]));
            let mut categories = vec![c];
            if n_cat > 1 && rng.random_bool(cfg.multi_category_share) {
                let other = (c + 1 + rng.random_range(0..n_cat - 1)) % n_cat;
                categories.push(other);
            }
            ideas.push(Idea { term, synonym, birth, categories });
            members.push(id);
        }
    }
    // multi-category ideas are also eligible in their extra categories
    for (id, idea) in ideas.iter().enumerate() {
        for &c in &idea.categories[1..] {
            by_cat[c].push(id);
        }
    }
    for members in &mut by_cat {
        members.sort_by_key(|&i| (ideas[i].birth, i));
    }

    let mut vocab = String::new();
    for (id, idea) in ideas.iter().enumerate() {
        let concept = format!("C{:06}", id + 1);
        for c in &idea.categories {
            let _ = writeln!(vocab, "{}\t{concept}\t{}", idea.term, cats[*c].name);
            if let Some(s) = &idea.synonym {
                let _ = writeln!(vocab, "{s}\t{concept}\t{}", cats[*c].name);
            }
        }
    }
    let mut categories_tsv = String::new();
    for c in &cats {
        let _ = writeln!(categories_tsv, "{}\t{}", c.name, c.group.label());
    }

    // journals: archetype by area index, applied / basic / veterinary
    let area_name = |a: usize| format!("Area {:02}", a + 1);
    let mut journals: Vec<(String, Vec<usize>)> = Vec::new();
    for a in 0..cfg.research_areas {
        for j in 0..cfg.journals_per_area {
            journals.push((format!("J{:02}{:02}", a + 1, j + 1), vec![a]));
        }
    }
    for m in 0..cfg.multi_area_journals {
        let a = m % cfg.research_areas;
        let b = (a + 1) % cfg.research_areas;
        let areas = if a == b { vec![a] } else { vec![a, b] };
        journals.push((format!("JM{:02}", m + 1), areas));
    }
    let mut journals_tsv = String::new();
    for (j, areas) in &journals {
        for a in areas {
            let _ = writeln!(journals_tsv, "{j}\t{}", area_name(*a));
        }
    }
    let mesh_for = |area: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
        let mut codes: Vec<String> = match area % 3 {
            0 => vec![HUMAN_CODE.into(), "C04.557".into()],
            1 => vec!["A11.251".into(), "B03.440".into()],
            _ => vec!["B01.050.150.900.649.313".into(), "B03.440".into()],
        };
        if rng.random_bool(0.2) {
            codes.push("M01.060".into());
        }
        codes
    };

    let mut gazetteer = String::new();
    let mut regions = String::new();
    let mut truth_locs = Vec::new();
    for l in &cfg.locations {
        let code = l.name.to_uppercase();
        let reporting = l.region.clone().unwrap_or_else(|| code.clone());
        let _ = writeln!(gazetteer, "{}\t{code}", l.name);
        let _ = writeln!(regions, "{code}\t{reporting}");
        truth_locs.push(LocationTruth { name: l.name.clone(), code, reporting, lag: l.lag, papers: 0 });
    }

    let mut corpus = String::new();
    let mut paper_no = 0usize;
    for year in cfg.first_year..=cfg.last_year {
        for (li, loc) in cfg.locations.iter().enumerate() {
            for _ in 0..cfg.papers_in(year) {
                let mean = loc.lag_in(year);
                let lag = if loc.fixed_lag {
                    mean.round() as i32
                } else {
                    geometric_offset(&mut rng, 1.0 / (1.0 + mean)) as i32
                };
                let horizon = year - lag;
                let k = rng.random_range(cfg.categories_per_paper.0..=cfg.categories_per_paper.1);
                let mut chosen: Vec<usize> = (0..n_cat).collect();
                chosen.shuffle(&mut rng);
                chosen.truncate(k);
                let mut mentions: Vec<String> = Vec::new();
                for c in chosen {
                    let eligible = by_cat[c].partition_point(|&i| ideas[i].birth <= horizon);
                    if eligible == 0 {
                        continue;
                    }
                    let off = geometric_offset(&mut rng, cfg.recency).min(eligible - 1);
                    let idea = &ideas[by_cat[c][eligible - 1 - off]];
                    let surface = match &idea.synonym {
                        Some(s) if rng.random_bool(0.5) => s.clone(),
                        _ => idea.term.clone(),
                    };
                    mentions.push(surface);
                }
                let short = rng.random_bool(cfg.short_text_share);
                let mut words: Vec<String> = Vec::new();
                filler(&mut rng, if short { 4 } else { 30 }, &mut words);
                for m in &mentions {
                    words.push(m.clone());
                    filler(&mut rng, if short { 1 } else { 8 }, &mut words);
                }
                let abstract_text = format!("{}.", words.join(" "));
                let title = match mentions.first() {
                    Some(m) if !short => format!("Effects of {m} in clinical practice"),
                    _ => "A note".to_string(),
                };
                let (jid, jareas) = &journals[rng.random_range(0..journals.len())];
                let affiliation = if rng.random_bool(cfg.unlocated_share) {
                    serde_json::Value::Null
                } else {
                    let inst = INSTITUTES[rng.random_range(0..INSTITUTES.len())];
                    serde_json::Value::String(format!("{inst}, University of City {}, {}", li + 1, loc.name))
                };
                let kind = if rng.random_bool(cfg.review_share) { "review" } else { ORIGINAL_RESEARCH };
                paper_no += 1;
                truth_locs[li].papers += 1;
                let rec = serde_json::json!({
                    "id": format!("P{paper_no:07}"),
                    "year": year,
                    "title": title,
                    "abstract": abstract_text,
                    "journal": jid,
                    "affiliation": affiliation,
                    "mesh": mesh_for(jareas[0], &mut rng),
                    "type": kind,
                });
                corpus.push_str(&rec.to_string());
                corpus.push('\n');
            }
        }
    }

    let mut order: Vec<&LocationTruth> = truth_locs.iter().collect();
    order.sort_by(|a, b| a.lag.total_cmp(&b.lag));
    let mut expected_order: Vec<String> = Vec::new();
    for l in order {
        if !expected_order.contains(&l.reporting) {
            expected_order.push(l.reporting.clone());
        }
    }
    let truth = Truth {
        seed: cfg.seed,
        expected_order,
        ideas: ideas.len(),
        papers: paper_no,
        births: ideas.iter().map(|i| (i.term.clone(), i.birth)).collect(),
        locations: truth_locs,
    };
    let mut files = BTreeMap::new();
    files.insert("vocab.tsv", vocab);
    files.insert("categories.tsv", categories_tsv);
    files.insert("journals.tsv", journals_tsv);
    files.insert("gazetteer.tsv", gazetteer);
    files.insert("regions.tsv", regions);
    files.insert("status_rules.tsv", default_status_rules_tsv());
    files.insert("corpus.jsonl", corpus);
    files.insert(
        "truth.json",
        serde_json::to_string_pretty(&truth).map_err(|e| Error::Runtime(e.to_string()))? + "\n",
    );
    Ok(SynthOutput { files, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_publications, Gazetteer, JournalTable, StatusRules};
    use crate::vocab::{load_categories, load_thesaurus};

    fn small() -> SynthConfig {
        SynthConfig {
            first_year: 2000,
            last_year: 2010,
            papers_per_location_year: 5,
            recent_papers_per_location_year: 10,
            recent_from_year: 2009,
            ..Default::default()
        }
    }

    #[test]
    fn syllable_words_are_distinct() {
        let words: std::collections::HashSet<String> = (0..5000).map(syllable_word).collect();
        assert_eq!(words.len(), 5000);
        assert!(words.iter().all(|w| w.starts_with('q') && !w[1..].contains(['q', 'v', 'x', 'z'])));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.files, b.files);
        let c = generate(&SynthConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.file("corpus.jsonl"), c.file("corpus.jsonl"));
    }

    #[test]
    fn outputs_parse_cleanly() {
        let out = generate(&small()).unwrap();
        let cats = load_categories(out.file("categories.tsv").as_bytes(), "categories.tsv").unwrap();
        let (th, rep) = load_thesaurus(out.file("vocab.tsv").as_bytes(), "vocab.tsv", cats).unwrap();
        assert!(rep.diagnostics.is_empty());
        assert_eq!(rep.dropped_empty, 0);
        assert!(th.terms().len() >= out.truth.ideas);
        let (pubs, crep) = load_publications(out.file("corpus.jsonl").as_bytes(), "corpus.jsonl", None).unwrap();
        assert!(crep.diagnostics.is_empty());
        assert_eq!(pubs.len(), out.truth.papers);
        let journals = JournalTable::load(out.file("journals.tsv").as_bytes()).unwrap();
        assert!(pubs.iter().all(|p| journals.areas_of(&p.journal_id).is_some()));
        Gazetteer::load(out.file("gazetteer.tsv").as_bytes(), Some(out.file("regions.tsv").as_bytes())).unwrap();
        StatusRules::load(out.file("status_rules.tsv").as_bytes()).unwrap();
        assert_eq!(out.truth.expected_order, vec!["ALDERLAND", "BRIGHTWATER", "COBALT COAST"]);
    }

    #[test]
    fn mentions_respect_lag() {
        let cfg = SynthConfig {
            locations: vec![LocationSpec { name: "Slowland".into(), lag: 5.0, fixed_lag: true, region: None, schedule: Vec::new() }],
            unlocated_share: 0.0,
            ..small()
        };
        let out = generate(&cfg).unwrap();
        let (pubs, _) = load_publications(out.file("corpus.jsonl").as_bytes(), "c", None).unwrap();
        for p in pubs {
            for (term, birth) in &out.truth.births {
                if p.text().contains(term.as_str()) {
                    assert!(*birth <= p.year - 5, "{term} born {birth} in {}", p.year);
                }
            }
        }
    }

    #[test]
    fn infeasible_lag_is_fatal() {
        let cfg = SynthConfig {
            locations: vec![LocationSpec { name: "Far".into(), lag: 11.0, fixed_lag: false, region: None, schedule: Vec::new() }],
            ..small()
        };
        let err = generate(&cfg).unwrap_err();
        assert!(err.to_string().contains("larger than the corpus span"));
    }

    #[test]
    fn toml_overrides_defaults() {
        let cfg = SynthConfig::from_toml("seed = 7\ncategories = 4\n[[locations]]\nname = \"Solo\"\nlag = 0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.categories, 4);
        assert_eq!(cfg.locations.len(), 1);
        assert!(SynthConfig::from_toml("sed = 7").is_err());
    }

    #[test]
    fn schedule_picks_latest_step() {
        let l = LocationSpec {
            name: "Shift".into(),
            lag: 6.0,
            fixed_lag: false,
            region: None,
            schedule: vec![LagStep { from: 2010, lag: 0.0 }, LagStep { from: 2000, lag: 3.0 }],
        };
        assert_eq!(l.lag_in(1999), 6.0);
        assert_eq!(l.lag_in(2000), 3.0);
        assert_eq!(l.lag_in(2016), 0.0);
        let cfg = SynthConfig {
            locations: vec![LocationSpec { schedule: vec![LagStep { from: 2000, lag: 40.0 }], ..l }],
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
