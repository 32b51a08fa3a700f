//! Publications, sample filters, first-author locations, and research-area
//! groups from keyword tree-codes.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Diagnostics, Error, Result};
use crate::matcher::decode_lossy_dropping;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publication {
    pub paper_id: String,
    pub year: i32,
    pub title: String,
    pub abstract_text: String,
    pub journal_id: String,
    pub affiliation: Option<String>,
    pub keyword_codes: Vec<String>,
    pub is_original_research: bool,
}

impl Publication {
    /// Title and abstract joined by a single space (either may be empty).
    pub fn text(&self) -> String {
        match (self.title.is_empty(), self.abstract_text.is_empty()) {
            (false, false) => format!("{} {}", self.title, self.abstract_text),
            (false, true) => self.title.clone(),
            (true, _) => self.abstract_text.clone(),
        }
    }

    /// Character count of [`text`](Self::text), without building it.
    pub fn char_len(&self) -> usize {
        let t = self.title.chars().count();
        let a = self.abstract_text.chars().count();
        t + a + usize::from(t > 0 && a > 0)
    }
}

#[derive(Deserialize)]
struct RawPublication {
    id: serde_json::Value,
    year: i32,
    #[serde(default)]
    title: Option<String>,
    #[serde(default, rename = "abstract")]
    abstract_text: Option<String>,
    journal: String,
    #[serde(default)]
    affiliation: Option<String>,
    #[serde(default)]
    mesh: Vec<String>,
    #[serde(rename = "type")]
    kind: String,
}

/// Article type value that marks original research.
pub const ORIGINAL_RESEARCH: &str = "original";

#[derive(Debug, Clone, Default)]
pub struct CorpusReport {
    pub records: usize,
    pub skipped: usize,
    pub invalid_utf8_records: usize,
    pub diagnostics: Diagnostics,
}

/// Reads `corpus.jsonl`. Records that fail to parse, repeat an id, or fall
/// outside `years` (when given) are skipped with a diagnostic.
pub fn load_publications<R: BufRead>(
    reader: R,
    file: &str,
    years: Option<(i32, i32)>,
) -> Result<(Vec<Publication>, CorpusReport)> {
    let mut out = Vec::new();
    let mut report = CorpusReport::default();
    let mut ids: HashSet<String> = HashSet::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let lineno = i + 1;
        let bytes = line.map_err(|e| Error::io(file, e))?;
        let (text, dropped) = decode_lossy_dropping(&bytes);
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        report.records += 1;
        if dropped > 0 {
            report.invalid_utf8_records += 1;
            report
                .diagnostics
                .push(lineno, format!("dropped {dropped} invalid UTF-8 bytes"));
        }
        let raw: RawPublication = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => {
                report.skipped += 1;
                report.diagnostics.push(lineno, format!("unparseable record: {e}"));
                continue;
            }
        };
        let paper_id = match raw.id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                report.skipped += 1;
                report.diagnostics.push(lineno, format!("invalid id {other}"));
                continue;
            }
        };
        if let Some((lo, hi)) = years {
            if raw.year < lo || raw.year > hi {
                report.skipped += 1;
                report
                    .diagnostics
                    .push(lineno, format!("year {} outside corpus range {lo}-{hi}", raw.year));
                continue;
            }
        }
        if !ids.insert(paper_id.clone()) {
            report.skipped += 1;
            report.diagnostics.push(lineno, format!("duplicate paper id {paper_id}"));
            continue;
        }
        out.push(Publication {
            paper_id,
            year: raw.year,
            title: raw.title.unwrap_or_default(),
            abstract_text: raw.abstract_text.unwrap_or_default(),
            journal_id: raw.journal,
            affiliation: raw.affiliation.filter(|a| !a.trim().is_empty()),
            keyword_codes: raw.mesh,
            is_original_research: raw.kind.eq_ignore_ascii_case(ORIGINAL_RESEARCH),
        });
    }
    Ok((out, report))
}

/// Writes one publication as a `corpus.jsonl` line (no trailing newline).
pub fn publication_to_json(p: &Publication) -> String {
    let value = serde_json::json!({
        "id": p.paper_id,
        "year": p.year,
        "title": p.title,
        "abstract": p.abstract_text,
        "journal": p.journal_id,
        "affiliation": p.affiliation,
        "mesh": p.keyword_codes,
        "type": if p.is_original_research { ORIGINAL_RESEARCH } else { "other" },
    });
    value.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub year_lo: i32,
    pub year_hi: i32,
    pub char_lo: Option<usize>,
    pub char_hi: Option<usize>,
    pub original_only: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            year_lo: 1988,
            year_hi: 2016,
            char_lo: Some(200),
            char_hi: Some(5000),
            original_only: true,
        }
    }
}

pub fn passes_sample_filters(p: &Publication, cfg: &FilterConfig) -> bool {
    if cfg.original_only && !p.is_original_research {
        return false;
    }
    if p.year < cfg.year_lo || p.year > cfg.year_hi {
        return false;
    }
    if cfg.char_lo.is_none() && cfg.char_hi.is_none() {
        return true;
    }
    let n = p.char_len();
    cfg.char_lo.is_none_or(|lo| n >= lo) && cfg.char_hi.is_none_or(|hi| n <= hi)
}

/// Affiliation patterns and the country-to-reporting-location map.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Gazetteer {
    /// (lowercased pattern, location) in file order.
    patterns: Vec<(String, String)>,
    region_map: HashMap<String, String>,
}

impl Gazetteer {
    pub fn new(patterns: Vec<(String, String)>, region_map: HashMap<String, String>) -> Self {
        Gazetteer {
            patterns: patterns
                .into_iter()
                .map(|(p, l)| (p.to_lowercase(), l))
                .filter(|(p, _)| !p.trim().is_empty())
                .collect(),
            region_map,
        }
    }

    pub fn load<R1: BufRead, R2: BufRead>(gazetteer: R1, regions: Option<R2>) -> Result<Self> {
        let patterns = read_pairs(gazetteer, "gazetteer.tsv")?;
        let region_map = match regions {
            Some(r) => read_pairs(r, "regions.tsv")?.into_iter().collect(),
            None => HashMap::new(),
        };
        Ok(Gazetteer::new(patterns, region_map))
    }

    /// Every reporting location reachable from a pattern, sorted.
    pub fn reporting_locations(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.patterns.iter().map(|(_, l)| self.reporting(l)).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Maps a location to its reporting location (identity when unmapped).
    pub fn reporting<'a>(&'a self, location: &'a str) -> &'a str {
        self.region_map
            .get(location)
            .map(String::as_str)
            .unwrap_or(location)
    }
}

fn read_pairs<R: BufRead>(reader: R, file: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(file, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
                out.push((a.trim().to_owned(), b.trim().to_owned()))
            }
            _ => return Err(Error::parse(file, i + 1, "expected two tab-separated fields")),
        }
    }
    Ok(out)
}

/// Resolves a first-author affiliation to a reporting location.
///
/// Patterns match case-insensitively at word boundaries. The longest matching
/// pattern wins; equal lengths go to the match nearest the end of the string,
/// then to the earlier pattern in the file.
pub fn resolve_location(affiliation: Option<&str>, gaz: &Gazetteer) -> Option<String> {
    let aff = affiliation?.to_lowercase();
    let mut best: Option<(usize, usize, usize)> = None;
    for (rank, (pat, _)) in gaz.patterns.iter().enumerate() {
        let Some(pos) = last_bounded_match(&aff, pat) else {
            continue;
        };
        let key = (pat.chars().count(), pos);
        let better = match best {
            None => true,
            Some((len, p, _)) => key > (len, p),
        };
        if better {
            best = Some((key.0, key.1, rank));
        }
    }
    best.map(|(_, _, rank)| gaz.reporting(&gaz.patterns[rank].1).to_owned())
}

fn last_bounded_match(hay: &str, pat: &str) -> Option<usize> {
    hay.match_indices(pat)
        .filter(|(pos, m)| {
            let before = hay[..*pos].chars().next_back();
            let after = hay[pos + m.len()..].chars().next();
            !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
        })
        .map(|(pos, _)| pos)
        .last()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TranslationalStatus {
    pub h: bool,
    pub a: bool,
    pub c: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatusFlag {
    H,
    A,
    C,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusRule {
    pub flag: StatusFlag,
    pub root: String,
    pub excludes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusRules {
    pub rules: Vec<StatusRule>,
}

/// MeSH tree-code for "Humans".
pub const HUMAN_CODE: &str = "B01.050.150.900.649.801.400.112.400.400";

/// Default rules as a `status_rules.tsv` document.
pub fn default_status_rules_tsv() -> String {
    let mut s = String::new();
    s.push_str(&format!("H\t{HUMAN_CODE}\n"));
    s.push_str("H\tM01\n");
    for c in ["A11", "B02", "B03", "B04", "G02.111.570", "G02.149"] {
        s.push_str(&format!("C\t{c}\n"));
    }
    s.push_str(&format!("A\tB01\t{HUMAN_CODE}\n"));
    s
}

fn valid_tree_code(code: &str) -> bool {
    !code.is_empty() && code.split('.').all(|seg| !seg.trim().is_empty())
}

/// True when `code` is `root` or lies in its subtree.
pub fn in_subtree(code: &str, root: &str) -> bool {
    code == root || (code.len() > root.len() && code.starts_with(root) && code.as_bytes()[root.len()] == b'.')
}

impl StatusRules {
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let file = "status_rules.tsv";
        let mut rules: Vec<StatusRule> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(file, e))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(Error::parse(file, lineno, "expected FLAG<TAB>ROOT_CODE[<TAB>EXCLUDE_CODE]"));
            }
            let flag = match fields[0].to_ascii_uppercase().as_str() {
                "H" => StatusFlag::H,
                "A" => StatusFlag::A,
                "C" => StatusFlag::C,
                other => return Err(Error::parse(file, lineno, format!("unknown flag `{other}`"))),
            };
            let root = fields[1];
            if !valid_tree_code(root) {
                return Err(Error::parse(file, lineno, format!("malformed tree-code `{root}`")));
            }
            let exclude = fields.get(2).filter(|e| !e.is_empty());
            if let Some(e) = exclude {
                if !valid_tree_code(e) {
                    return Err(Error::parse(file, lineno, format!("malformed tree-code `{e}`")));
                }
            }
            match rules.iter_mut().find(|r| r.flag == flag && r.root == root) {
                Some(r) => r.excludes.extend(exclude.map(|e| e.to_string())),
                None => rules.push(StatusRule {
                    flag,
                    root: root.to_owned(),
                    excludes: exclude.map(|e| vec![e.to_string()]).unwrap_or_default(),
                }),
            }
        }
        Ok(StatusRules { rules })
    }

    pub fn standard() -> Self {
        StatusRules::load(default_status_rules_tsv().as_bytes()).expect("default rules parse")
    }
}

/// H/A/C flags of a paper from its keyword tree-codes. Malformed codes are
/// ignored and returned in the second value.
pub fn translational_status<S: AsRef<str>>(codes: &[S], rules: &StatusRules) -> (TranslationalStatus, Vec<String>) {
    let mut st = TranslationalStatus::default();
    let mut bad = Vec::new();
    for code in codes {
        let code = code.as_ref().trim();
        if !valid_tree_code(code) {
            bad.push(code.to_owned());
            continue;
        }
        for r in &rules.rules {
            if in_subtree(code, &r.root) && !r.excludes.iter().any(|e| in_subtree(code, e)) {
                match r.flag {
                    StatusFlag::H => st.h = true,
                    StatusFlag::A => st.a = true,
                    StatusFlag::C => st.c = true,
                }
            }
        }
    }
    (st, bad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AreaIdx(pub u32);

impl AreaIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AreaGroup {
    Applied,
    BasicScience,
    Other,
}

impl AreaGroup {
    pub const ALL: [AreaGroup; 3] = [AreaGroup::Applied, AreaGroup::BasicScience, AreaGroup::Other];

    pub fn label(self) -> &'static str {
        match self {
            AreaGroup::Applied => "Applied",
            AreaGroup::BasicScience => "Basic Science",
            AreaGroup::Other => "Other (Both Applied and Basic Science)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            AreaGroup::Applied => "applied",
            AreaGroup::BasicScience => "basic_science",
            AreaGroup::Other => "other",
        }
    }
}

impl fmt::Display for AreaGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchArea {
    pub id: String,
    pub name: String,
}

/// Journal to research-area links from `journals.tsv`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalTable {
    areas: Vec<ResearchArea>,
    area_index: HashMap<String, AreaIdx>,
    journals: HashMap<String, Vec<AreaIdx>>,
}

impl JournalTable {
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut t = JournalTable::default();
        for (journal, area) in read_pairs(reader, "journals.tsv")? {
            t.link(&journal, &area);
        }
        Ok(t)
    }

    pub fn link(&mut self, journal: &str, area: &str) {
        let next = AreaIdx(self.areas.len() as u32);
        let idx = *self.area_index.entry(area.to_owned()).or_insert_with(|| {
            self.areas.push(ResearchArea {
                id: area.to_owned(),
                name: area.to_owned(),
            });
            next
        });
        let links = self.journals.entry(journal.to_owned()).or_default();
        if !links.contains(&idx) {
            links.push(idx);
        }
    }

    pub fn areas_of(&self, journal: &str) -> Option<&[AreaIdx]> {
        self.journals.get(journal).map(Vec::as_slice)
    }

    pub fn areas(&self) -> &[ResearchArea] {
        &self.areas
    }

    pub fn area(&self, idx: AreaIdx) -> &ResearchArea {
        &self.areas[idx.index()]
    }

    pub fn area_idx(&self, id: &str) -> Option<AreaIdx> {
        self.area_index.get(id).copied()
    }

    pub fn journal_count(&self) -> usize {
        self.journals.len()
    }
}

/// Running sums of H/A/C indicators for one research area.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AchAccumulator {
    pub h: u64,
    pub a: u64,
    pub c: u64,
    pub n: u64,
}

impl AchAccumulator {
    pub fn add(&mut self, s: TranslationalStatus) {
        self.h += u64::from(s.h);
        self.a += u64::from(s.a);
        self.c += u64::from(s.c);
        self.n += 1;
    }

    pub fn merge(mut self, o: AchAccumulator) -> AchAccumulator {
        self.h += o.h;
        self.a += o.a;
        self.c += o.c;
        self.n += o.n;
        self
    }

    /// (avg H, avg A, avg C), or `None` for an area without papers.
    pub fn averages(&self) -> Option<(f64, f64, f64)> {
        (self.n > 0).then(|| {
            let n = self.n as f64;
            (self.h as f64 / n, self.a as f64 / n, self.c as f64 / n)
        })
    }

    pub fn group(&self) -> AreaGroup {
        match self.averages() {
            Some((h, a, c)) => group_from_averages(h, a, c),
            None => AreaGroup::Other,
        }
    }
}

pub fn group_from_averages(avg_h: f64, avg_a: f64, avg_c: f64) -> AreaGroup {
    if avg_h > avg_c && avg_h > 0.2 {
        AreaGroup::Applied
    } else if avg_h < avg_c && avg_a < 0.8 && avg_c > 0.5 {
        AreaGroup::BasicScience
    } else {
        AreaGroup::Other
    }
}

/// Accumulates each paper's status into every area it links to.
pub fn accumulate_area_status<'a, I>(papers: I, n_areas: usize) -> Vec<AchAccumulator>
where
    I: IntoIterator<Item = (TranslationalStatus, &'a [AreaIdx])>,
{
    let mut acc = vec![AchAccumulator::default(); n_areas];
    for (status, areas) in papers {
        for a in areas {
            acc[a.index()].add(status);
        }
    }
    acc
}

pub fn classify_research_area_groups<'a, I>(papers: I, journals: &JournalTable) -> Vec<AreaGroup>
where
    I: IntoIterator<Item = (TranslationalStatus, &'a [AreaIdx])>,
{
    accumulate_area_status(papers, journals.areas().len())
        .iter()
        .map(AchAccumulator::group)
        .collect()
}
