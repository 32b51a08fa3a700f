//! Controlled vocabulary: terms, synonym groups, idea categories.
//!
//! Input is two flat files. `vocab.tsv` carries `TERM<TAB>CONCEPT_ID<TAB>CATEGORY_LABEL`
//! triples (a multi-category term repeats its line once per category) and
//! `categories.tsv` maps `CATEGORY_LABEL<TAB>GROUP_LABEL`.
//!
//! A term is identified by its normalized, space-joined token form, so
//! "C-reactive protein" and "creactive protein" are the same term.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Diagnostics, Error, Result};
use crate::matcher::{normalize_text, TokenSeq};

/// Category table bundled with the crate (125 labels with their groups).
pub const STANDARD_CATEGORIES: &str = include_str!("../data/categories.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TermIdx(pub u32);

impl TermIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryIdx(pub u32);

impl CategoryIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryGroup {
    ClinicalAndAnatomy,
    DrugsAndChemicals,
    BasicScienceAndResearchTools,
    Miscellaneous,
}

impl CategoryGroup {
    pub const ALL: [CategoryGroup; 4] = [
        CategoryGroup::ClinicalAndAnatomy,
        CategoryGroup::DrugsAndChemicals,
        CategoryGroup::BasicScienceAndResearchTools,
        CategoryGroup::Miscellaneous,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CategoryGroup::ClinicalAndAnatomy => "Clinical and Anatomy",
            CategoryGroup::DrugsAndChemicals => "Drugs and Chemicals",
            CategoryGroup::BasicScienceAndResearchTools => "Basic Science and Research Tools",
            CategoryGroup::Miscellaneous => "Miscellaneous",
        }
    }

    /// Snake-case column name used in reports.
    pub fn key(self) -> &'static str {
        match self {
            CategoryGroup::ClinicalAndAnatomy => "clinical_and_anatomy",
            CategoryGroup::DrugsAndChemicals => "drugs_and_chemicals",
            CategoryGroup::BasicScienceAndResearchTools => "basic_science_and_research_tools",
            CategoryGroup::Miscellaneous => "miscellaneous",
        }
    }
}

impl fmt::Display for CategoryGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CategoryGroup {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let squashed: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        CategoryGroup::ALL
            .into_iter()
            .find(|g| {
                let label: String = g
                    .label()
                    .chars()
                    .filter(|c| c.is_alphanumeric())
                    .flat_map(char::to_lowercase)
                    .collect();
                label == squashed
            })
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaCategory {
    pub id: String,
    pub name: String,
    pub group: CategoryGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    /// Normalized, space-joined form.
    pub term_id: String,
    /// First raw surface form seen for this term.
    pub raw: String,
    pub tokens: TokenSeq,
    pub concept_id: String,
    pub category_ids: Vec<CategoryIdx>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thesaurus {
    terms: Vec<Term>,
    categories: Vec<IdeaCategory>,
    term_index: HashMap<String, TermIdx>,
    category_index: HashMap<String, CategoryIdx>,
    concept_index: BTreeMap<String, Vec<TermIdx>>,
}

/// Counts and per-record problems from a thesaurus load.
#[derive(Debug, Clone, Default)]
pub struct VocabReport {
    pub records: usize,
    pub dropped_empty: usize,
    pub diagnostics: Diagnostics,
}

pub fn load_categories<R: BufRead>(reader: R, file: &str) -> Result<Vec<IdeaCategory>> {
    let mut out: Vec<IdeaCategory> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(file, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(file, lineno, "expected CATEGORY_LABEL<TAB>GROUP_LABEL"));
        }
        let label = fields[0].trim();
        let group_label = fields[1].trim();
        let group = group_label.parse().map_err(|_| Error::UnknownGroup {
            category: label.to_owned(),
            label: group_label.to_owned(),
            line: lineno,
        })?;
        match seen.get(label) {
            Some(&k) if out[k].group != group => {
                return Err(Error::parse(
                    file,
                    lineno,
                    format!("category `{label}` listed under two groups"),
                ))
            }
            Some(_) => {}
            None => {
                seen.insert(label.to_owned(), out.len());
                out.push(IdeaCategory {
                    id: label.to_owned(),
                    name: label.to_owned(),
                    group,
                });
            }
        }
    }
    Ok(out)
}

pub fn standard_categories() -> Vec<IdeaCategory> {
    load_categories(STANDARD_CATEGORIES.as_bytes(), "categories.tsv")
        .expect("bundled category table is well-formed")
}

/// Loads `vocab.tsv` against an already loaded category table.
///
/// Malformed lines and lines naming an unknown category are skipped with a
/// diagnostic; terms that normalize to nothing are dropped and counted. The
/// same term under two different concept ids is fatal.
pub fn load_thesaurus<R: BufRead>(
    reader: R,
    file: &str,
    categories: Vec<IdeaCategory>,
) -> Result<(Thesaurus, VocabReport)> {
    let mut th = Thesaurus::with_categories(categories);
    let mut report = VocabReport::default();
    let mut first_line: HashMap<TermIdx, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(file, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        report.records += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            report
                .diagnostics
                .push(lineno, format!("expected 3 tab-separated fields, found {}", fields.len()));
            continue;
        }
        let (raw, concept, label) = (fields[0], fields[1].trim(), fields[2].trim());
        if concept.is_empty() || label.is_empty() {
            report.diagnostics.push(lineno, "empty concept id or category label");
            continue;
        }
        let Some(&cat) = th.category_index.get(label) else {
            report
                .diagnostics
                .push(lineno, format!("unknown category `{label}`"));
            continue;
        };
        let tokens = normalize_text(raw);
        if tokens.is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        let term_id = tokens.joined();
        match th.term_index.get(&term_id) {
            Some(&idx) => {
                let term = &mut th.terms[idx.index()];
                if term.concept_id != concept {
                    return Err(Error::DuplicateTerm {
                        term: term_id,
                        line: lineno,
                        first: format!("{} (line {})", term.concept_id, first_line[&idx]),
                        second: concept.to_owned(),
                    });
                }
                if !term.category_ids.contains(&cat) {
                    term.category_ids.push(cat);
                }
            }
            None => {
                let idx = TermIdx(th.terms.len() as u32);
                first_line.insert(idx, lineno);
                th.term_index.insert(term_id.clone(), idx);
                th.concept_index
                    .entry(concept.to_owned())
                    .or_default()
                    .push(idx);
                th.terms.push(Term {
                    term_id,
                    raw: raw.trim().to_owned(),
                    tokens,
                    concept_id: concept.to_owned(),
                    category_ids: vec![cat],
                });
            }
        }
    }
    Ok((th, report))
}

impl Thesaurus {
    fn with_categories(categories: Vec<IdeaCategory>) -> Self {
        let category_index = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), CategoryIdx(i as u32)))
            .collect();
        Thesaurus {
            categories,
            category_index,
            ..Default::default()
        }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn term(&self, idx: TermIdx) -> &Term {
        &self.terms[idx.index()]
    }

    pub fn term_idx(&self, term_id: &str) -> Option<TermIdx> {
        self.term_index.get(term_id).copied()
    }

    pub fn categories(&self) -> &[IdeaCategory] {
        &self.categories
    }

    pub fn category(&self, idx: CategoryIdx) -> &IdeaCategory {
        &self.categories[idx.index()]
    }

    pub fn category_idx(&self, id: &str) -> Option<CategoryIdx> {
        self.category_index.get(id).copied()
    }

    pub fn concept_index(&self) -> &BTreeMap<String, Vec<TermIdx>> {
        &self.concept_index
    }

    /// Terms sharing `idx`'s concept, including `idx` itself.
    pub fn synonyms(&self, idx: TermIdx) -> &[TermIdx] {
        self.concept_index
            .get(&self.terms[idx.index()].concept_id)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    pub fn category_group(&self, category_id: &str) -> Result<CategoryGroup> {
        self.category_idx(category_id)
            .map(|c| self.categories[c.index()].group)
            .ok_or_else(|| Error::UnknownCategory(category_id.to_owned()))
    }

    pub fn categories_in_group(&self, group: CategoryGroup) -> impl Iterator<Item = CategoryIdx> + '_ {
        self.categories
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.group == group)
            .map(|(i, _)| CategoryIdx(i as u32))
    }

    /// Serializes back to `(vocab.tsv, categories.tsv)` contents.
    pub fn to_tsv(&self) -> (String, String) {
        let mut vocab = String::new();
        for t in &self.terms {
            for c in &t.category_ids {
                vocab.push_str(&format!("{}\t{}\t{}\n", t.raw, t.concept_id, self.category(*c).id));
            }
        }
        let mut cats = String::new();
        for c in &self.categories {
            cats.push_str(&format!("{}\t{}\n", c.id, c.group.label()));
        }
        (vocab, cats)
    }
}
