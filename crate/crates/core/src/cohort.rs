//! Cohort years: the first year each term appears anywhere in the corpus.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::MatchRecord;
use crate::par;
use crate::vocab::{TermIdx, Thesaurus};

pub const DEFAULT_FLOOR: i32 = 1950;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CohortMode {
    TermOnly,
    SynonymPooled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortTable {
    years: Vec<Option<i32>>,
    mode: CohortMode,
    floor_year: Option<i32>,
}

impl CohortTable {
    pub fn from_years(years: Vec<Option<i32>>, mode: CohortMode) -> Self {
        CohortTable {
            years,
            mode,
            floor_year: None,
        }
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn mode(&self) -> CohortMode {
        self.mode
    }

    pub fn floor_year(&self) -> Option<i32> {
        self.floor_year
    }

    /// Cohort year regardless of the floor; `None` for unobserved terms.
    pub fn year(&self, t: TermIdx) -> Option<i32> {
        self.years.get(t.index()).copied().flatten()
    }

    pub fn is_excluded(&self, t: TermIdx) -> bool {
        matches!((self.year(t), self.floor_year), (Some(y), Some(f)) if y < f)
    }

    /// Cohort year of a term that is observed and not excluded by the floor.
    pub fn retained(&self, t: TermIdx) -> Option<i32> {
        self.year(t).filter(|_| !self.is_excluded(t))
    }

    pub fn observed(&self) -> impl Iterator<Item = (TermIdx, i32)> + '_ {
        self.years
            .iter()
            .enumerate()
            .filter_map(|(i, y)| y.map(|y| (TermIdx(i as u32), y)))
    }

    /// Pointwise minimum of two partial tables over the same term space.
    pub fn merge_min(mut self, other: &CohortTable) -> CohortTable {
        for (a, b) in self.years.iter_mut().zip(&other.years) {
            *a = match (*a, *b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
        }
        self
    }

    /// `cohorts.tsv` rows: TERM_ID, COHORT_YEAR, kept|excluded.
    pub fn to_tsv(&self, th: &Thesaurus) -> String {
        let mut s = String::new();
        for (t, y) in self.observed() {
            let flag = if self.is_excluded(t) { "excluded" } else { "kept" };
            s.push_str(&format!("{}\t{}\t{}\n", th.term(t).term_id, y, flag));
        }
        s
    }

    /// Reads an externally supplied `cohorts.tsv`. The third column is
    /// informational; exclusion is recomputed by [`apply_floor`].
    pub fn from_tsv<R: BufRead>(reader: R, th: &Thesaurus, mode: CohortMode) -> Result<Self> {
        let file = "cohorts.tsv";
        let mut years = vec![None; th.terms().len()];
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(file, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 {
                return Err(Error::parse(file, i + 1, "expected TERM_ID<TAB>COHORT_YEAR"));
            }
            let t = th
                .term_idx(fields[0])
                .ok_or_else(|| Error::parse(file, i + 1, format!("unknown term `{}`", fields[0])))?;
            let y: i32 = fields[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(file, i + 1, "invalid year"))?;
            years[t.index()] = Some(y);
        }
        Ok(CohortTable::from_years(years, mode))
    }
}

/// First observed year of every matched term over the whole corpus.
/// Partitions are reduced by pointwise minimum, so the result does not depend
/// on record order or on how the work is split.
pub fn compute_cohorts(records: &[MatchRecord], n_terms: usize) -> CohortTable {
    let parts = (par::current_workers() * 4).max(1);
    let chunk = records.len().div_ceil(parts).max(1024);
    let partials = par::map_chunks(records, chunk, |chunk| {
        let mut years: Vec<Option<i32>> = vec![None; n_terms];
        for r in chunk {
            for t in &r.terms {
                let slot = &mut years[t.index()];
                *slot = Some(slot.map_or(r.year, |y| y.min(r.year)));
            }
        }
        CohortTable::from_years(years, CohortMode::TermOnly)
    });
    partials
        .into_iter()
        .reduce(|a, b| a.merge_min(&b))
        .unwrap_or_else(|| CohortTable::from_years(vec![None; n_terms], CohortMode::TermOnly))
}

/// Replaces each term's cohort with the minimum over its synonym group.
/// Unobserved members are ignored; unobserved terms stay unobserved.
pub fn pool_synonyms(table: &CohortTable, th: &Thesaurus) -> CohortTable {
    let mut years = table.years.clone();
    for members in th.concept_index().values() {
        let min = members.iter().filter_map(|&t| table.year(t)).min();
        for &t in members {
            if table.year(t).is_some() {
                years[t.index()] = min;
            }
        }
    }
    CohortTable {
        years,
        mode: CohortMode::SynonymPooled,
        floor_year: table.floor_year,
    }
}

pub fn apply_floor(table: &CohortTable, floor_year: i32) -> CohortTable {
    CohortTable {
        floor_year: Some(floor_year),
        ..table.clone()
    }
}

/// Number of terms first appearing in each year.
pub fn cohort_histogram(table: &CohortTable) -> BTreeMap<i32, usize> {
    let mut h = BTreeMap::new();
    for (_, y) in table.observed() {
        *h.entry(y).or_default() += 1;
    }
    h
}

/// Diagnostics file: floor-excluded terms, then the per-year cohort histogram.
pub fn diagnostics_tsv(table: &CohortTable, th: &Thesaurus) -> String {
    let mut s = String::from("# excluded by floor: TERM_ID\tCOHORT_YEAR\n");
    for (t, y) in table.observed() {
        if table.is_excluded(t) {
            s.push_str(&format!("{}\t{}\n", th.term(t).term_id, y));
        }
    }
    s.push_str("# new terms per cohort year: YEAR\tCOUNT\n");
    for (y, n) in cohort_histogram(table) {
        s.push_str(&format!("{y}\t{n}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{load_categories, load_thesaurus};
    use proptest::prelude::*;

    fn rec(year: i32, terms: &[u32]) -> MatchRecord {
        MatchRecord {
            paper_id: String::new(),
            year,
            terms: terms.iter().map(|&t| TermIdx(t)).collect(),
        }
    }

    #[test]
    fn cohort_is_first_year() {
        let recs = vec![rec(2001, &[0]), rec(1994, &[0, 1]), rec(2015, &[0])];
        let t = compute_cohorts(&recs, 3);
        assert_eq!(t.year(TermIdx(0)), Some(1994));
        assert_eq!(t.year(TermIdx(1)), Some(1994));
        assert_eq!(t.year(TermIdx(2)), None);
    }

    fn thesaurus() -> Thesaurus {
        let cats = load_categories("Research Device\tBasic Science and Research Tools\n".as_bytes(), "c").unwrap();
        let vocab = "fmri\tC1\tResearch Device\n\
                     functional magnetic resonance imaging\tC1\tResearch Device\n\
                     pet scan\tC2\tResearch Device\n\
                     bold signal\tC3\tResearch Device\n\
                     bold response\tC3\tResearch Device\n";
        load_thesaurus(vocab.as_bytes(), "v", cats).unwrap().0
    }

    #[test]
    fn pooling_takes_group_minimum() {
        let th = thesaurus();
        let t = CohortTable::from_years(
            vec![Some(1994), Some(1988), Some(1976), Some(2001), None],
            CohortMode::TermOnly,
        );
        let p = pool_synonyms(&t, &th);
        assert_eq!(p.year(TermIdx(0)), Some(1988));
        assert_eq!(p.year(TermIdx(2)), Some(1976));
        assert_eq!(p.year(TermIdx(3)), Some(2001));
        assert_eq!(p.year(TermIdx(4)), None);
        assert_eq!(p.mode(), CohortMode::SynonymPooled);
    }

    #[test]
    fn floor_is_inclusive() {
        let t = CohortTable::from_years(vec![Some(1949), Some(1950), Some(2016)], CohortMode::TermOnly);
        let f = apply_floor(&t, DEFAULT_FLOOR);
        assert!(f.is_excluded(TermIdx(0)));
        assert_eq!(f.retained(TermIdx(0)), None);
        assert_eq!(f.year(TermIdx(0)), Some(1949));
        assert_eq!(f.retained(TermIdx(1)), Some(1950));
        assert_eq!(f.retained(TermIdx(2)), Some(2016));
        assert!(f.to_tsv(&thesaurus()).starts_with("fmri\t1949\texcluded\n"));
    }

    #[test]
    fn tsv_round_trip() {
        let th = thesaurus();
        let t = CohortTable::from_years(vec![Some(1994), None, Some(1976), Some(2001), Some(1960)], CohortMode::TermOnly);
        let back = CohortTable::from_tsv(t.to_tsv(&th).as_bytes(), &th, CohortMode::TermOnly).unwrap();
        assert_eq!(back, t);
    }

    fn records() -> impl Strategy<Value = Vec<MatchRecord>> {
        prop::collection::vec(
            (1940i32..2020, prop::collection::btree_set(0u32..5, 0..4))
                .prop_map(|(y, ts)| rec(y, &ts.into_iter().collect::<Vec<_>>())),
            0..60,
        )
    }

    proptest! {
        #[test]
        fn order_and_partition_independent(mut recs in records(), seed in 0u64..1000) {
            let a = compute_cohorts(&recs, 5);
            let n = recs.len();
            if n > 0 {
                recs.rotate_left((seed as usize) % n);
            }
            recs.reverse();
            let b = par::with_workers(Some(3), || compute_cohorts(&recs, 5));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn growth_never_raises_cohorts(base in records(), extra in records()) {
            let before = compute_cohorts(&base, 5);
            let all: Vec<_> = base.iter().chain(extra.iter()).cloned().collect();
            let after = compute_cohorts(&all, 5);
            for t in 0..5 {
                let t = TermIdx(t);
                if let Some(b) = before.year(t) {
                    prop_assert!(after.year(t).unwrap() <= b);
                }
            }
        }

        #[test]
        fn pooling_dominates(recs in records()) {
            let th = thesaurus();
            let t = compute_cohorts(&recs, 5);
            let p = pool_synonyms(&t, &th);
            for i in 0..5 {
                let i = TermIdx(i);
                prop_assert_eq!(t.year(i).is_some(), p.year(i).is_some());
                if let (Some(a), Some(b)) = (t.year(i), p.year(i)) {
                    prop_assert!(b <= a);
                }
            }
        }
    }
}
