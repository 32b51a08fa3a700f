//! Contributions, their vintage, top-p novelty flags, and per-cell
//! normalization to a mean score of 100.

use serde::{Deserialize, Serialize};

use crate::cohort::CohortTable;
use crate::corpus::AreaIdx;
use crate::error::{Error, Result};
use crate::par;
use crate::vocab::{CategoryIdx, TermIdx, Thesaurus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocationIdx(pub u32);

impl LocationIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An (idea category, research area) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub category: CategoryIdx,
    pub area: AreaIdx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    /// Index of the paper in the scan table.
    pub paper: u32,
    pub cell: CellKey,
    pub pub_year: i32,
    pub cohort_year: i32,
    pub location: Option<LocationIdx>,
    pub novel: bool,
    pub score: f64,
}

impl Contribution {
    pub fn age(&self) -> i32 {
        self.pub_year - self.cohort_year
    }
}

/// The parts of a paper that contribution extraction needs.
#[derive(Debug, Clone, Copy)]
pub struct PaperRef<'a> {
    pub index: u32,
    pub year: i32,
    pub terms: &'a [TermIdx],
    pub location: Option<LocationIdx>,
}

/// Idea categories reached by a paper's floor-retained terms, each with the
/// cohort of its newest term.
pub fn category_vintages(terms: &[TermIdx], cohorts: &CohortTable, th: &Thesaurus) -> Vec<(CategoryIdx, i32)> {
    let mut out: Vec<(CategoryIdx, i32)> = Vec::new();
    for &t in terms {
        let Some(year) = cohorts.retained(t) else {
            continue;
        };
        for &c in &th.term(t).category_ids {
            match out.iter_mut().find(|(k, _)| *k == c) {
                Some((_, y)) => *y = (*y).max(year),
                None => out.push((c, year)),
            }
        }
    }
    out.sort_unstable();
    out
}

/// Expands a paper into one contribution per (matched category, journal area).
pub fn extract_contributions(
    paper: PaperRef<'_>,
    areas: &[AreaIdx],
    cohorts: &CohortTable,
    th: &Thesaurus,
) -> Result<Vec<Contribution>> {
    let vintages = category_vintages(paper.terms, cohorts, th);
    let mut out = Vec::with_capacity(vintages.len() * areas.len());
    for &(category, cohort_year) in &vintages {
        if cohort_year > paper.year {
            return Err(Error::Validation(format!(
                "paper #{} ({}) uses a term with cohort {cohort_year}",
                paper.index, paper.year
            )));
        }
        for &area in areas {
            out.push(Contribution {
                paper: paper.index,
                cell: CellKey { category, area },
                pub_year: paper.year,
                cohort_year,
                location: paper.location,
                novel: false,
                score: 0.0,
            });
        }
    }
    Ok(out)
}

/// Novel flags for one comparison pool given each member's cohort year.
///
/// A member is novel when the share of the pool with a strictly newer cohort
/// is below `cutoff`. Tied members always share a flag.
pub fn novelty_flags(cohorts: &[i32], cutoff: f64) -> Vec<bool> {
    let n = cohorts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| cohorts[b].cmp(&cohorts[a]));
    let mut flags = vec![false; n];
    let mut start = 0;
    while start < n {
        let year = cohorts[order[start]];
        let mut end = start;
        while end < n && cohorts[order[end]] == year {
            end += 1;
        }
        let novel = (start as f64) / (n as f64) < cutoff;
        for &i in &order[start..end] {
            flags[i] = novel;
        }
        start = end;
    }
    flags
}

pub fn check_cutoff(cutoff: f64) -> Result<()> {
    if cutoff > 0.0 && cutoff < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("novelty cutoff must lie in (0, 1), got {cutoff}")))
    }
}

/// Sets `novel` on every contribution, pooling by (cell, publication year).
/// Pools ignore location.
pub fn flag_novelty(contribs: &mut [Contribution], cutoff: f64) -> Result<()> {
    check_cutoff(cutoff)?;
    let pools = group_indices(contribs, |c| (c.cell, c.pub_year));
    let flags = par::map(&pools, |idx| {
        let years: Vec<i32> = idx.iter().map(|&i| contribs[i].cohort_year).collect();
        novelty_flags(&years, cutoff)
    });
    for (idx, f) in pools.iter().zip(flags) {
        for (&i, novel) in idx.iter().zip(f) {
            contribs[i].novel = novel;
        }
    }
    Ok(())
}

/// Per-cell normalization: novel contributions score `100 / m` where `m` is
/// the cell's novel share over all supplied contributions; others score 0.
pub fn normalize(contribs: &mut [Contribution]) -> Result<()> {
    let cells = group_indices(contribs, |c| c.cell);
    let scores = par::map(&cells, |idx| {
        let novel = idx.iter().filter(|&&i| contribs[i].novel).count();
        (novel > 0).then(|| 100.0 / (novel as f64 / idx.len() as f64))
    });
    for (idx, s) in cells.iter().zip(scores) {
        let Some(s) = s else {
            return Err(Error::Validation(format!(
                "cell {:?} has no novel contribution",
                contribs[idx[0]].cell
            )));
        };
        for &i in idx {
            contribs[i].score = if contribs[i].novel { s } else { 0.0 };
        }
    }
    Ok(())
}

/// Groups contribution indices by key, groups ordered by key and members by
/// position.
pub fn group_indices<K: Ord + Copy>(contribs: &[Contribution], key: impl Fn(&Contribution) -> K) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..contribs.len()).collect();
    order.sort_by_key(|&i| (key(&contribs[i]), i));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last: Option<K> = None;
    for i in order {
        let k = key(&contribs[i]);
        if last != Some(k) {
            groups.push(Vec::new());
            last = Some(k);
        }
        groups.last_mut().expect("group pushed").push(i);
    }
    groups
}
