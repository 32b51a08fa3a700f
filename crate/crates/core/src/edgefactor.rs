//! Location-level aggregation: per-cell edge factors, weighted overall and
//! grouped edge factors, missing-cell policies, period tables, bootstrap
//! intervals, and the top-terms report.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::CohortTable;
use crate::corpus::{AreaGroup, AreaIdx};
use crate::error::{Error, Result};
use crate::par;
use crate::scoring::{category_vintages, group_indices, CellKey, Contribution, LocationIdx};
use crate::vocab::{CategoryGroup, CategoryIdx, TermIdx, Thesaurus};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    GlobalCount,
    OwnCount,
    /// Global counts taken from a different (inclusive) year range.
    FixedPeriod(i32, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    ImputeOwnAverage,
    ImputeZero,
    ImputeHundred,
}

/// Dense location × cell table of summed scores and counts. Cells are indexed
/// `category * n_areas + area`, so tables built from different periods share
/// one index space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTable {
    n_categories: usize,
    n_areas: usize,
    n_locations: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
    /// Contributions per cell over every paper, located or not.
    totals: Vec<u64>,
}

impl CellTable {
    pub fn from_contributions(
        contribs: &[Contribution],
        n_categories: usize,
        n_areas: usize,
        n_locations: usize,
    ) -> Self {
        let n_cells = n_categories * n_areas;
        let cells = group_indices(contribs, |c| c.cell);
        // each cell accumulates in contribution order, independent of the schedule
        let per_cell = par::map(&cells, |idx| {
            let mut sums: HashMap<u32, CompensatedSum> = HashMap::new();
            let mut counts: HashMap<u32, u64> = HashMap::new();
            for &i in idx {
                if let Some(l) = contribs[i].location {
                    sums.entry(l.0).or_default().add(contribs[i].score);
                    *counts.entry(l.0).or_default() += 1;
                }
            }
            (contribs[idx[0]].cell, idx.len() as u64, sums, counts)
        });
        let mut t = CellTable {
            n_categories,
            n_areas,
            n_locations,
            sums: vec![0.0; n_cells * n_locations],
            counts: vec![0; n_cells * n_locations],
            totals: vec![0; n_cells],
        };
        for (cell, total, sums, counts) in per_cell {
            let c = t.cell_index(cell);
            t.totals[c] = total;
            for (l, s) in sums {
                t.sums[l as usize * n_cells + c] = s.value();
            }
            for (l, n) in counts {
                t.counts[l as usize * n_cells + c] = n;
            }
        }
        t
    }

    pub fn n_cells(&self) -> usize {
        self.n_categories * self.n_areas
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    pub fn cell_index(&self, key: CellKey) -> usize {
        key.category.index() * self.n_areas + key.area.index()
    }

    pub fn cell_key(&self, cell: usize) -> CellKey {
        CellKey {
            category: CategoryIdx((cell / self.n_areas) as u32),
            area: AreaIdx((cell % self.n_areas) as u32),
        }
    }

    pub fn count(&self, loc: LocationIdx, cell: usize) -> u64 {
        self.counts[loc.index() * self.n_cells() + cell]
    }

    pub fn location_total(&self, loc: LocationIdx) -> u64 {
        let n = self.n_cells();
        self.counts[loc.index() * n..(loc.index() + 1) * n].iter().sum()
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    /// Mean score of the location's contributions in the cell, `None` when it
    /// has none.
    pub fn cell_edge_factor(&self, loc: LocationIdx, cell: usize) -> Option<f64> {
        let k = loc.index() * self.n_cells() + cell;
        (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64)
    }
}

/// Contribution counts per cell in the shared index space.
pub fn cell_counts(contribs: &[Contribution], n_categories: usize, n_areas: usize) -> Vec<u64> {
    let mut out = vec![0; n_categories * n_areas];
    for c in contribs {
        out[c.cell.category.index() * n_areas + c.cell.area.index()] += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub scheme: WeightScheme,
    /// Per-cell weights shared by all locations. Under `OwnCount` these are the
    /// global counts, used only to size bootstrap samples.
    shared: Vec<f64>,
}

impl WeightTable {
    pub fn global(table: &CellTable) -> Self {
        WeightTable {
            scheme: WeightScheme::GlobalCount,
            shared: table.totals.iter().map(|&n| n as f64).collect(),
        }
    }

    pub fn own(table: &CellTable) -> Self {
        WeightTable {
            scheme: WeightScheme::OwnCount,
            ..WeightTable::global(table)
        }
    }

    pub fn fixed_period(counts: &[u64], years: (i32, i32)) -> Self {
        WeightTable {
            scheme: WeightScheme::FixedPeriod(years.0, years.1),
            shared: counts.iter().map(|&n| n as f64).collect(),
        }
    }

    pub fn from_shared(scheme: WeightScheme, shared: Vec<f64>) -> Self {
        WeightTable { scheme, shared }
    }

    pub fn shared(&self) -> &[f64] {
        &self.shared
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightTable {
            scheme: self.scheme,
            shared: self.shared.iter().map(|w| w * factor).collect(),
        }
    }

    pub fn weight(&self, table: &CellTable, loc: LocationIdx, cell: usize) -> f64 {
        match self.scheme {
            WeightScheme::OwnCount => table.count(loc, cell) as f64,
            _ => self.shared.get(cell).copied().unwrap_or(0.0),
        }
    }
}

/// Weighted edge factor over `(cell, multiplicity)` pairs with missing cells
/// filled by `policy`. `None` when no considered cell has weight or the
/// location has no contributions in any of them.
fn weighted_edge_factor<I>(
    table: &CellTable,
    loc: LocationIdx,
    weights: &WeightTable,
    policy: MissingPolicy,
    cells: I,
) -> Option<f64>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut present_num = CompensatedSum::default();
    let mut present_den = CompensatedSum::default();
    let mut missing_den = CompensatedSum::default();
    for (cell, k) in cells {
        let w = weights.weight(table, loc, cell) * k;
        if w <= 0.0 {
            continue;
        }
        match table.cell_edge_factor(loc, cell) {
            Some(ef) => {
                present_num.add(w * ef);
                present_den.add(w);
            }
            None => missing_den.add(w),
        }
    }
    let (pn, pd, md) = (present_num.value(), present_den.value(), missing_den.value());
    if pd <= 0.0 {
        return None;
    }
    let fill = match policy {
        // filling with the present-cell mean leaves that mean unchanged
        MissingPolicy::ImputeOwnAverage => return Some(pn / pd),
        MissingPolicy::ImputeZero => 0.0,
        MissingPolicy::ImputeHundred => 100.0,
    };
    let mut num = CompensatedSum::default();
    num.add(pn);
    num.add(fill * md);
    Some(num.value() / (pd + md))
}

pub fn overall_edge_factor(
    table: &CellTable,
    loc: LocationIdx,
    weights: &WeightTable,
    policy: MissingPolicy,
) -> Option<f64> {
    weighted_edge_factor(table, loc, weights, policy, (0..table.n_cells()).map(|c| (c, 1.0)))
}

/// Overall edge factor restricted to the cells selected by `filter`.
pub fn grouped_edge_factor(
    table: &CellTable,
    loc: LocationIdx,
    weights: &WeightTable,
    policy: MissingPolicy,
    filter: impl Fn(CellKey) -> bool,
) -> Option<f64> {
    let cells = (0..table.n_cells())
        .filter(|&c| filter(table.cell_key(c)))
        .map(|c| (c, 1.0));
    weighted_edge_factor(table, loc, weights, policy, cells)
}

/// Group lookups for the idea-category and research-area breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMaps {
    pub category_groups: Vec<CategoryGroup>,
    pub area_groups: Vec<AreaGroup>,
}

impl GroupMaps {
    pub fn idea_group_edge_factors(
        &self,
        table: &CellTable,
        loc: LocationIdx,
        weights: &WeightTable,
        policy: MissingPolicy,
    ) -> Vec<Option<f64>> {
        CategoryGroup::ALL
            .iter()
            .map(|&g| {
                grouped_edge_factor(table, loc, weights, policy, |k| {
                    self.category_groups[k.category.index()] == g
                })
            })
            .collect()
    }

    pub fn area_group_edge_factors(
        &self,
        table: &CellTable,
        loc: LocationIdx,
        weights: &WeightTable,
        policy: MissingPolicy,
    ) -> Vec<Option<f64>> {
        AreaGroup::ALL
            .iter()
            .map(|&g| {
                grouped_edge_factor(table, loc, weights, policy, |k| self.area_groups[k.area.index()] == g)
            })
            .collect()
    }
}

/// Edge factor of every location in every period table, under one weight
/// table. Rows are locations, columns periods.
pub fn period_edge_factors(
    periods: &[CellTable],
    weights: &WeightTable,
    policy: MissingPolicy,
    n_locations: usize,
) -> Vec<Vec<Option<f64>>> {
    (0..n_locations)
        .map(|l| {
            periods
                .iter()
                .map(|t| overall_edge_factor(t, LocationIdx(l as u32), weights, policy))
                .collect()
        })
        .collect()
}

/// Σ_L Σ_c w_c·n_Lc·EF_Lc / Σ_L Σ_c w_c·n_Lc: each location's cell edge
/// factors weighted by its own contributions and the shared cell weight.
pub fn contribution_weighted_mean(table: &CellTable, weights: &WeightTable) -> Option<f64> {
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    for l in 0..table.n_locations() {
        let loc = LocationIdx(l as u32);
        for c in 0..table.n_cells() {
            let w = weights.shared().get(c).copied().unwrap_or(0.0);
            if let Some(ef) = table.cell_edge_factor(loc, c) {
                let n = table.count(loc, c) as f64;
                num.add(w * n * ef);
                den.add(w * n);
            }
        }
    }
    (den.value() > 0.0).then(|| num.value() / den.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapDraw {
    Uniform,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub samples: usize,
    pub seed: u64,
    pub draw: BootstrapDraw,
    /// Share trimmed from each tail.
    pub trim: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            samples: 1000,
            seed: 0,
            draw: BootstrapDraw::Uniform,
            trim: 0.025,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Replicates in which the location had a value.
    pub replicates: usize,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Cells drawn with replacement, as (cell, multiplicity).
pub fn draw_cells(weights: &[f64], draw: BootstrapDraw, rng: &mut impl Rng) -> Vec<(usize, f64)> {
    let cells: Vec<usize> = (0..weights.len()).filter(|&c| weights[c] > 0.0).collect();
    if cells.is_empty() {
        return Vec::new();
    }
    let target: f64 = cells.iter().map(|&c| weights[c]).collect::<CompensatedSum>().value();
    let mut counts = vec![0u32; cells.len()];
    let mut drawn = 0.0;
    let weighted = match draw {
        BootstrapDraw::Weighted => WeightedIndex::new(cells.iter().map(|&c| weights[c])).ok(),
        BootstrapDraw::Uniform => None,
    };
    while drawn < target {
        let i = match &weighted {
            Some(w) => w.sample(rng),
            None => rng.random_range(0..cells.len()),
        };
        counts[i] += 1;
        drawn += weights[cells[i]];
    }
    cells
        .iter()
        .zip(counts)
        .filter(|(_, k)| *k > 0)
        .map(|(&c, k)| (c, k as f64))
        .collect()
}

/// Generator for replicate `i`: its own ChaCha stream under `seed`, so the
/// replicate sequence does not depend on scheduling.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Every location's overall edge factor in each replicate (rows are replicates).
pub fn bootstrap_replicates(
    table: &CellTable,
    weights: &WeightTable,
    policy: MissingPolicy,
    cfg: &BootstrapConfig,
) -> Vec<Vec<Option<f64>>> {
    par::map_range(cfg.samples, |i| {
        let mut rng = replicate_rng(cfg.seed, i);
        let drawn = draw_cells(weights.shared(), cfg.draw, &mut rng);
        (0..table.n_locations())
            .map(|l| weighted_edge_factor(table, LocationIdx(l as u32), weights, policy, drawn.iter().copied()))
            .collect()
    })
}

/// Percentile interval from the collected replicate values: the extremes left
/// after dropping `trim` of the values from each tail. `None` when fewer than
/// half of `samples` replicates produced a value.
pub fn trimmed_interval(mut values: Vec<f64>, samples: usize, trim: f64) -> Option<Interval> {
    if values.is_empty() || values.len() * 2 < samples {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let k = ((n as f64) * trim).floor() as usize;
    let k = k.min((n - 1) / 2);
    Some(Interval {
        lo: values[k],
        hi: values[n - 1 - k],
        replicates: n,
    })
}

pub fn bootstrap_ci(
    table: &CellTable,
    weights: &WeightTable,
    policy: MissingPolicy,
    cfg: &BootstrapConfig,
) -> Result<Vec<Option<Interval>>> {
    if cfg.samples == 0 {
        return Err(Error::Config("bootstrap needs at least one sample".into()));
    }
    if !(0.0..0.5).contains(&cfg.trim) {
        return Err(Error::Config(format!("bootstrap trim {} outside [0, 0.5)", cfg.trim)));
    }
    let reps = bootstrap_replicates(table, weights, policy, cfg);
    Ok((0..table.n_locations())
        .map(|l| {
            let values: Vec<f64> = reps.iter().filter_map(|r| r[l]).collect();
            trimmed_interval(values, cfg.samples, cfg.trim)
        })
        .collect())
}

/// Term, category, paper count, cohort year.
type TermCount = (TermIdx, CategoryIdx, u64, i32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopTermRow {
    pub group: CategoryGroup,
    pub decade: i32,
    pub rank: usize,
    pub count: u64,
    pub cumulative_share: f64,
    pub term: TermIdx,
    pub cohort: i32,
    pub synonym_cohort: i32,
    pub category: CategoryIdx,
}

/// Ranks (term, category) pairs by how often the term is the newest term of
/// its category in a paper. Ties for newest all count. Rows are grouped by
/// category group and decade of the term's own cohort; at most `top_n` rows
/// per group-decade are kept, with shares computed over all of them.
pub fn top_terms_report<'a, I>(
    papers: I,
    cohorts: &CohortTable,
    term_cohorts: &CohortTable,
    pooled_cohorts: &CohortTable,
    th: &Thesaurus,
    top_n: usize,
) -> Vec<TopTermRow>
where
    I: IntoIterator<Item = &'a [TermIdx]>,
{
    let mut counts: HashMap<(TermIdx, CategoryIdx), u64> = HashMap::new();
    for terms in papers {
        let newest = category_vintages(terms, cohorts, th);
        for &t in terms {
            let Some(year) = cohorts.retained(t) else {
                continue;
            };
            for &c in &th.term(t).category_ids {
                if newest.iter().any(|&(k, y)| k == c && y == year) {
                    *counts.entry((t, c)).or_default() += 1;
                }
            }
        }
    }
    let mut buckets: HashMap<(CategoryGroup, i32), Vec<TermCount>> = HashMap::new();
    for ((t, c), n) in counts {
        let Some(cohort) = term_cohorts.year(t).or(cohorts.year(t)) else {
            continue;
        };
        let group = th.category(c).group;
        buckets
            .entry((group, cohort.div_euclid(10) * 10))
            .or_default()
            .push((t, c, n, cohort));
    }
    let mut keys: Vec<(CategoryGroup, i32)> = buckets.keys().copied().collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut rows = Vec::new();
    for key in keys {
        let mut items = buckets.remove(&key).unwrap_or_default();
        items.sort_by(|a, b| {
            b.2.cmp(&a.2)
                .then_with(|| th.term(a.0).term_id.cmp(&th.term(b.0).term_id))
                .then(a.1.cmp(&b.1))
        });
        let total: u64 = items.iter().map(|i| i.2).sum();
        let mut running = 0u64;
        for (rank, (t, c, n, cohort)) in items.into_iter().enumerate().take(top_n) {
            running += n;
            rows.push(TopTermRow {
                group: key.0,
                decade: key.1,
                rank: rank + 1,
                count: n,
                cumulative_share: running as f64 / total as f64,
                term: t,
                cohort,
                synonym_cohort: pooled_cohorts.year(t).unwrap_or(cohort),
                category: c,
            });
        }
    }
    rows
}

pub fn top_terms_csv(rows: &[TopTermRow], th: &Thesaurus) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Runtime(e.to_string());
    w.write_record([
        "category_group",
        "decade",
        "rank",
        "count",
        "cumulative_share",
        "term",
        "cohort",
        "idea_category",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.group.label().to_string(),
            format!("{}s", r.decade),
            r.rank.to_string(),
            r.count.to_string(),
            format!("{:.4}", r.cumulative_share),
            th.term(r.term).raw.clone(),
            format!("{} ({})", r.cohort, r.synonym_cohort),
            th.category(r.category).name.clone(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One reporting location's row of the edge factor table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRow {
    pub location: String,
    pub contributions: u64,
    pub edge_factor: Option<f64>,
    pub ci: Option<Interval>,
    pub idea_groups: Vec<Option<f64>>,
    pub area_groups: Vec<Option<f64>>,
    pub periods: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeFactorReport {
    pub rows: Vec<LocationRow>,
    pub with_ci: bool,
    pub with_groups: bool,
    pub period_labels: Vec<String>,
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl EdgeFactorReport {
    /// Sorts rows by edge factor, descending, absent values last, then by name.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| match (a.edge_factor, b.edge_factor) {
            (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.location.cmp(&b.location)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.location.cmp(&b.location),
        });
    }

    pub fn row(&self, location: &str) -> Option<&LocationRow> {
        self.rows.iter().find(|r| r.location == location)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["location".to_string(), "contributions".into(), "edge_factor".into()];
        if self.with_ci {
            header.push("ci_lo".into());
            header.push("ci_hi".into());
        }
        if self.with_groups {
            header.extend(CategoryGroup::ALL.iter().map(|g| g.key().to_string()));
            header.extend(AreaGroup::ALL.iter().map(|g| g.key().to_string()));
        }
        header.extend(self.period_labels.iter().map(|p| format!("period_{p}")));
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Runtime(e.to_string());
        w.write_record(&header).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![r.location.clone(), r.contributions.to_string(), fmt_value(r.edge_factor)];
            if self.with_ci {
                rec.push(fmt_value(r.ci.map(|c| c.lo)));
                rec.push(fmt_value(r.ci.map(|c| c.hi)));
            }
            if self.with_groups {
                rec.extend(r.idea_groups.iter().map(|v| fmt_value(*v)));
                rec.extend(r.area_groups.iter().map(|v| fmt_value(*v)));
            }
            rec.extend(r.periods.iter().map(|v| fmt_value(*v)));
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Runtime(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Long-format `location,value,period` rows for external plotting.
    pub fn plot_data_csv(&self, main_period: &str) -> String {
        let mut s = String::from("location,value,period\n");
        for r in &self.rows {
            let loc = csv_field(&r.location);
            if let Some(v) = r.edge_factor {
                let _ = writeln!(s, "{loc},{v:.4},{main_period}");
            }
            for (label, v) in self.period_labels.iter().zip(&r.periods) {
                if let Some(v) = v {
                    let _ = writeln!(s, "{loc},{v:.4},{label}");
                }
            }
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{apply_floor, CohortMode};
    use crate::scoring::{flag_novelty, normalize};
    use crate::vocab::{load_categories, load_thesaurus};
    use proptest::prelude::*;

    fn contrib(cat: u32, area: u32, loc: Option<u32>, score: f64) -> Contribution {
        Contribution {
            paper: 0,
            cell: CellKey { category: CategoryIdx(cat), area: AreaIdx(area) },
            pub_year: 2015,
            cohort_year: 2000,
            location: loc.map(LocationIdx),
            novel: score > 0.0,
            score,
        }
    }

    const L0: LocationIdx = LocationIdx(0);

    #[test]
    fn cell_means_and_missing() {
        let cs = vec![contrib(0, 0, Some(0), 2000.0), contrib(0, 0, Some(0), 0.0), contrib(0, 1, Some(1), 0.0)];
        let t = CellTable::from_contributions(&cs, 1, 2, 2);
        assert_eq!(t.cell_edge_factor(L0, 0), Some(1000.0));
        assert_eq!(t.cell_edge_factor(L0, 1), None);
        assert_eq!(t.totals(), &[2, 1]);
    }

    #[test]
    fn weighted_mean_of_two_cells() {
        let cs = vec![contrib(0, 0, Some(0), 100.0), contrib(0, 1, Some(0), 200.0)];
        let t = CellTable::from_contributions(&cs, 1, 2, 1);
        let w = WeightTable::from_shared(WeightScheme::GlobalCount, vec![3.0, 1.0]);
        assert_eq!(overall_edge_factor(&t, L0, &w, MissingPolicy::ImputeOwnAverage), Some(125.0));
    }

    #[test]
    fn missing_policies_contrast() {
        // location 0 is present only in cell 0 (half the weight) with EF 100
        let cs = vec![contrib(0, 0, Some(0), 100.0), contrib(0, 1, Some(1), 100.0)];
        let t = CellTable::from_contributions(&cs, 1, 2, 2);
        let w = WeightTable::global(&t);
        let ef = |p| overall_edge_factor(&t, L0, &w, p).unwrap();
        assert_eq!(ef(MissingPolicy::ImputeZero), 50.0);
        assert_eq!(ef(MissingPolicy::ImputeOwnAverage), 100.0);
        assert_eq!(ef(MissingPolicy::ImputeHundred), 100.0);
    }

    #[test]
    fn location_without_contributions_is_absent() {
        let cs = vec![contrib(0, 0, Some(0), 100.0)];
        let t = CellTable::from_contributions(&cs, 1, 1, 2);
        let w = WeightTable::global(&t);
        for p in [MissingPolicy::ImputeOwnAverage, MissingPolicy::ImputeZero, MissingPolicy::ImputeHundred] {
            assert_eq!(overall_edge_factor(&t, LocationIdx(1), &w, p), None);
        }
    }

    #[test]
    fn grouped_identity_and_single_cell() {
        let cs = vec![
            contrib(0, 0, Some(0), 300.0),
            contrib(0, 0, Some(0), 0.0),
            contrib(1, 0, Some(0), 50.0),
            contrib(1, 0, Some(1), 150.0),
        ];
        let t = CellTable::from_contributions(&cs, 2, 1, 2);
        let w = WeightTable::global(&t);
        let p = MissingPolicy::ImputeOwnAverage;
        assert_eq!(grouped_edge_factor(&t, L0, &w, p, |_| true), overall_edge_factor(&t, L0, &w, p));
        assert_eq!(grouped_edge_factor(&t, L0, &w, p, |k| k.category == CategoryIdx(1)), Some(50.0));
        assert_eq!(grouped_edge_factor(&t, L0, &w, p, |_| false), None);
    }

    fn random_table(raw: &[(u32, u32, u32, f64)], n_cat: usize, n_area: usize, n_loc: usize) -> CellTable {
        let cs: Vec<Contribution> = raw.iter().map(|&(c, a, l, s)| contrib(c, a, Some(l), s)).collect();
        CellTable::from_contributions(&cs, n_cat, n_area, n_loc)
    }

    fn raw_contribs() -> impl Strategy<Value = Vec<(u32, u32, u32, f64)>> {
        prop::collection::vec((0u32..4, 0u32..3, 0u32..3, 0.0f64..2000.0), 1..80)
    }

    proptest! {
        #[test]
        fn betweenness_of_partition(raw in raw_contribs()) {
            let t = random_table(&raw, 4, 3, 3);
            let w = WeightTable::global(&t);
            let p = MissingPolicy::ImputeOwnAverage;
            for l in 0..3 {
                let loc = LocationIdx(l);
                let a = grouped_edge_factor(&t, loc, &w, p, |k| k.category.0 < 2);
                let b = grouped_edge_factor(&t, loc, &w, p, |k| k.category.0 >= 2);
                let all = overall_edge_factor(&t, loc, &w, p);
                if let (Some(a), Some(b), Some(all)) = (a, b, all) {
                    prop_assert!(all >= a.min(b) - 1e-9 && all <= a.max(b) + 1e-9);
                }
            }
        }

        #[test]
        fn weights_scale_free(raw in raw_contribs(), k in 0.01f64..1000.0) {
            let t = random_table(&raw, 4, 3, 3);
            let w = WeightTable::global(&t);
            let ws = w.scaled(k);
            for l in 0..3 {
                for p in [MissingPolicy::ImputeOwnAverage, MissingPolicy::ImputeZero, MissingPolicy::ImputeHundred] {
                    let a = overall_edge_factor(&t, LocationIdx(l), &w, p);
                    let b = overall_edge_factor(&t, LocationIdx(l), &ws, p);
                    prop_assert_eq!(a.is_some(), b.is_some());
                    if let (Some(a), Some(b)) = (a, b) {
                        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                    }
                }
            }
        }

        #[test]
        fn own_weights_give_plain_mean(raw in raw_contribs()) {
            let t = random_table(&raw, 4, 3, 3);
            let w = WeightTable::own(&t);
            for l in 0..3u32 {
                let scores: Vec<f64> = raw.iter().filter(|r| r.2 == l).map(|r| r.3).collect();
                let ef = overall_edge_factor(&t, LocationIdx(l), &w, MissingPolicy::ImputeZero);
                if scores.is_empty() {
                    prop_assert_eq!(ef, None);
                } else {
                    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                    prop_assert!((ef.unwrap() - mean).abs() <= 1e-12 * mean.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn single_cell_bootstrap_is_degenerate() {
        let cs = vec![contrib(0, 0, Some(0), 300.0), contrib(0, 0, Some(0), 0.0), contrib(0, 0, Some(1), 0.0)];
        let t = CellTable::from_contributions(&cs, 1, 1, 2);
        let w = WeightTable::global(&t);
        let cfg = BootstrapConfig { samples: 200, seed: 9, ..Default::default() };
        let ci = bootstrap_ci(&t, &w, MissingPolicy::ImputeOwnAverage, &cfg).unwrap();
        let ef = overall_edge_factor(&t, L0, &w, MissingPolicy::ImputeOwnAverage).unwrap();
        assert_eq!(ci[0].unwrap().lo, ef);
        assert_eq!(ci[0].unwrap().hi, ef);
        assert_eq!(ci[0].unwrap().replicates, 200);
    }

    #[test]
    fn draws_reach_target_weight() {
        let weights = vec![5.0, 0.0, 1.0, 2.0];
        for draw in [BootstrapDraw::Uniform, BootstrapDraw::Weighted] {
            let mut rng = replicate_rng(3, 0);
            let drawn = draw_cells(&weights, draw, &mut rng);
            let total: f64 = drawn.iter().map(|&(c, k)| weights[c] * k).sum();
            assert!(total >= 8.0);
            assert!(drawn.iter().all(|&(c, _)| c != 1));
        }
    }

    #[test]
    fn trimming_drops_tails() {
        let values: Vec<f64> = (0..1000).map(f64::from).collect();
        let ci = trimmed_interval(values, 1000, 0.025).unwrap();
        assert_eq!((ci.lo, ci.hi), (25.0, 974.0));
        assert!(trimmed_interval(vec![1.0; 400], 1000, 0.025).is_none());
    }

    #[test]
    fn bootstrap_is_reproducible_across_pools() {
        let raw: Vec<(u32, u32, u32, f64)> = (0..400)
            .map(|i| ((i % 7) as u32, (i % 3) as u32, (i % 4) as u32, if i % 9 == 0 { 900.0 } else { 0.0 }))
            .collect();
        let t = random_table(&raw, 7, 3, 4);
        let w = WeightTable::global(&t);
        let cfg = BootstrapConfig { samples: 300, seed: 42, ..Default::default() };
        let a = par::with_workers(Some(1), || bootstrap_ci(&t, &w, MissingPolicy::ImputeOwnAverage, &cfg).unwrap());
        let b = par::with_workers(Some(4), || bootstrap_ci(&t, &w, MissingPolicy::ImputeOwnAverage, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn normalized_table_averages_to_100() {
        let mut cs: Vec<Contribution> = (0..600)
            .map(|i| {
                let mut c = contrib((i % 5) as u32, (i % 2) as u32, Some((i % 3) as u32), 0.0);
                c.pub_year = 2015 + (i % 2);
                c.cohort_year = 1960 + ((i * 37) % 55);
                c
            })
            .collect();
        flag_novelty(&mut cs, 0.05).unwrap();
        normalize(&mut cs).unwrap();
        let t = CellTable::from_contributions(&cs, 5, 2, 3);
        let w = WeightTable::global(&t);
        let m = contribution_weighted_mean(&t, &w).unwrap();
        assert!((m - 100.0).abs() < 1e-9);
    }

    fn top_fixture() -> (Thesaurus, CohortTable, CohortTable) {
        let cats = load_categories("Finding\tClinical and Anatomy\nGene or Genome\tBasic Science and Research Tools\n".as_bytes(), "c").unwrap();
        let vocab = "term x\tC1\tFinding\nterm y\tC2\tFinding\nterm z\tC3\tFinding\nterm y\tC2\tGene or Genome\nalias x\tC1\tFinding\n";
        let th = load_thesaurus(vocab.as_bytes(), "v", cats).unwrap().0;
        let t = apply_floor(
            &CohortTable::from_years(vec![Some(2012), Some(2005), Some(2012), Some(1999)], CohortMode::TermOnly),
            1950,
        );
        let pooled = crate::cohort::pool_synonyms(&t, &th);
        (th, t, pooled)
    }

    #[test]
    fn newest_term_counts() {
        let (th, t, pooled) = top_fixture();
        let x = TermIdx(0);
        let y = TermIdx(1);
        let z = TermIdx(2);
        let papers: Vec<Vec<TermIdx>> = vec![vec![x, y], vec![x, z], vec![y]];
        let rows = top_terms_report(papers.iter().map(Vec::as_slice), &t, &t, &pooled, &th, 25);
        let count = |term: TermIdx, cat: u32| {
            rows.iter()
                .find(|r| r.term == term && r.category == CategoryIdx(cat))
                .map(|r| r.count)
                .unwrap_or(0)
        };
        // paper 1: x beats y in Finding; y alone in Gene; paper 2: x and z tie
        assert_eq!(count(x, 0), 2);
        assert_eq!(count(z, 0), 1);
        assert_eq!(count(y, 0), 1);
        assert_eq!(count(y, 1), 2);
        let x_row = rows.iter().find(|r| r.term == x).unwrap();
        assert_eq!((x_row.cohort, x_row.synonym_cohort), (2012, 1999));
        let first = rows.iter().find(|r| r.group == CategoryGroup::ClinicalAndAnatomy && r.decade == 2010).unwrap();
        assert_eq!(first.rank, 1);
        assert!((first.cumulative_share - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn report_csv_shape() {
        let report = EdgeFactorReport {
            rows: vec![LocationRow {
                location: "OTHER AFRICA".into(),
                contributions: 10,
                edge_factor: Some(70.123456),
                ci: Some(Interval { lo: 65.0, hi: 74.0, replicates: 1000 }),
                idea_groups: vec![Some(1.0), None, Some(2.0), Some(3.0)],
                area_groups: vec![Some(4.0), Some(5.0), None],
                periods: vec![Some(77.0)],
            }],
            with_ci: true,
            with_groups: true,
            period_labels: vec!["1990-1994".into()],
        };
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "location,contributions,edge_factor,ci_lo,ci_hi,clinical_and_anatomy,drugs_and_chemicals,basic_science_and_research_tools,miscellaneous,applied,basic_science,other,period_1990-1994"
        );
        assert_eq!(lines.next().unwrap(), "OTHER AFRICA,10,70.1235,65.0000,74.0000,1.0000,,2.0000,3.0000,4.0000,5.0000,,77.0000");
        assert_eq!(
            report.plot_data_csv("2015-2016"),
            "location,value,period\nOTHER AFRICA,70.1235,2015-2016\nOTHER AFRICA,77.0000,1990-1994\n"
        );
    }
}
