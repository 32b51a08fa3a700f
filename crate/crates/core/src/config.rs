//! Run configuration for the full pipeline, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cohort::{CohortMode, DEFAULT_FLOOR};
use crate::corpus::FilterConfig;
use crate::edgefactor::{BootstrapConfig, BootstrapDraw, MissingPolicy, WeightScheme};
use crate::error::{Error, Result};
use crate::scoring::check_cutoff;

/// Inclusive year range written `1990-1999`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearRange {
    pub lo: i32,
    pub hi: i32,
}

impl YearRange {
    pub fn new(lo: i32, hi: i32) -> Result<Self> {
        if lo > hi {
            return Err(Error::Config(format!("year range {lo}-{hi} is empty")));
        }
        Ok(YearRange { lo, hi })
    }

    pub fn contains(&self, y: i32) -> bool {
        (self.lo..=self.hi).contains(&y)
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for YearRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid year range `{s}`, expected YYYY-YYYY"));
        let (a, b) = s.trim().split_once('-').ok_or_else(bad)?;
        YearRange::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(YearRange);

/// `global`, `own` or `period:YYYY-YYYY`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSpec {
    Global,
    Own,
    Period(YearRange),
}

impl WeightSpec {
    pub fn scheme(&self) -> WeightScheme {
        match self {
            WeightSpec::Global => WeightScheme::GlobalCount,
            WeightSpec::Own => WeightScheme::OwnCount,
            WeightSpec::Period(r) => WeightScheme::FixedPeriod(r.lo, r.hi),
        }
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Global => f.write_str("global"),
            WeightSpec::Own => f.write_str("own"),
            WeightSpec::Period(r) => write!(f, "period:{r}"),
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "global" => Ok(WeightSpec::Global),
            "own" => Ok(WeightSpec::Own),
            other => match other.strip_prefix("period:") {
                Some(r) => Ok(WeightSpec::Period(r.parse()?)),
                None => Err(Error::Config(format!("unknown weights `{s}`, expected global|own|period:YYYY-YYYY"))),
            },
        }
    }
}

string_serde!(WeightSpec);

impl fmt::Display for MissingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissingPolicy::ImputeOwnAverage => "own-avg",
            MissingPolicy::ImputeZero => "zero",
            MissingPolicy::ImputeHundred => "hundred",
        })
    }
}

impl FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "own-avg" => Ok(MissingPolicy::ImputeOwnAverage),
            "zero" => Ok(MissingPolicy::ImputeZero),
            "hundred" => Ok(MissingPolicy::ImputeHundred),
            _ => Err(Error::Config(format!("unknown missing policy `{s}`, expected own-avg|zero|hundred"))),
        }
    }
}

impl fmt::Display for BootstrapDraw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BootstrapDraw::Uniform => "uniform",
            BootstrapDraw::Weighted => "weighted",
        })
    }
}

impl FromStr for BootstrapDraw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(BootstrapDraw::Uniform),
            "weighted" => Ok(BootstrapDraw::Weighted),
            _ => Err(Error::Config(format!("unknown bootstrap draw `{s}`, expected uniform|weighted"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub vocab: PathBuf,
    /// Defaults to the bundled category table.
    #[serde(default)]
    pub categories: Option<PathBuf>,
    pub corpus: PathBuf,
    pub journals: PathBuf,
    pub gazetteer: PathBuf,
    #[serde(default)]
    pub regions: Option<PathBuf>,
    /// Defaults to the built-in rules.
    #[serde(default)]
    pub status_rules: Option<PathBuf>,
}

impl InputPaths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.vocab);
        fix(&mut self.corpus);
        fix(&mut self.journals);
        fix(&mut self.gazetteer);
        for p in [&mut self.categories, &mut self.regions, &mut self.status_rules].into_iter().flatten() {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Filters {
    pub original_only: bool,
    pub char_limits: bool,
    pub char_min: usize,
    pub char_max: usize,
}

impl Default for Filters {
    fn default() -> Self {
        Filters {
            original_only: true,
            char_limits: true,
            char_min: 200,
            char_max: 5000,
        }
    }
}

impl Filters {
    pub fn for_years(&self, years: YearRange) -> FilterConfig {
        FilterConfig {
            year_lo: years.lo,
            year_hi: years.hi,
            char_lo: self.char_limits.then_some(self.char_min),
            char_hi: self.char_limits.then_some(self.char_max),
            original_only: self.original_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub enabled: bool,
    pub samples: usize,
    pub seed: u64,
    pub draw: BootstrapDraw,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        BootstrapSettings {
            enabled: false,
            samples: d.samples,
            seed: d.seed,
            draw: d.draw,
        }
    }
}

impl BootstrapSettings {
    pub fn config(&self) -> BootstrapConfig {
        BootstrapConfig {
            samples: self.samples,
            seed: self.seed,
            draw: self.draw,
            ..BootstrapConfig::default()
        }
    }
}

string_serde!(BootstrapDraw);
string_serde!(MissingPolicy);

/// Group columns for locations below `min_contributions` are taken from a
/// run over the wider `years` window instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupFallback {
    pub min_contributions: u64,
    pub years: YearRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Papers scored and reported.
    #[serde(default = "default_years")]
    pub years: YearRange,
    /// Papers used to date terms; all loaded papers when absent.
    #[serde(default)]
    pub cohort_years: Option<YearRange>,
    #[serde(default)]
    pub filters: Filters,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub synonyms: bool,
    #[serde(default = "default_floor")]
    pub floor: i32,
    #[serde(default = "default_weights")]
    pub weights: WeightSpec,
    #[serde(default = "default_missing")]
    pub missing: MissingPolicy,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    /// Extra reporting periods, each scored on its own.
    #[serde(default)]
    pub periods: Vec<YearRange>,
    #[serde(default = "default_true")]
    pub groups: bool,
    #[serde(default)]
    pub group_fallback: Option<GroupFallback>,
    #[serde(default = "default_top_terms")]
    pub top_terms: usize,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_years() -> YearRange {
    YearRange { lo: 2015, hi: 2016 }
}
fn default_cutoff() -> f64 {
    0.05
}
fn default_floor() -> i32 {
    DEFAULT_FLOOR
}
fn default_weights() -> WeightSpec {
    WeightSpec::Global
}
fn default_missing() -> MissingPolicy {
    MissingPolicy::ImputeOwnAverage
}
fn default_true() -> bool {
    true
}
fn default_top_terms() -> usize {
    25
}

impl RunConfig {
    /// Baseline configuration over the given inputs.
    pub fn baseline(inputs: InputPaths) -> Self {
        let mut cfg: RunConfig = toml::from_str("[inputs]\nvocab = \"\"\ncorpus = \"\"\njournals = \"\"\ngazetteer = \"\"\n")
            .expect("baseline config parses");
        cfg.inputs = inputs;
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.inputs.resolve(base);
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check_cutoff(self.cutoff)?;
        if self.filters.char_limits && self.filters.char_min > self.filters.char_max {
            return Err(Error::Config("filters.char_min exceeds filters.char_max".into()));
        }
        if self.bootstrap.enabled && self.bootstrap.samples == 0 {
            return Err(Error::Config("bootstrap.samples must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(())
    }

    pub fn cohort_mode(&self) -> CohortMode {
        if self.synonyms {
            CohortMode::SynonymPooled
        } else {
            CohortMode::TermOnly
        }
    }

    /// Applies one `key=value` override using the config's own field names,
    /// e.g. `cutoff=0.2`, `filters.char_limits=false`, `weights="own"`.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).map_err(|e| Error::Config(e.to_string()))?;
        let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {}", value.trim())) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(value.trim().to_string()),
        };
        let parts: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields one part");
        let mut table = &mut doc;
        for p in parents {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{p}` is not a table")))?;
        }
        table.insert(last.to_string(), value);
        let next: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override `{assignment}`: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }
}

/// The robustness variants, each a single-field edit of the baseline.
pub const ROBUSTNESS_VARIANTS: [(&str, &str); 8] = [
    ("missing cells set to zero", "missing=\"zero\""),
    ("own-contribution weights", "weights=\"own\""),
    ("synonym-pooled cohorts", "synonyms=true"),
    ("top 20% novel", "cutoff=0.20"),
    ("top 10% novel", "cutoff=0.10"),
    ("top 1% novel", "cutoff=0.01"),
    ("all article types", "filters.original_only=false"),
    ("no character limits", "filters.char_limits=false"),
];

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[inputs]\nvocab = \"v.tsv\"\ncorpus = \"c.jsonl\"\njournals = \"j.tsv\"\ngazetteer = \"g.tsv\"\n";

    #[test]
    fn defaults_are_baseline() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.cutoff, 0.05);
        assert_eq!(c.years, YearRange { lo: 2015, hi: 2016 });
        assert_eq!(c.weights, WeightSpec::Global);
        assert_eq!(c.missing, MissingPolicy::ImputeOwnAverage);
        assert_eq!(c.floor, 1950);
        assert!(!c.synonyms && c.filters.original_only && c.filters.char_limits);
        assert_eq!(c.filters.for_years(c.years).char_lo, Some(200));
    }

    #[test]
    fn specs_parse_and_print() {
        for s in ["global", "own", "period:1990-1999"] {
            assert_eq!(s.parse::<WeightSpec>().unwrap().to_string(), s);
        }
        for s in ["own-avg", "zero", "hundred"] {
            assert_eq!(s.parse::<MissingPolicy>().unwrap().to_string(), s);
        }
        assert!("period:1999-1990".parse::<WeightSpec>().is_err());
        assert!("nearest".parse::<MissingPolicy>().is_err());
    }

    #[test]
    fn every_variant_is_one_edit() {
        let base = RunConfig::from_toml(MINIMAL).unwrap();
        for (name, edit) in ROBUSTNESS_VARIANTS {
            let mut c = base.clone();
            c.set(edit).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_ne!(c, base, "{name}");
            let a = toml::Value::try_from(&base).unwrap();
            let b = toml::Value::try_from(&c).unwrap();
            let diff = count_leaf_diffs(&a, &b);
            assert_eq!(diff, 1, "{name}");
        }
    }

    fn count_leaf_diffs(a: &toml::Value, b: &toml::Value) -> usize {
        match (a, b) {
            (toml::Value::Table(x), toml::Value::Table(y)) => {
                let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
                keys.into_iter()
                    .map(|k| match (x.get(k), y.get(k)) {
                        (Some(p), Some(q)) => count_leaf_diffs(p, q),
                        _ => 1,
                    })
                    .sum()
            }
            _ => usize::from(a != b),
        }
    }

    #[test]
    fn overrides_validate() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.set("weights=period:1990-1999").unwrap();
        assert_eq!(c.weights, WeightSpec::Period(YearRange { lo: 1990, hi: 1999 }));
        assert!(c.set("cutoff=1.5").is_err());
        assert!(c.set("nonsense=1").is_err());
        assert_eq!(c.weights, WeightSpec::Period(YearRange { lo: 1990, hi: 1999 }));
    }
}
