use std::path::Path;

use edgefactor_core::config::{InputPaths, RunConfig, YearRange, ROBUSTNESS_VARIANTS};
use edgefactor_core::pipeline::{run_pipeline, Stage, StageStatus};
use edgefactor_core::synth::{generate, LagStep, LocationSpec, SynthConfig};

fn inputs(dir: &Path) -> InputPaths {
    InputPaths {
        vocab: dir.join("vocab.tsv"),
        categories: Some(dir.join("categories.tsv")),
        corpus: dir.join("corpus.jsonl"),
        journals: dir.join("journals.tsv"),
        gazetteer: dir.join("gazetteer.tsv"),
        regions: Some(dir.join("regions.tsv")),
        status_rules: Some(dir.join("status_rules.tsv")),
    }
}

fn setup(synth: SynthConfig) -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    generate(&synth).unwrap().write_to(dir.path()).unwrap();
    let mut cfg = RunConfig::baseline(inputs(dir.path()));
    cfg.out_dir = dir.path().join("out");
    (dir, cfg)
}

fn statuses(m: &edgefactor_core::pipeline::Manifest) -> Vec<(Stage, StageStatus)> {
    m.stages.iter().map(|s| (s.stage, s.status)).collect()
}

#[test]
fn baseline_run_emits_reports() {
    let (_dir, cfg) = setup(SynthConfig::default());
    let out = run_pipeline(&cfg).unwrap();
    let ef = std::fs::read_to_string(cfg.out_dir.join("edge_factors.csv")).unwrap();
    assert!(ef.starts_with("location,contributions,edge_factor,"));
    // one row per reporting location
    assert_eq!(ef.lines().count(), 1 + 3);
    for name in ["cohorts.tsv", "contributions.csv", "plot_data.csv", "top_terms.csv", "manifest.json", "matches.bin"] {
        assert!(cfg.out_dir.join(name).exists(), "{name}");
        assert!(!cfg.out_dir.join(format!("{name}.partial")).exists(), "{name}");
    }
    let report = out.report.unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.location.as_str()).collect();
    assert_eq!(names, ["ALDERLAND", "BRIGHTWATER", "COBALT COAST"]);
    assert!(out.manifest.stages.iter().all(|s| s.status == StageStatus::Computed));
}

#[test]
fn rerun_is_cached_and_identical() {
    let (_dir, cfg) = setup(SynthConfig::default());
    run_pipeline(&cfg).unwrap();
    let read = |n: &str| std::fs::read(cfg.out_dir.join(n)).unwrap();
    let files = ["edge_factors.csv", "contributions.csv", "cohorts.tsv", "plot_data.csv", "top_terms.csv"];
    let before: Vec<Vec<u8>> = files.iter().map(|f| read(f)).collect();
    let again = run_pipeline(&cfg).unwrap();
    assert!(again.manifest.stages.iter().all(|s| s.status == StageStatus::Cached));
    let after: Vec<Vec<u8>> = files.iter().map(|f| read(f)).collect();
    assert_eq!(before, after);
}

#[test]
fn cutoff_change_reruns_score_and_report_only() {
    let (_dir, mut cfg) = setup(SynthConfig::default());
    run_pipeline(&cfg).unwrap();
    cfg.set("cutoff=0.20").unwrap();
    let m = run_pipeline(&cfg).unwrap().manifest;
    assert_eq!(
        statuses(&m),
        vec![
            (Stage::Vocab, StageStatus::Cached),
            (Stage::Scan, StageStatus::Cached),
            (Stage::Cohorts, StageStatus::Cached),
            (Stage::Score, StageStatus::Computed),
            (Stage::Report, StageStatus::Computed),
        ]
    );
}

#[test]
fn robustness_variants_all_run() {
    let (_dir, base) = setup(SynthConfig::default());
    for (name, edit) in ROBUSTNESS_VARIANTS {
        let mut cfg = base.clone();
        cfg.set(edit).unwrap();
        let out = run_pipeline(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        let report = out.report.unwrap();
        assert!(report.rows.iter().all(|r| r.edge_factor.is_some()), "{name}");
    }
}

#[test]
fn periods_and_bootstrap_columns() {
    let (_dir, mut cfg) = setup(SynthConfig::default());
    cfg.periods = vec![YearRange::new(2000, 2004).unwrap(), YearRange::new(2010, 2014).unwrap(), YearRange::new(1800, 1801).unwrap()];
    cfg.set("weights=\"period:2010-2014\"").unwrap();
    cfg.bootstrap.enabled = true;
    cfg.bootstrap.samples = 200;
    let out = run_pipeline(&cfg).unwrap();
    let ef = std::fs::read_to_string(cfg.out_dir.join("edge_factors.csv")).unwrap();
    let header = ef.lines().next().unwrap();
    assert!(header.contains("ci_lo,ci_hi"));
    assert!(header.ends_with("period_2000-2004,period_2010-2014"));
    assert!(out.manifest.notes.iter().any(|n| n.contains("1800-1801")));
    let plot = std::fs::read_to_string(cfg.out_dir.join("plot_data.csv")).unwrap();
    assert!(plot.lines().any(|l| l.ends_with(",2000-2004")));
}

#[test]
fn failure_leaves_partial_outputs() {
    let (dir, mut cfg) = setup(SynthConfig::default());
    std::fs::write(dir.path().join("journals.tsv"), "only-one-field\n").unwrap();
    cfg.out_dir = dir.path().join("out2");
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.is_validation(), "{err}");
    assert!(cfg.out_dir.join("matches.bin.partial").exists());
    assert!(cfg.out_dir.join("manifest.json.partial").exists());
    assert!(!cfg.out_dir.join("edge_factors.csv").exists());
}

#[test]
fn single_location_single_cell_scores_100() {
    let synth = SynthConfig {
        categories: 1,
        research_areas: 1,
        journals_per_area: 1,
        multi_area_journals: 0,
        categories_per_paper: (1, 1),
        // unlocated papers would share the cell
        unlocated_share: 0.0,
        locations: vec![LocationSpec { name: "Solo".into(), lag: 2.0, fixed_lag: false, region: None, schedule: Vec::new() }],
        ..SynthConfig::default()
    };
    let (_dir, cfg) = setup(synth);
    let report = run_pipeline(&cfg).unwrap().report.unwrap();
    assert_eq!(report.rows.len(), 1);
    let ef = report.rows[0].edge_factor.unwrap();
    assert!((ef - 100.0).abs() < 1e-9, "{ef}");
}

#[test]
fn shrinking_lag_gives_rising_period_series() {
    let steady = |name: &str| LocationSpec { name: name.into(), lag: 3.0, fixed_lag: false, region: None, schedule: Vec::new() };
    let synth = SynthConfig {
        seed: 5,
        papers_per_location_year: 60,
        locations: vec![
            steady("Alderland"),
            steady("Brightwater"),
            LocationSpec {
                name: "Cobalt Coast".into(),
                lag: 8.0,
                fixed_lag: false,
                region: None,
                schedule: vec![LagStep { from: 2003, lag: 3.0 }, LagStep { from: 2009, lag: 0.0 }],
            },
        ],
        ..SynthConfig::default()
    };
    let (_dir, mut cfg) = setup(synth);
    cfg.periods = ["1997-2001", "2004-2008", "2010-2014"].iter().map(|p| p.parse().unwrap()).collect();
    let report = run_pipeline(&cfg).unwrap().report.unwrap();
    let series: Vec<f64> = report.row("COBALT COAST").unwrap().periods.iter().map(|v| v.unwrap()).collect();
    assert_eq!(series.len(), 3);
    assert!(series.windows(2).all(|w| w[0] < w[1]), "{series:?}");
}
