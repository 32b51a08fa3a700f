use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edgefactor"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const RUN_TOML: &str = r#"
out_dir = "out"
[inputs]
vocab = "data/vocab.tsv"
categories = "data/categories.tsv"
corpus = "data/corpus.jsonl"
journals = "data/journals.tsv"
gazetteer = "data/gazetteer.tsv"
regions = "data/regions.tsv"
status_rules = "data/status_rules.tsv"
"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["synth", "--out", "data", "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(dir.path().join("run.toml"), RUN_TOML).unwrap();
    dir
}

fn stage_lines(o: &Output) -> Vec<String> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .filter(|l| !l.starts_with("outputs"))
        .map(|l| l.split_whitespace().take(2).collect::<Vec<_>>().join(" "))
        .collect()
}

#[test]
fn synth_then_pipeline_then_cached_rerun() {
    let dir = workspace();
    let first = run(dir.path(), &["pipeline", "--config", "run.toml"]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stage_lines(&first).iter().all(|l| l.ends_with("computed")));
    let ef = std::fs::read(dir.path().join("out/edge_factors.csv")).unwrap();

    let again = run(dir.path(), &["pipeline", "--config", "run.toml"]);
    assert_eq!(code(&again), 0);
    assert!(stage_lines(&again).iter().all(|l| l.ends_with("cached")));
    assert_eq!(std::fs::read(dir.path().join("out/edge_factors.csv")).unwrap(), ef);

    let delta = run(dir.path(), &["pipeline", "--config", "run.toml", "--cutoff", "0.2"]);
    assert_eq!(code(&delta), 0);
    assert_eq!(
        stage_lines(&delta),
        ["vocab cached", "scan cached", "cohorts cached", "score computed", "report computed"]
    );
}

#[test]
fn score_stops_before_report() {
    let dir = workspace();
    let o = run(dir.path(), &["score", "--config", "run.toml", "--out", "scored"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stage_lines(&o).len(), 4);
    assert!(dir.path().join("scored/contributions.csv").exists());
    assert!(!dir.path().join("scored/edge_factors.csv").exists());
}

#[test]
fn overrides_reach_the_report() {
    let dir = workspace();
    let o = run(
        dir.path(),
        &["report", "--config", "run.toml", "--ci", "--samples", "50", "--periods", "2000-2004", "--set", "top_terms=5"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ef = std::fs::read_to_string(dir.path().join("out/edge_factors.csv")).unwrap();
    let header = ef.lines().next().unwrap();
    assert!(header.contains("ci_lo,ci_hi"));
    assert!(header.ends_with("period_2000-2004"));
}

#[test]
fn exit_codes() {
    let dir = workspace();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["--version"])), 0);
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&run(dir.path(), &["pipeline", "--config", "run.toml", "--cutoff", "1.5"])), 1);
    assert_eq!(code(&run(dir.path(), &["pipeline", "--config", "run.toml", "--missing", "maybe"])), 1);
    assert_eq!(code(&run(dir.path(), &["--workers", "0", "vocab", "check", "--vocab", "data/vocab.tsv"])), 1);
    // unreadable input is a runtime failure
    assert_eq!(code(&run(dir.path(), &["pipeline", "--config", "absent.toml"])), 2);
}

#[test]
fn scan_and_cohorts_round_trip() {
    let dir = workspace();
    let vocab = ["--vocab", "data/vocab.tsv", "--categories", "data/categories.tsv"];
    let mut args = vec!["scan"];
    args.extend(vocab);
    args.extend(["--corpus", "data/corpus.jsonl", "--out", "m.bin", "--csv", "m.csv", "--bench"]);
    let o = run(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("tokens_per_second"));

    let mut args = vec!["cohorts"];
    args.extend(vocab);
    args.extend(["--matches", "m.bin", "--out", "c.tsv", "--diagnostics", "d.tsv"]);
    let o = run(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = std::fs::read_to_string(dir.path().join("c.tsv")).unwrap();
    assert!(tsv.lines().count() > 10);

    // matches from one vocabulary cannot be dated with another
    std::fs::write(dir.path().join("tiny.tsv"), "qzz\tC999999\tFinding\n").unwrap();
    let o = run(
        dir.path(),
        &["cohorts", "--vocab", "tiny.tsv", "--categories", "data/categories.tsv", "--matches", "m.bin"],
    );
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn classify_areas_lists_every_area() {
    let dir = workspace();
    let o = run(
        dir.path(),
        &["corpus", "classify-areas", "--corpus", "data/corpus.jsonl", "--journals", "data/journals.tsv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("research_area,group"));
    let rows: Vec<&str> = lines.collect();
    // default synth config has six areas
    assert_eq!(rows.len(), 6);
    let labels = ["Applied", "Basic Science", "Other (Both Applied and Basic Science)"];
    for r in rows {
        let (_, group) = r.split_once(',').unwrap();
        assert!(labels.contains(&group), "{r}");
    }
}
