use std::process::Command;

use crosssim::harness::{
    report, run_plan, ArtifactKind, ExperimentPlan, Figure, Layout, Stage, Store, SCORES_HEADER, SCORES_TABLE,
};
use crosssim::Error;

const EXACT_ONLY: &str = r#"
version = 1
seed = 5

[[cells]]
name = "tiny"
geometry = "square"
sizes = [2]
distribution = "uniform"
t_a = [1.5]
n_instances = 2
engines = [{ kind = "exact" }]
"#;

const WITH_BPTNS: &str = r#"
version = 1
seed = 5

[[cells]]
name = "tiny"
geometry = "square"
sizes = [2]
distribution = "uniform"
t_a = [1.5]
n_instances = 2
engines = [{ kind = "exact" }, { kind = "bptns", chi = 2 }]
"#;

fn plan_in(dir: &std::path::Path, text: &str) -> ExperimentPlan {
    let mut plan = ExperimentPlan::from_toml_str(text).unwrap();
    plan.output_dir = dir.to_path_buf();
    plan
}

fn files_in(dir: std::path::PathBuf) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    names.sort();
    names
}

#[test]
fn exact_only_plan_writes_two_correlation_files_and_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = plan_in(tmp.path(), EXACT_ONLY);
    let (summary, store) = run_plan(&plan, Stage::Triangulate, 2).unwrap();
    assert!(summary.failures.is_empty());
    assert_eq!(files_in(store.root().join("correlations")).len(), 2);
    let scores = store.read_string(ArtifactKind::Summary, SCORES_TABLE).unwrap();
    let mut lines = scores.lines();
    assert_eq!(lines.next(), Some(SCORES_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row.starts_with("tiny/L2/ta1.5/exact/#"), "{row}");
        assert!(row.ends_with(",,ground_truth"), "{row}");
    }
}

#[test]
fn rerun_recomputes_nothing_and_keeps_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = plan_in(tmp.path(), EXACT_ONLY);
    let (first, store) = run_plan(&plan, Stage::Triangulate, 1).unwrap();
    assert!(first.computed > 0);
    let before = store.read(ArtifactKind::Summary, SCORES_TABLE).unwrap();
    let (second, _) = run_plan(&plan, Stage::Triangulate, 1).unwrap();
    assert_eq!(second.computed, 0);
    assert!(second.skipped > 0);
    assert_eq!(store.read(ArtifactKind::Summary, SCORES_TABLE).unwrap(), before);
}

#[test]
fn report_on_empty_store_lists_missing_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = plan_in(tmp.path(), WITH_BPTNS);
    let store = Store::open(tmp.path()).unwrap();
    let layout = Layout::new(&plan).unwrap();
    match report(&layout, &store, Figure::ErrorVsTa) {
        Err(Error::MissingCells(names)) => {
            assert_eq!(names.len(), 2);
            assert!(names.iter().all(|n| n.starts_with("tiny/")), "{names:?}");
        }
        other => panic!("expected missing cells, got {other:?}"),
    }
}

#[test]
fn report_after_run_writes_tidy_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = plan_in(tmp.path(), WITH_BPTNS);
    let (_, store) = run_plan(&plan, Stage::Triangulate, 1).unwrap();
    let layout = Layout::new(&plan).unwrap();
    let path = report(&layout, &store, Figure::ErrorVsTa).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().next(), Some(Figure::ErrorVsTa.header()));
    // two instance rows and one median row
    assert_eq!(text.lines().count(), 4);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_crosssim")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let plan_path = tmp.path().join("plan.toml");
    std::fs::write(&plan_path, WITH_BPTNS).unwrap();
    let out = tmp.path().join("out");
    let (plan_arg, out_arg) = (plan_path.to_str().unwrap(), out.to_str().unwrap());

    let empty = cli(&["report", "--plan", plan_arg, "--out", out_arg]);
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&empty.stderr).contains("missing tiny/"));

    let run = cli(&["score", "--plan", plan_arg, "--out", out_arg, "--workers", "1"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("summary").join(SCORES_TABLE).exists());

    let bad_path = tmp.path().join("bad.toml");
    std::fs::write(&bad_path, EXACT_ONLY.replace("version = 1", "version = 7")).unwrap();
    let bad = cli(&["gen", "--plan", bad_path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(3));
}
