use std::fs;
use std::path::Path;

use quadgait::config::KeyValues;
use quadgait::experiment::{self, read_manifest, CellStatus, ExperimentPlan, HistogramOptions};
use quadgait::gait_params::effective_bounds;
use quadgait::metrics::{SUMMARY_HEADER, TRACE_HEADER};
use quadgait::evolution::GENERATION_HEADER;
use quadgait::{Complexity, ParamId, ParamTable};

fn plan(dir: &Path) -> ExperimentPlan {
    let text = "complexities = 0, 1\nbudgets = 64\nrepetitions = 2\nbase_seed = 5\n";
    let mut plan = ExperimentPlan::from_config(&KeyValues::parse(text).unwrap()).unwrap();
    plan.output_directory = dir.to_path_buf();
    plan
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("runs")] {
        for e in fs::read_dir(&sub).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                out.push((p.display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn resuming_a_finished_sweep_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = plan(tmp.path());
    let first = experiment::run_sweep(&plan, 2, false).unwrap();
    assert_eq!(first.completed.len(), 4);
    let before = snapshot(tmp.path());
    let again = experiment::run_sweep(&plan, 2, true).unwrap();
    assert_eq!(again.skipped.len(), 4);
    assert_eq!(snapshot(tmp.path()), before);
}

#[test]
fn outputs_follow_their_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = plan(tmp.path());
    experiment::run_sweep(&plan, 1, false).unwrap();
    let check = |path: &Path, header: &str, rows: Option<usize>| {
        let text = fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(header), "{}", path.display());
        let width = header.split(',').count();
        let body: Vec<&str> = lines.collect();
        assert!(body.iter().all(|l| l.split(',').count() == width), "{}", path.display());
        if let Some(n) = rows {
            assert_eq!(body.len(), n, "{}", path.display());
        }
    };
    check(&tmp.path().join("summary.csv"), SUMMARY_HEADER, Some(2));
    // 8 generations per c=0 run, 1 per c=1 run
    check(&tmp.path().join("traces.csv"), TRACE_HEADER, Some(2 * 8 + 2));
    check(&tmp.path().join("runs/c0000_b64_r000.csv"), GENERATION_HEADER, Some(8));
}

#[test]
fn failed_cell_is_recorded_and_the_rest_finish() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = plan(tmp.path());
    // a directory where the run file should go makes that cell's write fail
    fs::create_dir_all(tmp.path().join("runs/c1000_b64_r001.jsonl")).unwrap();
    let report = experiment::run_sweep(&plan, 1, false).unwrap();
    assert_eq!(report.completed.len(), 3);
    assert_eq!(report.failed.len(), 1);
    assert_eq!(report.failed[0].0, "c1000_b64_r001");
    let manifest = read_manifest(&tmp.path().join("manifest.json")).unwrap().unwrap();
    assert!(matches!(manifest.cells["c1000_b64_r001"], CellStatus::Failed { .. }));
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert!(summary.contains("\n1,64,1,"), "{summary}");

    fs::remove_dir(tmp.path().join("runs/c1000_b64_r001.jsonl")).unwrap();
    let retry = experiment::run_sweep(&plan, 1, true).unwrap();
    assert_eq!(retry.completed, vec!["c1000_b64_r001".to_string()]);
    assert_eq!(retry.skipped.len(), 3);
}

#[test]
fn histograms_of_a_real_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut plan = plan(tmp.path());
    plan.complexities = vec![Complexity::new(0.5).unwrap()];
    experiment::run_sweep(&plan, 1, false).unwrap();
    let records: Vec<_> = (0..2)
        .map(|r| experiment::read_record(&tmp.path().join(format!("runs/c0500_b64_r00{r}.jsonl"))).unwrap())
        .collect();
    let table = ParamTable::default();
    let c = Complexity::new(0.5).unwrap();
    let options = HistogramOptions { bucket_size: 16, bins: 10 };
    let rows = experiment::export_param_histograms(&records, &table, c, options).unwrap();
    for bucket in 0..4 {
        for id in ParamId::ALL {
            let total: usize = rows
                .iter()
                .filter(|r| r.bucket == bucket && r.parameter == id)
                .map(|r| r.count)
                .sum();
            assert_eq!(total, 2 * 16);
        }
    }
    assert!(rows.iter().all(|r| r.bounds == effective_bounds(table.spec(r.parameter), c)));
    let mut csv = Vec::new();
    experiment::write_histogram_csv(&rows, 16, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), rows.len() + 1);
}
