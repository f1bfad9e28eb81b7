mod common;

#[test]
fn rendered_tables_and_figures_match_golden_files() {
    let files = common::rendered_artefacts();
    assert_eq!(files.iter().filter(|(n, _)| n.ends_with(".svg")).count(), 6);
    common::check_golden(&files).unwrap();
}

#[test]
fn leaderboard_is_sorted_by_ascending_f1() {
    let report = common::fixture_report();
    let names: Vec<&str> = report.leaderboard.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(names, ["rf noise", "rf-gait"]);
    assert_eq!(report.wilcoxon[0].method, "Ground-truth");
    assert_eq!(report.wilcoxon.len(), 3);
}
