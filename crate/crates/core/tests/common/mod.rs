#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gaitbench::dataset::{cohort_label, MedicationState, ParticipantId, UpdrsScore, SCORE_GAIT};
use gaitbench::eval::{
    run_benchmark, wilcoxon_table, Aggregation, BenchmarkConfig, BenchmarkReport, Method, Pipeline, Protocol,
    WalkRecord, WilcoxonMethod, WilcoxonRow,
};
use gaitbench::features::{FeatureRow, GaitFeatureVector};
use gaitbench::models::ForestConfig;
use gaitbench::seeding::rng_for;
use rand::Rng;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Nine participants with two OFF and two ON walks each, scored by one
/// forest on informative features and one on noise.
pub fn fixture_report() -> BenchmarkReport {
    let mut informative = Vec::new();
    let mut noise = Vec::new();
    for p in 0..9usize {
        for w in 0..4usize {
            let medication = if w % 2 == 0 { MedicationState::Off } else { MedicationState::On };
            let label = cohort_label(p, medication);
            let (cadence, length, width) = SCORE_GAIT[label as usize];
            let mut rng = rng_for(11, &["golden".into(), p.into(), w.into()]);
            let mut jitter = |scale: f64| rng.gen_range(-scale..scale);
            let good = [
                cadence + jitter(2.0),
                60.0 / cadence + jitter(0.01),
                0.02 + jitter(0.005),
                length + jitter(0.01),
                0.02 + jitter(0.005),
                width + jitter(0.005),
                0.01 + jitter(0.002),
                cadence / 120.0 * length + jitter(0.02),
                0.05 + jitter(0.01),
                0.01 + jitter(0.002),
                16.0,
            ];
            let mut bad = [0.0; 11];
            for v in bad.iter_mut().take(10) {
                *v = jitter(1.0).abs() + 0.1;
            }
            bad[10] = 16.0;
            let row = |values: [f64; 11]| FeatureRow {
                walk_id: format!("G{p}-{medication}-{w}"),
                participant: ParticipantId::new(format!("G{p}")).unwrap(),
                medication,
                label: UpdrsScore::new(label).unwrap(),
                features: GaitFeatureVector::from_array(values).unwrap(),
            };
            informative.push(row(good));
            noise.push(row(bad));
        }
    }
    let walks = WalkRecord::from_feature_rows(&informative);
    let config = ForestConfig { n_trees: 25, ..ForestConfig::default() };
    let methods = vec![
        Method {
            name: "rf noise".into(),
            pipeline: Pipeline::RandomForest { config, rows: noise },
            excluded: Vec::new(),
        },
        Method {
            name: "rf-gait".into(),
            pipeline: Pipeline::RandomForest { config, rows: informative },
            excluded: Vec::new(),
        },
    ];
    let cfg = BenchmarkConfig { protocol: Protocol::Losocv, seed: 5, aggregation: Aggregation::Mean, parallel: true };
    run_benchmark(&walks, &methods, &cfg, serde_json::json!({"fixture": "golden"})).unwrap()
}

/// Rows covering every significance level and a missing test.
pub fn star_rows() -> Vec<WilcoxonRow> {
    let row = |method: &str, statistic: Option<f64>, p: Option<f64>| WilcoxonRow {
        method: method.into(),
        statistic,
        p_value: p,
        n_effective: if p.is_some() { 12 } else { 0 },
        test: p.map(|_| WilcoxonMethod::Exact),
        note: None,
    };
    vec![
        row("Ground-truth", Some(0.0), Some(0.00048828125)),
        row("significant", Some(13.0), Some(0.0424)),
        row("boundary", Some(14.0), Some(0.05)),
        row("not significant", Some(30.5), Some(0.6221)),
        row("degenerate", None, None),
    ]
}

/// Every rendered artefact of the fixture, as (file name, content).
pub fn rendered_artefacts() -> Vec<(String, String)> {
    let dir = tempfile::tempdir().unwrap();
    gaitbench::cli::write_report_files(dir.path(), &fixture_report()).unwrap();
    let mut files: Vec<(String, String)> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x != "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    files.push(("wilcoxon_stars.md".into(), wilcoxon_table(&star_rows())));
    files.sort();
    files
}

/// Compares against `tests/golden/`; with `UPDATE_GOLDEN` set the files are
/// rewritten instead.
pub fn check_golden(files: &[(String, String)]) -> Result<(), String> {
    let dir = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        for (name, content) in files {
            std::fs::write(dir.join(name), content).map_err(|e| e.to_string())?;
        }
        return Ok(());
    }
    for (name, content) in files {
        let expected = std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if &expected != content {
            let line = expected.lines().zip(content.lines()).position(|(a, b)| a != b).map_or(0, |i| i + 1);
            return Err(format!("{name} differs from the golden copy near line {line}"));
        }
    }
    Ok(())
}
