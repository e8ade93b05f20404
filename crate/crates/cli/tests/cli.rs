use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ridesplit_cli::{run_stages, Manifest, PipelineConfig, Stage};
use ridesplit_core::synth::{Anomalies, OdCluster, PoolCounts, DEFAULT_WINDOW_START};
use ridesplit_model::cv::ParamGrid;

/// A scenario and model grid small enough for a full run in a few seconds.
fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.synth.single_rides = 150;
    cfg.synth.pool_trips = PoolCounts { nsr2: 80, nsr3: 25, nsr4: 5 };
    cfg.synth.od_cluster = Some(OdCluster { rides: 20, center_m: 2000.0, spread_m: 500.0 });
    cfg.synth.anomalies = Anomalies { too_short: 2, too_long: 2, out_of_region: 2, drift: 2, gaps: 2 };
    cfg.train.grid = ParamGrid { iterations: vec![20, 40], learning_rates: vec![0.1], depths: vec![2, 3] };
    cfg.train.folds = 3;
    cfg.train.min_samples_leaf = 5;
    cfg.explain.background_size = 16;
    cfg.explain.sample_size = 8;
    cfg.explain.pdp_grid_points = 5;
    cfg
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> PathBuf {
    let path = dir.join("ridesplit.toml");
    fs::write(&path, toml::to_string(cfg).unwrap()).unwrap();
    path
}

fn ridesplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridesplit")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn binary_runs_synth_then_all() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let (cfg, out) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    for cmd in ["synth", "all"] {
        let o = ridesplit(&["--config", cfg, "--out", out, "--workers", "1", cmd]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let m: Manifest = serde_json::from_slice(&fs::read(Path::new(out).join("manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = m.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, Stage::PIPELINE.iter().map(|s| s.name()).collect::<Vec<_>>());
    for s in Stage::PIPELINE {
        assert!(Path::new(out).join(s.name()).join("manifest.json").is_file(), "{} manifest", s.name());
    }
    for f in ["train/metrics.csv", "explain/shap_importance.csv", "explain/pdp_2d.csv", "report/od_counts.csv"] {
        assert!(Path::new(out).join(f).is_file(), "{f}");
    }
}

#[test]
fn show_config_prints_the_effective_configuration() {
    let o = ridesplit(&["--seed", "7", "show-config"]);
    assert!(o.status.success());
    let shown = PipelineConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(shown, PipelineConfig::default().with_seed(7));
    assert_eq!(shown.synth.seed, 7);
}

#[test]
fn missing_inputs_name_the_stage_to_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ridesplit(&["--out", tmp.path().to_str().unwrap(), "trips"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("trips stage failed") && err.contains("run the ingest stage first"), "{err}");
}

#[test]
fn existing_outputs_need_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config();
    run_stages(&cfg, tmp.path(), &[Stage::Synth], false).unwrap();
    let before = files_under(tmp.path());
    let err = run_stages(&cfg, tmp.path(), &[Stage::Synth], false).unwrap_err();
    assert!(format!("{err:#}").contains("--overwrite"), "{err:#}");
    assert_eq!(files_under(tmp.path()), before);
    run_stages(&cfg, tmp.path(), &[Stage::Synth], true).unwrap();
    assert_eq!(files_under(tmp.path()), before);

    // one occupied stage directory blocks the whole run before anything is written
    fs::create_dir_all(tmp.path().join("explain")).unwrap();
    fs::write(tmp.path().join("explain").join("keep.txt"), "x").unwrap();
    assert!(run_stages(&cfg, tmp.path(), &Stage::PIPELINE, false).is_err());
    assert!(!tmp.path().join("ingest").exists());
    assert!(tmp.path().join("explain").join("keep.txt").exists());
}

#[test]
fn all_matches_the_stages_run_one_by_one() {
    let cfg = small_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_stages(&cfg, a.path(), &[Stage::Synth], false).unwrap();
    run_stages(&cfg, a.path(), &Stage::PIPELINE, false).unwrap();
    run_stages(&cfg, b.path(), &[Stage::Synth], false).unwrap();
    for s in Stage::PIPELINE {
        run_stages(&cfg, b.path(), &[s], false).unwrap();
    }
    let mut all = files_under(a.path());
    all.remove(Path::new("manifest.json"));
    let one_by_one = files_under(b.path());
    assert_eq!(all.keys().collect::<Vec<_>>(), one_by_one.keys().collect::<Vec<_>>());
    for (path, bytes) in &all {
        assert!(one_by_one[path] == *bytes, "{} differs", path.display());
    }
}

#[test]
fn report_counts_trips_in_their_local_hour() {
    let mut cfg = small_config();
    // Tuesday 14:00 local for every trip
    let t = DEFAULT_WINDOW_START + 14 * 3600;
    cfg.synth.start_window = [t, t];
    cfg.synth.anomalies = Anomalies::default();
    let tmp = tempfile::tempdir().unwrap();
    run_stages(&cfg, tmp.path(), &[Stage::Synth, Stage::Ingest, Stage::Trips, Stage::Features, Stage::Report], false).unwrap();
    let mut r = csv::Reader::from_path(tmp.path().join("report").join("hourly_counts.csv")).unwrap();
    let rows: Vec<Vec<usize>> = r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 24);
    let busy: Vec<&Vec<usize>> = rows.iter().filter(|r| r[1..].iter().any(|&c| c > 0)).collect();
    assert_eq!(busy.len(), 1);
    let row = busy[0];
    assert_eq!(row[0], 14);
    assert!(row[1] > 0 && row[2] > 0, "single and shared weekday rides: {row:?}");
    assert_eq!(row[3..], [0, 0]);
}
