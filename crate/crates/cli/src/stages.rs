//! Pipeline stages. Each reads the contract files of earlier stages, writes
//! its own directory and returns its manifest record. Intermediate tables
//! keep full precision so that a stage run alone equals the same stage run
//! inside `all`; final tables use nine significant digits.

use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use ridesplit_core::emissions::{pool_emission, ride_emission};
use ridesplit_core::features::{correlation_matrix, iqr_filter, read_dataset, validity_filter, write_dataset, TripRecord};
use ridesplit_core::ingest::{self, filter_orders, retain_fixes, RideOrder, TableFormat};
use ridesplit_core::matching::write_reductions;
use ridesplit_core::numfmt::{opt_sig9, sig9};
use ridesplit_core::pipeline::{analyze, Analysis};
use ridesplit_core::synth;
use ridesplit_core::trips::{self, Reconstruction, TripReport};
use ridesplit_model::cv::grid_search_cv;
use ridesplit_model::dataset::train_test_split;
use ridesplit_model::explain::{self, PdpGrid};
use ridesplit_model::metrics::evaluate;
use ridesplit_model::ols::ols_fit;
use ridesplit_model::{gbm, BoostedModel, Dataset};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::manifest::{StageDir, StageRecord};
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Trips,
    Emissions,
    Match,
    Features,
    Report,
    Train,
    Explain,
}

impl Stage {
    /// The stages `all` runs, in order.
    pub const PIPELINE: [Stage; 8] =
        [Stage::Ingest, Stage::Trips, Stage::Emissions, Stage::Match, Stage::Features, Stage::Report, Stage::Train, Stage::Explain];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Trips => "trips",
            Stage::Emissions => "emissions",
            Stage::Match => "match",
            Stage::Features => "features",
            Stage::Report => "report",
            Stage::Train => "train",
            Stage::Explain => "explain",
        }
    }

    pub fn run(self, cfg: &PipelineConfig, out: &Path) -> anyhow::Result<StageRecord> {
        let _span = tracing::info_span!("stage", name = self.name()).entered();
        let started = std::time::Instant::now();
        let mut st = StageDir::create(out, self.name())?;
        match self {
            Stage::Synth => run_synth(cfg, &mut st),
            Stage::Ingest => run_ingest(cfg, out, &mut st),
            Stage::Trips => run_trips(cfg, &mut st),
            Stage::Emissions => run_emissions(cfg, &mut st),
            Stage::Match => run_match(cfg, &mut st),
            Stage::Features => run_features(cfg, &mut st),
            Stage::Report => report::run(cfg, &mut st),
            Stage::Train => run_train(cfg, &mut st),
            Stage::Explain => run_explain(cfg, &mut st),
        }
        .with_context(|| format!("{} stage failed", self.name()))?;
        let record = st.finish(cfg)?;
        tracing::info!(elapsed_ms = started.elapsed().as_millis() as u64, counts = ?record.counts, "stage done");
        Ok(record)
    }
}

pub(crate) fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub(crate) fn load_orders(st: &mut StageDir) -> anyhow::Result<Vec<RideOrder>> {
    let bytes = st.read_stage("ingest", "orders.csv")?;
    let parsed = ingest::parse_orders(bytes.as_slice(), &TableFormat::default())?;
    if parsed.malformed > 0 {
        bail!("ingest/orders.csv has {} malformed rows of {}", parsed.malformed, parsed.total_rows);
    }
    Ok(parsed.records)
}

fn load_reconstruction(st: &mut StageDir) -> anyhow::Result<Reconstruction> {
    let orders = load_orders(st)?;
    let report: TripReport = serde_json::from_slice(&st.read_stage("trips", "report.json")?)?;
    let segments = st.read_stage("trips", "segments.csv")?;
    trips::rebuild(&orders, segments.as_slice(), report).with_context(|| format!("rebuilding trips from {} orders", orders.len()))
}

fn load_analysis(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<Analysis> {
    let recon = load_reconstruction(st)?;
    analyze(&recon, &cfg.copert, &cfg.grid, &cfg.matching, &cfg.features.peak)
        .with_context(|| format!("analysing {} single rides and {} pool trips", recon.singles.len(), recon.pools.len()))
}

pub(crate) fn load_dataset(st: &mut StageDir) -> anyhow::Result<Vec<TripRecord>> {
    Ok(read_dataset(st.read_stage("features", "dataset.csv")?.as_slice())?)
}

fn run_synth(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<()> {
    let sc = synth::generate(&cfg.synth, &cfg.copert)?;
    st.write_with("orders.csv", |b| ingest::write_orders(b, &sc.orders, &cfg.format))?;
    st.write_with("fixes.csv", |b| ingest::write_fixes(b, &sc.fixes, &cfg.format))?;
    st.json("ground_truth.json", &sc.truth)?;
    st.count("orders", sc.orders.len());
    st.count("fixes", sc.fixes.len());
    st.count("pool_trips", sc.truth.pools.len());
    Ok(())
}

#[derive(Serialize)]
struct TableDrops {
    total_rows: usize,
    malformed: usize,
}

#[derive(Serialize)]
struct IngestReport {
    orders: TableDrops,
    order_filter: ingest::OrderDropReport,
    fixes: TableDrops,
    /// Well-formed fixes whose order did not survive the order filter.
    fixes_without_order: usize,
    fixes_kept: usize,
}

fn run_ingest(cfg: &PipelineConfig, out: &Path, st: &mut StageDir) -> anyhow::Result<()> {
    let orders_raw = st.read(&cfg.orders_path(out))?;
    let orders = ingest::parse_orders(orders_raw.as_slice(), &cfg.format)?;
    drop(orders_raw);
    let fixes_raw = st.read(&cfg.fixes_path(out))?;
    let fixes = ingest::parse_fixes(fixes_raw.as_slice(), &cfg.format)?;
    drop(fixes_raw);

    let (kept, order_filter) = filter_orders(orders.records, &cfg.grid, &cfg.ingest);
    let n_fixes = fixes.records.len();
    let kept_fixes = retain_fixes(fixes.records, &kept);
    let report = IngestReport {
        orders: TableDrops { total_rows: orders.total_rows, malformed: orders.malformed },
        order_filter,
        fixes: TableDrops { total_rows: fixes.total_rows, malformed: fixes.malformed },
        fixes_without_order: n_fixes - kept_fixes.len(),
        fixes_kept: kept_fixes.len(),
    };
    tracing::info!(orders = orders.total_rows, kept = kept.len(), fixes = fixes.total_rows, "parsed");

    let canonical = TableFormat::default();
    st.write_with("orders.csv", |b| ingest::write_orders(b, &kept, &canonical))?;
    st.write_with("fixes.csv", |b| ingest::write_fixes(b, &kept_fixes, &canonical))?;
    st.json("drop_report.json", &report)?;
    st.count("orders_input", orders.total_rows);
    st.count("orders_kept", kept.len());
    st.count("fixes_input", fixes.total_rows);
    st.count("fixes_kept", kept_fixes.len());
    Ok(())
}

fn run_trips(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<()> {
    let orders = load_orders(st)?;
    let fixes_raw = st.read_stage("ingest", "fixes.csv")?;
    let fixes = ingest::parse_fixes(fixes_raw.as_slice(), &TableFormat::default())?;
    drop(fixes_raw);
    if fixes.malformed > 0 {
        bail!("ingest/fixes.csv has {} malformed rows of {}", fixes.malformed, fixes.total_rows);
    }
    let recon = trips::reconstruct(&orders, &fixes.records, &cfg.trips);
    st.write_with("segments.csv", |b| trips::write_segments(b, &recon))?;
    st.write_with("rides.csv", |b| trips::write_ride_summary(b, &recon))?;
    st.json("report.json", &recon.report)?;
    st.count("single_rides", recon.singles.len());
    st.count("pool_trips", recon.pools.len());
    st.count("shared_rides", recon.report.shared_rides);
    Ok(())
}

fn run_emissions(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<()> {
    cfg.copert.validate()?;
    let recon = load_reconstruction(st)?;
    let singles: Vec<f64> = recon.singles.par_iter().map(|r| ride_emission(r, &cfg.copert)).collect();
    let pools: Vec<f64> = recon.pools.par_iter().map(|p| pool_emission(p, &cfg.copert)).collect();
    let rides = csv_table(
        &["order_id", "driver_id", "td_m", "emission_g"],
        recon
            .singles
            .iter()
            .zip(&singles)
            .map(|(r, &e)| vec![r.order.order_id.clone(), r.driver_id.clone(), sig9(r.trip_distance), sig9(e)]),
    )?;
    let pool_rows = csv_table(
        &["trip_id", "driver_id", "nsr", "td_m", "emission_g"],
        recon
            .pools
            .iter()
            .zip(&pools)
            .map(|(p, &e)| vec![p.trip_id.clone(), p.driver_id.clone(), p.nsr().to_string(), sig9(p.trip_distance), sig9(e)]),
    )?;
    st.write("rides.csv", &rides)?;
    st.write("pools.csv", &pool_rows)?;
    st.count("single_rides", singles.len());
    st.count("pool_trips", pools.len());
    Ok(())
}

fn run_match(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<()> {
    let a = load_analysis(cfg, st)?;
    st.write_with("baselines.csv", |b| a.baselines.write_csv(b))?;
    st.write_with("reductions.csv", |b| write_reductions(b, &a.reductions))?;
    st.json("report.json", &a.report)?;
    st.count("od_pairs", a.report.od_pairs);
    st.count("matched", a.report.matched);
    st.count("unmatched", a.report.unmatched);
    Ok(())
}

#[derive(Serialize)]
struct FilterReport {
    input: usize,
    validity: ridesplit_core::features::ValidityDrops,
    after_validity: usize,
    iqr: ridesplit_core::features::IqrReport,
    kept: usize,
}

fn run_features(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<()> {
    let a = load_analysis(cfg, st)?;
    let input = a.rows.len();
    let all: Vec<TripRecord> = a.rows.iter().map(|r| r.record.clone()).collect();
    let (valid, validity) = validity_filter(a.rows, &cfg.features.validity);
    let after_validity = valid.len();
    let (kept, iqr) = iqr_filter(valid, cfg.features.iqr_factor, &cfg.features.iqr_columns);
    let records: Vec<TripRecord> = kept.into_iter().map(|r| r.record).collect();
    let corr = correlation_matrix(&records, &cfg.features.correlation_columns);

    st.write_with("records.csv", |b| write_dataset(b, &all))?;
    st.write_with("dataset.csv", |b| write_dataset(b, &records))?;
    st.write_with("correlation.csv", |b| corr.write_csv(b))?;
    st.json("filter_report.json", &FilterReport { input, validity, after_validity, iqr, kept: records.len() })?;
    st.count("records", input);
    st.count("after_validity", after_validity);
    st.count("dataset", records.len());
    Ok(())
}

/// The split every modelling stage agrees on.
fn split(cfg: &PipelineConfig, records: &[TripRecord]) -> anyhow::Result<(Dataset, Dataset)> {
    let data = Dataset::from_records(records, &cfg.train.regressors)?;
    train_test_split(&data, cfg.train.split_ratio, cfg.seed).with_context(|| format!("splitting {} dataset rows", records.len()))
}

fn run_train(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<()> {
    let records = load_dataset(st)?;
    let (train, test) = split(cfg, &records)?;
    let t = &cfg.train;
    tracing::info!(train = train.n_rows(), test = test.n_rows(), combinations = t.grid.len(), "grid search");
    let cv = grid_search_cv(&train, &t.grid, &t.base(), t.folds, cfg.seed.wrapping_add(1))
        .with_context(|| format!("cross-validating on {} rows", train.n_rows()))?;
    let model = gbm::train(&train, &cv.best)?;
    let ols = ols_fit(&train).with_context(|| format!("OLS on {} rows", train.n_rows()))?;
    let gbm_pred = model.predict(&test)?;
    let ols_pred = ols.predict(&test)?;
    let gbm_m = evaluate(&gbm_pred, test.target())?;
    let ols_m = evaluate(&ols_pred, test.target())?;

    let mut header = vec!["iterations".to_string(), "learning_rate".into(), "depth".into()];
    header.extend((1..=t.folds).map(|f| format!("fold{f}_rmse")));
    header.extend(["mean_rmse".into(), "best".into()]);
    let cv_rows = cv.rows.iter().enumerate().map(|(i, r)| {
        let mut row = vec![r.iterations.to_string(), sig9(r.learning_rate), r.depth.to_string()];
        row.extend(r.fold_rmse.iter().map(|&x| sig9(x)));
        row.extend([sig9(r.mean_rmse), u8::from(i == cv.best_index).to_string()]);
        row
    });
    st.write("cv_results.csv", &csv_table(&header.iter().map(String::as_str).collect::<Vec<_>>(), cv_rows)?)?;

    let hp_cells = |it: usize, lr: f64, d: usize| vec![it.to_string(), sig9(lr), d.to_string()];
    let mut metrics: Vec<Vec<String>> = cv
        .rows
        .iter()
        .map(|r| {
            let mut row = vec!["gbm".to_string(), "cv".into()];
            row.extend(hp_cells(r.iterations, r.learning_rate, r.depth));
            row.extend([sig9(r.mean_rmse), String::new(), String::new()]);
            row
        })
        .collect();
    let b = &cv.best;
    for (name, hp, m) in [("gbm", hp_cells(b.iterations, b.learning_rate, b.depth), gbm_m), ("ols", vec![String::new(); 3], ols_m)] {
        let mut row = vec![name.to_string(), "test".into()];
        row.extend(hp);
        row.extend([sig9(m.rmse), sig9(m.mae), opt_sig9(m.r2)]);
        metrics.push(row);
    }
    st.write("metrics.csv", &csv_table(&["model", "split", "iterations", "learning_rate", "depth", "rmse", "mae", "r2"], metrics)?)?;
    st.write("model.json", model.to_json()?.as_bytes())?;
    st.json("ols.json", &ols)?;
    let preds = test.target().iter().zip(gbm_pred.iter().zip(&ols_pred)).map(|(&y, (&g, &o))| vec![sig9(y), sig9(g), sig9(o)]);
    st.write("test_predictions.csv", &csv_table(&["err_g_per_km", "gbm", "ols"], preds)?)?;

    st.count("train_rows", train.n_rows());
    st.count("test_rows", test.n_rows());
    st.count("cv_combinations", cv.rows.len());
    st.count("trees", model.trees.len());
    Ok(())
}

fn run_explain(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<()> {
    let records = load_dataset(st)?;
    let model = BoostedModel::from_json(std::str::from_utf8(&st.read_stage("train", "model.json")?)?)?;
    if model.feature_names != cfg.train.regressors.iter().map(|c| c.name()).collect::<Vec<_>>() {
        bail!("train/model.json was fitted on {:?}, not the configured regressors", model.feature_names);
    }
    let (train, test) = split(cfg, &records)?;
    let e = &cfg.explain;
    let background = explain::sample_rows(&train, e.background_size, cfg.seed.wrapping_add(2));
    let sample = explain::sample_rows(&test, e.sample_size, cfg.seed.wrapping_add(3));
    tracing::info!(rows = sample.n_rows(), background = background.n_rows(), "shapley values");
    let expls = explain::explain_rows(&model, &sample, &background)
        .with_context(|| format!("explaining {} rows against {} background rows", sample.n_rows(), background.n_rows()))?;
    let names = train.names().to_vec();
    let idx = |c: ridesplit_core::features::Column| train.feature_index(c.name()).expect("validated regressor");

    let mut header = vec!["row".to_string(), "prediction".into(), "phi0".into()];
    header.extend(names.iter().map(|n| format!("x_{n}")));
    header.extend(names.iter().map(|n| format!("phi_{n}")));
    let rows = expls.iter().enumerate().map(|(i, x)| {
        let mut r = vec![i.to_string(), sig9(x.prediction), sig9(x.phi0)];
        r.extend(x.row.iter().chain(&x.phi).map(|&v| sig9(v)));
        r
    });
    st.write("shap_values.csv", &csv_table(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows)?)?;

    let imp = explain::shap_importance(&expls, &names)?;
    let rows = imp.iter().enumerate().map(|(rank, m)| vec![(rank + 1).to_string(), m.name.clone(), sig9(m.value)]);
    st.write("shap_importance.csv", &csv_table(&["rank", "feature", "mean_abs_phi"], rows)?)?;

    let mut rows = Vec::new();
    for &[f, h] in &e.dependence {
        for d in explain::shap_dependence(&expls, idx(f), idx(h)) {
            rows.push(vec![f.name().into(), h.name().into(), sig9(d.x), sig9(d.phi), sig9(d.interaction)]);
        }
    }
    st.write("shap_dependence.csv", &csv_table(&["feature", "interaction", "x", "phi", "interaction_value"], rows)?)?;

    let grid = PdpGrid::Quantiles(e.pdp_grid_points);
    let mut rows = Vec::new();
    for &f in &e.pdp_features {
        let r = explain::pdp_trees(&model, &train, &[idx(f)], std::slice::from_ref(&grid))?;
        for ((x, v), n) in r.grids[0].iter().zip(&r.values).zip(&r.counts) {
            rows.push(vec![f.name().into(), sig9(*x), sig9(*v), n.to_string()]);
        }
    }
    st.write("pdp_1d.csv", &csv_table(&["feature", "x", "pd", "count"], rows)?)?;

    let mut rows = Vec::new();
    for &[a, b] in &e.pdp_pairs {
        let r = explain::pdp_trees(&model, &train, &[idx(a), idx(b)], &[grid.clone(), grid.clone()])?;
        let (ga, gb) = (&r.grids[0], &r.grids[1]);
        for (i, xa) in ga.iter().enumerate() {
            for (j, xb) in gb.iter().enumerate() {
                let k = i * gb.len() + j;
                rows.push(vec![a.name().into(), b.name().into(), sig9(*xa), sig9(*xb), sig9(r.values[k]), r.counts[k].to_string()]);
            }
        }
    }
    st.write("pdp_2d.csv", &csv_table(&["feature_a", "feature_b", "x_a", "x_b", "pd", "count"], rows)?)?;

    st.count("explained_rows", expls.len());
    st.count("background_rows", background.n_rows());
    st.count("pdp_reference_rows", train.n_rows());
    Ok(())
}
