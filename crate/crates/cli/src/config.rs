//! Pipeline configuration: one TOML document whose every key has a default.
//! `ridesplit.toml` at the crate root is the annotated template; it parses to
//! `PipelineConfig::default()`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ridesplit_core::emissions::CopertParams;
use ridesplit_core::features::{Column, PeakHours, ValidityRules};
use ridesplit_core::geo::{study_area, GridSpec};
use ridesplit_core::ingest::{OrderLimits, TableFormat};
use ridesplit_core::pipeline::MatchSettings;
use ridesplit_core::synth::ScenarioSpec;
use ridesplit_core::trips::TripSettings;
use ridesplit_model::cv::ParamGrid;
use ridesplit_model::{Growth, Hyperparams};
use serde::{Deserialize, Serialize};

pub const TEMPLATE: &str = include_str!("../ridesplit.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the scenario, the split, the CV folds and the SHAP samples.
    pub seed: u64,
    pub paths: Paths,
    pub format: TableFormat,
    pub grid: GridSpec,
    pub ingest: OrderLimits,
    pub trips: TripSettings,
    pub copert: CopertParams,
    pub matching: MatchSettings,
    pub features: FeatureSettings,
    pub train: TrainSettings,
    pub explain: ExplainSettings,
    /// `seed` and `grid` are taken from the top level.
    pub synth: ScenarioSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw order table; `<out>/synth/orders.csv` when unset.
    pub orders: Option<PathBuf>,
    /// Raw GPS fix table; `<out>/synth/fixes.csv` when unset.
    pub fixes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub peak: PeakHours,
    pub validity: ValidityRules,
    pub iqr_factor: f64,
    pub iqr_columns: Vec<Column>,
    pub correlation_columns: Vec<Column>,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            peak: PeakHours::default(),
            validity: ValidityRules::default(),
            iqr_factor: 1.5,
            iqr_columns: Column::iqr_default(),
            correlation_columns: std::iter::once(Column::Err).chain(Column::REGRESSORS).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub regressors: Vec<Column>,
    pub split_ratio: f64,
    pub folds: usize,
    pub grid: ParamGrid,
    pub n_bins: usize,
    pub min_samples_leaf: usize,
    pub growth: Growth,
    pub max_leaves: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let hp = Hyperparams::default();
        TrainSettings {
            regressors: Column::REGRESSORS.to_vec(),
            split_ratio: 0.8,
            folds: 5,
            grid: ParamGrid::default(),
            n_bins: hp.n_bins,
            min_samples_leaf: hp.min_samples_leaf,
            growth: hp.growth,
            max_leaves: hp.max_leaves,
        }
    }
}

impl TrainSettings {
    /// Hyperparameters the grid does not vary.
    pub fn base(&self) -> Hyperparams {
        Hyperparams {
            n_bins: self.n_bins,
            min_samples_leaf: self.min_samples_leaf,
            growth: self.growth,
            max_leaves: self.max_leaves,
            ..Hyperparams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    /// Background rows drawn from the training set.
    pub background_size: usize,
    /// Explained rows drawn from the test set.
    pub sample_size: usize,
    pub pdp_grid_points: usize,
    pub pdp_features: Vec<Column>,
    pub pdp_pairs: Vec<[Column; 2]>,
    /// (feature, interaction feature) pairs.
    pub dependence: Vec<[Column; 2]>,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        let others = || Column::REGRESSORS.into_iter().filter(|&c| c != Column::OverlapRate);
        ExplainSettings {
            background_size: 256,
            sample_size: 200,
            pdp_grid_points: 20,
            pdp_features: Column::REGRESSORS.to_vec(),
            pdp_pairs: others().map(|c| [Column::OverlapRate, c]).collect(),
            dependence: Column::REGRESSORS.into_iter().filter(|&c| c != Column::Nsr).map(|c| [c, Column::Nsr]).collect(),
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let grid = study_area();
        PipelineConfig {
            seed: 42,
            paths: Paths::default(),
            format: TableFormat::default(),
            grid,
            ingest: OrderLimits::default(),
            trips: TripSettings::default(),
            copert: CopertParams::default(),
            matching: MatchSettings::default(),
            features: FeatureSettings::default(),
            train: TrainSettings::default(),
            explain: ExplainSettings::default(),
            synth: ScenarioSpec { seed: 42, grid, ..ScenarioSpec::default() },
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync();
        self
    }

    fn sync(&mut self) {
        self.synth.seed = self.seed;
        self.synth.grid = self.grid;
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.grid.validate()?;
        self.copert.validate()?;
        if self.ingest.min_trip_time_s > self.ingest.max_trip_time_s {
            bail!("ingest: min_trip_time_s exceeds max_trip_time_s");
        }
        if !(self.features.iqr_factor >= 0.0) {
            bail!("features: iqr_factor must be non-negative");
        }
        if self.train.regressors.is_empty() {
            bail!("train: no regressors");
        }
        if self.train.grid.is_empty() {
            bail!("train: empty hyperparameter grid");
        }
        if self.train.folds < 2 {
            bail!("train: at least two folds are needed");
        }
        for c in
            self.explain.pdp_features.iter().chain(self.explain.pdp_pairs.iter().flatten()).chain(self.explain.dependence.iter().flatten())
        {
            if !self.train.regressors.contains(c) {
                bail!("explain: {} is not a regressor", c.name());
            }
        }
        Ok(())
    }

    pub fn orders_path(&self, out: &Path) -> PathBuf {
        self.paths.orders.clone().unwrap_or_else(|| out.join("synth").join("orders.csv"))
    }

    pub fn fixes_path(&self, out: &Path) -> PathBuf {
        self.paths.fixes.clone().unwrap_or_else(|| out.join("synth").join("fixes.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_is_the_default() {
        assert_eq!(PipelineConfig::parse(TEMPLATE).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = PipelineConfig::default().with_seed(7);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(PipelineConfig::parse("sed = 1").is_err());
        assert!(PipelineConfig::parse("[train]\nfolds = 1").is_err());
        assert!(PipelineConfig::parse("[explain]\npdp_features = [\"erp_pct\"]").is_err());
        let cfg = PipelineConfig::parse("seed = 9\n[train]\nsplit_ratio = 0.7").unwrap();
        assert_eq!((cfg.synth.seed, cfg.train.split_ratio), (9, 0.7));
    }
}
