//! Emissions, baselines, savings and features for a reconstructed set of trips.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emissions::{pool_emission, ride_emission, CopertParams};
use crate::error::{Error, Result};
use crate::features::{build_record, FeatureRow, PeakHours};
use crate::geo::GridSpec;
use crate::matching::{build_baselines, reduce_trip, BaselineTable, ReductionRecord, SubstituteSample};
use crate::trips::Reconstruction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchSettings {
    /// Minimum single rides per OD pair for a baseline.
    pub min_substitutes: usize,
}

impl Default for MatchSettings {
    fn default() -> Self {
        MatchSettings { min_substitutes: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pool_trips: usize,
    pub matched: usize,
    pub unmatched: usize,
    pub od_pairs: usize,
    pub substitutes: usize,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    /// Aligned with `Reconstruction::singles`.
    pub single_emissions: Vec<f64>,
    /// Aligned with `Reconstruction::pools`.
    pub pool_emissions: Vec<f64>,
    pub baselines: BaselineTable,
    /// Matched pool trips only, in pool order.
    pub reductions: Vec<ReductionRecord>,
    /// One row per entry of `reductions`.
    pub rows: Vec<FeatureRow>,
    pub report: MatchReport,
}

pub fn analyze(
    recon: &Reconstruction,
    params: &CopertParams,
    spec: &GridSpec,
    matching: &MatchSettings,
    peak: &PeakHours,
) -> Result<Analysis> {
    params.validate()?;
    let single_emissions: Vec<f64> = recon.singles.par_iter().map(|r| ride_emission(r, params)).collect();
    let pool_emissions: Vec<f64> = recon.pools.par_iter().map(|p| pool_emission(p, params)).collect();

    let samples: Vec<SubstituteSample> =
        recon.singles.iter().zip(&single_emissions).map(|(r, &e)| SubstituteSample::from_ride(r, e, spec)).collect::<Result<_>>()?;
    let baselines = build_baselines(&samples, matching.min_substitutes);

    let mut reductions = Vec::new();
    let mut unmatched = 0;
    for (trip, &e_s) in recon.pools.iter().zip(&pool_emissions) {
        match reduce_trip(trip, e_s, &baselines, spec) {
            Ok(r) => reductions.push(r),
            Err(Error::Unmatched { trip_id, order_id }) => {
                tracing::debug!(%trip_id, %order_id, "shared ride without substitutes");
                unmatched += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let by_id: std::collections::HashMap<&str, usize> = recon.pools.iter().enumerate().map(|(i, p)| (p.trip_id.as_str(), i)).collect();
    let rows: Vec<FeatureRow> =
        reductions.par_iter().map(|r| build_record(&recon.pools[by_id[r.trip_id.as_str()]], r, peak)).collect::<Result<_>>()?;

    let report = MatchReport {
        pool_trips: recon.pools.len(),
        matched: reductions.len(),
        unmatched,
        od_pairs: baselines.len(),
        substitutes: samples.len(),
    };
    Ok(Analysis { single_emissions, pool_emissions, baselines, reductions, rows, report })
}
