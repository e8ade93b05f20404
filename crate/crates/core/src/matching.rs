//! Substituted-single-ride baselines and per-pool-trip reductions.
//!
//! For every shared ride, the single rides starting and ending in the same
//! grid cells are its potential substitutes. Their median calibrated distance
//! and median emission are the baselines; a pool trip's savings are the sums
//! of its shared rides' baselines minus its own distance and emission.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GridIndex, GridSpec};
use crate::numfmt::sig9;
use crate::stats::median;
use crate::trips::{PoolTrip, RideTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OdKey {
    pub origin: GridIndex,
    pub destination: GridIndex,
}

impl OdKey {
    /// Grid cells of an order's pickup and dropoff. Fails for points outside
    /// the grid.
    pub fn of(ride: &crate::ingest::RideOrder, spec: &GridSpec) -> Result<Self> {
        Ok(OdKey { origin: spec.assign(ride.pickup)?, destination: spec.assign(ride.dropoff)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// meters
    pub median_td: f64,
    /// grams
    pub median_e: f64,
    pub n_singles: usize,
}

/// One single ride's contribution to the baseline population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstituteSample {
    pub key: OdKey,
    /// calibrated trip distance, meters
    pub td: f64,
    /// grams
    pub e: f64,
}

impl SubstituteSample {
    pub fn from_ride(ride: &RideTrajectory, emission: f64, spec: &GridSpec) -> Result<Self> {
        Ok(SubstituteSample { key: OdKey::of(&ride.order, spec)?, td: ride.trip_distance, e: emission })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineTable {
    entries: BTreeMap<OdKey, Baseline>,
}

impl BaselineTable {
    pub fn get(&self, key: &OdKey) -> Option<&Baseline> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OdKey, &Baseline)> {
        self.entries.iter()
    }

    pub fn insert(&mut self, key: OdKey, baseline: Baseline) {
        self.entries.insert(key, baseline);
    }

    /// Columns `o_col, o_row, d_col, d_row, median_td_m, median_e_g, n`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["o_col", "o_row", "d_col", "d_row", "median_td_m", "median_e_g", "n"])?;
        for (k, b) in &self.entries {
            w.write_record([
                k.origin.col.to_string(),
                k.origin.row.to_string(),
                k.destination.col.to_string(),
                k.destination.row.to_string(),
                sig9(b.median_td),
                sig9(b.median_e),
                b.n_singles.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            o_col: u32,
            o_row: u32,
            d_col: u32,
            d_row: u32,
            median_td_m: f64,
            median_e_g: f64,
            n: usize,
        }
        let mut table = BaselineTable::default();
        for row in csv::Reader::from_reader(source).deserialize() {
            let r: Row = row?;
            if r.n == 0 {
                return Err(Error::InvalidInput("baseline row with zero substitutes".into()));
            }
            table.insert(
                OdKey { origin: GridIndex { col: r.o_col, row: r.o_row }, destination: GridIndex { col: r.d_col, row: r.d_row } },
                Baseline { median_td: r.median_td_m, median_e: r.median_e_g, n_singles: r.n },
            );
        }
        Ok(table)
    }
}

/// Median distance and emission per OD pair. Samples with a non-positive or
/// non-finite distance or emission are not substitutes; pairs with fewer than
/// `min_substitutes` samples get no entry.
pub fn build_baselines(samples: &[SubstituteSample], min_substitutes: usize) -> BaselineTable {
    let mut groups: BTreeMap<OdKey, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in samples {
        if s.td.is_finite() && s.td > 0.0 && s.e.is_finite() && s.e > 0.0 {
            let g = groups.entry(s.key).or_default();
            g.0.push(s.td);
            g.1.push(s.e);
        }
    }
    let entries = groups
        .into_iter()
        .filter(|(_, (td, _))| td.len() >= min_substitutes.max(1))
        .map(|(k, (td, e))| (k, Baseline { median_td: median(&td), median_e: median(&e), n_singles: td.len() }))
        .collect();
    BaselineTable { entries }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub trip_id: String,
    /// SD, meters
    pub saved_distance: f64,
    /// ER, grams
    pub emission_reduction: f64,
    /// ERP as a fraction of the baseline emissions
    pub erp: f64,
    /// ERR, g/km of pool-trip distance
    pub err: f64,
    /// Baselines of the shared rides, in ride order.
    pub baselines: Vec<Baseline>,
}

/// Baselines of every shared ride of `trip`, or the first unmatched ride.
pub fn trip_baselines(trip: &PoolTrip, table: &BaselineTable, spec: &GridSpec) -> Result<Vec<Baseline>> {
    trip.rides
        .iter()
        .map(|r| {
            let unmatched = || Error::Unmatched { trip_id: trip.trip_id.clone(), order_id: r.order.order_id.clone() };
            let key = OdKey::of(&r.order, spec).map_err(|_| unmatched())?;
            table.get(&key).copied().ok_or_else(unmatched)
        })
        .collect()
}

/// Savings from the pool trip's distance `td_s` (m), emission `e_s` (g) and
/// the baselines of its shared rides.
pub fn reduction_from_baselines(trip_id: &str, td_s: f64, e_s: f64, baselines: Vec<Baseline>) -> ReductionRecord {
    let sum_td: f64 = baselines.iter().map(|b| b.median_td).sum();
    let sum_e: f64 = baselines.iter().map(|b| b.median_e).sum();
    let er = sum_e - e_s;
    ReductionRecord {
        trip_id: trip_id.to_owned(),
        saved_distance: sum_td - td_s,
        emission_reduction: er,
        erp: er / sum_e,
        err: er / (td_s / 1000.0),
        baselines,
    }
}

pub fn reduce_trip(trip: &PoolTrip, e_s: f64, table: &BaselineTable, spec: &GridSpec) -> Result<ReductionRecord> {
    let baselines = trip_baselines(trip, table, spec)?;
    Ok(reduction_from_baselines(&trip.trip_id, trip.trip_distance, e_s, baselines))
}

pub fn write_reductions<W: Write>(sink: W, records: &[ReductionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["trip_id", "nsr", "sd_m", "er_g", "erp", "err_g_per_km", "sum_median_td_m", "sum_median_e_g"])?;
    for r in records {
        w.write_record([
            r.trip_id.clone(),
            r.baselines.len().to_string(),
            sig9(r.saved_distance),
            sig9(r.emission_reduction),
            sig9(r.erp),
            sig9(r.err),
            sig9(r.baselines.iter().map(|b| b.median_td).sum()),
            sig9(r.baselines.iter().map(|b| b.median_e).sum()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(o: u32, d: u32) -> OdKey {
        OdKey { origin: GridIndex { col: o, row: 0 }, destination: GridIndex { col: d, row: 0 } }
    }

    fn sample(k: OdKey, td_km: f64) -> SubstituteSample {
        SubstituteSample { key: k, td: td_km * 1000.0, e: td_km * 200.0 }
    }

    #[test]
    fn odd_and_even_medians() {
        let t = build_baselines(&[sample(key(0, 1), 2.0), sample(key(0, 1), 3.0), sample(key(0, 1), 10.0)], 1);
        assert_eq!(t.get(&key(0, 1)).unwrap().median_td, 3000.0);
        let t = build_baselines(&[sample(key(0, 1), 2.0), sample(key(0, 1), 4.0)], 1);
        let b = t.get(&key(0, 1)).unwrap();
        assert_eq!((b.median_td, b.median_e, b.n_singles), (3000.0, 600.0, 2));
    }

    #[test]
    fn pairs_do_not_mix() {
        let t = build_baselines(&[sample(key(0, 1), 2.0), sample(key(1, 0), 7.0), sample(key(0, 1), 4.0)], 1);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get(&key(1, 0)).unwrap().median_td, 7000.0);
        assert_eq!(t.get(&key(0, 1)).unwrap().median_td, 3000.0);
        assert!(t.get(&key(1, 1)).is_none());
    }

    #[test]
    fn minimum_substitute_count() {
        let t = build_baselines(&[sample(key(0, 1), 2.0), sample(key(1, 0), 7.0), sample(key(0, 1), 4.0)], 2);
        assert_eq!(t.len(), 1);
        assert!(build_baselines(&[], 1).is_empty());
    }

    fn base(td_km: f64, e: f64) -> Baseline {
        Baseline { median_td: td_km * 1000.0, median_e: e, n_singles: 1 }
    }

    #[test]
    fn reduction_arithmetic() {
        let r = reduction_from_baselines("s", 7000.0, 600.0, vec![base(5.0, 500.0), base(4.0, 400.0)]);
        assert_eq!(r.emission_reduction, 300.0);
        assert_eq!(r.saved_distance, 2000.0);
        assert_eq!(r.erp, 1.0 / 3.0);
        assert_eq!(r.err, 300.0 / 7.0);
    }

    #[test]
    fn break_even_and_negative() {
        let r = reduction_from_baselines("s", 7000.0, 900.0, vec![base(5.0, 500.0), base(4.0, 400.0)]);
        assert_eq!((r.emission_reduction, r.erp), (0.0, 0.0));
        let r = reduction_from_baselines("s", 9500.0, 1000.0, vec![base(5.0, 500.0), base(4.0, 400.0)]);
        assert_eq!(r.emission_reduction, -100.0);
        assert!(r.erp < 0.0 && r.err < 0.0 && r.saved_distance < 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let t = build_baselines(&[sample(key(0, 1), 2.5), sample(key(3, 2), 7.0)], 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(BaselineTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    proptest! {
        #[test]
        fn median_stays_within_sample_range(mut tds in prop::collection::vec(0.5f64..20.0, 3..30), drop in any::<prop::sample::Index>()) {
            let k = key(0, 1);
            let full = build_baselines(&tds.iter().map(|&t| sample(k, t)).collect::<Vec<_>>(), 1);
            tds.remove(drop.index(tds.len()));
            let reduced = build_baselines(&tds.iter().map(|&t| sample(k, t)).collect::<Vec<_>>(), 1);
            let lo = tds.iter().cloned().fold(f64::INFINITY, f64::min) * 1000.0;
            let hi = tds.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * 1000.0;
            for m in [full.get(&k).unwrap().median_td, reduced.get(&k).unwrap().median_td] {
                prop_assert!(m >= lo.min(m) && m <= hi.max(m));
            }
            let m = reduced.get(&k).unwrap().median_td;
            prop_assert!(lo <= m && m <= hi);
        }

        #[test]
        fn reduction_recomputes_exactly(
            bases in prop::collection::vec((0.5f64..20.0, 50.0f64..3000.0), 2..4),
            td_s in 500.0f64..30000.0,
            e_s in 50.0f64..5000.0,
        ) {
            let bl: Vec<Baseline> = bases.iter().map(|&(td, e)| base(td, e)).collect();
            let r = reduction_from_baselines("s", td_s, e_s, bl.clone());
            let sum_td: f64 = r.baselines.iter().map(|b| b.median_td).sum();
            let sum_e: f64 = r.baselines.iter().map(|b| b.median_e).sum();
            let tol = |x: f64| 1e-12 * x.abs().max(1e-9);
            prop_assert!((r.saved_distance - (sum_td - td_s)).abs() <= tol(r.saved_distance));
            prop_assert!((r.emission_reduction - (sum_e - e_s)).abs() <= tol(r.emission_reduction));
            prop_assert!((r.erp - r.emission_reduction / sum_e).abs() <= tol(r.erp));
            prop_assert!((r.err - r.emission_reduction * 1000.0 / td_s).abs() <= tol(r.err));
        }
    }
}
