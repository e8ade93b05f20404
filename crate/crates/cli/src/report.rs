//! Plot-ready aggregates: hourly single/shared ride counts, origin and
//! destination counts per grid cell, and the ERR distribution by NSR and
//! peak flag.

use std::collections::{BTreeMap, HashMap};

use anyhow::Context;
use ridesplit_core::features::{PeakHours, TripRecord};
use ridesplit_core::geo::{GridIndex, GridSpec};
use ridesplit_core::ingest::RideOrder;
use ridesplit_core::numfmt::sig9;
use ridesplit_core::stats::quantile_sorted;
use serde::Deserialize;

use crate::config::PipelineConfig;
use crate::manifest::StageDir;
use crate::stages::{csv_table, load_dataset, load_orders};

/// A reconstructed ride and whether it was shared.
#[derive(Debug, Clone, Copy)]
pub struct RideRef<'a> {
    pub order: &'a RideOrder,
    pub shared: bool,
}

/// Counts indexed `[hour][weekday, weekend][single, shared]`.
pub fn hourly_counts(rides: &[RideRef], peak: &PeakHours) -> [[[usize; 2]; 2]; 24] {
    let mut c = [[[0; 2]; 2]; 24];
    for r in rides {
        let ts = r.order.start_ts;
        let day = usize::from(!peak.is_weekday(ts));
        c[peak.local_hour(ts) as usize][day][usize::from(r.shared)] += 1;
    }
    c
}

/// Per cell: `[single origins, single destinations, shared origins, shared
/// destinations]`. Rides with an endpoint outside the grid are skipped.
pub fn od_counts(rides: &[RideRef], grid: &GridSpec) -> BTreeMap<GridIndex, [usize; 4]> {
    let mut c = BTreeMap::new();
    for r in rides {
        let k = 2 * usize::from(r.shared);
        for (end, p) in [(0, r.order.pickup), (1, r.order.dropoff)] {
            if let Ok(cell) = grid.assign(p) {
                c.entry(cell).or_insert([0; 4])[k + end] += 1;
            }
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub nsr: u32,
    pub peak_hours: u8,
    pub count: usize,
    pub mean: f64,
    /// min, q1, median, q3, max
    pub quantiles: [f64; 5],
}

/// ERR summary for each (NSR, peak flag) group present, in key order.
pub fn err_by_group(records: &[TripRecord]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(u32, u8), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry((r.nsr, r.peak_hours)).or_default().push(r.err_g_per_km);
    }
    groups
        .into_iter()
        .map(|((nsr, peak_hours), mut v)| {
            v.sort_by(f64::total_cmp);
            GroupSummary {
                nsr,
                peak_hours,
                count: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                quantiles: [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile_sorted(&v, p)),
            }
        })
        .collect()
}

#[derive(Deserialize)]
struct RideRow {
    order_id: String,
    pool_trip_id: String,
}

pub fn run(cfg: &PipelineConfig, st: &mut StageDir) -> anyhow::Result<()> {
    let orders = load_orders(st)?;
    let by_id: HashMap<&str, &RideOrder> = orders.iter().map(|o| (o.order_id.as_str(), o)).collect();
    let rides_csv = st.read_stage("trips", "rides.csv")?;
    let mut rides = Vec::new();
    for row in csv::Reader::from_reader(rides_csv.as_slice()).into_deserialize::<RideRow>() {
        let row = row.context("reading trips/rides.csv")?;
        let order = by_id
            .get(row.order_id.as_str())
            .with_context(|| format!("trips/rides.csv lists order {} missing from ingest/orders.csv", row.order_id))?;
        rides.push(RideRef { order, shared: !row.pool_trip_id.is_empty() });
    }
    let records = load_dataset(st)?;

    let hourly = hourly_counts(&rides, &cfg.features.peak);
    let rows = hourly.iter().enumerate().map(|(h, c)| {
        let mut r = vec![h.to_string()];
        r.extend(c.iter().flatten().map(usize::to_string));
        r
    });
    st.write("hourly_counts.csv", &csv_table(&["hour", "weekday_single", "weekday_shared", "weekend_single", "weekend_shared"], rows)?)?;

    let od = od_counts(&rides, &cfg.grid);
    let rows = (0..cfg.grid.n_rows).flat_map(|row| (0..cfg.grid.n_cols).map(move |col| GridIndex { col, row })).map(|cell| {
        let c = od.get(&cell).copied().unwrap_or_default();
        let center = cfg.grid.cell_center(cell);
        let mut r = vec![cell.col.to_string(), cell.row.to_string(), sig9(center.lon), sig9(center.lat)];
        r.extend(c.iter().map(usize::to_string));
        r
    });
    st.write(
        "od_counts.csv",
        &csv_table(
            &["col", "row", "center_lon", "center_lat", "single_origins", "single_destinations", "shared_origins", "shared_destinations"],
            rows,
        )?,
    )?;

    let groups = err_by_group(&records);
    let rows = groups.iter().map(|g| {
        let mut r = vec![g.nsr.to_string(), g.peak_hours.to_string(), g.count.to_string(), sig9(g.mean)];
        r.extend(g.quantiles.iter().map(|&q| sig9(q)));
        r
    });
    st.write("err_by_nsr_peak.csv", &csv_table(&["nsr", "peak_hours", "count", "mean", "min", "q1", "median", "q3", "max"], rows)?)?;

    st.count("rides", rides.len());
    st.count("shared_rides", rides.iter().filter(|r| r.shared).count());
    st.count("dataset", records.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ridesplit_core::geo::{study_area, GeoPoint};

    fn order(id: &str, ts: i64, from: GeoPoint, to: GeoPoint) -> RideOrder {
        RideOrder { order_id: id.into(), start_ts: ts, end_ts: ts + 600, pickup: from, dropoff: to }
    }

    #[test]
    fn hours_and_day_types() {
        let g = study_area();
        let p = g.cell_center(GridIndex { col: 0, row: 0 });
        // 2016-11-01 is a Tuesday; 00:00 local is 16:00 UTC the day before
        let tue_midnight = 1_477_929_600;
        let sat_14h = tue_midnight + 4 * 86_400 + 14 * 3600;
        let orders = [order("a", tue_midnight + 8 * 3600, p, p), order("b", sat_14h, p, p), order("c", sat_14h + 59, p, p)];
        let rides = [
            RideRef { order: &orders[0], shared: false },
            RideRef { order: &orders[1], shared: true },
            RideRef { order: &orders[2], shared: true },
        ];
        let c = hourly_counts(&rides, &PeakHours::default());
        assert_eq!(c[8], [[1, 0], [0, 0]]);
        assert_eq!(c[14], [[0, 0], [0, 2]]);
        assert_eq!(c.iter().flatten().flatten().sum::<usize>(), 3);
    }

    #[test]
    fn od_cells() {
        let g = study_area();
        let a = g.cell_center(GridIndex { col: 1, row: 2 });
        let b = g.cell_center(GridIndex { col: 16, row: 0 });
        let orders = [order("x", 0, a, b), order("y", 0, a, a), order("z", 0, GeoPoint { lon: 100.0, lat: 30.0 }, b)];
        let rides: Vec<RideRef> = orders.iter().enumerate().map(|(i, o)| RideRef { order: o, shared: i == 1 }).collect();
        let c = od_counts(&rides, &g);
        assert_eq!(c[&GridIndex { col: 1, row: 2 }], [1, 0, 1, 1]);
        assert_eq!(c[&GridIndex { col: 16, row: 0 }], [0, 2, 0, 0]);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn groups_are_summarised_in_key_order() {
        let rec = |nsr, peak, err| TripRecord {
            nsr,
            peak_hours: peak,
            err_g_per_km: err,
            ..ridesplit_core::synth::regression_records(1, 0.0, 0)[0].clone()
        };
        let g = err_by_group(&[rec(3, 0, 5.0), rec(2, 1, 1.0), rec(2, 1, 3.0), rec(2, 0, -2.0)]);
        let keys: Vec<(u32, u8, usize)> = g.iter().map(|s| (s.nsr, s.peak_hours, s.count)).collect();
        assert_eq!(keys, vec![(2, 0, 1), (2, 1, 2), (3, 0, 1)]);
        assert_eq!(g[1].mean, 2.0);
        assert_eq!(g[1].quantiles, [1.0, 1.5, 2.0, 2.5, 3.0]);
    }
}
