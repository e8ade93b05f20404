//! Per-pool-trip explanatory variables and the regression dataset.
//!
//! Overlap is measured over the periods where at least two shared rides are
//! on board at once: the union of all pairwise ride-interval intersections.
//! With two rides this is the single interval between the second pickup and
//! the first dropoff. A segment counts toward the overlap distance when it lies
//! entirely inside one of those periods.

use std::io::{Read, Write};

use chrono::{DateTime, Datelike, FixedOffset, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{Baseline, ReductionRecord};
use crate::numfmt::{opt_sig9, sig9};
use crate::stats::{pearson, quantile_sorted};
use crate::trips::PoolTrip;

/// Columns of the regression dataset, in file order after `trip_id`.
/// Serialized under their dataset column names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Column {
    #[serde(rename = "saved_distance_km")]
    SavedDistance,
    #[serde(rename = "emission_reduction_g")]
    EmissionReduction,
    #[serde(rename = "erp_pct")]
    Erp,
    #[serde(rename = "err_g_per_km")]
    Err,
    #[serde(rename = "overlap_distance_km")]
    OverlapDistance,
    #[serde(rename = "overlap_rate")]
    OverlapRate,
    #[serde(rename = "detour_distance_km")]
    DetourDistance,
    #[serde(rename = "detour_rate")]
    DetourRate,
    #[serde(rename = "nsr")]
    Nsr,
    #[serde(rename = "peak_hours")]
    PeakHours,
    #[serde(rename = "avg_speed_kmh")]
    AvgSpeed,
    #[serde(rename = "actual_trip_distance_km")]
    ActualTripDistance,
    #[serde(rename = "min_ride_distance_km")]
    MinRideDistance,
    #[serde(rename = "max_ride_distance_km")]
    MaxRideDistance,
    #[serde(rename = "total_ride_distance_km")]
    TotalRideDistance,
    #[serde(rename = "ride_distance_gap_km")]
    RideDistanceGap,
    #[serde(rename = "ride_distance_ratio")]
    RideDistanceRatio,
}

impl Column {
    pub const ALL: [Column; 17] = [
        Column::SavedDistance,
        Column::EmissionReduction,
        Column::Erp,
        Column::Err,
        Column::OverlapDistance,
        Column::OverlapRate,
        Column::DetourDistance,
        Column::DetourRate,
        Column::Nsr,
        Column::PeakHours,
        Column::AvgSpeed,
        Column::ActualTripDistance,
        Column::MinRideDistance,
        Column::MaxRideDistance,
        Column::TotalRideDistance,
        Column::RideDistanceGap,
        Column::RideDistanceRatio,
    ];

    /// The eight regressors of the emission-reduction-rate model.
    pub const REGRESSORS: [Column; 8] = [
        Column::OverlapRate,
        Column::DetourRate,
        Column::Nsr,
        Column::PeakHours,
        Column::AvgSpeed,
        Column::ActualTripDistance,
        Column::RideDistanceGap,
        Column::RideDistanceRatio,
    ];

    /// Default outlier-screened columns: every numeric column except the
    /// binary peak flag and the ride count.
    pub fn iqr_default() -> Vec<Column> {
        Column::ALL.into_iter().filter(|c| !matches!(c, Column::Nsr | Column::PeakHours)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::SavedDistance => "saved_distance_km",
            Column::EmissionReduction => "emission_reduction_g",
            Column::Erp => "erp_pct",
            Column::Err => "err_g_per_km",
            Column::OverlapDistance => "overlap_distance_km",
            Column::OverlapRate => "overlap_rate",
            Column::DetourDistance => "detour_distance_km",
            Column::DetourRate => "detour_rate",
            Column::Nsr => "nsr",
            Column::PeakHours => "peak_hours",
            Column::AvgSpeed => "avg_speed_kmh",
            Column::ActualTripDistance => "actual_trip_distance_km",
            Column::MinRideDistance => "min_ride_distance_km",
            Column::MaxRideDistance => "max_ride_distance_km",
            Column::TotalRideDistance => "total_ride_distance_km",
            Column::RideDistanceGap => "ride_distance_gap_km",
            Column::RideDistanceRatio => "ride_distance_ratio",
        }
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// One ridesplitting trip: four targets and thirteen explanatory variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub saved_distance_km: f64,
    pub emission_reduction_g: f64,
    pub erp_pct: f64,
    pub err_g_per_km: f64,
    pub overlap_distance_km: f64,
    pub overlap_rate: f64,
    pub detour_distance_km: f64,
    pub detour_rate: f64,
    pub nsr: u32,
    pub peak_hours: u8,
    pub avg_speed_kmh: f64,
    pub actual_trip_distance_km: f64,
    pub min_ride_distance_km: f64,
    pub max_ride_distance_km: f64,
    pub total_ride_distance_km: f64,
    pub ride_distance_gap_km: f64,
    pub ride_distance_ratio: f64,
}

pub trait HasColumns {
    fn column(&self, c: Column) -> f64;
}

impl HasColumns for TripRecord {
    fn column(&self, c: Column) -> f64 {
        match c {
            Column::SavedDistance => self.saved_distance_km,
            Column::EmissionReduction => self.emission_reduction_g,
            Column::Erp => self.erp_pct,
            Column::Err => self.err_g_per_km,
            Column::OverlapDistance => self.overlap_distance_km,
            Column::OverlapRate => self.overlap_rate,
            Column::DetourDistance => self.detour_distance_km,
            Column::DetourRate => self.detour_rate,
            Column::Nsr => f64::from(self.nsr),
            Column::PeakHours => f64::from(self.peak_hours),
            Column::AvgSpeed => self.avg_speed_kmh,
            Column::ActualTripDistance => self.actual_trip_distance_km,
            Column::MinRideDistance => self.min_ride_distance_km,
            Column::MaxRideDistance => self.max_ride_distance_km,
            Column::TotalRideDistance => self.total_ride_distance_km,
            Column::RideDistanceGap => self.ride_distance_gap_km,
            Column::RideDistanceRatio => self.ride_distance_ratio,
        }
    }
}

/// A record plus the trip facts needed by the validity filter and reports but
/// not exported with the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub record: TripRecord,
    pub overlap_time_s: f64,
    pub start_ts: i64,
}

impl HasColumns for FeatureRow {
    fn column(&self, c: Column) -> f64 {
        self.record.column(c)
    }
}

/// Periods (start, end) with at least two rides on board, merged and ordered.
pub fn overlap_windows(intervals: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut cuts: Vec<i64> = intervals.iter().flat_map(|&(s, e)| [s, e]).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut windows: Vec<(i64, i64)> = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let cover = intervals.iter().filter(|&&(s, e)| s <= a && b <= e).count();
        if cover >= 2 {
            match windows.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => windows.push((a, b)),
            }
        }
    }
    windows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapMetrics {
    /// meters, calibrated
    pub distance: f64,
    /// seconds
    pub time: f64,
    pub rate: f64,
}

pub fn overlap_metrics(trip: &PoolTrip) -> OverlapMetrics {
    let intervals: Vec<(i64, i64)> = trip.rides.iter().map(|r| (r.order.start_ts, r.order.end_ts)).collect();
    let windows = overlap_windows(&intervals);
    let raw: f64 = trip.segments.iter().filter(|s| windows.iter().any(|&(a, b)| s.within(a, b))).map(|s| s.d).sum();
    let distance = trip.calibration * raw;
    OverlapMetrics { distance, time: windows.iter().map(|&(a, b)| (b - a) as f64).sum(), rate: distance / trip.trip_distance }
}

/// Detour distance (m) and rate: Σ over shared rides of the actual calibrated
/// ride distance minus the substitutes' median distance.
pub fn detour_metrics(trip: &PoolTrip, baselines: &[Baseline]) -> Result<(f64, f64)> {
    if baselines.len() != trip.rides.len() {
        return Err(Error::InvalidInput(format!(
            "trip {}: {} baselines for {} shared rides",
            trip.trip_id,
            baselines.len(),
            trip.rides.len()
        )));
    }
    let dd: f64 = trip.rides.iter().zip(baselines).map(|(r, b)| trip.ride_distance(&r.order) - b.median_td).sum();
    Ok((dd, dd / trip.trip_distance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakHours {
    /// Offset of local time from UTC, hours.
    pub utc_offset_hours: i32,
    /// Half-open local-hour windows `[from, to)` on weekdays.
    pub windows: Vec<(u32, u32)>,
}

impl Default for PeakHours {
    fn default() -> Self {
        PeakHours { utc_offset_hours: 8, windows: vec![(7, 9), (17, 20)] }
    }
}

impl PeakHours {
    pub fn local_time(&self, ts: i64) -> DateTime<FixedOffset> {
        let offset = FixedOffset::east_opt(self.utc_offset_hours * 3600).expect("offset within ±24 h");
        DateTime::from_timestamp(ts, 0).expect("timestamp in range").with_timezone(&offset)
    }

    pub fn is_weekday(&self, ts: i64) -> bool {
        !matches!(self.local_time(ts).weekday(), Weekday::Sat | Weekday::Sun)
    }

    pub fn local_hour(&self, ts: i64) -> u32 {
        self.local_time(ts).hour()
    }

    pub fn is_peak(&self, ts: i64) -> bool {
        let h = self.local_hour(ts);
        self.is_weekday(ts) && self.windows.iter().any(|&(a, b)| a <= h && h < b)
    }
}

/// Distance summaries of the substituted single rides, km: (min, max, total, gap, ratio).
pub fn ride_distance_summary(baselines: &[Baseline]) -> (f64, f64, f64, f64, f64) {
    let km: Vec<f64> = baselines.iter().map(|b| b.median_td / 1000.0).collect();
    let min = km.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = km.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total = baselines.iter().map(|b| b.median_td).sum::<f64>() / 1000.0;
    (min, max, total, max - min, min / max)
}

/// All variables of one matched pool trip.
pub fn build_record(trip: &PoolTrip, reduction: &ReductionRecord, peak: &PeakHours) -> Result<FeatureRow> {
    let overlap = overlap_metrics(trip);
    let (dd, dr) = detour_metrics(trip, &reduction.baselines)?;
    let (min, max, total, gap, ratio) = ride_distance_summary(&reduction.baselines);
    let start_ts = trip.start_ts();
    let record = TripRecord {
        trip_id: trip.trip_id.clone(),
        saved_distance_km: reduction.saved_distance / 1000.0,
        emission_reduction_g: reduction.emission_reduction,
        erp_pct: reduction.erp * 100.0,
        err_g_per_km: reduction.err,
        overlap_distance_km: overlap.distance / 1000.0,
        overlap_rate: overlap.rate,
        detour_distance_km: dd / 1000.0,
        detour_rate: dr,
        nsr: trip.nsr() as u32,
        peak_hours: u8::from(peak.is_peak(start_ts)),
        avg_speed_kmh: trip.trip_distance / trip.trip_time * 3.6,
        actual_trip_distance_km: trip.trip_distance / 1000.0,
        min_ride_distance_km: min,
        max_ride_distance_km: max,
        total_ride_distance_km: total,
        ride_distance_gap_km: gap,
        ride_distance_ratio: ratio,
    };
    Ok(FeatureRow { record, overlap_time_s: overlap.time, start_ts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidityRules {
    pub min_overlap_distance_m: f64,
    pub min_overlap_time_s: f64,
    pub allowed_nsr: Vec<u32>,
}

impl Default for ValidityRules {
    fn default() -> Self {
        ValidityRules { min_overlap_distance_m: 500.0, min_overlap_time_s: 60.0, allowed_nsr: vec![2, 3] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityDrops {
    pub input: usize,
    pub kept: usize,
    pub nsr_not_allowed: usize,
    pub short_overlap_distance: usize,
    pub short_overlap_time: usize,
}

/// Drops trips whose ride count is not allowed or whose overlap is shorter
/// than either threshold (checked in that order for tallying).
pub fn validity_filter(rows: Vec<FeatureRow>, rules: &ValidityRules) -> (Vec<FeatureRow>, ValidityDrops) {
    let mut drops = ValidityDrops { input: rows.len(), ..Default::default() };
    let kept: Vec<FeatureRow> = rows
        .into_iter()
        .filter(|r| {
            if !rules.allowed_nsr.contains(&r.record.nsr) {
                drops.nsr_not_allowed += 1;
                false
            } else if r.record.overlap_distance_km * 1000.0 < rules.min_overlap_distance_m {
                drops.short_overlap_distance += 1;
                false
            } else if r.overlap_time_s < rules.min_overlap_time_s {
                drops.short_overlap_time += 1;
                false
            } else {
                true
            }
        })
        .collect();
    drops.kept = kept.len();
    (kept, drops)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqrBounds {
    pub column: Column,
    pub q1: f64,
    pub q3: f64,
    pub lower: f64,
    pub upper: f64,
    /// Rows outside the bounds on this column (a row may count in several).
    pub outside: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IqrReport {
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
    pub bounds: Vec<IqrBounds>,
}

/// Tukey fences per column: a row is dropped iff any listed column lies
/// outside `[Q1 − k·IQR, Q3 + k·IQR]`. Quartiles use linear interpolation
/// between order statistics. All fences come from the unfiltered input.
pub fn iqr_filter<T: HasColumns>(rows: Vec<T>, factor: f64, columns: &[Column]) -> (Vec<T>, IqrReport) {
    let n = rows.len();
    if n < 4 || factor.is_infinite() {
        if n < 4 {
            tracing::warn!(rows = n, "IQR filter needs at least 4 rows; skipped");
        }
        return (rows, IqrReport { input: n, kept: n, dropped: 0, bounds: vec![] });
    }
    let mut bounds: Vec<IqrBounds> = columns
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = rows.iter().map(|r| r.column(c)).collect();
            v.sort_by(f64::total_cmp);
            let (q1, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75));
            let iqr = q3 - q1;
            IqrBounds { column: c, q1, q3, lower: q1 - factor * iqr, upper: q3 + factor * iqr, outside: 0 }
        })
        .collect();
    let kept: Vec<T> = rows
        .into_iter()
        .filter(|r| {
            let mut ok = true;
            for b in bounds.iter_mut() {
                let x = r.column(b.column);
                if !(b.lower <= x && x <= b.upper) {
                    b.outside += 1;
                    ok = false;
                }
            }
            ok
        })
        .collect();
    let report = IqrReport { input: n, kept: kept.len(), dropped: n - kept.len(), bounds };
    (kept, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<Column>,
    /// `None` where a column is constant.
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix<T: HasColumns>(rows: &[T], columns: &[Column]) -> CorrelationMatrix {
    let data: Vec<Vec<f64>> = columns.iter().map(|&c| rows.iter().map(|r| r.column(c)).collect()).collect();
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = if i == j { pearson(&data[i], &data[i]).map(|_| 1.0) } else { pearson(&data[i], &data[j]) };
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    CorrelationMatrix { columns: columns.to_vec(), values }
}

impl CorrelationMatrix {
    /// Square table with a leading `column` name field; constant-column cells are empty.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let header: Vec<&str> = std::iter::once("column").chain(self.columns.iter().map(|c| c.name())).collect();
        w.write_record(&header)?;
        for (c, row) in self.columns.iter().zip(&self.values) {
            let fields: Vec<String> = std::iter::once(c.name().to_owned()).chain(row.iter().map(|v| opt_sig9(*v))).collect();
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_dataset<W: Write>(sink: W, records: &[TripRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let header: Vec<&str> = std::iter::once("trip_id").chain(Column::ALL.iter().map(|c| c.name())).collect();
    w.write_record(&header)?;
    for r in records {
        let fields: Vec<String> = std::iter::once(r.trip_id.clone())
            .chain(Column::ALL.iter().map(|&c| match c {
                Column::Nsr => r.nsr.to_string(),
                Column::PeakHours => r.peak_hours.to_string(),
                _ => sig9(r.column(c)),
            }))
            .collect();
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(source: R) -> Result<Vec<TripRecord>> {
    csv::Reader::from_reader(source).deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RideOrder;
    use crate::trips::tests::north;
    use crate::trips::{summarize_pool, RideTrajectory, Segment};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ride(id: &str, start: i64, end: i64, speed: f64, step: i64) -> RideTrajectory {
        let segments: Vec<Segment> = (start..end)
            .step_by(step as usize)
            .map(|t0| Segment { order_id: id.into(), start_ts: t0, end_ts: t0 + step, t: step as f64, d: speed * step as f64, v: speed })
            .collect();
        let d: f64 = segments.iter().map(|s| s.d).sum();
        RideTrajectory {
            order: RideOrder { order_id: id.into(), start_ts: start, end_ts: end, pickup: north(0.0), dropoff: north(1.0) },
            driver_id: "d".into(),
            segments,
            total_time: (end - start) as f64,
            total_distance: d,
            calibration: 1.0,
            trip_distance: d,
        }
    }

    /// Oracle: count segment-length steps covered by ≥ 2 rides.
    fn coverage_oracle(intervals: &[(i64, i64)], step: i64, speed: f64) -> f64 {
        let lo = intervals.iter().map(|i| i.0).min().unwrap();
        let hi = intervals.iter().map(|i| i.1).max().unwrap();
        let mut d = 0.0;
        let mut t = lo;
        while t < hi {
            if intervals.iter().filter(|&&(s, e)| s <= t && t + step <= e).count() >= 2 {
                d += speed * step as f64;
            }
            t += step;
        }
        d
    }

    #[test]
    fn two_ride_overlap() {
        let trip = summarize_pool(vec![ride("a", 0, 100, 10.0, 10), ride("b", 40, 140, 10.0, 10)]).unwrap();
        let m = overlap_metrics(&trip);
        assert_eq!(coverage_oracle(&[(0, 100), (40, 140)], 10, 10.0), 600.0);
        assert_eq!(m.distance, 600.0);
        assert_eq!(m.time, 60.0);
        assert_eq!(m.rate, 600.0 / 1400.0);
    }

    #[test]
    fn identical_intervals_overlap_fully() {
        let trip = summarize_pool(vec![ride("a", 0, 100, 10.0, 10), ride("b", 0, 100, 10.0, 10)]).unwrap();
        let m = overlap_metrics(&trip);
        assert_eq!(m.distance, trip.trip_distance);
        assert_eq!(m.rate, 1.0);
    }

    #[test]
    fn three_ride_union() {
        // pairwise windows [40,100] and [120,160]
        let intervals = [(0, 100), (40, 160), (120, 200)];
        let trip =
            summarize_pool(intervals.iter().enumerate().map(|(i, &(s, e))| ride(&format!("r{i}"), s, e, 10.0, 10)).collect()).unwrap();
        assert_eq!(overlap_windows(&intervals), vec![(40, 100), (120, 160)]);
        let m = overlap_metrics(&trip);
        assert_eq!(coverage_oracle(&intervals, 10, 10.0), 1000.0);
        assert_eq!(m.distance, 1000.0);
        assert_eq!(m.time, 100.0);
    }

    #[test]
    fn overlap_scales_with_calibration() {
        let mut trip = summarize_pool(vec![ride("a", 0, 100, 10.0, 10), ride("b", 40, 140, 10.0, 10)]).unwrap();
        trip.calibration = 1.25;
        trip.trip_distance = trip.total_distance * 1.25;
        assert_eq!(overlap_metrics(&trip).distance, 750.0);
    }

    fn base(km: f64) -> Baseline {
        Baseline { median_td: km * 1000.0, median_e: 100.0, n_singles: 3 }
    }

    #[test]
    fn detours() {
        // ride a covers 1 km, ride b 1 km (10 m/s over 100 s each)
        let trip = summarize_pool(vec![ride("a", 0, 100, 10.0, 10), ride("b", 40, 140, 10.0, 10)]).unwrap();
        let (dd, dr) = detour_metrics(&trip, &[base(0.5), base(1.0)]).unwrap();
        assert!((dd - 500.0).abs() < 1e-9);
        assert!((dr - 500.0 / 1400.0).abs() < 1e-12);
        let (dd, _) = detour_metrics(&trip, &[base(1.2), base(1.0)]).unwrap();
        assert!((dd + 200.0).abs() < 1e-9);
        let (dd, dr) = detour_metrics(&trip, &[base(1.0), base(1.0)]).unwrap();
        assert_eq!((dd, dr), (0.0, 0.0));
        assert!(detour_metrics(&trip, &[base(1.0)]).is_err());
    }

    #[test]
    fn peak_hour_flags() {
        let peak = PeakHours::default();
        // 2016-11-01 was a Tuesday; 08:30 in UTC+8 is 00:30 UTC
        let tuesday = 1_477_960_200;
        assert_eq!(peak.local_hour(tuesday), 8);
        assert!(peak.is_peak(tuesday));
        let saturday = tuesday + 4 * 86_400;
        assert!(!peak.is_weekday(saturday));
        assert!(!peak.is_peak(saturday));
        assert!(!peak.is_peak(tuesday + 3600)); // 09:30
        assert!(peak.is_peak(tuesday + 9 * 3600)); // 17:30
        assert!(!peak.is_peak(tuesday + 12 * 3600)); // 20:30
    }

    #[test]
    fn scalar_variables() {
        let (min, max, total, gap, ratio) = ride_distance_summary(&[base(4.0), base(6.0)]);
        assert_eq!((min, max, total, gap), (4.0, 6.0, 10.0, 2.0));
        assert!((ratio - 0.667).abs() < 1e-3);
        // TD_s = 8 km over TT_s = 1600 s
        assert_eq!(8000.0 / 1600.0 * 3.6, 18.0);
    }

    fn row(nsr: u32, od_m: f64, ot_s: f64) -> FeatureRow {
        let mut r = FeatureRow { record: record_with(0.0), overlap_time_s: ot_s, start_ts: 0 };
        r.record.nsr = nsr;
        r.record.overlap_distance_km = od_m / 1000.0;
        r
    }

    fn record_with(x: f64) -> TripRecord {
        TripRecord {
            trip_id: format!("t{x}"),
            saved_distance_km: x,
            emission_reduction_g: x,
            erp_pct: x,
            err_g_per_km: x,
            overlap_distance_km: x,
            overlap_rate: x,
            detour_distance_km: x,
            detour_rate: x,
            nsr: 2,
            peak_hours: 0,
            avg_speed_kmh: x,
            actual_trip_distance_km: x,
            min_ride_distance_km: x,
            max_ride_distance_km: x,
            total_ride_distance_km: x,
            ride_distance_gap_km: x,
            ride_distance_ratio: x,
        }
    }

    #[test]
    fn validity_thresholds() {
        let rows = vec![row(2, 400.0, 90.0), row(4, 900.0, 90.0), row(2, 600.0, 90.0), row(3, 600.0, 59.0)];
        let (kept, drops) = validity_filter(rows, &ValidityRules::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].record.overlap_distance_km, 0.6);
        assert_eq!(drops, ValidityDrops { input: 4, kept: 1, nsr_not_allowed: 1, short_overlap_distance: 1, short_overlap_time: 1 });
    }

    #[test]
    fn iqr_drops_the_outlier() {
        let rows: Vec<TripRecord> = (1..=10).map(f64::from).chain([100.0]).map(record_with).collect();
        let (kept, report) = iqr_filter(rows, 1.5, &[Column::Err]);
        assert_eq!(kept.len(), 10);
        assert!(kept.iter().all(|r| r.err_g_per_km <= 10.0));
        assert_eq!((report.bounds[0].q1, report.bounds[0].q3), (3.5, 8.5));
        assert_eq!((report.bounds[0].lower, report.bounds[0].upper), (-4.0, 16.0));
    }

    #[test]
    fn iqr_degenerate_cases() {
        let same: Vec<TripRecord> = (0..6).map(|_| record_with(3.0)).collect();
        assert_eq!(iqr_filter(same, 1.5, &Column::iqr_default()).0.len(), 6);
        let rows: Vec<TripRecord> = (1..=10).map(f64::from).chain([1e9]).map(record_with).collect();
        assert_eq!(iqr_filter(rows.clone(), f64::INFINITY, &[Column::Err]).0.len(), 11);
        assert_eq!(iqr_filter(rows[..3].to_vec(), 1.5, &[Column::Err]).0.len(), 3);
    }

    #[test]
    fn correlations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<TripRecord> = (0..10_000)
            .map(|_| {
                let mut r = record_with(0.0);
                r.overlap_rate = rng.random::<f64>();
                r.detour_rate = -r.overlap_rate;
                r.avg_speed_kmh = rng.random::<f64>();
                r
            })
            .collect();
        let cols = [Column::OverlapRate, Column::DetourRate, Column::AvgSpeed, Column::Nsr];
        let m = correlation_matrix(&rows, &cols);
        assert_eq!(m.values[0][0], Some(1.0));
        assert!((m.values[0][1].unwrap() + 1.0).abs() < 1e-12);
        assert!(m.values[0][2].unwrap().abs() < 0.05);
        assert_eq!(m.values[3][0], None);
        assert_eq!(m.values[3][3], None);
        for i in 0..3 {
            for j in 0..3 {
                let v = m.values[i][j].unwrap();
                assert_eq!(v, m.values[j][i].unwrap());
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn dataset_round_trip_and_header() {
        let rows = vec![record_with(1.5), record_with(-2.25)];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trip_id,saved_distance_km,emission_reduction_g,erp_pct,err_g_per_km,"));
        assert_eq!(text.lines().next().unwrap().split(',').count(), 18);
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn filters_commute_with_order(
            vals in prop::collection::vec((0.0f64..10.0, 100.0f64..2000.0, 0.0f64..200.0, 2u32..5), 4..40),
            seed in any::<u64>(),
        ) {
            let rows: Vec<FeatureRow> = vals.iter().enumerate().map(|(i, &(x, od, ot, nsr))| {
                let mut r = row(nsr, od, ot);
                r.record.trip_id = format!("t{i}");
                r.record.err_g_per_km = x;
                r
            }).collect();
            let mut shuffled = rows.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            let ids = |rs: Vec<FeatureRow>| {
                let (v, _) = validity_filter(rs, &ValidityRules::default());
                let (k, _) = iqr_filter(v, 1.5, &[Column::Err, Column::OverlapDistance]);
                let mut ids: Vec<String> = k.into_iter().map(|r| r.record.trip_id).collect();
                ids.sort();
                ids
            };
            prop_assert_eq!(ids(rows), ids(shuffled));
        }

        #[test]
        fn overlap_matches_coverage_oracle(
            spans in prop::collection::vec((0i64..30, 1i64..30), 2..5),
        ) {
            let step = 10;
            let intervals: Vec<(i64, i64)> = spans.iter().map(|&(s, len)| (s * step, (s + len) * step)).collect();
            let trip = summarize_pool(intervals.iter().enumerate()
                .map(|(i, &(s, e))| ride(&format!("r{i}"), s, e, 7.5, step)).collect()).unwrap();
            let m = overlap_metrics(&trip);
            let expected = coverage_oracle(&intervals, step, 7.5) * trip.calibration;
            prop_assert!((m.distance - expected).abs() <= 1e-9 * expected.max(1.0));
            prop_assert!(m.rate >= 0.0 && m.rate <= 1.0 + 1e-12);
        }
    }
}
