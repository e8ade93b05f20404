//! Trajectory reconstruction: GPS segments, anomaly filtering, ridesplitting
//! identification and time/distance calibration.
//!
//! For a ride `k`, `T = Σ t_i`, `D = Σ d_i`, `C = TT / T` and `TD = C · D`,
//! where `TT` is the order-derived trip time. A pool trip applies the same
//! formulas to the union of its shared rides' segments, each physical segment
//! counted once, with `TT_s = max(end) − min(start)` over the shared rides.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::haversine_distance;
use crate::ingest::{GpsFix, RideOrder};
use crate::numfmt::sig9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub order_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    /// seconds
    pub t: f64,
    /// meters
    pub d: f64,
    /// meters per second
    pub v: f64,
}

impl Segment {
    pub fn speed_kmh(&self) -> f64 {
        self.v * 3.6
    }

    /// True when the whole segment lies within `[start, end]`.
    pub fn within(&self, start: i64, end: i64) -> bool {
        start <= self.start_ts && self.end_ts <= end
    }
}

/// One segment per consecutive pair of fixes. Fixes are ordered by timestamp
/// (stable), and a fix repeating the previous timestamp is discarded.
pub fn build_segments(order_id: &str, fixes: &[&GpsFix]) -> Result<Vec<Segment>> {
    let mut sorted: Vec<&GpsFix> = fixes.to_vec();
    sorted.sort_by_key(|f| f.ts);
    sorted.dedup_by_key(|f| f.ts);
    if sorted.len() < 2 {
        return Err(Error::EmptyTrajectory(order_id.to_owned()));
    }
    Ok(sorted
        .windows(2)
        .map(|w| {
            let t = (w[1].ts - w[0].ts) as f64;
            let d = haversine_distance(w[0].pos, w[1].pos);
            Segment { order_id: order_id.to_owned(), start_ts: w[0].ts, end_ts: w[1].ts, t, d, v: d / t }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentLimits {
    pub max_time_s: f64,
    pub max_distance_m: f64,
    pub max_speed_mps: f64,
}

impl Default for SegmentLimits {
    fn default() -> Self {
        SegmentLimits { max_time_s: 60.0, max_distance_m: 500.0, max_speed_mps: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentDrops {
    pub input: usize,
    pub kept: usize,
    pub too_long_time: usize,
    pub too_long_distance: usize,
    pub too_fast: usize,
}

impl SegmentDrops {
    fn merge(&mut self, other: &SegmentDrops) {
        self.input += other.input;
        self.kept += other.kept;
        self.too_long_time += other.too_long_time;
        self.too_long_distance += other.too_long_distance;
        self.too_fast += other.too_fast;
    }
}

/// Drops GPS drift and gaps: a segment survives iff `t`, `d` and `v` are all
/// within their caps. The first violated cap (time, distance, speed) is the
/// tallied reason.
pub fn filter_segments(segments: Vec<Segment>, limits: &SegmentLimits) -> (Vec<Segment>, SegmentDrops) {
    let mut drops = SegmentDrops { input: segments.len(), ..Default::default() };
    let kept: Vec<Segment> = segments
        .into_iter()
        .filter(|s| {
            if s.t > limits.max_time_s {
                drops.too_long_time += 1;
                false
            } else if s.d > limits.max_distance_m {
                drops.too_long_distance += 1;
                false
            } else if s.v > limits.max_speed_mps {
                drops.too_fast += 1;
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
pub struct RideTrajectory {
    pub order: RideOrder,
    pub driver_id: String,
    pub segments: Vec<Segment>,
    /// T, seconds
    pub total_time: f64,
    /// D, meters
    pub total_distance: f64,
    /// C = TT / T
    pub calibration: f64,
    /// TD = D · C, meters
    pub trip_distance: f64,
}

pub fn summarize_ride(order: RideOrder, driver_id: &str, segments: Vec<Segment>) -> Result<RideTrajectory> {
    let total_time: f64 = segments.iter().map(|s| s.t).sum();
    if total_time <= 0.0 {
        return Err(Error::DegenerateTrajectory(order.order_id));
    }
    let total_distance: f64 = segments.iter().map(|s| s.d).sum();
    let calibration = order.trip_time() as f64 / total_time;
    Ok(RideTrajectory {
        trip_distance: total_distance * calibration,
        driver_id: driver_id.to_owned(),
        order,
        segments,
        total_time,
        total_distance,
        calibration,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolTrip {
    /// Order id of the earliest-starting shared ride.
    pub trip_id: String,
    pub driver_id: String,
    /// Shared rides ordered by start time.
    pub rides: Vec<RideTrajectory>,
    /// Deduplicated union of the shared rides' segments, ordered by time.
    pub segments: Vec<Segment>,
    /// TT_s, seconds
    pub trip_time: f64,
    pub total_time: f64,
    pub total_distance: f64,
    pub calibration: f64,
    pub trip_distance: f64,
}

impl PoolTrip {
    pub fn nsr(&self) -> usize {
        self.rides.len()
    }

    pub fn start_ts(&self) -> i64 {
        self.rides.iter().map(|r| r.order.start_ts).min().unwrap_or_default()
    }

    pub fn end_ts(&self) -> i64 {
        self.rides.iter().map(|r| r.order.end_ts).max().unwrap_or_default()
    }

    /// Calibrated distance of one shared ride: the pool trip's segments inside
    /// the ride's order interval, scaled by the pool calibration coefficient.
    pub fn ride_distance(&self, ride: &RideOrder) -> f64 {
        let d: f64 = self.segments.iter().filter(|s| s.within(ride.start_ts, ride.end_ts)).map(|s| s.d).sum();
        self.calibration * d
    }
}

pub fn summarize_pool(mut rides: Vec<RideTrajectory>) -> Result<PoolTrip> {
    if rides.len() < 2 {
        return Err(Error::InvalidInput(format!("a pool trip needs at least two rides, got {}", rides.len())));
    }
    rides.sort_by(|a, b| (a.order.start_ts, &a.order.order_id).cmp(&(b.order.start_ts, &b.order.order_id)));
    let mut segments: Vec<Segment> = rides.iter().flat_map(|r| r.segments.iter().cloned()).collect();
    segments.sort_by_key(|s| (s.start_ts, s.end_ts));
    segments.dedup_by_key(|s| (s.start_ts, s.end_ts));

    let start = rides.iter().map(|r| r.order.start_ts).min().expect("non-empty");
    let end = rides.iter().map(|r| r.order.end_ts).max().expect("non-empty");
    let trip_id = rides[0].order.order_id.clone();
    let total_time: f64 = segments.iter().map(|s| s.t).sum();
    if total_time <= 0.0 {
        return Err(Error::DegenerateTrajectory(trip_id));
    }
    let total_distance: f64 = segments.iter().map(|s| s.d).sum();
    let trip_time = (end - start) as f64;
    let calibration = trip_time / total_time;
    Ok(PoolTrip {
        trip_id,
        driver_id: rides[0].driver_id.clone(),
        rides,
        segments,
        trip_time,
        total_time,
        total_distance,
        calibration,
        trip_distance: total_distance * calibration,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Identification {
    /// Indices of orders that ride alone.
    pub singles: Vec<usize>,
    /// Index groups of shared rides, each of size ≥ 2.
    pub pools: Vec<Vec<usize>>,
    /// Orders with no GPS fix, hence no driver.
    pub without_fixes: Vec<usize>,
}

/// Groups orders into pool trips: two orders of the same driver whose time
/// intervals overlap by at least `min_overlap_s` seconds share the vehicle,
/// and the transitive closure of that relation forms one pool trip.
pub fn identify_pool_trips(orders: &[RideOrder], driver_of: &HashMap<String, String>, min_overlap_s: i64) -> Identification {
    let mut by_driver: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut out = Identification::default();
    for (i, o) in orders.iter().enumerate() {
        match driver_of.get(&o.order_id) {
            Some(d) => by_driver.entry(d.as_str()).or_default().push(i),
            None => out.without_fixes.push(i),
        }
    }
    for (_, mut idx) in by_driver {
        idx.sort_by(|&a, &b| {
            let (oa, ob) = (&orders[a], &orders[b]);
            (oa.start_ts, oa.end_ts, &oa.order_id).cmp(&(ob.start_ts, ob.end_ts, &ob.order_id))
        });
        let groups = overlap_groups(&idx, orders, min_overlap_s);
        for g in groups {
            if g.len() == 1 {
                out.singles.push(g[0]);
            } else {
                out.pools.push(g);
            }
        }
    }
    out
}

/// Connected components of the overlap relation over orders sorted by start.
fn overlap_groups(sorted: &[usize], orders: &[RideOrder], min_overlap_s: i64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..sorted.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut active: Vec<usize> = Vec::new();
    for (pos, &i) in sorted.iter().enumerate() {
        let cur = &orders[i];
        // earlier-starting orders that can no longer reach the overlap threshold
        active.retain(|&p| orders[sorted[p]].end_ts - cur.start_ts >= min_overlap_s);
        for &p in &active {
            let other = &orders[sorted[p]];
            if other.end_ts.min(cur.end_ts) - cur.start_ts >= min_overlap_s {
                let (ra, rb) = (find(&mut parent, p), find(&mut parent, pos));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        active.push(pos);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for pos in 0..sorted.len() {
        let root = find(&mut parent, pos);
        groups.entry(root).or_default().push(sorted[pos]);
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripReport {
    pub orders_input: usize,
    pub orders_without_fixes: usize,
    pub empty_trajectories: usize,
    pub degenerate_trajectories: usize,
    /// Pool trips dropped because one of their shared rides had no usable trajectory.
    pub incomplete_pools: usize,
    pub single_rides: usize,
    pub pool_trips: usize,
    pub shared_rides: usize,
    pub segments: SegmentDrops,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reconstruction {
    pub singles: Vec<RideTrajectory>,
    pub pools: Vec<PoolTrip>,
    pub report: TripReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripSettings {
    pub segments: SegmentLimits,
    /// Minimum interval overlap for two orders of one driver to count as shared.
    pub min_pool_overlap_s: i64,
}

impl Default for TripSettings {
    fn default() -> Self {
        TripSettings { segments: SegmentLimits::default(), min_pool_overlap_s: 1 }
    }
}

enum RideOutcome {
    Ok(RideTrajectory),
    Empty,
    Degenerate,
}

fn reconstruct_ride(order: &RideOrder, driver: &str, fixes: &[&GpsFix], limits: &SegmentLimits, drops: &mut SegmentDrops) -> RideOutcome {
    let segments = match build_segments(&order.order_id, fixes) {
        Ok(s) => s,
        Err(_) => return RideOutcome::Empty,
    };
    let (kept, d) = filter_segments(segments, limits);
    drops.merge(&d);
    match summarize_ride(order.clone(), driver, kept) {
        Ok(r) => RideOutcome::Ok(r),
        Err(_) => RideOutcome::Degenerate,
    }
}

/// Full reconstruction over all drivers. Per-driver work runs in parallel and
/// is merged in driver order, so the output does not depend on scheduling.
pub fn reconstruct(orders: &[RideOrder], fixes: &[GpsFix], settings: &TripSettings) -> Reconstruction {
    let mut fixes_of: HashMap<&str, Vec<&GpsFix>> = HashMap::new();
    for f in fixes {
        fixes_of.entry(f.order_id.as_str()).or_default().push(f);
    }
    let driver_of: HashMap<String, String> =
        orders.iter().filter_map(|o| fixes_of.get(o.order_id.as_str()).map(|fs| (o.order_id.clone(), fs[0].driver_id.clone()))).collect();
    let ident = identify_pool_trips(orders, &driver_of, settings.min_pool_overlap_s);

    // Work units: one per single ride or pool, keyed by (driver, first start) for a stable order.
    let mut units: Vec<Vec<usize>> = ident.singles.iter().map(|&i| vec![i]).chain(ident.pools.iter().cloned()).collect();
    units.sort_by(|a, b| {
        let (oa, ob) = (&orders[a[0]], &orders[b[0]]);
        (&driver_of[&oa.order_id], oa.start_ts, &oa.order_id).cmp(&(&driver_of[&ob.order_id], ob.start_ts, &ob.order_id))
    });

    struct UnitResult {
        single: Option<RideTrajectory>,
        pool: Option<PoolTrip>,
        drops: SegmentDrops,
        empty: usize,
        degenerate: usize,
        incomplete_pool: bool,
    }

    let results: Vec<UnitResult> = units
        .par_iter()
        .map(|unit| {
            let mut res =
                UnitResult { single: None, pool: None, drops: SegmentDrops::default(), empty: 0, degenerate: 0, incomplete_pool: false };
            let mut rides = Vec::with_capacity(unit.len());
            for &i in unit {
                let o = &orders[i];
                let driver = &driver_of[&o.order_id];
                match reconstruct_ride(o, driver, &fixes_of[o.order_id.as_str()], &settings.segments, &mut res.drops) {
                    RideOutcome::Ok(r) => rides.push(r),
                    RideOutcome::Empty => res.empty += 1,
                    RideOutcome::Degenerate => res.degenerate += 1,
                }
            }
            if unit.len() == 1 {
                res.single = rides.pop();
            } else if rides.len() < unit.len() {
                res.incomplete_pool = true;
            } else {
                match summarize_pool(rides) {
                    Ok(p) => res.pool = Some(p),
                    Err(_) => res.incomplete_pool = true,
                }
            }
            res
        })
        .collect();

    let mut out = Reconstruction::default();
    out.report.orders_input = orders.len();
    out.report.orders_without_fixes = ident.without_fixes.len();
    for r in results {
        out.report.segments.merge(&r.drops);
        out.report.empty_trajectories += r.empty;
        out.report.degenerate_trajectories += r.degenerate;
        out.report.incomplete_pools += usize::from(r.incomplete_pool);
        if let Some(s) = r.single {
            out.singles.push(s);
        }
        if let Some(p) = r.pool {
            out.report.shared_rides += p.nsr();
            out.pools.push(p);
        }
    }
    out.report.single_rides = out.singles.len();
    out.report.pool_trips = out.pools.len();
    out
}

/// Audit table, one row per ride: `order_id, pool_trip_id, nsr, tt_s, t_s, d_m, c, td_m`.
/// Single rides have an empty pool id and `nsr = 1`.
pub fn write_ride_summary<W: Write>(sink: W, recon: &Reconstruction) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["order_id", "pool_trip_id", "nsr", "tt_s", "t_s", "d_m", "c", "td_m"])?;
    let mut row = |r: &RideTrajectory, pool: &str, nsr: usize| {
        w.write_record([
            r.order.order_id.clone(),
            pool.to_owned(),
            nsr.to_string(),
            r.order.trip_time().to_string(),
            sig9(r.total_time),
            sig9(r.total_distance),
            sig9(r.calibration),
            sig9(r.trip_distance),
        ])
    };
    for r in &recon.singles {
        row(r, "", 1)?;
    }
    for p in &recon.pools {
        for r in &p.rides {
            row(r, &p.trip_id, p.nsr())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Kept segments, one row per segment of every ride:
/// `driver_id, order_id, pool_trip_id, start_ts, end_ts, d_m`. Singles come
/// first, then pools, each in reconstruction order. Distances are written in
/// shortest round-trip form so [`rebuild`] reproduces the reconstruction
/// exactly.
pub fn write_segments<W: Write>(sink: W, recon: &Reconstruction) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["driver_id", "order_id", "pool_trip_id", "start_ts", "end_ts", "d_m"])?;
    let rides =
        recon.singles.iter().map(|r| (r, "")).chain(recon.pools.iter().flat_map(|p| p.rides.iter().map(move |r| (r, p.trip_id.as_str()))));
    for (r, pool) in rides {
        for s in &r.segments {
            w.write_record([
                r.driver_id.as_str(),
                s.order_id.as_str(),
                pool,
                &s.start_ts.to_string(),
                &s.end_ts.to_string(),
                &s.d.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct SegmentRow {
    driver_id: String,
    order_id: String,
    pool_trip_id: String,
    start_ts: i64,
    end_ts: i64,
    d_m: f64,
}

/// Inverse of [`write_segments`]: the reconstruction whose rides are the given
/// orders with the listed segments.
pub fn rebuild<R: std::io::Read>(orders: &[RideOrder], segments: R, report: TripReport) -> Result<Reconstruction> {
    let by_id: HashMap<&str, &RideOrder> = orders.iter().map(|o| (o.order_id.as_str(), o)).collect();
    let mut rides: Vec<(String, RideTrajectory)> = Vec::new();
    let mut current: Option<(SegmentRow, Vec<Segment>)> = None;
    let close = |cur: Option<(SegmentRow, Vec<Segment>)>, rides: &mut Vec<(String, RideTrajectory)>| -> Result<()> {
        if let Some((head, segs)) = cur {
            let order = by_id
                .get(head.order_id.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("segments of unknown order {}", head.order_id)))?;
            rides.push((head.pool_trip_id, summarize_ride((*order).clone(), &head.driver_id, segs)?));
        }
        Ok(())
    };
    for row in csv::Reader::from_reader(segments).into_deserialize::<SegmentRow>() {
        let row = row?;
        let t = (row.end_ts - row.start_ts) as f64;
        let seg = Segment { order_id: row.order_id.clone(), start_ts: row.start_ts, end_ts: row.end_ts, t, d: row.d_m, v: row.d_m / t };
        match &mut current {
            Some((head, segs)) if head.order_id == row.order_id => segs.push(seg),
            _ => {
                close(current.take(), &mut rides)?;
                current = Some((row, vec![seg]));
            }
        }
    }
    close(current.take(), &mut rides)?;

    let mut out = Reconstruction { report, ..Default::default() };
    let mut members: Vec<RideTrajectory> = Vec::new();
    let mut pool_id = String::new();
    for (pool, ride) in rides {
        if pool.is_empty() {
            out.singles.push(ride);
            continue;
        }
        if pool != pool_id && !members.is_empty() {
            out.pools.push(summarize_pool(std::mem::take(&mut members))?);
        }
        pool_id = pool;
        members.push(ride);
    }
    if !members.is_empty() {
        out.pools.push(summarize_pool(members)?);
    }
    Ok(out)
}
