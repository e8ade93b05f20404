//! Deterministic synthetic scenarios with known ground truth.
//!
//! Vehicles move on axis-aligned paths at a constant speed per trip, one GPS
//! fix per sampling interval. Every step has the same haversine length, so
//! distances, overlaps, detours and constant-speed emissions are known in
//! closed form by counting steps.
//!
//! A pool trip is a chain of shared rides, each picked up before the previous
//! one is dropped off. Between consecutive pickup/dropoff events the vehicle
//! makes some direct progress and may add an out-and-back excursion; the
//! excursions inside a ride are its detour. Each shared ride gets substitute
//! single rides from the same pickup replaying the direct moves plus an
//! out-and-back of their own, so the median substitute distance is known.
//! Shared-ride OD pairs are unique, so no other ride contaminates a median.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::emissions::CopertParams;
use crate::error::{Error, Result};
use crate::features::TripRecord;
use crate::geo::{study_area, GeoPoint, GridSpec, EARTH_RADIUS_M};
use crate::ingest::{GpsFix, RideOrder};
use crate::matching::OdKey;

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedProfile {
    Constant {
        kmh: f64,
    },
    /// Each trip family (a pool trip with its substitutes, or one single ride)
    /// draws one constant speed uniformly from `[min_kmh, max_kmh]`.
    PerTrip {
        min_kmh: f64,
        max_kmh: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolCounts {
    pub nsr2: usize,
    pub nsr3: usize,
    pub nsr4: usize,
}

/// Records planted to violate one ingest or trip filter each.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Anomalies {
    /// Orders lasting 30 s.
    pub too_short: usize,
    /// Orders lasting 7300 s.
    pub too_long: usize,
    /// Orders picked up west of the study area (no fixes).
    pub out_of_region: usize,
    /// Single rides with one fix displaced 2 km; drops two segments by distance.
    pub drift: usize,
    /// Single rides missing 29 consecutive fixes; drops one 90 s segment by time.
    pub gaps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdCluster {
    pub rides: usize,
    /// Distances are symmetric around this value, rounded to whole steps.
    pub center_m: f64,
    pub spread_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub grid: GridSpec,
    /// Background single rides, including any drift/gap anomalies.
    pub single_rides: usize,
    pub pool_trips: PoolCounts,
    pub substitutes_per_ride: usize,
    pub speed: SpeedProfile,
    pub sampling_interval_s: i64,
    /// Trip start times are drawn from `[from, to)`, Unix seconds.
    pub start_window: [i64; 2],
    pub single_ride_time_s: [i64; 2],
    /// Time between consecutive pickups of a pool trip.
    pub pickup_gap_s: [i64; 2],
    /// Time ride k is still on board after ride k+1 is picked up.
    pub overlap_s: [i64; 2],
    /// Time the last ride continues after every other ride is dropped off.
    pub tail_s: [i64; 2],
    /// Chance that an event interval carries an excursion.
    pub detour_probability: f64,
    /// Excursion share of an event interval's time.
    pub detour_fraction: [f64; 2],
    /// One-way duration of the middle substitute's extra out-and-back.
    pub substitute_extra_s: [i64; 2],
    /// Step between the extras of consecutive substitutes, seconds one way.
    pub substitute_spread_s: i64,
    pub od_cluster: Option<OdCluster>,
    pub anomalies: Anomalies,
    /// Routes stay this far inside the grid boundary.
    pub margin_m: f64,
}

/// 2016-11-01 00:00 at UTC+8.
pub const DEFAULT_WINDOW_START: i64 = 1_477_929_600;

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 42,
            grid: study_area(),
            single_rides: 1100,
            pool_trips: PoolCounts { nsr2: 700, nsr3: 200, nsr4: 50 },
            substitutes_per_ride: 3,
            speed: SpeedProfile::PerTrip { min_kmh: 15.0, max_kmh: 45.0 },
            sampling_interval_s: 3,
            start_window: [DEFAULT_WINDOW_START, DEFAULT_WINDOW_START + 7 * 86_400],
            single_ride_time_s: [180, 900],
            pickup_gap_s: [60, 240],
            overlap_s: [30, 480],
            tail_s: [60, 240],
            detour_probability: 0.5,
            detour_fraction: [0.1, 0.6],
            substitute_extra_s: [0, 120],
            substitute_spread_s: 30,
            od_cluster: Some(OdCluster { rides: 100, center_m: 5000.0, spread_m: 1000.0 }),
            anomalies: Anomalies { too_short: 10, too_long: 10, out_of_region: 10, drift: 10, gaps: 10 },
            margin_m: 100.0,
        }
    }
}

impl ScenarioSpec {
    /// A scenario with no rides at all; a starting point for targeted tests.
    pub fn empty(seed: u64) -> Self {
        ScenarioSpec {
            seed,
            single_rides: 0,
            pool_trips: PoolCounts::default(),
            od_cluster: None,
            anomalies: Anomalies::default(),
            ..Default::default()
        }
    }

    pub fn validate(&self, params: &CopertParams) -> Result<()> {
        let infeasible = |m: String| Err(Error::Infeasible(m));
        self.grid.validate()?;
        if self.sampling_interval_s < 1 {
            return infeasible(format!("sampling interval must be ≥ 1 s, got {}", self.sampling_interval_s));
        }
        if self.substitutes_per_ride == 0 && self.n_pools() > 0 {
            return infeasible("pool trips need at least one substitute per shared ride".into());
        }
        let (lo, hi) = match self.speed {
            SpeedProfile::Constant { kmh } => (kmh, kmh),
            SpeedProfile::PerTrip { min_kmh, max_kmh } => (min_kmh, max_kmh),
        };
        if !(params.v_min <= lo && lo <= hi && hi <= params.v_max) {
            return infeasible(format!("speeds [{lo}, {hi}] km/h must lie within the emission clamp [{}, {}]", params.v_min, params.v_max));
        }
        let dt = self.sampling_interval_s;
        for (name, r) in [
            ("start_window", self.start_window),
            ("single_ride_time_s", self.single_ride_time_s),
            ("pickup_gap_s", self.pickup_gap_s),
            ("overlap_s", self.overlap_s),
            ("tail_s", self.tail_s),
            ("substitute_extra_s", self.substitute_extra_s),
        ] {
            if r[0] > r[1] {
                return infeasible(format!("{name}: empty range [{}, {}]", r[0], r[1]));
            }
        }
        for (name, r) in [
            ("single_ride_time_s", self.single_ride_time_s),
            ("pickup_gap_s", self.pickup_gap_s),
            ("overlap_s", self.overlap_s),
            ("tail_s", self.tail_s),
        ] {
            if r[1] < dt {
                return infeasible(format!("{name}: upper bound {} is shorter than one sampling interval", r[1]));
            }
        }
        if self.anomalies.gaps > 0 && self.single_ride_time_s[0] < 40 * dt {
            return infeasible("gap anomalies need single rides of at least 40 sampling intervals".into());
        }
        if self.anomalies.drift + self.anomalies.gaps > self.single_rides {
            return infeasible("more drift/gap anomalies than single rides".into());
        }
        let f = self.detour_fraction;
        if !(0.0 <= f[0] && f[0] <= f[1] && f[1] < 1.0) {
            return infeasible(format!("detour fraction {f:?} must satisfy 0 ≤ min ≤ max < 1: a detour cannot fill its interval"));
        }
        if !(0.0..=1.0).contains(&self.detour_probability) {
            return infeasible(format!("detour probability {} outside [0, 1]", self.detour_probability));
        }
        if self.substitute_spread_s < 0 || self.margin_m < 0.0 {
            return infeasible("substitute spread and margin must be non-negative".into());
        }
        if let Some(c) = self.od_cluster {
            if !(c.center_m > c.spread_m && c.spread_m >= 0.0) {
                return infeasible(format!("cluster spread {} must be below its center {}", c.spread_m, c.center_m));
            }
            let (w, _) = self.inner_extent();
            if c.center_m + c.spread_m > w {
                return infeasible(format!("cluster rides up to {} m do not fit the {w:.0} m wide area", c.center_m + c.spread_m));
            }
        }
        Ok(())
    }

    fn n_pools(&self) -> usize {
        self.pool_trips.nsr2 + self.pool_trips.nsr3 + self.pool_trips.nsr4
    }

    fn inner_extent(&self) -> (f64, f64) {
        let b = self.grid.bbox();
        (b.width_m() - 2.0 * self.margin_m, b.height_m() - 2.0 * self.margin_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    N,
    S,
    E,
    W,
}

impl Dir {
    const ALL: [Dir; 4] = [Dir::N, Dir::S, Dir::E, Dir::W];

    fn perpendicular(self) -> [Dir; 2] {
        match self {
            Dir::N | Dir::S => [Dir::E, Dir::W],
            Dir::E | Dir::W => [Dir::N, Dir::S],
        }
    }

    fn reverse(self) -> Dir {
        match self {
            Dir::N => Dir::S,
            Dir::S => Dir::N,
            Dir::E => Dir::W,
            Dir::W => Dir::E,
        }
    }
}

/// Moves `d` meters; the haversine distance between input and output is `d`.
fn step(p: GeoPoint, dir: Dir, d: f64) -> GeoPoint {
    let dlat = (d / EARTH_RADIUS_M).to_degrees();
    let dlon = || (2.0 * ((d / (2.0 * EARTH_RADIUS_M)).sin() / p.lat.to_radians().cos()).asin()).to_degrees();
    match dir {
        Dir::N => GeoPoint { lat: p.lat + dlat, ..p },
        Dir::S => GeoPoint { lat: p.lat - dlat, ..p },
        Dir::E => GeoPoint { lon: p.lon + dlon(), ..p },
        Dir::W => GeoPoint { lon: p.lon - dlon(), ..p },
    }
}

fn walk(start: GeoPoint, moves: &[Dir], d: f64) -> Vec<GeoPoint> {
    let mut out = Vec::with_capacity(moves.len() + 1);
    out.push(start);
    let mut p = start;
    for &m in moves {
        p = step(p, m, d);
        out.push(p);
    }
    out
}

/// Ground truth of one shared ride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedRideTruth {
    pub order_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    /// Distance driven while this ride is on board, meters.
    pub actual_distance_m: f64,
    /// Excursion distance inside this ride, meters.
    pub excursion_m: f64,
    pub substitute_ids: Vec<String>,
    pub substitute_distances_m: Vec<f64>,
    pub median_substitute_m: f64,
    pub median_substitute_emission_g: f64,
    /// actual − median substitute distance, meters.
    pub detour_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolTruth {
    pub trip_id: String,
    pub driver_id: String,
    pub nsr: usize,
    pub start_ts: i64,
    pub speed_kmh: f64,
    pub trip_time_s: f64,
    pub trip_distance_m: f64,
    pub overlap_time_s: f64,
    pub overlap_distance_m: f64,
    pub detour_distance_m: f64,
    pub emission_g: f64,
    pub saved_distance_m: f64,
    pub emission_reduction_g: f64,
    pub rides: Vec<SharedRideTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleKind {
    Background,
    Substitute,
    Cluster,
    Drift,
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleTruth {
    pub order_id: String,
    pub kind: SingleKind,
    pub speed_kmh: f64,
    pub trip_time_s: f64,
    /// Distance actually driven, meters; equals the calibrated trip distance.
    pub trip_distance_m: f64,
    /// Trajectory time after segment filtering, seconds.
    pub surviving_time_s: f64,
    pub emission_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTruth {
    pub key: OdKey,
    pub distances_m: Vec<f64>,
    pub median_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnomalyTruth {
    pub too_short: Vec<String>,
    pub too_long: Vec<String>,
    pub out_of_region: Vec<String>,
    pub drift: Vec<String>,
    pub gaps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub sampling_interval_s: i64,
    pub pools: Vec<PoolTruth>,
    pub singles: Vec<SingleTruth>,
    pub cluster: Option<ClusterTruth>,
    pub anomalies: AnomalyTruth,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub orders: Vec<RideOrder>,
    pub fixes: Vec<GpsFix>,
    pub truth: GroundTruth,
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

struct Generator<'a> {
    spec: &'a ScenarioSpec,
    params: &'a CopertParams,
    rng: ChaCha8Rng,
    dt: i64,
    inner: (f64, f64, f64, f64),
    reserved: HashSet<OdKey>,
    orders: Vec<RideOrder>,
    fixes: Vec<GpsFix>,
    next_driver: usize,
}

/// Plan of one pool trip in step units (one step per sampling interval).
struct PoolPlan {
    intervals: Vec<(usize, usize)>,
    positions: Vec<GeoPoint>,
    /// Direction of each step and whether it is direct progress.
    moves: Vec<(Dir, bool)>,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a ScenarioSpec, params: &'a CopertParams) -> Self {
        let b = spec.grid.bbox();
        let mid_lat = ((b.min_lat + b.max_lat) / 2.0).to_radians();
        let dlat = (spec.margin_m / EARTH_RADIUS_M).to_degrees();
        let dlon = (spec.margin_m / (EARTH_RADIUS_M * mid_lat.cos())).to_degrees();
        Generator {
            spec,
            params,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            dt: spec.sampling_interval_s,
            inner: (b.min_lon + dlon, b.min_lat + dlat, b.max_lon - dlon, b.max_lat - dlat),
            reserved: HashSet::new(),
            orders: Vec::new(),
            fixes: Vec::new(),
            next_driver: 0,
        }
    }

    fn inside(&self, p: GeoPoint) -> bool {
        let (x0, y0, x1, y1) = self.inner;
        x0 <= p.lon && p.lon <= x1 && y0 <= p.lat && p.lat <= y1
    }

    fn random_point(&mut self) -> GeoPoint {
        let (x0, y0, x1, y1) = self.inner;
        GeoPoint { lon: self.rng.random_range(x0..=x1), lat: self.rng.random_range(y0..=y1) }
    }

    fn speed(&mut self) -> f64 {
        match self.spec.speed {
            SpeedProfile::Constant { kmh } => kmh,
            SpeedProfile::PerTrip { min_kmh, max_kmh } => self.rng.random_range(min_kmh..=max_kmh),
        }
    }

    /// Whole sampling intervals within `range` seconds, at least `floor`.
    fn steps_at_least(&mut self, range: [i64; 2], floor: i64) -> usize {
        let lo = ((range[0] + self.dt - 1) / self.dt).max(floor);
        let hi = (range[1] / self.dt).max(lo);
        self.rng.random_range(lo..=hi) as usize
    }

    fn steps_in(&mut self, range: [i64; 2]) -> usize {
        self.steps_at_least(range, 1)
    }

    fn start_ts(&mut self) -> i64 {
        let [a, b] = self.spec.start_window;
        if a == b {
            a
        } else {
            self.rng.random_range(a..b)
        }
    }

    fn driver(&mut self) -> String {
        self.next_driver += 1;
        format!("drv{:06}", self.next_driver)
    }

    fn key(&self, a: GeoPoint, b: GeoPoint) -> Result<OdKey> {
        Ok(OdKey { origin: self.spec.grid.assign(a)?, destination: self.spec.grid.assign(b)? })
    }

    fn emit(&mut self, order_id: &str, driver: &str, start_ts: i64, positions: &[GeoPoint], dropoff: GeoPoint) {
        let n = positions.len() as i64;
        self.orders.push(RideOrder {
            order_id: order_id.to_owned(),
            start_ts,
            end_ts: start_ts + (n - 1) * self.dt,
            pickup: positions[0],
            dropoff,
        });
        self.fixes.extend(positions.iter().enumerate().map(|(i, &pos)| GpsFix {
            driver_id: driver.to_owned(),
            order_id: order_id.to_owned(),
            ts: start_ts + i as i64 * self.dt,
            pos,
        }));
    }

    /// Moves for `base` direct steps plus an optional `x`-step out-and-back,
    /// staying inside the margin; `None` if no heading fits.
    fn leg(&mut self, from: GeoPoint, base: usize, x: usize, d: f64) -> Option<Vec<(Dir, bool)>> {
        let mut dirs = Dir::ALL;
        dirs.shuffle(&mut self.rng);
        for dir in dirs {
            let mut sides = dir.perpendicular();
            sides.shuffle(&mut self.rng);
            for side in sides {
                let mut moves: Vec<(Dir, bool)> = vec![(dir, true); base];
                moves.extend(std::iter::repeat_n((side, false), x));
                moves.extend(std::iter::repeat_n((side.reverse(), false), x));
                let dirs: Vec<Dir> = moves.iter().map(|m| m.0).collect();
                if walk(from, &dirs, d).iter().all(|&p| self.inside(p)) {
                    return Some(moves);
                }
                if x == 0 {
                    break;
                }
            }
        }
        None
    }

    fn plan_pool(&mut self, nsr: usize, d: f64) -> Option<PoolPlan> {
        let mut starts = vec![0usize];
        for _ in 1..nsr {
            let g = self.steps_in(self.spec.pickup_gap_s);
            starts.push(starts.last().unwrap() + g);
        }
        let mut ends = Vec::with_capacity(nsr);
        for k in 0..nsr - 1 {
            let ov = self.steps_in(self.spec.overlap_s);
            ends.push(starts[k + 1] + ov);
        }
        let tail = self.steps_in(self.spec.tail_s);
        let last_start = starts[nsr - 1];
        ends.push(ends.iter().copied().max().unwrap_or(last_start).max(last_start) + tail);
        let intervals: Vec<(usize, usize)> = starts.iter().copied().zip(ends.iter().copied()).collect();

        let mut events: Vec<usize> = starts.iter().chain(&ends).copied().collect();
        events.sort_unstable();
        events.dedup();

        let start = self.random_point();
        let mut moves: Vec<(Dir, bool)> = Vec::new();
        let mut pos = start;
        for w in events.windows(2) {
            let len = w[1] - w[0];
            let x = if self.rng.random_bool(self.spec.detour_probability) {
                let [f0, f1] = self.spec.detour_fraction;
                let f = self.rng.random_range(f0..=f1);
                ((f * len as f64) / 2.0).floor() as usize
            } else {
                0
            };
            let x = x.min((len - 1) / 2);
            let leg = self.leg(pos, len - 2 * x, x, d)?;
            let dirs: Vec<Dir> = leg.iter().map(|m| m.0).collect();
            pos = *walk(pos, &dirs, d).last().unwrap();
            moves.extend(leg);
        }
        let dirs: Vec<Dir> = moves.iter().map(|m| m.0).collect();
        let positions = walk(start, &dirs, d);
        Some(PoolPlan { intervals, positions, moves })
    }

    fn pool_trip(&mut self, index: usize, nsr: usize) -> Result<PoolTruth> {
        for _ in 0..MAX_ATTEMPTS {
            let speed = self.speed();
            let d = speed / 3.6 * self.dt as f64;
            let Some(plan) = self.plan_pool(nsr, d) else { continue };
            let keys: Vec<OdKey> =
                plan.intervals.iter().map(|&(s, e)| self.key(plan.positions[s], plan.positions[e])).collect::<Result<_>>()?;
            let distinct: HashSet<OdKey> = keys.iter().copied().collect();
            if distinct.len() < keys.len() || keys.iter().any(|k| self.reserved.contains(k)) {
                continue;
            }
            self.reserved.extend(keys);
            return Ok(self.emit_pool(index, speed, d, &plan));
        }
        Err(Error::Infeasible(format!(
            "no route for an NSR {nsr} pool trip with unique OD pairs inside the area after {MAX_ATTEMPTS} attempts"
        )))
    }

    fn emit_pool(&mut self, index: usize, speed: f64, d: f64, plan: &PoolPlan) -> PoolTruth {
        let ef = self.params.emission_factor(speed);
        let dt = self.dt as f64;
        let t0 = self.start_ts();
        let driver = self.driver();
        let n_steps = plan.moves.len();

        // coverage per step, counted directly
        let shared_steps = (0..n_steps).filter(|&j| plan.intervals.iter().filter(|&&(s, e)| s <= j && j < e).count() >= 2).count();

        let mut rides = Vec::new();
        for (k, &(s, e)) in plan.intervals.iter().enumerate() {
            let order_id = format!("p{index:05}-{k}");
            self.emit(&order_id, &driver, t0 + (s as i64) * self.dt, &plan.positions[s..=e], plan.positions[e]);
            let direct: Vec<Dir> = plan.moves[s..e].iter().filter(|m| m.1).map(|m| m.0).collect();
            let excursion_steps = (e - s) - direct.len();

            let m = self.spec.substitutes_per_ride as i64;
            let mid = self.steps_at_least(self.spec.substitute_extra_s, 0) as i64;
            let spread = self.spec.substitute_spread_s / self.dt;
            let mut sub_ids = Vec::new();
            let mut sub_d = Vec::new();
            for j in 0..m {
                let extra = (mid + (2 * j - (m - 1)) * spread / 2).max(0) as usize;
                let up = if self.rng.random_bool(0.5) { Dir::N } else { Dir::S };
                let mut moves = vec![up; extra];
                moves.extend(std::iter::repeat_n(up.reverse(), extra));
                moves.extend(&direct);
                let positions = walk(plan.positions[s], &moves, d);
                let sub_id = format!("s{index:05}-{k}-{j}");
                let sub_driver = self.driver();
                let st = self.start_ts();
                self.emit(&sub_id, &sub_driver, st, &positions, plan.positions[e]);
                sub_ids.push(sub_id);
                sub_d.push(moves.len() as f64 * d);
            }
            let median = median_of(&sub_d);
            let actual = (e - s) as f64 * d;
            rides.push(SharedRideTruth {
                order_id,
                start_ts: t0 + (s as i64) * self.dt,
                end_ts: t0 + (e as i64) * self.dt,
                actual_distance_m: actual,
                excursion_m: excursion_steps as f64 * d,
                substitute_ids: sub_ids,
                substitute_distances_m: sub_d,
                median_substitute_m: median,
                median_substitute_emission_g: ef * median / 1000.0,
                detour_m: actual - median,
            });
        }
        let trip_distance = n_steps as f64 * d;
        let emission = ef * trip_distance / 1000.0;
        let sum_median: f64 = rides.iter().map(|r| r.median_substitute_m).sum();
        let sum_median_e: f64 = rides.iter().map(|r| r.median_substitute_emission_g).sum();
        PoolTruth {
            trip_id: rides[0].order_id.clone(),
            driver_id: driver,
            nsr: rides.len(),
            start_ts: t0,
            speed_kmh: speed,
            trip_time_s: n_steps as f64 * dt,
            trip_distance_m: trip_distance,
            overlap_time_s: shared_steps as f64 * dt,
            overlap_distance_m: shared_steps as f64 * d,
            detour_distance_m: rides.iter().map(|r| r.detour_m).sum(),
            emission_g: emission,
            saved_distance_m: sum_median - trip_distance,
            emission_reduction_g: sum_median_e - emission,
            rides,
        }
    }

    /// Random walk of `n` steps in up to four legs, inside the margin, whose
    /// OD pair is not reserved.
    fn single_route(&mut self, n: usize, d: f64) -> Result<Vec<GeoPoint>> {
        'attempt: for _ in 0..MAX_ATTEMPTS {
            let start = self.random_point();
            let legs = self.rng.random_range(1..=4usize).min(n);
            let mut cuts: Vec<usize> = (0..legs - 1).map(|_| self.rng.random_range(1..n)).collect();
            cuts.push(0);
            cuts.push(n);
            cuts.sort_unstable();
            let mut moves = Vec::with_capacity(n);
            let mut pos = start;
            for w in cuts.windows(2) {
                let Some(leg) = self.leg(pos, w[1] - w[0], 0, d) else { continue 'attempt };
                let dirs: Vec<Dir> = leg.iter().map(|m| m.0).collect();
                pos = *walk(pos, &dirs, d).last().unwrap();
                moves.extend(dirs);
            }
            let positions = walk(start, &moves, d);
            if self.reserved.contains(&self.key(start, pos)?) {
                continue;
            }
            return Ok(positions);
        }
        Err(Error::Infeasible(format!("no {n}-step single ride fits inside the area after {MAX_ATTEMPTS} attempts")))
    }

    fn single_ride(&mut self, index: usize, kind: SingleKind) -> Result<SingleTruth> {
        let speed = self.speed();
        let d = speed / 3.6 * self.dt as f64;
        let n = self.steps_in(self.spec.single_ride_time_s);
        let mut positions = self.single_route(n, d)?;
        let order_id = format!("b{index:05}");
        let driver = self.driver();
        let t0 = self.start_ts();
        let dropoff = *positions.last().unwrap();
        let dt = self.dt as f64;
        let mut surviving = n as f64 * dt;
        let mut removed: Option<(usize, usize)> = None;
        match kind {
            SingleKind::Drift => {
                let i = n / 2;
                let far = 2000.0;
                let p = step(positions[i], Dir::N, far);
                positions[i] = if self.inside(p) { p } else { step(positions[i], Dir::S, far) };
                surviving -= 2.0 * dt;
            }
            SingleKind::Gap => {
                let i = n / 2 - 15;
                removed = Some((i + 1, i + 30));
                surviving -= 30.0 * dt;
            }
            _ => {}
        }
        self.emit(&order_id, &driver, t0, &positions, dropoff);
        if let Some((a, b)) = removed {
            let first = self.fixes.len() - positions.len();
            self.fixes.drain(first + a..first + b);
        }
        let trip_distance = n as f64 * d;
        Ok(SingleTruth {
            order_id,
            kind,
            speed_kmh: speed,
            trip_time_s: n as f64 * dt,
            trip_distance_m: trip_distance,
            surviving_time_s: surviving,
            emission_g: self.params.emission_factor(speed) * trip_distance / 1000.0,
        })
    }

    fn cluster(&mut self, c: OdCluster) -> Result<(ClusterTruth, Vec<SingleTruth>)> {
        let speed = self.speed();
        let d = speed / 3.6 * self.dt as f64;
        let center = (c.center_m / d).round() as i64;
        let spread = (c.spread_m / d).floor() as i64;
        let half: Vec<i64> = (0..c.rides / 2).map(|_| self.rng.random_range(0..=spread)).collect();
        let mut steps: Vec<i64> = half.iter().flat_map(|&o| [center - o, center + o]).collect();
        if c.rides % 2 == 1 {
            steps.push(center);
        }
        let (x0, y0, x1, y1) = self.inner;
        let longest = steps.iter().copied().max().unwrap_or(center) as usize;
        let mut key = None;
        for _ in 0..MAX_ATTEMPTS {
            let lat = self.rng.random_range(y0..=y1);
            let start = GeoPoint { lon: x0, lat };
            let end = walk(start, &vec![Dir::E; center as usize], d)[center as usize];
            let far = walk(start, &vec![Dir::E; longest], d)[longest];
            if far.lon > x1 {
                continue;
            }
            let k = self.key(start, end)?;
            if !self.reserved.contains(&k) {
                key = Some((k, start, end));
                break;
            }
        }
        let Some((key, start, end)) = key else {
            return Err(Error::Infeasible("no free OD pair for the cluster rides".into()));
        };
        self.reserved.insert(key);
        let ef = self.params.emission_factor(speed);
        let mut singles = Vec::new();
        for (i, &n) in steps.iter().enumerate() {
            let positions = walk(start, &vec![Dir::E; n as usize], d);
            let order_id = format!("c{i:05}");
            let driver = self.driver();
            let t0 = self.start_ts();
            self.emit(&order_id, &driver, t0, &positions, end);
            let td = n as f64 * d;
            singles.push(SingleTruth {
                order_id,
                kind: SingleKind::Cluster,
                speed_kmh: speed,
                trip_time_s: n as f64 * self.dt as f64,
                trip_distance_m: td,
                surviving_time_s: n as f64 * self.dt as f64,
                emission_g: ef * td / 1000.0,
            });
        }
        let distances: Vec<f64> = steps.iter().map(|&n| n as f64 * d).collect();
        let median = median_of(&distances);
        Ok((ClusterTruth { key, distances_m: distances, median_m: median }, singles))
    }

    fn anomalies(&mut self) -> AnomalyTruth {
        let a = self.spec.anomalies;
        let mut truth = AnomalyTruth::default();
        for (i, (count, secs)) in [(a.too_short, 30i64), (a.too_long, 7300)].into_iter().enumerate() {
            for j in 0..count {
                let order_id = format!("x{i}{j:04}");
                let driver = self.driver();
                let t0 = self.start_ts();
                let p = self.random_point();
                let n = (secs / self.dt) as usize;
                let positions = vec![p; n + 1];
                self.emit(&order_id, &driver, t0, &positions, p);
                self.orders.last_mut().unwrap().end_ts = t0 + secs;
                if i == 0 { &mut truth.too_short } else { &mut truth.too_long }.push(order_id);
            }
        }
        for j in 0..a.out_of_region {
            let order_id = format!("x2{j:04}");
            let t0 = self.start_ts();
            let b = self.spec.grid.bbox();
            let p = GeoPoint { lon: b.min_lon - 0.01, lat: (b.min_lat + b.max_lat) / 2.0 };
            self.orders.push(RideOrder { order_id: order_id.clone(), start_ts: t0, end_ts: t0 + 600, pickup: p, dropoff: p });
            truth.out_of_region.push(order_id);
        }
        truth
    }
}

/// Generates orders, fixes and ground truth. Output depends only on `spec`
/// and `params`.
pub fn generate(spec: &ScenarioSpec, params: &CopertParams) -> Result<Scenario> {
    spec.validate(params)?;
    let mut g = Generator::new(spec, params);
    let mut pools = Vec::new();
    let counts = [(2, spec.pool_trips.nsr2), (3, spec.pool_trips.nsr3), (4, spec.pool_trips.nsr4)];
    for (nsr, count) in counts {
        for _ in 0..count {
            let t = g.pool_trip(pools.len(), nsr)?;
            pools.push(t);
        }
    }
    let mut singles = Vec::new();
    for pool in &pools {
        let v = pool.speed_kmh / 3.6;
        let ef = params.emission_factor(pool.speed_kmh);
        for r in &pool.rides {
            for (id, &d) in r.substitute_ids.iter().zip(&r.substitute_distances_m) {
                singles.push(SingleTruth {
                    order_id: id.clone(),
                    kind: SingleKind::Substitute,
                    speed_kmh: pool.speed_kmh,
                    trip_time_s: d / v,
                    trip_distance_m: d,
                    surviving_time_s: d / v,
                    emission_g: ef * d / 1000.0,
                });
            }
        }
    }
    let cluster = match spec.od_cluster {
        Some(c) => {
            let (truth, rides) = g.cluster(c)?;
            singles.extend(rides);
            Some(truth)
        }
        None => None,
    };
    let mut anomalies = AnomalyTruth::default();
    for i in 0..spec.single_rides {
        let kind = if i < spec.anomalies.drift {
            SingleKind::Drift
        } else if i < spec.anomalies.drift + spec.anomalies.gaps {
            SingleKind::Gap
        } else {
            SingleKind::Background
        };
        let s = g.single_ride(i, kind)?;
        match kind {
            SingleKind::Drift => anomalies.drift.push(s.order_id.clone()),
            SingleKind::Gap => anomalies.gaps.push(s.order_id.clone()),
            _ => {}
        }
        singles.push(s);
    }
    let planted = g.anomalies();
    anomalies.too_short = planted.too_short;
    anomalies.too_long = planted.too_long;
    anomalies.out_of_region = planted.out_of_region;
    let truth = GroundTruth { seed: spec.seed, sampling_interval_s: spec.sampling_interval_s, pools, singles, cluster, anomalies };
    Ok(Scenario { orders: g.orders, fixes: g.fixes, truth })
}

/// The known ERR response used by [`regression_records`]. Inputs are read
/// from the eight regressor fields of `r`.
pub fn err_truth(r: &TripRecord) -> f64 {
    let speed = 10.0 * ((r.avg_speed_kmh - 25.0) / 10.0).tanh();
    20.0 + 60.0 * r.overlap_rate - 100.0 * r.detour_rate - 10.0 * f64::from(r.peak_hours) * r.overlap_rate
        + 6.0 * f64::from(u8::from(r.nsr == 3))
        + speed
        + 2.0 * r.actual_trip_distance_km.ln()
        + 15.0 * r.ride_distance_ratio
        - r.ride_distance_gap_km
}

/// `n` records with regressors drawn over plausible ranges and
/// `err_g_per_km = err_truth + N(0, sigma²)`. The remaining fields are filled
/// consistently with the regressors.
pub fn regression_records(n: usize, sigma: f64, seed: u64) -> Vec<TripRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    (0..n)
        .map(|i| {
            let overlap_rate = rng.random_range(0.2..1.0);
            let detour_rate = rng.random_range(-0.3..0.6);
            let nsr = if rng.random_bool(0.8) { 2 } else { 3 };
            let peak_hours = u8::from(rng.random_bool(0.3));
            let avg_speed_kmh = rng.random_range(10.0..50.0);
            let td = rng.random_range(2.0..20.0);
            let ratio: f64 = rng.random_range(0.2..1.0);
            let gap: f64 = rng.random_range(0.0..10.0);
            let max = gap / (1.0 - ratio).max(1e-9);
            let min = max * ratio;
            let mut r = TripRecord {
                trip_id: format!("r{i:06}"),
                saved_distance_km: 0.0,
                emission_reduction_g: 0.0,
                erp_pct: 0.0,
                err_g_per_km: 0.0,
                overlap_distance_km: overlap_rate * td,
                overlap_rate,
                detour_distance_km: detour_rate * td,
                detour_rate,
                nsr,
                peak_hours,
                avg_speed_kmh,
                actual_trip_distance_km: td,
                min_ride_distance_km: min,
                max_ride_distance_km: max,
                total_ride_distance_km: min + max,
                ride_distance_gap_km: gap,
                ride_distance_ratio: ratio,
            };
            r.err_g_per_km = err_truth(&r) + noise.sample(&mut rng);
            r.emission_reduction_g = r.err_g_per_km * td;
            r
        })
        .collect()
}
