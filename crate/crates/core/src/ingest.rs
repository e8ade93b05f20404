//! Ride-order and GPS-fix tables.
//!
//! Column layouts:
//!
//! ```text
//! orders: order_id, start_ts, end_ts, pickup_lon, pickup_lat, dropoff_lon, dropoff_lat
//! fixes:  driver_id, order_id, ts, lon, lat
//! ```
//!
//! Timestamps are integer Unix seconds. A row that does not parse, or that
//! violates a record invariant, is counted as malformed and skipped; a source
//! where more than half of the rows are malformed is rejected outright.

use std::collections::HashSet;
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, WriterBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, GridSpec};

pub const ORDER_COLUMNS: [&str; 7] = ["order_id", "start_ts", "end_ts", "pickup_lon", "pickup_lat", "dropoff_lon", "dropoff_lat"];
pub const FIX_COLUMNS: [&str; 5] = ["driver_id", "order_id", "ts", "lon", "lat"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideOrder {
    pub order_id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    pub pickup: GeoPoint,
    pub dropoff: GeoPoint,
}

impl RideOrder {
    /// Order-derived trip time in seconds.
    pub fn trip_time(&self) -> i64 {
        self.end_ts - self.start_ts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub driver_id: String,
    pub order_id: String,
    pub ts: i64,
    pub pos: GeoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableFormat {
    pub delimiter: char,
    pub has_header: bool,
}

impl Default for TableFormat {
    fn default() -> Self {
        TableFormat { delimiter: ',', has_header: true }
    }
}

impl TableFormat {
    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter).map_err(|_| Error::InvalidInput(format!("delimiter {:?} is not a single byte", self.delimiter)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub total_rows: usize,
    pub malformed: usize,
}

fn parse_table<R, T, F>(source: R, format: &TableFormat, parse_row: F) -> Result<Parsed<T>>
where
    R: Read,
    F: Fn(&StringRecord) -> Option<T>,
{
    let mut reader =
        ReaderBuilder::new().delimiter(format.delimiter_byte()?).has_headers(format.has_header).flexible(true).from_reader(source);
    let mut records = Vec::new();
    let (mut total_rows, mut malformed) = (0usize, 0usize);
    let mut row = StringRecord::new();
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                total_rows += 1;
                match parse_row(&row) {
                    Some(rec) => records.push(rec),
                    None => malformed += 1,
                }
            }
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
            Err(_) => {
                total_rows += 1;
                malformed += 1;
            }
        }
    }
    if malformed * 2 > total_rows {
        return Err(Error::Format { malformed, total: total_rows });
    }
    Ok(Parsed { records, total_rows, malformed })
}

fn field_str(row: &StringRecord, i: usize) -> Option<&str> {
    row.get(i).map(str::trim).filter(|s| !s.is_empty())
}

fn field_ts(row: &StringRecord, i: usize) -> Option<i64> {
    field_str(row, i)?.parse().ok()
}

fn field_point(row: &StringRecord, lon: usize, lat: usize) -> Option<GeoPoint> {
    let p = GeoPoint { lon: field_str(row, lon)?.parse().ok()?, lat: field_str(row, lat)?.parse().ok()? };
    p.is_valid().then_some(p)
}

fn parse_order_row(row: &StringRecord) -> Option<RideOrder> {
    if row.len() != ORDER_COLUMNS.len() {
        return None;
    }
    let order = RideOrder {
        order_id: field_str(row, 0)?.to_owned(),
        start_ts: field_ts(row, 1)?,
        end_ts: field_ts(row, 2)?,
        pickup: field_point(row, 3, 4)?,
        dropoff: field_point(row, 5, 6)?,
    };
    (order.start_ts < order.end_ts).then_some(order)
}

fn parse_fix_row(row: &StringRecord) -> Option<GpsFix> {
    if row.len() != FIX_COLUMNS.len() {
        return None;
    }
    Some(GpsFix {
        driver_id: field_str(row, 0)?.to_owned(),
        order_id: field_str(row, 1)?.to_owned(),
        ts: field_ts(row, 2)?,
        pos: field_point(row, 3, 4)?,
    })
}

pub fn parse_orders<R: Read>(source: R, format: &TableFormat) -> Result<Parsed<RideOrder>> {
    parse_table(source, format, parse_order_row)
}

pub fn parse_fixes<R: Read>(source: R, format: &TableFormat) -> Result<Parsed<GpsFix>> {
    parse_table(source, format, parse_fix_row)
}

fn writer<W: Write>(sink: W, format: &TableFormat) -> Result<csv::Writer<W>> {
    Ok(WriterBuilder::new().delimiter(format.delimiter_byte()?).from_writer(sink))
}

pub fn write_orders<W: Write>(sink: W, orders: &[RideOrder], format: &TableFormat) -> Result<()> {
    let mut w = writer(sink, format)?;
    if format.has_header {
        w.write_record(ORDER_COLUMNS)?;
    }
    for o in orders {
        w.write_record([
            o.order_id.clone(),
            o.start_ts.to_string(),
            o.end_ts.to_string(),
            o.pickup.lon.to_string(),
            o.pickup.lat.to_string(),
            o.dropoff.lon.to_string(),
            o.dropoff.lat.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fixes<W: Write>(sink: W, fixes: &[GpsFix], format: &TableFormat) -> Result<()> {
    let mut w = writer(sink, format)?;
    if format.has_header {
        w.write_record(FIX_COLUMNS)?;
    }
    for f in fixes {
        w.write_record([f.driver_id.as_str(), f.order_id.as_str(), &f.ts.to_string(), &f.pos.lon.to_string(), &f.pos.lat.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderLimits {
    pub min_trip_time_s: i64,
    pub max_trip_time_s: i64,
}

impl Default for OrderLimits {
    fn default() -> Self {
        OrderLimits { min_trip_time_s: 60, max_trip_time_s: 7200 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderDropReport {
    pub input: usize,
    pub kept: usize,
    pub too_short: usize,
    pub too_long: usize,
    pub out_of_region: usize,
}

impl OrderDropReport {
    pub fn dropped(&self) -> usize {
        self.too_short + self.too_long + self.out_of_region
    }
}

/// Keeps orders whose trip time lies in the limits and whose endpoints both
/// fall inside the grid. Reasons are checked in the order: too short, too
/// long, out of region.
pub fn filter_orders(orders: Vec<RideOrder>, spec: &GridSpec, limits: &OrderLimits) -> (Vec<RideOrder>, OrderDropReport) {
    let mut report = OrderDropReport { input: orders.len(), ..Default::default() };
    let kept: Vec<RideOrder> = orders
        .into_iter()
        .filter(|o| {
            let tt = o.trip_time();
            if tt < limits.min_trip_time_s {
                report.too_short += 1;
                false
            } else if tt > limits.max_trip_time_s {
                report.too_long += 1;
                false
            } else if spec.assign(o.pickup).is_err() || spec.assign(o.dropoff).is_err() {
                report.out_of_region += 1;
                false
            } else {
                true
            }
        })
        .collect();
    report.kept = kept.len();
    (kept, report)
}

/// Keeps only the fixes that belong to one of `orders`.
pub fn retain_fixes(fixes: Vec<GpsFix>, orders: &[RideOrder]) -> Vec<GpsFix> {
    let ids: HashSet<&str> = orders.iter().map(|o| o.order_id.as_str()).collect();
    fixes.into_iter().filter(|f| ids.contains(f.order_id.as_str())).collect()
}
