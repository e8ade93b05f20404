use std::io;

use thiserror::Error;

use crate::geo::GeoPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({lon}, {lat}) lies outside the study region", lon = .0.lon, lat = .0.lat)]
    OutOfRegion(GeoPoint),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {malformed} of {total} rows are malformed; wrong file or layout?")]
    Format { malformed: usize, total: usize },

    #[error("order {0}: fewer than two usable GPS fixes")]
    EmptyTrajectory(String),

    #[error("{0}: trajectory time is zero after segment filtering")]
    DegenerateTrajectory(String),

    #[error("invalid COPERT parameters: {0}")]
    Config(String),

    #[error("pool trip {trip_id}: shared ride {order_id} has no substitute single rides on its OD pair")]
    Unmatched { trip_id: String, order_id: String },

    #[error("infeasible scenario: {0}")]
    Infeasible(String),
}
