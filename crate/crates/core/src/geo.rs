//! Coordinates, great-circle distance and the rectangular study grid.
//!
//! Input coordinates are GCJ-02 encoded. They are treated as plain spherical
//! coordinates: the GCJ-02 offset is smooth at the scale of a single GPS
//! segment, and no datum conversion is attempted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        let p = GeoPoint { lon, lat };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::InvalidInput(format!("coordinate ({lon}, {lat}) out of range")))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite() && self.lat.is_finite() && (-180.0..=180.0).contains(&self.lon) && (-90.0..=90.0).contains(&self.lat)
    }
}

/// Great-circle distance in meters on a sphere of mean Earth radius.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    haversine_distance_with_radius(a, b, EARTH_RADIUS_M)
}

pub fn haversine_distance_with_radius(a: GeoPoint, b: GeoPoint, radius_m: f64) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * radius_m * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self> {
        let bbox = BoundingBox { min_lon, min_lat, max_lon, max_lat };
        bbox.validate()?;
        Ok(bbox)
    }

    fn validate(&self) -> Result<()> {
        let corners_ok =
            GeoPoint { lon: self.min_lon, lat: self.min_lat }.is_valid() && GeoPoint { lon: self.max_lon, lat: self.max_lat }.is_valid();
        if !corners_ok || self.min_lon >= self.max_lon || self.min_lat >= self.max_lat {
            return Err(Error::InvalidInput(format!("degenerate bounding box {self:?}")));
        }
        Ok(())
    }

    /// East-west extent measured along the middle parallel.
    pub fn width_m(&self) -> f64 {
        let mid_lat = 0.5 * (self.min_lat + self.max_lat);
        haversine_distance(GeoPoint { lon: self.min_lon, lat: mid_lat }, GeoPoint { lon: self.max_lon, lat: mid_lat })
    }

    /// North-south extent measured along the middle meridian.
    pub fn height_m(&self) -> f64 {
        let mid_lon = 0.5 * (self.min_lon + self.max_lon);
        haversine_distance(GeoPoint { lon: mid_lon, lat: self.min_lat }, GeoPoint { lon: mid_lon, lat: self.max_lat })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lon..=self.max_lon).contains(&p.lon) && (self.min_lat..=self.max_lat).contains(&p.lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridMode {
    /// Square-ish cells of the given side; counts are ceil(span / side).
    CellSize {
        meters: f64,
    },
    Counts {
        n_cols: u32,
        n_rows: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
    pub n_cols: u32,
    pub n_rows: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub col: u32,
    pub row: u32,
}

// Spans that are an exact multiple of the cell size must not gain an extra
// column from rounding noise in the haversine evaluation.
const CEIL_SLACK: f64 = 1e-9;

pub fn build_grid_spec(bbox: BoundingBox, mode: GridMode) -> Result<GridSpec> {
    bbox.validate()?;
    let (n_cols, n_rows) = match mode {
        GridMode::Counts { n_cols, n_rows } => {
            if n_cols == 0 || n_rows == 0 {
                return Err(Error::InvalidInput("grid counts must be positive".into()));
            }
            (n_cols, n_rows)
        }
        GridMode::CellSize { meters } => {
            if !(meters.is_finite() && meters > 0.0) {
                return Err(Error::InvalidInput(format!("cell size must be positive, got {meters}")));
            }
            let count = |span: f64| ((span / meters - CEIL_SLACK).ceil() as u32).max(1);
            (count(bbox.width_m()), count(bbox.height_m()))
        }
    };
    Ok(GridSpec { min_lon: bbox.min_lon, min_lat: bbox.min_lat, max_lon: bbox.max_lon, max_lat: bbox.max_lat, n_cols, n_rows })
}

impl GridSpec {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox { min_lon: self.min_lon, min_lat: self.min_lat, max_lon: self.max_lon, max_lat: self.max_lat }
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox().validate()?;
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::InvalidInput("grid counts must be positive".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_cols as usize * self.n_rows as usize
    }

    /// Linear binning of lon into columns and lat into rows. The upper edges are
    /// closed: a point on `max_lon` or `max_lat` falls in the last cell.
    pub fn assign(&self, p: GeoPoint) -> Result<GridIndex> {
        if !self.bbox().contains(p) {
            return Err(Error::OutOfRegion(p));
        }
        let bin = |v: f64, lo: f64, hi: f64, n: u32| {
            let k = ((v - lo) / (hi - lo) * n as f64).floor() as u32;
            k.min(n - 1)
        };
        Ok(GridIndex { col: bin(p.lon, self.min_lon, self.max_lon, self.n_cols), row: bin(p.lat, self.min_lat, self.max_lat, self.n_rows) })
    }

    /// Center of a cell in degrees.
    pub fn cell_center(&self, idx: GridIndex) -> GeoPoint {
        let w = (self.max_lon - self.min_lon) / self.n_cols as f64;
        let h = (self.max_lat - self.min_lat) / self.n_rows as f64;
        GeoPoint { lon: self.min_lon + (idx.col as f64 + 0.5) * w, lat: self.min_lat + (idx.row as f64 + 0.5) * h }
    }
}

/// The central-Chengdu study area: 104.04–104.12 E, 30.65–30.72 N, 17 × 17 cells.
pub fn study_area() -> GridSpec {
    GridSpec { min_lon: 104.04, min_lat: 30.65, max_lon: 104.12, max_lat: 30.72, n_cols: 17, n_rows: 17 }
}
