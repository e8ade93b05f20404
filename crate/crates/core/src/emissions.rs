//! COPERT speed-dependent emission factors.
//!
//! ```text
//! EF(v) = (α v² + β v + γ + δ / v) / (ε v² + ζ v + η)     [g/km, v in km/h]
//! E_i   = EF(v_i) · d_i
//! E     = C · Σ E_i
//! ```
//!
//! Speeds are clamped into `[v_min, v_max]` before evaluation, which keeps the
//! `δ / v` term away from its singularity on stationary segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trips::{PoolTrip, RideTrajectory, Segment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopertParams {
    pub pollutant: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub zeta: f64,
    pub eta: f64,
    /// km/h
    pub v_min: f64,
    /// km/h
    pub v_max: f64,
}

impl Default for CopertParams {
    /// Placeholder petrol passenger-car curve. The shape (U-shaped, 190–380 g/km
    /// over 10–130 km/h) is plausible for CO₂, but the numbers are not a
    /// calibrated COPERT set; supply real coefficients through configuration.
    fn default() -> Self {
        CopertParams {
            pollutant: "CO2".into(),
            alpha: 0.02,
            beta: -2.5,
            gamma: 250.0,
            delta: 1500.0,
            epsilon: 0.0,
            zeta: 0.0,
            eta: 1.0,
            v_min: 10.0,
            v_max: 130.0,
        }
    }
}

impl CopertParams {
    /// Parameters from the seven coefficients `(α, β, γ, δ, ε, ζ, η)` with the
    /// default clamp bounds.
    pub fn from_coefficients(c: [f64; 7]) -> Result<Self> {
        let p = CopertParams {
            pollutant: "CO2".into(),
            alpha: c[0],
            beta: c[1],
            gamma: c[2],
            delta: c[3],
            epsilon: c[4],
            zeta: c[5],
            eta: c[6],
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    fn denominator(&self, v: f64) -> f64 {
        self.epsilon * v * v + self.zeta * v + self.eta
    }

    /// Checks the clamp bounds and that the denominator has no root on
    /// `[v_min, v_max]`.
    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.alpha, self.beta, self.gamma, self.delta, self.epsilon, self.zeta, self.eta];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        if !(self.v_min > 0.0 && self.v_max > self.v_min && self.v_max.is_finite()) {
            return Err(Error::Config(format!("need 0 < v_min < v_max, got [{}, {}]", self.v_min, self.v_max)));
        }
        let (lo, hi) = (self.v_min, self.v_max);
        let (a, b, c) = (self.epsilon, self.zeta, self.eta);
        let mut roots = Vec::new();
        if a == 0.0 {
            if b != 0.0 {
                roots.push(-c / b);
            } else if c == 0.0 {
                return Err(Error::Config("denominator is identically zero".into()));
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                roots.push((-b - s) / (2.0 * a));
                roots.push((-b + s) / (2.0 * a));
            }
        }
        if let Some(r) = roots.iter().find(|r| (lo..=hi).contains(*r)) {
            return Err(Error::Config(format!("denominator vanishes at v = {r} km/h inside [{lo}, {hi}]")));
        }
        if self.denominator(lo) == 0.0 || self.denominator(hi) == 0.0 {
            return Err(Error::Config("denominator vanishes at a clamp bound".into()));
        }
        Ok(())
    }

    /// Emission factor in g/km at speed `v_kmh`, clamped into the valid range.
    pub fn emission_factor(&self, v_kmh: f64) -> f64 {
        let v = v_kmh.clamp(self.v_min, self.v_max);
        (self.alpha * v * v + self.beta * v + self.gamma + self.delta / v) / self.denominator(v)
    }
}

pub fn emission_factor(v_kmh: f64, params: &CopertParams) -> f64 {
    params.emission_factor(v_kmh)
}

/// Grams emitted on one segment.
pub fn segment_emission(seg: &Segment, params: &CopertParams) -> f64 {
    params.emission_factor(seg.speed_kmh()) * seg.d / 1000.0
}

fn sum_emissions(segments: &[Segment], params: &CopertParams) -> f64 {
    segments.iter().map(|s| segment_emission(s, params)).sum()
}

pub fn ride_emission(ride: &RideTrajectory, params: &CopertParams) -> f64 {
    ride.calibration * sum_emissions(&ride.segments, params)
}

/// Pool-trip emission over the deduplicated segment union.
pub fn pool_emission(trip: &PoolTrip, params: &CopertParams) -> f64 {
    trip.calibration * sum_emissions(&trip.segments, params)
}
