//! Spherical Lambert conformal conic projection with one standard parallel.
//!
//! Geographic coordinates are degrees, planar coordinates are kilometres
//! with the projection center at the origin, x pointing East and y North.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Latitudes beyond this magnitude are rejected; the cone degenerates near
/// the poles.
const MAX_ABS_LATITUDE: f64 = 89.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    /// Great-circle distance in km.
    pub fn distance_km(&self, other: &GeoPoint) -> f64 {
        let (p1, p2) = (self.lat.to_radians(), other.lat.to_radians());
        let dp = p2 - p1;
        let dl = (other.lon - self.lon).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_KM * a.sqrt().clamp(0.0, 1.0).asin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "FrameParams", into = "FrameParams")]
pub struct PlanarFrame {
    lat0: f64,
    lon0: f64,
    parallel: f64,
    // cone constant, scale factor and radius at the origin latitude
    n: f64,
    f: f64,
    rho0: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct FrameParams {
    lat0: f64,
    lon0: f64,
    #[serde(default)]
    standard_parallel: Option<f64>,
}

impl From<FrameParams> for PlanarFrame {
    fn from(p: FrameParams) -> Self {
        PlanarFrame::with_parallel(p.lat0, p.lon0, p.standard_parallel.unwrap_or(p.lat0))
    }
}

impl From<PlanarFrame> for FrameParams {
    fn from(f: PlanarFrame) -> Self {
        FrameParams {
            lat0: f.lat0,
            lon0: f.lon0,
            standard_parallel: Some(f.parallel),
        }
    }
}

impl Default for PlanarFrame {
    fn default() -> Self {
        PlanarFrame::new(38.0, -98.0)
    }
}

impl PlanarFrame {
    /// Tangent cone touching the sphere at the latitude of the center.
    pub fn new(lat0: f64, lon0: f64) -> Self {
        Self::with_parallel(lat0, lon0, lat0)
    }

    /// # Panics
    /// If the standard parallel is within 0.5° of the equator, where the
    /// conic degenerates into a cylinder.
    pub fn with_parallel(lat0: f64, lon0: f64, parallel: f64) -> Self {
        assert!(
            parallel.abs() >= 0.5 && parallel.abs() <= MAX_ABS_LATITUDE,
            "standard parallel {parallel}° unsupported"
        );
        let phi1 = parallel.to_radians();
        let n = phi1.sin();
        let f = phi1.cos() * (FRAC_PI_4 + phi1 / 2.0).tan().powf(n) / n;
        let rho0 = EARTH_RADIUS_KM * f / (FRAC_PI_4 + lat0.to_radians() / 2.0).tan().powf(n);
        Self {
            lat0,
            lon0,
            parallel,
            n,
            f,
            rho0,
        }
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::new(self.lon0, self.lat0)
    }

    pub fn standard_parallel(&self) -> f64 {
        self.parallel
    }

    fn rho(&self, lat_rad: f64) -> f64 {
        EARTH_RADIUS_KM * self.f / (FRAC_PI_4 + lat_rad / 2.0).tan().powf(self.n)
    }

    /// Geographic degrees to planar km.
    pub fn project(&self, geo: GeoPoint) -> Result<[f64; 2]> {
        if !geo.lon.is_finite() || !geo.lat.is_finite() {
            return Err(Error::Domain(format!("non-finite coordinate {geo:?}")));
        }
        if geo.lat.abs() > MAX_ABS_LATITUDE {
            return Err(Error::Domain(format!(
                "latitude {}° outside ±{MAX_ABS_LATITUDE}°",
                geo.lat
            )));
        }
        let dlon = wrap_degrees(geo.lon - self.lon0);
        if dlon.abs() >= 180.0 {
            return Err(Error::Domain(format!(
                "longitude {}° is on the projection cut",
                geo.lon
            )));
        }
        let rho = self.rho(geo.lat.to_radians());
        let theta = self.n * dlon.to_radians();
        Ok([rho * theta.sin(), self.rho0 - rho * theta.cos()])
    }

    /// Planar km back to geographic degrees.
    pub fn unproject(&self, xy: [f64; 2]) -> Result<GeoPoint> {
        let [x, y] = xy;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain(format!("non-finite planar point {xy:?}")));
        }
        let sign = self.n.signum();
        let dy = self.rho0 - y;
        let rho = sign * x.hypot(dy);
        let theta = (sign * x).atan2(sign * dy);
        let lat = if rho == 0.0 {
            90.0 * sign
        } else {
            let t = (EARTH_RADIUS_KM * self.f / rho).powf(1.0 / self.n);
            (2.0 * t.atan() - 2.0 * FRAC_PI_4).to_degrees()
        };
        let dlon = (theta / self.n).to_degrees();
        if dlon.abs() >= 180.0 || lat.abs() > MAX_ABS_LATITUDE {
            return Err(Error::Domain(format!(
                "planar point {xy:?} maps outside the projection domain"
            )));
        }
        Ok(GeoPoint::new(wrap_degrees(self.lon0 + dlon), lat))
    }
}

/// Wraps an angle in degrees into [-180, 180).
pub fn wrap_degrees(deg: f64) -> f64 {
    (deg + 180.0).rem_euclid(360.0) - 180.0
}
