//! Coordinates, nautical-mile distances and eye-to-line geometry.
//!
//! Point-to-point distances use the haversine formula. Segment geometry is
//! done in an equirectangular frame centred on the hurricane eye, where
//! transmission lines are straight segments.

use std::fmt;

use thiserror::Error;

/// Mean Earth radius in nautical miles.
pub const EARTH_RADIUS_NMI: f64 = 3440.065;

/// Nautical miles per degree of latitude in the local frame.
pub const NMI_PER_DEGREE: f64 = 60.0;

/// Half-width, in degrees, of the window in which the local projection is trusted.
pub const PROJECTION_WINDOW_DEG: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("point ({lat}, {lon}) is outside the {window} degree projection window around ({origin_lat}, {origin_lon})")]
    OutsideWindow {
        lat: f64,
        lon: f64,
        origin_lat: f64,
        origin_lon: f64,
        window: f64,
    },
    #[error("local offset ({x}, {y}) nmi cannot be unprojected")]
    Unprojectable { x: f64, y: f64 },
}

/// A geographic position in degrees. Western longitudes are negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// True when both coordinates agree within `tol` degrees.
    pub fn approx_eq(&self, other: &GeoPoint, tol: f64) -> bool {
        (self.lat - other.lat).abs() <= tol && wrap_degrees(self.lon - other.lon).abs() <= tol
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Planar offset in nautical miles from a local origin (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Nearest and farthest distance of a line from the eye, in nmi.
///
/// Both fields are `+inf` for a line that lies beyond the projection window
/// and therefore outside any hurricane's reach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceBounds {
    pub d_min: f64,
    pub d_max: f64,
}

impl DistanceBounds {
    pub const OUTSIDE: DistanceBounds = DistanceBounds {
        d_min: f64::INFINITY,
        d_max: f64::INFINITY,
    };

    pub fn is_outside(&self) -> bool {
        self.d_min.is_infinite()
    }
}

fn wrap_degrees(d: f64) -> f64 {
    let w = (d + 180.0).rem_euclid(360.0) - 180.0;
    // keep +180 rather than folding it onto -180
    if w == -180.0 && d > 0.0 {
        180.0
    } else {
        w
    }
}

/// Great-circle distance between two points in nautical miles.
pub fn haversine_nmi(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_NMI * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection of `p` into the frame centred on `origin`.
pub fn project_local(origin: GeoPoint, p: GeoPoint) -> Result<LocalPoint, GeoError> {
    let dlat = p.lat - origin.lat;
    let dlon = wrap_degrees(p.lon - origin.lon);
    if dlat.abs() >= PROJECTION_WINDOW_DEG || dlon.abs() >= PROJECTION_WINDOW_DEG {
        return Err(GeoError::OutsideWindow {
            lat: p.lat,
            lon: p.lon,
            origin_lat: origin.lat,
            origin_lon: origin.lon,
            window: PROJECTION_WINDOW_DEG,
        });
    }
    Ok(LocalPoint {
        x: dlon * NMI_PER_DEGREE * origin.lat.to_radians().cos(),
        y: dlat * NMI_PER_DEGREE,
    })
}

/// Inverse of [`project_local`].
pub fn unproject_local(origin: GeoPoint, p: LocalPoint) -> Result<GeoPoint, GeoError> {
    let cos_lat = origin.lat.to_radians().cos();
    if cos_lat.abs() < 1e-12 || !p.x.is_finite() || !p.y.is_finite() {
        return Err(GeoError::Unprojectable { x: p.x, y: p.y });
    }
    let lat = origin.lat + p.y / NMI_PER_DEGREE;
    let lon = wrap_degrees(origin.lon + p.x / (NMI_PER_DEGREE * cos_lat));
    GeoPoint::new(lat, lon)
}

/// Distance bounds from the local origin to the segment `a`–`b`.
pub fn local_segment_bounds(a: LocalPoint, b: LocalPoint) -> DistanceBounds {
    let da = a.norm();
    let db = b.norm();
    let (ex, ey) = (b.x - a.x, b.y - a.y);
    let len2 = ex * ex + ey * ey;
    if len2 == 0.0 {
        return DistanceBounds { d_min: da, d_max: da };
    }
    // parameter of the perpendicular foot from the origin
    let s = -(a.x * ex + a.y * ey) / len2;
    let d_min = if (0.0..=1.0).contains(&s) {
        (a.x * ey - a.y * ex).abs() / len2.sqrt()
    } else {
        da.min(db)
    };
    DistanceBounds {
        d_min: d_min.min(da).min(db),
        d_max: da.max(db),
    }
}

/// Distance bounds from the eye to the straight line between two endpoints.
pub fn segment_distance_bounds(
    eye: GeoPoint,
    endpoint_a: GeoPoint,
    endpoint_b: GeoPoint,
) -> DistanceBounds {
    match (
        project_local(eye, endpoint_a),
        project_local(eye, endpoint_b),
    ) {
        (Ok(a), Ok(b)) => local_segment_bounds(a, b),
        _ => DistanceBounds::OUTSIDE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert_eq!(GeoPoint::new(91.0, 0.0), Err(GeoError::Latitude(91.0)));
        assert_eq!(GeoPoint::new(0.0, -180.5), Err(GeoError::Longitude(-180.5)));
    }

    #[test]
    fn haversine_identity_and_degrees() {
        assert_eq!(haversine_nmi(gp(28.9, -95.2), gp(28.9, -95.2)), 0.0);
        // R * pi / 180
        let one_deg = EARTH_RADIUS_NMI * std::f64::consts::PI / 180.0;
        assert!((one_deg - 60.04).abs() < 0.01);
        let d = haversine_nmi(gp(0.0, 0.0), gp(0.0, 1.0));
        assert!((d - 60.0).abs() < 0.1, "{d}");
        let d = haversine_nmi(gp(28.9, -95.2), gp(29.9, -95.2));
        assert!((d - 60.0).abs() < 0.1, "{d}");
        assert_eq!(
            haversine_nmi(gp(10.0, 20.0), gp(-5.0, 31.0)),
            haversine_nmi(gp(-5.0, 31.0), gp(10.0, 20.0))
        );
    }

    #[test]
    fn projection_examples() {
        let o = gp(0.0, 0.0);
        assert_eq!(project_local(o, o).unwrap(), LocalPoint::new(0.0, 0.0));
        let p = project_local(o, gp(1.0, 0.0)).unwrap();
        assert!((p.x).abs() < 1e-12 && (p.y - 60.0).abs() < 1e-12);
        let p = project_local(gp(60.0, 0.0), gp(60.0, 1.0)).unwrap();
        assert!((p.x - 30.0).abs() < 0.01 && p.y.abs() < 1e-12);
    }

    #[test]
    fn projection_window_is_enforced() {
        let err = project_local(gp(28.9, -95.2), gp(39.0, -95.2)).unwrap_err();
        assert!(matches!(err, GeoError::OutsideWindow { .. }));
        assert!(project_local(gp(28.9, -95.2), gp(28.9, -105.3)).is_err());
        // across the antimeridian the window is measured on the wrapped offset
        assert!(project_local(gp(0.0, 179.0), gp(0.0, -179.0)).is_ok());
    }

    #[test]
    fn unproject_inverts_projection() {
        let o = gp(28.9, -95.2);
        let q = gp(30.1, -96.7);
        let back = unproject_local(o, project_local(o, q).unwrap()).unwrap();
        assert!(back.approx_eq(&q, 1e-12));
    }

    #[test]
    fn local_segment_examples() {
        let b = local_segment_bounds(LocalPoint::new(0.0, 10.0), LocalPoint::new(0.0, 20.0));
        assert_eq!(b, DistanceBounds { d_min: 10.0, d_max: 20.0 });
        let b = local_segment_bounds(LocalPoint::new(-5.0, 10.0), LocalPoint::new(5.0, 10.0));
        assert!((b.d_min - 10.0).abs() < 1e-12);
        assert!((b.d_max - 125f64.sqrt()).abs() < 1e-12);
        let b = local_segment_bounds(LocalPoint::new(-3.0, 0.0), LocalPoint::new(7.0, 0.0));
        assert_eq!(b.d_min, 0.0);
        assert_eq!(b.d_max, 7.0);
    }

    #[test]
    fn degenerate_segment_is_a_point() {
        let p = LocalPoint::new(3.0, 4.0);
        assert_eq!(local_segment_bounds(p, p), DistanceBounds { d_min: 5.0, d_max: 5.0 });
        let eye = gp(28.9, -95.2);
        let q = gp(29.2, -95.0);
        let b = segment_distance_bounds(eye, q, q);
        assert_eq!(b.d_min, b.d_max);
    }

    #[test]
    fn far_endpoint_means_outside() {
        let eye = gp(28.9, -95.2);
        let b = segment_distance_bounds(eye, gp(29.0, -95.0), gp(45.0, -95.0));
        assert!(b.is_outside());
        assert_eq!(b, DistanceBounds::OUTSIDE);
    }

    #[test]
    fn geo_segment_through_eye_has_zero_min() {
        let eye = gp(28.9, -95.2);
        let b = segment_distance_bounds(eye, gp(28.5, -95.2), gp(29.3, -95.2));
        assert!(b.d_min.abs() < 1e-9);
        assert!((b.d_max - 24.0).abs() < 1e-9);
    }
}
