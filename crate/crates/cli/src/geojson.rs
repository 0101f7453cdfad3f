//! GeoJSON snapshot of one time step: lines, eye, and the two wind radii.

use serde_json::{json, Value};
use stormgrid::geo::GeoPoint;
use stormgrid::scenario::destination_point;
use stormgrid::{GridModel, LineExposure, WindFieldParams};

pub const CIRCLE_VERTICES: usize = 64;

fn position(p: GeoPoint) -> Value {
    json!([p.lon(), p.lat()])
}

/// Closed counter-clockwise ring approximating a circle of `radius_nmi`.
pub fn circle_ring(centre: GeoPoint, radius_nmi: f64) -> Vec<Value> {
    let mut ring: Vec<Value> = (0..CIRCLE_VERTICES)
        .map(|i| {
            // decreasing compass bearing walks the ring counter-clockwise
            let bearing = 360.0 - 360.0 * i as f64 / CIRCLE_VERTICES as f64;
            let p = destination_point(centre, bearing % 360.0, radius_nmi).unwrap_or(centre);
            position(p)
        })
        .collect();
    ring.push(ring[0].clone());
    ring
}

/// FeatureCollection with one LineString per branch, a Point for the eye and
/// Polygons for the radius of maximum wind and the outer boundary.
pub fn export_geojson(
    grid: &GridModel,
    exposures: &[LineExposure],
    eye: GeoPoint,
    params: &WindFieldParams,
) -> Value {
    let mut features = Vec::with_capacity(exposures.len() + 3);
    for (idx, e) in exposures.iter().enumerate() {
        let Ok((a, b)) = grid.branch_endpoints(idx) else {
            continue;
        };
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [position(a), position(b)]},
            "properties": {"branch_id": e.branch_id, "gamma_kt": e.gamma, "p_out": e.p_out},
        }));
    }
    features.push(json!({
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": position(eye)},
        "properties": {"kind": "eye", "v_max_kt": params.v_max},
    }));
    for (kind, radius) in [("r_vmax", params.r_vmax), ("r_s", params.r_s)] {
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [circle_ring(eye, radius)]},
            "properties": {"kind": kind, "radius_nmi": radius},
        }));
    }
    json!({"type": "FeatureCollection", "features": features})
}
