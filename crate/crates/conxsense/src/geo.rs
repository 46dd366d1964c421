//! Flat-earth distance helpers for the sub-kilometer scales this crate
//! works at.

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Equirectangular approximation of the distance in meters between two
/// (lat, lon) pairs given in degrees. Longitude is scaled by the cosine of
/// the mean latitude.
pub fn distance_m(lat_a: f64, lon_a: f64, lat_b: f64, lon_b: f64) -> f64 {
    let mean_lat = (lat_a + lat_b) / 2.0;
    let dx = (lon_b - lon_a).to_radians() * mean_lat.to_radians().cos() * EARTH_RADIUS_M;
    let dy = (lat_b - lat_a).to_radians() * EARTH_RADIUS_M;
    (dx * dx + dy * dy).sqrt()
}

/// East-west extent in meters of a [lon_min, lon_max] span, measured at the
/// given latitude.
pub fn lon_span_m(lon_min: f64, lon_max: f64, at_lat: f64) -> f64 {
    (lon_max - lon_min).to_radians() * at_lat.to_radians().cos() * EARTH_RADIUS_M
}

/// North-south extent in meters of a [lat_min, lat_max] span.
pub fn lat_span_m(lat_min: f64, lat_max: f64) -> f64 {
    (lat_max - lat_min).to_radians() * EARTH_RADIUS_M
}

/// Degrees of latitude spanned by `meters`.
pub fn meters_to_lat_deg(meters: f64) -> f64 {
    (meters / EARTH_RADIUS_M).to_degrees()
}

/// Degrees of longitude spanned by `meters` at the given latitude.
pub fn meters_to_lon_deg(meters: f64, at_lat: f64) -> f64 {
    (meters / (EARTH_RADIUS_M * at_lat.to_radians().cos())).to_degrees()
}
