//! Planar polygon geometry over lon/lat degrees.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub fn new(lon: f64, lat: f64) -> LonLat {
        LonLat { lon, lat }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: LonLat,
    pub max: LonLat,
}

impl BBox {
    pub fn contains(&self, p: LonLat) -> bool {
        self.min.lon <= p.lon && p.lon <= self.max.lon && self.min.lat <= p.lat && p.lat <= self.max.lat
    }

    pub fn width(&self) -> f64 {
        self.max.lon - self.min.lon
    }

    pub fn height(&self) -> f64 {
        self.max.lat - self.min.lat
    }
}

/// Where a point falls relative to a closed ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingLocation {
    Inside,
    Boundary,
    Outside,
}

/// One exterior ring plus optional holes. Rings are closed (first vertex
/// repeated last).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Vec<LonLat>,
    pub holes: Vec<Vec<LonLat>>,
}

impl Polygon {
    /// Validates ring closure, vertex count, non-zero area and simplicity.
    pub fn new(exterior: Vec<LonLat>, holes: Vec<Vec<LonLat>>) -> Result<Polygon, String> {
        check_ring(&exterior).map_err(|e| format!("exterior ring: {e}"))?;
        for (i, hole) in holes.iter().enumerate() {
            check_ring(hole).map_err(|e| format!("hole {i}: {e}"))?;
        }
        Ok(Polygon { exterior, holes })
    }

    /// Axis-aligned rectangle, handy for fixtures.
    pub fn rectangle(min: LonLat, max: LonLat) -> Polygon {
        Polygon::new(
            vec![
                min,
                LonLat::new(max.lon, min.lat),
                max,
                LonLat::new(min.lon, max.lat),
                min,
            ],
            Vec::new(),
        )
        .expect("rectangle with positive extent")
    }

    pub fn bbox(&self) -> BBox {
        ring_bbox(&self.exterior)
    }

    /// Boundary points (of the exterior or of any hole) count as inside.
    pub fn contains(&self, p: LonLat) -> bool {
        match locate_in_ring(&self.exterior, p) {
            RingLocation::Outside => false,
            RingLocation::Boundary => true,
            RingLocation::Inside => self
                .holes
                .iter()
                .all(|h| locate_in_ring(h, p) != RingLocation::Inside),
        }
    }

    /// Area-weighted (shoelace) centroid of the exterior ring.
    pub fn centroid(&self) -> LonLat {
        let ring = &self.exterior;
        // Shift to the first vertex to keep the products small.
        let o = ring[0];
        let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for w in ring.windows(2) {
            let (x0, y0) = (w[0].lon - o.lon, w[0].lat - o.lat);
            let (x1, y1) = (w[1].lon - o.lon, w[1].lat - o.lat);
            let cross = x0 * y1 - x1 * y0;
            a2 += cross;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        LonLat::new(o.lon + cx / (3.0 * a2), o.lat + cy / (3.0 * a2))
    }

    /// Unsigned planar area of the exterior minus holes, in square degrees.
    pub fn area(&self) -> f64 {
        signed_area(&self.exterior).abs() - self.holes.iter().map(|h| signed_area(h).abs()).sum::<f64>()
    }

    /// `POLYGON((lon lat, ...), (hole...))` with 6-decimal coordinates.
    pub fn to_wkt(&self) -> String {
        let mut out = String::from("POLYGON(");
        for (i, ring) in std::iter::once(&self.exterior).chain(&self.holes).enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push('(');
            for (j, p) in ring.iter().enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                write!(out, "{:.6} {:.6}", p.lon, p.lat).unwrap();
            }
            out.push(')');
        }
        out.push(')');
        out
    }
}

pub(crate) fn ring_bbox(ring: &[LonLat]) -> BBox {
    let mut min = LonLat::new(f64::INFINITY, f64::INFINITY);
    let mut max = LonLat::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in ring {
        min.lon = min.lon.min(p.lon);
        min.lat = min.lat.min(p.lat);
        max.lon = max.lon.max(p.lon);
        max.lat = max.lat.max(p.lat);
    }
    BBox { min, max }
}

fn signed_area(ring: &[LonLat]) -> f64 {
    let o = ring[0];
    ring.windows(2)
        .map(|w| (w[0].lon - o.lon) * (w[1].lat - o.lat) - (w[1].lon - o.lon) * (w[0].lat - o.lat))
        .sum::<f64>()
        / 2.0
}

fn cross(o: LonLat, a: LonLat, b: LonLat) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn on_segment(p: LonLat, a: LonLat, b: LonLat) -> bool {
    cross(a, b, p) == 0.0
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

/// Crossing-number (ray casting) test with an exact boundary check first.
pub fn locate_in_ring(ring: &[LonLat], p: LonLat) -> RingLocation {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if on_segment(p, a, b) {
            return RingLocation::Boundary;
        }
        // Half-open rule on latitude so a vertex on the ray counts once.
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    if inside {
        RingLocation::Inside
    } else {
        RingLocation::Outside
    }
}

fn check_ring(ring: &[LonLat]) -> Result<(), String> {
    if ring.len() < 4 {
        return Err(format!("needs at least 4 vertices, got {}", ring.len()));
    }
    if ring.iter().any(|p| !p.lon.is_finite() || !p.lat.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed (first vertex != last vertex)".into());
    }
    if signed_area(ring) == 0.0 {
        return Err("ring has zero area".into());
    }
    let n = ring.len() - 1;
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_touch(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return Err(format!("self-intersection between edges {i} and {j}"));
            }
        }
    }
    Ok(())
}

fn segments_touch(a: LonLat, b: LonLat, c: LonLat, d: LonLat) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}
