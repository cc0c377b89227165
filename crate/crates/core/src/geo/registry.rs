//! Named area polygons loaded from a GeoJSON feature collection.

use std::collections::HashMap;

use serde_json::{json, Value as Json};
use thiserror::Error;

use super::polygon::{LonLat, Polygon};
use crate::tvl::AreaRef;

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("registry parse error: {0}")]
    Parse(String),
    #[error("invalid polygon for `{name}`: {reason}")]
    InvalidPolygon { name: String, reason: String },
    #[error("duplicate area name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaRecord {
    pub name: AreaRef,
    pub province: String,
    pub polygon: Polygon,
}

impl AreaRecord {
    pub fn contains(&self, p: LonLat) -> bool {
        point_in_area(p, self)
    }
}

/// Boundary points count as inside; points inside a hole do not.
pub fn point_in_area(p: LonLat, area: &AreaRecord) -> bool {
    area.polygon.contains(p)
}

/// Name-indexed set of areas. Lookups ignore case and whitespace layout.
#[derive(Debug, Clone, Default)]
pub struct AreaRegistry {
    records: Vec<AreaRecord>,
    index: HashMap<String, usize>,
}

impl AreaRegistry {
    pub fn new(records: Vec<AreaRecord>) -> Result<AreaRegistry, RegistryError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.name.lookup_key(), i).is_some() {
                return Err(RegistryError::DuplicateName(r.name.to_string()));
            }
        }
        Ok(AreaRegistry { records, index })
    }

    /// Parses a GeoJSON `FeatureCollection` whose features carry `name` and
    /// `province` properties and `Polygon` geometries in `[lon, lat]` order.
    pub fn from_geojson(text: &str) -> Result<AreaRegistry, RegistryError> {
        let doc: Json = serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        if doc.get("type").and_then(Json::as_str) != Some("FeatureCollection") {
            return Err(RegistryError::Parse("top-level object is not a FeatureCollection".into()));
        }
        let features = doc
            .get("features")
            .and_then(Json::as_array)
            .ok_or_else(|| RegistryError::Parse("missing `features` array".into()))?;
        let mut records = Vec::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            records.push(parse_feature(i, f)?);
        }
        AreaRegistry::new(records)
    }

    pub fn to_geojson(&self) -> String {
        let features: Vec<Json> = self
            .records
            .iter()
            .map(|r| {
                let rings: Vec<Vec<[f64; 2]>> = std::iter::once(&r.polygon.exterior)
                    .chain(&r.polygon.holes)
                    .map(|ring| ring.iter().map(|p| [p.lon, p.lat]).collect())
                    .collect();
                json!({
                    "type": "Feature",
                    "properties": {"name": r.name.as_str(), "province": r.province},
                    "geometry": {"type": "Polygon", "coordinates": rings},
                })
            })
            .collect();
        serde_json::to_string_pretty(&json!({"type": "FeatureCollection", "features": features}))
            .expect("registry serializes")
    }

    pub fn get(&self, name: &AreaRef) -> Option<&AreaRecord> {
        self.index.get(&name.lookup_key()).map(|&i| &self.records[i])
    }

    pub fn lookup(&self, name: &str) -> Option<&AreaRecord> {
        AreaRef::new(name).and_then(|a| self.get(&a))
    }

    pub fn records(&self) -> &[AreaRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn parse_feature(i: usize, f: &Json) -> Result<AreaRecord, RegistryError> {
    let props = f.get("properties").ok_or_else(|| RegistryError::Parse(format!("feature {i}: missing properties")))?;
    let raw_name = props
        .get("name")
        .and_then(Json::as_str)
        .ok_or_else(|| RegistryError::Parse(format!("feature {i}: missing string property `name`")))?;
    let name = AreaRef::new(raw_name).ok_or_else(|| RegistryError::Parse(format!("feature {i}: empty name")))?;
    let province = props.get("province").and_then(Json::as_str).unwrap_or_default().to_string();

    let invalid = |reason: String| RegistryError::InvalidPolygon { name: name.to_string(), reason };
    let geometry = f.get("geometry").ok_or_else(|| invalid("missing geometry".into()))?;
    match geometry.get("type").and_then(Json::as_str) {
        Some("Polygon") => {}
        other => return Err(invalid(format!("geometry type {other:?} is not Polygon"))),
    }
    let rings = geometry
        .get("coordinates")
        .and_then(Json::as_array)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| invalid("missing coordinates".into()))?;
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let verts = ring.as_array().ok_or_else(|| invalid("ring is not an array".into()))?;
        let mut out = Vec::with_capacity(verts.len());
        for v in verts {
            let pair = v.as_array().filter(|a| a.len() >= 2);
            let lon = pair.and_then(|a| a[0].as_f64());
            let lat = pair.and_then(|a| a[1].as_f64());
            match (lon, lat) {
                (Some(lon), Some(lat)) => out.push(LonLat::new(lon, lat)),
                _ => return Err(invalid("vertex is not a [lon, lat] pair".into())),
            }
        }
        parsed.push(out);
    }
    let exterior = parsed.remove(0);
    let polygon = Polygon::new(exterior, parsed).map_err(invalid)?;
    Ok(AreaRecord { name, province, polygon })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_feature(name: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> Json {
        json!({
            "type": "Feature",
            "properties": {"name": name, "province": "Beijing"},
            "geometry": {"type": "Polygon", "coordinates": [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]]},
        })
    }

    fn collection(features: Vec<Json>) -> String {
        json!({"type": "FeatureCollection", "features": features}).to_string()
    }

    #[test]
    fn loads_three_rectangles() {
        let doc = collection(vec![
            rect_feature("Miyun District, Beijing", 116.7, 40.2, 117.2, 40.7),
            rect_feature("Haidian District, Beijing", 116.2, 39.9, 116.35, 40.1),
            rect_feature("Chaoyang District, Beijing", 116.4, 39.85, 116.6, 40.05),
        ]);
        let reg = AreaRegistry::from_geojson(&doc).unwrap();
        assert_eq!(reg.len(), 3);
        assert!(reg.lookup("miyun district,BEIJING").is_some());
        assert!(reg.lookup("Miyun, Beijing").is_none());
        assert!(reg.lookup("miyun  district ,  beijing").is_some());
        let back = AreaRegistry::from_geojson(&reg.to_geojson()).unwrap();
        assert_eq!(back.records(), reg.records());
    }

    #[test]
    fn open_ring_rejected() {
        let mut f = rect_feature("A, B", 0.0, 0.0, 1.0, 1.0);
        f["geometry"]["coordinates"][0].as_array_mut().unwrap().pop();
        let err = AreaRegistry::from_geojson(&collection(vec![f])).unwrap_err();
        assert!(matches!(err, RegistryError::InvalidPolygon { .. }), "{err}");
    }

    #[test]
    fn duplicate_names_rejected() {
        let doc = collection(vec![
            rect_feature("Miyun District, Beijing", 0.0, 0.0, 1.0, 1.0),
            rect_feature("Miyun District,Beijing", 2.0, 2.0, 3.0, 3.0),
        ]);
        assert_eq!(
            AreaRegistry::from_geojson(&doc).unwrap_err(),
            RegistryError::DuplicateName("Miyun District, Beijing".into())
        );
    }

    #[test]
    fn point_in_area_basics() {
        let reg = AreaRegistry::from_geojson(&collection(vec![rect_feature("A, B", 116.0, 40.0, 117.0, 41.0)])).unwrap();
        let a = &reg.records()[0];
        let c = a.polygon.centroid();
        assert!(point_in_area(c, a));
        assert!(!point_in_area(LonLat::new(c.lon, c.lat + 10.0), a));
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(AreaRegistry::from_geojson("{"), Err(RegistryError::Parse(_))));
        assert!(matches!(AreaRegistry::from_geojson("{\"type\":\"Feature\"}"), Err(RegistryError::Parse(_))));
    }
}
