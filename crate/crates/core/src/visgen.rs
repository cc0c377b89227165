//! Visualization specifications: Vega-Lite v5 documents for bar, line and
//! pie charts, and a GeoJSON-based map document for trajectory maps.
//!
//! Map document layout:
//!
//! ```text
//! {
//!   "type": "FeatureCollection",
//!   "metadata": {"kind": "map", "area": <name>, "center": [lon, lat],
//!                "zoom": <f64>, "viewport": [800, 600]},
//!   "data": {"values": [<result rows>]},
//!   "features": [{"type": "Feature",
//!                 "properties": {"user_id", "traj_id", "times": [...]},
//!                 "geometry": {"type": "LineString", "coordinates": [[lon, lat], ...]}}]
//! }
//! ```
//!
//! All documents are serialized with sorted keys, so identical inputs give
//! byte-identical output.

use std::collections::BTreeMap;

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::geo::{AreaRecord, AreaRegistry, LonLat, ResultTable, Value};
use crate::tvl::{SelectItem, Timestamp, TvlQuery, VisType};

pub const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";
pub const VIEWPORT: (f64, f64) = (800.0, 600.0);
/// Fraction of the viewport the area's bounding box should fill.
pub const FILL: f64 = 0.8;
const TILE: f64 = 256.0;
const MAX_ZOOM: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum VisError {
    #[error("result shape does not fit a {kind} chart: {reason}")]
    ShapeMismatch { kind: VisType, reason: String },
    #[error("unknown area `{0}`")]
    UnknownArea(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub channel: &'static str,
    pub field: String,
    /// Vega-Lite measurement type.
    pub kind: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLine {
    pub user_id: i64,
    pub traj_id: i64,
    pub coordinates: Vec<LonLat>,
    pub times: Vec<Timestamp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisSpec {
    pub kind: VisType,
    pub document: String,
    pub center: Option<LonLat>,
    pub zoom: Option<f64>,
    /// Vega-Lite mark type; `None` for maps.
    pub mark: Option<&'static str>,
    pub encodings: Vec<Channel>,
    pub lines: Vec<TrajectoryLine>,
}

/// Shoelace centroid of the area's exterior ring.
pub fn area_centroid(a: &AreaRecord) -> LonLat {
    a.polygon.centroid()
}

/// Zoom level at which the area's bounding box fills [`FILL`] of the
/// viewport on 256px web-mercator tiles.
pub fn area_zoom(a: &AreaRecord) -> f64 {
    let b = a.polygon.bbox();
    let merc = |lat: f64| (std::f64::consts::FRAC_PI_4 + lat.to_radians() / 2.0).tan().ln();
    let width = b.width() / 360.0;
    let height = (merc(b.max.lat) - merc(b.min.lat)) / (2.0 * std::f64::consts::PI);
    let zx = (FILL * VIEWPORT.0 / (TILE * width)).log2();
    let zy = (FILL * VIEWPORT.1 / (TILE * height)).log2();
    zx.min(zy).clamp(0.0, MAX_ZOOM)
}

pub fn emit_spec(q: &TvlQuery, r: &ResultTable, registry: &AreaRegistry) -> Result<VisSpec, VisError> {
    match q.vis {
        VisType::Map => map_spec(q, r, registry),
        VisType::Bar | VisType::Line | VisType::Pie => chart_spec(q, r),
    }
}

fn records(r: &ResultTable) -> Vec<Json> {
    r.to_records()
}

fn shape(kind: VisType, reason: impl Into<String>) -> VisError {
    VisError::ShapeMismatch { kind, reason: reason.into() }
}

/// Measurement type from the first non-null value of a column.
fn measure_kind(r: &ResultTable, col: usize, dimension: bool) -> &'static str {
    let first = r.rows.iter().map(|row| &row[col]).find(|v| !v.is_null());
    match first {
        Some(Value::Timestamp(_)) => "temporal",
        Some(Value::Text(_)) => "nominal",
        _ if dimension => "nominal",
        _ => "quantitative",
    }
}

fn chart_spec(q: &TvlQuery, r: &ResultTable) -> Result<VisSpec, VisError> {
    let kind = q.vis;
    let sql = &q.sql;
    if r.columns.len() != sql.select.len() {
        return Err(shape(kind, format!("expected {} columns, got {}", sql.select.len(), r.columns.len())));
    }
    let dims: Vec<usize> = (0..sql.select.len()).filter(|&i| !sql.select[i].is_aggregate()).collect();
    let aggs: Vec<usize> = (0..sql.select.len()).filter(|&i| sql.select[i].is_aggregate()).collect();
    // The x/category column: the binned column if any, else the first key.
    let binned = sql.bin().and_then(|b| {
        (0..sql.select.len()).find(|&i| matches!(&sql.select[i], SelectItem::Column { column, .. } if b.column.may_alias(column)))
    });
    let dim = binned.or_else(|| dims.first().copied()).ok_or_else(|| shape(kind, "no category column"))?;
    let measure = aggs
        .first()
        .copied()
        .or_else(|| dims.iter().copied().find(|&i| i != dim))
        .ok_or_else(|| shape(kind, "no measure column"))?;

    let field = |i: usize| r.columns[i].clone();
    let (mark, encodings) = match kind {
        VisType::Bar => (
            "bar",
            vec![
                Channel { channel: "x", field: field(dim), kind: measure_kind(r, dim, true) },
                Channel { channel: "y", field: field(measure), kind: "quantitative" },
            ],
        ),
        VisType::Line => {
            let x_kind = match measure_kind(r, dim, false) {
                "nominal" => "ordinal",
                k => k,
            };
            (
                "line",
                vec![
                    Channel { channel: "x", field: field(dim), kind: x_kind },
                    Channel { channel: "y", field: field(measure), kind: "quantitative" },
                ],
            )
        }
        VisType::Pie => (
            "arc",
            vec![
                Channel { channel: "theta", field: field(measure), kind: "quantitative" },
                Channel { channel: "color", field: field(dim), kind: measure_kind(r, dim, true) },
            ],
        ),
        VisType::Map => unreachable!("maps use map_spec"),
    };

    let mut values = records(r);
    if kind == VisType::Line {
        // Stable sort keeps the executor's tiebreak among equal x values.
        let mut order: Vec<usize> = (0..r.rows.len()).collect();
        order.sort_by(|&a, &b| r.rows[a][dim].cmp(&r.rows[b][dim]));
        values = order.into_iter().map(|i| values[i].clone()).collect();
    }

    let mut enc = serde_json::Map::new();
    for c in &encodings {
        let mut e = json!({"field": c.field, "type": c.kind});
        if kind == VisType::Line && c.channel == "x" {
            e["sort"] = json!("ascending");
        }
        enc.insert(c.channel.to_string(), e);
    }
    let doc = json!({
        "$schema": VEGA_LITE_SCHEMA,
        "description": title(q),
        "mark": {"type": mark},
        "encoding": enc,
        "data": {"values": values},
    });
    Ok(VisSpec {
        kind,
        document: serde_json::to_string_pretty(&doc).expect("spec serializes"),
        center: None,
        zoom: None,
        mark: Some(mark),
        encodings,
        lines: Vec::new(),
    })
}

fn title(q: &TvlQuery) -> String {
    let mut t = format!("{} chart", q.vis);
    if let Some(a) = &q.area {
        t.push_str(&format!(" in {a}"));
    }
    if let Some(w) = &q.time {
        t.push_str(&format!(" from {} to {}", w.start, w.end));
    }
    t
}

const MAP_COLUMNS: [&str; 5] = ["user_id", "traj_id", "longitude", "latitude", "datetime"];

fn map_spec(q: &TvlQuery, r: &ResultTable, registry: &AreaRegistry) -> Result<VisSpec, VisError> {
    let area_ref = q.area.as_ref().ok_or_else(|| shape(VisType::Map, "map needs an area"))?;
    let area = registry.get(area_ref).ok_or_else(|| VisError::UnknownArea(area_ref.to_string()))?;
    let center = area_centroid(area);
    let zoom = area_zoom(area);

    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(MAP_COLUMNS) {
        *slot = r
            .column_index(name)
            .ok_or_else(|| shape(VisType::Map, format!("result lacks column `{name}`")))?;
    }
    let [iu, it, ilon, ilat, idt] = idx;

    let mut by_traj: BTreeMap<(i64, i64), Vec<(Timestamp, LonLat)>> = BTreeMap::new();
    for row in &r.rows {
        let (Value::Int(u), Value::Int(t), Value::Timestamp(dt)) = (&row[iu], &row[it], &row[idt]) else {
            return Err(shape(VisType::Map, "user_id/traj_id/datetime have unexpected types"));
        };
        let (Some(lon), Some(lat)) = (row[ilon].as_f64(), row[ilat].as_f64()) else {
            return Err(shape(VisType::Map, "non-numeric coordinates"));
        };
        by_traj.entry((*u, *t)).or_default().push((*dt, LonLat::new(lon, lat)));
    }
    let lines: Vec<TrajectoryLine> = by_traj
        .into_iter()
        .map(|((user_id, traj_id), mut pts)| {
            pts.sort_by(|a, b| a.0.cmp(&b.0));
            TrajectoryLine {
                user_id,
                traj_id,
                times: pts.iter().map(|p| p.0).collect(),
                coordinates: pts.iter().map(|p| p.1).collect(),
            }
        })
        .collect();

    let features: Vec<Json> = lines
        .iter()
        .map(|l| {
            json!({
                "type": "Feature",
                "properties": {
                    "user_id": l.user_id,
                    "traj_id": l.traj_id,
                    "times": l.times.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
                },
                "geometry": {
                    "type": "LineString",
                    "coordinates": l.coordinates.iter().map(|p| [p.lon, p.lat]).collect::<Vec<_>>(),
                },
            })
        })
        .collect();
    let doc = json!({
        "type": "FeatureCollection",
        "metadata": {
            "kind": "map",
            "area": area.name.as_str(),
            "description": title(q),
            "center": [center.lon, center.lat],
            "zoom": zoom,
            "viewport": [VIEWPORT.0, VIEWPORT.1],
        },
        "data": {"values": records(r)},
        "features": features,
    });
    Ok(VisSpec {
        kind: VisType::Map,
        document: serde_json::to_string_pretty(&doc).expect("spec serializes"),
        center: Some(center),
        zoom: Some(zoom),
        mark: None,
        encodings: Vec::new(),
        lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Polygon;
    use crate::tvl::{parse_tvl, AreaRef};

    fn registry() -> AreaRegistry {
        AreaRegistry::new(vec![AreaRecord {
            name: AreaRef::new("Beijing, China").unwrap(),
            province: "Beijing".into(),
            polygon: Polygon::rectangle(LonLat::new(116.0, 39.6), LonLat::new(116.8, 40.2)),
        }])
        .unwrap()
    }

    fn doc(spec: &VisSpec) -> Json {
        serde_json::from_str(&spec.document).unwrap()
    }

    #[test]
    fn pie_theta_values() {
        let q = parse_tvl("VISUALIZE pie AREA \"Beijing, China\" SQL SELECT travel_mode, COUNT(*) FROM traj_data GROUP BY travel_mode").unwrap();
        let r = ResultTable {
            columns: vec!["travel_mode".into(), "COUNT(*)".into()],
            rows: vec![vec![Value::Text("walk".into()), Value::Int(4)], vec![Value::Text("bus".into()), Value::Int(6)]],
        };
        let spec = emit_spec(&q, &r, &registry()).unwrap();
        let d = doc(&spec);
        assert_eq!(d["mark"]["type"], "arc");
        assert_eq!(d["encoding"]["theta"]["field"], "COUNT(*)");
        assert_eq!(d["encoding"]["color"]["field"], "travel_mode");
        let thetas: Vec<i64> = d["data"]["values"].as_array().unwrap().iter().map(|v| v["COUNT(*)"].as_i64().unwrap()).collect();
        assert_eq!(thetas, [4, 6]);
        assert!(spec.center.is_none());
    }

    #[test]
    fn empty_map_has_center_and_no_features() {
        let q = parse_tvl("VISUALIZE map AREA \"Beijing, China\" SQL SELECT user_id, traj_id, latitude, longitude, datetime FROM traj_data").unwrap();
        let r = ResultTable {
            columns: ["user_id", "traj_id", "latitude", "longitude", "datetime"].map(String::from).to_vec(),
            rows: vec![],
        };
        let spec = emit_spec(&q, &r, &registry()).unwrap();
        let c = spec.center.unwrap();
        assert!((c.lon - 116.4).abs() < 1e-12 && (c.lat - 39.9).abs() < 1e-12);
        assert_eq!(doc(&spec)["features"].as_array().unwrap().len(), 0);
        assert!(spec.zoom.unwrap() > 5.0 && spec.zoom.unwrap() < 12.0);
    }

    #[test]
    fn map_lines_are_time_ordered() {
        let q = parse_tvl("VISUALIZE map AREA \"Beijing, China\" SQL SELECT user_id, traj_id, latitude, longitude, datetime FROM traj_data").unwrap();
        let row = |t: i64, lon: f64, dt: &str| {
            vec![Value::Int(1), Value::Int(t), Value::Float(40.0), Value::Float(lon), Value::Timestamp(Timestamp::parse(dt).unwrap())]
        };
        let r = ResultTable {
            columns: ["user_id", "traj_id", "latitude", "longitude", "datetime"].map(String::from).to_vec(),
            rows: vec![row(2, 116.3, "2010-01-01 00:00:09"), row(2, 116.2, "2010-01-01 00:00:01"), row(3, 116.1, "2010-01-01 00:00:00")],
        };
        let spec = emit_spec(&q, &r, &registry()).unwrap();
        assert_eq!(spec.lines.len(), 2);
        assert_eq!(spec.lines[0].coordinates[0].lon, 116.2);
        assert!(spec.lines.iter().all(|l| l.times.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn map_without_geometry_columns_is_shape_mismatch() {
        let q = parse_tvl("VISUALIZE map AREA \"Beijing, China\" SQL SELECT user_id FROM traj_data").unwrap();
        let r = ResultTable { columns: vec!["user_id".into()], rows: vec![] };
        assert!(matches!(emit_spec(&q, &r, &registry()), Err(VisError::ShapeMismatch { .. })));
    }

    #[test]
    fn line_sorted_by_x_and_deterministic() {
        let q = parse_tvl("VISUALIZE line SQL SELECT datetime, altitude FROM traj_data WHERE user_id = 1").unwrap();
        let row = |dt: &str, a: f64| vec![Value::Timestamp(Timestamp::parse(dt).unwrap()), Value::Float(a)];
        let r = ResultTable {
            columns: vec!["datetime".into(), "altitude".into()],
            rows: vec![row("2010-01-01 00:00:02", 2.0), row("2010-01-01 00:00:01", 1.0)],
        };
        let a = emit_spec(&q, &r, &registry()).unwrap();
        let d = doc(&a);
        assert_eq!(d["encoding"]["x"]["type"], "temporal");
        assert_eq!(d["data"]["values"][0]["altitude"], 1.0);
        assert_eq!(a.document, emit_spec(&q, &r, &registry()).unwrap().document);
    }

    #[test]
    fn centroid_of_unit_square() {
        let a = AreaRecord {
            name: AreaRef::new("Unit").unwrap(),
            province: String::new(),
            polygon: Polygon::rectangle(LonLat::new(0.0, 0.0), LonLat::new(1.0, 1.0)),
        };
        assert_eq!(area_centroid(&a), LonLat::new(0.5, 0.5));
    }
}
