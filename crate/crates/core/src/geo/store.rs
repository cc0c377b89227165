//! In-memory trajectory store and its file importers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::polygon::LonLat;
use super::schema::{TableSchema, TRAJ_DATA, TRAJ_LABELS};
use super::value::Value;
use crate::tvl::Timestamp;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("trajectory file: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("point out of range: user {user_id} traj {traj_id} at ({latitude}, {longitude})")]
    OutOfRange { user_id: i64, traj_id: i64, latitude: f64, longitude: f64 },
    #[error("duplicate point: user {user_id} traj {traj_id} at {datetime}")]
    DuplicatePoint { user_id: i64, traj_id: i64, datetime: Timestamp },
    #[error("trajectory {traj_id} belongs to users {first} and {second}")]
    SharedTrajectory { traj_id: i64, first: i64, second: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub user_id: i64,
    pub traj_id: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: Option<f64>,
    pub datetime: Timestamp,
    pub travel_mode: Option<String>,
}

impl TrajPoint {
    pub fn position(&self) -> LonLat {
        LonLat::new(self.longitude, self.latitude)
    }
}

/// One row of the label side-table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajLabel {
    pub user_id: i64,
    pub traj_id: i64,
    pub travel_mode: String,
}

/// Points sorted by `(user_id, traj_id, datetime)` plus the derived label
/// side-table. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct TrajStore {
    points: Vec<TrajPoint>,
    labels: Vec<TrajLabel>,
}

impl TrajStore {
    /// Checks coordinate ranges, key uniqueness and that each trajectory id
    /// belongs to one user, then sorts.
    pub fn new(mut points: Vec<TrajPoint>) -> Result<TrajStore, StoreError> {
        let mut owner: HashMap<i64, i64> = HashMap::new();
        for p in &points {
            if !(-90.0..=90.0).contains(&p.latitude) || !(-180.0..=180.0).contains(&p.longitude) {
                return Err(StoreError::OutOfRange {
                    user_id: p.user_id,
                    traj_id: p.traj_id,
                    latitude: p.latitude,
                    longitude: p.longitude,
                });
            }
            let first = *owner.entry(p.traj_id).or_insert(p.user_id);
            if first != p.user_id {
                return Err(StoreError::SharedTrajectory { traj_id: p.traj_id, first, second: p.user_id });
            }
        }
        points.sort_by(|a, b| (a.user_id, a.traj_id, a.datetime).cmp(&(b.user_id, b.traj_id, b.datetime)));
        if let Some(w) = points
            .windows(2)
            .find(|w| (w[0].user_id, w[0].traj_id, w[0].datetime) == (w[1].user_id, w[1].traj_id, w[1].datetime))
        {
            return Err(StoreError::DuplicatePoint {
                user_id: w[0].user_id,
                traj_id: w[0].traj_id,
                datetime: w[0].datetime,
            });
        }
        let labels = derive_labels(&points);
        Ok(TrajStore { points, labels })
    }

    pub fn points(&self) -> &[TrajPoint] {
        &self.points
    }

    pub fn labels(&self) -> &[TrajLabel] {
        &self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row_count(&self, table: &TableSchema) -> usize {
        if table.name == TRAJ_LABELS.name {
            self.labels.len()
        } else {
            self.points.len()
        }
    }

    /// Cell accessor keyed by the column order of [`TRAJ_DATA`] / [`TRAJ_LABELS`].
    pub fn cell(&self, table: &TableSchema, row: usize, col: usize) -> Value {
        if table.name == TRAJ_LABELS.name {
            let l = &self.labels[row];
            return match col {
                0 => Value::Int(l.user_id),
                1 => Value::Int(l.traj_id),
                _ => Value::Text(l.travel_mode.clone()),
            };
        }
        debug_assert_eq!(table.name, TRAJ_DATA.name);
        let p = &self.points[row];
        match col {
            0 => Value::Int(p.user_id),
            1 => Value::Int(p.traj_id),
            2 => Value::Float(p.latitude),
            3 => Value::Float(p.longitude),
            4 => p.altitude.map_or(Value::Null, Value::Float),
            5 => Value::Timestamp(p.datetime),
            _ => p.travel_mode.clone().map_or(Value::Null, Value::Text),
        }
    }

    pub fn distinct_users(&self) -> Vec<i64> {
        let set: HashSet<i64> = self.points.iter().map(|p| p.user_id).collect();
        let mut v: Vec<i64> = set.into_iter().collect();
        v.sort_unstable();
        v
    }

    pub fn distinct_modes(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .points
            .iter()
            .filter_map(|p| p.travel_mode.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        v.sort();
        v
    }

    /// Reads the delimited point format
    /// `user_id,traj_id,latitude,longitude,altitude,datetime,travel_mode`.
    /// Empty altitude or travel_mode cells become NULL.
    pub fn from_csv<R: Read>(reader: R) -> Result<TrajStore, StoreError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected: Vec<&str> = TRAJ_DATA.columns.iter().map(|(c, _)| *c).collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(StoreError::BadRecord {
                line: 1,
                reason: format!("header must be `{}`", expected.join(",")),
            });
        }
        let mut points = Vec::new();
        for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = rec?;
            let datetime = Timestamp::parse(&row.datetime).ok_or_else(|| StoreError::BadRecord {
                line: i + 2,
                reason: format!("bad datetime `{}`", row.datetime),
            })?;
            points.push(TrajPoint {
                user_id: row.user_id,
                traj_id: row.traj_id,
                latitude: row.latitude,
                longitude: row.longitude,
                altitude: row.altitude,
                datetime,
                travel_mode: row.travel_mode.filter(|m| !m.is_empty()),
            });
        }
        TrajStore::new(points)
    }

    /// Writes the same format [`TrajStore::from_csv`] reads; the header comes
    /// from the row struct.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StoreError> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(CsvRow {
                user_id: p.user_id,
                traj_id: p.traj_id,
                latitude: p.latitude,
                longitude: p.longitude,
                altitude: p.altitude,
                datetime: p.datetime.to_string(),
                travel_mode: p.travel_mode.clone(),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    user_id: i64,
    traj_id: i64,
    latitude: f64,
    longitude: f64,
    altitude: Option<f64>,
    datetime: String,
    travel_mode: Option<String>,
}

/// Most frequent mode per trajectory, ties to the alphabetically first.
fn derive_labels(points: &[TrajPoint]) -> Vec<TrajLabel> {
    let mut counts: BTreeMap<(i64, i64), BTreeMap<&str, usize>> = BTreeMap::new();
    for p in points {
        if let Some(m) = &p.travel_mode {
            *counts.entry((p.user_id, p.traj_id)).or_default().entry(m).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|((user_id, traj_id), modes)| {
            let best = modes.iter().max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0))).unwrap();
            TrajLabel { user_id, traj_id, travel_mode: best.0.to_string() }
        })
        .collect()
}

const FEET_TO_METERS: f64 = 0.3048;
/// GeoLife marks a missing altitude with -777 feet.
const PLT_MISSING_ALTITUDE: f64 = -777.0;

/// Reads one GeoLife `.plt` file: six header lines, then
/// `lat,lon,0,altitude_feet,days,date,time` per line.
pub fn import_plt<R: BufRead>(
    reader: R,
    user_id: i64,
    traj_id: i64,
    travel_mode: Option<&str>,
) -> Result<Vec<TrajPoint>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i < 6 || line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| StoreError::BadRecord { line: i + 1, reason: reason.to_string() };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 7 {
            return Err(bad("expected 7 comma-separated fields"));
        }
        let latitude: f64 = fields[0].parse().map_err(|_| bad("bad latitude"))?;
        let longitude: f64 = fields[1].parse().map_err(|_| bad("bad longitude"))?;
        let feet: f64 = fields[3].parse().map_err(|_| bad("bad altitude"))?;
        let stamp = format!("{} {}", fields[5], fields[6]);
        let datetime = NaiveDateTime::parse_from_str(&stamp, "%Y-%m-%d %H:%M:%S")
            .map(Timestamp)
            .map_err(|_| bad("bad date/time"))?;
        out.push(TrajPoint {
            user_id,
            traj_id,
            latitude,
            longitude,
            altitude: (feet != PLT_MISSING_ALTITUDE).then_some(feet * FEET_TO_METERS),
            datetime,
            travel_mode: travel_mode.map(str::to_string),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    fn point(user: i64, traj: i64, t: &str, mode: &str) -> TrajPoint {
        TrajPoint {
            user_id: user,
            traj_id: traj,
            latitude: 40.0,
            longitude: 116.0,
            altitude: Some(50.0),
            datetime: ts(t),
            travel_mode: Some(mode.into()),
        }
    }

    #[test]
    fn sorts_and_derives_labels() {
        let store = TrajStore::new(vec![
            point(1, 2, "2010-01-01 00:00:10", "walk"),
            point(1, 2, "2010-01-01 00:00:00", "bus"),
            point(1, 2, "2010-01-01 00:00:20", "bus"),
            point(0, 1, "2010-01-01 00:00:00", "car"),
        ])
        .unwrap();
        assert_eq!(store.points()[0].user_id, 0);
        assert_eq!(store.points()[1].datetime, ts("2010-01-01 00:00:00"));
        assert_eq!(store.labels().len(), 2);
        assert_eq!(store.labels()[1].travel_mode, "bus");
    }

    #[test]
    fn rejects_duplicates_and_shared_ids() {
        let dup = TrajStore::new(vec![point(1, 1, "2010-01-01 00:00:00", "a"), point(1, 1, "2010-01-01 00:00:00", "b")]);
        assert!(matches!(dup, Err(StoreError::DuplicatePoint { .. })));
        let shared = TrajStore::new(vec![point(1, 1, "2010-01-01 00:00:00", "a"), point(2, 1, "2010-01-01 00:00:01", "a")]);
        assert!(matches!(shared, Err(StoreError::SharedTrajectory { .. })));
        let mut p = point(1, 1, "2010-01-01 00:00:00", "a");
        p.latitude = 91.0;
        assert!(matches!(TrajStore::new(vec![p]), Err(StoreError::OutOfRange { .. })));
    }

    #[test]
    fn csv_round_trip_with_nulls() {
        let text = "user_id,traj_id,latitude,longitude,altitude,datetime,travel_mode\n\
                    3,7,40.1,116.3,,2009-05-01 10:00:00,\n\
                    3,7,40.2,116.4,12.5,2009-05-01 10:00:05,walk\n";
        let store = TrajStore::from_csv(text.as_bytes()).unwrap();
        assert_eq!(store.points()[0].altitude, None);
        assert_eq!(store.points()[0].travel_mode, None);
        let mut buf = Vec::new();
        store.write_csv(&mut buf).unwrap();
        let again = TrajStore::from_csv(buf.as_slice()).unwrap();
        assert_eq!(again.points(), store.points());
    }

    #[test]
    fn csv_requires_header() {
        let text = "3,7,40.1,116.3,,2009-05-01 10:00:00,\n";
        assert!(TrajStore::from_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn plt_import_converts_feet() {
        let plt = "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n\
                   39.984702,116.318417,0,492,39744.1201851852,2008-10-23,02:53:04\n\
                   39.984683,116.31845,0,-777,39744.1202546296,2008-10-23,02:53:10\n";
        let pts = import_plt(plt.as_bytes(), 0, 20081023025304, Some("walk")).unwrap();
        assert_eq!(pts.len(), 2);
        assert!((pts[0].altitude.unwrap() - 149.9616).abs() < 1e-9);
        assert_eq!(pts[1].altitude, None);
        assert_eq!(pts[0].datetime, ts("2008-10-23 02:53:04"));
    }
}
