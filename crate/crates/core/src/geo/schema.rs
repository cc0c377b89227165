//! The two-table relational schema of the trajectory store.
//!
//! `traj_data` holds one row per GPS fix with the travel mode denormalized
//! onto it; `traj_labels` is the per-trajectory label side-table used by
//! JOIN templates.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Int,
    Float,
    Text,
    Timestamp,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Int | ColumnType::Float)
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::Int => "integer",
            ColumnType::Float => "float",
            ColumnType::Text => "text",
            ColumnType::Timestamp => "timestamp",
        })
    }
}

/// Which source columns stand in for the `geometry_column` and
/// `datetime_column` of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometryBinding {
    pub lon_column: &'static str,
    pub lat_column: &'static str,
    pub datetime_column: &'static str,
}

impl GeometryBinding {
    /// SQL expression for the point geometry, `ST_Point(lon, lat)`.
    pub fn geometry_expr(&self, qualifier: Option<&str>) -> String {
        match qualifier {
            Some(t) => format!("ST_Point({t}.{}, {t}.{})", self.lon_column, self.lat_column),
            None => format!("ST_Point({}, {})", self.lon_column, self.lat_column),
        }
    }
}

#[derive(Debug)]
pub struct TableSchema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, ColumnType)],
    pub geometry: Option<GeometryBinding>,
}

impl TableSchema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(c, _)| c.eq_ignore_ascii_case(name))
    }

    pub fn column_type(&self, idx: usize) -> ColumnType {
        self.columns[idx].1
    }
}

pub const TRAJ_DATA: TableSchema = TableSchema {
    name: "traj_data",
    columns: &[
        ("user_id", ColumnType::Int),
        ("traj_id", ColumnType::Int),
        ("latitude", ColumnType::Float),
        ("longitude", ColumnType::Float),
        ("altitude", ColumnType::Float),
        ("datetime", ColumnType::Timestamp),
        ("travel_mode", ColumnType::Text),
    ],
    geometry: Some(GeometryBinding {
        lon_column: "longitude",
        lat_column: "latitude",
        datetime_column: "datetime",
    }),
};

pub const TRAJ_LABELS: TableSchema = TableSchema {
    name: "traj_labels",
    columns: &[
        ("user_id", ColumnType::Int),
        ("traj_id", ColumnType::Int),
        ("travel_mode", ColumnType::Text),
    ],
    geometry: None,
};

pub static TABLES: [&TableSchema; 2] = [&TRAJ_DATA, &TRAJ_LABELS];

/// Table names are matched case-insensitively.
pub fn table_schema(name: &str) -> Option<&'static TableSchema> {
    TABLES.iter().copied().find(|t| t.name.eq_ignore_ascii_case(name))
}
