//! Compiles a [`TvlQuery`] into a PostGIS-flavoured SQL statement by
//! injecting the area geofence and the time window into the WHERE clause.
//!
//! Injected predicates come first (spatial, then temporal), followed by the
//! skeleton's own predicates in canonical order, all AND-joined.

use thiserror::Error;

use crate::geo::schema::{table_schema, GeometryBinding};
use crate::geo::AreaRegistry;
use crate::tvl::{
    render_join, render_order_key, render_select_item, validate, AreaRef, ColumnRef, SelectItem, SqlSkeleton,
    TimeWindow, TvlQuery, Violation,
};

pub const DIALECT: &str = "postgis-like";

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("query is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown area `{0}`")]
    UnknownArea(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("table `{0}` has no geometry/datetime column binding")]
    MissingGeometryColumn(String),
}

/// `ST_Within(point(lon, lat), area)` over the area's registry polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFilter {
    pub area: AreaRef,
    pub lon: ColumnRef,
    pub lat: ColumnRef,
}

/// `column BETWEEN start AND end`, inclusive at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalFilter {
    pub column: ColumnRef,
    pub window: TimeWindow,
}

/// Structured form of a compiled statement, consumed by the executor.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub skeleton: SqlSkeleton,
    pub spatial: Option<SpatialFilter>,
    pub temporal: Option<TemporalFilter>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSql {
    pub text: String,
    /// Spatial and temporal predicate texts added during compilation.
    pub injected_predicates: Vec<String>,
    pub dialect: &'static str,
    pub plan: QueryPlan,
}

/// Column pair standing in for `geometry_column` / `datetime_column`.
pub fn geometry_binding(table: &str) -> Result<GeometryBinding, CompileError> {
    table_schema(table)
        .ok_or_else(|| CompileError::UnknownTable(table.to_string()))?
        .geometry
        .ok_or_else(|| CompileError::MissingGeometryColumn(table.to_string()))
}

pub fn compile_to_sql(q: &TvlQuery, registry: &AreaRegistry) -> Result<CompiledSql, CompileError> {
    let violations = validate(q);
    if !violations.is_empty() {
        return Err(CompileError::Invalid(violations));
    }
    let sql = &q.sql;
    for table in sql.tables() {
        if table_schema(table).is_none() {
            return Err(CompileError::UnknownTable(table.to_string()));
        }
    }

    let needs_binding = q.area.is_some() || q.time.is_some();
    let binding = if needs_binding { Some(geometry_binding(&sql.from)?) } else { None };
    // Qualify injected columns once other tables are in scope.
    let qualifier = (!sql.joins.is_empty()).then_some(sql.from.as_str());
    let col = |name: &str| match qualifier {
        Some(t) => ColumnRef::qualified(t, name),
        None => ColumnRef::bare(name),
    };

    let mut injected = Vec::new();
    let mut spatial = None;
    if let Some(area) = &q.area {
        let b = binding.expect("binding resolved when area present");
        let record = registry.get(area).ok_or_else(|| CompileError::UnknownArea(area.to_string()))?;
        injected.push(format!(
            "ST_Within({}, ST_GeomFromText('{}'))",
            b.geometry_expr(qualifier),
            record.polygon.to_wkt()
        ));
        spatial = Some(SpatialFilter { area: record.name.clone(), lon: col(b.lon_column), lat: col(b.lat_column) });
    }
    let mut temporal = None;
    if let Some(w) = &q.time {
        let b = binding.expect("binding resolved when time present");
        let column = col(b.datetime_column);
        injected.push(format!("{column} BETWEEN '{}' AND '{}'", w.start, w.end));
        temporal = Some(TemporalFilter { column, window: *w });
    }

    let text = render_statement(sql, &injected);
    Ok(CompiledSql {
        text,
        injected_predicates: injected,
        dialect: DIALECT,
        plan: QueryPlan { skeleton: sql.clone(), spatial, temporal },
    })
}

fn date_trunc(unit: &str, column: &ColumnRef) -> String {
    format!("date_trunc('{}', {column})", unit.to_ascii_lowercase())
}

/// Renders the executable statement. A `BIN col BY unit` clause becomes
/// `date_trunc` in the select list and the GROUP BY.
fn render_statement(sql: &SqlSkeleton, injected: &[String]) -> String {
    let bin = sql.bin();
    let items: Vec<String> = sql
        .select
        .iter()
        .map(|item| match (item, bin) {
            (SelectItem::Column { column, alias }, Some(b)) if b.column.may_alias(column) => {
                let name = alias.clone().unwrap_or_else(|| column.name.clone());
                format!("{} AS {name}", date_trunc(b.unit.keyword(), column))
            }
            _ => render_select_item(item),
        })
        .collect();
    let mut out = format!("SELECT {} FROM {}", items.join(", "), sql.from);
    for j in &sql.joins {
        out.push(' ');
        out.push_str(&render_join(j));
    }

    let predicates: Vec<String> =
        injected.iter().cloned().chain(sql.filter.iter().map(|p| p.to_string())).collect();
    if !predicates.is_empty() {
        out.push_str(" WHERE ");
        out.push_str(&predicates.join(" AND "));
    }

    let mut group: Vec<String> = sql
        .group_keys()
        .iter()
        .map(|k| match bin {
            Some(b) if b.column.may_alias(k) => date_trunc(b.unit.keyword(), k),
            _ => k.to_string(),
        })
        .collect();
    if let Some(b) = bin {
        if !sql.group_keys().iter().any(|k| b.column.may_alias(k)) {
            group.push(date_trunc(b.unit.keyword(), &b.column));
        }
    }
    if !group.is_empty() {
        out.push_str(" GROUP BY ");
        out.push_str(&group.join(", "));
    }
    if !sql.order_by.is_empty() {
        let keys: Vec<String> = sql.order_by.iter().map(render_order_key).collect();
        out.push_str(" ORDER BY ");
        out.push_str(&keys.join(", "));
    }
    out
}
