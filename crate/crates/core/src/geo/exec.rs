//! Reference executor for compiled statements over a [`TrajStore`].
//!
//! Works on the structured [`QueryPlan`] rather than the SQL text. A row in
//! flight is a tuple of row indices, one per table in scope.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde_json::{Map, Value as Json};
use thiserror::Error;

use super::registry::AreaRegistry;
use super::schema::{table_schema, ColumnType, TableSchema};
use super::store::TrajStore;
use super::value::Value;
use super::polygon::LonLat;
use crate::sqlgen::{CompiledSql, QueryPlan};
use crate::tvl::{AggArg, AggFunc, CmpOp, ColumnRef, Comparison, Direction, Scalar, SelectItem, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is ambiguous")]
    AmbiguousColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unknown area `{0}`")]
    UnknownArea(String),
}

/// Named columns plus rows in final order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows as JSON objects keyed by column name.
    pub fn to_records(&self) -> Vec<Json> {
        self.rows
            .iter()
            .map(|row| {
                let obj: Map<String, Json> =
                    self.columns.iter().cloned().zip(row.iter().map(Value::to_json)).collect();
                Json::Object(obj)
            })
            .collect()
    }
}

pub fn execute(compiled: &CompiledSql, store: &TrajStore, registry: &AreaRegistry) -> Result<ResultTable, ExecError> {
    execute_plan(&compiled.plan, store, registry)
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    table: usize,
    col: usize,
    ty: ColumnType,
}

struct Scope<'a> {
    tables: Vec<&'static TableSchema>,
    store: &'a TrajStore,
}

impl Scope<'_> {
    fn resolve(&self, c: &ColumnRef) -> Result<Slot, ExecError> {
        let mut found = None;
        for (ti, t) in self.tables.iter().enumerate() {
            if c.table.as_ref().is_some_and(|q| !q.eq_ignore_ascii_case(t.name)) {
                continue;
            }
            if let Some(ci) = t.column_index(&c.name) {
                if found.is_some() {
                    return Err(ExecError::AmbiguousColumn(c.to_string()));
                }
                found = Some(Slot { table: ti, col: ci, ty: t.column_type(ci) });
            }
        }
        found.ok_or_else(|| ExecError::UnknownColumn(c.to_string()))
    }

    fn get(&self, s: Slot, row: &[usize]) -> Value {
        self.store.cell(self.tables[s.table], row[s.table], s.col)
    }
}

/// A filter literal converted to the column's domain.
#[derive(Debug, Clone)]
enum Operand {
    Num(f64, Option<i64>),
    Text(String),
    Time(Timestamp),
}

fn operand(column: &ColumnRef, ty: ColumnType, s: &Scalar) -> Result<Operand, ExecError> {
    let mismatch = || ExecError::TypeMismatch(format!("`{column}` is {ty} but is compared with {s}"));
    match (ty, s) {
        (ColumnType::Int | ColumnType::Float, Scalar::Int(v)) => Ok(Operand::Num(*v as f64, Some(*v))),
        (ColumnType::Int | ColumnType::Float, Scalar::Float(v)) => Ok(Operand::Num(*v, None)),
        (ColumnType::Text, Scalar::Text(v)) => Ok(Operand::Text(v.clone())),
        (ColumnType::Timestamp, Scalar::Text(v)) => Timestamp::parse(v).map(Operand::Time).ok_or_else(mismatch),
        _ => Err(mismatch()),
    }
}

/// SQL comparison; `None` when the cell is NULL.
fn compare(cell: &Value, op: &Operand) -> Option<Ordering> {
    match (cell, op) {
        (Value::Int(a), Operand::Num(_, Some(b))) => Some(a.cmp(b)),
        (Value::Int(_) | Value::Float(_), Operand::Num(b, _)) => cell.as_f64()?.partial_cmp(b),
        (Value::Text(a), Operand::Text(b)) => Some(a.as_str().cmp(b.as_str())),
        (Value::Timestamp(a), Operand::Time(b)) => Some(a.cmp(b)),
        _ => None,
    }
}

enum Filter {
    Binary(Slot, CmpOp, Operand),
    In(Slot, Vec<Operand>),
}

impl Filter {
    fn holds(&self, scope: &Scope, row: &[usize]) -> bool {
        match self {
            Filter::Binary(slot, op, v) => compare(&scope.get(*slot, row), v).is_some_and(|o| op.holds(o)),
            Filter::In(slot, vs) => {
                let cell = scope.get(*slot, row);
                vs.iter().any(|v| compare(&cell, v) == Some(Ordering::Equal))
            }
        }
    }
}

pub fn execute_plan(plan: &QueryPlan, store: &TrajStore, registry: &AreaRegistry) -> Result<ResultTable, ExecError> {
    let sql = &plan.skeleton;
    let mut tables = Vec::new();
    for name in sql.tables() {
        tables.push(table_schema(name).ok_or_else(|| ExecError::UnknownTable(name.to_string()))?);
    }
    let scope = Scope { tables, store };

    // Scan the FROM table under the injected spatial/temporal constraints.
    let spatial = match &plan.spatial {
        Some(s) => {
            let area = registry.get(&s.area).ok_or_else(|| ExecError::UnknownArea(s.area.to_string()))?;
            let lon = scope.resolve(&s.lon)?;
            let lat = scope.resolve(&s.lat)?;
            Some((area, lon, lat))
        }
        None => None,
    };
    let temporal = match &plan.temporal {
        Some(t) => Some((scope.resolve(&t.column)?, t.window)),
        None => None,
    };
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for r in 0..store.row_count(scope.tables[0]) {
        let row = [r];
        if let Some((area, lon, lat)) = &spatial {
            let (Some(x), Some(y)) = (scope.get(*lon, &row).as_f64(), scope.get(*lat, &row).as_f64()) else {
                continue;
            };
            if !area.contains(LonLat::new(x, y)) {
                continue;
            }
        }
        if let Some((slot, window)) = &temporal {
            match scope.get(*slot, &row) {
                Value::Timestamp(t) if window.contains(t) => {}
                _ => continue,
            }
        }
        rows.push(vec![r]);
    }

    for (ji, join) in sql.joins.iter().enumerate() {
        let new_table = ji + 1;
        let partial = Scope { tables: scope.tables[..=new_table].to_vec(), store };
        let l = partial.resolve(&join.left)?;
        let r = partial.resolve(&join.right)?;
        let (inner, outer) = match (l.table == new_table, r.table == new_table) {
            (true, false) => (l, r),
            (false, true) => (r, l),
            _ => {
                return Err(ExecError::UnknownColumn(format!(
                    "join condition {} = {} must link {} to an earlier table",
                    join.left, join.right, join.table
                )))
            }
        };
        if inner.ty.is_numeric() != outer.ty.is_numeric() || (!inner.ty.is_numeric() && inner.ty != outer.ty) {
            return Err(ExecError::TypeMismatch(format!("cannot join {} with {}", join.left, join.right)));
        }
        let mut index: BTreeMap<Value, Vec<usize>> = BTreeMap::new();
        for ir in 0..store.row_count(scope.tables[new_table]) {
            let v = store.cell(scope.tables[new_table], ir, inner.col);
            if !v.is_null() {
                index.entry(v).or_default().push(ir);
            }
        }
        let mut joined = Vec::new();
        for row in rows {
            let key = partial.get(outer, &row);
            if let Some(matches) = index.get(&key) {
                for &ir in matches {
                    let mut next = row.clone();
                    next.push(ir);
                    joined.push(next);
                }
            }
        }
        rows = joined;
    }

    let mut filters = Vec::new();
    for p in &sql.filter {
        let slot = scope.resolve(&p.column)?;
        filters.push(match &p.cmp {
            Comparison::Binary(op, v) => Filter::Binary(slot, *op, operand(&p.column, slot.ty, v)?),
            Comparison::In(vs) => Filter::In(
                slot,
                vs.iter().map(|v| operand(&p.column, slot.ty, v)).collect::<Result<_, _>>()?,
            ),
        });
    }
    rows.retain(|row| filters.iter().all(|f| f.holds(&scope, row)));

    let columns: Vec<String> = sql.select.iter().map(SelectItem::output_name).collect();
    let mut out = if sql.is_grouped() {
        grouped(plan, &scope, &rows, &columns)?
    } else {
        ungrouped(plan, &scope, &rows, &columns)?
    };
    out.columns = columns;
    Ok(out)
}

fn output_index(columns: &[String], key: &ColumnRef) -> Option<usize> {
    key.table.is_none().then(|| columns.iter().position(|c| *c == key.name)).flatten()
}

fn directed(ord: Ordering, d: Direction) -> Ordering {
    match d {
        Direction::Asc => ord,
        Direction::Desc => ord.reverse(),
    }
}

fn ungrouped(plan: &QueryPlan, scope: &Scope, rows: &[Vec<usize>], columns: &[String]) -> Result<ResultTable, ExecError> {
    let sql = &plan.skeleton;
    let mut slots = Vec::with_capacity(sql.select.len());
    for item in &sql.select {
        match item {
            SelectItem::Column { column, .. } => slots.push(scope.resolve(column)?),
            SelectItem::Aggregate { .. } => unreachable!("aggregates imply grouping"),
        }
    }
    // Order keys name an output column or fall back to a source column.
    enum Key {
        Out(usize),
        Src(Slot),
    }
    let mut keys = Vec::new();
    for k in &sql.order_by {
        let key = match output_index(columns, &k.key) {
            Some(i) => Key::Out(i),
            None => Key::Src(scope.resolve(&k.key)?),
        };
        keys.push((key, k.direction));
    }
    let mut staged: Vec<(Vec<Value>, Vec<Value>)> = rows
        .iter()
        .map(|row| {
            let out: Vec<Value> = slots.iter().map(|s| scope.get(*s, row)).collect();
            let sort: Vec<Value> = keys
                .iter()
                .map(|(k, _)| match k {
                    Key::Out(i) => out[*i].clone(),
                    Key::Src(s) => scope.get(*s, row),
                })
                .collect();
            (sort, out)
        })
        .collect();
    staged.sort_by(|a, b| {
        keys.iter()
            .enumerate()
            .map(|(i, (_, d))| directed(a.0[i].cmp(&b.0[i]), *d))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.1.cmp(&b.1))
    });
    Ok(ResultTable { columns: Vec::new(), rows: staged.into_iter().map(|(_, r)| r).collect() })
}

enum Agg {
    CountStar,
    Count(Slot),
    Sum(Slot),
    Avg(Slot),
    Extreme(Slot, bool),
}

impl Agg {
    fn compile(scope: &Scope, func: AggFunc, arg: &AggArg) -> Result<Agg, ExecError> {
        let slot = match arg {
            AggArg::Star if func == AggFunc::Count => return Ok(Agg::CountStar),
            AggArg::Star => return Err(ExecError::TypeMismatch(format!("{}(*) is not defined", func.keyword()))),
            AggArg::Column(c) => scope.resolve(c)?,
        };
        let numeric_only = |a: Agg| {
            if slot.ty.is_numeric() {
                Ok(a)
            } else {
                Err(ExecError::TypeMismatch(format!("{} over {} column {arg:?}", func.keyword(), slot.ty)))
            }
        };
        match func {
            AggFunc::Count => Ok(Agg::Count(slot)),
            AggFunc::Sum => numeric_only(Agg::Sum(slot)),
            AggFunc::Avg => numeric_only(Agg::Avg(slot)),
            AggFunc::Max => Ok(Agg::Extreme(slot, true)),
            AggFunc::Min => Ok(Agg::Extreme(slot, false)),
        }
    }

    /// NULL inputs are skipped; an aggregate over no values is NULL except
    /// COUNT, which is 0.
    fn eval(&self, scope: &Scope, rows: &[&Vec<usize>]) -> Value {
        let values = |s: &Slot| { let s = *s; rows.iter().map(move |r| scope.get(s, r)).filter(|v| !v.is_null()) };
        match self {
            Agg::CountStar => Value::Int(rows.len() as i64),
            Agg::Count(s) => Value::Int(values(s).count() as i64),
            Agg::Sum(s) if s.ty == ColumnType::Int => {
                let mut it = values(s).peekable();
                if it.peek().is_none() {
                    return Value::Null;
                }
                Value::Int(it.map(|v| if let Value::Int(x) = v { x } else { 0 }).fold(0i64, i64::saturating_add))
            }
            Agg::Sum(s) => {
                let xs: Vec<f64> = values(s).filter_map(|v| v.as_f64()).collect();
                if xs.is_empty() {
                    Value::Null
                } else {
                    Value::Float(xs.iter().sum())
                }
            }
            Agg::Avg(s) => {
                let xs: Vec<f64> = values(s).filter_map(|v| v.as_f64()).collect();
                if xs.is_empty() {
                    Value::Null
                } else {
                    Value::Float(xs.iter().sum::<f64>() / xs.len() as f64)
                }
            }
            Agg::Extreme(s, max) => {
                let it = values(s);
                let best = if *max { it.max() } else { it.min() };
                best.unwrap_or(Value::Null)
            }
        }
    }
}

fn grouped(plan: &QueryPlan, scope: &Scope, rows: &[Vec<usize>], columns: &[String]) -> Result<ResultTable, ExecError> {
    let sql = &plan.skeleton;
    let bin = sql.bin();

    // Group key components: each group key, truncated when it is the binned
    // column, then the bin column if it is not already a key.
    let mut key_refs: Vec<&ColumnRef> = sql.group_keys().iter().collect();
    if let Some(b) = bin {
        if !key_refs.iter().any(|k| b.column.may_alias(k)) {
            key_refs.push(&b.column);
        }
    }
    let mut key_slots = Vec::with_capacity(key_refs.len());
    for k in &key_refs {
        let slot = scope.resolve(k)?;
        let unit = match bin {
            Some(b) if b.column.may_alias(k) => {
                if slot.ty != ColumnType::Timestamp {
                    return Err(ExecError::TypeMismatch(format!("cannot bin {} column `{k}`", slot.ty)));
                }
                Some(b.unit)
            }
            _ => None,
        };
        key_slots.push((slot, unit));
    }

    enum Out {
        Key(usize),
        Agg(Agg),
    }
    let mut outs = Vec::with_capacity(sql.select.len());
    for item in &sql.select {
        outs.push(match item {
            SelectItem::Column { column, .. } => {
                let i = key_refs
                    .iter()
                    .position(|k| k.may_alias(column))
                    .ok_or_else(|| ExecError::UnknownColumn(format!("{column} is not a grouping column")))?;
                Out::Key(i)
            }
            SelectItem::Aggregate { func, arg, .. } => Out::Agg(Agg::compile(scope, *func, arg)?),
        });
    }

    let mut groups: BTreeMap<Vec<Value>, Vec<&Vec<usize>>> = BTreeMap::new();
    for row in rows {
        let key: Vec<Value> = key_slots
            .iter()
            .map(|(s, unit)| match (scope.get(*s, row), unit) {
                (Value::Timestamp(t), Some(u)) => Value::Timestamp(u.truncate(t)),
                (v, _) => v,
            })
            .collect();
        groups.entry(key).or_default().push(row);
    }
    // A global aggregate yields one row even over no input.
    if groups.is_empty() && key_slots.is_empty() {
        groups.insert(Vec::new(), Vec::new());
    }

    enum Key {
        Out(usize),
        Group(usize),
    }
    let mut keys = Vec::new();
    for k in &sql.order_by {
        let key = match output_index(columns, &k.key) {
            Some(i) => Key::Out(i),
            None => Key::Group(
                key_refs
                    .iter()
                    .position(|g| g.may_alias(&k.key))
                    .ok_or_else(|| ExecError::UnknownColumn(k.key.to_string()))?,
            ),
        };
        keys.push((key, k.direction));
    }

    let mut staged: Vec<(Vec<Value>, Vec<Value>)> = groups
        .into_iter()
        .map(|(gk, members)| {
            let out: Vec<Value> = outs
                .iter()
                .map(|o| match o {
                    Out::Key(i) => gk[*i].clone(),
                    Out::Agg(a) => a.eval(scope, &members),
                })
                .collect();
            let sort = keys
                .iter()
                .map(|(k, _)| match k {
                    Key::Out(i) => out[*i].clone(),
                    Key::Group(i) => gk[*i].clone(),
                })
                .collect();
            (sort, out)
        })
        .collect();
    staged.sort_by(|a, b| {
        keys.iter()
            .enumerate()
            .map(|(i, (_, d))| directed(a.0[i].cmp(&b.0[i]), *d))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.1.cmp(&b.1))
    });
    Ok(ResultTable { columns: Vec::new(), rows: staged.into_iter().map(|(_, r)| r).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{AreaRecord, Polygon, TrajPoint};
    use crate::sqlgen::compile_to_sql;
    use crate::tvl::{parse_tvl, AreaRef};

    fn registry() -> AreaRegistry {
        AreaRegistry::new(vec![AreaRecord {
            name: AreaRef::new("Box, Test").unwrap(),
            province: "Test".into(),
            polygon: Polygon::rectangle(LonLat::new(116.0, 40.0), LonLat::new(117.0, 41.0)),
        }])
        .unwrap()
    }

    fn store() -> TrajStore {
        let mk = |u: i64, t: i64, lon: f64, alt: Option<f64>, dt: &str, mode: Option<&str>| TrajPoint {
            user_id: u,
            traj_id: t,
            latitude: 40.5,
            longitude: lon,
            altitude: alt,
            datetime: Timestamp::parse(dt).unwrap(),
            travel_mode: mode.map(str::to_string),
        };
        TrajStore::new(vec![
            mk(1, 10, 116.5, Some(10.0), "2010-01-01 08:00:00", Some("walk")),
            mk(1, 10, 116.6, Some(20.0), "2010-01-01 08:30:00", Some("walk")),
            mk(1, 11, 118.0, Some(30.0), "2010-01-02 09:00:00", Some("bus")),
            mk(2, 20, 116.2, None, "2010-02-01 10:00:00", Some("bus")),
            mk(2, 20, 116.3, Some(50.0), "2010-02-01 10:10:00", None),
        ])
        .unwrap()
    }

    fn run(tvl: &str) -> Result<ResultTable, ExecError> {
        let q = parse_tvl(tvl).unwrap();
        execute(&compile_to_sql(&q, &registry()).unwrap(), &store(), &registry())
    }

    #[test]
    fn area_filter_and_order() {
        let t = run("VISUALIZE map AREA \"Box, Test\" SQL SELECT user_id, longitude FROM traj_data ORDER BY longitude DESC").unwrap();
        assert_eq!(t.columns, ["user_id", "longitude"]);
        let lons: Vec<f64> = t.rows.iter().map(|r| r[1].as_f64().unwrap()).collect();
        assert_eq!(lons, [116.6, 116.5, 116.3, 116.2]);
    }

    #[test]
    fn counts_per_mode_skip_nulls_as_group() {
        let t = run("VISUALIZE bar SQL SELECT travel_mode, COUNT(*) FROM traj_data GROUP BY travel_mode").unwrap();
        assert_eq!(
            t.rows,
            vec![
                vec![Value::Null, Value::Int(1)],
                vec![Value::Text("bus".into()), Value::Int(2)],
                vec![Value::Text("walk".into()), Value::Int(2)],
            ]
        );
    }

    #[test]
    fn avg_ignores_null_and_time_window_is_inclusive() {
        let t = run("VISUALIZE bar TIME \"2010-01-01 08:00:00\" TO \"2010-02-01 10:00:00\" SQL SELECT user_id, AVG(altitude) AS a, COUNT(altitude) FROM traj_data GROUP BY user_id").unwrap();
        assert_eq!(t.rows[0], vec![Value::Int(1), Value::Float(20.0), Value::Int(3)]);
        assert_eq!(t.rows[1], vec![Value::Int(2), Value::Null, Value::Int(0)]);
    }

    #[test]
    fn global_aggregate_over_nothing() {
        let t = run("VISUALIZE bar SQL SELECT COUNT(*), MAX(altitude) FROM traj_data WHERE user_id = 99").unwrap();
        assert_eq!(t.rows, vec![vec![Value::Int(0), Value::Null]]);
    }

    #[test]
    fn binning_by_day() {
        let t = run("VISUALIZE line SQL SELECT datetime, COUNT(*) AS n FROM traj_data BIN datetime BY DAY ORDER BY datetime").unwrap();
        let days: Vec<String> = t.rows.iter().map(|r| r[0].to_string()).collect();
        assert_eq!(days, ["2010-01-01 00:00:00", "2010-01-02 00:00:00", "2010-02-01 00:00:00"]);
        assert_eq!(t.rows[0][1], Value::Int(2));
    }

    #[test]
    fn join_against_labels() {
        let t = run("VISUALIZE pie SQL SELECT traj_labels.travel_mode, COUNT(*) FROM traj_data JOIN traj_labels ON traj_data.traj_id = traj_labels.traj_id GROUP BY traj_labels.travel_mode").unwrap();
        assert_eq!(
            t.rows,
            vec![vec![Value::Text("bus".into()), Value::Int(3)], vec![Value::Text("walk".into()), Value::Int(2)]]
        );
    }

    #[test]
    fn ambiguous_and_type_errors() {
        let e = run("VISUALIZE bar SQL SELECT travel_mode, COUNT(*) FROM traj_data JOIN traj_labels ON traj_data.traj_id = traj_labels.traj_id GROUP BY travel_mode");
        assert_eq!(e, Err(ExecError::AmbiguousColumn("travel_mode".into())));
        let e = run("VISUALIZE bar SQL SELECT user_id FROM traj_data WHERE user_id = 'x'");
        assert!(matches!(e, Err(ExecError::TypeMismatch(_))));
        let e = run("VISUALIZE bar SQL SELECT travel_mode, AVG(travel_mode) AS a FROM traj_data GROUP BY travel_mode");
        assert!(matches!(e, Err(ExecError::TypeMismatch(_))));
        let e = run("VISUALIZE bar SQL SELECT speed FROM traj_data");
        assert_eq!(e, Err(ExecError::UnknownColumn("speed".into())));
    }

    #[test]
    fn predicates_mixed_numeric_and_in() {
        let t = run("VISUALIZE bar SQL SELECT traj_id FROM traj_data WHERE altitude >= 20 AND travel_mode IN ('bus', 'walk') ORDER BY traj_id").unwrap();
        assert_eq!(t.rows, vec![vec![Value::Int(10)], vec![Value::Int(11)]]);
        let t = run("VISUALIZE bar SQL SELECT traj_id FROM traj_data WHERE datetime < '2010-01-02 00:00:00'").unwrap();
        assert_eq!(t.len(), 2);
    }
}
