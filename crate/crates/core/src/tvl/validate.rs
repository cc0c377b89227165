//! Schema-free structural checks on a [`TvlQuery`].

use std::collections::HashSet;
use std::fmt;

use super::ast::{AggArg, AggFunc, ColumnRef, Comparison, Scalar, SelectItem, TvlQuery, VisType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MapRequiresArea,
    TimeWindowReversed,
    EmptySelect,
    EmptyTransform,
    DuplicateOutputName(String),
    UngroupedColumn(String),
    UnresolvedOrderKey(String),
    StarOutsideCount(String),
    EmptyInList(String),
    NonFiniteLiteral(String),
    InvalidIdentifier(String),
}

impl Violation {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::MapRequiresArea => "MapRequiresArea",
            Violation::TimeWindowReversed => "TimeWindowReversed",
            Violation::EmptySelect => "EmptySelect",
            Violation::EmptyTransform => "EmptyTransform",
            Violation::DuplicateOutputName(_) => "DuplicateOutputName",
            Violation::UngroupedColumn(_) => "UngroupedColumn",
            Violation::UnresolvedOrderKey(_) => "UnresolvedOrderKey",
            Violation::StarOutsideCount(_) => "StarOutsideCount",
            Violation::EmptyInList(_) => "EmptyInList",
            Violation::NonFiniteLiteral(_) => "NonFiniteLiteral",
            Violation::InvalidIdentifier(_) => "InvalidIdentifier",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MapRequiresArea => f.write_str("MapRequiresArea: a map needs an AREA to center on"),
            Violation::TimeWindowReversed => f.write_str("TimeWindowReversed: TIME start is after its end"),
            Violation::EmptySelect => f.write_str("EmptySelect: SELECT list is empty"),
            Violation::EmptyTransform => f.write_str("EmptyTransform: transform without GROUP BY or BIN"),
            Violation::DuplicateOutputName(n) => write!(f, "DuplicateOutputName: `{n}` produced twice"),
            Violation::UngroupedColumn(n) => write!(f, "UngroupedColumn: `{n}` is neither grouped nor aggregated"),
            Violation::UnresolvedOrderKey(n) => write!(f, "UnresolvedOrderKey: `{n}` is not an output column or group key"),
            Violation::StarOutsideCount(n) => write!(f, "StarOutsideCount: `{n}(*)` is only valid for COUNT"),
            Violation::EmptyInList(n) => write!(f, "EmptyInList: `{n} IN ()`"),
            Violation::NonFiniteLiteral(n) => write!(f, "NonFiniteLiteral: non-finite number compared with `{n}`"),
            Violation::InvalidIdentifier(n) => write!(f, "InvalidIdentifier: `{n}`"),
        }
    }
}

/// Returns every broken invariant; an empty list means the query is valid.
pub fn validate(q: &TvlQuery) -> Vec<Violation> {
    let mut out = Vec::new();
    if q.vis == VisType::Map && q.area.is_none() {
        out.push(Violation::MapRequiresArea);
    }
    if let Some(w) = &q.time {
        if w.start > w.end {
            out.push(Violation::TimeWindowReversed);
        }
    }

    let sql = &q.sql;
    check_identifiers(q, &mut out);
    if sql.select.is_empty() {
        out.push(Violation::EmptySelect);
    }
    if sql.transform.as_ref().is_some_and(|t| t.is_empty()) {
        out.push(Violation::EmptyTransform);
    }

    let mut seen = HashSet::new();
    for item in &sql.select {
        let name = item.output_name().to_lowercase();
        if !seen.insert(name) {
            out.push(Violation::DuplicateOutputName(item.output_name()));
        }
        if let SelectItem::Aggregate { func, arg: AggArg::Star, .. } = item {
            if *func != AggFunc::Count {
                out.push(Violation::StarOutsideCount(func.keyword().to_string()));
            }
        }
    }

    for p in &sql.filter {
        match &p.cmp {
            Comparison::In(vs) if vs.is_empty() => out.push(Violation::EmptyInList(p.column.to_string())),
            _ => {}
        }
        if p.scalars().iter().any(|s| matches!(s, Scalar::Float(v) if !v.is_finite())) {
            out.push(Violation::NonFiniteLiteral(p.column.to_string()));
        }
    }

    if sql.is_grouped() {
        let grouped = |c: &ColumnRef| {
            sql.group_keys().iter().any(|k| k.may_alias(c)) || sql.bin().is_some_and(|b| b.column.may_alias(c))
        };
        for item in &sql.select {
            if let SelectItem::Column { column, .. } = item {
                if !grouped(column) {
                    out.push(Violation::UngroupedColumn(column.to_string()));
                }
            }
        }
        for key in &sql.order_by {
            let is_output = key.key.table.is_none()
                && sql.select.iter().any(|s| s.output_name() == key.key.name);
            if !is_output && !grouped(&key.key) {
                out.push(Violation::UnresolvedOrderKey(key.key.to_string()));
            }
        }
    }
    out
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !super::parser::is_reserved(s)
}

fn check_identifiers(q: &TvlQuery, out: &mut Vec<Violation>) {
    let sql = &q.sql;
    let mut cols: Vec<&ColumnRef> = Vec::new();
    let mut names: Vec<&str> = vec![sql.from.as_str()];
    for item in &sql.select {
        if let SelectItem::Column { column, .. } | SelectItem::Aggregate { arg: AggArg::Column(column), .. } = item {
            cols.push(column);
        }
        names.extend(item.alias());
    }
    for j in &sql.joins {
        names.push(&j.table);
        cols.push(&j.left);
        cols.push(&j.right);
    }
    cols.extend(sql.filter.iter().map(|p| &p.column));
    cols.extend(sql.group_keys());
    cols.extend(sql.bin().map(|b| &b.column));
    cols.extend(sql.order_by.iter().map(|k| &k.key));
    for c in cols {
        names.push(&c.name);
        names.extend(c.table.as_deref());
    }
    for n in names {
        if !is_identifier(n) {
            out.push(Violation::InvalidIdentifier(n.to_string()));
        }
    }
}
