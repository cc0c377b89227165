use std::fmt::Write;

use super::ast::*;

/// Canonical single-line text of a query. Keywords are upper-case, the
/// visualization type lower-case, predicates in canonical order.
pub fn render_tvl(q: &TvlQuery) -> String {
    let mut out = format!("VISUALIZE {}", q.vis);
    if let Some(area) = &q.area {
        write!(out, " AREA \"{}\"", escape_double(area.as_str())).unwrap();
    }
    if let Some(w) = &q.time {
        write!(out, " TIME \"{}\" TO \"{}\"", w.start, w.end).unwrap();
    }
    out.push_str(" SQL ");
    out.push_str(&render_sql(&q.sql));
    out
}

fn escape_double(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn render_select_item(item: &SelectItem) -> String {
    let mut out = match item {
        SelectItem::Column { column, .. } => column.to_string(),
        SelectItem::Aggregate { func, arg, .. } => match arg {
            AggArg::Star => format!("{}(*)", func.keyword()),
            AggArg::Column(c) => format!("{}({c})", func.keyword()),
        },
    };
    if let Some(alias) = item.alias() {
        write!(out, " AS {alias}").unwrap();
    }
    out
}

pub fn render_join(j: &Join) -> String {
    format!("JOIN {} ON {} = {}", j.table, j.left, j.right)
}

pub fn render_order_key(k: &OrderKey) -> String {
    match k.direction {
        Direction::Asc => k.key.to_string(),
        Direction::Desc => format!("{} DESC", k.key),
    }
}

/// Canonical text of the SQL skeleton, including the TVL-only `BIN` clause.
pub fn render_sql(s: &SqlSkeleton) -> String {
    let items: Vec<String> = s.select.iter().map(render_select_item).collect();
    let mut out = format!("SELECT {} FROM {}", items.join(", "), s.from);
    for j in &s.joins {
        out.push(' ');
        out.push_str(&render_join(j));
    }
    if !s.filter.is_empty() {
        let preds: Vec<String> = s.filter.iter().map(|p| p.to_string()).collect();
        write!(out, " WHERE {}", preds.join(" AND ")).unwrap();
    }
    if let Some(t) = &s.transform {
        if !t.group_keys.is_empty() {
            let keys: Vec<String> = t.group_keys.iter().map(|k| k.to_string()).collect();
            write!(out, " GROUP BY {}", keys.join(", ")).unwrap();
        }
        if let Some(b) = &t.bin {
            write!(out, " BIN {} BY {}", b.column, b.unit.keyword()).unwrap();
        }
    }
    if !s.order_by.is_empty() {
        let keys: Vec<String> = s.order_by.iter().map(render_order_key).collect();
        write!(out, " ORDER BY {}", keys.join(", ")).unwrap();
    }
    out
}
