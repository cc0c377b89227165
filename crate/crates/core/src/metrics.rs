//! Exact-match scoring of predicted TVL against gold TVL.
//!
//! Six verdicts per pair: visualization type, axis, area, time window, base
//! SQL skeleton and the full statement. The SQL verdict compares normalized
//! skeletons, so injected spatio-temporal predicates never enter it.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tvl::{
    AggArg, ColumnRef, Comparison, Join, OrderKey, Predicate, SelectItem, SqlSkeleton, TemporalBin, TvlQuery, VisType,
};

/// Why a model completion did not yield a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason")]
pub enum FormatFailure {
    Empty,
    NoTvlBlock,
    Parse(String),
}

impl std::fmt::Display for FormatFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormatFailure::Empty => f.write_str("empty completion"),
            FormatFailure::NoTvlBlock => f.write_str("no TVL statement found"),
            FormatFailure::Parse(e) => write!(f, "unparseable TVL: {e}"),
        }
    }
}

pub type Prediction = Result<TvlQuery, FormatFailure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Verdicts {
    pub vis: bool,
    pub axis: bool,
    pub area: bool,
    pub time: bool,
    pub sql: bool,
    pub tvl: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub gold: TvlQuery,
    pub predicted: Prediction,
    pub verdicts: Verdicts,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot score an empty set")]
    EmptySet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub n_type: usize,
    pub n_comp: usize,
    pub n_area: usize,
    pub n_time: usize,
    pub n_sql: usize,
    pub n_tvl: usize,
    pub vis_acc: f64,
    pub axis_acc: f64,
    pub area_acc: f64,
    pub time_acc: f64,
    pub sql_acc: f64,
    pub tvl_acc: f64,
}

fn fold(s: &str) -> String {
    s.to_ascii_lowercase()
}

fn fold_col(c: &ColumnRef) -> ColumnRef {
    ColumnRef { table: c.table.as_deref().map(fold), name: fold(&c.name) }
}

fn norm_item(item: &SelectItem) -> SelectItem {
    match item {
        SelectItem::Column { column, alias } => {
            let column = fold_col(column);
            // An alias that just repeats the column name carries nothing.
            let alias = alias.as_deref().map(fold).filter(|a| *a != column.name);
            SelectItem::Column { column, alias }
        }
        SelectItem::Aggregate { func, arg, alias } => {
            let arg = match arg {
                AggArg::Star => AggArg::Star,
                AggArg::Column(c) => AggArg::Column(fold_col(c)),
            };
            SelectItem::Aggregate { func: *func, arg, alias: alias.as_deref().map(fold) }
        }
    }
}

fn norm_predicate(p: &Predicate) -> Predicate {
    let cmp = match &p.cmp {
        Comparison::Binary(op, v) => Comparison::Binary(*op, v.clone()),
        Comparison::In(vs) => {
            let mut vs = vs.clone();
            vs.sort_by_cached_key(|v| v.to_string());
            vs.dedup();
            Comparison::In(vs)
        }
    };
    Predicate { column: fold_col(&p.column), cmp }
}

/// Canonical form for comparison: identifiers case-folded, redundant
/// aliases dropped, WHERE conjuncts and IN lists sorted, join sides and
/// group keys in a fixed order. Idempotent.
pub fn normalize_sql(s: &SqlSkeleton) -> SqlSkeleton {
    let joins = s
        .joins
        .iter()
        .map(|j| {
            let (a, b) = (fold_col(&j.left), fold_col(&j.right));
            let (left, right) = if a.to_string() <= b.to_string() { (a, b) } else { (b, a) };
            Join { table: fold(&j.table), left, right }
        })
        .collect();
    let transform = s.transform.as_ref().map(|t| {
        let mut t = t.clone();
        t.group_keys = t.group_keys.iter().map(fold_col).collect();
        t.group_keys.sort();
        t.bin = t.bin.as_ref().map(|b| TemporalBin { column: fold_col(&b.column), unit: b.unit });
        t
    });
    SqlSkeleton {
        select: s.select.iter().map(norm_item).collect(),
        from: fold(&s.from),
        joins,
        filter: s.filter.map(norm_predicate),
        transform,
        order_by: s.order_by.iter().map(|k| OrderKey { key: fold_col(&k.key), direction: k.direction }).collect(),
    }
}

pub fn compare_pair(gold: &TvlQuery, predicted: &Prediction) -> ScoredPair {
    let verdicts = match predicted {
        Err(_) => Verdicts::default(),
        Ok(pred) => {
            let vis = gold.vis == pred.vis;
            let area = gold.area.as_ref().map(|a| a.lookup_key()) == pred.area.as_ref().map(|a| a.lookup_key());
            let time = gold.time == pred.time;
            let (g, p) = (normalize_sql(&gold.sql), normalize_sql(&pred.sql));
            let sql = g == p;
            let axis = if gold.vis == VisType::Map { area } else { g.select == p.select };
            Verdicts { vis, axis, area, time, sql, tvl: vis && area && time && sql }
        }
    };
    ScoredPair { gold: gold.clone(), predicted: predicted.clone(), verdicts }
}

fn ratio(count: usize, n: usize) -> f64 {
    (count as f64 / n as f64 * 10_000.0).round() / 10_000.0
}

/// Sums verdicts; accuracies are `count / n` rounded to 4 decimals.
pub fn score(pairs: &[ScoredPair]) -> Result<EvalReport, MetricsError> {
    score_verdicts(pairs.iter().map(|p| p.verdicts))
}

pub fn score_verdicts(verdicts: impl IntoIterator<Item = Verdicts>) -> Result<EvalReport, MetricsError> {
    let mut r = EvalReport {
        n: 0,
        n_type: 0,
        n_comp: 0,
        n_area: 0,
        n_time: 0,
        n_sql: 0,
        n_tvl: 0,
        vis_acc: 0.0,
        axis_acc: 0.0,
        area_acc: 0.0,
        time_acc: 0.0,
        sql_acc: 0.0,
        tvl_acc: 0.0,
    };
    for v in verdicts {
        r.n += 1;
        r.n_type += v.vis as usize;
        r.n_comp += v.axis as usize;
        r.n_area += v.area as usize;
        r.n_time += v.time as usize;
        r.n_sql += v.sql as usize;
        r.n_tvl += v.tvl as usize;
    }
    if r.n == 0 {
        return Err(MetricsError::EmptySet);
    }
    r.vis_acc = ratio(r.n_type, r.n);
    r.axis_acc = ratio(r.n_comp, r.n);
    r.area_acc = ratio(r.n_area, r.n);
    r.time_acc = ratio(r.n_time, r.n);
    r.sql_acc = ratio(r.n_sql, r.n);
    r.tvl_acc = ratio(r.n_tvl, r.n);
    Ok(r)
}

/// One line of a results table.
#[derive(Debug, Clone)]
pub struct TableRow<'a> {
    pub test_set: &'a str,
    pub model: &'a str,
    pub report: &'a EvalReport,
}

/// Fixed-width table with accuracies as percentages.
pub fn format_table(rows: &[TableRow]) -> String {
    let sw = rows.iter().map(|r| r.test_set.len()).chain([8]).max().unwrap_or(8);
    let mw = rows.iter().map(|r| r.model.len()).chain([5]).max().unwrap_or(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<sw$}  {:<mw$}  {:>8}  {:>8}  {:>7}  {:>7}  {:>7}  {:>7}",
        "Test Set", "Model", "Vis.Acc", "Axis.Acc", "Area", "Time", "SQL", "TVL"
    );
    let _ = writeln!(out, "{}", "-".repeat(sw + mw + 4 + 10 * 2 + 9 * 4));
    for r in rows {
        let p = |x: f64| format!("{:.2}", x * 100.0);
        let e = r.report;
        let _ = writeln!(
            out,
            "{:<sw$}  {:<mw$}  {:>8}  {:>8}  {:>7}  {:>7}  {:>7}  {:>7}",
            r.test_set,
            r.model,
            p(e.vis_acc),
            p(e.axis_acc),
            p(e.area_acc),
            p(e.time_acc),
            p(e.sql_acc),
            p(e.tvl_acc)
        );
    }
    out
}
