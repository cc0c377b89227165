//! Random well-typed queries over the trajectory schema, for property tests,
//! fuzzing and benchmarks.
//!
//! Every query passes [`validate`](crate::tvl::validate), compiles when its
//! area is one of `areas`, and executes without a type error.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::geo::{ColumnType, TableSchema, TRAJ_DATA, TRAJ_LABELS};
use crate::tvl::{
    AggArg, AggFunc, AreaRef, BinUnit, CmpOp, ColumnRef, Conjunction, Direction, Join, OrderKey, Predicate, Scalar,
    SelectItem, SqlSkeleton, TemporalBin, TimeWindow, Timestamp, TransformSpec, TvlQuery, VisType,
};

const ALIASES: [&str; 8] = ["n", "total", "avg_alt", "peak", "low", "cnt", "mode_name", "when_seen"];
const TEXTS: [&str; 7] = ["walk", "bus", "car", "taxi", "it's", "", "subway"];
const OPS: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

struct Ctx {
    joined: bool,
    tables: Vec<&'static TableSchema>,
}

impl Ctx {
    fn col(&self, table: &TableSchema, name: &str) -> ColumnRef {
        if self.joined {
            ColumnRef::qualified(table.name, name)
        } else {
            ColumnRef::bare(name)
        }
    }

    fn any_column<R: Rng>(&self, rng: &mut R) -> (ColumnRef, ColumnType) {
        let t = *self.tables.choose(rng).expect("non-empty scope");
        let (name, ty) = *t.columns.choose(rng).expect("non-empty table");
        (self.col(t, name), ty)
    }

    fn typed_column<R: Rng>(&self, rng: &mut R, ok: impl Fn(ColumnType) -> bool) -> Option<ColumnRef> {
        let all: Vec<(&TableSchema, &str)> = self
            .tables
            .iter()
            .flat_map(|t| t.columns.iter().filter(|(_, ty)| ok(*ty)).map(move |(n, _)| (*t, *n)))
            .collect();
        all.choose(rng).map(|(t, n)| self.col(t, n))
    }
}

fn timestamp<R: Rng>(rng: &mut R) -> Timestamp {
    let lo = Timestamp::parse("2007-01-01 00:00:00").expect("literal").unix();
    let hi = Timestamp::parse("2013-01-01 00:00:00").expect("literal").unix();
    Timestamp::from_unix(rng.gen_range(lo..hi)).expect("in range")
}

fn scalar<R: Rng>(rng: &mut R, ty: ColumnType) -> Scalar {
    match ty {
        ColumnType::Int => Scalar::Int(match rng.gen_range(0..10) {
            0 => rng.gen(),
            1 => -rng.gen_range(0..1000),
            _ => rng.gen_range(0..12),
        }),
        ColumnType::Float => {
            if rng.gen_bool(0.2) {
                Scalar::Int(rng.gen_range(-50..400))
            } else {
                let v: f64 = match rng.gen_range(0..6) {
                    0 => rng.gen_range(-1e6..1e6),
                    1 => rng.gen::<f64>() * 1e-7,
                    _ => (rng.gen_range(-500.0..3000.0_f64) * 10.0).round() / 10.0,
                };
                Scalar::Float(v)
            }
        }
        ColumnType::Text => Scalar::Text(TEXTS.choose(rng).expect("non-empty").to_string()),
        ColumnType::Timestamp => Scalar::Text(timestamp(rng).to_string()),
    }
}

fn predicate<R: Rng>(rng: &mut R, ctx: &Ctx) -> Predicate {
    let (column, ty) = ctx.any_column(rng);
    if rng.gen_bool(0.2) {
        let n = rng.gen_range(1..=3);
        Predicate::is_in(column, (0..n).map(|_| scalar(rng, ty)).collect())
    } else {
        Predicate::binary(column, *OPS.choose(rng).expect("non-empty"), scalar(rng, ty))
    }
}

fn fresh_alias<R: Rng>(rng: &mut R, used: &mut Vec<String>) -> Option<String> {
    let free: Vec<&str> = ALIASES.iter().copied().filter(|a| !used.iter().any(|u| u.eq_ignore_ascii_case(a))).collect();
    let a = free.choose(rng)?.to_string();
    used.push(a.clone());
    Some(a)
}

fn claim(name: String, used: &mut Vec<String>) -> bool {
    if used.iter().any(|u| u.eq_ignore_ascii_case(&name)) {
        false
    } else {
        used.push(name);
        true
    }
}

fn aggregate<R: Rng>(rng: &mut R, ctx: &Ctx, used: &mut Vec<String>) -> Option<SelectItem> {
    for _ in 0..8 {
        let func = *[AggFunc::Count, AggFunc::Count, AggFunc::Avg, AggFunc::Sum, AggFunc::Max, AggFunc::Min]
            .choose(rng)
            .expect("non-empty");
        let arg = match func {
            AggFunc::Count if rng.gen_bool(0.6) => AggArg::Star,
            AggFunc::Count | AggFunc::Max | AggFunc::Min => AggArg::Column(ctx.any_column(rng).0),
            AggFunc::Avg | AggFunc::Sum => AggArg::Column(ctx.typed_column(rng, ColumnType::is_numeric)?),
        };
        let mut item = SelectItem::Aggregate { func, arg, alias: None };
        if rng.gen_bool(0.4) {
            if let Some(a) = fresh_alias(rng, used) {
                if let SelectItem::Aggregate { alias, .. } = &mut item {
                    *alias = Some(a);
                }
                return Some(item);
            }
        }
        if claim(item.output_name(), used) {
            return Some(item);
        }
    }
    None
}

fn column_item<R: Rng>(rng: &mut R, column: ColumnRef, used: &mut Vec<String>) -> Option<SelectItem> {
    if rng.gen_bool(0.15) {
        if let Some(a) = fresh_alias(rng, used) {
            return Some(SelectItem::Column { column, alias: Some(a) });
        }
    }
    claim(column.name.clone(), used).then_some(SelectItem::Column { column, alias: None })
}

fn order_keys<R: Rng>(rng: &mut R, candidates: &[ColumnRef]) -> Vec<OrderKey> {
    let n = rng.gen_range(0..=candidates.len().min(3));
    let mut picked: Vec<ColumnRef> = candidates.choose_multiple(rng, n).cloned().collect();
    picked.dedup();
    picked
        .into_iter()
        .map(|key| OrderKey { key, direction: if rng.gen_bool(0.3) { Direction::Desc } else { Direction::Asc } })
        .collect()
}

fn skeleton<R: Rng>(rng: &mut R, from_labels: bool) -> SqlSkeleton {
    let joined = !from_labels && rng.gen_bool(0.2);
    let tables = match (from_labels, joined) {
        (true, _) => vec![&TRAJ_LABELS],
        (false, true) => vec![&TRAJ_DATA, &TRAJ_LABELS],
        (false, false) => vec![&TRAJ_DATA],
    };
    let ctx = Ctx { joined, tables };
    let mut sql = SqlSkeleton::new(Vec::new(), ctx.tables[0].name);
    if joined {
        sql.joins.push(Join {
            table: TRAJ_LABELS.name.into(),
            left: ColumnRef::qualified(TRAJ_DATA.name, "traj_id"),
            right: ColumnRef::qualified(TRAJ_LABELS.name, "traj_id"),
        });
    }
    let n_pred = [0, 0, 1, 1, 2, 3][rng.gen_range(0..6)];
    sql.filter = (0..n_pred).map(|_| predicate(rng, &ctx)).collect::<Conjunction>();

    let mut used = Vec::new();
    match rng.gen_range(0..10) {
        // Plain projection.
        0..=3 => {
            let n = rng.gen_range(1..=4);
            for _ in 0..n {
                let (c, _) = ctx.any_column(rng);
                if let Some(item) = column_item(rng, c, &mut used) {
                    sql.select.push(item);
                }
            }
            if sql.select.is_empty() {
                sql.select.push(SelectItem::Column { column: ctx.any_column(rng).0, alias: None });
                used.push(sql.select[0].output_name());
            }
            // Bare keys must name outputs once another table is in scope.
            let mut keys: Vec<ColumnRef> = used.iter().map(ColumnRef::bare).collect();
            keys.push(ctx.any_column(rng).0);
            sql.order_by = order_keys(rng, &keys);
        }
        // Grouped, possibly binned.
        4..=8 => {
            let mut keys: Vec<ColumnRef> = Vec::new();
            let bin = (rng.gen_bool(0.3))
                .then(|| ctx.typed_column(rng, |t| t == ColumnType::Timestamp))
                .flatten()
                .map(|column| TemporalBin { column, unit: *BinUnit::ALL.choose(rng).expect("non-empty") });
            let n_keys = if bin.is_some() { rng.gen_range(0..=1) } else { rng.gen_range(1..=2) };
            for _ in 0..n_keys {
                let (c, _) = ctx.any_column(rng);
                if !keys.iter().any(|k| k.may_alias(&c)) && !bin.as_ref().is_some_and(|b| b.column.may_alias(&c)) {
                    keys.push(c);
                }
            }
            let mut shown: Vec<ColumnRef> = keys.clone();
            if let Some(b) = &bin {
                shown.push(b.column.clone());
            }
            for c in &shown {
                if rng.gen_bool(0.8) {
                    if let Some(item) = column_item(rng, c.clone(), &mut used) {
                        sql.select.push(item);
                    }
                }
            }
            for _ in 0..rng.gen_range(1..=2) {
                if let Some(a) = aggregate(rng, &ctx, &mut used) {
                    sql.select.push(a);
                }
            }
            if sql.select.is_empty() {
                sql.select.push(SelectItem::aggregate(AggFunc::Count, AggArg::Star));
                used.push("COUNT(*)".into());
            }
            if keys.is_empty() && bin.is_none() {
                keys.push(ctx.any_column(rng).0);
            }
            sql.transform = Some(TransformSpec { bin, group_keys: keys.clone() });
            let mut order: Vec<ColumnRef> = sql
                .select
                .iter()
                .map(|s| s.output_name())
                .filter(|n| crate::tvl::is_identifier(n))
                .map(ColumnRef::bare)
                .collect();
            order.extend(keys);
            sql.order_by = order_keys(rng, &order);
        }
        // Global aggregate.
        _ => {
            for _ in 0..rng.gen_range(1..=3) {
                if let Some(a) = aggregate(rng, &ctx, &mut used) {
                    sql.select.push(a);
                }
            }
            if sql.select.is_empty() {
                sql.select.push(SelectItem::aggregate(AggFunc::Count, AggArg::Star));
            }
        }
    }
    sql
}

/// A random valid query. Map queries and queries with an area or window
/// always read `traj_data`; `areas` must be non-empty.
pub fn random_query<R: Rng>(rng: &mut R, areas: &[AreaRef]) -> TvlQuery {
    let vis = *VisType::ALL.choose(rng).expect("non-empty");
    let area = (vis == VisType::Map || rng.gen_bool(0.5)).then(|| areas.choose(rng).expect("areas given").clone());
    let time = rng.gen_bool(0.5).then(|| {
        let (a, b) = (timestamp(rng), timestamp(rng));
        TimeWindow::new(a.min(b), a.max(b))
    });
    let from_labels = area.is_none() && time.is_none() && rng.gen_bool(0.15);
    TvlQuery { vis, area, time, sql: skeleton(rng, from_labels) }
}
