//! Template questions for generated queries.
//!
//! Stand-in for model-written questions so a corpus can be split and scored
//! offline. `Normal` states the area and window literally; `Area` and `Time`
//! rephrase the spatial or temporal part.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tvl::{AggArg, AggFunc, CmpOp, Comparison, Direction, Predicate, Scalar, SelectItem, TvlQuery, VisType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Normal,
    Area,
    Time,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Normal, Scenario::Area, Scenario::Time];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Normal => "normal",
            Scenario::Area => "area",
            Scenario::Time => "time",
        }
    }

    /// Scenarios a query supports: `Area` needs an area, `Time` a window.
    pub fn applicable(q: &TvlQuery) -> Vec<Scenario> {
        let mut out = vec![Scenario::Normal];
        if q.area.is_some() {
            out.push(Scenario::Area);
        }
        if q.time.is_some() {
            out.push(Scenario::Time);
        }
        out
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Scenario, String> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

fn humanize(column: &str) -> String {
    column.replace('_', " ")
}

fn measure(item: &SelectItem) -> String {
    match item {
        SelectItem::Aggregate { func, arg, .. } => {
            let col = match arg {
                AggArg::Star => return "the number of trajectory points".into(),
                AggArg::Column(c) => humanize(&c.name),
            };
            match func {
                AggFunc::Count => format!("the number of recorded {col} values"),
                AggFunc::Avg => format!("the average {col}"),
                AggFunc::Sum => format!("the total {col}"),
                AggFunc::Max => format!("the highest {col}"),
                AggFunc::Min => format!("the lowest {col}"),
            }
        }
        SelectItem::Column { column, .. } => format!("the {}", humanize(&column.name)),
    }
}

fn filter_phrase(p: &Predicate) -> String {
    let labelled = p.column.table.as_deref() == Some("traj_labels");
    let value = |s: &Scalar| match s {
        Scalar::Text(t) => t.clone(),
        other => other.to_string(),
    };
    match (&p.column.name[..], &p.cmp) {
        ("user_id", Comparison::Binary(CmpOp::Eq, v)) => format!("for user {}", value(v)),
        ("travel_mode", Comparison::Binary(CmpOp::Eq, v)) if labelled => {
            format!("on trajectories labelled {}", value(v))
        }
        ("travel_mode", Comparison::Binary(CmpOp::Eq, v)) => format!("travelling by {}", value(v)),
        ("altitude", Comparison::Binary(CmpOp::Ge, v)) => format!("at altitudes of at least {} meters", value(v)),
        (col, Comparison::Binary(op, v)) => {
            let rel = match op {
                CmpOp::Eq => "equal to",
                CmpOp::Ne => "different from",
                CmpOp::Lt => "below",
                CmpOp::Le => "at most",
                CmpOp::Gt => "above",
                CmpOp::Ge => "at least",
            };
            format!("where {} is {rel} {}", humanize(col), value(v))
        }
        (col, Comparison::In(vs)) => {
            let vals: Vec<String> = vs.iter().map(value).collect();
            format!("where {} is one of {}", humanize(col), vals.join(", "))
        }
    }
}

fn subject(q: &TvlQuery) -> String {
    let sql = &q.sql;
    if q.vis == VisType::Map {
        return "Show the trajectories".into();
    }
    let keyed_by_mode = sql.group_keys().iter().any(|k| k.name == "travel_mode");
    let first_agg = sql.aggregates().next();
    let counts = matches!(first_agg, Some(SelectItem::Aggregate { func: AggFunc::Count, arg: AggArg::Star, .. }));
    if q.vis == VisType::Pie && keyed_by_mode && counts {
        return "Display the percentage of travel by each mode".into();
    }
    let what = match first_agg {
        Some(item) => measure(item),
        None => sql.select.get(1).map(measure).unwrap_or_else(|| "the data".into()),
    };
    let by = if keyed_by_mode {
        " for each travel mode".to_string()
    } else if let Some(b) = sql.bin() {
        format!(" per {}", b.unit.keyword().to_lowercase())
    } else if let Some(k) = sql.group_keys().first() {
        format!(" for each {}", humanize(&k.name))
    } else {
        String::new()
    };
    match q.vis {
        VisType::Bar => format!("Draw a bar chart of {what}{by}"),
        VisType::Pie => format!("Display the share of {what}{by}"),
        VisType::Line => format!("Plot how {what}{by} changes over time"),
        VisType::Map => unreachable!(),
    }
}

fn area_phrase(name: &str, scenario: Scenario, variant: usize) -> String {
    if scenario != Scenario::Area {
        return format!("in {name}");
    }
    let parts: Vec<&str> = name.split(", ").collect();
    match (parts.as_slice(), variant % 3) {
        ([unit, parent], 0) => format!("within the boundaries of {unit} in {parent}"),
        ([unit, parent], 1) => format!("inside the {unit} area of {parent}"),
        ([unit, parent], _) => format!("across {parent}'s {unit}"),
        (_, 0) => format!("within the boundaries of {name}"),
        _ => format!("inside the {name} area"),
    }
}

fn time_phrase(q: &TvlQuery, scenario: Scenario, variant: usize) -> Option<String> {
    let w = q.time.as_ref()?;
    if scenario != Scenario::Time {
        return Some(format!("from {} to {}", w.start, w.end));
    }
    let fmt = "%B %-d, %Y at %-I:%M %p";
    let (s, e) = (w.start.0.format(fmt), w.end.0.format(fmt));
    Some(match variant % 2 {
        0 => format!("between {s} and {e}"),
        _ => format!("starting {s} and ending {e}"),
    })
}

/// One question for `q` in the given scenario. `variant` picks among
/// alternative phrasings.
pub fn describe(q: &TvlQuery, scenario: Scenario, variant: usize) -> String {
    let mut parts = vec![subject(q)];
    parts.extend(q.sql.filter.iter().map(filter_phrase));
    if let Some(a) = &q.area {
        parts.push(area_phrase(a.as_str(), scenario, variant));
    }
    if let Some(t) = time_phrase(q, scenario, variant) {
        parts.push(t);
    }
    let mut text = parts.join(" ");
    if q.sql.order_by.iter().any(|k| k.direction == Direction::Desc) {
        text.push_str(", sorted from largest to smallest");
    }
    text.push('.');
    text
}
