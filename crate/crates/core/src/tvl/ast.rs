//! Abstract syntax of a TVL statement.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Layout used for every timestamp in TVL text, SQL text and data files.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// The four chart families a TVL statement can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisType {
    Map,
    Bar,
    Line,
    Pie,
}

impl VisType {
    pub const ALL: [VisType; 4] = [VisType::Map, VisType::Bar, VisType::Line, VisType::Pie];

    pub fn as_str(self) -> &'static str {
        match self {
            VisType::Map => "map",
            VisType::Bar => "bar",
            VisType::Line => "line",
            VisType::Pie => "pie",
        }
    }
}

impl fmt::Display for VisType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VisType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(VisType::Map),
            "bar" => Ok(VisType::Bar),
            "line" => Ok(VisType::Line),
            "pie" => Ok(VisType::Pie),
            other => Err(format!("unknown visualization type `{other}`")),
        }
    }
}

/// A geographic area name in canonical `"unit, parent"` form.
///
/// Canonicalization trims every comma-separated part, collapses inner
/// whitespace runs to one space and drops empty parts. Letter case is kept.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AreaRef(String);

impl AreaRef {
    /// Returns `None` when nothing is left after canonicalization.
    pub fn new(name: &str) -> Option<AreaRef> {
        let canonical = canonical_area_name(name);
        (!canonical.is_empty()).then_some(AreaRef(canonical))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Case-folded key used for registry lookups.
    pub fn lookup_key(&self) -> String {
        self.0.to_lowercase()
    }
}

pub(crate) fn canonical_area_name(name: &str) -> String {
    name.split(',')
        .map(|part| part.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|part| !part.is_empty())
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for AreaRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for AreaRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for AreaRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        AreaRef::new(&raw).ok_or_else(|| serde::de::Error::custom("empty area name"))
    }
}

/// Civil local time with second precision, no zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub NaiveDateTime);

impl Timestamp {
    pub fn parse(s: &str) -> Option<Timestamp> {
        NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
            .ok()
            .map(Timestamp)
    }

    pub fn from_unix(secs: i64) -> Option<Timestamp> {
        chrono::DateTime::from_timestamp(secs, 0).map(|dt| Timestamp(dt.naive_utc()))
    }

    /// Seconds since the epoch, treating the civil time as if it were UTC.
    pub fn unix(self) -> i64 {
        self.0.and_utc().timestamp()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(TIMESTAMP_FORMAT))
    }
}

impl FromStr for Timestamp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s).ok_or_else(|| format!("invalid timestamp `{s}`, expected YYYY-MM-DD HH:MM:SS"))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Closed interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> TimeWindow {
        TimeWindow { start, end }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Possibly table-qualified column reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub name: String,
}

impl ColumnRef {
    pub fn bare(name: impl Into<String>) -> ColumnRef {
        ColumnRef { table: None, name: name.into() }
    }

    pub fn qualified(table: impl Into<String>, name: impl Into<String>) -> ColumnRef {
        ColumnRef { table: Some(table.into()), name: name.into() }
    }

    /// Whether two references may denote the same source column: the names
    /// agree and the qualifiers do not contradict each other.
    pub fn may_alias(&self, other: &ColumnRef) -> bool {
        self.name == other.name
            && match (&self.table, &other.table) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AggFunc {
    Avg,
    Count,
    Sum,
    Max,
    Min,
}

impl AggFunc {
    pub fn keyword(self) -> &'static str {
        match self {
            AggFunc::Avg => "AVG",
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Max => "MAX",
            AggFunc::Min => "MIN",
        }
    }

    pub fn from_keyword(word: &str) -> Option<AggFunc> {
        match word.to_ascii_uppercase().as_str() {
            "AVG" => Some(AggFunc::Avg),
            "COUNT" => Some(AggFunc::Count),
            "SUM" => Some(AggFunc::Sum),
            "MAX" => Some(AggFunc::Max),
            "MIN" => Some(AggFunc::Min),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AggArg {
    /// `*`, only meaningful for COUNT.
    Star,
    Column(ColumnRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SelectItem {
    Column {
        column: ColumnRef,
        alias: Option<String>,
    },
    Aggregate {
        func: AggFunc,
        arg: AggArg,
        alias: Option<String>,
    },
}

impl SelectItem {
    pub fn column(name: &str) -> SelectItem {
        SelectItem::Column { column: ColumnRef::bare(name), alias: None }
    }

    pub fn aggregate(func: AggFunc, arg: AggArg) -> SelectItem {
        SelectItem::Aggregate { func, arg, alias: None }
    }

    pub fn alias(&self) -> Option<&str> {
        match self {
            SelectItem::Column { alias, .. } | SelectItem::Aggregate { alias, .. } => alias.as_deref(),
        }
    }

    pub fn is_aggregate(&self) -> bool {
        matches!(self, SelectItem::Aggregate { .. })
    }

    /// Name of the result column this item produces: the alias if given,
    /// the bare column name, or the aggregate call text with an unqualified
    /// argument (`COUNT(*)`, `AVG(altitude)`).
    pub fn output_name(&self) -> String {
        if let Some(alias) = self.alias() {
            return alias.to_string();
        }
        match self {
            SelectItem::Column { column, .. } => column.name.clone(),
            SelectItem::Aggregate { func, arg, .. } => match arg {
                AggArg::Star => format!("{}(*)", func.keyword()),
                AggArg::Column(c) => format!("{}({})", func.keyword(), c.name),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Join {
    pub table: String,
    pub left: ColumnRef,
    pub right: ColumnRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

/// Literal operand of a predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            // Debug keeps a fractional part (`100.0`) so floats re-lex as floats.
            Scalar::Float(v) => write!(f, "{v:?}"),
            Scalar::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    Binary(CmpOp, Scalar),
    In(Vec<Scalar>),
}

/// `column <op> literal` or `column IN (literal, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: ColumnRef,
    pub cmp: Comparison,
}

impl Predicate {
    pub fn binary(column: ColumnRef, op: CmpOp, value: Scalar) -> Predicate {
        Predicate { column, cmp: Comparison::Binary(op, value) }
    }

    pub fn is_in(column: ColumnRef, values: Vec<Scalar>) -> Predicate {
        Predicate { column, cmp: Comparison::In(values) }
    }

    pub fn scalars(&self) -> &[Scalar] {
        match &self.cmp {
            Comparison::Binary(_, v) => std::slice::from_ref(v),
            Comparison::In(vs) => vs,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.cmp {
            Comparison::Binary(op, v) => write!(f, "{} {} {v}", self.column, op.symbol()),
            Comparison::In(vs) => {
                write!(f, "{} IN (", self.column)?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// AND-joined predicates, always held in canonical (text-sorted) order so
/// that two conjunctions over the same predicates compare equal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Conjunction(Vec<Predicate>);

impl Conjunction {
    pub fn new(mut predicates: Vec<Predicate>) -> Conjunction {
        sort_predicates(&mut predicates);
        Conjunction(predicates)
    }

    pub fn push(&mut self, predicate: Predicate) {
        self.0.push(predicate);
        sort_predicates(&mut self.0);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Predicate> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Predicate] {
        &self.0
    }

    pub fn map(&self, f: impl FnMut(&Predicate) -> Predicate) -> Conjunction {
        Conjunction::new(self.0.iter().map(f).collect())
    }
}

fn sort_predicates(predicates: &mut [Predicate]) {
    predicates.sort_by_cached_key(|p| p.to_string());
}

impl<'a> IntoIterator for &'a Conjunction {
    type Item = &'a Predicate;
    type IntoIter = std::slice::Iter<'a, Predicate>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl FromIterator<Predicate> for Conjunction {
    fn from_iter<I: IntoIterator<Item = Predicate>>(iter: I) -> Self {
        Conjunction::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BinUnit {
    Hour,
    Day,
    Month,
    Year,
}

impl BinUnit {
    pub const ALL: [BinUnit; 4] = [BinUnit::Hour, BinUnit::Day, BinUnit::Month, BinUnit::Year];

    pub fn keyword(self) -> &'static str {
        match self {
            BinUnit::Hour => "HOUR",
            BinUnit::Day => "DAY",
            BinUnit::Month => "MONTH",
            BinUnit::Year => "YEAR",
        }
    }

    pub fn from_keyword(word: &str) -> Option<BinUnit> {
        BinUnit::ALL.into_iter().find(|u| u.keyword().eq_ignore_ascii_case(word))
    }

    /// Floors a timestamp to the start of its bin.
    pub fn truncate(self, t: Timestamp) -> Timestamp {
        use chrono::{Datelike, NaiveDate, NaiveTime, Timelike};
        let dt = t.0;
        let date = match self {
            BinUnit::Hour | BinUnit::Day => dt.date(),
            BinUnit::Month => NaiveDate::from_ymd_opt(dt.year(), dt.month(), 1).expect("first of month"),
            BinUnit::Year => NaiveDate::from_ymd_opt(dt.year(), 1, 1).expect("first of year"),
        };
        let hour = if self == BinUnit::Hour { dt.hour() } else { 0 };
        Timestamp(date.and_time(NaiveTime::from_hms_opt(hour, 0, 0).expect("valid hour")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TemporalBin {
    pub column: ColumnRef,
    pub unit: BinUnit,
}

/// The `T(x) -> x'` stage: optional temporal binning plus grouping keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TransformSpec {
    pub bin: Option<TemporalBin>,
    pub group_keys: Vec<ColumnRef>,
}

impl TransformSpec {
    pub fn is_empty(&self) -> bool {
        self.bin.is_none() && self.group_keys.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Direction {
    #[default]
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderKey {
    pub key: ColumnRef,
    pub direction: Direction,
}

impl OrderKey {
    pub fn asc(name: &str) -> OrderKey {
        OrderKey { key: ColumnRef::bare(name), direction: Direction::Asc }
    }

    pub fn desc(name: &str) -> OrderKey {
        OrderKey { key: ColumnRef::bare(name), direction: Direction::Desc }
    }
}

/// The restricted base query carried in the `SQL` clause.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlSkeleton {
    pub select: Vec<SelectItem>,
    pub from: String,
    pub joins: Vec<Join>,
    pub filter: Conjunction,
    pub transform: Option<TransformSpec>,
    pub order_by: Vec<OrderKey>,
}

impl SqlSkeleton {
    pub fn new(select: Vec<SelectItem>, from: impl Into<String>) -> SqlSkeleton {
        SqlSkeleton {
            select,
            from: from.into(),
            joins: Vec::new(),
            filter: Conjunction::default(),
            transform: None,
            order_by: Vec::new(),
        }
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &SelectItem> {
        self.select.iter().filter(|s| s.is_aggregate())
    }

    pub fn has_aggregates(&self) -> bool {
        self.select.iter().any(SelectItem::is_aggregate)
    }

    /// True when execution collapses rows into groups.
    pub fn is_grouped(&self) -> bool {
        self.transform.is_some() || self.has_aggregates()
    }

    pub fn bin(&self) -> Option<&TemporalBin> {
        self.transform.as_ref().and_then(|t| t.bin.as_ref())
    }

    pub fn group_keys(&self) -> &[ColumnRef] {
        self.transform.as_ref().map(|t| t.group_keys.as_slice()).unwrap_or(&[])
    }

    /// Names of every table the query reads, FROM table first.
    pub fn tables(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.from.as_str()).chain(self.joins.iter().map(|j| j.table.as_str()))
    }
}

/// One parsed TVL statement.
#[derive(Debug, Clone, PartialEq)]
pub struct TvlQuery {
    pub vis: VisType,
    pub area: Option<AreaRef>,
    pub time: Option<TimeWindow>,
    pub sql: SqlSkeleton,
}
