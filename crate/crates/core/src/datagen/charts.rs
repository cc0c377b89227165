//! Query templates for each chart type.

use super::{AttributeDomains, CandidateArea, GenError};
use crate::tvl::{
    parse_sql_skeleton, BinUnit, CmpOp, ColumnRef, Predicate, Scalar, SqlSkeleton, TimeWindow, TvlQuery, VisType,
};

/// Point-level trajectory listing used by every map query.
pub const TRAJECTORY_SKELETON: &str =
    "SELECT user_id, traj_id, latitude, longitude, datetime FROM traj_data ORDER BY user_id, traj_id, datetime";

fn skeleton(text: &str) -> SqlSkeleton {
    parse_sql_skeleton(text).unwrap_or_else(|e| panic!("template `{text}` does not parse: {e}"))
}

fn query(vis: VisType, c: &CandidateArea, w: TimeWindow, sql: SqlSkeleton) -> TvlQuery {
    TvlQuery { vis, area: Some(c.area.clone()), time: Some(w), sql }
}

/// One map query per (candidate, window).
pub fn generate_seed(candidates: &[(CandidateArea, Vec<TimeWindow>)]) -> Vec<TvlQuery> {
    let base = skeleton(TRAJECTORY_SKELETON);
    let mut out = Vec::new();
    for (c, windows) in candidates {
        for w in windows {
            out.push(query(VisType::Map, c, *w, base.clone()));
        }
    }
    out
}

/// Chart queries per type, in a deterministic order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChartPools {
    pub bar: Vec<TvlQuery>,
    pub line: Vec<TvlQuery>,
    pub pie: Vec<TvlQuery>,
}

const MODE_COUNT: &str = "SELECT travel_mode, COUNT(*) FROM traj_data GROUP BY travel_mode";
const MODE_COUNT_JOIN: &str = "SELECT traj_labels.travel_mode, COUNT(*) FROM traj_data JOIN traj_labels ON traj_data.traj_id = traj_labels.traj_id GROUP BY traj_labels.travel_mode";
const MODE_COUNT_RANKED: &str =
    "SELECT travel_mode, COUNT(*) AS num_points FROM traj_data GROUP BY travel_mode ORDER BY num_points DESC";
const MODE_ALTITUDE: &str = "SELECT travel_mode, AVG(altitude) AS avg_altitude FROM traj_data GROUP BY travel_mode";
const USER_ALTITUDE: &str = "SELECT datetime, altitude FROM traj_data ORDER BY datetime";
const BINNED_ALTITUDE: &str = "SELECT datetime, AVG(altitude) AS avg_altitude FROM traj_data BIN datetime BY {unit} ORDER BY datetime";
const MODE_ALTITUDE_JOIN: &str = "SELECT traj_data.datetime, AVG(traj_data.altitude) AS avg_altitude FROM traj_data JOIN traj_labels ON traj_data.traj_id = traj_labels.traj_id BIN traj_data.datetime BY DAY ORDER BY datetime";

fn with(mut s: SqlSkeleton, extra: Option<&Predicate>) -> SqlSkeleton {
    if let Some(p) = extra {
        s.filter.push(p.clone());
    }
    s
}

/// `None` plus one filter per user and per altitude threshold. In join
/// templates the columns are qualified with the point table.
fn filters(d: &AttributeDomains, qualify: bool) -> Vec<Option<Predicate>> {
    let col = |name: &str| if qualify { ColumnRef::qualified("traj_data", name) } else { ColumnRef::bare(name) };
    let mut out = vec![None];
    out.extend(d.users.iter().map(|u| Some(Predicate::binary(col("user_id"), CmpOp::Eq, Scalar::Int(*u)))));
    out.extend(
        d.altitude_thresholds
            .iter()
            .map(|t| Some(Predicate::binary(col("altitude"), CmpOp::Ge, Scalar::Float(*t)))),
    );
    out
}

/// Bar, line and pie queries over every (candidate, window).
pub fn expand_chart_types(
    candidates: &[(CandidateArea, Vec<TimeWindow>)],
    domains: &AttributeDomains,
) -> Result<ChartPools, GenError> {
    if domains.modes.is_empty() {
        return Err(GenError::MissingAttribute("travel_mode".into()));
    }
    if domains.altitude_thresholds.is_empty() {
        return Err(GenError::MissingAttribute("altitude".into()));
    }
    let plain = filters(domains, false);
    let joined = filters(domains, true);
    let mut pools = ChartPools::default();
    for (c, windows) in candidates {
        for w in windows {
            for (bare, qual) in plain.iter().zip(&joined) {
                let bare = bare.as_ref();
                for t in [MODE_COUNT, MODE_COUNT_RANKED, MODE_ALTITUDE] {
                    pools.bar.push(query(VisType::Bar, c, *w, with(skeleton(t), bare)));
                }
                pools.bar.push(query(VisType::Bar, c, *w, with(skeleton(MODE_COUNT_JOIN), qual.as_ref())));
                for t in [MODE_COUNT, MODE_COUNT_RANKED] {
                    pools.pie.push(query(VisType::Pie, c, *w, with(skeleton(t), bare)));
                }
                pools.pie.push(query(VisType::Pie, c, *w, with(skeleton(MODE_COUNT_JOIN), qual.as_ref())));
            }
            for u in &domains.users {
                let p = Predicate::binary(ColumnRef::bare("user_id"), CmpOp::Eq, Scalar::Int(*u));
                pools.line.push(query(VisType::Line, c, *w, with(skeleton(USER_ALTITUDE), Some(&p))));
            }
            for unit in [BinUnit::Hour, BinUnit::Day, BinUnit::Month] {
                let text = BINNED_ALTITUDE.replace("{unit}", unit.keyword());
                pools.line.push(query(VisType::Line, c, *w, skeleton(&text)));
            }
            for m in &domains.modes {
                let p = Predicate::binary(
                    ColumnRef::qualified("traj_labels", "travel_mode"),
                    CmpOp::Eq,
                    Scalar::Text(m.clone()),
                );
                pools.line.push(query(VisType::Line, c, *w, with(skeleton(MODE_ALTITUDE_JOIN), Some(&p))));
            }
        }
    }
    Ok(pools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tvl::{validate, AreaRef, Timestamp};

    fn cands() -> Vec<(CandidateArea, Vec<TimeWindow>)> {
        let t = |s: &str| Timestamp::parse(s).unwrap();
        let c = |name: &str| CandidateArea {
            area: AreaRef::new(name).unwrap(),
            earliest: t("2010-01-01 00:00:00"),
            latest: t("2010-12-31 00:00:00"),
        };
        let ws = vec![
            TimeWindow::new(t("2010-01-01 00:00:00"), t("2010-02-01 00:00:00")),
            TimeWindow::new(t("2010-03-01 00:00:00"), t("2010-04-01 00:00:00")),
            TimeWindow::new(t("2010-05-01 00:00:00"), t("2010-06-01 00:00:00")),
        ];
        vec![(c("A, X"), ws.clone()), (c("B, X"), ws)]
    }

    #[test]
    fn seeds_are_cartesian() {
        let seeds = generate_seed(&cands());
        assert_eq!(seeds.len(), 6);
        assert!(seeds.iter().all(|q| validate(q).is_empty() && q.vis == VisType::Map));
    }

    #[test]
    fn pools_are_valid() {
        let d = AttributeDomains { users: vec![1, 2], modes: vec!["bus".into()], altitude_thresholds: vec![50.0] };
        let pools = expand_chart_types(&cands(), &d).unwrap();
        // 6 windows x 4 filters x 4 bar templates
        assert_eq!(pools.bar.len(), 6 * 4 * 4);
        assert_eq!(pools.pie.len(), 6 * 4 * 3);
        assert_eq!(pools.line.len(), 6 * (2 + 3 + 1));
        for q in pools.bar.iter().chain(&pools.line).chain(&pools.pie) {
            assert!(validate(q).is_empty(), "{q:?}");
        }
    }

    #[test]
    fn missing_attributes() {
        let d = AttributeDomains { users: vec![1], modes: vec![], altitude_thresholds: vec![1.0] };
        assert_eq!(expand_chart_types(&cands(), &d), Err(GenError::MissingAttribute("travel_mode".into())));
    }
}
