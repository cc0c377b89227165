use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{rng_for, GenConfig};
use crate::geo::{AreaRegistry, TrajStore};
use crate::tvl::{AreaRef, TimeWindow, Timestamp};

/// An area with at least one point, and the span of its point timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateArea {
    pub area: AreaRef,
    pub earliest: Timestamp,
    pub latest: Timestamp,
}

impl CandidateArea {
    pub fn range(&self) -> TimeWindow {
        TimeWindow::new(self.earliest, self.latest)
    }
}

/// One candidate per registry area that contains a point, in registry order.
pub fn collect_candidates(store: &TrajStore, registry: &AreaRegistry) -> Vec<CandidateArea> {
    let mut out = Vec::new();
    for rec in registry.records() {
        let bbox = rec.polygon.bbox();
        let mut span: Option<(Timestamp, Timestamp)> = None;
        for p in store.points() {
            let pos = p.position();
            if !bbox.contains(pos) || !rec.contains(pos) {
                continue;
            }
            span = Some(match span {
                None => (p.datetime, p.datetime),
                Some((lo, hi)) => (lo.min(p.datetime), hi.max(p.datetime)),
            });
        }
        if let Some((earliest, latest)) = span {
            out.push(CandidateArea { area: rec.name.clone(), earliest, latest });
        }
    }
    out
}

const MIN_WINDOW_SECS: i64 = 3600;

/// Draws `cfg.intervals_per_area` distinct sub-windows of the candidate's
/// range, each at least an hour long (or the whole range when shorter).
///
/// A range that is a single instant yields exactly one point window. A
/// range too short to hold that many distinct windows yields fewer.
pub fn sample_intervals(c: &CandidateArea, cfg: &GenConfig) -> Vec<TimeWindow> {
    let (lo, hi) = (c.earliest.unix(), c.latest.unix());
    if lo >= hi {
        return vec![TimeWindow::new(c.earliest, c.earliest)];
    }
    let span = hi - lo;
    let min_len = MIN_WINDOW_SECS.min(span);
    let mut rng: ChaCha8Rng = rng_for(cfg.rng_seed, &format!("intervals/{}", c.area.lookup_key()));
    let mut out: Vec<TimeWindow> = Vec::with_capacity(cfg.intervals_per_area);
    let mut attempts = 0;
    while out.len() < cfg.intervals_per_area && attempts < 64 * cfg.intervals_per_area {
        attempts += 1;
        let len = rng.gen_range(min_len..=span);
        let start = rng.gen_range(lo..=hi - len);
        let w = TimeWindow::new(
            Timestamp::from_unix(start).expect("inside observed range"),
            Timestamp::from_unix(start + len).expect("inside observed range"),
        );
        if !out.contains(&w) {
            out.push(w);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{AreaRecord, LonLat, Polygon, TrajPoint};

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    fn candidate(a: &str, b: &str) -> CandidateArea {
        CandidateArea { area: AreaRef::new("A, B").unwrap(), earliest: ts(a), latest: ts(b) }
    }

    #[test]
    fn hundred_days_three_windows() {
        let cfg = GenConfig { intervals_per_area: 3, rng_seed: 7, ..GenConfig::default() };
        let c = candidate("2010-01-01 00:00:00", "2010-04-11 00:00:00");
        let ws = sample_intervals(&c, &cfg);
        assert_eq!(ws.len(), 3);
        for (i, w) in ws.iter().enumerate() {
            assert!(c.earliest <= w.start && w.start < w.end && w.end <= c.latest);
            assert!(w.end.unix() - w.start.unix() >= 3600);
            assert!(!ws[..i].contains(w));
        }
        assert_eq!(ws, sample_intervals(&c, &cfg));
    }

    #[test]
    fn degenerate_range() {
        let c = candidate("2010-01-01 00:00:00", "2010-01-01 00:00:00");
        assert_eq!(sample_intervals(&c, &GenConfig::default()), vec![c.range()]);
    }

    #[test]
    fn populated_areas_only() {
        let rect = |name: &str, x: f64| AreaRecord {
            name: AreaRef::new(name).unwrap(),
            province: String::new(),
            polygon: Polygon::rectangle(LonLat::new(x, 0.0), LonLat::new(x + 1.0, 1.0)),
        };
        let reg = AreaRegistry::new(vec![rect("A", 0.0), rect("B", 2.0), rect("C", 4.0)]).unwrap();
        let pt = |lon: f64, t: &str| TrajPoint {
            user_id: 1,
            traj_id: 1,
            latitude: 0.5,
            longitude: lon,
            altitude: None,
            datetime: ts(t),
            travel_mode: None,
        };
        let store = TrajStore::new(vec![
            pt(0.5, "2010-01-01 00:00:00"),
            pt(2.5, "2010-01-02 00:00:00"),
            pt(2.6, "2010-01-03 00:00:00"),
        ])
        .unwrap();
        let cs = collect_candidates(&store, &reg);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].earliest, cs[0].latest);
        assert_eq!(cs[1].range(), TimeWindow::new(ts("2010-01-02 00:00:00"), ts("2010-01-03 00:00:00")));
    }
}
