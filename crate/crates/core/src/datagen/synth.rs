//! Synthetic trajectory store and the bundled area registry fixture.

use rand::Rng;

use super::rng_for;
use crate::geo::{AreaRegistry, LonLat, TrajPoint, TrajStore};
use crate::tvl::Timestamp;

pub const FIXTURE_AREAS: &str = include_str!("../../fixtures/areas.geojson");

pub const MODES: [&str; 7] = ["bike", "bus", "car", "subway", "taxi", "train", "walk"];

/// Seven areas around Beijing (one L-shaped, one with a hole, one covering
/// the whole city) plus an area in Shijiazhuang that no synthetic point
/// reaches.
pub fn fixture_registry() -> AreaRegistry {
    AreaRegistry::from_geojson(FIXTURE_AREAS).expect("bundled fixture is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub points: usize,
    pub users: i64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig { seed: 0, points: 10_000, users: 10 }
    }
}

/// Random-walk trajectories starting near the centroids of the registry's
/// Beijing areas, 2008 to 2012. About 3% of points lack a mode and 5% lack
/// an altitude; roughly one point in ten deviates from its trajectory's
/// main mode.
pub fn synthetic_store(cfg: SynthConfig, registry: &AreaRegistry) -> TrajStore {
    let anchors: Vec<LonLat> = registry
        .records()
        .iter()
        .filter(|r| r.province == "Beijing")
        .map(|r| r.polygon.centroid())
        .collect();
    assert!(!anchors.is_empty(), "registry has no Beijing areas to anchor trajectories");
    let mut rng = rng_for(cfg.seed, "synth");
    let t0 = Timestamp::parse("2008-01-01 00:00:00").expect("literal").unix();
    let t1 = Timestamp::parse("2012-12-31 00:00:00").expect("literal").unix();

    let round = |x: f64, places: i32| {
        let f = 10f64.powi(places);
        (x * f).round() / f
    };
    let mut points = Vec::with_capacity(cfg.points);
    let mut traj_id = 0;
    while points.len() < cfg.points {
        traj_id += 1;
        let user_id = rng.gen_range(0..cfg.users.max(1));
        let anchor = anchors[rng.gen_range(0..anchors.len())];
        let mut lon = anchor.lon + rng.gen_range(-0.03..0.03);
        let mut lat = anchor.lat + rng.gen_range(-0.03..0.03);
        let mode = MODES[rng.gen_range(0..MODES.len())];
        let base_alt = rng.gen_range(20.0..300.0);
        let mut t = rng.gen_range(t0..t1);
        let len = rng.gen_range(20..=80).min(cfg.points - points.len());
        for _ in 0..len {
            let travel_mode = match rng.gen_range(0..100) {
                0..=2 => None,
                3..=12 => Some(MODES[rng.gen_range(0..MODES.len())].to_string()),
                _ => Some(mode.to_string()),
            };
            let altitude = (rng.gen_range(0..100) >= 5).then(|| round(base_alt + rng.gen_range(-15.0..15.0), 1));
            points.push(TrajPoint {
                user_id,
                traj_id,
                latitude: round(lat, 6),
                longitude: round(lon, 6),
                altitude,
                datetime: Timestamp::from_unix(t).expect("in range"),
                travel_mode,
            });
            lon += rng.gen_range(-0.002..0.002);
            lat += rng.gen_range(-0.002..0.002);
            t += rng.gen_range(5..=60);
        }
    }
    TrajStore::new(points).expect("synthetic points are well-formed")
}
