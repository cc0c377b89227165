use std::collections::HashMap;

use tvl_core::datagen::{
    build_pools, collect_candidates, fixture_registry, generate_corpus, synthetic_store, GenConfig, SynthConfig,
};
use tvl_core::geo::{execute, ResultTable, TrajStore, Value};
use tvl_core::sqlgen::compile_to_sql;
use tvl_core::tvl::{parse_tvl, render_tvl, validate, Timestamp, VisType};
use tvl_core::visgen::emit_spec;

fn store() -> TrajStore {
    synthetic_store(SynthConfig { seed: 5, points: 10_000, users: 10 }, &fixture_registry())
}

#[test]
fn every_generated_query_runs() {
    let reg = fixture_registry();
    let store = store();
    let cfg = GenConfig { rng_seed: 5, max_tvls: 600, ..GenConfig::default() };
    let corpus = generate_corpus(&store, &reg, &cfg).unwrap();
    assert_eq!(corpus.len(), 600);
    let mut nonempty = HashMap::<VisType, usize>::new();
    for rec in &corpus {
        let q = parse_tvl(&rec.tvl).unwrap();
        assert!(validate(&q).is_empty());
        assert_eq!(render_tvl(&q), rec.tvl);
        let compiled = compile_to_sql(&q, &reg).unwrap();
        let table = execute(&compiled, &store, &reg).unwrap_or_else(|e| panic!("{}: {e}", rec.tvl));
        if !table.is_empty() {
            *nonempty.entry(q.vis).or_default() += 1;
        }
        emit_spec(&q, &table, &reg).unwrap();
    }
    // The synthetic store should make most templates return data.
    for v in VisType::ALL {
        assert!(nonempty.get(&v).copied().unwrap_or(0) > 0, "no {v} query returned rows");
    }
}

#[test]
fn windows_lie_inside_candidate_ranges() {
    let reg = fixture_registry();
    let store = store();
    let cfg = GenConfig { rng_seed: 11, ..GenConfig::default() };
    let pools = build_pools(&store, &reg, &cfg).unwrap();
    assert_eq!(pools.candidates.len(), collect_candidates(&store, &reg).len());
    for (c, ws) in &pools.candidates {
        assert!(!ws.is_empty() && ws.len() <= cfg.intervals_per_area);
        for w in ws {
            assert!(c.earliest <= w.start && w.start <= w.end && w.end <= c.latest);
        }
    }
}

#[test]
fn candidate_ranges_match_scan() {
    let reg = fixture_registry();
    let store = store();
    let cands = collect_candidates(&store, &reg);
    // Luquan has no synthetic points.
    assert_eq!(cands.len(), reg.len() - 1);
    for c in &cands {
        let rec = reg.get(&c.area).unwrap();
        let inside: Vec<Timestamp> =
            store.points().iter().filter(|p| rec.polygon.contains(p.position())).map(|p| p.datetime).collect();
        assert_eq!(c.earliest, *inside.iter().min().unwrap());
        assert_eq!(c.latest, *inside.iter().max().unwrap());
    }
}

#[test]
fn line_altitude_series_is_ordered() {
    let reg = fixture_registry();
    let store = store();
    let user = store.points()[0].user_id;
    let q = parse_tvl(&format!(
        "VISUALIZE line AREA \"Beijing, China\" SQL SELECT datetime, altitude FROM traj_data WHERE user_id = {user} ORDER BY datetime"
    ))
    .unwrap();
    let table: ResultTable = execute(&compile_to_sql(&q, &reg).unwrap(), &store, &reg).unwrap();
    let n = store.points().iter().filter(|p| p.user_id == user).count();
    assert_eq!(table.len(), n);
    let times: Vec<&Value> = table.rows.iter().map(|r| &r[0]).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
    let spec = emit_spec(&q, &table, &reg).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&spec.document).unwrap();
    assert_eq!(doc["data"]["values"].as_array().unwrap().len(), n);
}

#[test]
fn random_queries_compile_and_execute() {
    use rand::SeedableRng;
    let reg = fixture_registry();
    let store = synthetic_store(SynthConfig { seed: 2, points: 2000, users: 5 }, &reg);
    let areas: Vec<_> = reg.records().iter().map(|r| r.name.clone()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let q = tvl_core::testgen::random_query(&mut rng, &areas);
        let compiled = compile_to_sql(&q, &reg).unwrap_or_else(|e| panic!("{}: {e}", render_tvl(&q)));
        execute(&compiled, &store, &reg).unwrap_or_else(|e| panic!("{}: {e}", render_tvl(&q)));
    }
}
