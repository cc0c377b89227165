//! Corpus generation: candidate areas and windows, map seeds, constraint
//! tree augmentation and chart templates, mixed to a target chart share.

mod candidates;
mod charts;
mod config;
pub mod nlq;
pub mod synth;
mod tree;

use std::collections::HashSet;
use std::hash::Hasher;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use candidates::{collect_candidates, sample_intervals, CandidateArea};
pub use charts::{expand_chart_types, generate_seed, ChartPools, TRAJECTORY_SKELETON};
pub use config::{ChartMix, GenConfig};
pub use nlq::{describe, Scenario};
pub use synth::{fixture_registry, synthetic_store, SynthConfig};
pub use tree::{augment, build_constraint_tree, nearest_rank, AttributeDomains, ConstraintNode, NodeKind};

use crate::geo::{AreaRegistry, TrajStore};
use crate::tvl::{render_tvl, TvlQuery, VisType};

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("no registry area contains any trajectory point")]
    NoCandidates,
    #[error("store lacks values for `{0}`")]
    MissingAttribute(String),
    #[error("template pools cannot fill any corpus under the requested chart mix")]
    Exhausted,
}

/// A stable 64-bit FNV-1a hash; std's hasher is not stable across releases.
struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x100_0000_01b3);
        }
    }
}

/// Independent deterministic stream per purpose under one seed.
pub(crate) fn rng_for(seed: u64, purpose: &str) -> ChaCha8Rng {
    let mut h = Fnv(0xcbf2_9ce4_8422_2325);
    h.write(purpose.as_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h.finish());
    rng
}

/// One line of a generated corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub vis_type: VisType,
    pub tvl: String,
}

/// Per-type counts summing to `n`: floors of `n * share`, with the leftover
/// units going to the largest fractional parts (ties in [`VisType::ALL`]
/// order).
pub fn largest_remainder(n: usize, mix: &ChartMix) -> [usize; 4] {
    let exact: Vec<f64> = VisType::ALL.iter().map(|v| n as f64 * mix.share(*v)).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    [counts[0], counts[1], counts[2], counts[3]]
}

/// Everything the pipeline produced before mixing, for inspection.
#[derive(Debug, Clone)]
pub struct Pools {
    pub candidates: Vec<(CandidateArea, Vec<crate::tvl::TimeWindow>)>,
    pub map: Vec<TvlQuery>,
    pub charts: ChartPools,
}

pub fn build_pools(store: &TrajStore, registry: &AreaRegistry, cfg: &GenConfig) -> Result<Pools, GenError> {
    cfg.validate()?;
    let candidates: Vec<_> = collect_candidates(store, registry)
        .into_iter()
        .map(|c| {
            let ws = sample_intervals(&c, cfg);
            (c, ws)
        })
        .collect();
    if candidates.is_empty() {
        return Err(GenError::NoCandidates);
    }
    let domains = AttributeDomains::from_store(store, &cfg.altitude_quantiles);
    let seeds = generate_seed(&candidates);
    let tree = build_constraint_tree(&domains, cfg.tree_depth);
    let unlimited = GenConfig { max_tvls: usize::MAX, ..cfg.clone() };
    let mut map = seeds.clone();
    map.extend(augment(&seeds, &tree, &unlimited));
    let charts = expand_chart_types(&candidates, &domains)?;
    Ok(Pools { candidates, map, charts })
}

/// Runs the full pipeline and returns the corpus in its final order.
///
/// The corpus size is the largest `n <= cfg.max_tvls` whose per-type
/// quotas every pool can fill.
pub fn generate_corpus(store: &TrajStore, registry: &AreaRegistry, cfg: &GenConfig) -> Result<Vec<CorpusRecord>, GenError> {
    let pools = build_pools(store, registry, cfg)?;
    let mut by_type = [pools.map, pools.charts.bar, pools.charts.line, pools.charts.pie];
    for (i, pool) in by_type.iter_mut().enumerate() {
        let mut seen = HashSet::new();
        pool.retain(|q| seen.insert(render_tvl(q)));
        pool.shuffle(&mut rng_for(cfg.rng_seed, &format!("pool/{}", VisType::ALL[i])));
    }
    let sizes: Vec<usize> = by_type.iter().map(Vec::len).collect();
    let n = (1..=cfg.max_tvls)
        .rev()
        .find(|&n| largest_remainder(n, &cfg.chart_mix).iter().zip(&sizes).all(|(q, s)| q <= s))
        .ok_or(GenError::Exhausted)?;
    let quotas = largest_remainder(n, &cfg.chart_mix);

    let mut chosen: Vec<TvlQuery> = Vec::with_capacity(n);
    for (pool, q) in by_type.into_iter().zip(quotas) {
        chosen.extend(pool.into_iter().take(q));
    }
    chosen.shuffle(&mut rng_for(cfg.rng_seed, "corpus"));
    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(i, q)| CorpusRecord { id: format!("tvl-{:05}", i + 1), vis_type: q.vis, tvl: render_tvl(&q) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tvl::parse_tvl;

    #[test]
    fn largest_remainder_thousand() {
        let c = largest_remainder(1000, &ChartMix::default());
        assert_eq!(c, [697, 113, 104, 86]);
        let c = largest_remainder(7, &ChartMix::default());
        assert_eq!(c.iter().sum::<usize>(), 7);
        for (count, v) in c.iter().zip(VisType::ALL) {
            assert!((*count as f64 - 7.0 * ChartMix::default().share(v)).abs() < 1.0);
        }
    }

    #[test]
    fn small_corpus_end_to_end() {
        let reg = fixture_registry();
        let store = synthetic_store(SynthConfig { seed: 1, points: 3000, users: 4 }, &reg);
        let cfg = GenConfig { rng_seed: 9, max_tvls: 200, ..GenConfig::default() };
        let corpus = generate_corpus(&store, &reg, &cfg).unwrap();
        assert_eq!(corpus.len(), 200);
        let counts = VisType::ALL.map(|v| corpus.iter().filter(|r| r.vis_type == v).count());
        assert_eq!(counts, largest_remainder(200, &cfg.chart_mix));
        let texts: HashSet<&str> = corpus.iter().map(|r| r.tvl.as_str()).collect();
        assert_eq!(texts.len(), 200);
        assert!(corpus.iter().all(|r| parse_tvl(&r.tvl).is_ok()));
        assert_eq!(corpus, generate_corpus(&store, &reg, &cfg).unwrap());
    }

    #[test]
    fn streams_differ_by_purpose() {
        use rand::Rng;
        let a: u64 = rng_for(1, "a").gen();
        let b: u64 = rng_for(1, "b").gen();
        assert_ne!(a, b);
    }
}
