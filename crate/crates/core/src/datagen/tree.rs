use std::collections::HashSet;

use rand::seq::SliceRandom;

use super::{rng_for, GenConfig};
use crate::geo::TrajStore;
use crate::tvl::{render_tvl, CmpOp, ColumnRef, Predicate, Scalar, TvlQuery};

/// Value domains of the auxiliary attributes constraints are built from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttributeDomains {
    pub users: Vec<i64>,
    pub modes: Vec<String>,
    pub altitude_thresholds: Vec<f64>,
}

/// Nearest-rank quantile of sorted, non-empty data.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

impl AttributeDomains {
    pub fn from_store(store: &TrajStore, quantiles: &[f64]) -> AttributeDomains {
        let mut alts: Vec<f64> = store.points().iter().filter_map(|p| p.altitude).collect();
        alts.sort_by(f64::total_cmp);
        let mut altitude_thresholds = Vec::new();
        if !alts.is_empty() {
            for &q in quantiles {
                let t = nearest_rank(&alts, q);
                if !altitude_thresholds.contains(&t) {
                    altitude_thresholds.push(t);
                }
            }
        }
        AttributeDomains { users: store.distinct_users(), modes: store.distinct_modes(), altitude_thresholds }
    }

    /// Single-attribute predicates grouped by attribute, in a fixed
    /// attribute order (user, mode, altitude).
    pub fn leaf_predicates(&self) -> Vec<Vec<Predicate>> {
        let users = self
            .users
            .iter()
            .map(|u| Predicate::binary(ColumnRef::bare("user_id"), CmpOp::Eq, Scalar::Int(*u)))
            .collect();
        let modes = self
            .modes
            .iter()
            .map(|m| Predicate::binary(ColumnRef::bare("travel_mode"), CmpOp::Eq, Scalar::Text(m.clone())))
            .collect();
        let alts = self
            .altitude_thresholds
            .iter()
            .map(|t| Predicate::binary(ColumnRef::bare("altitude"), CmpOp::Ge, Scalar::Float(*t)))
            .collect();
        vec![users, modes, alts]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Root,
    Leaf,
    Combo,
}

/// Leaves hold one predicate; a combo below a leaf conjoins predicates on
/// distinct attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintNode {
    pub kind: NodeKind,
    pub predicates: Vec<Predicate>,
    pub children: Vec<ConstraintNode>,
}

impl ConstraintNode {
    /// Every non-root node in preorder.
    pub fn nodes(&self) -> Vec<&ConstraintNode> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a ConstraintNode, out: &mut Vec<&'a ConstraintNode>) {
            if n.kind != NodeKind::Root {
                out.push(n);
            }
            for c in &n.children {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes().iter().filter(|n| n.kind == kind).count()
    }
}

/// Leaves for every attribute value; below each leaf, conjunctions with
/// values of later attributes, up to `depth` attributes per node.
pub fn build_constraint_tree(domains: &AttributeDomains, depth: usize) -> ConstraintNode {
    let attrs = domains.leaf_predicates();
    fn expand(attrs: &[Vec<Predicate>], from: usize, prefix: &[Predicate], depth: usize) -> Vec<ConstraintNode> {
        if prefix.len() >= depth {
            return Vec::new();
        }
        let mut out = Vec::new();
        for (ai, values) in attrs.iter().enumerate().skip(from) {
            for p in values {
                let mut predicates = prefix.to_vec();
                predicates.push(p.clone());
                let children = expand(attrs, ai + 1, &predicates, depth);
                let kind = if prefix.is_empty() { NodeKind::Leaf } else { NodeKind::Combo };
                out.push(ConstraintNode { kind, predicates, children });
            }
        }
        out
    }
    ConstraintNode { kind: NodeKind::Root, predicates: Vec::new(), children: expand(&attrs, 0, &[], depth) }
}

/// Attaches tree nodes to seeds: every (seed, node) pair in a seeded random
/// order, keeping the first occurrence of each canonical text, up to
/// `cfg.max_tvls`.
pub fn augment(seeds: &[TvlQuery], tree: &ConstraintNode, cfg: &GenConfig) -> Vec<TvlQuery> {
    let nodes = tree.nodes();
    let mut pairs: Vec<(usize, usize)> =
        (0..seeds.len()).flat_map(|s| (0..nodes.len()).map(move |n| (s, n))).collect();
    pairs.shuffle(&mut rng_for(cfg.rng_seed, "augment"));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (s, n) in pairs {
        if out.len() >= cfg.max_tvls {
            break;
        }
        let mut q = seeds[s].clone();
        for p in &nodes[n].predicates {
            q.sql.filter.push(p.clone());
        }
        if seen.insert(render_tvl(&q)) {
            out.push(q);
        }
    }
    out
}
