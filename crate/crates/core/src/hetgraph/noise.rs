use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::HeteroGraph;
use crate::numerics::Rng;
use crate::{Error, Result};

/// Replace a fraction of one auxiliary relation's edges with random pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub relation: String,
    pub ratio: f64,
    pub seed: u64,
}

/// Removes `⌊ratio · |E|⌋` uniformly chosen edges of the relation and puts a
/// uniformly drawn pair that is not an original edge in each freed slot.
///
/// Edge count, endpoint types and positions of untouched edges are kept.
pub fn inject_edge_noise(g: &HeteroGraph, spec: &NoiseSpec) -> Result<HeteroGraph> {
    if !(0.0..=1.0).contains(&spec.ratio) {
        return Err(Error::invalid(format!(
            "noise ratio must lie in [0, 1], got {}",
            spec.ratio
        )));
    }
    let rel_idx = g.relation_index(&spec.relation)?;
    if rel_idx == g.target_index() {
        return Err(Error::invalid(format!(
            "`{}` is the target relation; noise applies to auxiliary relations",
            spec.relation
        )));
    }
    let rel = &g.relations()[rel_idx];
    let m = rel.len();
    let k = (spec.ratio * m as f64).floor() as usize;
    if k == 0 {
        return Ok(g.clone());
    }
    let (ns, nd) = (g.node_count(rel.src_type), g.node_count(rel.dst_type));
    let capacity = ns * nd;
    if capacity - m < k {
        return Err(Error::invalid(format!(
            "relation `{}` has only {} free pairs, cannot place {k} noise edges",
            spec.relation,
            capacity - m
        )));
    }

    let mut rng = Rng::new(spec.seed);
    let mut occupied = rel.edge_set();
    let mut edges = rel.edges().to_vec();
    let mut replaced = index::sample(&mut rng, m, k).into_vec();
    replaced.sort_unstable();
    for pos in replaced {
        let pair = loop {
            let p = (rng.below(ns), rng.below(nd));
            if occupied.insert(p) {
                break p;
            }
        };
        edges[pos] = pair;
    }
    let timestamps = rel.timestamps().map(<[i64]>::to_vec);
    g.with_relation(rel_idx, rel.with_edges(edges, timestamps)?)
}
