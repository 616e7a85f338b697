use std::collections::HashSet;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{HeteroGraph, LabelSet, NodeType, Relation};
use crate::numerics::Rng;
use crate::{Error, Result};

/// Parameters for the two-community user–item generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_aux_relations: usize,
    /// Expected fraction of user–item pairs carrying a target edge.
    pub density: f64,
    /// Probability that an auxiliary relation copies a given target edge.
    pub fidelity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 100,
            n_aux_relations: 2,
            density: 0.05,
            fidelity: 0.9,
            seed: 0,
        }
    }
}

/// In-community pairs are this many times likelier than the base density.
const AFFINITY_IN: f64 = 1.8;
const AFFINITY_OUT: f64 = 0.2;
const MIN_TARGET_DEGREE: usize = 2;

const AUX_NAMES: [&str; 3] = ["view", "cart", "favorite"];

pub fn aux_relation_name(k: usize) -> String {
    AUX_NAMES
        .get(k)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("aux{k}"))
}

/// Generates a user–item graph with latent 2-block structure.
///
/// Users and items each get a community id. A target (`purchase`) edge
/// exists with probability `1.8·density` inside a community and
/// `0.2·density` across; users left with fewer than two purchases are
/// topped up with in-community items. Each auxiliary relation keeps every
/// target edge with probability `fidelity` and fills the rest of the user's
/// degree with distinct uniformly random items. Labels are the user
/// communities.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(HeteroGraph, LabelSet)> {
    if spec.n_users == 0 || spec.n_items == 0 {
        return Err(Error::invalid("synthetic graph needs users and items"));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::invalid(format!(
            "density must be in (0, 1], got {}",
            spec.density
        )));
    }
    if !(0.0..=1.0).contains(&spec.fidelity) {
        return Err(Error::invalid(format!(
            "fidelity must be in [0, 1], got {}",
            spec.fidelity
        )));
    }
    let root = Rng::new(spec.seed);
    let mut rng = root.derive(0);
    let user_comm: Vec<usize> = (0..spec.n_users).map(|_| rng.below(2)).collect();
    let item_comm: Vec<usize> = (0..spec.n_items).map(|_| rng.below(2)).collect();
    let p_in = (AFFINITY_IN * spec.density).min(1.0);
    let p_out = (AFFINITY_OUT * spec.density).min(1.0);

    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); spec.n_users];
    for (u, items) in per_user.iter_mut().enumerate() {
        for (i, &comm) in item_comm.iter().enumerate() {
            let p = if user_comm[u] == comm { p_in } else { p_out };
            if rng.bernoulli(p) {
                items.push(i);
            }
        }
        let pool: Vec<usize> = (0..spec.n_items)
            .filter(|&i| item_comm[i] == user_comm[u] && !items.contains(&i))
            .collect();
        let need = MIN_TARGET_DEGREE
            .saturating_sub(items.len())
            .min(pool.len());
        if need > 0 {
            let picks = index::sample(&mut rng, pool.len(), need);
            items.extend(picks.iter().map(|k| pool[k]));
        }
    }
    // Purchase order inside a user is shuffled so "last interaction" is random.
    let mut target_edges = Vec::new();
    for (u, items) in per_user.iter_mut().enumerate() {
        rand::seq::SliceRandom::shuffle(items.as_mut_slice(), &mut rng);
        target_edges.extend(items.iter().map(|&i| (u, i)));
    }

    let mut relations = vec![Relation::new("purchase", 0, 1, target_edges, None)?];
    for k in 0..spec.n_aux_relations {
        let mut rng = root.derive(1 + k as u64);
        let mut edges = Vec::new();
        for (u, items) in per_user.iter().enumerate() {
            let mut chosen: HashSet<usize> = HashSet::with_capacity(items.len());
            for &i in items {
                if rng.bernoulli(spec.fidelity) {
                    chosen.insert(i);
                    edges.push((u, i));
                }
            }
            let missing = (items.len() - chosen.len()).min(spec.n_items - chosen.len());
            let free: Vec<usize> = (0..spec.n_items).filter(|i| !chosen.contains(i)).collect();
            let picks = index::sample(&mut rng, free.len(), missing);
            edges.extend(picks.iter().map(|k| (u, free[k])));
        }
        relations.push(Relation::new(aux_relation_name(k), 0, 1, edges, None)?);
    }

    let graph = HeteroGraph::new(
        vec![
            NodeType {
                name: "user".into(),
                count: spec.n_users,
            },
            NodeType {
                name: "item".into(),
                count: spec.n_items,
            },
        ],
        relations,
        "purchase",
    )?;
    let labels = LabelSet::new(0, user_comm.into_iter().enumerate().collect(), 2)?;
    Ok((graph, labels))
}
