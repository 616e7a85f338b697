use crate::hetgraph::{HeteroGraph, LabelSet};
use crate::numerics::Rng;
use crate::{Error, Result};

/// Target graph with each user's last interaction held out.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOut {
    /// The input graph minus the held-out target edges.
    pub train: HeteroGraph,
    /// `(user, item)` local ids, one per evaluated user, ascending by user.
    pub test: Vec<(usize, usize)>,
    /// Users without any target edge.
    pub excluded_users: usize,
    /// Sorted training items of each user.
    pub positives: Vec<Vec<usize>>,
}

/// Holds out the last target edge of every user: the latest timestamp when
/// timestamps exist (later lines win ties), otherwise the last in file order.
pub fn leave_one_out(g: &HeteroGraph) -> Result<LeaveOneOut> {
    let rel = g.target_relation();
    let users = g.node_count(rel.src_type);
    let mut last: Vec<Option<usize>> = vec![None; users];
    for (pos, &(u, _)) in rel.edges().iter().enumerate() {
        let newer = match (last[u], rel.timestamps()) {
            (None, _) => true,
            (Some(prev), Some(ts)) => ts[pos] >= ts[prev],
            (Some(_), None) => true,
        };
        if newer {
            last[u] = Some(pos);
        }
    }
    let held: Vec<bool> = {
        let mut h = vec![false; rel.len()];
        last.iter().flatten().for_each(|&p| h[p] = true);
        h
    };
    let test: Vec<(usize, usize)> = last.iter().flatten().map(|&p| rel.edges()[p]).collect();
    let excluded_users = last.iter().filter(|p| p.is_none()).count();
    if test.is_empty() {
        return Err(Error::Data("no user has a target edge to hold out".into()));
    }

    let keep: Vec<usize> = (0..rel.len()).filter(|&p| !held[p]).collect();
    let edges = keep.iter().map(|&p| rel.edges()[p]).collect();
    let timestamps = rel
        .timestamps()
        .map(|ts| keep.iter().map(|&p| ts[p]).collect());
    let train = g.with_relation(g.target_index(), rel.with_edges(edges, timestamps)?)?;

    let mut positives = vec![Vec::new(); users];
    for &(u, i) in train.target_relation().edges() {
        positives[u].push(i);
    }
    positives.iter_mut().for_each(|p| p.sort_unstable());
    Ok(LeaveOneOut {
        train,
        test,
        excluded_users,
        positives,
    })
}

/// Up to `per_class` random training nodes per class, the rest for testing.
pub fn split_labels(labels: &LabelSet, per_class: usize, rng: &mut Rng) -> (LabelSet, LabelSet) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.class_count()];
    for (k, &(_, c)) in labels.entries().iter().enumerate() {
        by_class[c].push(k);
    }
    let mut train = Vec::new();
    for members in &mut by_class {
        rand::seq::SliceRandom::shuffle(members.as_mut_slice(), rng);
        // At least one node of every class stays in the test set.
        train.extend(
            members
                .iter()
                .take(per_class.min(members.len().saturating_sub(1))),
        );
    }
    train.sort_unstable();
    let test: Vec<usize> = (0..labels.len())
        .filter(|k| train.binary_search(k).is_err())
        .collect();
    (labels.subset(&train), labels.subset(&test))
}
