//! Typed multi-relation graphs and the operations the pipeline needs on them.

mod buckets;
mod graph;
pub mod io;
mod noise;
mod normalize;
mod synth;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use buckets::{sparsity_buckets, target_degrees, Buckets};
pub use graph::{split_target_auxiliary, GraphView, HeteroGraph, NodeType, Relation, TargetSplit};
pub use io::{
    format_edge_list, format_labels, load_edge_list, load_labels, parse_edge_list, Schema,
};
pub use noise::{inject_edge_noise, NoiseSpec};
pub use normalize::{normalize, normalize_with, RelationAdjacency};
pub use synth::{aux_relation_name, generate_synthetic, SyntheticSpec};

/// Class labels for a subset of one node type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    node_type: usize,
    /// `(local node id, class)` sorted by node id.
    entries: Vec<(usize, usize)>,
    class_count: usize,
}

impl LabelSet {
    pub fn new(
        node_type: usize,
        mut entries: Vec<(usize, usize)>,
        class_count: usize,
    ) -> Result<Self> {
        entries.sort_unstable();
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Data("node labelled twice".into()));
        }
        if let Some(&(n, c)) = entries.iter().find(|&&(_, c)| c >= class_count) {
            return Err(Error::Data(format!(
                "node {n} has class {c} but only {class_count} classes exist"
            )));
        }
        Ok(Self {
            node_type,
            entries,
            class_count,
        })
    }

    pub fn node_type(&self) -> usize {
        self.node_type
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn subset(&self, keep: &[usize]) -> Self {
        Self {
            node_type: self.node_type,
            entries: keep.iter().map(|&k| self.entries[k]).collect(),
            class_count: self.class_count,
        }
    }
}
