use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
}

/// One typed edge set. Endpoints are local ids within their node types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub src_type: usize,
    pub dst_type: usize,
    edges: Vec<(usize, usize)>,
    /// Optional per-edge timestamps, parallel to `edges`.
    timestamps: Option<Vec<i64>>,
}

impl Relation {
    /// Builds a relation, dropping repeated edges (first occurrence wins).
    pub fn new(
        name: impl Into<String>,
        src_type: usize,
        dst_type: usize,
        edges: Vec<(usize, usize)>,
        timestamps: Option<Vec<i64>>,
    ) -> Result<Self> {
        let name = name.into();
        if let Some(ts) = &timestamps {
            if ts.len() != edges.len() {
                return Err(Error::invalid(format!(
                    "relation `{name}`: {} timestamps for {} edges",
                    ts.len(),
                    edges.len()
                )));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut kept = Vec::with_capacity(edges.len());
        let mut kept_ts = timestamps.as_ref().map(|_| Vec::with_capacity(edges.len()));
        for (k, e) in edges.into_iter().enumerate() {
            if seen.insert(e) {
                kept.push(e);
                if let (Some(out), Some(ts)) = (kept_ts.as_mut(), timestamps.as_ref()) {
                    out.push(ts[k]);
                }
            }
        }
        Ok(Self {
            name,
            src_type,
            dst_type,
            edges: kept,
            timestamps: kept_ts,
        })
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge_set(&self) -> HashSet<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    /// Same relation with a different edge list (timestamps dropped unless
    /// the new list is position-compatible and supplied).
    pub fn with_edges(
        &self,
        edges: Vec<(usize, usize)>,
        timestamps: Option<Vec<i64>>,
    ) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.src_type,
            self.dst_type,
            edges,
            timestamps,
        )
    }
}

/// Typed multi-relation graph with a designated target relation.
///
/// Each node type owns a dense 0-based id space; global indices are the
/// local id plus the type's offset, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeteroGraph {
    node_types: Vec<NodeType>,
    offsets: Vec<usize>,
    relations: Vec<Relation>,
    target: usize,
}

impl HeteroGraph {
    pub fn new(node_types: Vec<NodeType>, relations: Vec<Relation>, target: &str) -> Result<Self> {
        let mut names = HashSet::new();
        for nt in &node_types {
            if !names.insert(nt.name.as_str()) {
                return Err(Error::Config(format!("duplicate node type `{}`", nt.name)));
            }
        }
        let mut rel_names = HashSet::new();
        for rel in &relations {
            if !rel_names.insert(rel.name.as_str()) {
                return Err(Error::Config(format!("duplicate relation `{}`", rel.name)));
            }
            for ty in [rel.src_type, rel.dst_type] {
                if ty >= node_types.len() {
                    return Err(Error::Config(format!(
                        "relation `{}` references node type #{ty}",
                        rel.name
                    )));
                }
            }
            let (ns, nd) = (
                node_types[rel.src_type].count,
                node_types[rel.dst_type].count,
            );
            if let Some(&(s, d)) = rel.edges.iter().find(|&&(s, d)| s >= ns || d >= nd) {
                return Err(Error::Data(format!(
                    "relation `{}`: edge ({s}, {d}) outside node ranges {ns} x {nd}",
                    rel.name
                )));
            }
        }
        let target = relations
            .iter()
            .position(|r| r.name == target)
            .ok_or_else(|| Error::UnknownRelation(target.to_string()))?;
        let mut offsets = Vec::with_capacity(node_types.len());
        let mut acc = 0;
        for nt in &node_types {
            offsets.push(acc);
            acc += nt.count;
        }
        Ok(Self {
            node_types,
            offsets,
            relations,
            target,
        })
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn node_type_index(&self, name: &str) -> Result<usize> {
        self.node_types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::UnknownNodeType(name.to_string()))
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn offset(&self, node_type: usize) -> usize {
        self.offsets[node_type]
    }

    pub fn node_count(&self, node_type: usize) -> usize {
        self.node_types[node_type].count
    }

    pub fn total_nodes(&self) -> usize {
        self.node_types.iter().map(|t| t.count).sum()
    }

    /// Global index of a local node id.
    pub fn global(&self, node_type: usize, local: usize) -> usize {
        self.offsets[node_type] + local
    }

    /// Node type and local id of a global index.
    pub fn locate(&self, global: usize) -> Option<(usize, usize)> {
        (0..self.node_types.len())
            .rev()
            .find(|&t| self.offsets[t] <= global && self.node_types[t].count > 0)
            .filter(|&t| global < self.offsets[t] + self.node_types[t].count)
            .map(|t| (t, global - self.offsets[t]))
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation_index(&self, name: &str) -> Result<usize> {
        self.relations
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn relation(&self, name: &str) -> Result<&Relation> {
        Ok(&self.relations[self.relation_index(name)?])
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target_relation(&self) -> &Relation {
        &self.relations[self.target]
    }

    pub fn target_name(&self) -> &str {
        &self.relations[self.target].name
    }

    pub fn auxiliary_indices(&self) -> Vec<usize> {
        (0..self.relations.len())
            .filter(|&r| r != self.target)
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.relations.iter().map(Relation::len).sum()
    }

    /// Same graph with relation `index` replaced.
    pub fn with_relation(&self, index: usize, relation: Relation) -> Result<Self> {
        let mut relations = self.relations.clone();
        relations[index] = relation;
        Self::new(self.node_types.clone(), relations, self.target_name())
    }

    /// Same graph keeping only the listed relations; the target must survive.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let relations = keep.iter().map(|&r| self.relations[r].clone()).collect();
        Self::new(self.node_types.clone(), relations, self.target_name())
    }

    /// Hex SHA-256 over node types and every relation's edge list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for nt in &self.node_types {
            h.update(format!("type {} {}\n", nt.name, nt.count).as_bytes());
        }
        for (i, rel) in self.relations.iter().enumerate() {
            let marker = if i == self.target { "*" } else { "" };
            h.update(
                format!(
                    "rel {}{marker} {} {}\n",
                    rel.name, rel.src_type, rel.dst_type
                )
                .as_bytes(),
            );
            for &(s, d) in &rel.edges {
                h.update((s as u64).to_le_bytes());
                h.update((d as u64).to_le_bytes());
            }
            if let Some(ts) = &rel.timestamps {
                for t in ts {
                    h.update(t.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// A subset of a graph's relations sharing its node index space.
#[derive(Debug, Clone, Copy)]
pub struct GraphView<'g> {
    graph: &'g HeteroGraph,
    relations: &'g [usize],
}

impl<'g> GraphView<'g> {
    pub fn new(graph: &'g HeteroGraph, relations: &'g [usize]) -> Self {
        Self { graph, relations }
    }

    pub fn graph(&self) -> &'g HeteroGraph {
        self.graph
    }

    pub fn relation_indices(&self) -> &'g [usize] {
        self.relations
    }

    pub fn relations(&self) -> impl Iterator<Item = &'g Relation> + '_ {
        self.relations.iter().map(|&r| &self.graph.relations[r])
    }

    pub fn relation_names(&self) -> Vec<&'g str> {
        self.relations().map(|r| r.name.as_str()).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.relations().map(Relation::len).sum()
    }
}

/// Partition of a graph into its target relation and everything else.
#[derive(Debug, Clone)]
pub struct TargetSplit {
    pub target: Vec<usize>,
    pub auxiliary: Vec<usize>,
}

impl TargetSplit {
    pub fn target_view<'g>(&'g self, g: &'g HeteroGraph) -> GraphView<'g> {
        GraphView::new(g, &self.target)
    }

    pub fn auxiliary_view<'g>(&'g self, g: &'g HeteroGraph) -> GraphView<'g> {
        GraphView::new(g, &self.auxiliary)
    }
}

/// Splits off the target relation; the rest forms the auxiliary graph.
pub fn split_target_auxiliary(g: &HeteroGraph) -> Result<TargetSplit> {
    if g.relations().len() < 2 {
        return Err(Error::Data(
            "graph has a single relation, so there is no auxiliary view".into(),
        ));
    }
    Ok(TargetSplit {
        target: vec![g.target_index()],
        auxiliary: g.auxiliary_indices(),
    })
}
