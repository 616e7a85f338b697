use super::HeteroGraph;
use crate::numerics::SparseMatrix;
use crate::Result;

/// Binary adjacency of one relation over the full node index space, plus
/// its symmetric degree normalisation `D^{-1/2} A D^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationAdjacency {
    pub relation: String,
    pub raw: SparseMatrix,
    pub normalized: SparseMatrix,
}

impl RelationAdjacency {
    pub fn dim(&self) -> usize {
        self.raw.rows()
    }

    /// Row sums of the raw adjacency.
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.raw.rows())
            .map(|r| self.raw.row(r).map(|(_, v)| v).sum())
            .collect()
    }
}

/// Normalises `relation` without self-loops.
pub fn normalize(g: &HeteroGraph, relation: &str) -> Result<RelationAdjacency> {
    normalize_with(g, relation, false)
}

/// Symmetric block adjacency for `relation`, optionally with self-loops on
/// every node of the relation's endpoint types.
///
/// Every edge `(s, d)` sets both `A[s, d]` and `A[d, s]`. Zero-degree nodes
/// get `d^{-1/2} = 0`, so their rows and columns stay empty.
pub fn normalize_with(
    g: &HeteroGraph,
    relation: &str,
    self_loops: bool,
) -> Result<RelationAdjacency> {
    let rel = g.relation(relation)?;
    let n = g.total_nodes();
    let (so, dof) = (g.offset(rel.src_type), g.offset(rel.dst_type));
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(rel.len() * 2);
    for &(s, d) in rel.edges() {
        pairs.push((so + s, dof + d));
        pairs.push((dof + d, so + s));
    }
    if self_loops {
        let mut types = vec![rel.src_type, rel.dst_type];
        types.dedup();
        for t in types {
            pairs.extend((0..g.node_count(t)).map(|i| (g.offset(t) + i, g.offset(t) + i)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let raw = SparseMatrix::from_triplets(n, n, pairs.iter().map(|&(i, j)| (i, j, 1.0)))?;
    let mut degree = vec![0usize; n];
    for &(i, _) in &pairs {
        degree[i] += 1;
    }
    let inv_sqrt: Vec<f64> = degree
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let normalized = SparseMatrix::from_csr(
        n,
        n,
        raw.row_offsets().to_vec(),
        raw.col_indices().to_vec(),
        (0..n)
            .flat_map(|r| raw.row(r).map(move |(c, _)| (r, c)))
            .map(|(r, c)| inv_sqrt[r] * inv_sqrt[c])
            .collect(),
    )?;
    Ok(RelationAdjacency {
        relation: relation.to_string(),
        raw,
        normalized,
    })
}
