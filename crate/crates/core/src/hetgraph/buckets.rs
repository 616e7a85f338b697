use serde::{Deserialize, Serialize};

use super::HeteroGraph;
use crate::{Error, Result};

/// Half-open degree intervals `[b_{k-1}, b_k)` plus a final open bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buckets {
    boundaries: Vec<usize>,
}

impl Buckets {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "bucket boundaries must be strictly increasing",
            ));
        }
        Ok(Self { boundaries })
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the first bucket whose upper bound exceeds `degree`.
    pub fn assign(&self, degree: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= degree)
    }

    /// `"<8"`, `"<65"`, ..., `">=N"`.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.boundaries.iter().map(|b| format!("<{b}")).collect();
        out.push(match self.boundaries.last() {
            Some(b) => format!(">={b}"),
            None => "all".to_string(),
        });
        out
    }
}

impl Default for Buckets {
    fn default() -> Self {
        Self {
            boundaries: vec![8, 16, 32, 65],
        }
    }
}

/// Target-relation degree of each listed source-type node.
pub fn target_degrees(g: &HeteroGraph, nodes: &[usize]) -> Vec<usize> {
    let mut deg = vec![0usize; g.node_count(g.target_relation().src_type)];
    for &(s, _) in g.target_relation().edges() {
        deg[s] += 1;
    }
    nodes.iter().map(|&n| deg[n]).collect()
}

/// Bucket id for each test node, by its target-relation degree in `g`.
pub fn sparsity_buckets(g: &HeteroGraph, test_nodes: &[usize], buckets: &Buckets) -> Vec<usize> {
    target_degrees(g, test_nodes)
        .into_iter()
        .map(|d| buckets.assign(d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::{NodeType, Relation};

    fn buckets() -> Buckets {
        Buckets::new(vec![8, 65, 100]).unwrap()
    }

    #[test]
    fn low_degree_first_bucket() {
        let b = buckets();
        assert_eq!(b.assign(3), 0);
        assert_eq!(b.labels()[0], "<8");
        assert_eq!(b.labels()[1], "<65");
    }

    #[test]
    fn boundary_goes_up() {
        let b = buckets();
        assert_eq!(b.assign(8), 1);
        assert_eq!(b.assign(64), 1);
        assert_eq!(b.assign(65), 2);
        assert_eq!(b.assign(1000), 3);
    }

    #[test]
    fn degenerate_all_low() {
        let g = HeteroGraph::new(
            vec![
                NodeType {
                    name: "u".into(),
                    count: 3,
                },
                NodeType {
                    name: "i".into(),
                    count: 3,
                },
            ],
            vec![Relation::new("buy", 0, 1, vec![(0, 0), (0, 1), (1, 2)], None).unwrap()],
            "buy",
        )
        .unwrap();
        let ids = sparsity_buckets(&g, &[0, 1, 2], &buckets());
        assert_eq!(ids, vec![0, 0, 0]);
        assert_eq!(target_degrees(&g, &[0, 1, 2]), vec![2, 1, 0]);
    }

    #[test]
    fn non_increasing_rejected() {
        assert!(Buckets::new(vec![8, 8]).is_err());
        assert!(Buckets::new(vec![9, 8]).is_err());
    }
}
