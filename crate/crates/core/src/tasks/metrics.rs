use serde::{Deserialize, Serialize};

use crate::numerics::DenseMatrix;
use crate::{Error, Result};

/// 1-based rank of `truth` among `scores`, skipping `excluded` items.
///
/// Higher scores rank first; equal scores rank by ascending item id.
pub fn rank_of(scores: &[f64], excluded: &[usize], truth: usize) -> Result<usize> {
    if truth >= scores.len() {
        return Err(Error::invalid(format!(
            "ground-truth item {truth} outside {} candidates",
            scores.len()
        )));
    }
    if excluded.contains(&truth) {
        return Err(Error::invalid(format!(
            "ground-truth item {truth} is masked out"
        )));
    }
    let s = scores[truth];
    if !s.is_finite() {
        return Err(Error::invalid("non-finite ground-truth score"));
    }
    let mut masked = vec![false; scores.len()];
    for &j in excluded {
        if j < masked.len() {
            masked[j] = true;
        }
    }
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| !masked[j] && j != truth && (v > s || (v == s && j < truth)))
        .count();
    Ok(ahead + 1)
}

pub fn recall_at(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_at(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub recall: f64,
    pub ndcg: f64,
    pub users: usize,
}

impl RankMetrics {
    /// Averages over ranks in the given order. Empty input gives zeros.
    pub fn from_ranks(ranks: &[usize], k: usize) -> Self {
        if ranks.is_empty() {
            return Self {
                recall: 0.0,
                ndcg: 0.0,
                users: 0,
            };
        }
        let n = ranks.len() as f64;
        Self {
            recall: ranks.iter().map(|&r| recall_at(r, k)).sum::<f64>() / n,
            ndcg: ranks.iter().map(|&r| ndcg_at(r, k)).sum::<f64>() / n,
            users: ranks.len(),
        }
    }
}

/// One leave-one-out query: scores over the whole catalog, the items to
/// mask, and the held-out item.
#[derive(Debug, Clone, PartialEq)]
pub struct RankQuery {
    pub scores: Vec<f64>,
    pub excluded: Vec<usize>,
    pub truth: usize,
}

pub fn rank_metrics(queries: &[RankQuery], k: usize) -> Result<RankMetrics> {
    let ranks = queries
        .iter()
        .map(|q| rank_of(&q.scores, &q.excluded, q.truth))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankMetrics::from_ranks(&ranks, k))
}

/// AUC or an explicit marker when the test labels hold a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AucRepr", into = "AucRepr")]
pub enum AucValue {
    Value(f64),
    Undefined,
}

impl AucValue {
    pub fn value(self) -> Option<f64> {
        match self {
            AucValue::Value(v) => Some(v),
            AucValue::Undefined => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AucRepr {
    Value(f64),
    Marker(String),
}

impl From<AucValue> for AucRepr {
    fn from(v: AucValue) -> Self {
        match v {
            AucValue::Value(x) => AucRepr::Value(x),
            AucValue::Undefined => AucRepr::Marker("undefined".into()),
        }
    }
}

impl TryFrom<AucRepr> for AucValue {
    type Error = String;

    fn try_from(r: AucRepr) -> std::result::Result<Self, String> {
        match r {
            AucRepr::Value(x) => Ok(AucValue::Value(x)),
            AucRepr::Marker(s) if s == "undefined" => Ok(AucValue::Undefined),
            AucRepr::Marker(s) => Err(format!("unknown AUC marker `{s}`")),
        }
    }
}

impl std::fmt::Display for AucValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AucValue::Value(v) => write!(f, "{v}"),
            AucValue::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub auc: AucValue,
}

/// Index of the largest score; ties go to the lowest class id.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Mann–Whitney AUC with midranks for ties. `None` when either side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..=j share the midrank of ranks i+1..=j+1.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * mid;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Micro-F1, Macro-F1 and AUC from per-class scores.
///
/// Predictions are row argmaxes. Macro-F1 averages `2TP/(2TP+FP+FN)` over
/// classes that occur in the labels or the predictions. AUC uses column 1
/// for two classes and the one-vs-rest mean over classes present in the
/// labels otherwise.
pub fn class_metrics(scores: &DenseMatrix, labels: &[usize]) -> Result<ClassMetrics> {
    let (n, classes) = scores.shape();
    if n == 0 || labels.len() != n {
        return Err(Error::shape(
            "class_metrics",
            format!("{n} labels, n > 0"),
            labels.len(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} outside {classes} classes"
        )));
    }
    let predicted: Vec<usize> = (0..n).map(|r| argmax(scores.row(r))).collect();
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    let micro_f1 = correct as f64 / n as f64;

    let (mut tp, mut fp, mut fnn) = (
        vec![0usize; classes],
        vec![0usize; classes],
        vec![0usize; classes],
    );
    for (&p, &y) in predicted.iter().zip(labels) {
        if p == y {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fnn[y] += 1;
        }
    }
    let active: Vec<usize> = (0..classes)
        .filter(|&c| tp[c] + fp[c] + fnn[c] > 0)
        .collect();
    let macro_f1 = active
        .iter()
        .map(|&c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fnn[c]) as f64)
        .sum::<f64>()
        / active.len() as f64;

    let present = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&y| seen[y] = true);
        seen
    };
    let auc = if present.iter().filter(|&&p| p).count() < 2 {
        AucValue::Undefined
    } else if classes == 2 {
        let col: Vec<f64> = (0..n).map(|r| scores[(r, 1)]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        AucValue::Value(binary_auc(&col, &pos).expect("both classes present"))
    } else {
        let per_class: Vec<f64> = (0..classes)
            .filter(|&c| present[c])
            .map(|c| {
                let col: Vec<f64> = (0..n).map(|r| scores[(r, c)]).collect();
                let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
                binary_auc(&col, &pos).expect("class present, others too")
            })
            .collect();
        AucValue::Value(per_class.iter().sum::<f64>() / per_class.len() as f64)
    };
    Ok(ClassMetrics {
        micro_f1,
        macro_f1,
        auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    /// Position of `truth` after sorting unmasked items by (−score, id).
    fn brute_rank(scores: &[f64], excluded: &[usize], truth: usize) -> usize {
        let mut items: Vec<usize> = (0..scores.len())
            .filter(|j| !excluded.contains(j))
            .collect();
        items.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        items.iter().position(|&j| j == truth).unwrap() + 1
    }

    fn brute_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if positive[i] && !positive[j] {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn rank_examples() {
        let scores = [0.9, 0.5, 0.1];
        assert_eq!(rank_of(&scores, &[], 0).unwrap(), 1);
        assert_eq!((recall_at(1, 20), ndcg_at(1, 20)), (1.0, 1.0));
        assert!((ndcg_at(2, 20) - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((ndcg_at(2, 20) - 0.6309).abs() < 1e-4);
        assert_eq!((recall_at(21, 20), ndcg_at(21, 20)), (0.0, 0.0));
        assert_eq!(rank_of(&scores, &[0], 1).unwrap(), 1);
        assert!(rank_of(&scores, &[1], 1).is_err());
        assert!(rank_of(&scores, &[], 3).is_err());
    }

    #[test]
    fn ties_rank_by_item_id() {
        let flat = [1.0; 10];
        for truth in 0..10 {
            assert_eq!(rank_of(&flat, &[], truth).unwrap(), truth + 1);
        }
        // With uniform truth, mean Recall@K over all placements is K/n.
        let ranks: Vec<usize> = (0..10).map(|t| rank_of(&flat, &[], t).unwrap()).collect();
        assert!((RankMetrics::from_ranks(&ranks, 3).recall - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rank_brute_force_and_invariances() {
        let mut rng = Rng::new(4);
        for _ in 0..2000 {
            let n = 1 + rng.below(10);
            let scores: Vec<f64> = (0..n).map(|_| rng.below(4) as f64).collect();
            let truth = rng.below(n);
            let excluded: Vec<usize> = (0..n)
                .filter(|&j| j != truth && rng.bernoulli(0.3))
                .collect();
            let r = rank_of(&scores, &excluded, truth).unwrap();
            assert_eq!(r, brute_rank(&scores, &excluded, truth));
            let mono: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp() - 7.0).collect();
            assert_eq!(rank_of(&mono, &excluded, truth).unwrap(), r);
            for k in 1..n {
                assert!(recall_at(r, k) <= recall_at(r, k + 1));
                assert!(ndcg_at(r, k) <= ndcg_at(r, k + 1));
            }
        }
    }

    #[test]
    fn perfect_classifier() {
        let s = DenseMatrix::from_rows(&[
            [0.9, 0.1, 0.0],
            [0.0, 1.0, 0.0],
            [0.1, 0.2, 0.7],
            [0.6, 0.3, 0.1],
        ])
        .unwrap();
        let m = class_metrics(&s, &[0, 1, 2, 0]).unwrap();
        assert_eq!(
            (m.micro_f1, m.macro_f1, m.auc),
            (1.0, 1.0, AucValue::Value(1.0))
        );
    }

    #[test]
    fn constant_scores_give_half_auc() {
        let s = DenseMatrix::filled(6, 2, 0.5);
        assert_eq!(
            class_metrics(&s, &[0, 1, 0, 1, 0, 1]).unwrap().auc,
            AucValue::Value(0.5)
        );
    }

    #[test]
    fn confusion_matrix_oracle() {
        // Predictions (col 1 > col 0 means class 1): 1 1 0 0 1 0
        // Labels:                                     1 0 0 1 1 0
        // Class 1: TP 2, FP 1, FN 1 → F1 2/3. Class 0: TP 2, FP 1, FN 1 → 2/3.
        let s = DenseMatrix::from_rows(&[
            [0.1, 0.9],
            [0.4, 0.6],
            [0.8, 0.2],
            [0.7, 0.3],
            [0.3, 0.7],
            [0.6, 0.4],
        ])
        .unwrap();
        let m = class_metrics(&s, &[1, 0, 0, 1, 1, 0]).unwrap();
        assert!((m.micro_f1 - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
        // Positives score .9 .3 .7, negatives .6 .2 .4: 7 of 9 pairs ordered.
        assert_eq!(m.auc, AucValue::Value(7.0 / 9.0));
    }

    #[test]
    fn single_class_is_undefined() {
        let s = DenseMatrix::from_rows(&[[0.1, 0.9], [0.4, 0.6]]).unwrap();
        let m = class_metrics(&s, &[1, 1]).unwrap();
        assert_eq!(m.auc, AucValue::Undefined);
        assert_eq!(serde_json::to_string(&m.auc).unwrap(), "\"undefined\"");
        let back: AucValue = serde_json::from_str("\"undefined\"").unwrap();
        assert_eq!(back, AucValue::Undefined);
        assert!(class_metrics(&s, &[2, 0]).is_err());
        assert!(class_metrics(&s, &[0]).is_err());
    }

    #[test]
    fn auc_brute_force() {
        let mut rng = Rng::new(5);
        for _ in 0..2000 {
            let n = 1 + rng.below(20);
            let scores: Vec<f64> = (0..n).map(|_| rng.below(5) as f64).collect();
            let pos: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
            assert_eq!(binary_auc(&scores, &pos), brute_auc(&scores, &pos));
        }
    }
}
