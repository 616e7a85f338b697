//! Task heads on the fused embedding table, the joint objective, and
//! ranking and classification metrics.

mod heads;
mod metrics;

pub use heads::{
    bpr_loss, ce_loss, fuse, joint_loss, softmax_rows, CeLoss, JointLoss, JointLossConfig,
    LossGrad, Task, TripletBatch,
};
pub use metrics::{
    argmax, binary_auc, class_metrics, ndcg_at, rank_metrics, rank_of, recall_at, AucValue,
    ClassMetrics, RankMetrics, RankQuery,
};
