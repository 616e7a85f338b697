use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, info};

use super::config::{load_dataset, Dataset, RunConfig};
use super::model::{Model, ModelParams, Optimizer};
use super::report::{BucketReport, Checkpoint, EpochLog, EvalPoint, EvalReport, Timing};
use super::split::{leave_one_out, split_labels, LeaveOneOut};
use crate::hetgraph::{sparsity_buckets, HeteroGraph, LabelSet};
use crate::numerics::{dot, DenseMatrix, Rng};
use crate::tasks::{
    bpr_loss, ce_loss, class_metrics, joint_loss, rank_of, softmax_rows, AucValue, JointLoss,
    JointLossConfig, RankMetrics, Task, TripletBatch,
};
use crate::{Error, Result};

// Independent streams derived from the run seed, one per purpose, so that
// switching a component off never shifts the randomness of the others.
const STREAM_INIT: u64 = 1;
const STREAM_NEGATIVES: u64 = 2;
const STREAM_DIFFUSION: u64 = 3;
const STREAM_REVERSE: u64 = 4;
pub(crate) const STREAM_EVAL: u64 = 5;
const STREAM_LABELS: u64 = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum TaskData {
    Link(LeaveOneOut),
    Node { train: LabelSet, test: LabelSet },
}

/// Training graph and task split derived deterministically from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub graph: HeteroGraph,
    pub task: TaskData,
    pub features: Option<DenseMatrix>,
    pub dataset_fingerprint: String,
}

impl Prepared {
    fn label_info(&self) -> Option<(usize, usize)> {
        match &self.task {
            TaskData::Node { train, .. } => Some((train.node_type(), train.class_count())),
            TaskData::Link(_) => None,
        }
    }
}

pub fn prepare(cfg: &RunConfig, ds: &Dataset) -> Result<Prepared> {
    let task = match cfg.task() {
        Task::Link => TaskData::Link(leave_one_out(&ds.graph)?),
        Task::Node => {
            let labels = ds
                .labels
                .as_ref()
                .ok_or_else(|| Error::Config("node task needs labels".into()))?;
            let (train, test) = split_labels(
                labels,
                cfg.train_per_class,
                &mut Rng::new(cfg.seed).derive(STREAM_LABELS),
            );
            if train.is_empty() || test.is_empty() {
                return Err(Error::Data(
                    "label split left an empty training or test set".into(),
                ));
            }
            TaskData::Node { train, test }
        }
    };
    let graph = match &task {
        TaskData::Link(loo) => loo.train.clone(),
        TaskData::Node { .. } => ds.graph.clone(),
    };
    Ok(Prepared {
        graph,
        task,
        features: ds.features.clone(),
        dataset_fingerprint: ds.fingerprint(),
    })
}

/// Parameters after training plus the per-epoch record.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub losses: Vec<EpochLog>,
    pub evals: Vec<EvalPoint>,
    pub epoch_seconds: Vec<f64>,
}

/// One negative per training edge, uniform over items the user has not
/// interacted with, in shuffled order. Rows are global indices.
pub fn sample_triplets(
    g: &HeteroGraph,
    positives: &[Vec<usize>],
    rng: &mut Rng,
) -> Vec<(usize, usize, usize)> {
    let rel = g.target_relation();
    let n_items = g.node_count(rel.dst_type);
    let (uo, io) = (g.offset(rel.src_type), g.offset(rel.dst_type));
    let mut out = Vec::with_capacity(rel.len());
    for &(u, i) in rel.edges() {
        if positives[u].len() >= n_items {
            continue;
        }
        let j = loop {
            let j = rng.below(n_items);
            if positives[u].binary_search(&j).is_err() {
                break j;
            }
        };
        out.push((uo + u, io + i, io + j));
    }
    rand::seq::SliceRandom::shuffle(out.as_mut_slice(), rng);
    out
}

enum Batch {
    Link(TripletBatch),
    Node(LabelSet),
}

fn epoch_batches(cfg: &RunConfig, prep: &Prepared, rng: &mut Rng) -> Vec<Batch> {
    match &prep.task {
        TaskData::Link(loo) => sample_triplets(&prep.graph, &loo.positives, rng)
            .chunks(cfg.batch_size)
            .map(|c| Batch::Link(TripletBatch::new(c.to_vec())))
            .collect(),
        TaskData::Node { train, .. } => {
            let mut order: Vec<usize> = (0..train.len()).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
            order
                .chunks(cfg.batch_size)
                .map(|c| Batch::Node(train.subset(c)))
                .collect()
        }
    }
}

struct Step<'a> {
    cfg: &'a RunConfig,
    prep: &'a Prepared,
    model: &'a Model,
    loss_cfg: JointLossConfig,
}

impl Step<'_> {
    fn run(
        &self,
        params: &mut ModelParams,
        opt: &mut Optimizer,
        batch: &Batch,
        epoch: usize,
        diffusion_rng: &mut Rng,
        reverse_rng: &mut Rng,
    ) -> Result<JointLoss> {
        let pass = self.model.forward(params, reverse_rng)?;
        let mut grads = params.zeros_like();
        let (main, grad_fused) = match batch {
            Batch::Link(triplets) => {
                let out = bpr_loss(&pass.fused, triplets)?;
                (out.loss, out.grad)
            }
            Batch::Node(labels) => {
                let t = labels.node_type();
                let (off, cnt) = (self.prep.graph.offset(t), self.prep.graph.node_count(t));
                let classifier = params
                    .classifier
                    .as_ref()
                    .expect("node task has a classifier");
                let out = ce_loss(&pass.fused.row_block(off, cnt), classifier, labels)?;
                let mut g = DenseMatrix::zeros(pass.fused.rows(), pass.fused.cols());
                g.set_row_block(off, &out.grad_embeddings)?;
                grads.classifier = Some(out.grad_params);
                (out.loss, g)
            }
        };
        let denoising = self.model.denoising_losses(params, &pass, diffusion_rng)?;
        let deno: f64 = denoising.iter().flatten().map(|l| l.loss).sum();
        let sq = if self.model.learns_embeddings() {
            params.embeddings.frobenius_sq()
        } else {
            0.0
        };
        let joint = joint_loss(main, deno, sq, &self.loss_cfg);
        if !joint.is_finite() {
            return Err(Error::Divergence {
                epoch,
                main: joint.main,
                denoise: joint.denoise,
                l2: joint.l2,
            });
        }
        self.model
            .backward(params, &pass, &grad_fused, &denoising, &mut grads)?;
        if self.model.learns_embeddings() && self.cfg.loss.l2 > 0.0 {
            for (g, p) in grads
                .embeddings
                .tables_mut()
                .iter_mut()
                .zip(params.embeddings.tables())
            {
                g.axpy(2.0 * self.cfg.loss.l2, p)?;
            }
        }
        opt.step(params, &grads)?;
        Ok(joint)
    }
}

fn primary_metric(cfg: &RunConfig) -> String {
    match cfg.task() {
        Task::Link => format!("recall@{}", cfg.top_k),
        Task::Node => "micro_f1".into(),
    }
}

/// Runs `cfg.epochs` epochs of joint optimization.
pub fn fit(cfg: &RunConfig, prep: &Prepared) -> Result<TrainOutcome> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let mut params = ModelParams::init(
        &prep.graph,
        cfg,
        &mut root.derive(STREAM_INIT),
        prep.features.as_ref(),
        prep.label_info(),
    )?;
    let model = Model::new(&prep.graph, cfg, &params.side_types)?;
    let mut opt = Optimizer::new(&params, cfg.lr, !model.learns_embeddings());
    let step = Step {
        cfg,
        prep,
        model: &model,
        loss_cfg: JointLossConfig {
            lambda: model.lambda(),
            ..cfg.loss.clone()
        },
    };
    let (mut neg_rng, mut diff_rng, mut rev_rng) = (
        root.derive(STREAM_NEGATIVES),
        root.derive(STREAM_DIFFUSION),
        root.derive(STREAM_REVERSE),
    );

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut evals = Vec::new();
    let mut epoch_seconds = Vec::with_capacity(cfg.epochs);
    let (mut best, mut stale) = (f64::NEG_INFINITY, 0usize);
    let metric = primary_metric(cfg);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let batches = epoch_batches(cfg, prep, &mut neg_rng);
        let mut batch_losses = Vec::with_capacity(batches.len());
        for batch in &batches {
            batch_losses.push(step.run(
                &mut params,
                &mut opt,
                batch,
                epoch,
                &mut diff_rng,
                &mut rev_rng,
            )?);
        }
        let log = EpochLog::from_mean(epoch, &batch_losses);
        epoch_seconds.push(start.elapsed().as_secs_f64());
        info!(
            "epoch {epoch}: total {:.6} main {:.6} denoise {:.6} l2 {:.6}",
            log.total, log.main, log.denoise, log.l2
        );
        losses.push(log);

        if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            let ev = evaluate_with(&model, cfg, prep, &params)?;
            debug!("epoch {epoch}: {metric} {:?}", ev.metrics.get(&metric));
            let value = ev
                .metrics
                .get(&metric)
                .copied()
                .unwrap_or(f64::NEG_INFINITY);
            evals.push(EvalPoint {
                epoch,
                metrics: ev.metrics,
            });
            if value > best {
                (best, stale) = (value, 0);
            } else {
                stale += 1;
            }
            if cfg.patience.is_some_and(|p| stale >= p) {
                info!("stopping after epoch {epoch}: no {metric} gain in {stale} evaluations");
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params,
        losses,
        evals,
        epoch_seconds,
    })
}

/// Metrics of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: BTreeMap<String, f64>,
    pub undefined: Vec<String>,
    pub buckets: Vec<BucketReport>,
    pub test_size: usize,
    pub excluded_users: usize,
    /// Rank of the held-out item per test user (link task).
    pub ranks: Vec<usize>,
}

fn evaluate_with(
    model: &Model,
    cfg: &RunConfig,
    prep: &Prepared,
    params: &ModelParams,
) -> Result<Evaluation> {
    let pass = model.forward(params, &mut Rng::new(cfg.seed).derive(STREAM_EVAL))?;
    let e = &pass.fused;
    let g = &prep.graph;
    match &prep.task {
        TaskData::Link(loo) => {
            let rel = g.target_relation();
            let (uo, io, n_items) = (
                g.offset(rel.src_type),
                g.offset(rel.dst_type),
                g.node_count(rel.dst_type),
            );
            let ranks = loo
                .test
                .iter()
                .map(|&(u, truth)| {
                    let scores: Vec<f64> = (0..n_items)
                        .map(|j| dot(e.row(uo + u), e.row(io + j)))
                        .collect();
                    rank_of(&scores, &loo.positives[u], truth)
                })
                .collect::<Result<Vec<_>>>()?;
            let k = cfg.top_k;
            let overall = RankMetrics::from_ranks(&ranks, k);
            let spec = cfg.bucket_spec()?;
            let users: Vec<usize> = loo.test.iter().map(|&(u, _)| u).collect();
            let ids = sparsity_buckets(g, &users, &spec);
            let buckets = spec
                .labels()
                .into_iter()
                .enumerate()
                .map(|(b, label)| {
                    let r: Vec<usize> = ranks
                        .iter()
                        .zip(&ids)
                        .filter(|(_, &id)| id == b)
                        .map(|(&r, _)| r)
                        .collect();
                    let m = RankMetrics::from_ranks(&r, k);
                    BucketReport {
                        label,
                        users: m.users,
                        recall: m.recall,
                        ndcg: m.ndcg,
                    }
                })
                .collect();
            let metrics = BTreeMap::from([
                (format!("recall@{k}"), overall.recall),
                (format!("ndcg@{k}"), overall.ndcg),
            ]);
            Ok(Evaluation {
                metrics,
                undefined: Vec::new(),
                buckets,
                test_size: ranks.len(),
                excluded_users: loo.excluded_users,
                ranks,
            })
        }
        TaskData::Node { test, .. } => {
            let t = test.node_type();
            let classifier = params
                .classifier
                .as_ref()
                .ok_or_else(|| Error::Data("parameters lack a classifier".into()))?;
            let rows = DenseMatrix::from_fn(test.len(), e.cols(), |r, c| {
                e[(g.offset(t) + test.entries()[r].0, c)]
            });
            let (logits, _) = classifier.forward(&rows)?;
            let truth: Vec<usize> = test.entries().iter().map(|&(_, c)| c).collect();
            let m = class_metrics(&softmax_rows(&logits), &truth)?;
            let mut metrics = BTreeMap::from([
                ("micro_f1".to_string(), m.micro_f1),
                ("macro_f1".to_string(), m.macro_f1),
            ]);
            let mut undefined = Vec::new();
            match m.auc {
                AucValue::Value(v) => {
                    metrics.insert("auc".into(), v);
                }
                AucValue::Undefined => undefined.push("auc".into()),
            }
            Ok(Evaluation {
                metrics,
                undefined,
                buckets: Vec::new(),
                test_size: test.len(),
                excluded_users: 0,
                ranks: Vec::new(),
            })
        }
    }
}

/// Evaluates `params` on the prepared split.
pub fn evaluate(cfg: &RunConfig, prep: &Prepared, params: &ModelParams) -> Result<Evaluation> {
    params.check_shapes(&prep.graph, cfg)?;
    let model = Model::new(&prep.graph, cfg, &params.side_types)?;
    evaluate_with(&model, cfg, prep, params)
}

fn assemble(
    cfg: &RunConfig,
    prep: &Prepared,
    outcome: &TrainOutcome,
    ev: Evaluation,
    total_seconds: f64,
) -> EvalReport {
    EvalReport {
        variant: cfg.variant,
        task: cfg.task(),
        metrics: ev.metrics,
        undefined_metrics: ev.undefined,
        buckets: ev.buckets,
        test_size: ev.test_size,
        excluded_users: ev.excluded_users,
        seed: cfg.seed,
        config_fingerprint: cfg.fingerprint(),
        dataset_fingerprint: prep.dataset_fingerprint.clone(),
        loss_trace: outcome.losses.clone(),
        eval_trace: outcome.evals.clone(),
        config: cfg.clone(),
        timing: Timing {
            epoch_seconds: outcome.epoch_seconds.clone(),
            total_seconds,
        },
    }
}

/// Trains and evaluates on an already loaded dataset.
pub fn run(cfg: &RunConfig, ds: &Dataset) -> Result<(ModelParams, EvalReport)> {
    let start = Instant::now();
    cfg.validate()?;
    let prep = prepare(cfg, ds)?;
    let outcome = fit(cfg, &prep)?;
    let ev = evaluate(cfg, &prep, &outcome.params)?;
    let report = assemble(cfg, &prep, &outcome, ev, start.elapsed().as_secs_f64());
    Ok((outcome.params, report))
}

/// Loads the configured dataset, trains and evaluates.
pub fn train(cfg: &RunConfig) -> Result<(ModelParams, EvalReport)> {
    cfg.validate()?;
    run(cfg, &load_dataset(cfg)?)
}

/// Leave-one-out report for trained link-prediction parameters on `g`.
pub fn evaluate_leave_one_out(
    cfg: &RunConfig,
    params: &ModelParams,
    g: &HeteroGraph,
) -> Result<EvalReport> {
    let cfg = RunConfig {
        loss: JointLossConfig {
            task: Task::Link,
            ..cfg.loss.clone()
        },
        ..cfg.clone()
    };
    let ds = Dataset {
        graph: g.clone(),
        labels: None,
        features: None,
    };
    let prep = prepare(&cfg, &ds)?;
    let ev = evaluate(&cfg, &prep, params)?;
    let outcome = TrainOutcome {
        params: params.clone(),
        losses: Vec::new(),
        evals: Vec::new(),
        epoch_seconds: Vec::new(),
    };
    Ok(assemble(&cfg, &prep, &outcome, ev, 0.0))
}

/// Re-evaluates a checkpoint on `ds`, which must be the data it was trained on.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, ds: &Dataset) -> Result<EvalReport> {
    if ds.fingerprint() != ckpt.dataset_fingerprint {
        return Err(Error::Data(
            "dataset differs from the one the checkpoint was trained on".into(),
        ));
    }
    let prep = prepare(&ckpt.config, ds)?;
    let ev = evaluate(&ckpt.config, &prep, &ckpt.params)?;
    let outcome = TrainOutcome {
        params: ckpt.params.clone(),
        losses: Vec::new(),
        evals: Vec::new(),
        epoch_seconds: Vec::new(),
    };
    Ok(assemble(&ckpt.config, &prep, &outcome, ev, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DataSource, Variant};
    use crate::hetgraph::SyntheticSpec;

    fn small(variant: Variant, epochs: usize) -> RunConfig {
        let mut cfg = RunConfig {
            variant,
            epochs,
            lr: 0.01,
            data: DataSource::Synthetic(SyntheticSpec {
                n_users: 30,
                n_items: 20,
                density: 0.2,
                ..SyntheticSpec::default()
            }),
            ..RunConfig::default()
        };
        cfg.encoder.dim = 8;
        cfg.diffusion = crate::diffusion::DiffusionConfig::from_noise_scale(1e-3, 20, 3);
        cfg
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let cfg = small(Variant::Full, 0);
        let ds = load_dataset(&cfg).unwrap();
        let prep = prepare(&cfg, &ds).unwrap();
        let out = fit(&cfg, &prep).unwrap();
        let init = ModelParams::init(
            &prep.graph,
            &cfg,
            &mut Rng::new(cfg.seed).derive(STREAM_INIT),
            None,
            None,
        )
        .unwrap();
        assert_eq!(out.params, init);
        assert!(out.losses.is_empty());
    }

    #[test]
    fn triplets_respect_positives() {
        let cfg = small(Variant::Full, 1);
        let ds = load_dataset(&cfg).unwrap();
        let prep = prepare(&cfg, &ds).unwrap();
        let TaskData::Link(loo) = &prep.task else {
            panic!()
        };
        let g = &prep.graph;
        let triplets = sample_triplets(g, &loo.positives, &mut Rng::new(3));
        assert_eq!(triplets.len(), g.target_relation().len());
        let io = g.offset(1);
        for &(u, p, n) in &triplets {
            assert!(loo.positives[u].binary_search(&(p - io)).is_ok());
            assert!(loo.positives[u].binary_search(&(n - io)).is_err());
        }
    }

    #[test]
    fn no_diffusion_equals_zero_lambda_without_reverse() {
        let d = small(Variant::NoDiffusion, 3);
        let mut bypass = small(Variant::Full, 3);
        bypass.loss.lambda = 0.0;
        bypass.diffusion.inference_steps = 0;
        let ds = load_dataset(&d).unwrap();
        let (pd, rd) = run(&d, &ds).unwrap();
        let (pb, rb) = run(&bypass, &ds).unwrap();
        assert_eq!(pd.embeddings, pb.embeddings);
        assert_eq!(rd.metrics, rb.metrics);
        assert_eq!(rd.loss_trace, rb.loss_trace);
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = small(Variant::Full, 2);
        cfg.init_std = f64::MAX;
        let err = train(&cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn node_task_reports_class_metrics() {
        let mut cfg = small(Variant::Full, 3);
        cfg.loss.task = Task::Node;
        cfg.train_per_class = 5;
        let (params, report) = train(&cfg).unwrap();
        assert!(params.classifier.is_some());
        assert_eq!(params.side_types, vec![0]);
        assert!(report.metrics.contains_key("micro_f1"));
        assert!(report.metrics.contains_key("auc"));
        assert_eq!(report.test_size, 30 - 10);
    }

    #[test]
    fn early_stopping_cuts_training() {
        let mut cfg = small(Variant::Full, 40);
        cfg.eval_every = 1;
        cfg.patience = Some(1);
        cfg.lr = 1e-9;
        let (_, report) = train(&cfg).unwrap();
        assert!(report.loss_trace.len() < 40);
        assert_eq!(report.eval_trace.len(), report.loss_trace.len());
    }
}
