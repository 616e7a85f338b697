//! Relation-wise graph convolution.
//!
//! For each relation `r` with normalised adjacency `Â_r`:
//!
//! ```text
//! E_{r,l} = rownorm(δ(Â_r · E_{r,l-1}))     l = 1..L
//! E_r     = Σ_{l=0..L} E_{r,l}
//! E       = pool({E_r})
//! ```
//!
//! `rownorm` scales each row to unit l2 norm and leaves zero rows at zero.
//! Forward passes can keep a [`PropagationTrace`] so the matching backward
//! pass can map a gradient on `E_r` back to `E_{r,0}`.

use serde::{Deserialize, Serialize};

use crate::hetgraph::{
    normalize_with, split_target_auxiliary, HeteroGraph, RelationAdjacency, TargetSplit,
};
use crate::numerics::{dot, leaky_relu, leaky_relu_grad, spmm, DenseMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => leaky_relu(x, slope),
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => leaky_relu_grad(x, slope),
            Activation::Identity => 1.0,
        }
    }
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu { slope: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Randomly initialised and trained.
    #[default]
    Learnable,
    /// Fixed node features supplied by the caller.
    Provided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub dim: usize,
    pub activation: Activation,
    pub pooling: Pooling,
    pub init: InitMode,
    /// One initial table per relation instead of a single shared table.
    pub per_relation_init: bool,
    pub self_loops: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            dim: 32,
            activation: Activation::default(),
            pooling: Pooling::Mean,
            init: InitMode::Learnable,
            per_relation_init: false,
            self_loops: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config(
                "embedding dimension must be at least 1".into(),
            ));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() {
                return Err(Error::Config("activation slope must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Intermediate values of one relation's propagation.
#[derive(Debug, Clone)]
pub struct PropagationTrace {
    /// `Â · E_{l-1}` for l = 1..L.
    pre_activation: Vec<DenseMatrix>,
    /// `E_l` for l = 1..L.
    layers: Vec<DenseMatrix>,
    /// Row norms of `δ(pre_activation)` per layer.
    norms: Vec<Vec<f64>>,
}

impl PropagationTrace {
    /// `E_{r,l}` for l = 1..L.
    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }
}

fn check_rows(adj: &RelationAdjacency, e0: &DenseMatrix) -> Result<()> {
    if e0.rows() != adj.dim() {
        return Err(Error::shape(
            "propagate_relation",
            format!("{} embedding rows", adj.dim()),
            e0.rows(),
        ));
    }
    Ok(())
}

/// Multi-order propagation over one relation, returning `E_r`.
pub fn propagate_relation(
    adj: &RelationAdjacency,
    e0: &DenseMatrix,
    cfg: &EncoderConfig,
) -> Result<DenseMatrix> {
    Ok(propagate_relation_traced(adj, e0, cfg)?.0)
}

pub fn propagate_relation_traced(
    adj: &RelationAdjacency,
    e0: &DenseMatrix,
    cfg: &EncoderConfig,
) -> Result<(DenseMatrix, PropagationTrace)> {
    check_rows(adj, e0)?;
    let mut trace = PropagationTrace {
        pre_activation: Vec::with_capacity(cfg.layers),
        layers: Vec::with_capacity(cfg.layers),
        norms: Vec::with_capacity(cfg.layers),
    };
    let mut sum = e0.clone();
    let mut prev = e0.clone();
    for _ in 0..cfg.layers {
        let z = spmm(&adj.normalized, &prev)?;
        let mut e = z.map(|v| cfg.activation.apply(v));
        let mut norms = Vec::with_capacity(e.rows());
        for r in 0..e.rows() {
            let row = e.row_mut(r);
            let n = dot(row, row).sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
            norms.push(n);
        }
        sum.add_assign(&e)?;
        trace.pre_activation.push(z);
        trace.norms.push(norms);
        trace.layers.push(e.clone());
        prev = e;
    }
    Ok((sum, trace))
}

/// Gradient with respect to `E_{r,0}` given the gradient on `E_r`.
pub fn propagate_relation_backward(
    adj: &RelationAdjacency,
    trace: &PropagationTrace,
    grad_out: &DenseMatrix,
    cfg: &EncoderConfig,
) -> Result<DenseMatrix> {
    let mut running = grad_out.clone();
    for l in (0..trace.layers.len()).rev() {
        let y = &trace.layers[l];
        let z = &trace.pre_activation[l];
        let mut gz = DenseMatrix::zeros(y.rows(), y.cols());
        for r in 0..y.rows() {
            let n = trace.norms[l][r];
            if n == 0.0 {
                continue;
            }
            let (yr, gr) = (y.row(r), running.row(r));
            let proj = dot(yr, gr);
            let zr = z.row(r);
            for (c, out) in gz.row_mut(r).iter_mut().enumerate() {
                *out = (gr[c] - yr[c] * proj) / n * cfg.activation.derivative(zr[c]);
            }
        }
        // Â is symmetric, so Âᵀ·gz = Â·gz.
        let mut prev = spmm(&adj.normalized, &gz)?;
        prev.add_assign(grad_out)?;
        running = prev;
    }
    Ok(running)
}

/// Per-relation and pooled embeddings of one view.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub per_relation: Vec<DenseMatrix>,
    pub pooled: DenseMatrix,
}

fn pool_weight(cfg: &EncoderConfig, branches: usize) -> f64 {
    match cfg.pooling {
        Pooling::Mean => 1.0 / branches as f64,
        Pooling::Sum => 1.0,
    }
}

/// Encodes a set of relations, each with its own initial table (pass the
/// same table repeatedly for shared initialisation), and pools the results.
pub fn encode(
    branches: &[(&RelationAdjacency, &DenseMatrix)],
    cfg: &EncoderConfig,
) -> Result<EncoderOutput> {
    Ok(encode_traced(branches, cfg)?.0)
}

pub fn encode_traced(
    branches: &[(&RelationAdjacency, &DenseMatrix)],
    cfg: &EncoderConfig,
) -> Result<(EncoderOutput, Vec<PropagationTrace>)> {
    let Some(&(first_adj, first_e0)) = branches.first() else {
        return Err(Error::invalid("encode needs at least one relation"));
    };
    let w = pool_weight(cfg, branches.len());
    let mut pooled = DenseMatrix::zeros(first_adj.dim(), first_e0.cols());
    let mut per_relation = Vec::with_capacity(branches.len());
    let mut traces = Vec::with_capacity(branches.len());
    for &(adj, e0) in branches {
        let (er, trace) = propagate_relation_traced(adj, e0, cfg)?;
        pooled.axpy(w, &er)?;
        per_relation.push(er);
        traces.push(trace);
    }
    Ok((
        EncoderOutput {
            per_relation,
            pooled,
        },
        traces,
    ))
}

/// Gradients with respect to each branch's initial table.
pub fn encode_backward(
    branches: &[(&RelationAdjacency, &DenseMatrix)],
    traces: &[PropagationTrace],
    grad_pooled: &DenseMatrix,
    cfg: &EncoderConfig,
) -> Result<Vec<DenseMatrix>> {
    let g = grad_pooled.scale(pool_weight(cfg, branches.len()));
    branches
        .iter()
        .zip(traces)
        .map(|(&(adj, _), trace)| propagate_relation_backward(adj, trace, &g, cfg))
        .collect()
}

/// Initial embedding tables: one shared table, or one per relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitEmbeddings {
    tables: Vec<DenseMatrix>,
}

impl InitEmbeddings {
    pub fn shared(table: DenseMatrix) -> Self {
        Self {
            tables: vec![table],
        }
    }

    pub fn per_relation(tables: Vec<DenseMatrix>) -> Result<Self> {
        if tables.is_empty() || tables.iter().any(|t| t.shape() != tables[0].shape()) {
            return Err(Error::invalid(
                "per-relation tables must be nonempty and equally shaped",
            ));
        }
        Ok(Self { tables })
    }

    pub fn is_shared(&self) -> bool {
        self.tables.len() == 1
    }

    /// Initial table used by relation `r` (graph order).
    pub fn for_relation(&self, r: usize) -> &DenseMatrix {
        if self.is_shared() {
            &self.tables[0]
        } else {
            &self.tables[r]
        }
    }

    pub fn table_index(&self, r: usize) -> usize {
        if self.is_shared() {
            0
        } else {
            r
        }
    }

    pub fn tables(&self) -> &[DenseMatrix] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.tables
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tables: self
                .tables
                .iter()
                .map(|t| DenseMatrix::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.tables.iter().map(DenseMatrix::frobenius_sq).sum()
    }
}

/// Target-view and auxiliary-view embeddings with what backward needs.
#[derive(Debug, Clone)]
pub struct ViewTrace {
    pub target: EncoderOutput,
    pub auxiliary: Option<EncoderOutput>,
    target_traces: Vec<PropagationTrace>,
    auxiliary_traces: Vec<PropagationTrace>,
}

/// Normalised adjacencies for every relation plus the target/auxiliary split.
#[derive(Debug, Clone)]
pub struct GraphEncoder {
    adjacencies: Vec<RelationAdjacency>,
    split: TargetSplit,
    cfg: EncoderConfig,
}

impl GraphEncoder {
    pub fn new(g: &HeteroGraph, cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let split = split_target_auxiliary(g)?;
        let adjacencies = g
            .relations()
            .iter()
            .map(|r| normalize_with(g, &r.name, cfg.self_loops))
            .collect::<Result<_>>()?;
        Ok(Self {
            adjacencies,
            split,
            cfg,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn split(&self) -> &TargetSplit {
        &self.split
    }

    pub fn adjacencies(&self) -> &[RelationAdjacency] {
        &self.adjacencies
    }

    fn branches<'a>(
        &'a self,
        rels: &[usize],
        init: &'a InitEmbeddings,
    ) -> Vec<(&'a RelationAdjacency, &'a DenseMatrix)> {
        rels.iter()
            .map(|&r| (&self.adjacencies[r], init.for_relation(r)))
            .collect()
    }

    /// Encodes the target view and, when asked, the auxiliary view.
    pub fn forward(&self, init: &InitEmbeddings, with_auxiliary: bool) -> Result<ViewTrace> {
        let (target, target_traces) =
            encode_traced(&self.branches(&self.split.target, init), &self.cfg)?;
        let (auxiliary, auxiliary_traces) = if with_auxiliary {
            let (out, traces) =
                encode_traced(&self.branches(&self.split.auxiliary, init), &self.cfg)?;
            (Some(out), traces)
        } else {
            (None, Vec::new())
        };
        Ok(ViewTrace {
            target,
            auxiliary,
            target_traces,
            auxiliary_traces,
        })
    }

    /// Accumulates gradients on the initial tables into `grads`.
    pub fn backward(
        &self,
        init: &InitEmbeddings,
        trace: &ViewTrace,
        grad_target: &DenseMatrix,
        grad_auxiliary: Option<&DenseMatrix>,
        grads: &mut InitEmbeddings,
    ) -> Result<()> {
        let mut views = vec![(&self.split.target, &trace.target_traces, grad_target)];
        if let Some(ga) = grad_auxiliary {
            if trace.auxiliary.is_none() {
                return Err(Error::invalid(
                    "auxiliary gradient given but auxiliary view was not encoded",
                ));
            }
            views.push((&self.split.auxiliary, &trace.auxiliary_traces, ga));
        }
        for (rels, traces, g) in views {
            let branch_grads = encode_backward(&self.branches(rels, init), traces, g, &self.cfg)?;
            for (&r, bg) in rels.iter().zip(branch_grads) {
                let idx = init.table_index(r);
                grads.tables[idx].add_assign(&bg)?;
            }
        }
        Ok(())
    }
}

/// `(E^t, E_s*)`: the target view and the pooled auxiliary view, both
/// encoded from the same initial embeddings.
pub fn encode_views(
    g: &HeteroGraph,
    init: &InitEmbeddings,
    cfg: &EncoderConfig,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let enc = GraphEncoder::new(g, cfg.clone())?;
    let trace = enc.forward(init, true)?;
    Ok((
        trace.target.pooled,
        trace.auxiliary.expect("auxiliary requested").pooled,
    ))
}
