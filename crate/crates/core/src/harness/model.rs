use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Variant};
use crate::diffusion::{
    build_schedule, dae_denoise_traced, dae_loss, diffusion_loss, reverse_denoise_backward,
    reverse_denoise_traced, DenoiserParams, DenoiserTrace, DiffusionLoss, DiffusionSchedule, Noise,
    ReverseTrace,
};
use crate::encoder::{GraphEncoder, InitEmbeddings, InitMode, ViewTrace};
use crate::hetgraph::HeteroGraph;
use crate::numerics::{adam_step, gaussian_like, AdamState, DenseMatrix, Rng, TwoLayer};
use crate::tasks::Task;
use crate::{Error, Result};

/// How one side's denoised table `Ê*` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideMode {
    Diffusion,
    Dae,
    /// `Ê* = E_s*` rows, no denoiser.
    Raw,
}

/// All trainable state of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embeddings: InitEmbeddings,
    /// Node type of each diffusion side, parallel to `denoisers`.
    pub side_types: Vec<usize>,
    pub denoisers: Vec<DenoiserParams>,
    pub classifier: Option<TwoLayer>,
}

/// Node types that get their own diffusion pass: both endpoint types of
/// the target relation for link prediction, the labeled type otherwise.
pub fn side_types(g: &HeteroGraph, task: Task, label_type: Option<usize>) -> Vec<usize> {
    match (task, label_type) {
        (Task::Node, Some(t)) => vec![t],
        _ => {
            let rel = g.target_relation();
            let mut v = vec![rel.src_type, rel.dst_type];
            v.dedup();
            v
        }
    }
}

impl ModelParams {
    pub fn init(
        g: &HeteroGraph,
        cfg: &RunConfig,
        rng: &mut Rng,
        features: Option<&DenseMatrix>,
        labels: Option<(usize, usize)>,
    ) -> Result<Self> {
        let (n, d) = (g.total_nodes(), cfg.encoder.dim);
        let mut table = || -> Result<DenseMatrix> {
            match features {
                Some(f) => Ok(f.clone()),
                None => Ok(gaussian_like(rng, n, d)?.scale(cfg.init_std)),
            }
        };
        let embeddings = if cfg.encoder.per_relation_init {
            InitEmbeddings::per_relation(
                (0..g.relations().len())
                    .map(|_| table())
                    .collect::<Result<_>>()?,
            )?
        } else {
            InitEmbeddings::shared(table()?)
        };
        let side_types = side_types(g, cfg.task(), labels.map(|l| l.0));
        let denoisers = side_types
            .iter()
            .map(|_| DenoiserParams::new(d, cfg.diffusion.steps, rng))
            .collect();
        let classifier = match (cfg.task(), labels) {
            (Task::Node, Some((_, classes))) => Some(TwoLayer::xavier(d, d, classes, rng)),
            (Task::Node, None) => return Err(Error::Config("node task needs labels".into())),
            _ => None,
        };
        Ok(Self {
            embeddings,
            side_types,
            denoisers,
            classifier,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embeddings: self.embeddings.zeros_like(),
            side_types: self.side_types.clone(),
            denoisers: self
                .denoisers
                .iter()
                .map(DenoiserParams::zeros_like)
                .collect(),
            classifier: self.classifier.as_ref().map(TwoLayer::zeros_like),
        }
    }

    /// Embedding tables first, then each denoiser, then the classifier.
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out: Vec<&DenseMatrix> = self.embeddings.tables().iter().collect();
        out.extend(self.denoisers.iter().flat_map(|d| d.tensors()));
        if let Some(c) = &self.classifier {
            out.extend(c.params());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out: Vec<&mut DenseMatrix> = self.embeddings.tables_mut().iter_mut().collect();
        out.extend(self.denoisers.iter_mut().flat_map(|d| d.tensors_mut()));
        if let Some(c) = &mut self.classifier {
            out.extend(c.params_mut());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Rejects parameters whose shapes do not fit `g` and `cfg`.
    pub fn check_shapes(&self, g: &HeteroGraph, cfg: &RunConfig) -> Result<()> {
        let (n, d) = (g.total_nodes(), cfg.encoder.dim);
        let bad = |what: &str| {
            Err(Error::Data(format!(
                "checkpoint {what} does not match the graph or config"
            )))
        };
        if self
            .embeddings
            .tables()
            .iter()
            .any(|t| t.shape() != (n, d) || t.as_slice().len() != n * d)
        {
            return bad("embedding table");
        }
        if self.side_types.len() != self.denoisers.len()
            || self.side_types.iter().any(|&t| t >= g.node_types().len())
        {
            return bad("diffusion sides");
        }
        for den in &self.denoisers {
            let expected = [(2 * d, d), (1, d), (d, d), (1, d), (cfg.diffusion.steps, d)];
            if den
                .tensors()
                .iter()
                .zip(expected)
                .any(|(t, s)| t.shape() != s || t.as_slice().len() != s.0 * s.1)
            {
                return bad("denoiser");
            }
        }
        if let Some(c) = &self.classifier {
            if c.input_dim() != d {
                return bad("classifier");
            }
        }
        Ok(())
    }
}

/// One Adam state per tensor, in [`ModelParams::tensors`] order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Optimizer {
    states: Vec<AdamState>,
    /// Number of leading tensors that are fixed initial features.
    frozen: usize,
}

impl Optimizer {
    pub fn new(params: &ModelParams, lr: f64, freeze_embeddings: bool) -> Self {
        Self {
            states: params
                .tensors()
                .into_iter()
                .map(|t| AdamState::for_param(t, lr))
                .collect(),
            frozen: if freeze_embeddings {
                params.embeddings.tables().len()
            } else {
                0
            },
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        for (i, ((state, p), g)) in self
            .states
            .iter_mut()
            .zip(params.tensors_mut())
            .zip(grads.tensors())
            .enumerate()
        {
            if i >= self.frozen {
                adam_step(state, p, g)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum SideTrace {
    Reverse(ReverseTrace),
    Dae(DenoiserTrace),
    Raw,
}

/// Encoder output, per-side traces and the fused table `Ẽ = E^t + Ê*`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    views: ViewTrace,
    sides: Vec<SideTrace>,
    pub denoised: DenseMatrix,
    pub fused: DenseMatrix,
}

impl ForwardPass {
    pub fn target(&self) -> &DenseMatrix {
        &self.views.target.pooled
    }

    pub fn auxiliary(&self) -> Option<&DenseMatrix> {
        self.views.auxiliary.as_ref().map(|a| &a.pooled)
    }

    /// Pins the target view to `target`, so denoising losses see it as a
    /// constant (finite-difference checks of the stop-gradient).
    pub(crate) fn pin_target(&mut self, target: DenseMatrix) {
        self.views.target.pooled = target;
    }
}

/// Graph-dependent state shared by training and evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    encoder: GraphEncoder,
    schedule: DiffusionSchedule,
    offsets: Vec<(usize, usize)>,
    modes: Vec<SideMode>,
    variant: Variant,
    lambda: f64,
    inference_steps: usize,
    per_row_t: bool,
    stop_gradient: bool,
    learn_embeddings: bool,
}

impl Model {
    pub fn new(g: &HeteroGraph, cfg: &RunConfig, side_types: &[usize]) -> Result<Self> {
        let encoder = GraphEncoder::new(g, cfg.encoder.clone())?;
        let schedule = build_schedule(&cfg.diffusion)?;
        let target = g.target_relation();
        let modes = side_types
            .iter()
            .map(|&t| match cfg.variant {
                Variant::Full | Variant::NoAuxiliary => SideMode::Diffusion,
                Variant::NoDiffusion => SideMode::Raw,
                Variant::NoUserDiffusion if t == target.src_type => SideMode::Raw,
                Variant::NoItemDiffusion if t == target.dst_type => SideMode::Raw,
                Variant::NoUserDiffusion | Variant::NoItemDiffusion => SideMode::Diffusion,
                Variant::Dae => SideMode::Dae,
            })
            .collect();
        Ok(Self {
            encoder,
            schedule,
            offsets: side_types
                .iter()
                .map(|&t| (g.offset(t), g.node_count(t)))
                .collect(),
            modes,
            variant: cfg.variant,
            lambda: if cfg.variant == Variant::NoDiffusion {
                0.0
            } else {
                cfg.loss.lambda
            },
            inference_steps: cfg.diffusion.inference_steps,
            per_row_t: cfg.diffusion.per_row_t,
            stop_gradient: cfg.stop_gradient_denoised,
            learn_embeddings: cfg.encoder.init == InitMode::Learnable,
        })
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn modes(&self) -> &[SideMode] {
        &self.modes
    }

    /// `λ` after the variant has been applied.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn uses_auxiliary(&self) -> bool {
        self.variant != Variant::NoAuxiliary
    }

    pub fn learns_embeddings(&self) -> bool {
        self.learn_embeddings
    }

    /// `rng` supplies the starting noise of each reverse chain.
    pub fn forward(&self, params: &ModelParams, rng: &mut Rng) -> Result<ForwardPass> {
        let views = self
            .encoder
            .forward(&params.embeddings, self.uses_auxiliary())?;
        let target = &views.target.pooled;
        let mut denoised = DenseMatrix::zeros(target.rows(), target.cols());
        let mut sides = Vec::with_capacity(self.modes.len());
        if let Some(aux) = &views.auxiliary {
            for (k, (&(off, cnt), mode)) in self.offsets.iter().zip(&self.modes).enumerate() {
                let src = aux.pooled.row_block(off, cnt);
                let den = &params.denoisers[k];
                let (out, trace) = match mode {
                    SideMode::Diffusion => {
                        let (out, t) = reverse_denoise_traced(
                            den,
                            &self.schedule,
                            &src,
                            self.inference_steps,
                            Noise::Sample(rng),
                        )?;
                        (out, SideTrace::Reverse(t))
                    }
                    SideMode::Dae => {
                        let (out, t) = dae_denoise_traced(den, &self.schedule, &src)?;
                        (out, SideTrace::Dae(t))
                    }
                    SideMode::Raw => (src, SideTrace::Raw),
                };
                denoised.set_row_block(off, &out)?;
                sides.push(trace);
            }
        }
        let fused = target.add(&denoised)?;
        Ok(ForwardPass {
            views,
            sides,
            denoised,
            fused,
        })
    }

    /// Per-side denoising losses, `None` for raw sides or when `λ = 0`.
    pub fn denoising_losses(
        &self,
        params: &ModelParams,
        pass: &ForwardPass,
        rng: &mut Rng,
    ) -> Result<Vec<Option<DiffusionLoss>>> {
        let Some(aux) = pass.auxiliary() else {
            return Ok(vec![None; self.modes.len()]);
        };
        if self.lambda == 0.0 {
            return Ok(vec![None; self.modes.len()]);
        }
        self.offsets
            .iter()
            .zip(&self.modes)
            .enumerate()
            .map(|(k, (&(off, cnt), mode))| {
                let src = aux.row_block(off, cnt);
                let tgt = pass.target().row_block(off, cnt);
                let den = &params.denoisers[k];
                match mode {
                    SideMode::Diffusion => {
                        diffusion_loss(den, &self.schedule, &src, &tgt, rng, self.per_row_t)
                            .map(Some)
                    }
                    SideMode::Dae => {
                        let noise = gaussian_like(rng, cnt, src.cols())?;
                        dae_loss(den, &self.schedule, &src, &tgt, &noise).map(Some)
                    }
                    SideMode::Raw => Ok(None),
                }
            })
            .collect()
    }

    /// Accumulates gradients of `main + λ·Σ denoising` into `grads`, given
    /// `∂main/∂Ẽ`. The regularizer is left to the caller.
    pub fn backward(
        &self,
        params: &ModelParams,
        pass: &ForwardPass,
        grad_fused: &DenseMatrix,
        denoising: &[Option<DiffusionLoss>],
        grads: &mut ModelParams,
    ) -> Result<()> {
        let mut grad_aux = pass
            .auxiliary()
            .map(|a| DenseMatrix::zeros(a.rows(), a.cols()));
        if let Some(grad_aux) = grad_aux.as_mut() {
            for (k, (&(off, cnt), trace)) in self.offsets.iter().zip(&pass.sides).enumerate() {
                let den = &params.denoisers[k];
                let mut g_src = if self.stop_gradient {
                    DenseMatrix::zeros(cnt, grad_fused.cols())
                } else {
                    let g = grad_fused.row_block(off, cnt);
                    match trace {
                        SideTrace::Reverse(t) => reverse_denoise_backward(
                            den,
                            &self.schedule,
                            t,
                            &g,
                            &mut grads.denoisers[k],
                        )?,
                        SideTrace::Dae(t) => den.backward(t, &g, &mut grads.denoisers[k])?,
                        SideTrace::Raw => g,
                    }
                };
                if let Some(Some(loss)) = denoising.get(k) {
                    g_src.axpy(self.lambda, &loss.grad_source)?;
                    for (acc, g) in grads.denoisers[k]
                        .tensors_mut()
                        .into_iter()
                        .zip(loss.grad_params.tensors())
                    {
                        acc.axpy(self.lambda, g)?;
                    }
                }
                grad_aux.add_row_block(off, &g_src)?;
            }
        }
        if self.learn_embeddings {
            self.encoder.backward(
                &params.embeddings,
                &pass.views,
                grad_fused,
                grad_aux.as_ref(),
                &mut grads.embeddings,
            )?;
        }
        Ok(())
    }
}
