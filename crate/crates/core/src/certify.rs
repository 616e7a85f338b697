//! Finite-difference certification of every hand-derived gradient.
//!
//! Each probe builds a small random instance from the given rng, computes the
//! analytic gradient of a scalar objective and compares it with central
//! differences. Objectives that contain leaky ReLUs are smooth almost surely
//! at random points.

use crate::diffusion::{
    build_schedule, dae_loss, diffusion_loss_at, reverse_denoise_backward, reverse_denoise_traced,
    DenoiserParams, DiffusionConfig, DiffusionSchedule, Noise,
};
use crate::encoder::{EncoderConfig, GraphEncoder, InitEmbeddings};
use crate::harness::{side_types, DataSource, Model, ModelParams, RunConfig};
use crate::hetgraph::{generate_synthetic, LabelSet, SyntheticSpec};
use crate::numerics::{dot, gaussian_like, grad_check, DenseMatrix, Rng, TwoLayer};
use crate::tasks::{bpr_loss, ce_loss, Task, TripletBatch};
use crate::Result;

/// Acceptance bound on the per-coordinate error reported by [`grad_check`].
pub const TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-6;

pub struct Probe {
    pub name: &'static str,
    check: fn(&mut Rng) -> Result<f64>,
}

impl Probe {
    /// Worst error at one random point.
    pub fn check_once(&self, rng: &mut Rng) -> Result<f64> {
        (self.check)(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub name: &'static str,
    pub points: usize,
    pub worst: f64,
}

impl ProbeResult {
    pub fn passed(&self) -> bool {
        self.worst <= TOLERANCE
    }
}

pub fn probes() -> Vec<Probe> {
    vec![
        Probe {
            name: "encoder/e0",
            check: encoder_e0,
        },
        Probe {
            name: "encoder/per_relation",
            check: encoder_per_relation,
        },
        Probe {
            name: "denoiser",
            check: denoiser,
        },
        Probe {
            name: "diffusion_loss",
            check: diffusion_objective,
        },
        Probe {
            name: "dae_loss",
            check: dae_objective,
        },
        Probe {
            name: "reverse_chain",
            check: reverse_chain,
        },
        Probe {
            name: "bpr",
            check: bpr,
        },
        Probe {
            name: "cross_entropy",
            check: cross_entropy,
        },
        Probe {
            name: "joint/link",
            check: joint_link,
        },
        Probe {
            name: "joint/node",
            check: joint_node,
        },
    ]
}

/// Runs every probe at `points` random points drawn from `seed`.
pub fn certify(seed: u64, points: usize) -> Result<Vec<ProbeResult>> {
    let root = Rng::new(seed);
    probes()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut rng = root.derive(k as u64);
            let mut worst = 0.0f64;
            for _ in 0..points {
                worst = worst.max(p.check_once(&mut rng)?);
            }
            Ok(ProbeResult {
                name: p.name,
                points,
                worst,
            })
        })
        .collect()
}

/// Checks the gradient of `f` at `x` for one flattened tensor.
fn check_tensor(
    x: &DenseMatrix,
    analytic: &DenseMatrix,
    mut f: impl FnMut(&DenseMatrix) -> f64,
) -> Result<f64> {
    let mut probe = x.clone();
    grad_check(
        |v| {
            probe.as_mut_slice().copy_from_slice(v);
            f(&probe)
        },
        analytic.as_slice(),
        x.as_slice(),
        STEP,
    )
}

fn small_graph(rng: &mut Rng) -> crate::hetgraph::HeteroGraph {
    let spec = SyntheticSpec {
        n_users: 5 + rng.below(4),
        n_items: 4 + rng.below(4),
        density: 0.4,
        seed: rng.below(1 << 30) as u64,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec).expect("valid synthetic spec").0
}

fn small_schedule(rng: &mut Rng) -> DiffusionSchedule {
    let cfg = DiffusionConfig::from_noise_scale(1e-3 + 1e-2 * rng.uniform(), 4 + rng.below(5), 3);
    build_schedule(&cfg).expect("valid schedule")
}

fn encoder_cfg(per_relation: bool) -> EncoderConfig {
    EncoderConfig {
        layers: 2,
        dim: 3,
        per_relation_init: per_relation,
        ..EncoderConfig::default()
    }
}

fn encoder_objective(
    enc: &GraphEncoder,
    init: &InitEmbeddings,
    w_t: &DenseMatrix,
    w_a: &DenseMatrix,
) -> f64 {
    let views = enc.forward(init, true).expect("encoder forward");
    let aux = views.auxiliary.expect("auxiliary view requested");
    dot(views.target.pooled.as_slice(), w_t.as_slice()) + dot(aux.pooled.as_slice(), w_a.as_slice())
}

fn encoder_check(rng: &mut Rng, per_relation: bool) -> Result<f64> {
    let g = small_graph(rng);
    let cfg = encoder_cfg(per_relation);
    let enc = GraphEncoder::new(&g, cfg.clone())?;
    let n = g.total_nodes();
    let init = if per_relation {
        InitEmbeddings::per_relation(
            (0..g.relations().len())
                .map(|_| gaussian_like(rng, n, cfg.dim))
                .collect::<Result<_>>()?,
        )?
    } else {
        InitEmbeddings::shared(gaussian_like(rng, n, cfg.dim)?)
    };
    let (w_t, w_a) = (
        gaussian_like(rng, n, cfg.dim)?,
        gaussian_like(rng, n, cfg.dim)?,
    );
    let trace = enc.forward(&init, true)?;
    let mut grads = init.zeros_like();
    enc.backward(&init, &trace, &w_t, Some(&w_a), &mut grads)?;
    let mut worst = 0.0f64;
    for k in 0..init.tables().len() {
        let err = check_tensor(&init.tables()[k], &grads.tables()[k], |x| {
            let mut p = init.clone();
            p.tables_mut()[k] = x.clone();
            encoder_objective(&enc, &p, &w_t, &w_a)
        })?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn encoder_e0(rng: &mut Rng) -> Result<f64> {
    encoder_check(rng, false)
}

fn encoder_per_relation(rng: &mut Rng) -> Result<f64> {
    encoder_check(rng, true)
}

fn random_denoiser(rng: &mut Rng, dim: usize, steps: usize) -> DenoiserParams {
    let mut p = DenoiserParams::new(dim, steps, rng);
    // Nonzero biases so their gradients are exercised away from the origin.
    for b in [&mut p.net.b1, &mut p.net.b2] {
        *b = gaussian_like(rng, 1, b.cols()).expect("bias shape");
    }
    p
}

/// Checks every denoiser tensor of a scalar objective.
fn check_denoiser(
    params: &DenoiserParams,
    grads: &DenoiserParams,
    f: impl Fn(&DenoiserParams) -> f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..5 {
        let err = check_tensor(params.tensors()[k], grads.tensors()[k], |x| {
            let mut p = params.clone();
            *p.tensors_mut()[k] = x.clone();
            f(&p)
        })?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn denoiser(rng: &mut Rng) -> Result<f64> {
    let (d, steps, n) = (3, 6, 4);
    let params = random_denoiser(rng, d, steps);
    let h = gaussian_like(rng, n, d)?;
    let times: Vec<usize> = (0..n).map(|_| 1 + rng.below(steps)).collect();
    let w = gaussian_like(rng, n, d)?;
    let f = |p: &DenoiserParams, h: &DenseMatrix| {
        dot(
            p.predict_traced(h, &times).expect("predict").0.as_slice(),
            w.as_slice(),
        )
    };
    let (_, trace) = params.predict_traced(&h, &times)?;
    let mut grads = params.zeros_like();
    let grad_h = params.backward(&trace, &w, &mut grads)?;
    let e_h = check_tensor(&h, &grad_h, |x| f(&params, x))?;
    Ok(e_h.max(check_denoiser(&params, &grads, |p| f(p, &h))?))
}

fn diffusion_objective(rng: &mut Rng) -> Result<f64> {
    let sched = small_schedule(rng);
    let (d, n) = (3, 4);
    let params = random_denoiser(rng, d, sched.steps());
    let (src, tgt, noise) = (
        gaussian_like(rng, n, d)?,
        gaussian_like(rng, n, d)?,
        gaussian_like(rng, n, d)?,
    );
    let times: Vec<usize> = (0..n).map(|_| 1 + rng.below(sched.steps())).collect();
    let f = |p: &DenoiserParams, s: &DenseMatrix| {
        diffusion_loss_at(p, &sched, s, &tgt, &times, &noise)
            .expect("loss")
            .loss
    };
    let out = diffusion_loss_at(&params, &sched, &src, &tgt, &times, &noise)?;
    let e_src = check_tensor(&src, &out.grad_source, |x| f(&params, x))?;
    Ok(e_src.max(check_denoiser(&params, &out.grad_params, |p| f(p, &src))?))
}

fn dae_objective(rng: &mut Rng) -> Result<f64> {
    let sched = small_schedule(rng);
    let (d, n) = (3, 4);
    let params = random_denoiser(rng, d, sched.steps());
    let (src, tgt, noise) = (
        gaussian_like(rng, n, d)?,
        gaussian_like(rng, n, d)?,
        gaussian_like(rng, n, d)?,
    );
    let f = |p: &DenoiserParams, s: &DenseMatrix| {
        dae_loss(p, &sched, s, &tgt, &noise).expect("loss").loss
    };
    let out = dae_loss(&params, &sched, &src, &tgt, &noise)?;
    let e_src = check_tensor(&src, &out.grad_source, |x| f(&params, x))?;
    Ok(e_src.max(check_denoiser(&params, &out.grad_params, |p| f(p, &src))?))
}

fn reverse_chain(rng: &mut Rng) -> Result<f64> {
    let sched = small_schedule(rng);
    let (d, n) = (3, 4);
    let steps = 1 + rng.below(sched.steps());
    let params = random_denoiser(rng, d, sched.steps());
    let (src, noise, w) = (
        gaussian_like(rng, n, d)?,
        gaussian_like(rng, n, d)?,
        gaussian_like(rng, n, d)?,
    );
    let f = |p: &DenoiserParams, s: &DenseMatrix| {
        let (out, _) =
            reverse_denoise_traced(p, &sched, s, steps, Noise::Given(&noise)).expect("reverse");
        dot(out.as_slice(), w.as_slice())
    };
    let (_, trace) = reverse_denoise_traced(&params, &sched, &src, steps, Noise::Given(&noise))?;
    let mut grads = params.zeros_like();
    let grad_src = reverse_denoise_backward(&params, &sched, &trace, &w, &mut grads)?;
    let e_src = check_tensor(&src, &grad_src, |x| f(&params, x))?;
    Ok(e_src.max(check_denoiser(&params, &grads, |p| f(p, &src))?))
}

fn bpr(rng: &mut Rng) -> Result<f64> {
    let (n, d) = (8, 3);
    let e = gaussian_like(rng, n, d)?;
    let batch = TripletBatch::new(
        (0..5)
            .map(|_| (rng.below(3), 3 + rng.below(5), 3 + rng.below(5)))
            .collect(),
    );
    let out = bpr_loss(&e, &batch)?;
    check_tensor(&e, &out.grad, |x| bpr_loss(x, &batch).expect("bpr").loss)
}

fn cross_entropy(rng: &mut Rng) -> Result<f64> {
    let (n, d, classes) = (6, 3, 3);
    let e = gaussian_like(rng, n, d)?;
    let classifier = TwoLayer::xavier(d, d, classes, rng);
    let mut entries = Vec::new();
    for v in 0..n {
        if rng.below(3) > 0 {
            entries.push((v, rng.below(classes)));
        }
    }
    if entries.is_empty() {
        entries.push((0, 0));
    }
    let labels = LabelSet::new(0, entries, classes)?;
    let out = ce_loss(&e, &classifier, &labels)?;
    let e_emb = check_tensor(&e, &out.grad_embeddings, |x| {
        ce_loss(x, &classifier, &labels).expect("ce").loss
    })?;
    let mut worst = e_emb;
    for k in 0..4 {
        let err = check_tensor(classifier.params()[k], out.grad_params.params()[k], |x| {
            let mut c = classifier.clone();
            *c.params_mut()[k] = x.clone();
            ce_loss(&e, &c, &labels).expect("ce").loss
        })?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn joint_config(task: Task) -> RunConfig {
    let mut cfg = RunConfig {
        data: DataSource::Synthetic(SyntheticSpec::default()),
        ..RunConfig::default()
    };
    cfg.encoder = encoder_cfg(false);
    cfg.diffusion = DiffusionConfig::from_noise_scale(1e-2, 6, 3);
    cfg.loss.task = task;
    cfg.loss.l2 = 1e-2;
    cfg
}

/// Joint objective with the denoising target pinned, as in training.
fn joint_value(
    model: &Model,
    params: &ModelParams,
    main: &dyn Fn(&DenseMatrix, &ModelParams) -> f64,
    target: &DenseMatrix,
    l2: f64,
) -> f64 {
    let mut pass = model.forward(params, &mut Rng::new(7)).expect("forward");
    let main = main(&pass.fused, params);
    pass.pin_target(target.clone());
    let deno: f64 = model
        .denoising_losses(params, &pass, &mut Rng::new(8))
        .expect("denoise")
        .iter()
        .flatten()
        .map(|l| l.loss)
        .sum();
    main + model.lambda() * deno + l2 * params.embeddings.frobenius_sq()
}

fn joint_check(
    rng: &mut Rng,
    task: Task,
    main: &dyn Fn(&DenseMatrix, &ModelParams) -> f64,
    main_grad: &dyn Fn(&DenseMatrix, &ModelParams, &mut ModelParams) -> DenseMatrix,
) -> Result<f64> {
    let g = small_graph(rng);
    let cfg = joint_config(task);
    let label = (task == Task::Node).then_some((0, 3));
    let params = ModelParams::init(&g, &cfg, rng, None, label)?;
    debug_assert_eq!(params.side_types, side_types(&g, task, Some(0)));
    let model = Model::new(&g, &cfg, &params.side_types)?;
    let pass = model.forward(&params, &mut Rng::new(7))?;
    let denoising = model.denoising_losses(&params, &pass, &mut Rng::new(8))?;
    let mut grads = params.zeros_like();
    let grad_fused = main_grad(&pass.fused, &params, &mut grads);
    model.backward(&params, &pass, &grad_fused, &denoising, &mut grads)?;
    grads.embeddings.tables_mut()[0].axpy(2.0 * cfg.loss.l2, &params.embeddings.tables()[0])?;

    let target = pass.target().clone();
    let e_emb = check_tensor(
        &params.embeddings.tables()[0],
        &grads.embeddings.tables()[0],
        |x| {
            let mut p = params.clone();
            p.embeddings.tables_mut()[0] = x.clone();
            joint_value(&model, &p, main, &target, cfg.loss.l2)
        },
    )?;
    let e_den = check_tensor(
        &params.denoisers[0].net.w1,
        &grads.denoisers[0].net.w1,
        |x| {
            let mut p = params.clone();
            p.denoisers[0].net.w1 = x.clone();
            joint_value(&model, &p, main, &target, cfg.loss.l2)
        },
    )?;
    Ok(e_emb.max(e_den))
}

fn joint_link(rng: &mut Rng) -> Result<f64> {
    // Rows 0..5 are users and 9 is a lower bound on the node count.
    let batch = TripletBatch::new(
        (0..6)
            .map(|_| (rng.below(5), 5 + rng.below(4), 5 + rng.below(4)))
            .collect(),
    );
    let main = |fused: &DenseMatrix, _: &ModelParams| bpr_loss(fused, &batch).expect("bpr").loss;
    let main_grad = |fused: &DenseMatrix, _: &ModelParams, _: &mut ModelParams| {
        bpr_loss(fused, &batch).expect("bpr").grad
    };
    joint_check(rng, Task::Link, &main, &main_grad)
}

fn joint_node(rng: &mut Rng) -> Result<f64> {
    let labels = LabelSet::new(0, vec![(0, 0), (1, 2), (2, 1), (4, 2)], 3)?;
    let users = |fused: &DenseMatrix| fused.row_block(0, 5);
    let main = |fused: &DenseMatrix, p: &ModelParams| {
        ce_loss(
            &users(fused),
            p.classifier.as_ref().expect("classifier"),
            &labels,
        )
        .expect("ce")
        .loss
    };
    let main_grad = |fused: &DenseMatrix, p: &ModelParams, grads: &mut ModelParams| {
        let out = ce_loss(
            &users(fused),
            p.classifier.as_ref().expect("classifier"),
            &labels,
        )
        .expect("ce");
        grads.classifier = Some(out.grad_params);
        let mut g = DenseMatrix::zeros(fused.rows(), fused.cols());
        g.set_row_block(0, &out.grad_embeddings)
            .expect("user block");
        g
    };
    joint_check(rng, Task::Node, &main, &main_grad)
}
