use super::{DenoiserParams, DiffusionSchedule};
use crate::numerics::{gaussian_like, DenseMatrix, Rng};
use crate::{Error, Result};

/// Loss value with gradients for the denoiser and the source rows. The
/// target rows are treated as constants.
#[derive(Debug, Clone)]
pub struct DiffusionLoss {
    pub loss: f64,
    /// Step index used for each row.
    pub times: Vec<usize>,
    pub grad_params: DenoiserParams,
    pub grad_source: DenseMatrix,
}

pub(crate) fn check_pair(source: &DenseMatrix, target: &DenseMatrix, dim: usize) -> Result<()> {
    if source.rows() == 0 {
        return Err(Error::invalid("diffusion loss needs at least one row"));
    }
    if source.shape() != target.shape() || source.cols() != dim {
        return Err(Error::shape(
            "diffusion loss",
            format!("{}x{dim} source and target", source.rows()),
            format!(
                "{}x{} and {}x{}",
                source.rows(),
                source.cols(),
                target.rows(),
                target.cols()
            ),
        ));
    }
    Ok(())
}

/// Draws `t` uniformly from `1..=T` (once, or once per row) and fresh noise,
/// then evaluates [`diffusion_loss_at`].
pub fn diffusion_loss(
    params: &DenoiserParams,
    schedule: &DiffusionSchedule,
    source: &DenseMatrix,
    target: &DenseMatrix,
    rng: &mut Rng,
    per_row_t: bool,
) -> Result<DiffusionLoss> {
    check_pair(source, target, params.dim())?;
    let n = source.rows();
    let times: Vec<usize> = if per_row_t {
        (0..n).map(|_| 1 + rng.below(schedule.steps())).collect()
    } else {
        vec![1 + rng.below(schedule.steps()); n]
    };
    let noise = gaussian_like(rng, n, source.cols())?;
    diffusion_loss_at(params, schedule, source, target, &times, &noise)
}

/// `(1/n) Σ_i w(t_i)·‖ĥ_θ(h_{t_i}, t_i) − target_i‖²` with
/// `h_t = √ᾱ_t·source + √(1−ᾱ_t)·noise` and `w` the schedule's loss weight.
pub fn diffusion_loss_at(
    params: &DenoiserParams,
    schedule: &DiffusionSchedule,
    source: &DenseMatrix,
    target: &DenseMatrix,
    times: &[usize],
    noise: &DenseMatrix,
) -> Result<DiffusionLoss> {
    check_pair(source, target, params.dim())?;
    if noise.shape() != source.shape() {
        return Err(Error::shape(
            "diffusion noise",
            format!("{:?}", source.shape()),
            format!("{:?}", noise.shape()),
        ));
    }
    if times.len() != source.rows() {
        return Err(Error::shape("diffusion steps", source.rows(), times.len()));
    }
    for &t in times {
        schedule.check_step(t)?;
    }
    let n = source.rows();
    let mut h = DenseMatrix::zeros(n, source.cols());
    for (r, &t) in times.iter().enumerate() {
        let (keep, spread) = (
            schedule.alpha_bar(t).sqrt(),
            (1.0 - schedule.alpha_bar(t)).sqrt(),
        );
        for ((o, s), e) in h.row_mut(r).iter_mut().zip(source.row(r)).zip(noise.row(r)) {
            *o = keep * s + spread * e;
        }
    }
    let (pred, trace) = params.predict_traced(&h, times)?;

    let mut loss = 0.0;
    let mut grad_pred = DenseMatrix::zeros(n, source.cols());
    for (r, &t) in times.iter().enumerate() {
        let w = schedule.loss_weight(t);
        let mut sq = 0.0;
        for ((g, p), y) in grad_pred
            .row_mut(r)
            .iter_mut()
            .zip(pred.row(r))
            .zip(target.row(r))
        {
            let diff = p - y;
            sq += diff * diff;
            *g = 2.0 * w * diff / n as f64;
        }
        loss += w * sq;
    }
    loss /= n as f64;

    let mut grad_params = params.zeros_like();
    let mut grad_source = params.backward(&trace, &grad_pred, &mut grad_params)?;
    for (r, &t) in times.iter().enumerate() {
        let keep = schedule.alpha_bar(t).sqrt();
        grad_source.row_mut(r).iter_mut().for_each(|g| *g *= keep);
    }
    Ok(DiffusionLoss {
        loss,
        times: times.to_vec(),
        grad_params,
        grad_source,
    })
}
