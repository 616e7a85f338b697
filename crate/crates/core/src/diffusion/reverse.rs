use super::{q_sample, Denoiser, DenoiserParams, DenoiserTrace, DiffusionSchedule, Noise};
use crate::numerics::DenseMatrix;
use crate::{Error, Result};

/// Per-step denoiser traces, latest step first.
#[derive(Debug, Clone)]
pub struct ReverseTrace {
    steps: Vec<(usize, DenoiserTrace)>,
    start: usize,
}

impl ReverseTrace {
    pub fn start_step(&self) -> usize {
        self.start
    }
}

fn check_steps(schedule: &DiffusionSchedule, steps: usize) -> Result<()> {
    if steps > schedule.steps() {
        return Err(Error::invalid(format!(
            "{steps} reverse steps requested, schedule has {}",
            schedule.steps()
        )));
    }
    Ok(())
}

/// Posterior mean for `t → t − 1`. At `t = 1` the mean is the prediction
/// itself, returned as is.
fn posterior(
    schedule: &DiffusionSchedule,
    t: usize,
    x0: DenseMatrix,
    h: &DenseMatrix,
) -> Result<DenseMatrix> {
    if t == 1 {
        return Ok(x0);
    }
    let (c0, c1) = schedule.posterior_coefficients(t);
    let mut out = x0.scale(c0);
    out.axpy(c1, h)?;
    Ok(out)
}

/// Corrupts `source` to step `steps` and walks the posterior mean back to
/// step 0 without injecting further noise. Zero steps return `source`.
pub fn reverse_denoise<D: Denoiser + ?Sized>(
    denoiser: &D,
    schedule: &DiffusionSchedule,
    source: &DenseMatrix,
    steps: usize,
    noise: Noise<'_>,
) -> Result<DenseMatrix> {
    check_steps(schedule, steps)?;
    if steps == 0 {
        return Ok(source.clone());
    }
    let mut h = q_sample(source, steps, schedule, noise)?;
    for t in (1..=steps).rev() {
        let x0 = denoiser.predict(&h, t)?;
        h = posterior(schedule, t, x0, &h)?;
    }
    Ok(h)
}

/// [`reverse_denoise`] for the trainable denoiser, keeping what the
/// backward pass needs.
pub fn reverse_denoise_traced(
    params: &DenoiserParams,
    schedule: &DiffusionSchedule,
    source: &DenseMatrix,
    steps: usize,
    noise: Noise<'_>,
) -> Result<(DenseMatrix, ReverseTrace)> {
    check_steps(schedule, steps)?;
    let mut trace = ReverseTrace {
        steps: Vec::with_capacity(steps),
        start: steps,
    };
    if steps == 0 {
        return Ok((source.clone(), trace));
    }
    let mut h = q_sample(source, steps, schedule, noise)?;
    for t in (1..=steps).rev() {
        let (x0, step) = params.predict_traced(&h, &vec![t; h.rows()])?;
        h = posterior(schedule, t, x0, &h)?;
        trace.steps.push((t, step));
    }
    Ok((h, trace))
}

/// Adds denoiser gradients into `grads` and returns `∂/∂source`.
pub fn reverse_denoise_backward(
    params: &DenoiserParams,
    schedule: &DiffusionSchedule,
    trace: &ReverseTrace,
    grad_out: &DenseMatrix,
    grads: &mut DenoiserParams,
) -> Result<DenseMatrix> {
    let mut g = grad_out.clone();
    for (t, step) in trace.steps.iter().rev() {
        g = if *t == 1 {
            params.backward(step, &g, grads)?
        } else {
            let (c0, c1) = schedule.posterior_coefficients(*t);
            let mut through = params.backward(step, &g.scale(c0), grads)?;
            through.axpy(c1, &g)?;
            through
        };
    }
    if trace.start > 0 {
        g.scale_in_place(schedule.alpha_bar(trace.start).sqrt());
    }
    Ok(g)
}
