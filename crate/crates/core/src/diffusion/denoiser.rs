use serde::{Deserialize, Serialize};

use crate::numerics::{DenseMatrix, Rng, TwoLayer, TwoLayerCache};
use crate::{Error, Result};

/// Anything that maps `(H_t, t)` to a prediction of `H_0`.
pub trait Denoiser {
    fn predict(&self, h: &DenseMatrix, t: usize) -> Result<DenseMatrix>;
}

/// Time-conditioned two-layer network `MLP(h_t ‖ s_t)` with a learnable
/// `T × d` step-embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserParams {
    /// `2d → d → d`.
    pub net: TwoLayer,
    /// Row `t − 1` holds `s_t`.
    pub time: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct DenoiserTrace {
    net: TwoLayerCache,
    times: Vec<usize>,
}

/// `s_t[2k] = sin(t / 10000^{2k/d})`, `s_t[2k+1] = cos(·)`.
pub fn sinusoidal_table(steps: usize, dim: usize) -> DenseMatrix {
    DenseMatrix::from_fn(steps, dim, |r, c| {
        let t = (r + 1) as f64;
        let freq = 10000f64.powf(-((c / 2 * 2) as f64) / dim as f64);
        if c % 2 == 0 {
            (t * freq).sin()
        } else {
            (t * freq).cos()
        }
    })
}

impl DenoiserParams {
    pub fn new(dim: usize, steps: usize, rng: &mut Rng) -> Self {
        Self {
            net: TwoLayer::xavier(2 * dim, dim, dim, rng),
            time: sinusoidal_table(steps, dim),
        }
    }

    pub fn zeros(dim: usize, steps: usize) -> Self {
        Self {
            net: TwoLayer::zeros(2 * dim, dim, dim),
            time: DenseMatrix::zeros(steps, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.time.cols()
    }

    pub fn steps(&self) -> usize {
        self.time.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dim(), self.steps())
    }

    pub fn tensors(&self) -> [&DenseMatrix; 5] {
        let [w1, b1, w2, b2] = self.net.params();
        [w1, b1, w2, b2, &self.time]
    }

    pub fn tensors_mut(&mut self) -> [&mut DenseMatrix; 5] {
        let [w1, b1, w2, b2] = self.net.params_mut();
        [w1, b1, w2, b2, &mut self.time]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }

    /// Prediction with a per-row step index.
    pub fn predict_traced(
        &self,
        h: &DenseMatrix,
        times: &[usize],
    ) -> Result<(DenseMatrix, DenoiserTrace)> {
        let d = self.dim();
        if h.cols() != d {
            return Err(Error::shape(
                "denoiser input",
                format!("{d} columns"),
                h.cols(),
            ));
        }
        if times.len() != h.rows() {
            return Err(Error::shape(
                "denoiser steps",
                format!("{} entries", h.rows()),
                times.len(),
            ));
        }
        if let Some(&t) = times.iter().find(|&&t| t == 0 || t > self.steps()) {
            return Err(Error::invalid(format!(
                "step {t} outside 1..={}",
                self.steps()
            )));
        }
        let s = DenseMatrix::from_fn(h.rows(), d, |r, c| self.time[(times[r] - 1, c)]);
        let (out, net) = self.net.forward(&h.hconcat(&s)?)?;
        Ok((
            out,
            DenoiserTrace {
                net,
                times: times.to_vec(),
            },
        ))
    }

    /// Adds parameter gradients into `grads` and returns `∂/∂H_t`.
    pub fn backward(
        &self,
        trace: &DenoiserTrace,
        grad_out: &DenseMatrix,
        grads: &mut DenoiserParams,
    ) -> Result<DenseMatrix> {
        let gx = self.net.backward(&trace.net, grad_out, &mut grads.net)?;
        let (gh, gs) = gx.hsplit(self.dim());
        for (r, &t) in trace.times.iter().enumerate() {
            grads
                .time
                .row_mut(t - 1)
                .iter_mut()
                .zip(gs.row(r))
                .for_each(|(a, b)| *a += b);
        }
        Ok(gh)
    }
}

impl Denoiser for DenoiserParams {
    fn predict(&self, h: &DenseMatrix, t: usize) -> Result<DenseMatrix> {
        Ok(self.predict_traced(h, &vec![t; h.rows()])?.0)
    }
}

/// `ĥ_0 = MLP(H_t ‖ s_t)` with one step index for every row.
pub fn denoise_predict(params: &DenoiserParams, h: &DenseMatrix, t: usize) -> Result<DenseMatrix> {
    params.predict(h, t)
}
