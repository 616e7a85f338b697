use serde::{Deserialize, Serialize};

use super::{leaky_relu, leaky_relu_grad, uniform_like, DenseMatrix, Rng};
use crate::{Error, Result};

pub const HIDDEN_SLOPE: f64 = 0.2;

/// `y = leaky(x·W1 + b1)·W2 + b2`, rows are samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayer {
    pub w1: DenseMatrix,
    /// `1 × hidden`.
    pub b1: DenseMatrix,
    pub w2: DenseMatrix,
    /// `1 × output`.
    pub b2: DenseMatrix,
}

/// Values saved by [`TwoLayer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct TwoLayerCache {
    input: DenseMatrix,
    pre: DenseMatrix,
    hidden: DenseMatrix,
}

fn add_bias(m: &mut DenseMatrix, bias: &DenseMatrix) {
    let b = bias.row(0);
    for r in 0..m.rows() {
        m.row_mut(r).iter_mut().zip(b).for_each(|(v, bv)| *v += bv);
    }
}

impl TwoLayer {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(input, hidden),
            b1: DenseMatrix::zeros(1, hidden),
            w2: DenseMatrix::zeros(hidden, output),
            b2: DenseMatrix::zeros(1, output),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn xavier(input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            w1: uniform_like(rng, input, hidden, bound(input, hidden)),
            b1: DenseMatrix::zeros(1, hidden),
            w2: uniform_like(rng, hidden, output, bound(hidden, output)),
            b2: DenseMatrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w1.rows(), self.w1.cols(), self.w2.cols())
    }

    pub fn params(&self) -> [&DenseMatrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut DenseMatrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<(DenseMatrix, TwoLayerCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "mlp input",
                format!("{} columns", self.input_dim()),
                x.cols(),
            ));
        }
        let mut pre = x.matmul(&self.w1)?;
        add_bias(&mut pre, &self.b1);
        let hidden = pre.map(|v| leaky_relu(v, HIDDEN_SLOPE));
        let mut out = hidden.matmul(&self.w2)?;
        add_bias(&mut out, &self.b2);
        Ok((
            out,
            TwoLayerCache {
                input: x.clone(),
                pre,
                hidden,
            },
        ))
    }

    /// Adds parameter gradients into `grads` and returns `∂/∂x`.
    pub fn backward(
        &self,
        cache: &TwoLayerCache,
        grad_out: &DenseMatrix,
        grads: &mut TwoLayer,
    ) -> Result<DenseMatrix> {
        grads.w2.add_assign(&cache.hidden.matmul_tn(grad_out)?)?;
        accumulate_columns(&mut grads.b2, grad_out);
        let mut g = grad_out.matmul_nt(&self.w2)?;
        for (gv, &z) in g.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            *gv *= leaky_relu_grad(z, HIDDEN_SLOPE);
        }
        grads.w1.add_assign(&cache.input.matmul_tn(&g)?)?;
        accumulate_columns(&mut grads.b1, &g);
        g.matmul_nt(&self.w1)
    }
}

fn accumulate_columns(bias: &mut DenseMatrix, g: &DenseMatrix) {
    for (b, s) in bias.as_mut_slice().iter_mut().zip(g.column_sums()) {
        *b += s;
    }
}
