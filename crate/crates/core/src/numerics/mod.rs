//! Dense and sparse linear algebra, seeded sampling, Adam, and gradient checks.

mod adam;
mod dense;
mod gradcheck;
mod mlp;
mod rng;
mod sparse;

pub use adam::{adam_step, AdamState};
pub use dense::{dot, DenseMatrix};
pub use gradcheck::grad_check;
pub use mlp::{TwoLayer, TwoLayerCache, HIDDEN_SLOPE};
pub use rng::{gaussian_like, uniform_like, Rng};
pub use sparse::{spmm, SparseMatrix};

/// Leaky rectifier.
#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
