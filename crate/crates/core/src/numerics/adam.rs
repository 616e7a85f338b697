use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::{Error, Result};

/// Per-parameter Adam moments.
///
/// Entries whose gradient is exactly zero are skipped: neither the moments
/// nor the parameter move. Embedding rows that a step never touches
/// therefore stay put, and a zero gradient is the identity for any state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: DenseMatrix,
    second_moment: DenseMatrix,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, lr: f64) -> Self {
        Self {
            first_moment: DenseMatrix::zeros(rows, cols),
            second_moment: DenseMatrix::zeros(rows, cols),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_param(param: &DenseMatrix, lr: f64) -> Self {
        Self::new(param.rows(), param.cols(), lr)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &DenseMatrix {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &DenseMatrix {
        &self.second_moment
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(state: &mut AdamState, param: &mut DenseMatrix, grad: &DenseMatrix) -> Result<()> {
    if param.shape() != grad.shape() || state.first_moment.shape() != param.shape() {
        return Err(Error::shape(
            "adam_step",
            format!("{:?}", state.first_moment.shape()),
            format!("param {:?}, grad {:?}", param.shape(), grad.shape()),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let m = state.first_moment.as_mut_slice();
    let v = state.second_moment.as_mut_slice();
    for (i, (p, &g)) in param
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .enumerate()
    {
        if g == 0.0 {
            continue;
        }
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook scalar Adam, kept separate from the matrix path.
    fn scalar_adam(mut x: f64, grads: &[f64], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        let mut trace = Vec::new();
        for (k, g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            trace.push(x);
        }
        trace
    }

    #[test]
    fn zero_grad_is_noop() {
        let mut p = DenseMatrix::from_rows(&[[1.0, -2.0]]).unwrap();
        let before = p.clone();
        let mut s = AdamState::for_param(&p, 0.1);
        adam_step(&mut s, &mut p, &DenseMatrix::zeros(1, 2)).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g and v̂ = g², so the step is lr·g/(|g|+ε) ≈ lr.
        let mut p = DenseMatrix::filled(1, 1, 5.0);
        let mut s = AdamState::for_param(&p, 0.1);
        adam_step(&mut s, &mut p, &DenseMatrix::filled(1, 1, 2.0)).unwrap();
        assert!((p[(0, 0)] - 4.9).abs() < 1e-8);
    }

    #[test]
    fn two_steps_match_scalar_trace() {
        let grads = [2.0, -0.5];
        let want = scalar_adam(1.0, &grads, 0.05);
        let mut p = DenseMatrix::filled(1, 1, 1.0);
        let mut s = AdamState::for_param(&p, 0.05);
        for (g, w) in grads.iter().zip(&want) {
            adam_step(&mut s, &mut p, &DenseMatrix::filled(1, 1, *g)).unwrap();
            assert!((p[(0, 0)] - w).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = DenseMatrix::zeros(2, 2);
        let mut s = AdamState::for_param(&p, 0.1);
        assert!(adam_step(&mut s, &mut p, &DenseMatrix::zeros(2, 1)).is_err());
        let mut q = DenseMatrix::zeros(3, 3);
        assert!(adam_step(&mut s, &mut q, &DenseMatrix::zeros(3, 3)).is_err());
    }

    proptest! {
        #[test]
        fn zero_grad_identity_for_any_state(
            warm in prop::collection::vec(-3.0f64..3.0, 6),
            start in prop::collection::vec(-3.0f64..3.0, 6),
        ) {
            let mut p = DenseMatrix::from_vec(2, 3, start).unwrap();
            let mut s = AdamState::for_param(&p, 0.01);
            let mut scratch = p.clone();
            adam_step(&mut s, &mut scratch, &DenseMatrix::from_vec(2, 3, warm).unwrap()).unwrap();
            let before = p.clone();
            adam_step(&mut s, &mut p, &DenseMatrix::zeros(2, 3)).unwrap();
            prop_assert_eq!(p, before);
        }
    }
}
