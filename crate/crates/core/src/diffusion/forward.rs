use super::DiffusionSchedule;
use crate::numerics::{gaussian_like, DenseMatrix, Rng};
use crate::{Error, Result};

/// Source of the standard normal `ξ` used by a corruption.
pub enum Noise<'a> {
    Sample(&'a mut Rng),
    /// Fixed noise, same shape as the input.
    Given(&'a DenseMatrix),
}

impl Noise<'_> {
    fn draw(self, rows: usize, cols: usize) -> Result<DenseMatrix> {
        match self {
            Noise::Sample(rng) => gaussian_like(rng, rows, cols),
            Noise::Given(xi) => {
                if xi.shape() != (rows, cols) {
                    return Err(Error::shape(
                        "noise",
                        format!("{rows}x{cols}"),
                        format!("{}x{}", xi.rows(), xi.cols()),
                    ));
                }
                Ok(xi.clone())
            }
        }
    }
}

fn mix(x: &DenseMatrix, keep: f64, spread: f64, xi: &DenseMatrix) -> DenseMatrix {
    let values = x
        .as_slice()
        .iter()
        .zip(xi.as_slice())
        .map(|(a, e)| keep * a + spread * e)
        .collect();
    DenseMatrix::from_vec(x.rows(), x.cols(), values).expect("same shape")
}

/// Closed-form corruption `H_t = √ᾱ_t·H_0 + √(1−ᾱ_t)·ξ`.
pub fn q_sample(
    h0: &DenseMatrix,
    t: usize,
    schedule: &DiffusionSchedule,
    noise: Noise<'_>,
) -> Result<DenseMatrix> {
    schedule.check_step(t)?;
    let xi = noise.draw(h0.rows(), h0.cols())?;
    let ab = schedule.alpha_bar(t);
    Ok(mix(h0, ab.sqrt(), (1.0 - ab).sqrt(), &xi))
}

/// One transition `H_t = √α_t·H_{t−1} + √β_t·ξ`.
pub fn q_step(
    h_prev: &DenseMatrix,
    t: usize,
    schedule: &DiffusionSchedule,
    noise: Noise<'_>,
) -> Result<DenseMatrix> {
    schedule.check_step(t)?;
    let xi = noise.draw(h_prev.rows(), h_prev.cols())?;
    Ok(mix(
        h_prev,
        schedule.alpha(t).sqrt(),
        schedule.beta(t).sqrt(),
        &xi,
    ))
}
