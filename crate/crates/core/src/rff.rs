//! Classical random Fourier features, `φ(x) = √(2/D) cos(Wx + b)`.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::encoding::dot;
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct RffParams {
    d: usize,
    n_features: usize,
    sigma: f64,
    seed: u64,
    /// `D × d`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl RffParams {
    /// `W ~ N(0, σ²)`, `b ~ Unif[0, 2π)`. Approximates the Gaussian kernel
    /// `exp(-σ²‖x - y‖²/2)`.
    pub fn draw(d: usize, n_features: usize, sigma: f64, seed: u64) -> Result<Self> {
        if d == 0 || n_features == 0 {
            return Err(Error::invalid(format!(
                "input dimension and feature count must be positive (d={d}, D={n_features})"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let mut wrng = seeded(seed, stream::WEIGHTS);
        let weights = (0..n_features * d)
            .map(|_| sigma * wrng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut brng = seeded(seed, stream::BIAS);
        let bias = (0..n_features).map(|_| 2.0 * PI * brng.gen::<f64>()).collect();
        Ok(Self {
            d,
            n_features,
            sigma,
            seed,
            weights,
            bias,
        })
    }

    pub fn from_parts(d: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let n_features = bias.len();
        if n_features == 0 || weights.len() != n_features * d {
            return Err(Error::dim("rff weights", n_features * d, weights.len()));
        }
        Ok(Self {
            d,
            n_features,
            sigma: f64::NAN,
            seed: 0,
            weights,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }
    pub fn n_features(&self) -> usize {
        self.n_features
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

pub fn rff_features(x: &[f64], params: &RffParams) -> Result<Vec<f64>> {
    let mut out = vec![0.0; params.n_features];
    rff_features_into(x, params, &mut out)?;
    Ok(out)
}

pub fn rff_features_into(x: &[f64], params: &RffParams, out: &mut [f64]) -> Result<()> {
    if x.len() != params.d {
        return Err(Error::dim("rff input", params.d, x.len()));
    }
    if out.len() != params.n_features {
        return Err(Error::dim("rff output", params.n_features, out.len()));
    }
    let scale = (2.0 / params.n_features as f64).sqrt();
    for ((o, row), &b) in out.iter_mut().zip(params.weights.chunks_exact(params.d)).zip(&params.bias) {
        *o = scale * (dot(row, x) + b).cos();
    }
    Ok(())
}
