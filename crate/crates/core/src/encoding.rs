//! Layered Z-phase encodings: QRF (phase layers interleaved with a fixed
//! basis permutation) and the RFF-like model QRF_Rff (one phase per basis
//! state).
//!
//! Qubit `i` of layer `ℓ` receives angle `θ = (Wx + b)[ℓN + i]` and puts
//! phase `s·θ` on every basis label, with `s = +1` when bit `i` of the
//! label is 0 and `s = -1` otherwise. This is `R_z(2θ)` up to a global
//! phase. Every circuit starts from the uniform superposition `H^{⊗N}|0>`
//! and ends with a second Hadamard layer before measurement.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::permutation::{dim_of, PermutationSpec};
use crate::rng::{seeded, stream};
use crate::statevector::StateVector;

/// Random affine map feeding the per-qubit phase gates of an `L`-layer,
/// `N`-qubit encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingParams {
    d: usize,
    n_qubits: usize,
    layers: usize,
    sigma: f64,
    beta: f64,
    seed: u64,
    /// `(N·L) × d`, row-major; rows `ℓN .. ℓN+N` drive layer `ℓ`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// `π √(3 / (N·L))`: matches the bias spread after scrambling to the
/// standard deviation `π` of a `Unif[0, 2π)` phase.
pub fn default_beta(n_qubits: usize, layers: usize) -> f64 {
    PI * (3.0 / (n_qubits * layers) as f64).sqrt()
}

impl EncodingParams {
    /// `W ~ N(0, σ²/(N·L))` entrywise and `b ~ Unif[0, β)` with the default β.
    pub fn draw(d: usize, n_qubits: usize, layers: usize, sigma: f64, seed: u64) -> Result<Self> {
        if layers == 0 {
            return Err(Error::invalid("layer count must be at least 1"));
        }
        Self::draw_with_beta(d, n_qubits, layers, sigma, default_beta(n_qubits, layers), seed)
    }

    pub fn draw_with_beta(
        d: usize,
        n_qubits: usize,
        layers: usize,
        sigma: f64,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        dim_of(n_qubits)?;
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be non-negative, got {beta}")));
        }
        let rows = n_qubits * layers;
        let std = sigma / (rows.max(1) as f64).sqrt();
        let mut wrng = seeded(seed, stream::WEIGHTS);
        let weights = (0..rows * d)
            .map(|_| std * wrng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut brng = seeded(seed, stream::BIAS);
        let bias = (0..rows).map(|_| beta * brng.gen::<f64>()).collect();
        Ok(Self {
            d,
            n_qubits,
            layers,
            sigma,
            beta,
            seed,
            weights,
            bias,
        })
    }

    /// Explicit parameters, e.g. from an audit dump or a hand-built test.
    pub fn from_parts(
        d: usize,
        n_qubits: usize,
        layers: usize,
        sigma: f64,
        beta: f64,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        dim_of(n_qubits)?;
        let rows = n_qubits * layers;
        if weights.len() != rows * d {
            return Err(Error::dim("encoding weights", rows * d, weights.len()));
        }
        if bias.len() != rows {
            return Err(Error::dim("encoding bias", rows, bias.len()));
        }
        Ok(Self {
            d,
            n_qubits,
            layers,
            sigma,
            beta,
            seed: 0,
            weights,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
    pub fn layers(&self) -> usize {
        self.layers
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn beta(&self) -> f64 {
        self.beta
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

    /// `N·L / 2^N`.
    pub fn compression_ratio(&self) -> f64 {
        (self.n_qubits * self.layers) as f64 / (1u64 << self.n_qubits) as f64
    }

    /// `Wx + b`, length `N·L`.
    pub fn layer_angles(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_qubits * self.layers];
        self.layer_angles_into(x, &mut out)?;
        Ok(out)
    }

    pub fn layer_angles_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::dim("encoding input", self.d, x.len()));
        }
        for ((o, row), &b) in out.iter_mut().zip(self.weights.chunks_exact(self.d)).zip(&self.bias) {
            *o = dot(row, x) + b;
        }
        Ok(())
    }

    /// Hyperparameter record; together with the seed it regenerates the
    /// matrices bit-for-bit through [`EncodingParams::draw_with_beta`].
    pub fn descriptor(&self) -> EncodingDescriptor {
        EncodingDescriptor {
            d: self.d,
            n_qubits: self.n_qubits,
            layers: self.layers,
            sigma: self.sigma,
            beta: self.beta,
            seed: self.seed,
        }
    }
}

/// Text dump of an encoder's hyperparameters:
///
/// ```text
/// qrflab-encoding v1
/// d=784
/// n_qubits=10
/// layers=30
/// sigma=0.1
/// beta=0.3141592653589793
/// seed=1
/// ```
///
/// Floats use Rust's shortest round-trip formatting.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingDescriptor {
    pub d: usize,
    pub n_qubits: usize,
    pub layers: usize,
    pub sigma: f64,
    pub beta: f64,
    pub seed: u64,
}

const DESCRIPTOR_HEADER: &str = "qrflab-encoding v1";

impl EncodingDescriptor {
    pub fn regenerate(&self) -> Result<EncodingParams> {
        EncodingParams::draw_with_beta(self.d, self.n_qubits, self.layers, self.sigma, self.beta, self.seed)
    }
}

impl fmt::Display for EncodingDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{DESCRIPTOR_HEADER}")?;
        writeln!(f, "d={}", self.d)?;
        writeln!(f, "n_qubits={}", self.n_qubits)?;
        writeln!(f, "layers={}", self.layers)?;
        writeln!(f, "sigma={}", self.sigma)?;
        writeln!(f, "beta={}", self.beta)?;
        writeln!(f, "seed={}", self.seed)
    }
}

impl FromStr for EncodingDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == DESCRIPTOR_HEADER => {}
            _ => {
                return Err(Error::Config {
                    line: 1,
                    message: format!("expected header `{DESCRIPTOR_HEADER}`"),
                })
            }
        }
        let (mut d, mut n, mut l, mut sigma, mut beta, mut seed) = (None, None, None, None, None, None);
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Config { line: i + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{line}`")))?;
            let v = v.trim();
            let perr = |e: &dyn fmt::Display| bad(format!("bad value for {k}: {e}"));
            match k.trim() {
                "d" => d = Some(v.parse().map_err(|e| perr(&e))?),
                "n_qubits" => n = Some(v.parse().map_err(|e| perr(&e))?),
                "layers" => l = Some(v.parse().map_err(|e| perr(&e))?),
                "sigma" => sigma = Some(v.parse().map_err(|e| perr(&e))?),
                "beta" => beta = Some(v.parse().map_err(|e| perr(&e))?),
                "seed" => seed = Some(v.parse().map_err(|e| perr(&e))?),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::Config {
            line: 0,
            message: format!("missing key `{k}`"),
        };
        Ok(Self {
            d: d.ok_or_else(|| missing("d"))?,
            n_qubits: n.ok_or_else(|| missing("n_qubits"))?,
            layers: l.ok_or_else(|| missing("layers"))?,
            sigma: sigma.ok_or_else(|| missing("sigma"))?,
            beta: beta.ok_or_else(|| missing("beta"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        })
    }
}

/// `S[l][i] = +1` if bit `i` of `l` is 0, else `-1`. Row-major `2^N × N`.
pub fn qubit_sign_table(n_qubits: usize) -> Result<Vec<i8>> {
    let dim = dim_of(n_qubits)?;
    let mut s = Vec::with_capacity(dim * n_qubits);
    for l in 0..dim {
        for i in 0..n_qubits {
            s.push(if (l >> i) & 1 == 0 { 1 } else { -1 });
        }
    }
    Ok(s)
}

#[inline]
pub(crate) fn sign(l: usize, qubit: usize) -> f64 {
    if (l >> qubit) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `out[l] = Σ_i S[l][i]·angles[i]` in `O(2^N)`: flipping bit `h` of `l`
/// subtracts `2·angles[h]`.
pub(crate) fn signed_sums_into(angles: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), 1 << angles.len());
    out[0] = angles.iter().sum();
    for (h, &a) in angles.iter().enumerate() {
        let half = 1 << h;
        for l in 0..half {
            out[half + l] = out[l] - 2.0 * a;
        }
    }
}

fn check_perm(params: &EncodingParams, perm: &PermutationSpec) -> Result<()> {
    if perm.n_qubits() != params.n_qubits {
        return Err(Error::dim("permutation qubits", params.n_qubits, perm.n_qubits()));
    }
    Ok(())
}

/// Phase carried by each basis label just before the final Hadamard layer,
/// `Θ = B(Wx + b)`. Built layer by layer: add the layer's signed angle sums,
/// then move the whole accumulator through the permutation.
pub fn accumulated_phases(x: &[f64], params: &EncodingParams, perm: &PermutationSpec) -> Result<Vec<f64>> {
    check_perm(params, perm)?;
    let angles = params.layer_angles(x)?;
    Ok(phases_from_angles(&angles, params.n_qubits, perm))
}

/// Same as [`accumulated_phases`] for precomputed layer angles
/// (length `N·L`), which makes the map linear in `angles`.
pub fn phases_from_angles(angles: &[f64], n_qubits: usize, perm: &PermutationSpec) -> Vec<f64> {
    let dim = 1 << n_qubits;
    let mut acc = vec![0.0; dim];
    let mut layer = vec![0.0; dim];
    let mut moved = vec![0.0; dim];
    for block in angles.chunks_exact(n_qubits) {
        signed_sums_into(block, &mut layer);
        acc.iter_mut().zip(&layer).for_each(|(a, s)| *a += s);
        perm.scatter(&acc, &mut moved);
        std::mem::swap(&mut acc, &mut moved);
    }
    acc
}

/// QRF measurement distribution via the accumulated phase vector:
/// one `O(N·L·d + L·2^N)` phase pass plus one Walsh-Hadamard transform.
pub fn qrf_features_fast(x: &[f64], params: &EncodingParams, perm: &PermutationSpec) -> Result<Vec<f64>> {
    let phases = accumulated_phases(x, params, perm)?;
    let mut state = StateVector::from_phases(&phases)?;
    state.fwht();
    Ok(state.probabilities())
}

/// Gate-by-gate QRF circuit on the statevector engine. Slow; kept as the
/// oracle for [`qrf_features_fast`].
pub fn qrf_features_reference(x: &[f64], params: &EncodingParams, perm: &PermutationSpec) -> Result<Vec<f64>> {
    check_perm(params, perm)?;
    let angles = params.layer_angles(x)?;
    let mut state = StateVector::zero(params.n_qubits)?;
    state.fwht();
    for block in angles.chunks_exact(params.n_qubits) {
        for (q, &theta) in block.iter().enumerate() {
            state.apply_z_phase(q, theta)?;
        }
        state.apply_permutation(perm)?;
    }
    state.fwht();
    Ok(state.probabilities())
}

/// Parameters of the RFF-like quantum model: one Gaussian frequency row and
/// one uniform phase per basis label.
#[derive(Clone, Debug, PartialEq)]
pub struct RffLikeParams {
    n_qubits: usize,
    d: usize,
    sigma: f64,
    seed: u64,
    /// `2^N × d`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl RffLikeParams {
    /// `W ~ N(0, σ²)`, `b ~ Unif[0, 2π)`.
    pub fn draw(d: usize, n_qubits: usize, sigma: f64, seed: u64) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        if d == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let mut wrng = seeded(seed, stream::WEIGHTS);
        let weights = (0..dim * d)
            .map(|_| sigma * wrng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut brng = seeded(seed, stream::BIAS);
        let bias = (0..dim).map(|_| 2.0 * PI * brng.gen::<f64>()).collect();
        Ok(Self {
            n_qubits,
            d,
            sigma,
            seed,
            weights,
            bias,
        })
    }

    pub fn from_parts(n_qubits: usize, d: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        if weights.len() != dim * d {
            return Err(Error::dim("rff-like weights", dim * d, weights.len()));
        }
        if bias.len() != dim {
            return Err(Error::dim("rff-like bias", dim, bias.len()));
        }
        Ok(Self {
            n_qubits,
            d,
            sigma: f64::NAN,
            seed: 0,
            weights,
            bias,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
    pub fn input_dim(&self) -> usize {
        self.d
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

    /// `Θ = W x + b`.
    pub fn phases(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::dim("rff-like input", self.d, x.len()));
        }
        Ok(self
            .weights
            .chunks_exact(self.d)
            .zip(&self.bias)
            .map(|(row, &b)| dot(row, x) + b)
            .collect())
    }
}

/// `|H^{⊗N} |Θ>|²` with `Θ = W x + b`; costs `O(2^N·d)` per input.
pub fn qrfrff_features(x: &[f64], params: &RffLikeParams) -> Result<Vec<f64>> {
    let phases = params.phases(x)?;
    let mut state = StateVector::from_phases(&phases)?;
    state.fwht();
    Ok(state.probabilities())
}

/// Four-accumulator dot product; fixed summation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
