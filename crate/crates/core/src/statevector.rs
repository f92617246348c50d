//! Dense statevector kernels.
//!
//! Amplitudes live in one contiguous `Vec<Complex64>` (interleaved re/im
//! doubles). Basis label `l` is little-endian: qubit `i` is bit `i` of `l`.

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::permutation::{dim_of, PermutationSpec};
use crate::rng::{seeded, stream};

const NORM_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for {n_qubits} qubits")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// `H^{⊗N}|0...0>`.
    pub fn uniform(n_qubits: usize) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(Self {
            n_qubits,
            amps: vec![a; dim],
        })
    }

    /// Uniform-magnitude state `2^{-N/2} (e^{iθ_0}, .., e^{iθ_{2^N-1}})`.
    pub fn from_phases(phases: &[f64]) -> Result<Self> {
        let n_qubits = qubits_for_len(phases.len())?;
        let scale = 1.0 / (phases.len() as f64).sqrt();
        Ok(Self {
            n_qubits,
            amps: phases.iter().map(|&t| Complex64::from_polar(scale, t)).collect(),
        })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n_qubits = qubits_for_len(amps.len())?;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("state norm {norm} is not 1")));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `H^{⊗N}`.
    pub fn fwht(&mut self) {
        fwht_in_place(&mut self.amps);
    }

    /// Multiplies amplitude `l` by `e^{i phases[l]}`.
    pub fn apply_phases(&mut self, phases: &[f64]) -> Result<()> {
        if phases.len() != self.dim() {
            return Err(Error::dim("apply_phases", self.dim(), phases.len()));
        }
        for (a, &t) in self.amps.iter_mut().zip(phases) {
            *a *= Complex64::from_polar(1.0, t);
        }
        Ok(())
    }

    /// Single-qubit `diag(e^{iθ}, e^{-iθ})` on `qubit`, i.e. phase
    /// `s·θ` with `s = +1` on bit 0 and `s = -1` on bit 1.
    pub fn apply_z_phase(&mut self, qubit: usize, theta: f64) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::invalid(format!("qubit {qubit} out of range")));
        }
        let plus = Complex64::from_polar(1.0, theta);
        let minus = plus.conj();
        let bit = 1usize << qubit;
        for (l, a) in self.amps.iter_mut().enumerate() {
            *a *= if l & bit == 0 { plus } else { minus };
        }
        Ok(())
    }

    /// `result[π(l)] = input[l]`.
    pub fn apply_permutation(&mut self, perm: &PermutationSpec) -> Result<()> {
        if perm.dim() != self.dim() {
            return Err(Error::dim("apply_permutation", self.dim(), perm.dim()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        perm.scatter(&self.amps, &mut out);
        self.amps = out;
        Ok(())
    }

    pub fn apply_unitary(&mut self, u: &DenseUnitary) -> Result<()> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        u.apply_into(&self.amps, &mut out)?;
        self.amps = out;
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn probabilities_into(&self, out: &mut [f64]) {
        for (p, a) in out.iter_mut().zip(&self.amps) {
            *p = a.norm_sqr();
        }
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::invalid(format!("state length {len} is not 2^N with N >= 1")));
    }
    Ok(len.trailing_zeros() as usize)
}

/// Orthonormal in-place Walsh-Hadamard butterfly; each of the `log2(len)`
/// stages scales by `1/√2`, so one pass is exactly `H^{⊗N}` and two passes
/// are the identity.
pub fn fwht_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fwht length must be a power of two");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut half = 1;
    while half < n {
        for block in buf.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = (x + y) * s;
                *b = (x - y) * s;
            }
        }
        half <<= 1;
    }
}

/// Row-major `2^N × 2^N` unitary, validated once at construction.
#[derive(Clone, Debug)]
pub struct DenseUnitary {
    n_qubits: usize,
    data: Vec<Complex64>,
}

impl DenseUnitary {
    pub fn new(n_qubits: usize, data: Vec<Complex64>) -> Result<Self> {
        let u = Self::new_unchecked(n_qubits, data)?;
        let dev = u.unitarity_error();
        if !(dev < UNITARY_TOL) {
            return Err(Error::Numerical(format!("matrix is not unitary: max |U†U - I| = {dev:e}")));
        }
        Ok(u)
    }

    /// Skips the `O(8^N)` unitarity check; the caller vouches for it.
    pub fn new_unchecked(n_qubits: usize, data: Vec<Complex64>) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        if data.len() != dim * dim {
            return Err(Error::dim("dense unitary", dim * dim, data.len()));
        }
        Ok(Self { n_qubits, data })
    }

    pub fn identity(n_qubits: usize) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Ok(Self { n_qubits, data })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim() + col]
    }

    /// `out = U · input`.
    pub fn apply_into(&self, input: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let dim = self.dim();
        if input.len() != dim || out.len() != dim {
            return Err(Error::dim("apply_dense_unitary", dim, input.len().min(out.len())));
        }
        for (row, o) in self.data.chunks_exact(dim).zip(out.iter_mut()) {
            let (mut re, mut im) = (0.0, 0.0);
            for (u, v) in row.iter().zip(input) {
                re += u.re * v.re - u.im * v.im;
                im += u.re * v.im + u.im * v.re;
            }
            *o = Complex64::new(re, im);
        }
        Ok(())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &DenseUnitary) -> Result<DenseUnitary> {
        let dim = self.dim();
        if other.dim() != dim {
            return Err(Error::dim("unitary product", dim, other.dim()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for k in 0..dim {
                let a = self.data[i * dim + k];
                let brow = &other.data[k * dim..(k + 1) * dim];
                for (o, b) in out[i * dim..(i + 1) * dim].iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseUnitary {
            n_qubits: self.n_qubits,
            data: out,
        })
    }

    /// `max |(U†U - I)_{ij}|`.
    pub fn unitarity_error(&self) -> f64 {
        let dim = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in i..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..dim {
                    acc += self.data[k * dim + i].conj() * self.data[k * dim + j];
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }
}

/// Shot histogram over the `2^N` basis labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmpiricalDistribution {
    counts: Vec<u64>,
    shots: u64,
}

impl EmpiricalDistribution {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.counts.len()];
        self.probabilities_into(&mut out);
        out
    }

    pub fn probabilities_into(&self, out: &mut [f64]) {
        let n = self.shots as f64;
        for (p, &c) in out.iter_mut().zip(&self.counts) {
            *p = c as f64 / n;
        }
    }

    /// `½ Σ |p̂_l - p_l|`.
    pub fn total_variation(&self, p: &[f64]) -> f64 {
        let n = self.shots as f64;
        0.5 * self
            .counts
            .iter()
            .zip(p)
            .map(|(&c, &q)| (c as f64 / n - q).abs())
            .sum::<f64>()
    }
}

/// Above this many shots per outcome the sampler switches from inverse-CDF
/// lookups to sequential conditional binomials. Both draw exactly from
/// `Multinomial(shots, p)`.
const INVERSE_CDF_SHOTS_PER_OUTCOME: u64 = 4;

/// Draws `shots` measurement outcomes from `p` using the
/// [`stream::SHOTS`] stream of `seed`.
pub fn sample_shots(p: &[f64], shots: u64, seed: u64) -> Result<EmpiricalDistribution> {
    let mut rng = seeded(seed, stream::SHOTS);
    sample_shots_with(p, shots, &mut rng)
}

pub fn sample_shots_with(
    p: &[f64],
    shots: u64,
    rng: &mut crate::rng::Rng,
) -> Result<EmpiricalDistribution> {
    if shots == 0 {
        return Err(Error::invalid("shot count must be at least 1"));
    }
    if p.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    if let Some((i, &v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("probability p[{i}] = {v} is negative or not finite")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }

    let mut counts = vec![0u64; p.len()];
    if shots <= INVERSE_CDF_SHOTS_PER_OUTCOME * p.len() as u64 {
        let mut cdf = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for &v in p {
            acc += v;
            cdf.push(acc);
        }
        // Outcomes with zero mass must never be selected, so search for the
        // first cumulative value strictly above u and clamp to the last
        // outcome with positive mass.
        let last = p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1);
        for _ in 0..shots {
            let u: f64 = rng.gen::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= u).min(last);
            counts[k] += 1;
        }
    } else {
        let mut remaining = shots;
        let mut mass_left = total;
        for (k, &v) in p.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            if k + 1 == p.len() || v >= mass_left {
                counts[k] = remaining;
                break;
            }
            let q = (v / mass_left).clamp(0.0, 1.0);
            let draw = if q > 0.0 {
                Binomial::new(remaining, q)
                    .map_err(|e| Error::Numerical(format!("binomial({remaining}, {q}): {e}")))?
                    .sample(rng)
            } else {
                0
            };
            counts[k] = draw;
            remaining -= draw;
            mass_left -= v;
        }
    }
    Ok(EmpiricalDistribution { counts, shots })
}
