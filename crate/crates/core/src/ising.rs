//! Long-range transverse-field Ising dynamics and the QDRF feature map.
//!
//! `H = Σ_{i>j} J/|i-j|^α σ_z^i σ_z^j + g Σ_i σ_x^i` on an open chain,
//! propagated exactly through a dense symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::encoding::{signed_sums_into, EncodingParams};
use crate::error::{Error, Result};
use crate::permutation::dim_of;
use crate::statevector::{DenseUnitary, StateVector};

/// Largest qubit count for which a dense Hamiltonian is built by default.
pub const DEFAULT_DENSE_QUBIT_CAP: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsingParams {
    pub n_qubits: usize,
    /// Coupling scale; `J = 1` fixes the energy unit.
    pub j: f64,
    pub g: f64,
    pub alpha: f64,
    /// Evolution time per layer.
    pub t: f64,
}

impl IsingParams {
    /// `g/J = 1.0`, `Jt = 3.5`, `α = 1.5` with `J = 1`.
    pub fn with_defaults(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            j: 1.0,
            g: 1.0,
            alpha: 1.5,
            t: 3.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        dim_of(self.n_qubits)?;
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("decay exponent alpha must be positive, got {}", self.alpha)));
        }
        for (name, v) in [("J", self.j), ("g", self.g), ("t", self.t)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Coupling between qubits `i` and `j`, `J / |i-j|^α`.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.j / (i.abs_diff(j) as f64).powf(self.alpha)
    }
}

/// Diagonal of the ZZ part, one entry per basis label.
pub fn zz_diagonal(p: &IsingParams) -> Vec<f64> {
    let n = p.n_qubits;
    let mut couplings = Vec::new();
    for i in 0..n {
        for j in 0..i {
            couplings.push((i, j, p.coupling(i, j)));
        }
    }
    (0..1usize << n)
        .map(|l| {
            couplings
                .iter()
                .map(|&(i, j, c)| {
                    let aligned = ((l >> i) ^ (l >> j)) & 1 == 0;
                    if aligned {
                        c
                    } else {
                        -c
                    }
                })
                .sum()
        })
        .collect()
}

pub fn build_hamiltonian(p: &IsingParams) -> Result<DMatrix<f64>> {
    build_hamiltonian_capped(p, DEFAULT_DENSE_QUBIT_CAP)
}

pub fn build_hamiltonian_capped(p: &IsingParams, max_qubits: usize) -> Result<DMatrix<f64>> {
    p.validate()?;
    if p.n_qubits > max_qubits {
        return Err(Error::Resource(format!(
            "dense Hamiltonian for {} qubits exceeds the {max_qubits}-qubit cap",
            p.n_qubits
        )));
    }
    let dim = 1usize << p.n_qubits;
    let diag = zz_diagonal(p);
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (l, &e) in diag.iter().enumerate() {
        h[(l, l)] = e;
        if p.g != 0.0 {
            for q in 0..p.n_qubits {
                h[(l, l ^ (1 << q))] += p.g;
            }
        }
    }
    Ok(h)
}

/// Eigendecomposition `H = V Λ Vᵀ`, reusable for any evolution time.
#[derive(Clone, Debug)]
pub struct IsingSpectrum {
    n_qubits: usize,
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl IsingSpectrum {
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        let dim = h.nrows();
        if dim != h.ncols() || dim < 2 || !dim.is_power_of_two() {
            return Err(Error::invalid(format!("Hamiltonian must be 2^N × 2^N, got {}×{}", h.nrows(), h.ncols())));
        }
        let asym = (h - h.transpose()).amax();
        if asym > 1e-12 * h.amax().max(1.0) {
            return Err(Error::invalid(format!("Hamiltonian is not symmetric (max asymmetry {asym:e})")));
        }
        let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0).ok_or_else(|| {
            Error::Numerical(format!(
                "symmetric eigendecomposition of a {dim}×{dim} matrix did not converge (max |H| = {:e})",
                h.amax()
            ))
        })?;
        let recon = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
        let resid = (recon - h).amax();
        if !(resid < 1e-8 * h.amax().max(1.0)) {
            return Err(Error::Numerical(format!(
                "eigendecomposition residual {resid:e} too large for a {dim}×{dim} Hamiltonian"
            )));
        }
        Ok(Self {
            n_qubits: dim.trailing_zeros() as usize,
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn energies(&self) -> &[f64] {
        self.energies.as_slice()
    }

    /// `U(t) = V e^{-iΛt} Vᵀ`.
    pub fn propagator(&self, t: f64) -> Result<Propagator> {
        let dim = self.energies.len();
        let v = &self.vectors;
        let (c, s): (Vec<f64>, Vec<f64>) = self.energies.iter().map(|&e| ((e * t).cos(), -(e * t).sin())).unzip();
        // Real and imaginary parts as V diag(·) Vᵀ products.
        let mut vc = v.clone();
        let mut vs = v.clone();
        for k in 0..dim {
            vc.column_mut(k).scale_mut(c[k]);
            vs.column_mut(k).scale_mut(s[k]);
        }
        let vt = v.transpose();
        let re = vc * &vt;
        let im = vs * &vt;
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for col in 0..dim {
                data.push(Complex64::new(re[(r, col)], im[(r, col)]));
            }
        }
        Ok(Propagator {
            unitary: DenseUnitary::new_unchecked(self.n_qubits, data)?,
        })
    }
}

/// `e^{-iHt}` as a dense unitary.
#[derive(Clone, Debug)]
pub struct Propagator {
    unitary: DenseUnitary,
}

impl Propagator {
    pub fn from_params(p: &IsingParams) -> Result<Self> {
        let h = build_hamiltonian(p)?;
        IsingSpectrum::new(&h)?.propagator(p.t)
    }

    pub fn n_qubits(&self) -> usize {
        self.unitary.n_qubits()
    }

    pub fn unitary(&self) -> &DenseUnitary {
        &self.unitary
    }
}

/// `propagator(H, t)`.
pub fn propagator(h: &DMatrix<f64>, t: f64) -> Result<Propagator> {
    IsingSpectrum::new(h)?.propagator(t)
}

/// QDRF distribution: Hadamard layer, then per layer the Z-phase encoding
/// followed by `U`, then a final Hadamard layer.
pub fn qdrf_features(x: &[f64], params: &EncodingParams, u: &Propagator) -> Result<Vec<f64>> {
    let n = params.n_qubits();
    if u.n_qubits() != n {
        return Err(Error::dim("propagator qubits", n, u.n_qubits()));
    }
    let angles = params.layer_angles(x)?;
    let dim = 1usize << n;
    let mut state = StateVector::uniform(n)?;
    let mut phases = vec![0.0; dim];
    for block in angles.chunks_exact(n) {
        signed_sums_into(block, &mut phases);
        state.apply_phases(&phases)?;
        state.apply_unitary(u.unitary())?;
    }
    state.fwht();
    Ok(state.probabilities())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::accumulated_phases;
    use crate::permutation::PermutationSpec;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.kronecker(b)
    }

    /// Kronecker-product oracle. Little-endian labels put qubit 0 in the
    /// rightmost factor.
    fn op_on(n: usize, ops: &[(usize, &DMatrix<f64>)]) -> DMatrix<f64> {
        let id = DMatrix::<f64>::identity(2, 2);
        let mut m = DMatrix::<f64>::identity(1, 1);
        for q in (0..n).rev() {
            let f = ops.iter().find(|(k, _)| *k == q).map(|(_, o)| *o).unwrap_or(&id);
            m = kron(&m, f);
        }
        m
    }

    fn oracle_hamiltonian(p: &IsingParams) -> DMatrix<f64> {
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let n = p.n_qubits;
        let dim = 1 << n;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            for j in 0..i {
                h += op_on(n, &[(i, &z), (j, &z)]) * p.coupling(i, j);
            }
            h += op_on(n, &[(i, &x)]) * p.g;
        }
        h
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = seeded(seed, 42);
        let mut amps: Vec<Complex64> = (0..1 << n)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        StateVector::from_amplitudes(amps).unwrap()
    }

    #[test]
    fn two_qubit_hamiltonian() {
        let p = IsingParams {
            n_qubits: 2,
            j: 1.0,
            g: 0.7,
            alpha: 2.3,
            t: 1.0,
        };
        let h = build_hamiltonian(&p).unwrap();
        assert_eq!([h[(0, 0)], h[(1, 1)], h[(2, 2)], h[(3, 3)]], [1.0, -1.0, -1.0, 1.0]);
        assert_eq!(h[(0, 1)], 0.7);
        assert_eq!(h[(0, 2)], 0.7);
        assert_eq!(h[(0, 3)], 0.0);
        assert!((h - oracle_hamiltonian(&p)).amax() < 1e-15);
    }

    #[test]
    fn three_qubit_hamiltonian_matches_oracle() {
        let p = IsingParams::with_defaults(3);
        assert_abs_diff_eq!(p.coupling(0, 2), 0.353_553_390_593_273_8, epsilon = 1e-12);
        let h = build_hamiltonian(&p).unwrap();
        assert!((&h - oracle_hamiltonian(&p)).amax() < 1e-14);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn zero_field_is_diagonal() {
        let mut p = IsingParams::with_defaults(4);
        p.g = 0.0;
        let h = build_hamiltonian(&p).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                if r != c {
                    assert_eq!(h[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn size_cap() {
        let p = IsingParams::with_defaults(5);
        assert!(matches!(build_hamiltonian_capped(&p, 4), Err(Error::Resource(_))));
        let mut bad = IsingParams::with_defaults(3);
        bad.alpha = 0.0;
        assert!(build_hamiltonian(&bad).is_err());
    }

    #[test]
    fn propagator_identities() {
        let p = IsingParams::with_defaults(4);
        let spec = IsingSpectrum::new(&build_hamiltonian(&p).unwrap()).unwrap();
        let u0 = spec.propagator(0.0).unwrap();
        assert!(u0
            .unitary()
            .data()
            .iter()
            .enumerate()
            .all(|(k, z)| (z - if k % 17 == 0 { 1.0 } else { 0.0 }).norm() < 1e-12));

        let u = spec.propagator(3.5).unwrap();
        assert!(u.unitary().unitarity_error() < 1e-10);
        let back = spec.propagator(-3.5).unwrap();
        let prod = u.unitary().matmul(back.unitary()).unwrap();
        let dev = prod
            .data()
            .iter()
            .enumerate()
            .map(|(k, z)| (z - if k % 17 == 0 { 1.0 } else { 0.0 }).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10);
    }

    #[test]
    fn small_time_taylor() {
        let p = IsingParams::with_defaults(2);
        let h = build_hamiltonian(&p).unwrap();
        let t = 1e-4;
        let u = propagator(&h, t).unwrap();
        let mut resid: f64 = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                let want = Complex64::new(if r == c { 1.0 } else { 0.0 }, -h[(r, c)] * t);
                resid = resid.max((u.unitary().get(r, c) - want).norm());
            }
        }
        assert!(resid < 1e-6, "{resid}");
    }

    #[test]
    fn energy_is_conserved() {
        let p = IsingParams::with_defaults(5);
        let h = build_hamiltonian(&p).unwrap();
        let u = propagator(&h, 2.0).unwrap();
        let energy = |s: &StateVector| {
            let a = s.amplitudes();
            let mut e = Complex64::new(0.0, 0.0);
            for r in 0..a.len() {
                for c in 0..a.len() {
                    e += a[r].conj() * h[(r, c)] * a[c];
                }
            }
            e.re
        };
        let mut s = random_state(5, 1);
        let before = energy(&s);
        s.apply_unitary(u.unitary()).unwrap();
        assert!((energy(&s) - before).abs() < 1e-9);
    }

    #[test]
    fn qdrf_trivial_and_normalized() {
        let mut p = IsingParams::with_defaults(3);
        p.t = 0.0;
        let u = Propagator::from_params(&p).unwrap();
        let enc = EncodingParams::draw_with_beta(4, 3, 1, 0.5, 0.0, 2).unwrap();
        let f = qdrf_features(&[0.0; 4], &enc, &u).unwrap();
        assert_abs_diff_eq!(f[0], 1.0, epsilon = 1e-12);

        let u = Propagator::from_params(&IsingParams::with_defaults(4)).unwrap();
        let enc = EncodingParams::draw(6, 4, 5, 0.9, 3).unwrap();
        let f = qdrf_features(&[0.2, 0.4, 0.1, 0.9, 0.0, 0.3], &enc, &u).unwrap();
        assert_abs_diff_eq!(f.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        assert!(f.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_field_reduces_to_phase_only_model() {
        // g = 0: U = diag(e^{-i E_l t}), so each layer adds -E_l t to the
        // identity-permutation QRF phases.
        let mut p = IsingParams::with_defaults(4);
        p.g = 0.0;
        p.t = 0.8;
        let u = Propagator::from_params(&p).unwrap();
        let layers = 3;
        let enc = EncodingParams::draw(5, 4, layers, 1.0, 11).unwrap();
        let x = [0.3, 0.1, 0.8, 0.5, 0.9];
        let mut phases = accumulated_phases(&x, &enc, &PermutationSpec::identity(4).unwrap()).unwrap();
        for (ph, e) in phases.iter_mut().zip(zz_diagonal(&p)) {
            *ph -= layers as f64 * e * p.t;
        }
        let mut s = StateVector::from_phases(&phases).unwrap();
        s.fwht();
        let want = s.probabilities();
        let got = qdrf_features(&x, &enc, &u).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
