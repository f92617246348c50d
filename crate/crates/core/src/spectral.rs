//! Statistics of the effective frequency matrix `V = BW`.
//!
//! `B` is the ±1 matrix `[P^L Σ | P^{L-1} Σ | ... | P Σ]` that maps stacked
//! layer angles to basis-state phases. Row correlations of `V` are measured
//! by `γ_V = √Var⟨V_i, V_j⟩ / E⟨V_i, V_i⟩` and compared with the Bernoulli
//! closed form `σ² √(1/d + 1/(NL) + 1/(dNL))`.

use std::fmt;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::encoding::{dot, qubit_sign_table, sign};
use crate::error::{Error, Result};
use crate::permutation::{dim_of, PermutationKind, PermutationSpec};
use crate::rng::{derive_seed, seeded, stream};

/// Dense-B qubit limit.
pub const DEFAULT_DENSE_B_QUBIT_CAP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BSource {
    Permutation,
    Bernoulli,
    SingleQubitPermutation,
}

impl BSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            BSource::Permutation => "permutation",
            BSource::Bernoulli => "bernoulli",
            BSource::SingleQubitPermutation => "single_qubit_permutation",
        }
    }
}

impl fmt::Display for BSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutation" => Ok(BSource::Permutation),
            "bernoulli" => Ok(BSource::Bernoulli),
            "single_qubit_permutation" | "single_qubit" => Ok(BSource::SingleQubitPermutation),
            other => Err(Error::invalid(format!("unknown B source `{other}`"))),
        }
    }
}

/// Dense `2^N × (N·L)` sign matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BMatrix {
    n_qubits: usize,
    layers: usize,
    source: BSource,
    entries: Vec<i8>,
}

impl BMatrix {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
    pub fn layers(&self) -> usize {
        self.layers
    }
    pub fn source(&self) -> BSource {
        self.source
    }
    pub fn rows(&self) -> usize {
        1 << self.n_qubits
    }
    pub fn cols(&self) -> usize {
        self.n_qubits * self.layers
    }
    pub fn entries(&self) -> &[i8] {
        &self.entries
    }
    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.cols() + col]
    }
    pub fn row(&self, r: usize) -> &[i8] {
        &self.entries[r * self.cols()..(r + 1) * self.cols()]
    }

    /// `B · v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return Err(Error::dim("B·v", self.cols(), v.len()));
        }
        Ok((0..self.rows())
            .map(|r| self.row(r).iter().zip(v).map(|(&b, &x)| b as f64 * x).sum())
            .collect())
    }
}

/// Assembles `B` for a fixed permutation by repeatedly permuting the rows
/// of the sign table. Column block `k` (0-based) carries `P^{L-k}`.
pub fn build_b(perm: &PermutationSpec, layers: usize) -> Result<BMatrix> {
    build_b_capped(perm, layers, DEFAULT_DENSE_B_QUBIT_CAP)
}

pub fn build_b_capped(perm: &PermutationSpec, layers: usize, max_qubits: usize) -> Result<BMatrix> {
    if layers == 0 {
        return Err(Error::invalid("layer count must be at least 1"));
    }
    let n = perm.n_qubits();
    if n > max_qubits {
        return Err(Error::Resource(format!("dense B for {n} qubits exceeds the {max_qubits}-qubit cap")));
    }
    let dim = perm.dim();
    let cols = n * layers;
    let table = qubit_sign_table(n)?;
    let mut entries = vec![0i8; dim * cols];
    // `cur` holds P^k Σ as a row map: row r of P^k Σ is sign row `cur[r]`.
    let mut cur: Vec<usize> = (0..dim).collect();
    let mut next = vec![0usize; dim];
    for power in 1..=layers {
        perm.scatter(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        let block = layers - power;
        for r in 0..dim {
            let src = &table[cur[r] * n..(cur[r] + 1) * n];
            entries[r * cols + block * n..r * cols + (block + 1) * n].copy_from_slice(src);
        }
    }
    let source = match perm.kind() {
        PermutationKind::General => BSource::Permutation,
        PermutationKind::SingleQubitOnly => BSource::SingleQubitPermutation,
    };
    Ok(BMatrix {
        n_qubits: n,
        layers,
        source,
        entries,
    })
}

/// I.i.d. fair ±1 entries.
pub fn draw_bernoulli_b(n_qubits: usize, layers: usize, seed: u64) -> Result<BMatrix> {
    let dim = dim_of(n_qubits)?;
    if layers == 0 {
        return Err(Error::invalid("layer count must be at least 1"));
    }
    if n_qubits > DEFAULT_DENSE_B_QUBIT_CAP {
        return Err(Error::Resource(format!(
            "dense B for {n_qubits} qubits exceeds the {DEFAULT_DENSE_B_QUBIT_CAP}-qubit cap"
        )));
    }
    let mut rng = seeded(seed, stream::BERNOULLI);
    let entries = (0..dim * n_qubits * layers)
        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
        .collect();
    Ok(BMatrix {
        n_qubits,
        layers,
        source: BSource::Bernoulli,
        entries,
    })
}

/// σ²-scaled closed form `σ² √(1/d + 1/(NL) + 1/(dNL))`. It equals
/// `σ²` times [`gamma_v_ratio_theory`], the quantity the empirical ratio
/// `√Var⟨V_i, V_j⟩ / E⟨V_i, V_i⟩` converges to.
pub fn gamma_v_theory(sigma: f64, d: usize, n_qubits: usize, layers: usize) -> f64 {
    let d = d as f64;
    let nl = (n_qubits * layers) as f64;
    sigma * sigma * (1.0 / d + 1.0 / nl + 1.0 / (d * nl)).sqrt()
}

/// `σ²/√d`, the `N·L → ∞` limit of [`gamma_v_theory`].
pub fn gamma_v_asymptote(sigma: f64, d: usize) -> f64 {
    sigma * sigma / (d as f64).sqrt()
}

/// `√(1/d + 1/(NL) + 1/(dNL))`: `√(cross_variance_theory) / (dσ²)`, which
/// does not depend on `σ`.
pub fn gamma_v_ratio_theory(d: usize, n_qubits: usize, layers: usize) -> f64 {
    gamma_v_theory(1.0, d, n_qubits, layers)
}

/// `1/√d`, the `N·L → ∞` limit of [`gamma_v_ratio_theory`].
pub fn gamma_v_ratio_asymptote(d: usize) -> f64 {
    gamma_v_asymptote(1.0, d)
}

/// `Var⟨V_i, V_{j≠i}⟩ = dσ⁴(1 + 1/(NL) + d/(NL))` for Bernoulli `B`.
pub fn cross_variance_theory(sigma: f64, d: usize, n_qubits: usize, layers: usize) -> f64 {
    let df = d as f64;
    let nl = (n_qubits * layers) as f64;
    df * sigma.powi(4) * (1.0 + 1.0 / nl + df / nl)
}

/// Where each trial's `B` comes from.
#[derive(Clone, Debug)]
pub enum BEnsemble {
    /// The same matrix in every trial.
    Fixed(BMatrix),
    /// A fresh draw per trial (new permutation, mask or Bernoulli signs).
    /// Only the rows a statistic needs are generated.
    Redraw(BSource),
}

impl BEnsemble {
    pub fn source(&self) -> BSource {
        match self {
            BEnsemble::Fixed(b) => b.source(),
            BEnsemble::Redraw(s) => *s,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GammaConfig {
    pub n_qubits: usize,
    pub layers: usize,
    pub d: usize,
    pub sigma: f64,
    pub trials: usize,
    /// Explicit `(i, j)` pairs; `None` draws `n_pairs` uniform pairs with `i ≠ j`.
    pub pairs: Option<Vec<(usize, usize)>>,
    pub n_pairs: usize,
    pub seed: u64,
}

impl GammaConfig {
    pub fn new(n_qubits: usize, layers: usize, d: usize, sigma: f64, trials: usize, seed: u64) -> Self {
        Self {
            n_qubits,
            layers,
            d,
            sigma,
            trials,
            pairs: None,
            n_pairs: 100,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GammaReport {
    pub source: BSource,
    pub n_qubits: usize,
    pub layers: usize,
    pub d: usize,
    pub sigma: f64,
    pub trials: usize,
    pub gamma_empirical: f64,
    /// Standard error of `gamma_empirical` from 20 batches of trials.
    pub gamma_std_error: f64,
    /// [`gamma_v_ratio_theory`], directly comparable to `gamma_empirical`.
    pub gamma_theory: f64,
    /// [`gamma_v_ratio_asymptote`].
    pub asymptote: f64,
    /// `σ²`-scaled forms: [`gamma_v_theory`] and [`gamma_v_asymptote`].
    pub gamma_theory_scaled: f64,
    pub asymptote_scaled: f64,
    /// Estimated `E⟨V_i, V_i⟩`.
    pub self_similarity: f64,
    pub cross_mean: f64,
    /// Estimated `Var⟨V_i, V_{j≠i}⟩`.
    pub cross_variance: f64,
    pub pair_sample: Vec<(usize, usize)>,
}

const SE_BATCHES: usize = 20;

/// Per-trial sampler for the rows of `B` that a statistic touches.
struct RowSampler<'a> {
    ensemble: &'a BEnsemble,
    n: usize,
    layers: usize,
}

impl RowSampler<'_> {
    /// Writes rows `rows` of this trial's `B` into `out` (`rows.len() × NL`,
    /// as `f64`).
    fn fill(&self, rows: &[usize], trial_seed: u64, out: &mut [f64]) -> Result<()> {
        let n = self.n;
        let cols = n * self.layers;
        match self.ensemble {
            BEnsemble::Fixed(b) => {
                for (k, &r) in rows.iter().enumerate() {
                    for (o, &v) in out[k * cols..(k + 1) * cols].iter_mut().zip(b.row(r)) {
                        *o = v as f64;
                    }
                }
            }
            BEnsemble::Redraw(BSource::Bernoulli) => {
                let mut rng = seeded(trial_seed, stream::BERNOULLI);
                for o in out[..rows.len() * cols].iter_mut() {
                    *o = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                }
            }
            BEnsemble::Redraw(src) => {
                let kind = if *src == BSource::Permutation {
                    PermutationKind::General
                } else {
                    PermutationKind::SingleQubitOnly
                };
                let inv = PermutationSpec::draw(n, kind, trial_seed)?.inverse();
                // Row r of P^k Σ is sign row π^{-k}(r); block L-k carries P^k.
                for (k, &r) in rows.iter().enumerate() {
                    let row = &mut out[k * cols..(k + 1) * cols];
                    let mut src_row = r;
                    for power in 1..=self.layers {
                        src_row = inv.apply_index(src_row);
                        let block = self.layers - power;
                        for q in 0..n {
                            row[block * n + q] = sign(src_row, q);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

struct TrialStats {
    cross_sum: f64,
    cross_sq: f64,
    cross_n: usize,
    self_sum: f64,
    self_n: usize,
}

fn check_ensemble(ensemble: &BEnsemble, n: usize, layers: usize) -> Result<()> {
    if let BEnsemble::Fixed(b) = ensemble {
        if b.n_qubits() != n || b.layers() != layers {
            return Err(Error::invalid(format!(
                "fixed B is {}×{} but the statistic asks for N={n}, L={layers}",
                b.rows(),
                b.cols()
            )));
        }
    }
    dim_of(n)?;
    if layers == 0 {
        return Err(Error::invalid("layer count must be at least 1"));
    }
    Ok(())
}

/// Draws `W ~ N(0, σ²/(NL))` with shape `NL × d` and returns `rows(B) · W`.
fn v_rows(sampler: &RowSampler, rows: &[usize], d: usize, sigma: f64, trial_seed: u64, b_buf: &mut [f64]) -> Result<Vec<f64>> {
    let nl = sampler.n * sampler.layers;
    sampler.fill(rows, trial_seed, b_buf)?;
    let std = sigma / (nl as f64).sqrt();
    let mut rng = seeded(trial_seed, stream::SPECTRAL);
    let w: Vec<f64> = (0..nl * d).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    let r = rows.len();
    let mut v = vec![0.0; r * d];
    // SAFETY: b_buf is r × nl, w is nl × d, v is r × d, all row-major and
    // non-overlapping.
    unsafe {
        matrixmultiply::dgemm(
            r,
            nl,
            d,
            1.0,
            b_buf.as_ptr(),
            nl as isize,
            1,
            w.as_ptr(),
            d as isize,
            1,
            0.0,
            v.as_mut_ptr(),
            d as isize,
            1,
        );
    }
    Ok(v)
}

pub fn sample_pairs(n_qubits: usize, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let dim = dim_of(n_qubits)?;
    let mut rng = seeded(seed, stream::PAIRS);
    Ok((0..count)
        .map(|_| {
            let i = rng.gen_range(0..dim);
            let mut j = rng.gen_range(0..dim - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect())
}

/// Monte-Carlo estimate of `γ_V` over `cfg.trials` independent `W` (and,
/// for redrawn ensembles, independent `B`) with a fixed pair sample.
pub fn gamma_v_empirical(ensemble: &BEnsemble, cfg: &GammaConfig) -> Result<GammaReport> {
    let (n, layers, d) = (cfg.n_qubits, cfg.layers, cfg.d);
    check_ensemble(ensemble, n, layers)?;
    if cfg.trials < 100 {
        return Err(Error::invalid(format!("at least 100 trials required, got {}", cfg.trials)));
    }
    if d == 0 || !(cfg.sigma > 0.0) {
        return Err(Error::invalid("d and sigma must be positive"));
    }
    let dim = 1usize << n;
    let pairs = match &cfg.pairs {
        Some(p) => p.clone(),
        None => sample_pairs(n, cfg.n_pairs, cfg.seed)?,
    };
    if pairs.is_empty() {
        return Err(Error::invalid("pair list is empty"));
    }
    if pairs.iter().any(|&(i, j)| i >= dim || j >= dim) {
        return Err(Error::invalid(format!("pair index out of range for {dim} rows")));
    }
    let cross_pairs: Vec<(usize, usize)> = pairs.iter().copied().filter(|(i, j)| i != j).collect();
    if cross_pairs.is_empty() {
        return Err(Error::invalid("pair list has no pair with i != j"));
    }

    let mut rows: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    rows.sort_unstable();
    rows.dedup();
    let slot = |r: usize| rows.binary_search(&r).expect("row present");
    let slot_pairs: Vec<(usize, usize)> = cross_pairs.iter().map(|&(i, j)| (slot(i), slot(j))).collect();

    let sampler = RowSampler { ensemble, n, layers };
    let nl = n * layers;
    let per_trial: Vec<TrialStats> = (0..cfg.trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; rows.len() * nl],
            |b_buf, t| -> Result<TrialStats> {
                let trial_seed = derive_seed(cfg.seed, t as u64);
                let v = v_rows(&sampler, &rows, d, cfg.sigma, trial_seed, b_buf)?;
                let row = |k: usize| &v[k * d..(k + 1) * d];
                let mut s = TrialStats {
                    cross_sum: 0.0,
                    cross_sq: 0.0,
                    cross_n: 0,
                    self_sum: 0.0,
                    self_n: 0,
                };
                for &(a, b) in &slot_pairs {
                    let c = dot(row(a), row(b));
                    s.cross_sum += c;
                    s.cross_sq += c * c;
                    s.cross_n += 1;
                }
                for k in 0..rows.len() {
                    s.self_sum += dot(row(k), row(k));
                    s.self_n += 1;
                }
                Ok(s)
            },
        )
        .collect::<Result<_>>()?;

    let summarize = |stats: &[TrialStats]| {
        let (mut cs, mut cq, mut cn, mut ss, mut sn) = (0.0, 0.0, 0usize, 0.0, 0usize);
        for s in stats {
            cs += s.cross_sum;
            cq += s.cross_sq;
            cn += s.cross_n;
            ss += s.self_sum;
            sn += s.self_n;
        }
        let mean = cs / cn as f64;
        let var = (cq - cn as f64 * mean * mean) / (cn as f64 - 1.0).max(1.0);
        let self_mean = ss / sn as f64;
        (mean, var, self_mean, var.max(0.0).sqrt() / self_mean)
    };
    let (cross_mean, cross_variance, self_similarity, gamma) = summarize(&per_trial);
    let batch = cfg.trials / SE_BATCHES;
    let batch_gammas: Vec<f64> = per_trial.chunks(batch).take(SE_BATCHES).map(|c| summarize(c).3).collect();
    let bm = batch_gammas.iter().sum::<f64>() / batch_gammas.len() as f64;
    let bvar = batch_gammas.iter().map(|g| (g - bm).powi(2)).sum::<f64>() / (batch_gammas.len() - 1) as f64;
    let se = (bvar / batch_gammas.len() as f64).sqrt();

    Ok(GammaReport {
        source: ensemble.source(),
        n_qubits: n,
        layers,
        d,
        sigma: cfg.sigma,
        trials: cfg.trials,
        gamma_empirical: gamma,
        gamma_std_error: se,
        gamma_theory: gamma_v_ratio_theory(d, n, layers),
        asymptote: gamma_v_ratio_asymptote(d),
        gamma_theory_scaled: gamma_v_theory(cfg.sigma, d, n, layers),
        asymptote_scaled: gamma_v_asymptote(cfg.sigma, d),
        self_similarity,
        cross_mean,
        cross_variance,
        pair_sample: pairs,
    })
}

/// Pooled moments of the entries of `V = BW`.
#[derive(Clone, Debug)]
pub struct MomentSummary {
    pub pool: usize,
    pub sigma: f64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
    pub skewness_ok: bool,
    pub kurtosis_ok: bool,
}

impl MomentSummary {
    pub fn all_ok(&self) -> bool {
        self.mean_ok && self.variance_ok && self.skewness_ok && self.kurtosis_ok
    }
}

/// Pools every entry of every `V` row over `trials` and checks it against
/// `N(0, σ²)`: `|mean| < 3σ/√pool`, relative variance error `< 0.05`,
/// `|skew| < 0.1`, `|excess kurtosis| < 0.2`. The thresholds assume a pool
/// of at least 10^6 entries.
pub fn gaussianity_report(
    ensemble: &BEnsemble,
    n_qubits: usize,
    layers: usize,
    d: usize,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<MomentSummary> {
    check_ensemble(ensemble, n_qubits, layers)?;
    if trials == 0 || d == 0 || !(sigma > 0.0) {
        return Err(Error::invalid("trials, d and sigma must be positive"));
    }
    let rows: Vec<usize> = (0..1usize << n_qubits).collect();
    let sampler = RowSampler {
        ensemble,
        n: n_qubits,
        layers,
    };
    let nl = n_qubits * layers;
    let sums: Vec<[f64; 4]> = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; rows.len() * nl],
            |b_buf, t| -> Result<[f64; 4]> {
                let v = v_rows(&sampler, &rows, d, sigma, derive_seed(seed, t as u64), b_buf)?;
                let mut s = [0.0; 4];
                for &x in &v {
                    let x2 = x * x;
                    s[0] += x;
                    s[1] += x2;
                    s[2] += x2 * x;
                    s[3] += x2 * x2;
                }
                Ok(s)
            },
        )
        .collect::<Result<_>>()?;
    let mut tot = [0.0; 4];
    for s in &sums {
        for k in 0..4 {
            tot[k] += s[k];
        }
    }
    let pool = trials * rows.len() * d;
    let nf = pool as f64;
    let m1 = tot[0] / nf;
    let r2 = tot[1] / nf;
    let r3 = tot[2] / nf;
    let r4 = tot[3] / nf;
    let var = r2 - m1 * m1;
    let mu3 = r3 - 3.0 * m1 * r2 + 2.0 * m1.powi(3);
    let mu4 = r4 - 4.0 * m1 * r3 + 6.0 * m1 * m1 * r2 - 3.0 * m1.powi(4);
    let skew = mu3 / var.powf(1.5);
    let kurt = mu4 / (var * var) - 3.0;
    let s2 = sigma * sigma;
    Ok(MomentSummary {
        pool,
        sigma,
        mean: m1,
        variance: var,
        skewness: skew,
        excess_kurtosis: kurt,
        mean_ok: m1.abs() < 3.0 * sigma / nf.sqrt(),
        variance_ok: ((var - s2) / s2).abs() < 0.05,
        skewness_ok: skew.abs() < 0.1,
        kurtosis_ok: kurt.abs() < 0.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{accumulated_phases, EncodingParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_single_layer_is_sign_table() {
        let id = PermutationSpec::identity(3).unwrap();
        let b = build_b(&id, 1).unwrap();
        let s = qubit_sign_table(3).unwrap();
        assert_eq!(b.entries(), &s[..]);
    }

    #[test]
    fn cyclic_shift_two_layers_by_hand() {
        // π(l) = l + 1 mod 4 on N = 2. P^k moves row r to r + k, so row r of
        // P^k Σ is sign row r - k.
        let perm = PermutationSpec::new(2, vec![1, 2, 3, 0], PermutationKind::General).unwrap();
        let b = build_b(&perm, 2).unwrap();
        let s = |l: usize| [sign(l, 0) as i8, sign(l, 1) as i8];
        for r in 0..4 {
            let p2 = s((r + 4 - 2) % 4);
            let p1 = s((r + 4 - 1) % 4);
            assert_eq!(b.row(r), &[p2[0], p2[1], p1[0], p1[1]]);
        }
    }

    #[test]
    fn blocks_are_balanced() {
        let perm = PermutationSpec::draw(4, PermutationKind::General, 3).unwrap();
        let b = build_b(&perm, 5).unwrap();
        for c in 0..b.cols() {
            assert_eq!((0..b.rows()).map(|r| b.get(r, c) as i32).sum::<i32>(), 0);
        }
    }

    #[test]
    fn b_agrees_with_accumulated_phases() {
        let perm = PermutationSpec::draw(4, PermutationKind::General, 8).unwrap();
        let p = EncodingParams::draw(6, 4, 3, 1.0, 2).unwrap();
        let x = [0.1, 0.5, 0.9, 0.3, 0.7, 0.2];
        let b = build_b(&perm, 3).unwrap();
        let want = b.apply(&p.layer_angles(&x).unwrap()).unwrap();
        let got = accumulated_phases(&x, &p, &perm).unwrap();
        for (a, c) in want.iter().zip(&got) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_cap() {
        let perm = PermutationSpec::identity(11).unwrap();
        assert!(matches!(build_b(&perm, 1), Err(Error::Resource(_))));
    }

    #[test]
    fn bernoulli_entries() {
        let b = draw_bernoulli_b(10, 98, 4).unwrap();
        assert!(b.entries().iter().all(|&v| v == 1 || v == -1));
        let n = b.entries().len() as f64;
        assert!(n >= 1e6);
        let mean = b.entries().iter().map(|&v| v as f64).sum::<f64>() / n;
        assert!(mean.abs() < 0.003, "{mean}");
        assert_eq!(b, draw_bernoulli_b(10, 98, 4).unwrap());
    }

    #[test]
    fn theory_values() {
        assert_abs_diff_eq!(gamma_v_theory(1.0, 1, 1, 1), 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(gamma_v_asymptote(0.1, 784), 3.571_428_571_428_571e-4, epsilon = 1e-15);
        assert!((gamma_v_theory(0.1, 784, 1_000_000, 1_000) - gamma_v_asymptote(0.1, 784)).abs() < 1e-8);
        let s = 0.7598;
        for d in 1..20 {
            for nl in 1..20 {
                assert!(gamma_v_theory(s, d, nl, 1) < 1.0);
            }
        }
        assert!(gamma_v_theory(0.76, 1, 1, 1) > 1.0);
    }

    #[test]
    fn degenerate_pairs_rejected() {
        let mut cfg = GammaConfig::new(3, 2, 10, 0.5, 100, 1);
        cfg.pairs = Some(vec![(1, 1), (2, 2)]);
        assert!(gamma_v_empirical(&BEnsemble::Redraw(BSource::Bernoulli), &cfg).is_err());
        cfg.pairs = Some(vec![]);
        assert!(gamma_v_empirical(&BEnsemble::Redraw(BSource::Bernoulli), &cfg).is_err());
        let cfg = GammaConfig::new(3, 2, 10, 0.5, 10, 1);
        assert!(gamma_v_empirical(&BEnsemble::Redraw(BSource::Bernoulli), &cfg).is_err());
    }

    #[test]
    fn redraw_rows_match_dense_b() {
        // The on-the-fly permutation rows must equal the dense assembly for
        // the same trial seed.
        let (n, layers, seed) = (4, 3, 77);
        let perm = PermutationSpec::draw(n, PermutationKind::General, seed).unwrap();
        let dense = build_b(&perm, layers).unwrap();
        let ens = BEnsemble::Redraw(BSource::Permutation);
        let sampler = RowSampler { ensemble: &ens, n, layers };
        let rows: Vec<usize> = (0..16).collect();
        let mut buf = vec![0.0; 16 * n * layers];
        sampler.fill(&rows, seed, &mut buf).unwrap();
        for r in 0..16 {
            for c in 0..n * layers {
                assert_eq!(buf[r * n * layers + c], dense.get(r, c) as f64);
            }
        }
    }

    #[test]
    fn small_bernoulli_gamma_is_close_to_theory() {
        let cfg = GammaConfig::new(4, 5, 50, 0.3, 2000, 5);
        let r = gamma_v_empirical(&BEnsemble::Redraw(BSource::Bernoulli), &cfg).unwrap();
        assert!((r.gamma_empirical / r.gamma_theory - 1.0).abs() < 0.1, "{r:?}");
        assert!((r.self_similarity / (50.0 * 0.09) - 1.0).abs() < 0.05);
        assert!((r.cross_variance / cross_variance_theory(0.3, 50, 4, 5) - 1.0).abs() < 0.1);
        assert_abs_diff_eq!(r.gamma_theory_scaled, 0.09 * r.gamma_theory, epsilon = 1e-15);
    }

    #[test]
    fn single_layer_single_qubit_is_gaussian() {
        let m = gaussianity_report(&BEnsemble::Redraw(BSource::Permutation), 1, 1, 1000, 0.5, 1000, 3).unwrap();
        assert!(m.pool >= 1_000_000);
        assert!(m.all_ok(), "{m:?}");
    }
}
