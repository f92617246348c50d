//! Experiment drivers: accuracy sweeps, the finite-shot study, the spectral
//! study and the built-in self test. Every driver emits CSV rows whose
//! numbers depend only on the configuration and its seeds, except the
//! `wall_time_seconds` column.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{DataSpec, ExperimentConfig, ModelKind, RunSettings, ShotStudyConfig, SpectralStudyConfig};
use crate::data::{load_idx_pair_dir, subset, synthetic_pair, Dataset};
use crate::encoding::{accumulated_phases, qrf_features_fast, qrf_features_reference, EncodingParams, RffLikeParams};
use crate::error::{Error, Result};
use crate::features::{
    extract, extract_to_store, FeatureMap, FeatureMatrix, FeatureSource, QdrfModel, QrfModel, QrfRffModel, RffModel,
};
use crate::ising::{IsingParams, Propagator};
use crate::permutation::{PermutationKind, PermutationSpec};
use crate::readout::{evaluate, loss_and_gradients, train, ClassifierParams, TrainConfig};
use crate::rff::RffParams;
use crate::rng::{derive_seed, seeded, stream};
use crate::spectral::{build_b, cross_variance_theory, gamma_v_empirical, BEnsemble, GammaConfig};
use crate::statevector::{fwht_in_place, sample_shots, EmpiricalDistribution};

/// Bumped whenever a CSV column is added, removed or redefined.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the default dataset directory.
pub const DATA_DIR_ENV: &str = "QRFLAB_DATA_DIR";

pub fn default_data_dir(dataset: &str) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from("data").join(dataset),
    }
}

/// Loads train and test sets and applies the configured subset sizes.
/// Subsets are stratified draws seeded by `seed`.
pub fn load_data(spec: &DataSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    if spec.dataset == "synthetic" {
        return synthetic_pair(
            spec.train_size.unwrap_or(1000),
            spec.test_size.unwrap_or(200),
            spec.synthetic_dim,
            10,
            0.15,
            seed,
        );
    }
    let dir = spec.dir.clone().unwrap_or_else(|| default_data_dir(&spec.dataset));
    let (train, test) = load_idx_pair_dir(&dir, &spec.dataset)?;
    let cut = |ds: Dataset, size: Option<usize>, k: u64| match size {
        Some(n) if n < ds.len() => subset(&ds, n, derive_seed(seed, k), spec.stratified),
        _ => Ok(ds),
    };
    Ok((cut(train, spec.train_size, 0)?, cut(test, spec.test_size, 1)?))
}

/// Draws the parameters of the configured model for inputs of width `d`.
pub fn build_feature_map(cfg: &ExperimentConfig, d: usize) -> Result<Box<dyn FeatureMap>> {
    let sigma = cfg.sigma();
    let encoding = || match cfg.beta {
        Some(beta) => EncodingParams::draw_with_beta(d, cfg.n_qubits, cfg.layers, sigma, beta, cfg.seed),
        None => EncodingParams::draw(d, cfg.n_qubits, cfg.layers, sigma, cfg.seed),
    };
    Ok(match cfg.model {
        ModelKind::Qrf | ModelKind::QrfNonentangling => {
            let kind = if cfg.model == ModelKind::Qrf {
                PermutationKind::General
            } else {
                PermutationKind::SingleQubitOnly
            };
            Box::new(QrfModel {
                params: encoding()?,
                perm: PermutationSpec::draw(cfg.n_qubits, kind, cfg.seed)?,
            })
        }
        ModelKind::QrfRff => Box::new(QrfRffModel {
            params: RffLikeParams::draw(d, cfg.n_qubits, sigma, cfg.seed)?,
        }),
        ModelKind::Qdrf => {
            let ising = cfg.ising.unwrap_or_else(|| IsingParams::with_defaults(cfg.n_qubits));
            Box::new(QdrfModel {
                params: encoding()?,
                propagator: Propagator::from_params(&ising)?,
            })
        }
        ModelKind::Rff => Box::new(RffModel {
            params: RffParams::draw(d, cfg.rff_features, sigma, cfg.seed)?,
        }),
    })
}

/// Replaces every row (a probability vector) by the empirical distribution
/// of `shots` samples. Row `i` uses the seed `derive_seed(seed, i)`.
/// Returns the new matrix and the mean total-variation distance.
pub fn sample_feature_rows(m: &FeatureMatrix, shots: u64, seed: u64) -> Result<(FeatureMatrix, f64)> {
    let mut out = FeatureMatrix::zeros(m.rows(), m.cols());
    if m.rows() == 0 {
        return Ok((out, 0.0));
    }
    let tvs: Vec<f64> = (0..m.rows())
        .into_par_iter()
        .zip(out_rows(&mut out))
        .map(|(i, row)| -> Result<f64> {
            let emp = sample_shots(m.row(i), shots, derive_seed(seed, i as u64))?;
            emp.probabilities_into(row);
            Ok(emp.total_variation(m.row(i)))
        })
        .collect::<Result<_>>()?;
    let tv = tvs.iter().sum::<f64>() / tvs.len() as f64;
    Ok((out, tv))
}

fn out_rows(m: &mut FeatureMatrix) -> rayon::slice::ChunksExactMut<'_, f64> {
    let cols = m.cols();
    m.data_mut().par_chunks_exact_mut(cols)
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// One accuracy experiment, successful or not.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub label: String,
    pub model: ModelKind,
    pub n_qubits: usize,
    pub layers: usize,
    pub inv_sigma: f64,
    pub feature_dim: usize,
    pub compression_ratio: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub shots: Option<u64>,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub spilled_to_disk: bool,
    pub wall_time_seconds: f64,
    pub error: Option<String>,
}

impl ResultRow {
    fn skeleton(cfg: &ExperimentConfig) -> Self {
        Self {
            label: cfg.label.clone(),
            model: cfg.model,
            n_qubits: cfg.n_qubits,
            layers: cfg.layers,
            inv_sigma: cfg.inv_sigma,
            feature_dim: cfg.feature_dim(),
            compression_ratio: cfg.compression_ratio(),
            n_train: 0,
            n_test: 0,
            seed: cfg.seed,
            shots: cfg.shots,
            lr: cfg.train.lr,
            batch_size: cfg.train.batch_size,
            epochs: cfg.train.epochs,
            train_accuracy: None,
            test_accuracy: None,
            final_loss: None,
            spilled_to_disk: false,
            wall_time_seconds: 0.0,
            error: None,
        }
    }
}

pub const SWEEP_HEADER: [&str; 22] = [
    "schema_version",
    "label",
    "model",
    "n_qubits",
    "layers",
    "inv_sigma",
    "sigma",
    "feature_dim",
    "compression_ratio",
    "n_train",
    "n_test",
    "seed",
    "shots",
    "lr",
    "batch_size",
    "epochs",
    "train_accuracy",
    "test_accuracy",
    "final_loss",
    "spilled_to_disk",
    "wall_time_seconds",
    "error",
];

pub fn write_sweep_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    write_csv(
        out,
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                CSV_SCHEMA_VERSION.to_string(),
                r.label.clone(),
                r.model.to_string(),
                r.n_qubits.to_string(),
                r.layers.to_string(),
                r.inv_sigma.to_string(),
                (1.0 / r.inv_sigma).to_string(),
                r.feature_dim.to_string(),
                fmt_opt(r.compression_ratio),
                r.n_train.to_string(),
                r.n_test.to_string(),
                r.seed.to_string(),
                fmt_opt(r.shots),
                r.lr.to_string(),
                r.batch_size.to_string(),
                r.epochs.to_string(),
                fmt_opt(r.train_accuracy),
                fmt_opt(r.test_accuracy),
                fmt_opt(r.final_loss),
                r.spilled_to_disk.to_string(),
                format!("{:.3}", r.wall_time_seconds),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Trains and evaluates one configuration on already loaded data.
pub fn run_experiment(cfg: &ExperimentConfig, train_set: &Dataset, test_set: &Dataset, budget: u64) -> Result<ResultRow> {
    let start = Instant::now();
    cfg.validate()?;
    if train_set.d != test_set.d {
        return Err(Error::dim("test input width", train_set.d, test_set.d));
    }
    let mut row = ResultRow::skeleton(cfg);
    row.n_train = train_set.len();
    row.n_test = test_set.len();

    let map = build_feature_map(cfg, train_set.d)?;
    let tr = extract_to_store(map.as_ref(), &train_set.inputs, train_set.len(), budget)?;
    let te = extract_to_store(map.as_ref(), &test_set.inputs, test_set.len(), budget)?;
    row.spilled_to_disk = tr.is_on_disk() || te.is_on_disk();

    let (params, history) = match cfg.shots {
        None => {
            let (p, h) = train(&tr, &train_set.labels, train_set.n_classes, &cfg.train)?;
            row.train_accuracy = Some(evaluate(&p, &tr, &train_set.labels)?);
            row.test_accuracy = Some(evaluate(&p, &te, &test_set.labels)?);
            (p, h)
        }
        Some(shots) => {
            let base = derive_seed(cfg.seed, u64::from(u32::MAX));
            let (em_tr, _) = sample_feature_rows(&tr.to_matrix()?, shots, derive_seed(base, 0))?;
            let (em_te, _) = sample_feature_rows(&te.to_matrix()?, shots, derive_seed(base, 1))?;
            let (p, h) = train(&em_tr, &train_set.labels, train_set.n_classes, &cfg.train)?;
            row.train_accuracy = Some(evaluate(&p, &em_tr, &train_set.labels)?);
            row.test_accuracy = Some(evaluate(&p, &em_te, &test_set.labels)?);
            (p, h)
        }
    };
    drop(params);
    row.final_loss = history.epoch_loss.last().copied();
    row.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(row)
}

/// Runs every configuration in order. A failing configuration becomes a
/// row with the `error` column set; the sweep continues.
pub fn run_accuracy_sweep(cfgs: &[ExperimentConfig], run: &RunSettings) -> Vec<ResultRow> {
    let mut cache: Vec<(DataSpec, std::result::Result<(Dataset, Dataset), String>)> = Vec::new();
    let mut rows = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        let start = Instant::now();
        if !cache.iter().any(|(spec, _)| spec == &cfg.data) {
            let loaded = load_data(&cfg.data, run.seed).map_err(|e| e.to_string());
            cache.push((cfg.data.clone(), loaded));
        }
        let data = &cache.iter().find(|(spec, _)| spec == &cfg.data).expect("cached").1;
        let result = match data {
            Ok((tr, te)) => run_experiment(cfg, tr, te, run.memory_budget),
            Err(msg) => Err(Error::invalid(format!("data: {msg}"))),
        };
        let row = result.unwrap_or_else(|e| {
            log::warn!("experiment {} ({}) failed: {e}", cfg.label, cfg.model);
            let mut r = ResultRow::skeleton(cfg);
            r.error = Some(format!("{}: {e}", e.class()));
            r.wall_time_seconds = start.elapsed().as_secs_f64();
            r
        });
        log::info!(
            "{} {} N={} L={} 1/sigma={} test_acc={}",
            row.label,
            row.model,
            row.n_qubits,
            row.layers,
            row.inv_sigma,
            fmt_opt(row.test_accuracy)
        );
        rows.push(row);
    }
    rows
}

/// One shot-study measurement. `seed_index = None` marks the mean over
/// seeds for the same `(N, N_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotRow {
    pub n_qubits: usize,
    pub shots: u64,
    pub seed_index: Option<usize>,
    pub acc_th: f64,
    pub acc_em: f64,
    pub abs_diff: f64,
    /// Standard error of `abs_diff` across seeds (mean rows only).
    pub abs_diff_se: Option<f64>,
    pub tv_mean: f64,
    pub wall_time_seconds: f64,
}

impl ShotRow {
    pub fn sqrt_2n_over_ns(&self) -> f64 {
        ((1u64 << self.n_qubits) as f64 / self.shots as f64).sqrt()
    }
    pub fn sqrt_n2_over_ns(&self) -> f64 {
        ((self.n_qubits * self.n_qubits) as f64 / self.shots as f64).sqrt()
    }
}

pub const SHOT_HEADER: [&str; 13] = [
    "schema_version",
    "row_kind",
    "N",
    "N_s",
    "seed_index",
    "acc_TH",
    "acc_EM",
    "abs_diff",
    "abs_diff_se",
    "tv_mean",
    "sqrt_2N_over_Ns",
    "sqrt_N2_over_Ns",
    "wall_time_seconds",
];

pub fn write_shot_csv<W: Write>(out: W, rows: &[ShotRow]) -> Result<()> {
    write_csv(
        out,
        &SHOT_HEADER,
        rows.iter().map(|r| {
            vec![
                CSV_SCHEMA_VERSION.to_string(),
                if r.seed_index.is_some() { "seed" } else { "mean" }.to_string(),
                r.n_qubits.to_string(),
                r.shots.to_string(),
                fmt_opt(r.seed_index),
                r.acc_th.to_string(),
                r.acc_em.to_string(),
                r.abs_diff.to_string(),
                fmt_opt(r.abs_diff_se),
                r.tv_mean.to_string(),
                r.sqrt_2n_over_ns().to_string(),
                r.sqrt_n2_over_ns().to_string(),
                format!("{:.3}", r.wall_time_seconds),
            ]
        }),
    )
}

/// Exact-probability (TH) versus finite-shot (EM) readout accuracy.
///
/// For each `N` and seed index `s`, the model parameters and the training
/// shuffle use `derive_seed(seed, s)`. The TH classifier is trained on exact
/// probabilities; for every `N_s` the EM classifier is trained and tested on
/// empirical distributions, so only the shot sampler differs between the
/// two pipelines. Per-seed rows are followed by one mean row per `(N, N_s)`.
pub fn run_shot_study(cfg: &ShotStudyConfig, budget: u64) -> Result<Vec<ShotRow>> {
    let (train_set, test_set) = load_data(&cfg.data, cfg.seed)?;
    run_shot_study_on(cfg, &train_set, &test_set, budget)
}

pub fn run_shot_study_on(cfg: &ShotStudyConfig, train_set: &Dataset, test_set: &Dataset, budget: u64) -> Result<Vec<ShotRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.n_qubits {
        let mut per_seed: Vec<Vec<ShotRow>> = Vec::new();
        for s in 0..cfg.seeds {
            let seed = derive_seed(cfg.seed, s as u64);
            let exp = ExperimentConfig {
                label: "shots".into(),
                model: cfg.model,
                n_qubits: n,
                layers: if cfg.model.is_layered() { cfg.layers } else { 0 },
                inv_sigma: cfg.inv_sigma,
                rff_features: 0,
                beta: None,
                ising: None,
                train: TrainConfig {
                    seed,
                    ..cfg.train.clone()
                },
                data: cfg.data.clone(),
                shots: None,
                seed,
            };
            let map = build_feature_map(&exp, train_set.d)?;
            let tr = extract_to_store(map.as_ref(), &train_set.inputs, train_set.len(), budget)?.to_matrix()?;
            let te = extract_to_store(map.as_ref(), &test_set.inputs, test_set.len(), budget)?.to_matrix()?;
            let (th, _) = train(&tr, &train_set.labels, train_set.n_classes, &exp.train)?;
            let acc_th = evaluate(&th, &te, &test_set.labels)?;
            log::info!("shots N={n} seed#{s}: acc_TH={acc_th}");

            let mut seed_rows = Vec::with_capacity(cfg.shots.len());
            for (k, &ns) in cfg.shots.iter().enumerate() {
                let start = Instant::now();
                let base = derive_seed(seed, k as u64 + 1);
                let (em_tr, tv_tr) = sample_feature_rows(&tr, ns, derive_seed(base, 0))?;
                let (em_te, tv_te) = sample_feature_rows(&te, ns, derive_seed(base, 1))?;
                let (em, _) = train(&em_tr, &train_set.labels, train_set.n_classes, &exp.train)?;
                let acc_em = evaluate(&em, &em_te, &test_set.labels)?;
                let (a, b) = (train_set.len() as f64, test_set.len() as f64);
                let tv_mean = (tv_tr * a + tv_te * b) / (a + b);
                log::info!("shots N={n} seed#{s} N_s={ns}: acc_EM={acc_em} tv={tv_mean}");
                seed_rows.push(ShotRow {
                    n_qubits: n,
                    shots: ns,
                    seed_index: Some(s),
                    acc_th,
                    acc_em,
                    abs_diff: (acc_th - acc_em).abs(),
                    abs_diff_se: None,
                    tv_mean,
                    wall_time_seconds: start.elapsed().as_secs_f64(),
                });
            }
            per_seed.push(seed_rows);
        }
        for seed_rows in &per_seed {
            rows.extend(seed_rows.iter().cloned());
        }
        for k in 0..cfg.shots.len() {
            let col: Vec<&ShotRow> = per_seed.iter().map(|r| &r[k]).collect();
            let m = col.len() as f64;
            let mean = |f: &dyn Fn(&ShotRow) -> f64| col.iter().map(|r| f(r)).sum::<f64>() / m;
            let diff = mean(&|r| r.abs_diff);
            let se = if col.len() > 1 {
                let var = col.iter().map(|r| (r.abs_diff - diff).powi(2)).sum::<f64>() / (m - 1.0);
                Some((var / m).sqrt())
            } else {
                None
            };
            rows.push(ShotRow {
                n_qubits: n,
                shots: cfg.shots[k],
                seed_index: None,
                acc_th: mean(&|r| r.acc_th),
                acc_em: mean(&|r| r.acc_em),
                abs_diff: diff,
                abs_diff_se: se,
                tv_mean: mean(&|r| r.tv_mean),
                wall_time_seconds: col.iter().map(|r| r.wall_time_seconds).sum(),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct SpectralRow {
    pub report: Option<crate::spectral::GammaReport>,
    pub source: crate::spectral::BSource,
    pub n_qubits: usize,
    pub layers: usize,
    pub d: usize,
    pub sigma: f64,
    pub trials: usize,
    pub wall_time_seconds: f64,
    pub error: Option<String>,
}

pub const SPECTRAL_HEADER: [&str; 18] = [
    "schema_version",
    "source",
    "N",
    "L",
    "d",
    "sigma",
    "trials",
    "gamma_empirical",
    "gamma_std_error",
    "gamma_theory",
    "asymptote",
    "gamma_theory_scaled",
    "asymptote_scaled",
    "self_similarity",
    "cross_variance",
    "cross_variance_theory",
    "wall_time_seconds",
    "error",
];

pub fn write_spectral_csv<W: Write>(out: W, rows: &[SpectralRow]) -> Result<()> {
    write_csv(
        out,
        &SPECTRAL_HEADER,
        rows.iter().map(|r| {
            let rep = r.report.as_ref();
            vec![
                CSV_SCHEMA_VERSION.to_string(),
                r.source.to_string(),
                r.n_qubits.to_string(),
                r.layers.to_string(),
                r.d.to_string(),
                r.sigma.to_string(),
                r.trials.to_string(),
                fmt_opt(rep.map(|g| g.gamma_empirical)),
                fmt_opt(rep.map(|g| g.gamma_std_error)),
                fmt_opt(rep.map(|g| g.gamma_theory)),
                fmt_opt(rep.map(|g| g.asymptote)),
                fmt_opt(rep.map(|g| g.gamma_theory_scaled)),
                fmt_opt(rep.map(|g| g.asymptote_scaled)),
                fmt_opt(rep.map(|g| g.self_similarity)),
                fmt_opt(rep.map(|g| g.cross_variance)),
                cross_variance_theory(r.sigma, r.d, r.n_qubits, r.layers).to_string(),
                format!("{:.3}", r.wall_time_seconds),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// `γ_V` for every `(source, N, L)`, with `B` and `W` redrawn per trial.
pub fn run_spectral_study(cfg: &SpectralStudyConfig) -> Vec<SpectralRow> {
    let sigma = 1.0 / cfg.inv_sigma;
    let mut rows = Vec::new();
    for &source in &cfg.sources {
        for &n in &cfg.n_qubits {
            for &l in &cfg.layers {
                let start = Instant::now();
                let mut g = GammaConfig::new(n, l, cfg.d, sigma, cfg.trials, cfg.seed);
                g.n_pairs = cfg.n_pairs;
                let result = gamma_v_empirical(&BEnsemble::Redraw(source), &g);
                let (report, error) = match result {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(format!("{}: {e}", e.class()))),
                };
                log::info!(
                    "spectral {source} N={n} L={l}: gamma={}",
                    fmt_opt(report.as_ref().map(|r| r.gamma_empirical))
                );
                rows.push(SpectralRow {
                    report,
                    source,
                    n_qubits: n,
                    layers: l,
                    d: cfg.d,
                    sigma,
                    trials: cfg.trials,
                    wall_time_seconds: start.elapsed().as_secs_f64(),
                    error,
                });
            }
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTestRow {
    pub check: &'static str,
    pub value: f64,
    pub threshold: f64,
    /// `true` when passing means `value < threshold`, `false` for `>`.
    pub below: bool,
    pub wall_time_seconds: f64,
}

impl SelfTestRow {
    pub fn passed(&self) -> bool {
        if self.below {
            self.value < self.threshold
        } else {
            self.value > self.threshold
        }
    }
}

pub const SELFTEST_HEADER: [&str; 7] =
    ["schema_version", "check", "value", "comparison", "threshold", "pass", "wall_time_seconds"];

pub fn write_selftest_csv<W: Write>(out: W, rows: &[SelfTestRow]) -> Result<()> {
    write_csv(
        out,
        &SELFTEST_HEADER,
        rows.iter().map(|r| {
            vec![
                CSV_SCHEMA_VERSION.to_string(),
                r.check.to_string(),
                r.value.to_string(),
                if r.below { "<" } else { ">" }.to_string(),
                r.threshold.to_string(),
                r.passed().to_string(),
                format!("{:.3}", r.wall_time_seconds),
            ]
        }),
    )
}

fn timed(check: &'static str, threshold: f64, below: bool, f: impl FnOnce() -> Result<f64>) -> Result<SelfTestRow> {
    let start = Instant::now();
    let value = f()?;
    Ok(SelfTestRow {
        check,
        value,
        threshold,
        below,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// A fast battery of numerical checks plus a miniature end-to-end run on
/// synthetic data. Takes a few seconds and needs no dataset on disk.
pub fn selftest(seed: u64) -> Result<Vec<SelfTestRow>> {
    let mut rows = Vec::new();
    let mut rng = seeded(seed, stream::TEST_DATA);

    rows.push(timed("fwht_vs_dense_hadamard_max_error", 1e-12, true, || {
        let mut worst: f64 = 0.0;
        for n in 1..=6 {
            let dim = 1usize << n;
            let v: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let mut fast = v.clone();
            fwht_in_place(&mut fast);
            let scale = (dim as f64).powf(-0.5);
            for (r, f) in fast.iter().enumerate() {
                let dense: Complex64 = v
                    .iter()
                    .enumerate()
                    .map(|(c, a)| if (r & c).count_ones() % 2 == 0 { *a } else { -*a })
                    .sum::<Complex64>()
                    * scale;
                worst = worst.max((dense - f).norm());
            }
        }
        Ok(worst)
    })?);

    rows.push(timed("qrf_fast_vs_gate_by_gate_max_error", 1e-10, true, || {
        let mut worst: f64 = 0.0;
        for n in 1..=5 {
            for l in [1, 3] {
                let s = derive_seed(seed, (10 * n + l) as u64);
                let params = EncodingParams::draw(6, n, l, 1.0, s)?;
                let perm = PermutationSpec::draw(n, PermutationKind::General, s)?;
                let x: Vec<f64> = (0..6).map(|k| ((k + n) as f64 * 0.71).sin().abs()).collect();
                let a = qrf_features_fast(&x, &params, &perm)?;
                let b = qrf_features_reference(&x, &params, &perm)?;
                worst = a.iter().zip(&b).fold(worst, |w, (p, q)| w.max((p - q).abs()));
            }
        }
        Ok(worst)
    })?);

    rows.push(timed("accumulated_phases_vs_dense_b_max_error", 1e-12, true, || {
        let mut worst: f64 = 0.0;
        for n in 1..=4 {
            for l in 1..=3 {
                let s = derive_seed(seed, (100 + 10 * n + l) as u64);
                let params = EncodingParams::draw(5, n, l, 1.0, s)?;
                let perm = PermutationSpec::draw(n, PermutationKind::General, s)?;
                let x = [0.3, 0.1, 0.9, 0.5, 0.7];
                let fast = accumulated_phases(&x, &params, &perm)?;
                let dense = build_b(&perm, l)?.apply(&params.layer_angles(&x)?)?;
                worst = fast.iter().zip(&dense).fold(worst, |w, (p, q)| w.max((p - q).abs()));
            }
        }
        Ok(worst)
    })?);

    rows.push(timed("ising_propagator_unitarity_error", 1e-10, true, || {
        let u = Propagator::from_params(&IsingParams::with_defaults(5))?;
        Ok(u.unitary().unitarity_error())
    })?);

    rows.push(timed("readout_gradient_relative_error", 1e-5, true, || {
        let (c, f, n) = (3, 4, 6);
        let x = FeatureMatrix::new(n, f, (0..n * f).map(|k| ((k as f64) * 0.37).sin()).collect())?;
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let w: Vec<f64> = (0..c * f).map(|k| ((k as f64) * 0.53).cos() * 0.3).collect();
        let b = vec![0.1, -0.2, 0.05];
        let params = ClassifierParams::from_parts(c, f, w.clone(), b.clone())?;
        let (_, gw, _) = loss_and_gradients(&params, &x, &labels)?;
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..c * f {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += h;
            wm[k] -= h;
            let lp = loss_and_gradients(&ClassifierParams::from_parts(c, f, wp, b.clone())?, &x, &labels)?.0;
            let lm = loss_and_gradients(&ClassifierParams::from_parts(c, f, wm, b.clone())?, &x, &labels)?.0;
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max((fd - gw[k]).abs() / fd.abs().max(gw[k].abs()).max(1e-3));
        }
        Ok(worst)
    })?);

    rows.push(timed("shot_sampling_tv_at_4096_shots", 0.1, true, || {
        let params = EncodingParams::draw(8, 6, 4, 1.0, seed)?;
        let perm = PermutationSpec::draw(6, PermutationKind::General, seed)?;
        let p = qrf_features_fast(&[0.5; 8], &params, &perm)?;
        let emp: EmpiricalDistribution = sample_shots(&p, 4096, seed)?;
        Ok(emp.total_variation(&p))
    })?);

    let (train_set, test_set) = synthetic_pair(600, 200, 8, 10, 0.1, seed)?;
    for (check, model) in [
        ("synthetic_qrf_test_accuracy", ModelKind::Qrf),
        ("synthetic_rff_test_accuracy", ModelKind::Rff),
    ] {
        rows.push(timed(check, 0.5, false, || {
            let cfg = ExperimentConfig {
                label: "selftest".into(),
                model,
                n_qubits: 5,
                layers: if model == ModelKind::Qrf { 4 } else { 0 },
                inv_sigma: 0.5,
                rff_features: 32,
                beta: None,
                ising: None,
                train: TrainConfig {
                    epochs: 20,
                    lr: 0.5,
                    seed,
                    ..TrainConfig::default()
                },
                data: DataSpec {
                    dataset: "synthetic".into(),
                    ..DataSpec::default()
                },
                shots: None,
                seed,
            };
            let map = build_feature_map(&cfg, train_set.d)?;
            let tr = extract(map.as_ref(), &train_set.inputs, train_set.len())?;
            let te = extract(map.as_ref(), &test_set.inputs, test_set.len())?;
            let (p, _) = train(&tr, &train_set.labels, 10, &cfg.train)?;
            evaluate(&p, &te as &dyn FeatureSource, &test_set.labels)
        })?);
    }
    Ok(rows)
}
