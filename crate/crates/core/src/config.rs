//! Experiment configuration files.
//!
//! ```text
//! # comment
//! [run]
//! seed = 7
//!
//! [data]
//! dataset = fashion-mnist
//! train_size = 20000
//! test_size = 4000
//!
//! [train]
//! lr = 0.05
//!
//! [experiment qrf-grid]
//! model = qrf
//! n_qubits = 10
//! layers = 10, 20, 30
//! inv_sigma = 5, 10
//! ```
//!
//! Sections are `run`, `data`, `train`, any number of `experiment <label>`,
//! `shots` and `spectral`. Comma lists in an experiment expand to the
//! cartesian product of their values. Integers accept a `2^k` form. Unknown
//! sections and keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ising::IsingParams;
use crate::readout::TrainConfig;
use crate::spectral::BSource;

#[derive(Clone, Debug, PartialEq)]
pub struct RawSection {
    pub name: String,
    pub label: Option<String>,
    pub line: usize,
    pub entries: Vec<RawEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

pub fn parse_sections(text: &str) -> Result<Vec<RawSection>> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(inner) = content.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(line, "section header is missing ']'"))?
                .trim();
            let mut parts = inner.splitn(2, char::is_whitespace);
            let name = parts.next().unwrap_or("").to_string();
            if name.is_empty() {
                return Err(cfg_err(line, "empty section name"));
            }
            let label = parts.next().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            sections.push(RawSection {
                name,
                label,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(cfg_err(line, "empty key"));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| cfg_err(line, "key outside of any section"))?;
        if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
            return Err(cfg_err(line, format!("duplicate key '{key}' (first set on line {})", prev.line)));
        }
        section.entries.push(RawEntry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

/// Typed access to one section; every key must be consumed by [`finish`].
///
/// [`finish`]: SectionReader::finish
struct SectionReader<'a> {
    section: &'a RawSection,
    used: Vec<bool>,
}

impl<'a> SectionReader<'a> {
    fn new(section: &'a RawSection) -> Self {
        Self {
            section,
            used: vec![false; section.entries.len()],
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a RawEntry> {
        let pos = self.section.entries.iter().position(|e| e.key == key)?;
        self.used[pos] = true;
        Some(&self.section.entries[pos])
    }

    fn get<T: ParseValue>(&mut self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => T::parse_value(&e.value)
                .map(Some)
                .map_err(|m| cfg_err(e.line, format!("{key}: {m}"))),
        }
    }

    fn list<T: ParseValue>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => {
                let mut out = Vec::new();
                for item in e.value.split(',') {
                    out.push(T::parse_value(item.trim()).map_err(|m| cfg_err(e.line, format!("{key}: {m}")))?);
                }
                Ok(Some(out))
            }
        }
    }

    fn finish(self) -> Result<()> {
        for (e, used) in self.section.entries.iter().zip(&self.used) {
            if !used {
                return Err(cfg_err(
                    e.line,
                    format!("unknown key '{}' in section [{}]", e.key, self.section.name),
                ));
            }
        }
        Ok(())
    }
}

trait ParseValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
}

impl ParseValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("'{s}' is not finite"))
        }
    }
}

fn parse_u64(s: &str) -> std::result::Result<u64, String> {
    if let Some((base, exp)) = s.split_once('^') {
        let base: u64 = base.trim().parse().map_err(|_| format!("'{s}' is not an integer"))?;
        let exp: u32 = exp.trim().parse().map_err(|_| format!("'{s}' is not an integer"))?;
        return base.checked_pow(exp).ok_or_else(|| format!("'{s}' overflows"));
    }
    s.parse().map_err(|_| format!("'{s}' is not a non-negative integer"))
}

impl ParseValue for u64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        parse_u64(s)
    }
}

impl ParseValue for usize {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        usize::try_from(parse_u64(s)?).map_err(|_| format!("'{s}' is too large"))
    }
}

impl ParseValue for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(format!("'{s}' is not a boolean")),
        }
    }
}

impl ParseValue for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            Err("empty value".into())
        } else {
            Ok(s.to_string())
        }
    }
}

impl ParseValue for ModelKind {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
}

impl ParseValue for BSource {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
}

/// Parses sizes such as `512M`, `8G` or a plain byte count.
pub fn parse_bytes(s: &str) -> Result<u64> {
    let s = s.trim();
    let (num, mult) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let mult = match c.to_ascii_uppercase() {
                'K' => 1u64 << 10,
                'M' => 1 << 20,
                'G' => 1 << 30,
                'T' => 1 << 40,
                _ => return Err(Error::invalid(format!("unknown size suffix in '{s}'"))),
            };
            (&s[..i], mult)
        }
        _ => (s, 1),
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("'{s}' is not a byte size")))?;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("'{s}' is not a byte size")));
    }
    Ok((v * mult as f64) as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Rff,
    Qrf,
    QrfRff,
    Qdrf,
    QrfNonentangling,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Rff => "rff",
            ModelKind::Qrf => "qrf",
            ModelKind::QrfRff => "qrf_rff",
            ModelKind::Qdrf => "qdrf",
            ModelKind::QrfNonentangling => "qrf_nonentangling",
        }
    }

    /// Whether the model is a layered circuit that uses `layers`.
    pub fn is_layered(&self) -> bool {
        matches!(self, ModelKind::Qrf | ModelKind::Qdrf | ModelKind::QrfNonentangling)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rff" => ModelKind::Rff,
            "qrf" => ModelKind::Qrf,
            "qrf_rff" => ModelKind::QrfRff,
            "qdrf" => ModelKind::Qdrf,
            "qrf_nonentangling" => ModelKind::QrfNonentangling,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown model '{s}' (expected rff, qrf, qrf_rff, qdrf or qrf_nonentangling)"
                )))
            }
        })
    }
}

/// Which data to load and how much of it.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    /// `fashion-mnist`, `mnist` or `synthetic`.
    pub dataset: String,
    /// Directory with the four IDX files; `None` uses the default location.
    pub dir: Option<PathBuf>,
    /// `None` keeps every row.
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub stratified: bool,
    /// Input dimension of the synthetic dataset.
    pub synthetic_dim: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            dataset: "fashion-mnist".into(),
            dir: None,
            train_size: None,
            test_size: None,
            stratified: true,
            synthetic_dim: 16,
        }
    }
}

/// Settings shared by every study in a file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    /// Feature matrices larger than this spill to a temporary file.
    pub memory_budget: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            memory_budget: 8 << 30,
        }
    }
}

/// One fully specified accuracy experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub model: ModelKind,
    pub n_qubits: usize,
    /// Layer count for layered models; 0 otherwise.
    pub layers: usize,
    pub inv_sigma: f64,
    /// Feature count for `rff`; `2^N` for the quantum models.
    pub rff_features: usize,
    /// Phase shift bound override; `None` uses `π√(3/NL)`.
    pub beta: Option<f64>,
    pub ising: Option<IsingParams>,
    pub train: TrainConfig,
    pub data: DataSpec,
    pub shots: Option<u64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn sigma(&self) -> f64 {
        1.0 / self.inv_sigma
    }

    pub fn feature_dim(&self) -> usize {
        match self.model {
            ModelKind::Rff => self.rff_features,
            _ => 1 << self.n_qubits,
        }
    }

    /// `N·L/2^N` for layered models.
    pub fn compression_ratio(&self) -> Option<f64> {
        self.model
            .is_layered()
            .then(|| (self.n_qubits * self.layers) as f64 / (1u64 << self.n_qubits) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inv_sigma > 0.0) {
            return Err(Error::invalid(format!("inv_sigma must be positive, got {}", self.inv_sigma)));
        }
        if self.model != ModelKind::Rff && !(1..=30).contains(&self.n_qubits) {
            return Err(Error::invalid(format!("n_qubits must be in 1..=30, got {}", self.n_qubits)));
        }
        if self.model.is_layered() && self.layers == 0 {
            return Err(Error::invalid(format!("model {} needs layers >= 1", self.model)));
        }
        if self.model == ModelKind::Rff && self.rff_features == 0 {
            return Err(Error::invalid("rff needs rff_features >= 1"));
        }
        if self.ising.is_some() != (self.model == ModelKind::Qdrf) {
            return Err(Error::invalid("ising parameters are only valid with model = qdrf"));
        }
        if let Some(p) = &self.ising {
            p.validate()?;
        }
        if self.shots == Some(0) {
            return Err(Error::invalid("shots must be at least 1"));
        }
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotStudyConfig {
    pub model: ModelKind,
    pub n_qubits: Vec<usize>,
    pub layers: usize,
    pub inv_sigma: f64,
    pub shots: Vec<u64>,
    /// Independent parameter draws per `N`.
    pub seeds: usize,
    pub train: TrainConfig,
    pub data: DataSpec,
    pub seed: u64,
}

impl ShotStudyConfig {
    pub fn default_shot_grid() -> Vec<u64> {
        (8..=20).map(|k| 1u64 << k).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralStudyConfig {
    pub sources: Vec<BSource>,
    pub n_qubits: Vec<usize>,
    pub layers: Vec<usize>,
    pub d: usize,
    pub inv_sigma: f64,
    pub trials: usize,
    pub n_pairs: usize,
    pub seed: u64,
}

/// A parsed configuration file.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ConfigFile {
    pub run: RunSettings,
    pub experiments: Vec<ExperimentConfig>,
    pub shots: Option<ShotStudyConfig>,
    pub spectral: Option<SpectralStudyConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Replaces the run seed and every seed derived from it.
    pub fn override_seed(&mut self, seed: u64) {
        self.run.seed = seed;
        for e in &mut self.experiments {
            e.seed = seed;
            e.train.seed = seed;
        }
        if let Some(s) = &mut self.shots {
            s.seed = seed;
            s.train.seed = seed;
        }
        if let Some(s) = &mut self.spectral {
            s.seed = seed;
        }
    }
}

fn read_data(section: Option<&RawSection>) -> Result<DataSpec> {
    let mut d = DataSpec::default();
    let Some(section) = section else { return Ok(d) };
    let mut r = SectionReader::new(section);
    if let Some(v) = r.get::<String>("dataset")? {
        if !["fashion-mnist", "mnist", "synthetic"].contains(&v.as_str()) {
            let line = section.entries.iter().find(|e| e.key == "dataset").map_or(section.line, |e| e.line);
            return Err(cfg_err(line, format!("unknown dataset '{v}'")));
        }
        d.dataset = v;
    }
    d.dir = r.get::<String>("dir")?.map(PathBuf::from);
    d.train_size = r.get::<usize>("train_size")?.filter(|&v| v > 0);
    d.test_size = r.get::<usize>("test_size")?.filter(|&v| v > 0);
    if let Some(v) = r.get("stratified")? {
        d.stratified = v;
    }
    if let Some(v) = r.get("synthetic_dim")? {
        d.synthetic_dim = v;
    }
    r.finish()?;
    Ok(d)
}

fn read_train(section: Option<&RawSection>, seed: u64) -> Result<TrainConfig> {
    let mut t = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let Some(section) = section else { return Ok(t) };
    let mut r = SectionReader::new(section);
    if let Some(v) = r.get("lr")? {
        t.lr = v;
    }
    if let Some(v) = r.get("batch_size")? {
        t.batch_size = v;
    }
    if let Some(v) = r.get("epochs")? {
        t.epochs = v;
    }
    if let Some(v) = r.get("shuffle")? {
        t.shuffle = v;
    }
    if let Some(v) = r.get("epsilon")? {
        t.epsilon = v;
    }
    r.finish()?;
    t.validate().map_err(|e| cfg_err(section.line, e.to_string()))?;
    Ok(t)
}

fn read_experiments(
    section: &RawSection,
    index: usize,
    run: &RunSettings,
    train: &TrainConfig,
    data: &DataSpec,
) -> Result<Vec<ExperimentConfig>> {
    let mut r = SectionReader::new(section);
    let model: ModelKind = r
        .get("model")?
        .ok_or_else(|| cfg_err(section.line, "experiment needs a 'model' key"))?;
    let n_list = r.list::<usize>("n_qubits")?;
    let l_list = r.list::<usize>("layers")?;
    let s_list = r.list::<f64>("inv_sigma")?.unwrap_or_else(|| vec![10.0]);
    let rff_list = r.list::<usize>("rff_features")?;
    let beta = r.get::<f64>("beta")?;
    let shots = r.get::<u64>("shots")?;
    let seed = r.get::<u64>("seed")?.unwrap_or(run.seed);
    let ising_keys = ["ising_j", "ising_g", "ising_alpha", "ising_t"];
    let ising_vals: Vec<Option<f64>> = ising_keys.iter().map(|k| r.get::<f64>(k)).collect::<Result<_>>()?;
    let lr = r.get::<f64>("lr")?;
    let epochs = r.get::<usize>("epochs")?;
    r.finish()?;

    let need = |present: bool, key: &str| -> Result<()> {
        if present {
            Ok(())
        } else {
            Err(cfg_err(section.line, format!("model {model} needs '{key}'")))
        }
    };
    if model != ModelKind::Rff {
        need(n_list.is_some(), "n_qubits")?;
    }
    if model.is_layered() {
        need(l_list.is_some(), "layers")?;
    } else if l_list.is_some() {
        return Err(cfg_err(section.line, format!("model {model} has no layers")));
    }
    if model == ModelKind::Rff {
        need(rff_list.is_some() || n_list.is_some(), "rff_features or n_qubits")?;
    } else if rff_list.is_some() {
        return Err(cfg_err(section.line, "rff_features is only valid with model = rff"));
    }
    if model != ModelKind::Qdrf && ising_vals.iter().any(Option::is_some) {
        return Err(cfg_err(section.line, "ising_* keys are only valid with model = qdrf"));
    }

    let mut train = train.clone();
    train.seed = seed;
    if let Some(v) = lr {
        train.lr = v;
    }
    if let Some(v) = epochs {
        train.epochs = v;
    }
    let label = section.label.clone().unwrap_or_else(|| format!("experiment{index}"));

    // For rff, an n_qubits list sets D = 2^N so rows line up with the
    // quantum models; rff_features takes precedence.
    let n_values = n_list.clone().unwrap_or_else(|| vec![0]);
    let l_values = l_list.unwrap_or_else(|| vec![0]);
    let mut out = Vec::new();
    for &n in &n_values {
        let d_values = match (&rff_list, model) {
            (Some(list), _) => list.clone(),
            (None, ModelKind::Rff) => vec![1usize << n],
            _ => vec![0],
        };
        for &l in &l_values {
            for &s in &s_list {
                for &dd in &d_values {
                    let ising = (model == ModelKind::Qdrf).then(|| {
                        let mut p = IsingParams::with_defaults(n);
                        if let Some(v) = ising_vals[0] {
                            p.j = v;
                        }
                        if let Some(v) = ising_vals[1] {
                            p.g = v;
                        }
                        if let Some(v) = ising_vals[2] {
                            p.alpha = v;
                        }
                        if let Some(v) = ising_vals[3] {
                            p.t = v;
                        }
                        p
                    });
                    let e = ExperimentConfig {
                        label: label.clone(),
                        model,
                        n_qubits: n,
                        layers: l,
                        inv_sigma: s,
                        rff_features: dd,
                        beta,
                        ising,
                        train: train.clone(),
                        data: data.clone(),
                        shots,
                        seed,
                    };
                    e.validate().map_err(|err| cfg_err(section.line, err.to_string()))?;
                    out.push(e);
                }
            }
        }
    }
    Ok(out)
}

fn read_shots(section: &RawSection, run: &RunSettings, train: &TrainConfig, data: &DataSpec) -> Result<ShotStudyConfig> {
    let mut r = SectionReader::new(section);
    let model = r.get::<ModelKind>("model")?.unwrap_or(ModelKind::Qrf);
    let n_qubits = r.list::<usize>("n_qubits")?.unwrap_or_else(|| vec![8]);
    let layers = r.get::<usize>("layers")?.unwrap_or(30);
    let inv_sigma = r.get::<f64>("inv_sigma")?.unwrap_or(10.0);
    let shots = r.list::<u64>("shots")?.unwrap_or_else(ShotStudyConfig::default_shot_grid);
    let seeds = r.get::<usize>("seeds")?.unwrap_or(5);
    let seed = r.get::<u64>("seed")?.unwrap_or(run.seed);
    r.finish()?;
    if !matches!(model, ModelKind::Qrf | ModelKind::QrfNonentangling | ModelKind::QrfRff) {
        return Err(cfg_err(section.line, format!("shot study supports qrf, qrf_nonentangling and qrf_rff, not {model}")));
    }
    if shots.iter().any(|&s| s == 0) || seeds == 0 || !(inv_sigma > 0.0) || layers == 0 {
        return Err(cfg_err(section.line, "shots, seeds, layers and inv_sigma must be positive"));
    }
    if n_qubits.iter().any(|&n| !(1..=20).contains(&n)) {
        return Err(cfg_err(section.line, "shot study n_qubits must be in 1..=20"));
    }
    let mut train = train.clone();
    train.seed = seed;
    Ok(ShotStudyConfig {
        model,
        n_qubits,
        layers,
        inv_sigma,
        shots,
        seeds,
        train,
        data: data.clone(),
        seed,
    })
}

fn read_spectral(section: &RawSection, run: &RunSettings) -> Result<SpectralStudyConfig> {
    let mut r = SectionReader::new(section);
    let sources = r
        .list::<BSource>("sources")?
        .unwrap_or_else(|| vec![BSource::Bernoulli, BSource::Permutation, BSource::SingleQubitPermutation]);
    let n_qubits = r.list::<usize>("n_qubits")?.unwrap_or_else(|| vec![4, 5, 6, 7, 8]);
    let layers = r.list::<usize>("layers")?.unwrap_or_else(|| vec![2, 5, 10, 20, 40]);
    let d = r.get::<usize>("d")?.unwrap_or(784);
    let inv_sigma = r.get::<f64>("inv_sigma")?.unwrap_or(10.0);
    let trials = r.get::<usize>("trials")?.unwrap_or(10_000);
    let n_pairs = r.get::<usize>("pairs")?.unwrap_or(100);
    let seed = r.get::<u64>("seed")?.unwrap_or(run.seed);
    r.finish()?;
    if d == 0 || !(inv_sigma > 0.0) || n_pairs == 0 || trials < 100 {
        return Err(cfg_err(section.line, "d, inv_sigma and pairs must be positive and trials >= 100"));
    }
    if n_qubits.iter().any(|&n| !(1..=20).contains(&n)) || layers.iter().any(|&l| l == 0) {
        return Err(cfg_err(section.line, "n_qubits must be in 1..=20 and layers >= 1"));
    }
    Ok(SpectralStudyConfig {
        sources,
        n_qubits,
        layers,
        d,
        inv_sigma,
        trials,
        n_pairs,
        seed,
    })
}

impl FromStr for ConfigFile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let sections = parse_sections(text)?;
        let mut singles: BTreeMap<&str, &RawSection> = BTreeMap::new();
        for s in &sections {
            match s.name.as_str() {
                "run" | "data" | "train" | "shots" | "spectral" => {
                    if s.label.is_some() {
                        return Err(cfg_err(s.line, format!("section [{}] takes no label", s.name)));
                    }
                    if let Some(prev) = singles.insert(s.name.as_str(), s) {
                        return Err(cfg_err(s.line, format!("section [{}] repeated (first on line {})", s.name, prev.line)));
                    }
                }
                "experiment" => {}
                other => return Err(cfg_err(s.line, format!("unknown section [{other}]"))),
            }
        }

        let mut run = RunSettings::default();
        if let Some(s) = singles.get("run") {
            let mut r = SectionReader::new(s);
            if let Some(v) = r.get("seed")? {
                run.seed = v;
            }
            if let Some(e) = r.raw("memory_budget") {
                run.memory_budget = parse_bytes(&e.value).map_err(|err| cfg_err(e.line, err.to_string()))?;
            }
            r.finish()?;
        }
        let data = read_data(singles.get("data").copied())?;
        let train = read_train(singles.get("train").copied(), run.seed)?;

        let mut experiments = Vec::new();
        for (i, s) in sections.iter().filter(|s| s.name == "experiment").enumerate() {
            experiments.extend(read_experiments(s, i, &run, &train, &data)?);
        }
        let shots = singles.get("shots").map(|s| read_shots(s, &run, &train, &data)).transpose()?;
        let spectral = singles.get("spectral").map(|s| read_spectral(s, &run)).transpose()?;
        Ok(ConfigFile {
            run,
            experiments,
            shots,
            spectral,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# accuracy grid
[run]
seed = 7
memory_budget = 2G

[data]
dataset = synthetic
train_size = 300
test_size = 100

[train]
epochs = 3

[experiment grid]
model = qrf
n_qubits = 4, 5
layers = 2^1, 3
inv_sigma = 5, 10   # two values

[experiment baseline]
model = rff
rff_features = 64
";

    #[test]
    fn parses_and_expands_grid() {
        let cfg: ConfigFile = SAMPLE.parse().unwrap();
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.run.memory_budget, 2 << 30);
        assert_eq!(cfg.experiments.len(), 2 * 2 * 2 + 1);
        let first = &cfg.experiments[0];
        assert_eq!((first.model, first.n_qubits, first.layers, first.inv_sigma), (ModelKind::Qrf, 4, 2, 5.0));
        assert_eq!(first.train.epochs, 3);
        assert_eq!(first.train.seed, 7);
        assert_eq!(first.label, "grid");
        assert_eq!(first.data.train_size, Some(300));
        let last = cfg.experiments.last().unwrap();
        assert_eq!((last.model, last.rff_features, last.feature_dim()), (ModelKind::Rff, 64, 64));
        assert!(last.compression_ratio().is_none());
    }

    #[test]
    fn unknown_keys_and_sections_are_errors() {
        let err = "[run]\nsede = 3\n".parse::<ConfigFile>().unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("sede"));
        assert!("[runn]\n".parse::<ConfigFile>().is_err());
        assert!("seed = 1\n".parse::<ConfigFile>().is_err());
        assert!("[run]\nseed = 1\nseed = 2\n".parse::<ConfigFile>().is_err());
        assert!("[run]\n[run]\n".parse::<ConfigFile>().is_err());
        assert!("[experiment]\nmodel = qrf\nn_qubits = 4\n".parse::<ConfigFile>().is_err());
        assert!("[experiment]\nmodel = qrf\nn_qubits = 4\nlayers = 2\nising_g = 1\n".parse::<ConfigFile>().is_err());
        assert!("[experiment]\nmodel = qrff\n".parse::<ConfigFile>().is_err());
        assert!("[experiment]\nmodel = qrf\nn_qubits = four\nlayers = 2\n".parse::<ConfigFile>().is_err());
        assert!("[data]\ndataset = cifar\n".parse::<ConfigFile>().is_err());
    }

    #[test]
    fn qdrf_defaults_and_overrides() {
        let cfg: ConfigFile = "[experiment q]\nmodel = qdrf\nn_qubits = 6\nlayers = 4\nising_t = 2\n"
            .parse()
            .unwrap();
        let p = cfg.experiments[0].ising.unwrap();
        assert_eq!((p.n_qubits, p.j, p.g, p.alpha, p.t), (6, 1.0, 1.0, 1.5, 2.0));
    }

    #[test]
    fn compression_ratio_of_reference_grid() {
        let cfg: ConfigFile = "[experiment]\nmodel = qrf\nn_qubits = 12\nlayers = 20\n".parse().unwrap();
        let g = cfg.experiments[0].compression_ratio().unwrap();
        assert!((g - 240.0 / 4096.0).abs() < 1e-15);
        assert!((g - 0.0586).abs() < 1e-4);
    }

    #[test]
    fn study_sections() {
        let cfg: ConfigFile = "[run]\nseed = 3\n[shots]\nn_qubits = 8, 10\n[spectral]\nsources = permutation\n"
            .parse()
            .unwrap();
        let s = cfg.shots.unwrap();
        assert_eq!(s.shots.first(), Some(&256));
        assert_eq!(s.shots.last(), Some(&(1 << 20)));
        assert_eq!((s.seeds, s.seed), (5, 3));
        let sp = cfg.spectral.unwrap();
        assert_eq!(sp.sources, vec![BSource::Permutation]);
        assert_eq!(sp.layers, vec![2, 5, 10, 20, 40]);
    }

    #[test]
    fn seed_override_reaches_every_study() {
        let mut cfg: ConfigFile = SAMPLE.parse().unwrap();
        cfg.override_seed(99);
        assert!(cfg.experiments.iter().all(|e| e.seed == 99 && e.train.seed == 99));
    }

    #[test]
    fn byte_sizes() {
        assert_eq!(parse_bytes("512").unwrap(), 512);
        assert_eq!(parse_bytes("1.5K").unwrap(), 1536);
        assert_eq!(parse_bytes("8g").unwrap(), 8 << 30);
        assert!(parse_bytes("8Q").is_err());
        assert!(parse_bytes("-1").is_err());
    }
}
