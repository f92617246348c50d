//! Linear softmax classifier trained with cross-entropy and AdaGrad.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::FeatureSource;
use crate::rng::{seeded, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Floor inside the AdaGrad denominator.
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            shuffle: true,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epoch count must be at least 1"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon must be non-negative"));
        }
        Ok(())
    }
}

/// Weights `c × N_f` (row-major), bias `c`, and their AdaGrad accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    n_classes: usize,
    n_features: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    accum_weights: Vec<f64>,
    accum_bias: Vec<f64>,
    lr: f64,
    epsilon: f64,
}

impl ClassifierParams {
    pub fn zeros(n_classes: usize, n_features: usize, lr: f64, epsilon: f64) -> Self {
        Self {
            n_classes,
            n_features,
            weights: vec![0.0; n_classes * n_features],
            bias: vec![0.0; n_classes],
            accum_weights: vec![0.0; n_classes * n_features],
            accum_bias: vec![0.0; n_classes],
            lr,
            epsilon,
        }
    }

    pub fn from_parts(n_classes: usize, n_features: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != n_classes * n_features {
            return Err(Error::dim("classifier weights", n_classes * n_features, weights.len()));
        }
        if bias.len() != n_classes {
            return Err(Error::dim("classifier bias", n_classes, bias.len()));
        }
        let mut p = Self::zeros(n_classes, n_features, TrainConfig::default().lr, TrainConfig::default().epsilon);
        p.weights = weights;
        p.bias = bias;
        Ok(p)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
    pub fn n_features(&self) -> usize {
        self.n_features
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
    pub fn accum_weights(&self) -> &[f64] {
        &self.accum_weights
    }
    pub fn accum_bias(&self) -> &[f64] {
        &self.accum_bias
    }

    pub fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, row), &b) in out.iter_mut().zip(self.weights.chunks_exact(self.n_features)).zip(&self.bias) {
            *o = crate::encoding::dot(row, x) + b;
        }
    }

    /// Top-1 class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut logits = vec![0.0; self.n_classes];
        self.logits_into(x, &mut logits);
        argmax(&logits)
    }

    /// One AdaGrad step with gradients shaped like the parameters.
    pub fn adagrad_step(&mut self, grad_w: &[f64], grad_b: &[f64]) {
        let (lr, eps) = (self.lr, self.epsilon);
        let update = |theta: &mut [f64], acc: &mut [f64], g: &[f64]| {
            for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(g) {
                *a += g * g;
                *t -= lr * g / (a.sqrt() + eps);
            }
        };
        update(&mut self.weights, &mut self.accum_weights, grad_w);
        update(&mut self.bias, &mut self.accum_bias, grad_b);
    }

    /// Text checkpoint:
    ///
    /// ```text
    /// qrflab-classifier v1
    /// classes <c>
    /// features <N_f>
    /// lr <lr>
    /// epsilon <eps>
    /// weights            # c·N_f values, row-major, one per line
    /// bias               # c values
    /// accum_weights      # c·N_f values
    /// accum_bias         # c values
    /// ```
    ///
    /// Values use shortest round-trip float formatting, so a reload is
    /// bit-identical.
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CHECKPOINT_HEADER}").unwrap();
        writeln!(s, "classes {}", self.n_classes).unwrap();
        writeln!(s, "features {}", self.n_features).unwrap();
        writeln!(s, "lr {}", self.lr).unwrap();
        writeln!(s, "epsilon {}", self.epsilon).unwrap();
        for (name, vals) in [
            ("weights", &self.weights),
            ("bias", &self.bias),
            ("accum_weights", &self.accum_weights),
            ("accum_bias", &self.accum_bias),
        ] {
            writeln!(s, "{name}").unwrap();
            for v in vals.iter() {
                writeln!(s, "{v}").unwrap();
            }
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let err = |line: usize, message: String| Error::Config { line, message };
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("unexpected end of checkpoint, wanted {what}")));
        let (ln, header) = next("header")?;
        if header != CHECKPOINT_HEADER {
            return Err(err(ln, format!("expected `{CHECKPOINT_HEADER}`")));
        }
        let mut field = |name: &str| -> Result<(usize, String)> {
            let (ln, l) = next(name)?;
            match l.split_once(' ') {
                Some((k, v)) if k == name => Ok((ln, v.to_string())),
                _ => Err(err(ln, format!("expected `{name} <value>`"))),
            }
        };
        let (ln, c) = field("classes")?;
        let c: usize = c.parse().map_err(|e| err(ln, format!("{e}")))?;
        let (ln, f) = field("features")?;
        let f: usize = f.parse().map_err(|e| err(ln, format!("{e}")))?;
        let (ln, lr) = field("lr")?;
        let lr: f64 = lr.parse().map_err(|e| err(ln, format!("{e}")))?;
        let (ln, eps) = field("epsilon")?;
        let epsilon: f64 = eps.parse().map_err(|e| err(ln, format!("{e}")))?;
        let mut p = Self::zeros(c, f, lr, epsilon);
        for (name, len) in [("weights", c * f), ("bias", c), ("accum_weights", c * f), ("accum_bias", c)] {
            let (ln, l) = next(name)?;
            if l != name {
                return Err(err(ln, format!("expected section `{name}`")));
            }
            let mut vals = Vec::with_capacity(len);
            for _ in 0..len {
                let (ln, v) = next(name)?;
                vals.push(v.parse::<f64>().map_err(|e| err(ln, format!("{e}")))?);
            }
            match name {
                "weights" => p.weights = vals,
                "bias" => p.bias = vals,
                "accum_weights" => p.accum_weights = vals,
                _ => p.accum_bias = vals,
            }
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

const CHECKPOINT_HEADER: &str = "qrflab-classifier v1";

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `(-log softmax(logits)[target], softmax(logits) - onehot(target))`,
/// computed after subtracting the max logit.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; logits.len()];
    let loss = softmax_cross_entropy_into(logits, target, &mut grad)?;
    Ok((loss, grad))
}

pub fn softmax_cross_entropy_into(logits: &[f64], target: usize, grad: &mut [f64]) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::invalid(format!("target class {target} out of range for {} logits", logits.len())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite logits {logits:?}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (g, &l) in grad.iter_mut().zip(logits) {
        *g = (l - max).exp();
        z += *g;
    }
    for g in grad.iter_mut() {
        *g /= z;
    }
    grad[target] -= 1.0;
    Ok(z.ln() - (logits[target] - max))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean per-sample loss over each epoch, as seen during the epoch.
    pub epoch_loss: Vec<f64>,
}

/// Mini-batch AdaGrad from zero weights. Batch gradients are means over the
/// batch; the last partial batch of an epoch is kept.
pub fn train(
    features: &dyn FeatureSource,
    labels: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<(ClassifierParams, TrainHistory)> {
    cfg.validate()?;
    let n = features.n_rows();
    let f = features.n_cols();
    if labels.len() != n {
        return Err(Error::dim("training labels", n, labels.len()));
    }
    if n == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if n_classes == 0 {
        return Err(Error::invalid("class count must be at least 1"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {n_classes} classes")));
    }

    let c = n_classes;
    let mut params = ClassifierParams::zeros(c, f, cfg.lr, cfg.epsilon);
    let mut rng = seeded(cfg.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let bs_max = cfg.batch_size.min(n);
    let mut xb = vec![0.0; bs_max * f];
    let mut logits = vec![0.0; bs_max * c];
    let mut delta = vec![0.0; bs_max * c];
    let mut grad_w = vec![0.0; c * f];
    let mut grad_b = vec![0.0; c];
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let bs = batch.len();
            for (slot, &row) in batch.iter().enumerate() {
                features.read_row(row, &mut xb[slot * f..(slot + 1) * f])?;
            }
            let labels_b: Vec<usize> = batch.iter().map(|&r| labels[r]).collect();
            let batch_loss = forward_backward(
                &params,
                &xb[..bs * f],
                &labels_b,
                &mut logits,
                &mut delta,
                &mut grad_w,
                &mut grad_b,
            )
            .map_err(|e| Error::Numerical(format!("epoch {epoch}, batch {batch_idx}: {e}")))?;
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {batch_loss} at epoch {epoch}, batch {batch_idx}"
                )));
            }
            epoch_loss += batch_loss * bs as f64;
            params.adagrad_step(&grad_w, &grad_b);
        }
        history.epoch_loss.push(epoch_loss / n as f64);
    }
    Ok((params, history))
}

/// Mean loss over one gathered batch `xb` (`bs × f`, row-major) and the
/// batch-mean gradients with respect to weights and bias.
fn forward_backward(
    params: &ClassifierParams,
    xb: &[f64],
    labels: &[usize],
    logits: &mut [f64],
    delta: &mut [f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Result<f64> {
    let (c, f) = (params.n_classes, params.n_features);
    let bs = labels.len();
    for chunk in logits[..bs * c].chunks_exact_mut(c) {
        chunk.copy_from_slice(&params.bias);
    }
    // logits (bs × c) += X_b (bs × f) · Wᵀ (f × c)
    // SAFETY: every pointer covers the extent implied by its dimensions
    // and strides; `logits` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            bs,
            f,
            c,
            1.0,
            xb.as_ptr(),
            f as isize,
            1,
            params.weights.as_ptr(),
            1,
            f as isize,
            1.0,
            logits.as_mut_ptr(),
            c as isize,
            1,
        );
    }
    let mut loss = 0.0;
    for (slot, &y) in labels.iter().enumerate() {
        loss += softmax_cross_entropy_into(&logits[slot * c..(slot + 1) * c], y, &mut delta[slot * c..(slot + 1) * c])?;
    }
    let inv = 1.0 / bs as f64;
    // grad_w (c × f) = δᵀ (c × bs) · X_b (bs × f) / bs
    // SAFETY: as above; `grad_w` does not alias `delta` or `xb`.
    unsafe {
        matrixmultiply::dgemm(
            c,
            bs,
            f,
            inv,
            delta.as_ptr(),
            1,
            c as isize,
            xb.as_ptr(),
            f as isize,
            1,
            0.0,
            grad_w.as_mut_ptr(),
            f as isize,
            1,
        );
    }
    grad_b.fill(0.0);
    for d in delta[..bs * c].chunks_exact(c) {
        grad_b.iter_mut().zip(d).for_each(|(g, v)| *g += v);
    }
    grad_b.iter_mut().for_each(|g| *g *= inv);
    Ok(loss * inv)
}

/// Mean loss over all rows of `x` and its exact gradients, using the same
/// kernel as one training step.
pub fn loss_and_gradients(
    params: &ClassifierParams,
    x: &crate::features::FeatureMatrix,
    labels: &[usize],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (c, f) = (params.n_classes, params.n_features);
    if x.cols() != f {
        return Err(Error::dim("gradient features", f, x.cols()));
    }
    if labels.len() != x.rows() {
        return Err(Error::dim("gradient labels", x.rows(), labels.len()));
    }
    let bs = labels.len();
    let mut logits = vec![0.0; bs * c];
    let mut delta = vec![0.0; bs * c];
    let mut gw = vec![0.0; c * f];
    let mut gb = vec![0.0; c];
    let loss = forward_backward(params, x.data(), labels, &mut logits, &mut delta, &mut gw, &mut gb)?;
    Ok((loss, gw, gb))
}

/// Top-1 accuracy; argmax ties resolve to the lowest class index.
pub fn evaluate(params: &ClassifierParams, features: &dyn FeatureSource, labels: &[usize]) -> Result<f64> {
    let n = features.n_rows();
    if labels.len() != n {
        return Err(Error::dim("evaluation labels", n, labels.len()));
    }
    if features.n_cols() != params.n_features {
        return Err(Error::dim("evaluation features", params.n_features, features.n_cols()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut row = vec![0.0; params.n_features];
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        features.read_row(i, &mut row)?;
        if params.predict(&row) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// Mean cross-entropy of `params` over a whole data set.
pub fn mean_loss(params: &ClassifierParams, features: &dyn FeatureSource, labels: &[usize]) -> Result<f64> {
    let n = features.n_rows();
    let mut row = vec![0.0; params.n_features];
    let mut logits = vec![0.0; params.n_classes];
    let mut grad = vec![0.0; params.n_classes];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate().take(n) {
        features.read_row(i, &mut row)?;
        params.logits_into(&row, &mut logits);
        total += softmax_cross_entropy_into(&logits, y, &mut grad)?;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn uniform_logits_loss() {
        let (loss, grad) = softmax_cross_entropy(&[0.3; 10], 4).unwrap();
        assert_abs_diff_eq!(loss, 10f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(grad[4], 0.1 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grad.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn extreme_logits_are_stable() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, -1000.0], 0).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = softmax_cross_entropy(&[1000.0, -1000.0], 1).unwrap();
        assert_abs_diff_eq!(loss, 2000.0, epsilon = 1e-9);
        assert!(matches!(softmax_cross_entropy(&[f64::NAN, 0.0], 0), Err(Error::Numerical(_))));
        assert!(softmax_cross_entropy(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seeded(3, 0);
        for _ in 0..20 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let target = rng.gen_range(0..6);
            let (_, grad) = softmax_cross_entropy(&logits, target).unwrap();
            let h = 1e-5;
            for k in 0..6 {
                let mut up = logits.clone();
                up[k] += h;
                let mut dn = logits.clone();
                dn[k] -= h;
                let fd = (softmax_cross_entropy(&up, target).unwrap().0
                    - softmax_cross_entropy(&dn, target).unwrap().0)
                    / (2.0 * h);
                let rel = (fd - grad[k]).abs() / grad[k].abs().max(1e-3);
                assert!(rel < 1e-5, "k={k} fd={fd} analytic={}", grad[k]);
            }
        }
    }

    fn toy_separable(n: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = seeded(seed, 0);
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % 2;
            let cx = if y == 0 { -1.0 } else { 1.0 };
            data.push(cx + rng.gen_range(-0.5..0.5));
            data.push(rng.gen_range(-1.0..1.0));
            labels.push(y);
        }
        (FeatureMatrix::new(n, 2, data).unwrap(), labels)
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let (x, y) = toy_separable(200, 1);
        let cfg = TrainConfig::default();
        let (params, history) = train(&x, &y, 2, &cfg).unwrap();
        assert_eq!(evaluate(&params, &x, &y).unwrap(), 1.0);
        assert!(history.epoch_loss.windows(2).all(|w| w[1] <= w[0]), "{:?}", history.epoch_loss);
        let (again, _) = train(&x, &y, 2, &cfg).unwrap();
        assert_eq!(params, again);
    }

    #[test]
    fn accumulators_nondecreasing_and_steps_shrink() {
        let (x, y) = toy_separable(64, 2);
        let mut cfg = TrainConfig::default();
        cfg.epochs = 1;
        let (p1, _) = train(&x, &y, 2, &cfg).unwrap();
        cfg.epochs = 2;
        let (p2, _) = train(&x, &y, 2, &cfg).unwrap();
        for (a, b) in p1.accum_weights().iter().zip(p2.accum_weights()) {
            assert!(b >= a);
        }
        for (a, b) in p1.accum_bias().iter().zip(p2.accum_bias()) {
            assert!(b >= a);
        }
    }

    #[test]
    fn zero_features_predict_majority() {
        let x = FeatureMatrix::zeros(10, 3);
        let y = vec![2, 2, 2, 1, 0, 2, 1, 2, 0, 2];
        let (params, _) = train(&x, &y, 3, &TrainConfig::default()).unwrap();
        assert_abs_diff_eq!(evaluate(&params, &x, &y).unwrap(), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn memorizing_params_and_single_sample() {
        let mut data = vec![0.0; 100];
        for i in 0..10 {
            data[i * 10 + i] = 1.0;
        }
        let x = FeatureMatrix::new(10, 10, data.clone()).unwrap();
        let labels: Vec<usize> = (0..10).collect();
        let p = ClassifierParams::from_parts(10, 10, data, vec![0.0; 10]).unwrap();
        assert_eq!(evaluate(&p, &x, &labels).unwrap(), 1.0);

        let one = FeatureMatrix::new(1, 10, vec![0.0; 10]).unwrap();
        let acc = evaluate(&p, &one, &[3]).unwrap();
        assert!(acc == 0.0 || acc == 1.0);
        // All-zero row ties every logit: lowest class wins.
        assert_eq!(evaluate(&p, &one, &[0]).unwrap(), 1.0);
    }

    #[test]
    fn untrained_model_is_chance_level() {
        let n = 10_000;
        let mut rng = seeded(8, 0);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..10)).collect();
        let x = FeatureMatrix::zeros(n, 4);
        let p = ClassifierParams::zeros(10, 4, 0.05, 1e-8);
        let acc = evaluate(&p, &x, &labels).unwrap();
        assert!((acc - 0.1).abs() < 0.01, "{acc}");
    }

    #[test]
    fn argmax_shift_invariant() {
        let v = [0.1, 2.0, -1.0, 2.0];
        assert_eq!(argmax(&v), 1);
        let shifted: Vec<f64> = v.iter().map(|x| x + 17.5).collect();
        assert_eq!(argmax(&shifted), 1);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (x, y) = toy_separable(40, 5);
        let mut cfg = TrainConfig::default();
        cfg.epochs = 3;
        let (p, _) = train(&x, &y, 2, &cfg).unwrap();
        let back = ClassifierParams::from_checkpoint(&p.to_checkpoint()).unwrap();
        assert_eq!(back, p);
        assert!(ClassifierParams::from_checkpoint("nope").is_err());
    }

    #[test]
    fn rejects_bad_labels_and_config() {
        let x = FeatureMatrix::zeros(3, 2);
        assert!(train(&x, &[0, 1, 5], 3, &TrainConfig::default()).is_err());
        assert!(train(&x, &[0, 1], 3, &TrainConfig::default()).is_err());
        let cfg = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&x, &[0, 1, 2], 3, &cfg).is_err());
    }
}
