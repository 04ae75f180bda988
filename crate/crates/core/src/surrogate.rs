//! Neural surrogate for the log-likelihood.
//!
//! A `[L, h1, h2, 1]` perceptron (ReLU hidden layers, sigmoid output) is
//! trained with binary cross-entropy and Adam on true log-likelihoods that
//! have been min-max scaled into `[0, 1]`. The scaler only ever widens, so a
//! prediction maps back into the range of every target seen so far.
//!
//! Checkpoints are plain text:
//!
//! ```text
//! SAPT-SURR-1
//! topology <L> <h1> <h2> 1
//! scaler <min> <max>            (or `scaler none`)
//! adam <lr> <beta1> <beta2> <eps> <step>
//! trained_intervals <n>
//! params <v0> <v1> ...
//! moment1 <v0> <v1> ...
//! moment2 <v0> <v1> ...
//! ```
//!
//! Vectors are in the layout `W1 (h1 x L) | b1 | W2 (h2 x h1) | b2 | W3 (h2) | b3`.
//! Floats are written with Rust's shortest round-trip formatting, so a
//! checkpoint reloads bit-exactly.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::sigmoid;

pub const CHECKPOINT_HEADER: &str = "SAPT-SURR-1";

/// Where a log-likelihood value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodSource {
    True,
    Surrogate,
}

impl std::fmt::Display for LikelihoodSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LikelihoodSource::True => "true",
            LikelihoodSource::Surrogate => "surrogate",
        })
    }
}

/// Training rows gathered over one surrogate interval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurrogateBatch {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    replica_origin: Vec<usize>,
}

impl SurrogateBatch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one row. Only true likelihood evaluations are admissible.
    pub fn push(&mut self, theta: Vec<f64>, log_lik: f64, source: LikelihoodSource, replica: usize) -> Result<()> {
        if source != LikelihoodSource::True {
            return Err(Error::contract(
                "surrogate training data must come from true likelihood evaluations",
            ));
        }
        if !log_lik.is_finite() {
            return Err(Error::contract(format!("non-finite training target {log_lik}")));
        }
        self.inputs.push(theta);
        self.targets.push(log_lik);
        self.replica_origin.push(replica);
        Ok(())
    }

    pub fn extend(&mut self, other: SurrogateBatch) {
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
        self.replica_origin.extend(other.replica_origin);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn replica_origin(&self) -> &[usize] {
        &self.replica_origin
    }

    pub fn rows_from(&self, replica: usize) -> usize {
        self.replica_origin.iter().filter(|&&r| r == replica).count()
    }
}

/// Append-only min-max scaler for the training targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScaler {
    pub min: f64,
    pub max: f64,
}

impl TargetScaler {
    pub fn scale(&self, x: f64) -> f64 {
        if self.max > self.min {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    pub fn inverse(&self, p: f64) -> f64 {
        self.min + p * (self.max - self.min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOutcome {
    /// RMSE between sigmoid outputs and scaled targets after training.
    pub scaled_rmse: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    input_dim: usize,
    h1: usize,
    h2: usize,
    params: Vec<f64>,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
    adam_step: u64,
    adam: AdamParams,
    scaler: Option<TargetScaler>,
    trained_intervals: usize,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

fn layout(input_dim: usize, h1: usize, h2: usize) -> Layout {
    let w1 = 0;
    let b1 = w1 + h1 * input_dim;
    let w2 = b1 + h1;
    let b2 = w2 + h2 * h1;
    let w3 = b2 + h2;
    let b3 = w3 + h2;
    Layout {
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        len: b3 + 1,
    }
}

/// Per-row activations kept for backprop.
struct Activations {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    out: f64,
}

impl SurrogateModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, h1: usize, h2: usize, adam: AdamParams, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || h1 == 0 || h2 == 0 {
            return Err(Error::config(format!(
                "surrogate topology [{input_dim}, {h1}, {h2}, 1] has an empty layer"
            )));
        }
        let lay = layout(input_dim, h1, h2);
        let mut params = vec![0.0; lay.len];
        let mut glorot = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-limit..limit);
            }
        };
        glorot(lay.w1..lay.b1, input_dim, h1);
        glorot(lay.w2..lay.b2, h1, h2);
        glorot(lay.w3..lay.b3, h2, 1);
        Ok(Self {
            input_dim,
            h1,
            h2,
            moment1: vec![0.0; lay.len],
            moment2: vec![0.0; lay.len],
            params,
            adam_step: 0,
            adam,
            scaler: None,
            trained_intervals: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_sizes(&self) -> (usize, usize) {
        (self.h1, self.h2)
    }

    pub fn scaler(&self) -> Option<TargetScaler> {
        self.scaler
    }

    pub fn adam_step(&self) -> u64 {
        self.adam_step
    }

    pub fn adam_moments(&self) -> (&[f64], &[f64]) {
        (&self.moment1, &self.moment2)
    }

    pub fn trained_intervals(&self) -> usize {
        self.trained_intervals
    }

    pub fn is_trained(&self) -> bool {
        self.trained_intervals > 0 && self.scaler.is_some()
    }

    /// Overwrites every weight and bias with `value`.
    pub fn fill_params(&mut self, value: f64) {
        self.params.iter_mut().for_each(|p| *p = value);
    }

    fn forward(&self, x: &[f64]) -> Activations {
        let lay = layout(self.input_dim, self.h1, self.h2);
        let p = &self.params;
        let mut z1 = p[lay.b1..lay.b1 + self.h1].to_vec();
        for (j, z) in z1.iter_mut().enumerate() {
            let row = &p[lay.w1 + j * self.input_dim..lay.w1 + (j + 1) * self.input_dim];
            *z += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let mut z2 = p[lay.b2..lay.b2 + self.h2].to_vec();
        for (j, z) in z2.iter_mut().enumerate() {
            let row = &p[lay.w2 + j * self.h1..lay.w2 + (j + 1) * self.h1];
            *z += row.iter().zip(&a1).map(|(w, a)| w * a).sum::<f64>();
        }
        let a2: Vec<f64> = z2.iter().map(|&z| z.max(0.0)).collect();
        let z3 = p[lay.b3] + p[lay.w3..lay.b3].iter().zip(&a2).map(|(w, a)| w * a).sum::<f64>();
        Activations {
            z1,
            a1,
            z2,
            a2,
            out: sigmoid(z3),
        }
    }

    /// Sigmoid output in `(0, 1)` before inverse scaling.
    pub fn predict_scaled(&self, theta: &[f64]) -> Result<f64> {
        self.check_input(theta)?;
        Ok(self.forward(theta).out)
    }

    /// Pseudo-likelihood in log-likelihood units.
    pub fn predict(&self, theta: &[f64]) -> Result<f64> {
        let scaler = match self.scaler {
            Some(s) if self.trained_intervals > 0 => s,
            _ => return Err(Error::contract("surrogate queried before it was trained")),
        };
        Ok(scaler.inverse(self.predict_scaled(theta)?))
    }

    fn check_input(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.input_dim {
            return Err(Error::contract(format!(
                "surrogate expects {} inputs, got {}",
                self.input_dim,
                theta.len()
            )));
        }
        Ok(())
    }

    fn update_scaler(&mut self, targets: &[f64]) {
        let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match (&mut self.scaler, lo == hi) {
            (None, _) => {
                if lo == hi {
                    log::warn!("surrogate batch has a single distinct target {lo}; training on a constant");
                }
                self.scaler = Some(TargetScaler { min: lo, max: hi });
            }
            (Some(_), true) => {
                log::warn!("surrogate batch has a single distinct target {lo}; scaler left unchanged");
            }
            (Some(s), false) => {
                s.min = s.min.min(lo);
                s.max = s.max.max(hi);
            }
        }
    }

    /// One incremental training round on `batch`. Adam state and weights
    /// carry over from earlier rounds.
    pub fn train<R: Rng + ?Sized>(&mut self, batch: &SurrogateBatch, config: &TrainConfig, rng: &mut R) -> Result<TrainOutcome> {
        if batch.is_empty() {
            return Err(Error::contract("cannot train the surrogate on an empty batch"));
        }
        for x in batch.inputs() {
            self.check_input(x)?;
        }
        self.update_scaler(batch.targets());
        let scaler = self.scaler.expect("set above");
        let scaled: Vec<f64> = batch.targets().iter().map(|&t| scaler.scale(t)).collect();

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let bs = config.batch_size.max(1);
        let mut grad = vec![0.0; self.params.len()];
        for _ in 0..config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(bs) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in chunk {
                    self.accumulate_gradient(&batch.inputs()[i], scaled[i], &mut grad);
                }
                let n = chunk.len() as f64;
                grad.iter_mut().for_each(|g| *g /= n);
                self.adam_update(&grad);
            }
        }
        self.trained_intervals += 1;

        let sse: f64 = batch
            .inputs()
            .iter()
            .zip(&scaled)
            .map(|(x, y)| (self.forward(x).out - y).powi(2))
            .sum();
        Ok(TrainOutcome {
            scaled_rmse: (sse / batch.len() as f64).sqrt(),
            rows: batch.len(),
        })
    }

    /// Adds d(BCE)/d(params) for one row into `grad`.
    fn accumulate_gradient(&self, x: &[f64], y: f64, grad: &mut [f64]) {
        let lay = layout(self.input_dim, self.h1, self.h2);
        let p = &self.params;
        let act = self.forward(x);
        // sigmoid + cross-entropy: dJ/dz3 = p - y
        let d3 = act.out - y;
        grad[lay.b3] += d3;
        let mut dz2 = vec![0.0; self.h2];
        for j in 0..self.h2 {
            grad[lay.w3 + j] += d3 * act.a2[j];
            if act.z2[j] > 0.0 {
                dz2[j] = d3 * p[lay.w3 + j];
            }
        }
        let mut da1 = vec![0.0; self.h1];
        for (j, &d) in dz2.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[lay.b2 + j] += d;
            let base = lay.w2 + j * self.h1;
            for k in 0..self.h1 {
                grad[base + k] += d * act.a1[k];
                da1[k] += d * p[base + k];
            }
        }
        for j in 0..self.h1 {
            if act.z1[j] <= 0.0 || da1[j] == 0.0 {
                continue;
            }
            let d = da1[j];
            grad[lay.b1 + j] += d;
            let base = lay.w1 + j * self.input_dim;
            for (g, xi) in grad[base..base + self.input_dim].iter_mut().zip(x) {
                *g += d * xi;
            }
        }
    }

    fn adam_update(&mut self, grad: &[f64]) {
        self.adam_step += 1;
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.adam;
        let t = self.adam_step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let moments = self.moment1.iter_mut().zip(self.moment2.iter_mut());
        for ((p, &g), (m, v)) in self.params.iter_mut().zip(grad).zip(moments) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }

    /// Mean binary cross-entropy on `batch` with the current scaler.
    pub fn loss(&self, batch: &SurrogateBatch) -> Result<f64> {
        let scaler = self
            .scaler
            .ok_or_else(|| Error::contract("surrogate has no target scaler yet"))?;
        let mut total = 0.0;
        for (x, &t) in batch.inputs().iter().zip(batch.targets()) {
            self.check_input(x)?;
            let y = scaler.scale(t);
            let p = self.forward(x).out.clamp(1e-15, 1.0 - 1e-15);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        Ok(total / batch.len().max(1) as f64)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_HEADER}");
        let _ = writeln!(out, "topology {} {} {} 1", self.input_dim, self.h1, self.h2);
        match self.scaler {
            Some(s) => {
                let _ = writeln!(out, "scaler {} {}", s.min, s.max);
            }
            None => out.push_str("scaler none\n"),
        }
        let a = self.adam;
        let _ = writeln!(
            out,
            "adam {} {} {} {} {}",
            a.learning_rate, a.beta1, a.beta2, a.epsilon, self.adam_step
        );
        let _ = writeln!(out, "trained_intervals {}", self.trained_intervals);
        for (key, values) in [
            ("params", &self.params),
            ("moment1", &self.moment1),
            ("moment2", &self.moment2),
        ] {
            out.push_str(key);
            for v in values.iter() {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let origin = Path::new("<surrogate checkpoint>");
        let bad = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h.trim() == CHECKPOINT_HEADER => {}
            _ => return Err(bad(1, format!("missing '{CHECKPOINT_HEADER}' header"))),
        }
        let mut field = |key: &str| -> Result<(usize, Vec<&str>)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| bad(0, format!("missing '{key}' line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(n, format!("expected '{key}'")));
            }
            Ok((n, parts.collect()))
        };
        let num = |n: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| bad(n, format!("bad number '{s}'")))
        };
        let int = |n: usize, s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| bad(n, format!("bad integer '{s}'")))
        };

        let (n, topo) = field("topology")?;
        if topo.len() != 4 || topo[3] != "1" {
            return Err(bad(n, "topology must be '<L> <h1> <h2> 1'".into()));
        }
        let (input_dim, h1, h2) = (int(n, topo[0])?, int(n, topo[1])?, int(n, topo[2])?);
        let (n, sc) = field("scaler")?;
        let scaler = match sc.as_slice() {
            ["none"] => None,
            [lo, hi] => Some(TargetScaler {
                min: num(n, lo)?,
                max: num(n, hi)?,
            }),
            _ => return Err(bad(n, "scaler must be 'none' or '<min> <max>'".into())),
        };
        let (n, ad) = field("adam")?;
        if ad.len() != 5 {
            return Err(bad(n, "adam needs 5 values".into()));
        }
        let adam = AdamParams {
            learning_rate: num(n, ad[0])?,
            beta1: num(n, ad[1])?,
            beta2: num(n, ad[2])?,
            epsilon: num(n, ad[3])?,
        };
        let adam_step = ad[4]
            .parse::<u64>()
            .map_err(|_| bad(n, format!("bad step '{}'", ad[4])))?;
        let (n, ti) = field("trained_intervals")?;
        let trained_intervals = int(n, ti.first().copied().unwrap_or(""))?;
        let expected = layout(input_dim, h1, h2).len;
        let mut vector = |key: &str| -> Result<Vec<f64>> {
            let (n, vals) = field(key)?;
            if vals.len() != expected {
                return Err(bad(n, format!("{key} has {} values, expected {expected}", vals.len())));
            }
            vals.iter().map(|v| num(n, v)).collect()
        };
        let params = vector("params")?;
        let moment1 = vector("moment1")?;
        let moment2 = vector("moment2")?;
        Ok(Self {
            input_dim,
            h1,
            h2,
            params,
            moment1,
            moment2,
            adam_step,
            adam,
            scaler,
            trained_intervals,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

/// Ring buffer of the last three log-likelihoods seen by a replica.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLikelihoodBlend {
    history: VecDeque<f64>,
}

impl PseudoLikelihoodBlend {
    pub const WINDOW: usize = 3;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, log_lik: f64) {
        if self.history.len() == Self::WINDOW {
            self.history.pop_front();
        }
        self.history.push_back(log_lik);
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn moving_average(&self) -> Option<f64> {
        if self.history.is_empty() {
            None
        } else {
            Some(self.history.iter().sum::<f64>() / self.history.len() as f64)
        }
    }

    /// `0.5 * surrogate + 0.5 * moving average`.
    pub fn blend(&self, l_surrogate: f64) -> Result<f64> {
        let past = self
            .moving_average()
            .ok_or_else(|| Error::contract("blend needs at least one past log-likelihood"))?;
        Ok(0.5 * l_surrogate + 0.5 * past)
    }
}

/// Root mean squared error between true and pseudo log-likelihoods.
pub fn surrogate_rmse(true_vals: &[f64], pseudo_vals: &[f64]) -> Result<f64> {
    if true_vals.len() != pseudo_vals.len() || true_vals.is_empty() {
        return Err(Error::contract(format!(
            "RMSE needs two equal non-empty vectors, got {} and {}",
            true_vals.len(),
            pseudo_vals.len()
        )));
    }
    let sse: f64 = true_vals
        .iter()
        .zip(pseudo_vals)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / true_vals.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(dim: usize, seed: u64) -> SurrogateModel {
        SurrogateModel::new(dim, 8, 4, AdamParams::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn batch(rows: &[(Vec<f64>, f64)]) -> SurrogateBatch {
        let mut b = SurrogateBatch::new();
        for (x, y) in rows {
            b.push(x.clone(), *y, LikelihoodSource::True, 0).unwrap();
        }
        b
    }

    #[test]
    fn batch_rejects_surrogate_rows() {
        let mut b = SurrogateBatch::new();
        assert!(b.push(vec![0.0], -1.0, LikelihoodSource::Surrogate, 0).is_err());
        assert!(b.push(vec![0.0], f64::NAN, LikelihoodSource::True, 0).is_err());
        assert!(b.is_empty());
    }

    #[test]
    fn untrained_model_refuses_to_predict() {
        let m = model(3, 0);
        assert!(matches!(m.predict(&[0.0; 3]), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_training_reduces_loss() {
        let mut m = model(3, 1);
        let b = batch(&[(vec![0.2, -0.1, 0.4], -12.0), (vec![0.1, 0.3, -0.2], -4.0)]);
        let single = batch(&[(vec![0.2, -0.1, 0.4], -12.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = TrainConfig { epochs: 1, batch_size: 32 };
        m.train(&b, &cfg, &mut rng).unwrap();
        let before = m.loss(&single).unwrap();
        m.train(&single, &cfg, &mut rng).unwrap();
        let after = m.loss(&single).unwrap();
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn constant_target_predicts_the_constant() {
        let mut m = model(2, 3);
        let c = -37.5;
        let rows: Vec<_> = (0..20).map(|i| (vec![i as f64 * 0.05, -(i as f64) * 0.02], c)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        m.train(&batch(&rows), &TrainConfig { epochs: 50, batch_size: 8 }, &mut rng).unwrap();
        let p = m.predict(&[0.3, 0.1]).unwrap();
        assert!((p - c).abs() <= c.abs() * 0.01 + 0.1, "{p}");
    }

    #[test]
    fn reported_rmse_matches_recount() {
        let mut m = model(2, 5);
        let rows: Vec<_> = (0..40)
            .map(|i| {
                let x = vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()];
                let y = -(x[0] * x[0] + x[1] * x[1]) * 10.0;
                (x, y)
            })
            .collect();
        let b = batch(&rows);
        let out = m.train(&b, &TrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let s = m.scaler().unwrap();
        let mse: f64 = rows
            .iter()
            .map(|(x, y)| (m.predict_scaled(x).unwrap() - (y - s.min) / (s.max - s.min)).powi(2))
            .sum::<f64>()
            / rows.len() as f64;
        assert!((out.scaled_rmse - mse.sqrt()).abs() < 1e-12);
        assert_eq!(out.rows, 40);
    }

    #[test]
    fn zero_weights_predict_the_midpoint() {
        let mut m = model(2, 7);
        m.train(
            &batch(&[(vec![0.0, 1.0], -10.0), (vec![1.0, 0.0], -2.0)]),
            &TrainConfig { epochs: 1, batch_size: 2 },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        m.fill_params(0.0);
        assert_eq!(m.predict(&[0.4, 0.4]).unwrap(), -6.0);
    }

    #[test]
    fn adam_state_carries_across_intervals() {
        let mut m = model(2, 8);
        let b = batch(&[(vec![0.0, 1.0], -10.0), (vec![1.0, 0.0], -2.0), (vec![0.5, 0.5], -5.0)]);
        let cfg = TrainConfig { epochs: 2, batch_size: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        m.train(&b, &cfg, &mut rng).unwrap();
        assert_eq!(m.adam_step(), 4);
        let m1 = m.adam_moments().0.to_vec();
        m.train(&b, &cfg, &mut rng).unwrap();
        assert_eq!(m.adam_step(), 8);
        assert_ne!(m.adam_moments().0, m1.as_slice());
        assert_eq!(m.trained_intervals(), 2);
    }

    #[test]
    fn scaler_only_widens() {
        let mut m = model(1, 9);
        let cfg = TrainConfig { epochs: 1, batch_size: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        m.train(&batch(&[(vec![0.0], -5.0), (vec![1.0], -3.0)]), &cfg, &mut rng).unwrap();
        m.train(&batch(&[(vec![0.0], -4.0), (vec![1.0], -3.5)]), &cfg, &mut rng).unwrap();
        assert_eq!(m.scaler(), Some(TargetScaler { min: -5.0, max: -3.0 }));
        m.train(&batch(&[(vec![0.0], -9.0), (vec![1.0], -1.0)]), &cfg, &mut rng).unwrap();
        assert_eq!(m.scaler(), Some(TargetScaler { min: -9.0, max: -1.0 }));
        // single distinct value leaves the range alone
        m.train(&batch(&[(vec![0.0], -20.0)]), &cfg, &mut rng).unwrap();
        assert_eq!(m.scaler(), Some(TargetScaler { min: -9.0, max: -1.0 }));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut m = model(3, 10);
        m.train(
            &batch(&[(vec![0.1, 0.2, 0.3], -3.0), (vec![0.3, 0.2, 0.1], -1.0)]),
            &TrainConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let text = m.to_checkpoint();
        assert!(text.starts_with("SAPT-SURR-1\n"));
        let back = SurrogateModel::from_checkpoint(&text).unwrap();
        assert_eq!(back, m);
        assert!(SurrogateModel::from_checkpoint("SAPT-SURR-0\n").is_err());
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(SurrogateModel::from_checkpoint(&truncated).is_err());
    }

    #[test]
    fn blend_examples() {
        let mut h = PseudoLikelihoodBlend::new();
        assert!(h.blend(-1.0).is_err());
        h.push(-9.0);
        assert_eq!(h.blend(-10.0).unwrap(), 0.5 * -10.0 + 0.5 * -9.0);
        let mut h = PseudoLikelihoodBlend::new();
        for v in [-1.0, -12.0, -12.0, -12.0] {
            h.push(v);
        }
        assert_eq!(h.len(), 3);
        assert_eq!(h.blend(-10.0).unwrap(), -11.0);
        assert_eq!(h.blend(-12.0).unwrap(), -12.0);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(surrogate_rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((surrogate_rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.53553).abs() < 1e-5);
        assert!(surrogate_rmse(&[0.0], &[0.0, 1.0]).is_err());
        assert!(surrogate_rmse(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn scaler_inverts_in_range(lo in -1e4f64..0.0, width in 1e-3f64..1e4, frac in 0.0f64..=1.0) {
            let s = TargetScaler { min: lo, max: lo + width };
            let x = lo + frac * width;
            prop_assert!((s.inverse(s.scale(x)) - x).abs() < 1e-9 * (1.0 + x.abs()));
        }

        #[test]
        fn rmse_is_nonnegative_and_zero_iff_equal(a in prop::collection::vec(-100.0f64..100.0, 1..20)) {
            let shifted: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
            prop_assert_eq!(surrogate_rmse(&a, &a).unwrap(), 0.0);
            prop_assert!(surrogate_rmse(&a, &shifted).unwrap() > 0.0);
        }

        #[test]
        fn prediction_stays_in_scaler_range(x in prop::collection::vec(-10.0f64..10.0, 3)) {
            let mut m = model(3, 11);
            m.train(
                &batch(&[(vec![0.0, 0.0, 0.0], -8.0), (vec![1.0, 1.0, 1.0], -2.0)]),
                &TrainConfig { epochs: 1, batch_size: 2 },
                &mut ChaCha8Rng::seed_from_u64(0),
            ).unwrap();
            let p = m.predict(&x).unwrap();
            prop_assert!((-8.0..=-2.0).contains(&p));
        }
    }
}
