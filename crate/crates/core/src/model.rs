//! One-hidden-layer Bayesian classifier: the model whose posterior is sampled.
//!
//! Parameters are flattened into a [`ParamVector`] with the fixed layout
//!
//! ```text
//! [ w (I*H, row-major by input) | hidden bias (H) | v (H*O, row-major by hidden) | output bias (O) ]
//! ```
//!
//! so `w[d][h]` lives at `d*H + h` and `v[h][o]` at `I*H + H + h*O + o`. The
//! layout is shared by every replica and by the surrogate, whose input is the
//! raw parameter vector.

use std::ops::Deref;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tempering::LikelihoodModel;

/// Floor applied to class probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-308;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkTopology {
    pub input_count: usize,
    pub hidden_count: usize,
    pub output_count: usize,
}

impl NetworkTopology {
    pub fn new(input_count: usize, hidden_count: usize, output_count: usize) -> Result<Self> {
        if input_count == 0 || hidden_count == 0 || output_count == 0 {
            return Err(Error::config(format!(
                "topology {input_count}-{hidden_count}-{output_count}: every layer needs at least one unit"
            )));
        }
        Ok(Self {
            input_count,
            hidden_count,
            output_count,
        })
    }

    pub fn parameter_count(&self) -> usize {
        let (i, h, o) = (self.input_count, self.hidden_count, self.output_count);
        i * h + h + h * o + o
    }

    fn hidden_bias_offset(&self) -> usize {
        self.input_count * self.hidden_count
    }

    fn output_weight_offset(&self) -> usize {
        self.hidden_bias_offset() + self.hidden_count
    }

    fn output_bias_offset(&self) -> usize {
        self.output_weight_offset() + self.hidden_count * self.output_count
    }

    /// Stable names for every parameter slot, in layout order.
    pub fn parameter_names(&self) -> Vec<String> {
        let (i, h, o) = (self.input_count, self.hidden_count, self.output_count);
        let mut names = Vec::with_capacity(self.parameter_count());
        for d in 0..i {
            for k in 0..h {
                names.push(format!("w_{d}_{k}"));
            }
        }
        names.extend((0..h).map(|k| format!("bh_{k}")));
        for k in 0..h {
            for out in 0..o {
                names.push(format!("v_{k}_{out}"));
            }
        }
        names.extend((0..o).map(|out| format!("bo_{out}")));
        names
    }
}

impl std::fmt::Display for NetworkTopology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}-{}-{}",
            self.input_count, self.hidden_count, self.output_count
        )
    }
}

/// Flattened network weights and biases; the MCMC state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "parameter {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Wraps values produced by arithmetic on already-finite vectors.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn check(&self, topology: &NetworkTopology) -> Result<()> {
        if self.0.len() != topology.parameter_count() {
            return Err(Error::contract(format!(
                "parameter vector has {} entries, topology {topology} needs {}",
                self.0.len(),
                topology.parameter_count()
            )));
        }
        Ok(())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub sigma_sq: f64,
}

impl PriorConfig {
    pub fn new(sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(Error::config(format!(
                "prior variance must be positive, got {sigma_sq}"
            )));
        }
        Ok(Self { sigma_sq })
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { sigma_sq: 25.0 }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Writes hidden activations and pre-softmax outputs for one input row.
fn forward_into(theta: &[f64], x: &[f64], topo: &NetworkTopology, hidden: &mut [f64], out: &mut [f64]) {
    let (h_n, o_n) = (topo.hidden_count, topo.output_count);
    let bh = topo.hidden_bias_offset();
    let vo = topo.output_weight_offset();
    let bo = topo.output_bias_offset();

    hidden.copy_from_slice(&theta[bh..bh + h_n]);
    for (d, &xd) in x.iter().enumerate() {
        let row = &theta[d * h_n..(d + 1) * h_n];
        for (acc, &w) in hidden.iter_mut().zip(row) {
            *acc += w * xd;
        }
    }
    hidden.iter_mut().for_each(|a| *a = sigmoid(*a));

    out.copy_from_slice(&theta[bo..bo + o_n]);
    for (k, &a) in hidden.iter().enumerate() {
        let row = &theta[vo + k * o_n..vo + (k + 1) * o_n];
        for (acc, &v) in out.iter_mut().zip(row) {
            *acc += v * a;
        }
    }
}

/// Pre-softmax network output for a single input.
pub fn forward(theta: &ParamVector, x: &[f64], topology: &NetworkTopology) -> Result<Vec<f64>> {
    theta.check(topology)?;
    if x.len() != topology.input_count {
        return Err(Error::contract(format!(
            "input has {} features, topology {topology} expects {}",
            x.len(),
            topology.input_count
        )));
    }
    let mut hidden = vec![0.0; topology.hidden_count];
    let mut out = vec![0.0; topology.output_count];
    forward_into(theta, x, topology, &mut hidden, &mut out);
    Ok(out)
}

fn softmax_in_place(f: &mut [f64]) {
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in f.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    f.iter_mut().for_each(|v| *v /= sum);
}

/// Max-shifted softmax.
pub fn softmax(f: &[f64]) -> Vec<f64> {
    let mut p = f.to_vec();
    softmax_in_place(&mut p);
    p
}

fn check_data(theta: &ParamVector, dataset: &Dataset, topo: &NetworkTopology) -> Result<()> {
    theta.check(topo)?;
    if dataset.is_empty() {
        return Err(Error::contract(format!("dataset '{}' is empty", dataset.name())));
    }
    if dataset.input_count() != topo.input_count || dataset.class_count() != topo.output_count {
        return Err(Error::contract(format!(
            "dataset '{}' is {} inputs/{} classes, topology is {topo}",
            dataset.name(),
            dataset.input_count(),
            dataset.class_count()
        )));
    }
    Ok(())
}

/// Multinomial log-likelihood `sum_t log pi_{t, y_t}`.
pub fn log_likelihood(theta: &ParamVector, dataset: &Dataset, topology: &NetworkTopology) -> Result<f64> {
    check_data(theta, dataset, topology)?;
    Ok(log_likelihood_unchecked(theta, dataset, topology))
}

fn log_likelihood_unchecked(theta: &[f64], dataset: &Dataset, topo: &NetworkTopology) -> f64 {
    let mut hidden = vec![0.0; topo.hidden_count];
    let mut out = vec![0.0; topo.output_count];
    let mut total = 0.0;
    for t in 0..dataset.len() {
        forward_into(theta, dataset.row(t), topo, &mut hidden, &mut out);
        softmax_in_place(&mut out);
        total += out[dataset.label(t)].max(PROB_FLOOR).ln();
    }
    total
}

/// Gaussian log-prior over every weight and bias with shared variance.
pub fn log_prior(theta: &[f64], prior: &PriorConfig) -> f64 {
    let n = theta.len() as f64;
    let sq: f64 = theta.iter().map(|v| v * v).sum();
    -0.5 * n * prior.sigma_sq.ln() - sq / (2.0 * prior.sigma_sq)
}

/// Gradient of `E = sum_t sum_k (z_tk - pi_tk)^2` in parameter-vector layout.
pub fn sse_gradient(theta: &ParamVector, dataset: &Dataset, topology: &NetworkTopology) -> Result<Vec<f64>> {
    check_data(theta, dataset, topology)?;
    Ok(sse_gradient_unchecked(theta, dataset, topology))
}

fn sse_gradient_unchecked(theta: &[f64], dataset: &Dataset, topo: &NetworkTopology) -> Vec<f64> {
    let (h_n, o_n) = (topo.hidden_count, topo.output_count);
    let bh = topo.hidden_bias_offset();
    let vo = topo.output_weight_offset();
    let bo = topo.output_bias_offset();

    let mut grad = vec![0.0; topo.parameter_count()];
    let mut hidden = vec![0.0; h_n];
    let mut pi = vec![0.0; o_n];
    let mut d_out = vec![0.0; o_n];
    let mut d_hidden = vec![0.0; h_n];

    for t in 0..dataset.len() {
        let x = dataset.row(t);
        let z = dataset.one_hot_row(t);
        forward_into(theta, x, topo, &mut hidden, &mut pi);
        softmax_in_place(&mut pi);

        // dE/df_k = 2 pi_k [ (pi_k - z_k) - sum_j (pi_j - z_j) pi_j ]
        let s: f64 = pi.iter().zip(z).map(|(p, zj)| (p - zj) * p).sum();
        for k in 0..o_n {
            d_out[k] = 2.0 * pi[k] * ((pi[k] - z[k]) - s);
        }

        for k in 0..o_n {
            grad[bo + k] += d_out[k];
        }
        for h in 0..h_n {
            let row = vo + h * o_n;
            let mut back = 0.0;
            for k in 0..o_n {
                grad[row + k] += hidden[h] * d_out[k];
                back += theta[row + k] * d_out[k];
            }
            d_hidden[h] = back * hidden[h] * (1.0 - hidden[h]);
        }
        for h in 0..h_n {
            grad[bh + h] += d_hidden[h];
        }
        for (d, &xd) in x.iter().enumerate() {
            let row = &mut grad[d * h_n..(d + 1) * h_n];
            for (g, dh) in row.iter_mut().zip(&d_hidden) {
                *g += xd * dh;
            }
        }
    }
    grad
}

/// Predicted class for one input; ties go to the lowest class index.
pub fn predict_class(theta: &ParamVector, x: &[f64], topology: &NetworkTopology) -> Result<usize> {
    let p = softmax(&forward(theta, x, topology)?);
    Ok(argmax(&p))
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Class probabilities for every row of `dataset`, row-major `N x K`.
pub fn predict_proba(theta: &ParamVector, dataset: &Dataset, topology: &NetworkTopology) -> Result<Vec<f64>> {
    check_data(theta, dataset, topology)?;
    let mut hidden = vec![0.0; topology.hidden_count];
    let mut out = vec![0.0; topology.output_count];
    let mut probs = Vec::with_capacity(dataset.len() * topology.output_count);
    for t in 0..dataset.len() {
        forward_into(theta, dataset.row(t), topology, &mut hidden, &mut out);
        softmax_in_place(&mut out);
        probs.extend_from_slice(&out);
    }
    Ok(probs)
}

/// Percentage of rows whose most probable class matches the label.
pub fn predict_accuracy(theta: &ParamVector, dataset: &Dataset, topology: &NetworkTopology) -> Result<f64> {
    let probs = predict_proba(theta, dataset, topology)?;
    let k = topology.output_count;
    let hits = probs
        .chunks_exact(k)
        .enumerate()
        .filter(|(t, p)| argmax(p) == dataset.label(*t))
        .count();
    Ok(100.0 * hits as f64 / dataset.len() as f64)
}

/// The Bayesian classifier bound to its training data and prior.
#[derive(Debug, Clone)]
pub struct BnnModel {
    topology: NetworkTopology,
    prior: PriorConfig,
    train: Dataset,
}

impl BnnModel {
    pub fn new(topology: NetworkTopology, prior: PriorConfig, train: Dataset) -> Result<Self> {
        check_data(&ParamVector::zeros(topology.parameter_count()), &train, &topology)?;
        Ok(Self {
            topology,
            prior,
            train,
        })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn train_data(&self) -> &Dataset {
        &self.train
    }
}

impl LikelihoodModel for BnnModel {
    fn dim(&self) -> usize {
        self.topology.parameter_count()
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        log_likelihood_unchecked(theta, &self.train, &self.topology)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        log_prior(theta, &self.prior)
    }

    fn descent_gradient(&self, theta: &[f64]) -> Vec<f64> {
        sse_gradient_unchecked(theta, &self.train, &self.topology)
    }
}
