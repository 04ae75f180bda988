//! Replica-level sampling: temperature ladders, random-walk and
//! Langevin-gradient proposals, tempered Metropolis-Hastings steps and
//! neighbour replica exchange.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ParamVector;

/// Target density for one replica.
///
/// Only the likelihood is tempered; the prior enters the acceptance ratio
/// untouched.
pub trait LikelihoodModel: Sync {
    fn dim(&self) -> usize;
    fn log_likelihood(&self, theta: &[f64]) -> f64;
    fn log_prior(&self, theta: &[f64]) -> f64;
    /// Gradient of the loss whose descent step gives the Langevin proposal mean.
    fn descent_gradient(&self, theta: &[f64]) -> Vec<f64>;
}

/// Geometric ladder `T_i = T_max^(i / (M-1))`, `i = 0..M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureLadder {
    temps: Vec<f64>,
}

impl TemperatureLadder {
    pub fn geometric(replica_count: usize, max_temp: f64) -> Result<Self> {
        if replica_count < 2 {
            return Err(Error::config(format!(
                "a temperature ladder needs at least 2 replicas, got {replica_count}"
            )));
        }
        if !(max_temp >= 1.0 && max_temp.is_finite()) {
            return Err(Error::config(format!(
                "maximum temperature must be >= 1, got {max_temp}"
            )));
        }
        let last = (replica_count - 1) as f64;
        let mut temps: Vec<f64> = (0..replica_count)
            .map(|i| max_temp.powf(i as f64 / last))
            .collect();
        temps[0] = 1.0;
        temps[replica_count - 1] = max_temp;
        Ok(Self { temps })
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temps.is_empty()
    }

    pub fn max_temp(&self) -> f64 {
        *self.temps.last().expect("ladder has >= 2 rungs")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Burn-in on the geometric ladder.
    Tempered,
    /// Every replica at `T = 1`.
    Exploit,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Tempered => "tempered",
            Phase::Exploit => "exploit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState {
    pub theta: ParamVector,
    pub temperature: f64,
    /// Untempered log-likelihood of `theta` (a surrogate estimate when the
    /// last accepted move came from the surrogate path).
    pub log_lik: f64,
    pub log_prior: f64,
    pub accepted_count: u64,
    pub proposed_count: u64,
    pub rng_seed: u64,
    pub phase: Phase,
    /// Position on the ladder; fixed for the life of the replica.
    pub ladder_index: usize,
}

impl ReplicaState {
    pub fn new(
        theta: ParamVector,
        ladder_index: usize,
        temperature: f64,
        model: &impl LikelihoodModel,
        rng_seed: u64,
    ) -> Result<Self> {
        if theta.len() != model.dim() {
            return Err(Error::contract(format!(
                "initial state has {} parameters, model needs {}",
                theta.len(),
                model.dim()
            )));
        }
        let log_lik = model.log_likelihood(&theta);
        let log_prior = model.log_prior(&theta);
        if !log_lik.is_finite() || !log_prior.is_finite() {
            return Err(Error::contract("initial state has a non-finite log density"));
        }
        Ok(Self {
            theta,
            temperature,
            log_lik,
            log_prior,
            accepted_count: 0,
            proposed_count: 0,
            rng_seed,
            phase: Phase::Tempered,
            ladder_index,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed_count == 0 {
            0.0
        } else {
            self.accepted_count as f64 / self.proposed_count as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    RandomWalk,
    /// Langevin-gradient with probability `lg_prob`, random walk otherwise.
    LangevinMix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalConfig {
    pub kind: ProposalKind,
    /// Random-walk step sd; also the noise sd around the Langevin mean.
    pub rw_step_sd: f64,
    pub lg_learning_rate: f64,
    pub lg_prob: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            kind: ProposalKind::RandomWalk,
            rw_step_sd: 0.025,
            lg_learning_rate: 0.5,
            lg_prob: 0.5,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rw_step_sd > 0.0 && self.rw_step_sd.is_finite()) {
            return Err(Error::config(format!(
                "random-walk step sd must be positive, got {}",
                self.rw_step_sd
            )));
        }
        if !(self.lg_learning_rate > 0.0 && self.lg_learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "Langevin learning rate must be positive, got {}",
                self.lg_learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.lg_prob) {
            return Err(Error::config(format!(
                "Langevin probability must be in [0, 1], got {}",
                self.lg_prob
            )));
        }
        Ok(())
    }
}

/// `theta + eps`, `eps ~ N(0, step_sd^2 I)`.
pub fn propose_rw<R: Rng + ?Sized>(theta: &[f64], step_sd: f64, rng: &mut R) -> ParamVector {
    ParamVector::from_raw(
        theta
            .iter()
            .map(|&v| v + step_sd * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn langevin_mean(model: &impl LikelihoodModel, theta: &[f64], rate: f64) -> Vec<f64> {
    let grad = model.descent_gradient(theta);
    theta.iter().zip(&grad).map(|(t, g)| t - rate * g).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log q(from | to) - log q(to | from)` for the Langevin kernel.
pub fn langevin_log_q_ratio(
    model: &impl LikelihoodModel,
    from: &[f64],
    to: &[f64],
    config: &ProposalConfig,
) -> f64 {
    let forward_mean = langevin_mean(model, from, config.lg_learning_rate);
    let reverse_mean = langevin_mean(model, to, config.lg_learning_rate);
    log_q_ratio_from_means(from, to, &forward_mean, &reverse_mean, config.rw_step_sd)
}

fn log_q_ratio_from_means(from: &[f64], to: &[f64], fwd: &[f64], rev: &[f64], sd: f64) -> f64 {
    let var2 = 2.0 * sd * sd;
    (sq_dist(to, fwd) - sq_dist(from, rev)) / var2
}

/// Gradient-descent step on the model loss plus Gaussian noise. Returns the
/// proposal and its log proposal-density ratio.
pub fn propose_langevin<R: Rng + ?Sized>(
    theta: &[f64],
    model: &impl LikelihoodModel,
    config: &ProposalConfig,
    rng: &mut R,
) -> (ParamVector, f64) {
    let fwd = langevin_mean(model, theta, config.lg_learning_rate);
    let proposal = propose_rw(&fwd, config.rw_step_sd, rng);
    let rev = langevin_mean(model, &proposal, config.lg_learning_rate);
    let ratio = log_q_ratio_from_means(theta, &proposal, &fwd, &rev, config.rw_step_sd);
    (proposal, ratio)
}

/// A proposed state with its log densities already evaluated.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub theta: ParamVector,
    pub log_lik: f64,
    pub log_prior: f64,
    pub log_q_ratio: f64,
}

impl Candidate {
    pub fn evaluate(model: &impl LikelihoodModel, theta: ParamVector, log_q_ratio: f64) -> Self {
        Self {
            log_lik: model.log_likelihood(&theta),
            log_prior: model.log_prior(&theta),
            theta,
            log_q_ratio,
        }
    }
}

/// Log of the tempered Metropolis-Hastings ratio; the likelihood difference
/// is divided by the replica temperature, the prior and proposal terms are not.
pub fn acceptance_log_ratio(state: &ReplicaState, candidate: &Candidate) -> f64 {
    (candidate.log_lik - state.log_lik) / state.temperature + candidate.log_prior - state.log_prior
        + candidate.log_q_ratio
}

pub fn acceptance_probability(state: &ReplicaState, candidate: &Candidate) -> f64 {
    let log_alpha = acceptance_log_ratio(state, candidate);
    if log_alpha.is_nan() {
        0.0
    } else {
        log_alpha.min(0.0).exp()
    }
}

/// One Metropolis-Hastings decision. Draws exactly one uniform. Returns
/// whether the candidate was accepted; on rejection the state is unchanged
/// apart from its proposal counter.
pub fn metropolis_step<R: Rng + ?Sized>(
    state: &mut ReplicaState,
    candidate: Candidate,
    rng: &mut R,
) -> bool {
    let u: f64 = rng.random();
    state.proposed_count += 1;
    let log_alpha = acceptance_log_ratio(state, &candidate);
    if !log_alpha.is_finite() {
        log::warn!(
            "replica {}: non-finite acceptance exponent ({log_alpha}); rejecting",
            state.ladder_index
        );
        return false;
    }
    if u <= log_alpha.min(0.0).exp() {
        state.theta = candidate.theta;
        state.log_lik = candidate.log_lik;
        state.log_prior = candidate.log_prior;
        state.accepted_count += 1;
        true
    } else {
        false
    }
}

/// `min(1, exp((1/T_j - 1/T_i) (L_j - L_i)))`.
pub fn exchange_probability(t_i: f64, t_j: f64, l_i: f64, l_j: f64) -> f64 {
    let exponent = (1.0 / t_j - 1.0 / t_i) * (l_j - l_i);
    if exponent.is_nan() {
        0.0
    } else {
        exponent.min(0.0).exp()
    }
}

/// Exchange probability between ladder neighbours `i` and `i + 1`.
pub fn swap_probability(state_i: &ReplicaState, state_j: &ReplicaState) -> Result<f64> {
    if state_j.ladder_index != state_i.ladder_index + 1 {
        return Err(Error::contract(format!(
            "replicas {} and {} are not ladder neighbours",
            state_i.ladder_index, state_j.ladder_index
        )));
    }
    if state_j.temperature < state_i.temperature {
        return Err(Error::contract(format!(
            "replica {} is colder than its lower neighbour",
            state_j.ladder_index
        )));
    }
    Ok(exchange_probability(
        state_i.temperature,
        state_j.temperature,
        state_i.log_lik,
        state_j.log_lik,
    ))
}

/// Exchanges configurations; temperatures, counters and ladder positions stay put.
pub fn apply_swap(a: &mut ReplicaState, b: &mut ReplicaState) {
    std::mem::swap(&mut a.theta, &mut b.theta);
    std::mem::swap(&mut a.log_lik, &mut b.log_lik);
    std::mem::swap(&mut a.log_prior, &mut b.log_prior);
}
