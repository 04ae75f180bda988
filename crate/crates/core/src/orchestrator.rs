//! Runs the replica ensemble.
//!
//! Each replica performs Metropolis steps on its own rung of the ladder and
//! stops every `swap_interval` steps at a barrier, where a manager runs the
//! neighbour swap sweep and, every `surrogate_interval` steps, retrains the
//! global surrogate on the true evaluations staged since the last training
//! round. After `floor(burn_in_fraction * R_max)` steps every replica drops
//! to `T = 1`; only those later samples form the posterior.
//!
//! Random numbers come from independent ChaCha8 streams: replica `i` is
//! seeded with `base_seed + i`, the manager with
//! `base_seed + MANAGER_SEED_OFFSET`. Within a step a replica draws, in
//! order:
//!
//! 1. the Langevin/random-walk choice (Langevin mixing only),
//! 2. the proposal noise,
//! 3. `kappa`, the surrogate coin (only when `surrogate_prob > 0`),
//! 4. the acceptance uniform.
//!
//! Initial parameters are `init_sd * N(0, 1)` draws from the replica stream.
//! The manager draws one uniform per considered swap pair, then uses its
//! stream for surrogate initialisation and minibatch shuffling. Because no
//! stream is shared, sequential and threaded runs produce identical chains.
//!
//! The run report is a `key = value` text document:
//!
//! ```text
//! replicas = 4
//! samples_per_replica = 2000
//! elapsed_seconds = 1.234
//! surrogate_train_seconds = 0.456
//! true_evals = 6100
//! surrogate_evals = 1900
//! audit_evals = 1900
//! swap_attempts = 120
//! swap_accepts = 87
//! swap_acceptance_rate = 0.725
//! acceptance_rate.0 = 0.41
//! ...
//! surrogate_intervals_trained = 39
//! surrogate_intervals_skipped = 0
//! surrogate_train_rmse.0 = 0.0123        (scaled units, one per trained interval)
//! ...
//! surrogate_prediction_rmse = 3.1        (raw units, or `n/a`)
//! ```

use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{BnnModel, NetworkTopology, ParamVector, PriorConfig};
use crate::surrogate::{
    surrogate_rmse, AdamParams, LikelihoodSource, PseudoLikelihoodBlend, SurrogateBatch, SurrogateModel,
    TrainConfig,
};
use crate::tempering::{
    apply_swap, exchange_probability, metropolis_step, propose_langevin, propose_rw, Candidate, LikelihoodModel,
    Phase, ProposalConfig, ProposalKind, ReplicaState, TemperatureLadder,
};

/// Added to the base seed to seed the manager's stream.
pub const MANAGER_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub replica_count: usize,
    /// Total samples across all replicas; each replica runs `total_samples / replica_count`.
    pub total_samples: usize,
    pub swap_interval: usize,
    pub surrogate_interval: usize,
    /// Per-step probability of using the surrogate; 0 gives plain parallel tempering.
    pub surrogate_prob: f64,
    pub max_temp: f64,
    pub burn_in_fraction: f64,
    pub proposal: ProposalConfig,
    pub base_seed: u64,
    pub sequential: bool,
    /// Standard deviation of the initial parameter draw.
    pub init_sd: f64,
    pub surrogate_hidden: (usize, usize),
    pub surrogate_training: TrainConfig,
    pub adam: AdamParams,
    /// Also evaluate the true likelihood on surrogate steps, for the
    /// prediction RMSE. These evaluations never reach the sampler.
    pub audit_surrogate: bool,
    /// How long the manager waits for any worker message.
    pub worker_timeout: Duration,
    /// Per-replica step counts replacing `total_samples / replica_count`.
    #[doc(hidden)]
    pub replica_samples: Option<Vec<usize>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            replica_count: 10,
            total_samples: 50_000,
            swap_interval: 50,
            surrogate_interval: 50,
            surrogate_prob: 0.0,
            max_temp: 5.0,
            burn_in_fraction: 0.5,
            proposal: ProposalConfig::default(),
            base_seed: 1,
            sequential: false,
            init_sd: 1.0,
            surrogate_hidden: (64, 16),
            surrogate_training: TrainConfig::default(),
            adam: AdamParams::default(),
            audit_surrogate: true,
            worker_timeout: Duration::from_secs(600),
            replica_samples: None,
        }
    }
}

impl SamplerConfig {
    /// `R_max`, the step count of every replica.
    pub fn samples_per_replica(&self) -> usize {
        self.total_samples / self.replica_count.max(1)
    }

    fn replica_steps(&self) -> Vec<usize> {
        match &self.replica_samples {
            Some(v) => v.clone(),
            None => vec![self.samples_per_replica(); self.replica_count],
        }
    }

    pub fn burn_steps(&self, replica_steps: usize) -> usize {
        (self.burn_in_fraction * replica_steps as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.replica_count < 2 {
            return bad(format!("need at least 2 replicas, got {}", self.replica_count));
        }
        if self.samples_per_replica() == 0 {
            return bad(format!(
                "{} samples cannot be shared among {} replicas",
                self.total_samples, self.replica_count
            ));
        }
        if self.swap_interval == 0 || self.surrogate_interval == 0 {
            return bad("swap and surrogate intervals must be positive".into());
        }
        if !self.surrogate_interval.is_multiple_of(self.swap_interval) {
            return bad(format!(
                "surrogate interval {} must be a multiple of the swap interval {}",
                self.surrogate_interval, self.swap_interval
            ));
        }
        if !(0.0..=1.0).contains(&self.surrogate_prob) {
            return bad(format!("surrogate probability must be in [0, 1], got {}", self.surrogate_prob));
        }
        if !(self.burn_in_fraction > 0.0 && self.burn_in_fraction < 1.0) {
            return bad(format!("burn-in fraction must be in (0, 1), got {}", self.burn_in_fraction));
        }
        if !(self.init_sd > 0.0 && self.init_sd.is_finite()) {
            return bad(format!("initial sd must be positive, got {}", self.init_sd));
        }
        if self.surrogate_training.epochs == 0 || self.surrogate_training.batch_size == 0 {
            return bad("surrogate epochs and batch size must be positive".into());
        }
        if let Some(v) = &self.replica_samples {
            if v.len() != self.replica_count || v.contains(&0) {
                return bad("per-replica sample counts must be positive, one per replica".into());
            }
        }
        self.proposal.validate()?;
        TemperatureLadder::geometric(self.replica_count, self.max_temp)?;
        Ok(())
    }
}

/// One Metropolis step of one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: usize,
    /// Log-likelihood held by the chain after the step.
    pub log_lik: f64,
    /// How the candidate at this step was evaluated.
    pub source: LikelihoodSource,
    pub phase: Phase,
    pub accepted: bool,
}

/// A surrogate-path step: the blended estimate and, when audited, the true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateTraceRow {
    pub replica: usize,
    pub step: usize,
    /// Raw network prediction before blending with the moving average.
    pub surrogate_log_lik: f64,
    pub pseudo_log_lik: f64,
    pub true_log_lik: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaChain {
    pub replica: usize,
    pub records: Vec<StepRecord>,
    /// Parameters after every exploit-phase step, flattened.
    samples: Vec<f64>,
    pub surrogate_trace: Vec<SurrogateTraceRow>,
    pub acceptance_rate: f64,
}

impl ReplicaChain {
    pub fn sample_count(&self, dim: usize) -> usize {
        self.samples.len() / dim.max(1)
    }
}

/// Per-replica step records plus the pooled exploit-phase samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    dim: usize,
    replicas: Vec<ReplicaChain>,
}

impl PosteriorChain {
    pub fn new(dim: usize, replicas: Vec<ReplicaChain>) -> Self {
        Self { dim, replicas }
    }

    /// Builds a chain directly from parameter samples (one pseudo-replica).
    pub fn from_samples(dim: usize, samples: &[ParamVector]) -> Result<Self> {
        let mut flat = Vec::with_capacity(dim * samples.len());
        for s in samples {
            if s.len() != dim {
                return Err(Error::contract(format!("sample has {} values, expected {dim}", s.len())));
            }
            flat.extend_from_slice(s);
        }
        Ok(Self {
            dim,
            replicas: vec![ReplicaChain {
                replica: 0,
                records: Vec::new(),
                samples: flat,
                surrogate_trace: Vec::new(),
                acceptance_rate: 0.0,
            }],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn replicas(&self) -> &[ReplicaChain] {
        &self.replicas
    }

    pub fn sample_count(&self) -> usize {
        self.replicas.iter().map(|r| r.sample_count(self.dim)).sum()
    }

    /// Posterior samples, replica by replica in step order.
    pub fn samples(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.replicas.iter().flat_map(move |r| r.samples.chunks_exact(self.dim))
    }

    pub fn surrogate_trace(&self) -> impl Iterator<Item = &SurrogateTraceRow> + '_ {
        self.replicas.iter().flat_map(|r| r.surrogate_trace.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub replica_count: usize,
    pub samples_per_replica: Vec<usize>,
    pub elapsed_seconds: f64,
    pub surrogate_train_seconds: f64,
    pub true_evals: u64,
    pub surrogate_evals: u64,
    pub audit_evals: u64,
    pub swap_attempts: u64,
    pub swap_accepts: u64,
    pub acceptance_rates: Vec<f64>,
    pub surrogate_enabled: bool,
    /// Training RMSE per trained interval, in scaled target units.
    pub train_rmse: Vec<f64>,
    pub skipped_intervals: usize,
    /// RMSE of audited pseudo-likelihoods against true values, raw units.
    pub prediction_rmse: Option<f64>,
}

impl RunReport {
    pub fn swap_acceptance_rate(&self) -> f64 {
        if self.swap_attempts == 0 {
            0.0
        } else {
            self.swap_accepts as f64 / self.swap_attempts as f64
        }
    }

    pub fn total_steps(&self) -> u64 {
        self.samples_per_replica.iter().map(|&s| s as u64).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "replicas = {}", self.replica_count);
        let steps: Vec<String> = self.samples_per_replica.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "samples_per_replica = {}", steps.join(","));
        let _ = writeln!(out, "elapsed_seconds = {}", self.elapsed_seconds);
        let _ = writeln!(out, "surrogate_train_seconds = {}", self.surrogate_train_seconds);
        let _ = writeln!(out, "true_evals = {}", self.true_evals);
        let _ = writeln!(out, "surrogate_evals = {}", self.surrogate_evals);
        let _ = writeln!(out, "audit_evals = {}", self.audit_evals);
        let _ = writeln!(out, "swap_attempts = {}", self.swap_attempts);
        let _ = writeln!(out, "swap_accepts = {}", self.swap_accepts);
        let _ = writeln!(out, "swap_acceptance_rate = {}", self.swap_acceptance_rate());
        for (i, a) in self.acceptance_rates.iter().enumerate() {
            let _ = writeln!(out, "acceptance_rate.{i} = {a}");
        }
        let _ = writeln!(out, "surrogate_enabled = {}", self.surrogate_enabled);
        let _ = writeln!(out, "surrogate_intervals_trained = {}", self.train_rmse.len());
        let _ = writeln!(out, "surrogate_intervals_skipped = {}", self.skipped_intervals);
        for (i, r) in self.train_rmse.iter().enumerate() {
            let _ = writeln!(out, "surrogate_train_rmse.{i} = {r}");
        }
        match self.prediction_rmse {
            Some(r) => {
                let _ = writeln!(out, "surrogate_prediction_rmse = {r}");
            }
            None => out.push_str("surrogate_prediction_rmse = n/a\n"),
        }
        out
    }
}

/// Tracks how many replicas are still running.
#[derive(Debug, Clone)]
pub struct AliveCounter {
    done: Vec<bool>,
    alive: usize,
}

impl AliveCounter {
    pub fn new(replicas: usize) -> Self {
        Self {
            done: vec![false; replicas],
            alive: replicas,
        }
    }

    pub fn alive(&self) -> usize {
        self.alive
    }

    pub fn is_alive(&self, id: usize) -> bool {
        !self.done.get(id).copied().unwrap_or(true)
    }

    /// Records a completion signal; a second signal from the same replica is an error.
    pub fn finish(&mut self, id: usize) -> Result<usize> {
        match self.done.get_mut(id) {
            Some(d) if !*d => {
                *d = true;
                self.alive -= 1;
                Ok(self.alive)
            }
            Some(_) => Err(Error::WorkerFailure(format!("replica {id} signalled completion twice"))),
            None => Err(Error::WorkerFailure(format!("completion signal from unknown replica {id}"))),
        }
    }
}

/// Swap decisions for one sweep over replicas listed in ascending ladder
/// order as `(ladder_index, temperature, log_lik)`. Only ladder neighbours
/// are paired, each replica swaps at most once, and every considered pair
/// costs one uniform. Returns the positions `(a, a + 1)` that swap and the
/// number of pairs considered.
pub fn sweep_decisions<R: Rng + ?Sized>(entries: &[(usize, f64, f64)], rng: &mut R) -> (Vec<(usize, usize)>, u64) {
    let mut swaps = Vec::new();
    let mut considered = 0;
    let mut a = 0;
    while a + 1 < entries.len() {
        let (li, ti, l_i) = entries[a];
        let (lj, tj, l_j) = entries[a + 1];
        if lj != li + 1 {
            a += 1;
            continue;
        }
        considered += 1;
        let beta = exchange_probability(ti, tj, l_i, l_j);
        let b: f64 = rng.random();
        if b <= beta {
            swaps.push((a, a + 1));
            a += 2;
        } else {
            a += 1;
        }
    }
    (swaps, considered)
}

/// Neighbour swap sweep over states sorted by ladder index. Returns which
/// states took part in an accepted swap.
pub fn swap_sweep<R: Rng + ?Sized>(states: &mut [ReplicaState], rng: &mut R) -> Result<Vec<bool>> {
    if states.windows(2).any(|w| w[1].ladder_index <= w[0].ladder_index) {
        return Err(Error::contract("states must be sorted by ladder index"));
    }
    let entries: Vec<_> = states.iter().map(|s| (s.ladder_index, s.temperature, s.log_lik)).collect();
    let (swaps, _) = sweep_decisions(&entries, rng);
    let mut mask = vec![false; states.len()];
    for (a, b) in swaps {
        let (lo, hi) = states.split_at_mut(b);
        apply_swap(&mut lo[a], &mut hi[0]);
        mask[a] = true;
        mask[b] = true;
    }
    Ok(mask)
}

/// Concatenates staged true-likelihood rows in replica order.
pub fn collect_surrogate_data(staged: Vec<SurrogateBatch>) -> SurrogateBatch {
    let mut all = SurrogateBatch::new();
    for b in staged {
        all.extend(b);
    }
    all
}

/// Next barrier: the next multiple of the swap interval, capped at the replica's last step.
fn next_stop(done: usize, swap_interval: usize, r_max: usize) -> usize {
    ((done / swap_interval + 1) * swap_interval).min(r_max)
}

struct Replica<'m, M: LikelihoodModel> {
    id: usize,
    model: &'m M,
    config: &'m SamplerConfig,
    state: ReplicaState,
    rng: ChaCha8Rng,
    steps_done: usize,
    r_max: usize,
    burn_steps: usize,
    history: PseudoLikelihoodBlend,
    staging: SurrogateBatch,
    surrogate: Option<Arc<SurrogateModel>>,
    chain: ReplicaChain,
    true_evals: u64,
    surrogate_evals: u64,
    audit_evals: u64,
}

struct BoundaryReport {
    id: usize,
    steps_done: usize,
    temperature: f64,
    theta: ParamVector,
    log_lik: f64,
    log_prior: f64,
    staged: Option<SurrogateBatch>,
}

#[derive(Default)]
struct Directive {
    adopt: Option<(ParamVector, f64, f64)>,
    surrogate: Option<Arc<SurrogateModel>>,
}

struct ReplicaOutcome {
    id: usize,
    chain: ReplicaChain,
    true_evals: u64,
    surrogate_evals: u64,
    audit_evals: u64,
}

impl<'m, M: LikelihoodModel> Replica<'m, M> {
    fn new(id: usize, model: &'m M, config: &'m SamplerConfig, temperature: f64, r_max: usize) -> Result<Self> {
        let seed = config.base_seed.wrapping_add(id as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..model.dim())
            .map(|_| config.init_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let state = ReplicaState::new(ParamVector::new(theta)?, id, temperature, model, seed)?;
        let mut history = PseudoLikelihoodBlend::new();
        history.push(state.log_lik);
        Ok(Self {
            id,
            model,
            config,
            state,
            rng,
            steps_done: 0,
            r_max,
            burn_steps: config.burn_steps(r_max),
            history,
            staging: SurrogateBatch::new(),
            surrogate: None,
            chain: ReplicaChain {
                replica: id,
                records: Vec::with_capacity(r_max),
                samples: Vec::new(),
                surrogate_trace: Vec::new(),
                acceptance_rate: 0.0,
            },
            true_evals: 0,
            surrogate_evals: 0,
            audit_evals: 0,
        })
    }

    fn step(&mut self) -> Result<()> {
        let s = self.steps_done + 1;
        let cfg = self.config;
        if s > self.burn_steps && self.state.phase == Phase::Tempered {
            self.state.phase = Phase::Exploit;
            self.state.temperature = 1.0;
        }

        let use_langevin = match cfg.proposal.kind {
            ProposalKind::RandomWalk => false,
            ProposalKind::LangevinMix => self.rng.random::<f64>() < cfg.proposal.lg_prob,
        };
        let (theta, log_q) = if use_langevin {
            propose_langevin(&self.state.theta, self.model, &cfg.proposal, &mut self.rng)
        } else {
            (propose_rw(&self.state.theta, cfg.proposal.rw_step_sd, &mut self.rng), 0.0)
        };
        let use_surrogate = if cfg.surrogate_prob > 0.0 {
            let kappa: f64 = self.rng.random();
            kappa < cfg.surrogate_prob && s > cfg.surrogate_interval && self.surrogate.is_some()
        } else {
            false
        };

        let log_prior = self.model.log_prior(&theta);
        let (log_lik, source) = match (&self.surrogate, use_surrogate) {
            (Some(surr), true) => {
                let raw = surr.predict(&theta)?;
                let pseudo = self.history.blend(raw)?;
                self.surrogate_evals += 1;
                let true_log_lik = if cfg.audit_surrogate {
                    self.audit_evals += 1;
                    Some(self.model.log_likelihood(&theta))
                } else {
                    None
                };
                self.chain.surrogate_trace.push(SurrogateTraceRow {
                    replica: self.id,
                    step: s,
                    surrogate_log_lik: raw,
                    pseudo_log_lik: pseudo,
                    true_log_lik,
                });
                (pseudo, LikelihoodSource::Surrogate)
            }
            _ => {
                let l = self.model.log_likelihood(&theta);
                self.true_evals += 1;
                if cfg.surrogate_prob > 0.0 && l.is_finite() {
                    self.staging.push(theta.to_vec(), l, LikelihoodSource::True, self.id)?;
                }
                (l, LikelihoodSource::True)
            }
        };

        let candidate = Candidate {
            theta,
            log_lik,
            log_prior,
            log_q_ratio: log_q,
        };
        let accepted = metropolis_step(&mut self.state, candidate, &mut self.rng);
        // the moving average runs over the values computed for proposals, true or blended
        self.history.push(log_lik);
        self.chain.records.push(StepRecord {
            step: s,
            log_lik: self.state.log_lik,
            source,
            phase: self.state.phase,
            accepted,
        });
        if self.state.phase == Phase::Exploit {
            self.chain.samples.extend_from_slice(&self.state.theta);
        }
        self.steps_done = s;
        Ok(())
    }

    /// Steps up to the next barrier. Returns `None` once the replica has finished.
    fn advance(&mut self, abort: &AtomicBool) -> Result<Option<BoundaryReport>> {
        let stop = next_stop(self.steps_done, self.config.swap_interval, self.r_max);
        while self.steps_done < stop {
            if abort.load(Ordering::Relaxed) {
                return Err(Error::WorkerFailure(format!("replica {} aborted", self.id)));
            }
            self.step()?;
        }
        if self.steps_done == self.r_max {
            return Ok(None);
        }
        let at_surrogate_boundary =
            self.config.surrogate_prob > 0.0 && self.steps_done.is_multiple_of(self.config.surrogate_interval);
        Ok(Some(BoundaryReport {
            id: self.id,
            steps_done: self.steps_done,
            temperature: self.state.temperature,
            theta: self.state.theta.clone(),
            log_lik: self.state.log_lik,
            log_prior: self.state.log_prior,
            staged: at_surrogate_boundary.then(|| std::mem::take(&mut self.staging)),
        }))
    }

    fn apply(&mut self, directive: Directive) {
        if let Some((theta, log_lik, log_prior)) = directive.adopt {
            self.state.theta = theta;
            self.state.log_lik = log_lik;
            self.state.log_prior = log_prior;
        }
        if let Some(s) = directive.surrogate {
            self.surrogate = Some(s);
        }
    }

    fn finish(mut self) -> ReplicaOutcome {
        self.chain.acceptance_rate = self.state.acceptance_rate();
        ReplicaOutcome {
            id: self.id,
            chain: self.chain,
            true_evals: self.true_evals,
            surrogate_evals: self.surrogate_evals,
            audit_evals: self.audit_evals,
        }
    }
}

/// Barrier logic shared by the sequential and threaded runners.
struct Manager<'c> {
    config: &'c SamplerConfig,
    rng: ChaCha8Rng,
    surrogate: Option<SurrogateModel>,
    swap_attempts: u64,
    swap_accepts: u64,
    train_rmse: Vec<f64>,
    skipped_intervals: usize,
    train_time: Duration,
}

impl<'c> Manager<'c> {
    fn new(config: &'c SamplerConfig, dim: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed.wrapping_add(MANAGER_SEED_OFFSET));
        let surrogate = if config.surrogate_prob > 0.0 {
            let (h1, h2) = config.surrogate_hidden;
            Some(SurrogateModel::new(dim, h1, h2, config.adam, &mut rng)?)
        } else {
            None
        };
        Ok(Self {
            config,
            rng,
            surrogate,
            swap_attempts: 0,
            swap_accepts: 0,
            train_rmse: Vec::new(),
            skipped_intervals: 0,
            train_time: Duration::ZERO,
        })
    }

    /// `reports` must be sorted by replica id and all sit at the same step.
    fn on_boundary(&mut self, reports: &mut [BoundaryReport]) -> Result<Vec<Directive>> {
        if reports.windows(2).any(|w| w[0].id >= w[1].id || w[0].steps_done != w[1].steps_done) {
            return Err(Error::WorkerFailure("replicas out of step at a barrier".into()));
        }
        let entries: Vec<_> = reports.iter().map(|r| (r.id, r.temperature, r.log_lik)).collect();
        let (swaps, considered) = sweep_decisions(&entries, &mut self.rng);
        self.swap_attempts += considered;
        self.swap_accepts += swaps.len() as u64;

        let mut directives: Vec<Directive> = reports.iter().map(|_| Directive::default()).collect();
        for (a, b) in swaps {
            let ra = &reports[a];
            let rb = &reports[b];
            directives[a].adopt = Some((rb.theta.clone(), rb.log_lik, rb.log_prior));
            directives[b].adopt = Some((ra.theta.clone(), ra.log_lik, ra.log_prior));
        }

        let staged: Vec<SurrogateBatch> = reports.iter_mut().filter_map(|r| r.staged.take()).collect();
        if let (Some(model), false) = (self.surrogate.as_mut(), staged.is_empty()) {
            let batch = collect_surrogate_data(staged);
            if batch.is_empty() {
                log::warn!(
                    "no true evaluations in the surrogate interval ending at step {}; skipping training",
                    reports[0].steps_done
                );
                self.skipped_intervals += 1;
            } else {
                let start = Instant::now();
                let outcome = model.train(&batch, &self.config.surrogate_training, &mut self.rng)?;
                self.train_time += start.elapsed();
                self.train_rmse.push(outcome.scaled_rmse);
                let snapshot = Arc::new(model.clone());
                for d in &mut directives {
                    d.surrogate = Some(Arc::clone(&snapshot));
                }
            }
        }
        Ok(directives)
    }
}

/// Builds the classifier on `train` and runs the sampler.
pub fn run(
    config: &SamplerConfig,
    train: &Dataset,
    topology: &NetworkTopology,
    prior: PriorConfig,
) -> Result<(PosteriorChain, RunReport)> {
    let model = BnnModel::new(*topology, prior, train.clone())?;
    run_model(config, &model)
}

/// Runs the sampler against any likelihood model.
pub fn run_model<M: LikelihoodModel>(config: &SamplerConfig, model: &M) -> Result<(PosteriorChain, RunReport)> {
    config.validate()?;
    let start = Instant::now();
    let ladder = TemperatureLadder::geometric(config.replica_count, config.max_temp)?;
    let steps = config.replica_steps();
    let replicas = (0..config.replica_count)
        .map(|i| Replica::new(i, model, config, ladder.temps()[i], steps[i]))
        .collect::<Result<Vec<_>>>()?;
    let mut manager = Manager::new(config, model.dim())?;

    let mut outcomes = if config.sequential {
        run_sequential(replicas, &mut manager)?
    } else {
        run_threaded(replicas, &mut manager, config.worker_timeout)?
    };
    outcomes.sort_by_key(|o| o.id);

    let mut report = RunReport {
        replica_count: config.replica_count,
        samples_per_replica: steps,
        surrogate_enabled: config.surrogate_prob > 0.0,
        swap_attempts: manager.swap_attempts,
        swap_accepts: manager.swap_accepts,
        train_rmse: manager.train_rmse,
        skipped_intervals: manager.skipped_intervals,
        surrogate_train_seconds: manager.train_time.as_secs_f64(),
        ..RunReport::default()
    };
    let mut chains = Vec::with_capacity(outcomes.len());
    let (mut truth, mut pseudo) = (Vec::new(), Vec::new());
    for o in outcomes {
        report.true_evals += o.true_evals;
        report.surrogate_evals += o.surrogate_evals;
        report.audit_evals += o.audit_evals;
        report.acceptance_rates.push(o.chain.acceptance_rate);
        for row in &o.chain.surrogate_trace {
            if let Some(t) = row.true_log_lik {
                truth.push(t);
                pseudo.push(row.pseudo_log_lik);
            }
        }
        chains.push(o.chain);
    }
    if !truth.is_empty() {
        report.prediction_rmse = Some(surrogate_rmse(&truth, &pseudo)?);
    }
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok((PosteriorChain::new(model.dim(), chains), report))
}

fn run_sequential<M: LikelihoodModel>(mut replicas: Vec<Replica<'_, M>>, manager: &mut Manager<'_>) -> Result<Vec<ReplicaOutcome>> {
    let never = AtomicBool::new(false);
    let mut alive = AliveCounter::new(replicas.len());
    let mut finished = Vec::with_capacity(replicas.len());
    while alive.alive() > 0 {
        let mut reports = Vec::new();
        for r in replicas.iter_mut() {
            if !alive.is_alive(r.id) {
                continue;
            }
            match r.advance(&never)? {
                Some(rep) => reports.push(rep),
                None => {
                    alive.finish(r.id)?;
                }
            }
        }
        if reports.is_empty() {
            continue;
        }
        let directives = manager.on_boundary(&mut reports)?;
        for (rep, d) in reports.iter().zip(directives) {
            replicas[rep.id].apply(d);
        }
    }
    for r in replicas {
        finished.push(r.finish());
    }
    Ok(finished)
}

enum WorkerMsg {
    Report(BoundaryReport),
    Done(Box<ReplicaOutcome>),
    Failed(String),
}

fn run_threaded<M: LikelihoodModel>(
    replicas: Vec<Replica<'_, M>>,
    manager: &mut Manager<'_>,
    timeout: Duration,
) -> Result<Vec<ReplicaOutcome>> {
    let n = replicas.len();
    let abort = AtomicBool::new(false);
    let (to_manager, inbox) = mpsc::channel::<WorkerMsg>();

    std::thread::scope(|scope| {
        let mut outboxes = Vec::with_capacity(n);
        for mut replica in replicas {
            let (tx, rx) = mpsc::channel::<Directive>();
            outboxes.push(Some(tx));
            let to_manager = to_manager.clone();
            let abort = &abort;
            scope.spawn(move || {
                let id = replica.id;
                let body = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| -> Result<Option<ReplicaOutcome>> {
                    loop {
                        match replica.advance(abort)? {
                            None => return Ok(Some(replica.finish())),
                            Some(rep) => {
                                if to_manager.send(WorkerMsg::Report(rep)).is_err() {
                                    return Ok(None);
                                }
                                match rx.recv() {
                                    Ok(d) => replica.apply(d),
                                    Err(_) => return Ok(None),
                                }
                            }
                        }
                    }
                }));
                let msg = match body {
                    Ok(Ok(Some(outcome))) => WorkerMsg::Done(Box::new(outcome)),
                    Ok(Ok(None)) => return,
                    Ok(Err(e)) => WorkerMsg::Failed(e.to_string()),
                    Err(panic) => {
                        let what = panic
                            .downcast_ref::<&str>()
                            .map(|s| s.to_string())
                            .or_else(|| panic.downcast_ref::<String>().cloned())
                            .unwrap_or_else(|| "panic".into());
                        WorkerMsg::Failed(format!("replica {id} panicked: {what}"))
                    }
                };
                let _ = to_manager.send(msg);
            });
        }
        drop(to_manager);

        let result = manage(manager, &inbox, &mut outboxes, n, timeout);
        if result.is_err() {
            abort.store(true, Ordering::Relaxed);
            outboxes.iter_mut().for_each(|o| drop(o.take()));
        }
        result
    })
}

fn manage(
    manager: &mut Manager<'_>,
    inbox: &mpsc::Receiver<WorkerMsg>,
    outboxes: &mut [Option<mpsc::Sender<Directive>>],
    n: usize,
    timeout: Duration,
) -> Result<Vec<ReplicaOutcome>> {
    let mut alive = AliveCounter::new(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut pending: Vec<BoundaryReport> = Vec::new();
    while alive.alive() > 0 {
        let msg = inbox.recv_timeout(timeout).map_err(|e| match e {
            mpsc::RecvTimeoutError::Timeout => Error::Timeout(timeout),
            mpsc::RecvTimeoutError::Disconnected => {
                Error::WorkerFailure("all workers disconnected before finishing".into())
            }
        })?;
        match msg {
            WorkerMsg::Report(r) => {
                if !alive.is_alive(r.id) || pending.iter().any(|p| p.id == r.id) {
                    return Err(Error::WorkerFailure(format!("unexpected report from replica {}", r.id)));
                }
                pending.push(r);
            }
            WorkerMsg::Done(o) => {
                alive.finish(o.id)?;
                outboxes[o.id] = None;
                outcomes.push(*o);
            }
            WorkerMsg::Failed(why) => return Err(Error::WorkerFailure(why)),
        }
        if !pending.is_empty() && pending.len() == alive.alive() {
            pending.sort_by_key(|r| r.id);
            let directives = manager.on_boundary(&mut pending)?;
            for (rep, d) in pending.drain(..).zip(directives) {
                let sent = outboxes[rep.id].as_ref().map(|tx| tx.send(d).is_ok());
                if sent != Some(true) {
                    return Err(Error::WorkerFailure(format!("replica {} stopped listening", rep.id)));
                }
            }
        }
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Isotropic Gaussian likelihood centred at 1, cheap enough for long runs.
    struct Quadratic {
        dim: usize,
    }

    impl LikelihoodModel for Quadratic {
        fn dim(&self) -> usize {
            self.dim
        }
        fn log_likelihood(&self, theta: &[f64]) -> f64 {
            -0.5 * theta.iter().map(|t| (t - 1.0).powi(2)).sum::<f64>()
        }
        fn log_prior(&self, theta: &[f64]) -> f64 {
            -theta.iter().map(|t| t * t).sum::<f64>() / 50.0
        }
        fn descent_gradient(&self, theta: &[f64]) -> Vec<f64> {
            theta.iter().map(|t| t - 1.0).collect()
        }
    }

    fn small_config() -> SamplerConfig {
        SamplerConfig {
            replica_count: 3,
            total_samples: 600,
            swap_interval: 10,
            surrogate_interval: 20,
            surrogate_hidden: (8, 4),
            sequential: true,
            proposal: ProposalConfig {
                rw_step_sd: 0.3,
                ..ProposalConfig::default()
            },
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn next_stop_caps_at_the_last_step() {
        assert_eq!(next_stop(0, 50, 1000), 50);
        assert_eq!(next_stop(50, 50, 1000), 100);
        assert_eq!(next_stop(950, 50, 980), 980);
        assert_eq!(next_stop(30, 50, 1000), 50);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let ok = small_config();
        assert!(ok.validate().is_ok());
        for bad in [
            SamplerConfig { surrogate_interval: 15, ..ok.clone() },
            SamplerConfig { surrogate_prob: 1.5, ..ok.clone() },
            SamplerConfig { burn_in_fraction: 1.0, ..ok.clone() },
            SamplerConfig { replica_count: 1, ..ok.clone() },
            SamplerConfig { max_temp: 0.5, ..ok.clone() },
            SamplerConfig { total_samples: 2, ..ok.clone() },
            SamplerConfig { swap_interval: 0, ..ok.clone() },
        ] {
            let err = bad.validate().unwrap_err();
            assert!(err.is_config(), "{err}");
        }
    }

    #[test]
    fn alive_counter_rejects_duplicates() {
        let mut alive = AliveCounter::new(2);
        assert_eq!(alive.finish(1).unwrap(), 1);
        assert!(alive.finish(1).is_err());
        assert_eq!(alive.finish(0).unwrap(), 0);
        assert!(alive.finish(0).is_err());
        assert!(alive.finish(5).is_err());
        assert_eq!(alive.alive(), 0);
    }

    #[test]
    fn sweep_pairs_are_exclusive() {
        // identical likelihoods: every considered pair swaps
        let entries: Vec<_> = (0..5).map(|i| (i, 1.0 + i as f64, -3.0)).collect();
        let (swaps, considered) = sweep_decisions(&entries, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(swaps, vec![(0, 1), (2, 3)]);
        assert_eq!(considered, 2);
        let (swaps, considered) = sweep_decisions(&entries[..2], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!((swaps.len(), considered), (1, 1));
    }

    #[test]
    fn sweep_skips_missing_rungs() {
        let entries = vec![(0, 1.0, -3.0), (2, 2.0, -3.0), (3, 3.0, -3.0)];
        let (swaps, considered) = sweep_decisions(&entries, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(swaps, vec![(1, 2)]);
        assert_eq!(considered, 1);
    }

    #[test]
    fn swap_sweep_permutes_states() {
        let model = Quadratic { dim: 2 };
        let mut states: Vec<ReplicaState> = (0..4)
            .map(|i| {
                let theta = ParamVector::new(vec![i as f64, -(i as f64)]).unwrap();
                ReplicaState::new(theta, i, 1.0 + i as f64, &model, 0).unwrap()
            })
            .collect();
        let before: Vec<Vec<f64>> = states.iter().map(|s| s.theta.to_vec()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            swap_sweep(&mut states, &mut rng).unwrap();
        }
        let mut after: Vec<Vec<f64>> = states.iter().map(|s| s.theta.to_vec()).collect();
        let mut sorted_before = before.clone();
        sorted_before.sort_by(|a, b| a.partial_cmp(b).unwrap());
        after.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(after, sorted_before);
        assert!(states.iter().enumerate().all(|(i, s)| s.temperature == 1.0 + i as f64));
    }

    #[test]
    fn collection_concatenates_in_order() {
        let mut a = SurrogateBatch::new();
        a.push(vec![1.0], -1.0, LikelihoodSource::True, 0).unwrap();
        let mut b = SurrogateBatch::new();
        b.push(vec![2.0], -2.0, LikelihoodSource::True, 1).unwrap();
        b.push(vec![3.0], -3.0, LikelihoodSource::True, 1).unwrap();
        let all = collect_surrogate_data(vec![a, SurrogateBatch::new(), b]);
        assert_eq!(all.targets(), &[-1.0, -2.0, -3.0]);
        assert_eq!(all.replica_origin(), &[0, 1, 1]);
    }

    #[test]
    fn chain_accounting() {
        let model = Quadratic { dim: 3 };
        let cfg = small_config();
        let (chain, report) = run_model(&cfg, &model).unwrap();
        for r in chain.replicas() {
            assert_eq!(r.records.len(), 200);
            assert!(r.records.iter().enumerate().all(|(i, rec)| rec.step == i + 1));
            assert!(r.records[..100].iter().all(|rec| rec.phase == Phase::Tempered));
            assert!(r.records[100..].iter().all(|rec| rec.phase == Phase::Exploit));
        }
        assert_eq!(chain.sample_count(), 300);
        assert_eq!(report.true_evals, 600);
        assert_eq!(report.surrogate_evals, 0);
        // 19 barriers, one or two pairs considered at each
        assert!((19..=38).contains(&report.swap_attempts), "{}", report.swap_attempts);
        assert!(report.prediction_rmse.is_none());
    }

    #[test]
    fn surrogate_runs_conserve_evaluations() {
        let model = Quadratic { dim: 3 };
        let cfg = SamplerConfig {
            surrogate_prob: 0.5,
            ..small_config()
        };
        let (chain, report) = run_model(&cfg, &model).unwrap();
        assert_eq!(report.true_evals + report.surrogate_evals, 600);
        assert_eq!(report.audit_evals, report.surrogate_evals);
        assert!(report.surrogate_evals > 0);
        assert_eq!(report.train_rmse.len() + report.skipped_intervals, 9);
        assert_eq!(chain.surrogate_trace().count() as u64, report.surrogate_evals);
        for r in chain.replicas() {
            assert!(r.records[..20].iter().all(|rec| rec.source == LikelihoodSource::True));
        }
    }

    #[test]
    fn threaded_matches_sequential() {
        let model = Quadratic { dim: 4 };
        for prob in [0.0, 0.4] {
            let seq = SamplerConfig {
                surrogate_prob: prob,
                ..small_config()
            };
            let par = SamplerConfig {
                sequential: false,
                ..seq.clone()
            };
            let (c1, mut r1) = run_model(&seq, &model).unwrap();
            let (c2, mut r2) = run_model(&par, &model).unwrap();
            assert_eq!(c1, c2);
            for r in [&mut r1, &mut r2] {
                r.elapsed_seconds = 0.0;
                r.surrogate_train_seconds = 0.0;
            }
            assert_eq!(r1, r2);
        }
    }

    #[test]
    fn early_finishers_leave_the_barrier() {
        let model = Quadratic { dim: 2 };
        for sequential in [true, false] {
            let cfg = SamplerConfig {
                replica_samples: Some(vec![200, 75, 130]),
                surrogate_prob: 0.3,
                sequential,
                ..small_config()
            };
            let (chain, report) = run_model(&cfg, &model).unwrap();
            let lens: Vec<usize> = chain.replicas().iter().map(|r| r.records.len()).collect();
            assert_eq!(lens, vec![200, 75, 130]);
            assert_eq!(report.true_evals + report.surrogate_evals, 405);
            // barriers 10..70 have 3 replicas (2 pairs considered when no swap skips ahead)
            assert!(report.swap_attempts >= 7);
        }
    }

    #[test]
    fn report_text_lists_every_field() {
        let model = Quadratic { dim: 2 };
        let (_, report) = run_model(&small_config(), &model).unwrap();
        let text = report.to_text();
        for key in [
            "elapsed_seconds",
            "true_evals = 600",
            "surrogate_evals = 0",
            "swap_attempts",
            "swap_accepts",
            "acceptance_rate.2",
            "surrogate_prediction_rmse = n/a",
        ] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
    }
}
