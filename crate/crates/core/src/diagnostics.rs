//! Turning a finished run into numbers and files.
//!
//! Accuracy is reported two ways: per sample (the classifier given by each
//! retained parameter vector, summarised as mean/std/best) and as an
//! ensemble (class probabilities averaged over the retained samples before
//! taking the argmax).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{predict_accuracy, predict_proba, NetworkTopology, ParamVector, argmax};
use crate::orchestrator::{PosteriorChain, RunReport, SamplerConfig};
use crate::tempering::ProposalKind;

pub const DEFAULT_THIN: usize = 10;
pub const HISTOGRAM_BINS: usize = 50;

/// Mean, population standard deviation and best of per-sample accuracies (percent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySummary {
    pub train_mean: f64,
    pub train_std: f64,
    pub train_best: f64,
    pub test_mean: f64,
    pub test_std: f64,
    pub test_best: f64,
    pub elapsed_minutes: f64,
    pub samples_evaluated: usize,
}

impl AccuracySummary {
    pub fn to_text(&self) -> String {
        format!(
            "train_accuracy = [{:.2}, {:.2}, {:.2}]\ntest_accuracy = [{:.2}, {:.2}, {:.2}]\nelapsed_minutes = {:.4}\nsamples_evaluated = {}\n",
            self.train_mean,
            self.train_std,
            self.train_best,
            self.test_mean,
            self.test_std,
            self.test_best,
            self.elapsed_minutes,
            self.samples_evaluated
        )
    }
}

fn thinned(chain: &PosteriorChain, thin: usize) -> Result<Vec<ParamVector>> {
    if thin == 0 {
        return Err(Error::config("thinning stride must be positive"));
    }
    let picked: Vec<ParamVector> = chain
        .samples()
        .step_by(thin)
        .map(|s| ParamVector::new(s.to_vec()))
        .collect::<Result<_>>()?;
    if picked.is_empty() {
        return Err(Error::contract("posterior has no samples"));
    }
    Ok(picked)
}

fn mean_std_best(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), best)
}

/// Per-sample train and test accuracy over every `thin`-th posterior sample.
pub fn posterior_accuracy(
    chain: &PosteriorChain,
    train: &Dataset,
    test: &Dataset,
    topology: &NetworkTopology,
    thin: usize,
    elapsed_seconds: f64,
) -> Result<AccuracySummary> {
    let samples = thinned(chain, thin)?;
    let mut tr = Vec::with_capacity(samples.len());
    let mut te = Vec::with_capacity(samples.len());
    for theta in &samples {
        tr.push(predict_accuracy(theta, train, topology)?);
        te.push(predict_accuracy(theta, test, topology)?);
    }
    let (train_mean, train_std, train_best) = mean_std_best(&tr);
    let (test_mean, test_std, test_best) = mean_std_best(&te);
    Ok(AccuracySummary {
        train_mean,
        train_std,
        train_best,
        test_mean,
        test_std,
        test_best,
        elapsed_minutes: elapsed_seconds / 60.0,
        samples_evaluated: samples.len(),
    })
}

/// Accuracy of the posterior-mean predictive distribution.
pub fn ensemble_accuracy(chain: &PosteriorChain, dataset: &Dataset, topology: &NetworkTopology, thin: usize) -> Result<f64> {
    let samples = thinned(chain, thin)?;
    let mut mean = vec![0.0; dataset.len() * topology.output_count];
    for theta in &samples {
        for (m, p) in mean.iter_mut().zip(predict_proba(theta, dataset, topology)?) {
            *m += p;
        }
    }
    let hits = mean
        .chunks_exact(topology.output_count)
        .enumerate()
        .filter(|(t, p)| argmax(p) == dataset.label(*t))
        .count();
    Ok(100.0 * hits as f64 / dataset.len() as f64)
}

/// Surrogate accuracy summary, or a "not applicable" note when the run did not use one.
pub fn surrogate_report(report: &RunReport, chain: &PosteriorChain) -> String {
    if !report.surrogate_enabled {
        return "surrogate = not applicable (surrogate probability was 0)\n".into();
    }
    let mut out = String::new();
    let _ = writeln!(out, "surrogate_evals = {}", report.surrogate_evals);
    let _ = writeln!(out, "trace_rows = {}", chain.surrogate_trace().count());
    match report.prediction_rmse {
        Some(r) => {
            let _ = writeln!(out, "prediction_rmse = {r}");
        }
        None => out.push_str("prediction_rmse = n/a\n"),
    }
    if report.train_rmse.is_empty() {
        out.push_str("train_rmse_mean = n/a\ntrain_rmse_std = n/a\n");
    } else {
        let (mean, std, _) = mean_std_best(&report.train_rmse);
        let _ = writeln!(out, "train_rmse_mean = {mean:e}");
        let _ = writeln!(out, "train_rmse_std = {std:e}");
    }
    let _ = writeln!(out, "intervals_trained = {}", report.train_rmse.len());
    let _ = writeln!(out, "intervals_skipped = {}", report.skipped_intervals);
    out
}

/// One row per surrogate-path step.
pub fn surrogate_trace_csv(chain: &PosteriorChain) -> String {
    let mut out = String::from("replica,step,source,surrogate_log_lik,pseudo_log_lik,true_log_lik\n");
    for row in chain.surrogate_trace() {
        let truth = row.true_log_lik.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},surrogate,{},{},{}",
            row.replica, row.step, row.surrogate_log_lik, row.pseudo_log_lik, truth);
    }
    out
}

/// Equal-width histogram over `[min, max]`; the top edge falls in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
        .collect()
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes `posterior_<param>.csv` per parameter, `trace_replica<i>.csv` per
/// replica and `histograms.csv`. Returns the files written.
pub fn emit_posterior(chain: &PosteriorChain, param_names: &[String], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if chain.sample_count() == 0 {
        return Err(Error::contract("posterior has no samples"));
    }
    if param_names.len() != chain.dim() {
        return Err(Error::contract(format!(
            "{} parameter names for {} parameters",
            param_names.len(),
            chain.dim()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(chain.sample_count()); chain.dim()];
    for s in chain.samples() {
        for (col, &v) in columns.iter_mut().zip(s) {
            col.push(v);
        }
    }
    let mut hist = String::from("param,bin,lower,upper,count\n");
    for (name, col) in param_names.iter().zip(&columns) {
        let mut csv = format!("sample,{name}\n");
        for (i, v) in col.iter().enumerate() {
            let _ = writeln!(csv, "{i},{v}");
        }
        write(out_dir.join(format!("posterior_{name}.csv")), &csv, &mut written)?;
        for (b, (lo, hi, c)) in histogram(col, HISTOGRAM_BINS).into_iter().enumerate() {
            let _ = writeln!(hist, "{name},{b},{lo},{hi},{c}");
        }
    }
    write(out_dir.join("histograms.csv"), &hist, &mut written)?;

    for r in chain.replicas() {
        let mut csv = String::from("step,log_lik,source,phase,accepted\n");
        for rec in &r.records {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                rec.step, rec.log_lik, rec.source, rec.phase, rec.accepted as u8
            );
        }
        write(out_dir.join(format!("trace_replica{}.csv", r.replica)), &csv, &mut written)?;
    }
    Ok(written)
}

/// Everything needed to repeat a run: the sampler configuration plus caller-supplied context.
pub fn manifest(config: &SamplerConfig, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    for (k, v) in extra {
        let _ = writeln!(out, "{k} = {v}");
    }
    let p = &config.proposal;
    let kind = match p.kind {
        ProposalKind::RandomWalk => "rw",
        ProposalKind::LangevinMix => "lg",
    };
    let fields: [(&str, String); 19] = [
        ("seed", config.base_seed.to_string()),
        ("replicas", config.replica_count.to_string()),
        ("samples", config.total_samples.to_string()),
        ("samples_per_replica", config.samples_per_replica().to_string()),
        ("swap_interval", config.swap_interval.to_string()),
        ("surrogate_interval", config.surrogate_interval.to_string()),
        ("surrogate_prob", config.surrogate_prob.to_string()),
        ("max_temp", config.max_temp.to_string()),
        ("burn_in", config.burn_in_fraction.to_string()),
        ("proposal", kind.to_string()),
        ("rw_sd", p.rw_step_sd.to_string()),
        ("lg_rate", p.lg_learning_rate.to_string()),
        ("lg_prob", p.lg_prob.to_string()),
        ("init_sd", config.init_sd.to_string()),
        (
            "surrogate_hidden",
            format!("{},{}", config.surrogate_hidden.0, config.surrogate_hidden.1),
        ),
        ("surrogate_epochs", config.surrogate_training.epochs.to_string()),
        ("surrogate_batch", config.surrogate_training.batch_size.to_string()),
        ("audit_surrogate", config.audit_surrogate.to_string()),
        ("sequential", config.sequential.to_string()),
    ];
    for (k, v) in fields {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_like() -> (Dataset, NetworkTopology) {
        let rows = vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]];
        (
            Dataset::from_rows("toy", rows, vec![0, 1, 0, 1], 2).unwrap(),
            NetworkTopology::new(1, 1, 2).unwrap(),
        )
    }

    /// Hidden unit copies the input; output 1 wins when it fires.
    fn separating() -> ParamVector {
        // w, bh, v0, v1, bo0, bo1
        ParamVector::new(vec![20.0, -10.0, -5.0, 5.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn single_sample_has_zero_spread() {
        let (ds, topo) = xor_like();
        let chain = PosteriorChain::from_samples(6, &[separating()]).unwrap();
        let s = posterior_accuracy(&chain, &ds, &ds, &topo, 10, 0.0).unwrap();
        assert_eq!((s.test_mean, s.test_std, s.test_best), (100.0, 0.0, 100.0));
        assert_eq!(s.samples_evaluated, 1);
    }

    #[test]
    fn statistics_ignore_duplication() {
        let (ds, topo) = xor_like();
        let a = separating();
        let b = ParamVector::zeros(6);
        let once = PosteriorChain::from_samples(6, &[a.clone(), b.clone()]).unwrap();
        let twice = PosteriorChain::from_samples(6, &[a.clone(), a, b.clone(), b]).unwrap();
        let s1 = posterior_accuracy(&once, &ds, &ds, &topo, 1, 0.0).unwrap();
        let s2 = posterior_accuracy(&twice, &ds, &ds, &topo, 1, 0.0).unwrap();
        assert_eq!(s1.test_mean, s2.test_mean);
        assert!((s1.test_std - s2.test_std).abs() < 1e-12);
        assert_eq!(s1.test_best, s2.test_best);
        assert_eq!((s1.test_mean, s1.test_std), (75.0, 25.0));
    }

    #[test]
    fn thinning_takes_every_kth() {
        let (ds, topo) = xor_like();
        let samples: Vec<ParamVector> = (0..25).map(|_| separating()).collect();
        let chain = PosteriorChain::from_samples(6, &samples).unwrap();
        let s = posterior_accuracy(&chain, &ds, &ds, &topo, 10, 120.0).unwrap();
        assert_eq!(s.samples_evaluated, 3);
        assert_eq!(s.elapsed_minutes, 2.0);
        assert!(posterior_accuracy(&chain, &ds, &ds, &topo, 0, 0.0).is_err());
    }

    #[test]
    fn empty_posterior_is_an_error() {
        let (ds, topo) = xor_like();
        let chain = PosteriorChain::from_samples(6, &[]).unwrap();
        assert!(posterior_accuracy(&chain, &ds, &ds, &topo, 1, 0.0).is_err());
        let dir = tempfile::tempdir().unwrap();
        let names: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
        assert!(emit_posterior(&chain, &names, dir.path()).is_err());
    }

    #[test]
    fn ensemble_averages_probabilities() {
        let (ds, topo) = xor_like();
        let chain = PosteriorChain::from_samples(6, &[separating(), ParamVector::zeros(6)]).unwrap();
        assert_eq!(ensemble_accuracy(&chain, &ds, &topo, 1).unwrap(), 100.0);
    }

    #[test]
    fn histogram_counts_every_value() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let h = histogram(&values, 50);
        assert_eq!(h.len(), 50);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 1000);
        assert_eq!(histogram(&[3.0, 3.0], 5).iter().map(|b| b.2).sum::<usize>(), 2);
    }

    #[test]
    fn surrogate_report_when_disabled() {
        let chain = PosteriorChain::from_samples(1, &[ParamVector::zeros(1)]).unwrap();
        let text = surrogate_report(&RunReport::default(), &chain);
        assert!(text.contains("not applicable"));
    }
}
