use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};

use sapt_core::data::{self, CsvSchema};
use sapt_core::diagnostics::{self, DEFAULT_THIN};
use sapt_core::error::{Error, Result};
use sapt_core::model::{NetworkTopology, PriorConfig};
use sapt_core::orchestrator::{self, SamplerConfig};
use sapt_core::registry::Registry;
use sapt_core::surrogate::TrainConfig;
use sapt_core::tempering::{ProposalConfig, ProposalKind};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Proposal {
    /// Gaussian random walk
    Rw,
    /// Langevin-gradient steps mixed with random-walk steps
    Lg,
}

/// Surrogate-assisted parallel tempering for Bayesian neural network classifiers.
#[derive(Debug, Parser)]
#[command(name = "sapt", version)]
struct Args {
    /// Registered dataset name (iris, cancer, ionosphere, bank, pendigit, chess) or a CSV path
    #[arg(long)]
    dataset: String,
    /// Number of replicas
    #[arg(long, default_value_t = 10)]
    replicas: usize,
    /// Total samples across all replicas
    #[arg(long, default_value_t = 50_000)]
    samples: usize,
    #[arg(long, default_value_t = 50)]
    swap_interval: usize,
    /// Steps between surrogate training rounds; a multiple of the swap interval
    #[arg(long, default_value_t = 50)]
    surrogate_interval: usize,
    /// Per-step probability of using the surrogate (0 disables it)
    #[arg(long, default_value_t = 0.0)]
    surrogate_prob: f64,
    #[arg(long, default_value_t = 5.0)]
    max_temp: f64,
    #[arg(long, value_enum, default_value_t = Proposal::Rw)]
    proposal: Proposal,
    /// Probability of a Langevin step under --proposal lg
    #[arg(long, default_value_t = 0.5)]
    lg_prob: f64,
    /// Langevin learning rate
    #[arg(long, default_value_t = 0.5)]
    lg_rate: f64,
    /// Random-walk step standard deviation
    #[arg(long, default_value_t = 0.025)]
    rw_sd: f64,
    /// Fraction of each chain spent tempered and discarded
    #[arg(long, default_value_t = 0.5)]
    burn_in: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Seed for the train/test split (defaults to --seed)
    #[arg(long)]
    split_seed: Option<u64>,
    /// Run all replicas on one thread
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value = "sapt-out")]
    out_dir: PathBuf,
    /// Evaluate accuracy on every n-th posterior sample
    #[arg(long, default_value_t = DEFAULT_THIN)]
    thin: usize,
    #[arg(long, default_value_t = 0.6)]
    train_fraction: f64,
    /// Hidden units of the classifier (required for CSV paths, overrides the registry otherwise)
    #[arg(long)]
    hidden: Option<usize>,
    /// Number of classes for CSV paths (inferred from the labels when omitted)
    #[arg(long)]
    classes: Option<usize>,
    /// The CSV file has a header row
    #[arg(long)]
    skip_header: bool,
    /// Surrogate hidden widths as h1,h2
    #[arg(long, value_parser = parse_pair)]
    surrogate_hidden: Option<(usize, usize)>,
    #[arg(long, default_value_t = 20)]
    surrogate_epochs: usize,
    #[arg(long, default_value_t = 32)]
    surrogate_batch: usize,
    /// Skip true-likelihood checks of surrogate estimates (no prediction RMSE)
    #[arg(long)]
    no_audit: bool,
    /// Standard deviation of the initial parameter draw
    #[arg(long, default_value_t = 1.0)]
    init_sd: f64,
    /// Prior variance of every weight and bias
    #[arg(long, default_value_t = 25.0)]
    prior_var: f64,
    /// Directory holding datasets that are not bundled
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Seconds the manager waits for a worker before giving up
    #[arg(long, default_value_t = 600)]
    timeout: u64,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected h1,h2")?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

struct Setup {
    config: SamplerConfig,
    topology: NetworkTopology,
    prior: PriorConfig,
    train: data::Dataset,
    test: data::Dataset,
    dataset_label: String,
}

fn setup(args: &Args) -> Result<Setup> {
    let split_seed = args.split_seed.unwrap_or(args.seed);
    let registry = Registry::builtin();
    let (full, hidden, surrogate_hidden, label) = match registry.get(&args.dataset) {
        Some(entry) => (
            entry.load(args.data_dir.as_deref())?,
            args.hidden.unwrap_or(entry.hidden_units),
            args.surrogate_hidden.unwrap_or(entry.surrogate_hidden),
            entry.name.clone(),
        ),
        None => {
            let path = Path::new(&args.dataset);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "'{}' is neither a registered dataset nor an existing file",
                    args.dataset
                )));
            }
            let hidden = args
                .hidden
                .ok_or_else(|| Error::Config("--hidden is required when --dataset is a file".into()))?;
            let schema = CsvSchema {
                feature_count: None,
                class_count: args.classes,
                has_header: args.skip_header,
            };
            (
                data::load_csv(path, &schema)?,
                hidden,
                args.surrogate_hidden.unwrap_or((64, 16)),
                path.display().to_string(),
            )
        }
    };
    let topology = NetworkTopology::new(full.input_count(), hidden, full.class_count())?;
    let (train, test) = data::split(&full, args.train_fraction, split_seed)?;
    let config = SamplerConfig {
        replica_count: args.replicas,
        total_samples: args.samples,
        swap_interval: args.swap_interval,
        surrogate_interval: args.surrogate_interval,
        surrogate_prob: args.surrogate_prob,
        max_temp: args.max_temp,
        burn_in_fraction: args.burn_in,
        proposal: ProposalConfig {
            kind: match args.proposal {
                Proposal::Rw => ProposalKind::RandomWalk,
                Proposal::Lg => ProposalKind::LangevinMix,
            },
            rw_step_sd: args.rw_sd,
            lg_learning_rate: args.lg_rate,
            lg_prob: args.lg_prob,
        },
        base_seed: args.seed,
        sequential: args.sequential,
        init_sd: args.init_sd,
        surrogate_hidden,
        surrogate_training: TrainConfig {
            epochs: args.surrogate_epochs,
            batch_size: args.surrogate_batch,
        },
        audit_surrogate: !args.no_audit,
        worker_timeout: Duration::from_secs(args.timeout),
        ..SamplerConfig::default()
    };
    config.validate()?;
    if args.thin == 0 {
        return Err(Error::Config("--thin must be positive".into()));
    }
    Ok(Setup {
        config,
        topology,
        prior: PriorConfig::new(args.prior_var)?,
        train,
        test,
        dataset_label: label,
    })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|source| Error::Io { path, source })
}

fn execute(args: &Args, s: &Setup) -> Result<()> {
    let out = &args.out_dir;
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.clone(),
        source,
    })?;
    let extra = [
        ("dataset", s.dataset_label.clone()),
        ("topology", s.topology.to_string()),
        ("train_rows", s.train.len().to_string()),
        ("test_rows", s.test.len().to_string()),
        ("train_fraction", args.train_fraction.to_string()),
        ("split_seed", args.split_seed.unwrap_or(args.seed).to_string()),
        ("prior_var", s.prior.sigma_sq.to_string()),
        ("thin", args.thin.to_string()),
    ];
    write(out, "manifest.txt", &diagnostics::manifest(&s.config, &extra))?;

    let (chain, report) = orchestrator::run(&s.config, &s.train, &s.topology, s.prior)?;
    let summary = diagnostics::posterior_accuracy(&chain, &s.train, &s.test, &s.topology, args.thin, report.elapsed_seconds)?;
    let ens_train = diagnostics::ensemble_accuracy(&chain, &s.train, &s.topology, args.thin)?;
    let ens_test = diagnostics::ensemble_accuracy(&chain, &s.test, &s.topology, args.thin)?;
    let summary_text = format!(
        "{}ensemble_train_accuracy = {ens_train:.2}\nensemble_test_accuracy = {ens_test:.2}\n",
        summary.to_text()
    );

    write(out, "report.txt", &format!("{}{}", report.to_text(), summary_text))?;
    write(out, "summary.txt", &summary_text)?;
    write(out, "surrogate_report.txt", &diagnostics::surrogate_report(&report, &chain))?;
    write(out, "surrogate_trace.csv", &diagnostics::surrogate_trace_csv(&chain))?;
    diagnostics::emit_posterior(&chain, &s.topology.parameter_names(), out)?;

    println!("dataset {} ({}), {} posterior samples", s.dataset_label, s.topology, chain.sample_count());
    print!("{summary_text}");
    println!(
        "true evals {}, surrogate evals {}, swap acceptance {:.3}, elapsed {:.1}s",
        report.true_evals,
        report.surrogate_evals,
        report.swap_acceptance_rate(),
        report.elapsed_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let setup = match setup(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("sapt: {e}");
            return ExitCode::from(1);
        }
    };
    match execute(&args, &setup) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sapt: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
