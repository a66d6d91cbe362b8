use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use betamix::dependent_datagen::read_csv;
use betamix::estimators::SieveKind;
use betamix::experiments::{eval_bound, run_ols_tail, run_tables12, run_tables34, tune_sieve, write_report_csv, BoundParams, ExperimentConfig, ExperimentKind, ReportRow, DEFAULT_UPSILON};
use betamix::mixing_lattice::{build_lattice, effective_n, effective_n_bounds, BetaMixingModel};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "betamix", version, about = "Effective sample sizes, concentration bounds and Monte Carlo studies for dependent data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Indicator,
    Polynomial,
    Iid,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Polynomial,
    Pspline,
}

impl From<BasisArg> for SieveKind {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Polynomial => SieveKind::Polynomial,
            BasisArg::Pspline => SieveKind::PSpline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Tables12,
    Tables34,
    OlsTail,
}

#[derive(Subcommand)]
enum Command {
    /// Effective sample size n(β) and its two-sided bounds.
    Effn {
        #[arg(long)]
        n: u64,
        #[arg(long, value_enum, default_value = "iid")]
        model: ModelArg,
        /// Dependence length of the indicator model.
        #[arg(long, default_value_t = 1)]
        m: u64,
        /// Decay exponent of the polynomial model.
        #[arg(long, default_value_t = 2.0)]
        m0: f64,
        #[arg(long, default_value_t = 1.0)]
        beta0: f64,
        /// Moment order r > 2.
        #[arg(long, default_value_t = 4.0)]
        r: f64,
        #[arg(long, default_value_t = DEFAULT_UPSILON)]
        upsilon: usize,
    },
    /// Right-hand side of the penalized quantile regression bound; parameters come from a TOML file.
    Bound {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the confidence parameter u of the file.
        #[arg(long)]
        u: Option<f64>,
    },
    /// Monte Carlo studies of the estimators under dependence.
    Simulate {
        #[arg(value_enum)]
        experiment: ExperimentArg,
        #[command(flatten)]
        run: RunArgs,
        /// Sieve basis for tables34; overrides the config file.
        #[arg(long, value_enum)]
        basis: Option<BasisArg>,
    },
    /// Feasible sieve order for a dataset with columns y,w.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, value_enum, default_value = "polynomial")]
        basis: BasisArg,
        /// Candidate orders, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,7,8")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        threshold_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        v_const: f64,
        #[arg(long, default_value_t = DEFAULT_UPSILON)]
        upsilon: usize,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML file with ExperimentConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory for the CSV report and JSON manifest; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Serialize)]
struct EffnReport {
    n: u64,
    n_beta: f64,
    lower: f64,
    upper: f64,
    q_n0: u64,
    mu_integral: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    master_seed: u64,
    workers: Option<usize>,
    rows: usize,
    betamix_version: &'a str,
    cli_version: &'a str,
}

#[derive(Serialize)]
struct TuneReport {
    n: usize,
    m: usize,
    k_feasible: usize,
    test_set: Vec<usize>,
    s: f64,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(kind: ExperimentKind, path: Option<&Path>) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            if let Some(v) = table.get("experiment") {
                let given: ExperimentKind = v.clone().try_into()?;
                if given != kind {
                    bail!("config file describes {given:?}, not {kind:?}");
                }
            }
            let defaults = toml::Table::try_from(ExperimentConfig::default_for(kind))?;
            for (k, v) in defaults {
                table.entry(k).or_insert(v);
            }
            toml::Value::Table(table).try_into()?
        }
        None => ExperimentConfig::default_for(kind),
    };
    config.experiment = kind;
    Ok(config)
}

fn simulate(experiment: ExperimentArg, run: RunArgs, basis: Option<BasisArg>) -> Result<()> {
    let (kind, name) = match experiment {
        ExperimentArg::Tables12 => (ExperimentKind::Tables12, "tables12"),
        ExperimentArg::Tables34 => (ExperimentKind::Tables34, "tables34"),
        ExperimentArg::OlsTail => (ExperimentKind::OlsTail, "ols_tail"),
    };
    let mut config = load_config(kind, run.config.as_deref())?;
    if let Some(seed) = run.seed {
        config.master_seed = seed;
    }
    if let Some(reps) = run.reps {
        config.mc_reps = reps;
    }
    if let Some(b) = basis {
        config.basis = b.into();
    }
    config.validate()?;
    let rows: Vec<ReportRow> = match kind {
        ExperimentKind::Tables12 => run_tables12(&config, run.workers)?,
        ExperimentKind::Tables34 => run_tables34(&config, run.workers)?,
        _ => run_ols_tail(&config, run.workers)?,
    };
    match run.out {
        Some(dir) => {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let csv_path = dir.join(format!("{name}.csv"));
            write_report_csv(&rows, fs::File::create(&csv_path)?)?;
            let manifest = Manifest {
                experiment: name,
                config: &config,
                master_seed: config.master_seed,
                workers: run.workers,
                rows: rows.len(),
                betamix_version: betamix::VERSION,
                cli_version: env!("CARGO_PKG_VERSION"),
            };
            fs::write(dir.join(format!("{name}.manifest.json")), serde_json::to_string_pretty(&manifest)?)?;
            eprintln!("wrote {}", csv_path.display());
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_report_csv(&rows, &mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Effn { n, model, m, m0, beta0, r, upsilon } => {
            let model = match model {
                ModelArg::Indicator => BetaMixingModel::indicator(m)?,
                ModelArg::Polynomial => BetaMixingModel::polynomial(m0)?,
                ModelArg::Iid => BetaMixingModel::iid(),
            }
            .with_beta0(beta0)?;
            let lattice = build_lattice(n, upsilon)?;
            let eff = effective_n(&model, &lattice, r)?;
            let (lower, upper) = effective_n_bounds(&model, &lattice, r)?;
            print_json(&EffnReport { n, n_beta: eff.value, lower, upper, q_n0: eff.q_n0, mu_integral: eff.mu_integral })
        }
        Command::Bound { config, u } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut params: BoundParams = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            if let Some(u) = u {
                params.u = u;
            }
            print_json(&eval_bound(&params)?)
        }
        Command::Simulate { experiment, run, basis } => simulate(experiment, run, basis),
        Command::Tune { data, m, basis, ks, threshold_scale, v_const, upsilon } => {
            let file = fs::File::open(&data).with_context(|| format!("opening {}", data.display()))?;
            let (x, y) = read_csv(file)?;
            if x.ncols() != 1 {
                bail!("expected columns y,w but found {} covariates", x.ncols());
            }
            let w: Vec<f64> = x.column(0).iter().copied().collect();
            let sel = tune_sieve(basis.into(), &ks, &w, &y, m, upsilon, threshold_scale, v_const)?;
            print_json(&TuneReport {
                n: w.len(),
                m,
                k_feasible: ks[sel.k_feasible],
                test_set: sel.test_set.iter().map(|&i| ks[i]).collect(),
                s: sel.s,
            })
        }
    }
}
