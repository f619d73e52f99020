use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cornet_core::data::{write_csv_with_tau, write_metadata, CsvTable};
use cornet_core::datagen::{self, CovariateLaw, Source, Streams};
use cornet_core::estimator::{fit_estimator, load_model, parse_estimators, save_model};
use cornet_core::experiment::{self, parse_dgp_config, parse_fit_settings};
use cornet_core::metrics::pehe;
use cornet_core::{load_csv, write_csv, CombinedData, Error, Estimator, FitSettings};

#[derive(Parser, Debug)]
#[command(
    name = "cornet",
    version,
    about = "CATE estimation from confounded observational and small randomized data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw an observational/randomized pair and a test set with the true CATE.
    Simulate {
        /// Data-generation file with a [scenario] section.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = experiment::DEFAULT_TEST_SIZE)]
        test_size: usize,
    },
    /// Train one estimator on observational and randomized CSVs.
    Fit {
        estimator: String,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        rand: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Optional file with a [training] section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// √PEHE of a saved model on a CSV with a `tau` column.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run a simulation sweep and write raw.csv and aggregate.csv.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Comma-separated estimator names, replacing the configured list.
        #[arg(long)]
        estimators: Option<String>,
    },
    /// Split an unconfounded CSV into a confounded observational set and a small randomized set.
    Confound {
        #[arg(long)]
        data: PathBuf,
        /// 1-based covariate index driving selection into the randomized set.
        #[arg(long)]
        select_col: usize,
        #[arg(long)]
        rand_size: usize,
        /// Outcome cut-off in arm standard deviations.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-aggregate a raw CSV.
    Report {
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Core(Error),
    AllCellsFailed(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
        Err(Failure::AllCellsFailed(n)) => {
            eprintln!("error: all {n} cells failed; see the error column of raw.csv");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            config,
            out,
            seed,
            test_size,
        } => simulate(&config, &out, seed, test_size)?,
        Command::Fit {
            estimator,
            obs,
            rand,
            out,
            config,
            seed,
        } => {
            let estimator: Estimator = estimator.parse()?;
            let settings = match config {
                Some(path) => parse_fit_settings(&read(&path)?)?,
                None => FitSettings::default(),
            };
            let data = CombinedData::new(load_csv(input(&obs)?)?, load_csv(input(&rand)?)?)?;
            let model = fit_estimator(estimator, &data, &settings, seed)?;
            save_model(&out, estimator, &model)?;
            println!("{} written to {}", estimator, out.display());
        }
        Command::Eval { model, test } => {
            let (_, model) = load_model(input(&model)?)?;
            let table = CsvTable::read(input(&test)?)?;
            let x = table.covariates()?;
            let tau = table.column("tau").ok_or_else(|| Error::Parse {
                row: 0,
                column: "tau".into(),
                message: "missing column".into(),
            })?;
            let pred = model.predict_cate(x.view())?;
            let value = pehe(pred.view(), ndarray::ArrayView1::from(tau))?.sqrt();
            if !value.is_finite() {
                return Err(Error::Numeric("non-finite PEHE".into()).into());
            }
            println!("sqrt_pehe {value}");
        }
        Command::Experiment {
            config,
            out,
            seed,
            parallelism,
            estimators,
        } => {
            let mut spec = experiment::parse_experiment(&read(&config)?)?;
            if let Some(out) = out {
                spec.out_dir = Some(out);
            }
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if let Some(p) = parallelism {
                spec.parallelism = p;
            }
            if let Some(list) = estimators {
                spec.estimators = parse_estimators(&list)?;
            }
            if spec.out_dir.is_none() {
                return Err(
                    Error::Config("no output directory: set out_dir or pass --out".into()).into(),
                );
            }
            let record = experiment::run_experiment(&spec)?;
            if record.all_failed() {
                return Err(Failure::AllCellsFailed(record.cell_wall_ms.len()));
            }
            let failed = record.rows.iter().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                eprintln!("warning: {failed} of {} rows failed", record.rows.len());
            }
            println!(
                "spec {} -> {}",
                record.spec_hash,
                record
                    .raw_path
                    .as_deref()
                    .map(Path::display)
                    .map(|d| d.to_string())
                    .unwrap_or_default()
            );
        }
        Command::Confound {
            data,
            select_col,
            rand_size,
            c,
            out,
            seed,
        } => {
            if select_col == 0 {
                return Err(Error::Config("select_col is 1-based".into()).into());
            }
            let source = load_csv(input(&data)?)?;
            let mut rng = cornet_core::seed::stream(seed, &[], "confound");
            let split = datagen::confound_split(&source, select_col - 1, rand_size, c, &mut rng)?;
            fs::create_dir_all(&out).map_err(Error::from)?;
            write_csv(&split.data.obs, &out.join("obs.csv"))?;
            write_csv(&split.data.rand, &out.join("rand.csv"))?;
            println!(
                "{} observational and {} randomized rows written to {}",
                split.data.obs.n(),
                split.data.rand.n(),
                out.display()
            );
        }
        Command::Report { raw, out } => {
            let rows = experiment::report(input(&raw)?, &out)?;
            println!("{} groups written to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn input(path: &Path) -> Result<&Path, Error> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("input file {} not found", path.display()),
        )))
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>, test_size: usize) -> Result<(), Error> {
    let mut cfg = parse_dgp_config(&read(config)?)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if test_size == 0 {
        return Err(Error::Config("test_size must be at least 1".into()));
    }
    let sim = datagen::simulate(&cfg, &mut Streams::new(cfg.seed, &[]))?;
    let mut test_rng = cornet_core::seed::stream(cfg.seed, &[], "test");
    let test = sim.truth.sample(
        Source::Observational,
        CovariateLaw::Gaussian { sd: 1.0 },
        test_size,
        &mut test_rng,
    )?;
    let tau_test = sim.truth.tau(test.x())?;

    fs::create_dir_all(out)?;
    let obs_tau = sim.truth.tau(sim.data.obs.x())?;
    let rand_tau = sim.truth.tau(sim.data.rand.x())?;
    write_csv_with_tau(&sim.data.obs, Some(obs_tau.view()), &out.join("obs.csv"))?;
    write_csv_with_tau(&sim.data.rand, Some(rand_tau.view()), &out.join("rand.csv"))?;
    write_csv_with_tau(&test, Some(tau_test.view()), &out.join("test.csv"))?;

    let mut meta = BTreeMap::new();
    meta.insert("scenario".to_string(), cfg.scenario.name().to_string());
    meta.insert("seed".to_string(), cfg.seed.to_string());
    meta.insert("d".to_string(), cfg.d.to_string());
    meta.insert("d_phi".to_string(), cfg.d_phi.to_string());
    meta.insert("n_conf".to_string(), cfg.n_conf.to_string());
    meta.insert("n_unc".to_string(), cfg.n_unc.to_string());
    meta.insert("sigma_eps".to_string(), cfg.sigma_eps.to_string());
    meta.insert("beta".to_string(), sim.truth.beta().to_string());
    meta.insert(
        "delta_test".to_string(),
        sim.truth.bias_delta(test.x())?.to_string(),
    );
    meta.insert("test_size".to_string(), test_size.to_string());
    write_metadata(&out.join("metadata.txt"), &meta)?;
    println!(
        "simulated {} observational and {} randomized rows into {}",
        sim.data.obs.n(),
        sim.data.rand.n(),
        out.display()
    );
    Ok(())
}
