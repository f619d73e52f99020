//! Declarative simulation sweeps: seeded replications over a parameter grid,
//! raw and aggregated CSV reports.
//!
//! Data for replication `r` come from streams keyed by `(seed, r)` only, so
//! every grid point sees the same underlying draws (common random numbers);
//! observational rows are drawn one at a time, which makes smaller `n_conf`
//! a prefix of larger ones. Model training is keyed by `(seed, grid, r)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::baselines::Propensity;
use crate::datagen::{self, DgpConfig, Scenario, Streams};
use crate::error::{Error, Result};
use crate::estimator::{fit_estimators, Estimator, FitSettings};
use crate::metrics::{mean_sd, pehe};
use crate::seed;

pub const DEFAULT_TEST_SIZE: usize = 2000;
pub const RAW_HEADER: [&str; 9] = [
    "scenario",
    "grid_key",
    "grid_value",
    "estimator",
    "rep",
    "seed",
    "sqrt_pehe",
    "wall_ms",
    "error",
];
pub const AGGREGATE_HEADER: [&str; 7] = [
    "scenario",
    "grid_key",
    "grid_value",
    "estimator",
    "mean_sqrt_pehe",
    "sd_sqrt_pehe",
    "n_reps",
];
pub const SD_NOTE: &str =
    "# sd_sqrt_pehe is the sample standard deviation (ddof = 1); 0 when n_reps = 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SweepKey {
    NConf,
    NUnc,
    SigmaU,
    Beta,
    TargetDelta,
    BetaPhi,
    A,
}

impl SweepKey {
    pub fn name(self) -> &'static str {
        match self {
            SweepKey::NConf => "n_conf",
            SweepKey::NUnc => "n_unc",
            SweepKey::SigmaU => "sigma_u",
            SweepKey::Beta => "beta",
            SweepKey::TargetDelta => "target_delta",
            SweepKey::BetaPhi => "beta_phi",
            SweepKey::A => "a",
        }
    }

    /// Applies one grid value to a configuration template.
    pub fn apply(self, cfg: &mut DgpConfig, value: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{} must be a positive integer, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            SweepKey::NConf => cfg.n_conf = count(value)?,
            SweepKey::NUnc => cfg.n_unc = count(value)?,
            SweepKey::SigmaU => match &mut cfg.scenario {
                Scenario::MatchedGaussian { sigma_u } => *sigma_u = value,
                _ => cfg.sigma_u = value,
            },
            SweepKey::Beta => {
                cfg.beta = value;
                cfg.target_delta = None;
            }
            SweepKey::TargetDelta => cfg.target_delta = Some(value),
            SweepKey::BetaPhi => match &mut cfg.scenario {
                Scenario::NoSharedRep { beta_phi } => *beta_phi = value,
                _ => {
                    return Err(Error::Config(
                        "beta_phi sweeps need the no_shared_rep scenario".into(),
                    ))
                }
            },
            SweepKey::A => match &mut cfg.scenario {
                Scenario::OverlapCube { a } => *a = value,
                Scenario::MatchedGaussian { sigma_u } => *sigma_u = datagen::matched_sigma_u(value),
                _ => {
                    return Err(Error::Config(
                        "`a` sweeps need the overlap_cube or matched_gaussian scenario".into(),
                    ))
                }
            },
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepDim {
    pub key: SweepKey,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Written to the `scenario` column.
    pub name: String,
    pub dgp: DgpConfig,
    pub sweep: Vec<SweepDim>,
    pub estimators: Vec<Estimator>,
    pub reps: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub parallelism: usize,
    pub settings: FitSettings,
    pub test_size: usize,
    /// Fill the `wall_ms` column; off by default so raw files are reproducible byte for byte.
    pub record_wall_time: bool,
}

/// One grid point: the sweep values in dimension order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub values: Vec<(SweepKey, f64)>,
}

impl GridPoint {
    pub fn key(&self) -> String {
        self.values
            .iter()
            .map(|(k, _)| k.name())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn value(&self) -> String {
        self.values
            .iter()
            .map(|(_, v)| format!("{v}"))
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::Config(
                "at least one sweep dimension is required".into(),
            ));
        }
        if let Some(dim) = self.sweep.iter().find(|d| d.values.is_empty()) {
            return Err(Error::Config(format!(
                "sweep `{}` has no values",
                dim.key.name()
            )));
        }
        for (i, dim) in self.sweep.iter().enumerate() {
            if self.sweep[..i].iter().any(|d| d.key == dim.key) {
                return Err(Error::Config(format!(
                    "sweep `{}` listed twice",
                    dim.key.name()
                )));
            }
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if self.reps == 0 || self.parallelism == 0 || self.test_size == 0 {
            return Err(Error::Config(
                "reps, parallelism and test_size must be at least 1".into(),
            ));
        }
        self.settings.net.validate()?;
        for point in self.grid() {
            self.config_at(&point)?.validate()?;
        }
        Ok(())
    }

    /// Cartesian product of the sweep dimensions, last dimension fastest.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = vec![GridPoint { values: vec![] }];
        for dim in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    dim.values.iter().map(move |&v| {
                        let mut values = p.values.clone();
                        values.push((dim.key, v));
                        GridPoint { values }
                    })
                })
                .collect();
        }
        points
    }

    pub fn config_at(&self, point: &GridPoint) -> Result<DgpConfig> {
        let mut cfg = self.dgp.clone();
        for &(key, value) in &point.values {
            key.apply(&mut cfg, value)?;
        }
        Ok(cfg)
    }

    /// Stable FNV-1a digest of the spec's canonical debug rendering.
    pub fn spec_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = None;
        canonical.parallelism = 1;
        format!("{:016x}", seed::label(&format!("{canonical:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub scenario: String,
    pub grid_key: String,
    pub grid_value: String,
    pub estimator: String,
    pub rep: usize,
    pub seed: u64,
    pub sqrt_pehe: f64,
    pub wall_ms: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scenario: String,
    pub grid_key: String,
    pub grid_value: String,
    pub estimator: String,
    pub mean_sqrt_pehe: f64,
    pub sd_sqrt_pehe: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub spec_hash: String,
    pub rows: Vec<RawRow>,
    /// Wall time of each (grid point, rep) cell in milliseconds, in cell order.
    pub cell_wall_ms: Vec<f64>,
    pub raw_path: Option<PathBuf>,
    pub aggregate_path: Option<PathBuf>,
}

impl RunRecord {
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        aggregate(&self.rows)
    }

    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| !r.error.is_empty())
    }
}

/// Training seed of a cell.
pub fn cell_seed(base: u64, grid_index: usize, rep: usize) -> u64 {
    seed::mix(base, &[grid_index as u64, rep as u64])
}

fn run_cell(
    spec: &ExperimentSpec,
    grid_index: usize,
    point: &GridPoint,
    rep: usize,
) -> (Vec<RawRow>, f64) {
    let start = Instant::now();
    let train_seed = cell_seed(spec.seed, grid_index, rep);
    let row = |estimator: Estimator, value: f64, error: String| RawRow {
        scenario: spec.name.clone(),
        grid_key: point.key(),
        grid_value: point.value(),
        estimator: estimator.name().to_owned(),
        rep,
        seed: train_seed,
        sqrt_pehe: value,
        wall_ms: None,
        error,
    };
    let sim = spec.config_at(point).and_then(|cfg| {
        let mut streams = Streams::new(spec.seed, &[rep as u64]);
        let sim = datagen::simulate(&cfg, &mut streams)?;
        let mut test_rng = seed::stream(spec.seed, &[rep as u64], "test");
        let test = datagen::test_set(&sim.truth, spec.test_size, &mut test_rng)?;
        Ok((sim, test))
    });
    let rows = match sim {
        Err(e) => spec
            .estimators
            .iter()
            .map(|&est| row(est, f64::NAN, format!("data generation failed: {e}")))
            .collect(),
        Ok((sim, (x_test, tau_test))) => {
            fit_estimators(&spec.estimators, &sim.data, &spec.settings, train_seed)
                .into_iter()
                .map(|(est, fitted)| {
                    let score = fitted
                        .and_then(|m| m.predict_cate(x_test.view()))
                        .and_then(|pred| pehe(pred.view(), tau_test.view()))
                        .and_then(|p| {
                            if p.is_finite() {
                                Ok(p.sqrt())
                            } else {
                                Err(Error::Numeric("non-finite PEHE".into()))
                            }
                        });
                    match score {
                        Ok(v) => row(est, v, String::new()),
                        Err(e) => row(est, f64::NAN, e.to_string()),
                    }
                })
                .collect()
        }
    };
    (rows, start.elapsed().as_secs_f64() * 1e3)
}

/// Runs every (grid point, rep) cell, at most `parallelism` at a time, and
/// writes `raw.csv` and `aggregate.csv` to `out_dir` when set. Rows are in
/// canonical (grid point, rep, estimator) order regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunRecord> {
    spec.validate()?;
    let grid = spec.grid();
    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..spec.reps).map(move |r| (g, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<(Vec<RawRow>, f64)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(g, r)| {
                let out = run_cell(spec, g, &grid[g], r);
                log::info!(
                    "{} {}={} rep {r} done in {:.0} ms",
                    spec.name,
                    grid[g].key(),
                    grid[g].value(),
                    out.1
                );
                out
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(cells.len() * spec.estimators.len());
    let mut cell_wall_ms = Vec::with_capacity(cells.len());
    for (mut cell_rows, ms) in results {
        if spec.record_wall_time {
            for r in &mut cell_rows {
                r.wall_ms = Some(ms);
            }
        }
        rows.extend(cell_rows);
        cell_wall_ms.push(ms);
    }
    let mut record = RunRecord {
        spec_hash: spec.spec_hash(),
        rows,
        cell_wall_ms,
        raw_path: None,
        aggregate_path: None,
    };
    if let Some(dir) = &spec.out_dir {
        fs::create_dir_all(dir)?;
        let raw = dir.join("raw.csv");
        let agg = dir.join("aggregate.csv");
        write_raw_csv(&raw, &record.rows)?;
        write_aggregate_csv(&agg, &record.aggregate())?;
        record.raw_path = Some(raw);
        record.aggregate_path = Some(agg);
    }
    Ok(record)
}

/// Groups raw rows by (scenario, grid point, estimator) in first-seen order.
pub fn aggregate(rows: &[RawRow]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.scenario.clone(),
            r.grid_key.clone(),
            r.grid_value.clone(),
            r.estimator.clone(),
        );
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r.sqrt_pehe);
    }
    order
        .into_iter()
        .map(|key| {
            let values = &groups[&key];
            let (mean, sd, n) = mean_sd(values).unwrap_or((f64::NAN, f64::NAN, 0));
            AggregateRow {
                scenario: key.0,
                grid_key: key.1,
                grid_value: key.2,
                estimator: key.3,
                mean_sqrt_pehe: mean,
                sd_sqrt_pehe: sd,
                n_reps: n,
            }
        })
        .collect()
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

pub fn write_raw_csv(path: &Path, rows: &[RawRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RAW_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.grid_key.clone(),
            r.grid_value.clone(),
            r.estimator.clone(),
            r.rep.to_string(),
            r.seed.to_string(),
            fmt_f64(r.sqrt_pehe),
            r.wall_ms.map(fmt_f64).unwrap_or_default(),
            r.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers != RAW_HEADER {
        return Err(Error::Parse {
            row: 0,
            column: "header".into(),
            message: format!("expected `{}`", RAW_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let get = |j: usize| rec.get(j).unwrap_or("").to_owned();
        let parse_err = |column: &str, cell: String| Error::Parse {
            row,
            column: column.into(),
            message: format!("`{cell}` is not valid"),
        };
        let wall = get(7);
        rows.push(RawRow {
            scenario: get(0),
            grid_key: get(1),
            grid_value: get(2),
            estimator: get(3),
            rep: get(4).parse().map_err(|_| parse_err("rep", get(4)))?,
            seed: get(5).parse().map_err(|_| parse_err("seed", get(5)))?,
            sqrt_pehe: get(6).parse().map_err(|_| parse_err("sqrt_pehe", get(6)))?,
            wall_ms: if wall.is_empty() {
                None
            } else {
                Some(
                    wall.parse()
                        .map_err(|_| parse_err("wall_ms", wall.clone()))?,
                )
            },
            error: get(8),
        });
    }
    Ok(rows)
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{SD_NOTE}");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.grid_key.clone(),
            r.grid_value.clone(),
            r.estimator.clone(),
            fmt_f64(r.mean_sqrt_pehe),
            fmt_f64(r.sd_sqrt_pehe),
            r.n_reps.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8_lossy(&bytes));
    fs::write(path, out)?;
    Ok(())
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let get = |j: usize| rec.get(j).unwrap_or("").to_owned();
        let num = |j: usize, col: &str| -> Result<f64> {
            get(j).parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: col.into(),
                message: format!("`{}` is not a number", get(j)),
            })
        };
        rows.push(AggregateRow {
            scenario: get(0),
            grid_key: get(1),
            grid_value: get(2),
            estimator: get(3),
            mean_sqrt_pehe: num(4, "mean_sqrt_pehe")?,
            sd_sqrt_pehe: num(5, "sd_sqrt_pehe")?,
            n_reps: num(6, "n_reps")? as usize,
        });
    }
    Ok(rows)
}

/// Re-aggregates a raw CSV into `out`.
pub fn report(raw: &Path, out: &Path) -> Result<Vec<AggregateRow>> {
    let rows = aggregate(&read_raw_csv(raw)?);
    write_aggregate_csv(out, &rows)?;
    Ok(rows)
}

// ---- configuration files ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: ExperimentSection,
    #[serde(default)]
    scenario: ScenarioSection,
    sweep: SweepSection,
    #[serde(default)]
    training: TrainingSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_reps")]
    reps: usize,
    estimators: Vec<String>,
    #[serde(default = "default_one")]
    parallelism: usize,
    out_dir: Option<PathBuf>,
    #[serde(default = "default_test_size")]
    test_size: usize,
    #[serde(default)]
    record_wall_time: bool,
}

fn default_reps() -> usize {
    10
}

fn default_one() -> usize {
    1
}

fn default_test_size() -> usize {
    DEFAULT_TEST_SIZE
}

/// `[scenario]` section; also the format of a standalone data-generation file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: Option<String>,
    pub d: Option<usize>,
    pub d_phi: Option<usize>,
    pub n_conf: Option<usize>,
    pub n_unc: Option<usize>,
    pub sigma_u: Option<f64>,
    pub beta: Option<f64>,
    pub target_delta: Option<f64>,
    pub sigma_eps: Option<f64>,
    pub beta_phi: Option<f64>,
    pub a: Option<f64>,
    pub seed: Option<u64>,
    pub phi_hidden: Option<Vec<usize>>,
}

impl ScenarioSection {
    pub fn to_config(&self) -> Result<DgpConfig> {
        let mut cfg = DgpConfig::default();
        let kind = self.kind.as_deref().unwrap_or("shared_rep");
        cfg.scenario = match kind {
            "shared_rep" => Scenario::SharedRep,
            "no_shared_rep" => Scenario::NoSharedRep {
                beta_phi: self.beta_phi.unwrap_or(0.0),
            },
            "overlap_cube" => Scenario::OverlapCube {
                a: self.a.unwrap_or(3.0),
            },
            "matched_gaussian" => Scenario::MatchedGaussian {
                sigma_u: match (self.sigma_u, self.a) {
                    (Some(s), _) => s,
                    (None, Some(a)) => datagen::matched_sigma_u(a),
                    (None, None) => 1.0,
                },
            },
            other => return Err(Error::Config(format!("unknown scenario kind `{other}`"))),
        };
        if self.beta_phi.is_some() && kind != "no_shared_rep" {
            return Err(Error::Config(
                "beta_phi only applies to no_shared_rep".into(),
            ));
        }
        if self.a.is_some() && !matches!(kind, "overlap_cube" | "matched_gaussian") {
            return Err(Error::Config(
                "a only applies to overlap_cube and matched_gaussian".into(),
            ));
        }
        if self.beta.is_some() && self.target_delta.is_some() {
            return Err(Error::Config(
                "set either beta or target_delta, not both".into(),
            ));
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field.clone() { cfg.$field = v; })* };
        }
        set!(d, d_phi, n_conf, n_unc, sigma_u, beta, sigma_eps, seed, phi_hidden);
        cfg.target_delta = self.target_delta;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a standalone `[scenario]`-style data-generation file.
pub fn parse_dgp_config(text: &str) -> Result<DgpConfig> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct File {
        scenario: ScenarioSection,
    }
    let file: File = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.scenario.to_config()
}

/// Parses a standalone `[training]` file.
pub fn parse_fit_settings(text: &str) -> Result<FitSettings> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct File {
        #[serde(default)]
        training: TrainingSection,
    }
    let file: File = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.training.to_settings()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    n_conf: Option<Vec<f64>>,
    n_unc: Option<Vec<f64>>,
    sigma_u: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
    target_delta: Option<Vec<f64>>,
    beta_phi: Option<Vec<f64>>,
    a: Option<Vec<f64>>,
}

impl SweepSection {
    fn dims(self) -> Vec<SweepDim> {
        [
            (SweepKey::NConf, self.n_conf),
            (SweepKey::NUnc, self.n_unc),
            (SweepKey::SigmaU, self.sigma_u),
            (SweepKey::Beta, self.beta),
            (SweepKey::TargetDelta, self.target_delta),
            (SweepKey::BetaPhi, self.beta_phi),
            (SweepKey::A, self.a),
        ]
        .into_iter()
        .filter_map(|(key, values)| values.map(|values| SweepDim { key, values }))
        .collect()
    }
}

/// `[training]` section.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub hidden: Option<Vec<usize>>,
    pub d_phi: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub min_steps: Option<usize>,
    pub learning_rate: Option<f64>,
    pub mixup_alpha: Option<f64>,
    pub adversary_hidden: Option<Vec<usize>>,
    pub tau_avg_lambda: Option<f64>,
    pub tau_weight_lambda: Option<f64>,
    /// `"known:<e>"` or `"logistic"`.
    pub propensity: Option<String>,
    pub lambda_d: Option<f64>,
    pub lambda_delta: Option<f64>,
}

impl TrainingSection {
    pub fn to_settings(&self) -> Result<FitSettings> {
        let mut s = FitSettings::default();
        if let Some(v) = &self.hidden {
            s.net.hidden = v.clone();
        }
        if let Some(v) = self.d_phi {
            s.net.d_phi = v;
        }
        if let Some(v) = self.epochs {
            s.net.epochs = v;
        }
        if let Some(v) = self.batch_size {
            s.net.batch_size = v;
        }
        if let Some(v) = self.min_steps {
            s.net.min_steps = v;
        }
        if let Some(v) = self.learning_rate {
            s.net.adam.learning_rate = v;
        }
        if let Some(v) = self.mixup_alpha {
            s.mixup_alpha = v;
        }
        if let Some(v) = &self.adversary_hidden {
            s.adversary_hidden = v.clone();
        }
        if let Some(v) = self.tau_avg_lambda {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("tau_avg_lambda {v} outside [0, 1]")));
            }
            s.tau_avg_lambda = v;
        }
        s.tau_weight_lambda = self.tau_weight_lambda;
        s.lambda_d = self.lambda_d;
        s.lambda_delta = self.lambda_delta;
        if let Some(p) = &self.propensity {
            s.propensity = parse_propensity(p)?;
        }
        s.net.validate()?;
        Ok(s)
    }
}

pub fn parse_propensity(text: &str) -> Result<Propensity> {
    let text = text.trim();
    if text == "logistic" {
        return Ok(Propensity::Logistic);
    }
    if let Some(e) = text.strip_prefix("known:") {
        let e: f64 = e
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad propensity `{text}`")))?;
        if e > 0.0 && e < 1.0 {
            return Ok(Propensity::Known(e));
        }
    }
    Err(Error::Config(format!(
        "propensity must be `logistic` or `known:<e>` with e in (0, 1), got `{text}`"
    )))
}

/// Parses an experiment configuration. Unknown estimator names and unknown
/// keys are configuration errors.
pub fn parse_experiment(text: &str) -> Result<ExperimentSpec> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let estimators = file
        .experiment
        .estimators
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<Estimator>>>()?;
    let spec = ExperimentSpec {
        name: file.experiment.name,
        dgp: file.scenario.to_config()?,
        sweep: file.sweep.dims(),
        estimators,
        reps: file.experiment.reps,
        seed: file.experiment.seed,
        out_dir: file.experiment.out_dir,
        parallelism: file.experiment.parallelism,
        settings: file.training.to_settings()?,
        test_size: file.experiment.test_size,
        record_wall_time: file.experiment.record_wall_time,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentSpec> {
    parse_experiment(&fs::read_to_string(path)?)
}
