//! Synthetic data-generating processes for the simulation studies.
//!
//! Outcomes follow `Y = φ(X)·w_T + ε`, where observational data use the
//! confounded heads `w_c` and randomized data the unconfounded heads
//! `w_u = w_c + δ`. Treatment is Bernoulli(1/2) in both sources.

mod protocol;

pub use protocol::{confound_split, confounding_filter, ConfoundedSplit};

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{CombinedData, TreatmentDataset};
use crate::error::{Error, Result};
use crate::net::{row_abs_sum_max, LayerStack, OutputActivation, Representation};
use crate::seed::{self, Rng};

/// Default Monte-Carlo sample count for the confounding bias Δ.
pub const DELTA_MC_ROWS: usize = 10_000;

/// Per-coordinate probability mass a matched Gaussian puts inside `[-a, a]`
/// when `σ_u = a / 3`.
pub const MATCHED_COVERAGE: f64 = 0.9973;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    SharedRep,
    NoSharedRep { beta_phi: f64 },
    OverlapCube { a: f64 },
    MatchedGaussian { sigma_u: f64 },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::SharedRep => "shared_rep",
            Scenario::NoSharedRep { .. } => "no_shared_rep",
            Scenario::OverlapCube { .. } => "overlap_cube",
            Scenario::MatchedGaussian { .. } => "matched_gaussian",
        }
    }
}

/// Scale of the Gaussian whose per-coordinate mass on `[-a, a]` is 0.9973.
pub fn matched_sigma_u(a: f64) -> f64 {
    a / 3.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub scenario: Scenario,
    pub d: usize,
    pub d_phi: usize,
    pub n_conf: usize,
    pub n_unc: usize,
    /// Randomized covariate scale for the Gaussian scenarios.
    pub sigma_u: f64,
    /// `‖δ_t‖₁`; ignored when `target_delta` is set.
    pub beta: f64,
    /// Calibrate `beta` so that the confounding bias Δ hits this value.
    pub target_delta: Option<f64>,
    pub sigma_eps: f64,
    pub seed: u64,
    /// Hidden widths of the generating representation.
    pub phi_hidden: Vec<usize>,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            scenario: Scenario::SharedRep,
            d: 10,
            d_phi: 8,
            n_conf: 1000,
            n_unc: 50,
            sigma_u: 1.0,
            beta: 0.0,
            target_delta: None,
            sigma_eps: 0.5,
            seed: 0,
            phi_hidden: vec![32, 32],
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.d == 0 || self.d_phi == 0 {
            return bad("d and d_phi must be positive");
        }
        if self.n_conf < 1 || self.n_unc < 1 {
            return bad("n_conf and n_unc must be at least 1");
        }
        if !(self.sigma_u > 0.0) || !(self.sigma_eps > 0.0) {
            return bad("sigma_u and sigma_eps must be positive");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be nonnegative");
        }
        if let Some(t) = self.target_delta {
            if !(t >= 0.0) {
                return bad("target_delta must be nonnegative");
            }
        }
        match self.scenario {
            Scenario::NoSharedRep { beta_phi } if !(beta_phi >= 0.0) => {
                bad("beta_phi must be nonnegative")
            }
            Scenario::OverlapCube { a } if !(a > 0.0) => bad("cube half-width a must be positive"),
            Scenario::MatchedGaussian { sigma_u } if !(sigma_u > 0.0) => {
                bad("matched sigma_u must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Law of the randomized covariates under this scenario.
    pub fn randomized_law(&self) -> CovariateLaw {
        match self.scenario {
            Scenario::SharedRep | Scenario::NoSharedRep { .. } => {
                CovariateLaw::Gaussian { sd: self.sigma_u }
            }
            Scenario::OverlapCube { a } => CovariateLaw::Cube { a },
            Scenario::MatchedGaussian { sigma_u } => CovariateLaw::Gaussian { sd: sigma_u },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateLaw {
    /// `N(0, sd² I)`
    Gaussian { sd: f64 },
    /// `Uniform([-a, a]^d)`
    Cube { a: f64 },
}

impl CovariateLaw {
    pub fn sample_row(&self, d: usize, rng: &mut Rng) -> Array1<f64> {
        match *self {
            CovariateLaw::Gaussian { sd } => Array1::from_shape_simple_fn(d, || sd * gauss(rng)),
            CovariateLaw::Cube { a } => {
                Array1::from_shape_simple_fn(d, || a * (2.0 * rng.random::<f64>() - 1.0))
            }
        }
    }

    pub fn sample(&self, n: usize, d: usize, rng: &mut Rng) -> Array2<f64> {
        let mut x = Array2::zeros((n, d));
        for mut row in x.rows_mut() {
            row.assign(&self.sample_row(d, rng));
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Observational,
    Randomized,
}

/// The generating model of one simulated replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    phi_star: Representation,
    /// Separate randomized-data representation when the shared-representation
    /// assumption is broken.
    phi_unc: Option<Representation>,
    w_c: [Array1<f64>; 2],
    /// Bias pattern with `‖delta_dir[t]‖₁ = 1`; `δ_t = beta · delta_dir[t]`.
    delta_dir: [Array1<f64>; 2],
    beta: f64,
    noise_sd: f64,
}

impl SyntheticTruth {
    /// Draws `φ*`, the confounded heads and a bias direction; `beta = 0`.
    ///
    /// The last layer of `φ*` is rescaled so that the confounded outcome
    /// surfaces `φ*(X)·w_c[t]`, `X ~ N(0, I)`, have unit variance on average.
    pub fn draw(
        d: usize,
        d_phi: usize,
        hidden: &[usize],
        noise_sd: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut dims = vec![d];
        dims.extend_from_slice(hidden);
        dims.push(d_phi);
        let net = LayerStack::init(&dims, OutputActivation::Identity, rng)?;
        let mut phi_star = Representation::new(net, false)?;
        let w_c = [
            standard_normal_vec(d_phi, rng),
            standard_normal_vec(d_phi, rng),
        ];

        let mc = CovariateLaw::Gaussian { sd: 1.0 }.sample(DELTA_MC_ROWS, d, rng);
        let feats = phi_star.apply(mc.view())?;
        let var = (variance(&feats.dot(&w_c[0])) + variance(&feats.dot(&w_c[1]))) / 2.0;
        if !(var > 0.0) {
            return Err(Error::Numeric(
                "degenerate generating representation".into(),
            ));
        }
        let scale = 1.0 / var.sqrt();
        if let Some(last) = phi_star.net_mut().weights_mut().last_mut() {
            last.mapv_inplace(|v| v * scale);
        }

        let magnitudes = standard_normal_vec(d_phi, rng).mapv(f64::abs);
        let l1 = magnitudes.sum();
        let unit = magnitudes.mapv(|v| v / l1);
        let signs1 = random_signs(d_phi, rng);
        let mut signs0 = random_signs(d_phi, rng);
        // identical sign patterns would cancel in δ_1 − δ_0 and leave no bias to calibrate
        while signs0 == signs1 {
            signs0 = random_signs(d_phi, rng);
        }
        let delta_dir = [&unit * &signs0, &unit * &signs1];

        Ok(SyntheticTruth {
            phi_star,
            phi_unc: None,
            w_c,
            delta_dir,
            beta: 0.0,
            noise_sd,
        })
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        SyntheticTruth {
            beta,
            ..self.clone()
        }
    }

    /// Breaks the shared representation: the randomized representation equals
    /// `φ*` except for its last weight matrix, shifted by `P` with
    /// `‖P‖_{1,∞} = beta_phi`.
    pub fn with_representation_shift(&self, beta_phi: f64, rng: &mut Rng) -> Result<Self> {
        if !(beta_phi >= 0.0) {
            return Err(Error::Config("beta_phi must be nonnegative".into()));
        }
        let last = self.phi_star.net().weights().last().unwrap();
        let raw = Array2::from_shape_simple_fn(last.raw_dim(), || gauss(rng));
        let norm = row_abs_sum_max(&raw);
        let perturbation = raw.mapv(|v| v * beta_phi / norm);
        let mut phi_unc = self.phi_star.clone();
        if let Some(w) = phi_unc.net_mut().weights_mut().last_mut() {
            *w += &perturbation;
        }
        Ok(SyntheticTruth {
            phi_unc: Some(phi_unc),
            ..self.clone()
        })
    }

    pub fn phi_star(&self) -> &Representation {
        &self.phi_star
    }

    pub fn phi_unconfounded(&self) -> &Representation {
        self.phi_unc.as_ref().unwrap_or(&self.phi_star)
    }

    /// Last-layer difference between the randomized and observational representations.
    pub fn representation_perturbation(&self) -> Array2<f64> {
        let base = self.phi_star.net().weights().last().unwrap();
        let other = self.phi_unconfounded().net().weights().last().unwrap();
        other - base
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn d(&self) -> usize {
        self.phi_star.covariate_dim()
    }

    pub fn w_c(&self, arm: u8) -> &Array1<f64> {
        &self.w_c[usize::from(arm)]
    }

    pub fn delta(&self, arm: u8) -> Array1<f64> {
        self.delta_dir[usize::from(arm)].mapv(|v| v * self.beta)
    }

    pub fn w_u(&self, arm: u8) -> Array1<f64> {
        self.w_c(arm) + &self.delta(arm)
    }

    /// True CATE `φ_u(x)·(w_u[1] − w_u[0])`.
    pub fn tau(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let feats = self.phi_unconfounded().apply(x)?;
        Ok(feats.dot(&(self.w_u(1) - self.w_u(0))))
    }

    /// Noise-free outcome surface of a source.
    pub fn mean_outcome(
        &self,
        source: Source,
        x: ArrayView2<f64>,
        t: &[u8],
    ) -> Result<Array1<f64>> {
        crate::error::check_len("mean_outcome treatment", x.nrows(), t.len())?;
        let (feats, heads) = match source {
            Source::Observational => (
                self.phi_star.apply(x)?,
                [self.w_c(0).clone(), self.w_c(1).clone()],
            ),
            Source::Randomized => (
                self.phi_unconfounded().apply(x)?,
                [self.w_u(0), self.w_u(1)],
            ),
        };
        Ok(Array1::from_iter(
            feats
                .rows()
                .into_iter()
                .zip(t)
                .map(|(f, &arm)| f.dot(&heads[usize::from(arm)])),
        ))
    }

    /// Monte-Carlo confounding bias `Δ = mean((φ*(x)(δ_1 − δ_0))²)` over the given rows.
    pub fn bias_delta(&self, x: ArrayView2<f64>) -> Result<f64> {
        let gap = self.delta(1) - self.delta(0);
        let feats = self.phi_star.apply(x)?;
        Ok(feats.dot(&gap).mapv(|v| v * v).mean().unwrap_or(0.0))
    }

    /// Draws one dataset of `n` rows from a source, row by row, so that a
    /// shorter draw from the same stream is a prefix of a longer one.
    pub fn sample(
        &self,
        source: Source,
        law: CovariateLaw,
        n: usize,
        rng: &mut Rng,
    ) -> Result<TreatmentDataset> {
        let d = self.d();
        let mut x = Array2::zeros((n, d));
        let mut t = Vec::with_capacity(n);
        let mut noise = Array1::zeros(n);
        for i in 0..n {
            x.row_mut(i).assign(&law.sample_row(d, rng));
            t.push(u8::from(rng.random::<bool>()));
            noise[i] = self.noise_sd * gauss(rng);
        }
        let y = self.mean_outcome(source, x.view(), &t)? + noise;
        TreatmentDataset::new(x, t, y)
    }
}

/// Finds `beta` such that the Monte-Carlo Δ over `mc_x` is within 5% of
/// `target_delta`, by bisection along the fixed bias direction.
pub fn calibrate_beta(
    truth: &SyntheticTruth,
    target_delta: f64,
    mc_x: ArrayView2<f64>,
) -> Result<f64> {
    if !(target_delta >= 0.0) {
        return Err(Error::Calibration(
            "target delta must be nonnegative".into(),
        ));
    }
    if target_delta == 0.0 {
        return Ok(0.0);
    }
    let feats = truth.phi_star().apply(mc_x)?;
    let gap = &truth.delta_dir[1] - &truth.delta_dir[0];
    let projected = feats.dot(&gap);
    let delta_at = |beta: f64| projected.mapv(|v| (beta * v).powi(2)).mean().unwrap_or(0.0);

    let mut hi = 1.0;
    let mut doublings = 0;
    while delta_at(hi) < target_delta {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(Error::Calibration(
                "bias direction produces no confounding; cannot reach target".into(),
            ));
        }
    }
    let mut lo = 0.0;
    let mut mid = hi;
    for _ in 0..60 {
        mid = 0.5 * (lo + hi);
        let value = delta_at(mid);
        if (value - target_delta).abs() <= 1e-9 * target_delta {
            break;
        }
        if value < target_delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = delta_at(mid);
    if (achieved - target_delta).abs() > 0.05 * target_delta {
        return Err(Error::Calibration(format!(
            "bisection ended at Δ = {achieved}, target {target_delta}"
        )));
    }
    Ok(mid)
}

/// One simulated replication: the paired datasets and their generating model.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub data: CombinedData,
    pub truth: SyntheticTruth,
}

/// Independent random streams for the pieces of one replication.
#[derive(Debug, Clone)]
pub struct Streams {
    pub truth: Rng,
    pub calibration: Rng,
    pub perturbation: Rng,
    pub obs: Rng,
    pub rand: Rng,
}

impl Streams {
    pub fn new(base: u64, keys: &[u64]) -> Self {
        Streams {
            truth: seed::stream(base, keys, "truth"),
            calibration: seed::stream(base, keys, "calibration"),
            perturbation: seed::stream(base, keys, "perturbation"),
            obs: seed::stream(base, keys, "obs"),
            rand: seed::stream(base, keys, "rand"),
        }
    }
}

/// Builds the generating model for `cfg` from the given streams.
pub fn draw_truth(cfg: &DgpConfig, streams: &mut Streams) -> Result<SyntheticTruth> {
    cfg.validate()?;
    let base = SyntheticTruth::draw(
        cfg.d,
        cfg.d_phi,
        &cfg.phi_hidden,
        cfg.sigma_eps,
        &mut streams.truth,
    )?;
    let beta = match cfg.target_delta {
        Some(target) => {
            let mc = CovariateLaw::Gaussian { sd: 1.0 }.sample(
                DELTA_MC_ROWS,
                cfg.d,
                &mut streams.calibration,
            );
            calibrate_beta(&base, target, mc.view())?
        }
        None => cfg.beta,
    };
    let truth = base.with_beta(beta);
    match cfg.scenario {
        Scenario::NoSharedRep { beta_phi } => {
            truth.with_representation_shift(beta_phi, &mut streams.perturbation)
        }
        _ => Ok(truth),
    }
}

/// Draws a full replication for any scenario.
pub fn simulate(cfg: &DgpConfig, streams: &mut Streams) -> Result<Simulation> {
    let truth = draw_truth(cfg, streams)?;
    let obs = truth.sample(
        Source::Observational,
        CovariateLaw::Gaussian { sd: 1.0 },
        cfg.n_conf,
        &mut streams.obs,
    )?;
    let rand = truth.sample(
        Source::Randomized,
        cfg.randomized_law(),
        cfg.n_unc,
        &mut streams.rand,
    )?;
    Ok(Simulation {
        data: CombinedData::new(obs, rand)?,
        truth,
    })
}

fn streams_from(rng: &mut Rng) -> Streams {
    Streams::new(rng.random::<u64>(), &[])
}

fn expect_scenario(cfg: &DgpConfig, ok: bool, want: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "scenario `{}` passed to the {want} sampler",
            cfg.scenario.name()
        )))
    }
}

pub fn sample_shared_rep(cfg: &DgpConfig, rng: &mut Rng) -> Result<(CombinedData, SyntheticTruth)> {
    expect_scenario(
        cfg,
        cfg.scenario == Scenario::SharedRep,
        "shared-representation",
    )?;
    let sim = simulate(cfg, &mut streams_from(rng))?;
    Ok((sim.data, sim.truth))
}

pub fn sample_no_shared_rep(
    cfg: &DgpConfig,
    rng: &mut Rng,
) -> Result<(CombinedData, SyntheticTruth)> {
    expect_scenario(
        cfg,
        matches!(cfg.scenario, Scenario::NoSharedRep { .. }),
        "no-shared-representation",
    )?;
    let sim = simulate(cfg, &mut streams_from(rng))?;
    Ok((sim.data, sim.truth))
}

pub fn sample_overlap_cube(
    cfg: &DgpConfig,
    rng: &mut Rng,
) -> Result<(CombinedData, SyntheticTruth)> {
    expect_scenario(
        cfg,
        matches!(cfg.scenario, Scenario::OverlapCube { .. }),
        "overlap-cube",
    )?;
    let sim = simulate(cfg, &mut streams_from(rng))?;
    Ok((sim.data, sim.truth))
}

/// Standard-normal test covariates (the observational law) with their true CATE.
pub fn test_set(
    truth: &SyntheticTruth,
    n: usize,
    rng: &mut Rng,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let x = CovariateLaw::Gaussian { sd: 1.0 }.sample(n, truth.d(), rng);
    let tau = truth.tau(x.view())?;
    Ok((x, tau))
}

fn gauss(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn standard_normal_vec(n: usize, rng: &mut Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || gauss(rng))
}

fn random_signs(n: usize, rng: &mut Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn variance(v: &Array1<f64>) -> f64 {
    v.var(0.0)
}

#[cfg(test)]
mod tests;
