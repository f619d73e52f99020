//! Comparison estimators: randomized-only, observational-only, averaging,
//! weighted risk, and the two-step re-weighting family with ridge and
//! network bases.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::{CombinedData, TreatmentDataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::net::augment;
use crate::seed::Rng;
pub use crate::train::TwoHeadModel;
use crate::train::{fit_two_head, NetConfig, Sample, TrainingLog};

/// Propensity estimates are clipped into this interval.
pub const PROPENSITY_CLIP: (f64, f64) = (0.01, 0.99);

pub fn fit_tau_unc(
    rand: &TreatmentDataset,
    cfg: &NetConfig,
    rng: &mut Rng,
) -> Result<TwoHeadModel> {
    rand.require_both_arms(2, "randomized data")?;
    let sample = Sample::plain(rand.x(), rand.t(), rand.y());
    Ok(fit_two_head(&sample, cfg, None, rng)?.model)
}

pub fn fit_tau_conf(
    obs: &TreatmentDataset,
    cfg: &NetConfig,
    rng: &mut Rng,
) -> Result<TwoHeadModel> {
    obs.require_both_arms(2, "observational data")?;
    let sample = Sample::plain(obs.x(), obs.t(), obs.y());
    Ok(fit_two_head(&sample, cfg, None, rng)?.model)
}

/// `(1 − λ)·τ̂_unc + λ·τ̂_conf`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauAvg {
    pub unc: TwoHeadModel,
    pub conf: TwoHeadModel,
    pub lambda: f64,
}

impl TauAvg {
    pub fn predict_cate(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let a = self.unc.predict_cate(x)?;
        let b = self.conf.predict_cate(x)?;
        // the endpoints return one model unchanged
        Ok(if self.lambda == 0.0 {
            a
        } else if self.lambda == 1.0 {
            b
        } else {
            a * (1.0 - self.lambda) + b * self.lambda
        })
    }
}

pub fn make_tau_avg(m_unc: TwoHeadModel, m_conf: TwoHeadModel, lam: f64) -> Result<TauAvg> {
    if !(0.0..=1.0).contains(&lam) {
        return Err(Error::Domain(format!(
            "averaging weight {lam} outside [0, 1]"
        )));
    }
    Ok(TauAvg {
        unc: m_unc,
        conf: m_conf,
        lambda: lam,
    })
}

/// Observational and randomized rows stacked, with randomized rows weighted
/// by `Λ` and the risk normalized by `Λ·n_unc + n_conf`.
#[derive(Debug, Clone)]
pub struct PooledData {
    pub x: Array2<f64>,
    pub t: Vec<u8>,
    pub y: Array1<f64>,
    pub weights: Vec<f64>,
    pub normalizer: f64,
    pub big_lambda: f64,
    pub n_conf: usize,
    pub n_unc: usize,
}

impl PooledData {
    pub fn new(data: &CombinedData, big_lambda: f64) -> Result<Self> {
        if !(big_lambda >= 0.0) || !big_lambda.is_finite() {
            return Err(Error::Domain(format!(
                "Λ must be finite and nonnegative, got {big_lambda}"
            )));
        }
        let x = ndarray::concatenate(Axis(0), &[data.obs.x(), data.rand.x()])
            .map_err(|e| Error::Numeric(e.to_string()))?;
        let t: Vec<u8> = data.obs.t().iter().chain(data.rand.t()).copied().collect();
        let y = ndarray::concatenate(Axis(0), &[data.obs.y(), data.rand.y()])
            .map_err(|e| Error::Numeric(e.to_string()))?;
        let weights: Vec<f64> = std::iter::repeat_n(1.0, data.obs.n())
            .chain(std::iter::repeat_n(big_lambda, data.rand.n()))
            .collect();
        let normalizer = big_lambda * data.rand.n() as f64 + data.obs.n() as f64;
        Ok(PooledData {
            x,
            t,
            y,
            weights,
            normalizer,
            big_lambda,
            n_conf: data.obs.n(),
            n_unc: data.rand.n(),
        })
    }

    pub fn sample(&self) -> Sample<'_> {
        Sample {
            x: self.x.view(),
            t: &self.t,
            y: self.y.view(),
            weights: Some(self.weights.clone()),
            normalizer: self.normalizer,
        }
    }

    /// Observational share of the risk, `n_conf / (Λ·n_unc + n_conf)`.
    pub fn effective_lambda(&self) -> f64 {
        effective_lambda(self.n_conf, self.n_unc, self.big_lambda)
    }
}

/// The weighted empirical risk of a fixed model.
pub fn weighted_objective(
    model: &TwoHeadModel,
    data: &CombinedData,
    big_lambda: f64,
) -> Result<f64> {
    let pooled = PooledData::new(data, big_lambda)?;
    model.weighted_loss(&pooled.sample())
}

pub fn effective_lambda(n_conf: usize, n_unc: usize, big_lambda: f64) -> f64 {
    n_conf as f64 / (big_lambda * n_unc as f64 + n_conf as f64)
}

pub fn fit_tau_weight(
    data: &CombinedData,
    big_lambda: f64,
    cfg: &NetConfig,
    rng: &mut Rng,
) -> Result<(TwoHeadModel, TrainingLog)> {
    let pooled = PooledData::new(data, big_lambda)?;
    let mut fit = fit_two_head(&pooled.sample(), cfg, None, rng)?;
    fit.log.effective_lambda = Some(pooled.effective_lambda());
    Ok((fit.model, fit.log))
}

/// Solves `(ZᵀZ + lam·I)β = Zᵀy`.
pub fn ridge_fit(z: ArrayView2<f64>, y: ArrayView1<f64>, lam: f64) -> Result<Array1<f64>> {
    crate::error::check_len("ridge response", z.nrows(), y.len())?;
    if !(lam >= 0.0) {
        return Err(Error::Domain(format!(
            "ridge penalty must be nonnegative, got {lam}"
        )));
    }
    let mut gram = z.t().dot(&z);
    gram.diag_mut().mapv_inplace(|v| v + lam);
    linalg::cholesky_solve(gram.view(), z.t().dot(&y).view()).map_err(|e| match e {
        Error::Numeric(_) if lam == 0.0 => {
            Error::Numeric("ridge system is singular at lam = 0; use lam > 0".into())
        }
        other => other,
    })
}

/// Default ridge penalty `1e-2 · trace(ZᵀZ) / p`.
pub fn default_ridge_penalty(z: ArrayView2<f64>) -> f64 {
    1e-2 * z.iter().map(|v| v * v).sum::<f64>() / z.ncols().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub max_iter: usize,
    /// Stop when the gradient norm of the mean log-likelihood falls below this.
    pub grad_tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            max_iter: 100,
            grad_tol: 1e-6,
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn mean_log_likelihood(z: ArrayView2<f64>, labels: &[u8], beta: &Array1<f64>) -> f64 {
    let eta = z.dot(beta);
    let total: f64 = eta
        .iter()
        .zip(labels)
        .map(|(&e, &l)| {
            // log σ(e) = −log(1 + e^{−e}), computed stably
            let log1pexp = |v: f64| {
                if v > 0.0 {
                    v + (-v).exp().ln_1p()
                } else {
                    v.exp().ln_1p()
                }
            };
            if l == 1 {
                -log1pexp(-e)
            } else {
                -log1pexp(e)
            }
        })
        .sum();
    total / labels.len() as f64
}

/// Maximizes the Bernoulli log-likelihood of `labels` given `z` by damped
/// Newton steps. The caller supplies any intercept column.
pub fn logistic_fit(
    z: ArrayView2<f64>,
    labels: &[u8],
    cfg: &LogisticConfig,
) -> Result<Array1<f64>> {
    crate::error::check_len("logistic labels", z.nrows(), labels.len())?;
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Domain("logistic labels must be 0 or 1".into()));
    }
    let n = z.nrows() as f64;
    let p = z.ncols();
    let mut beta = Array1::<f64>::zeros(p);
    let mut ll = mean_log_likelihood(z, labels, &beta);
    for _ in 0..cfg.max_iter {
        let probs = z.dot(&beta).mapv(sigmoid);
        let resid = Array1::from_iter(
            labels
                .iter()
                .zip(probs.iter())
                .map(|(&l, &q)| f64::from(l) - q),
        );
        let grad = z.t().dot(&resid) / n;
        if grad.dot(&grad).sqrt() < cfg.grad_tol {
            return Ok(beta);
        }
        let w = probs.mapv(|q| q * (1.0 - q));
        let zw = &z * &w.insert_axis(Axis(1));
        let mut hess = z.t().dot(&zw) / n;
        hess.diag_mut().mapv_inplace(|v| v + 1e-10);
        let step = linalg::cholesky_solve(hess.view(), grad.view())?;
        let mut scale = 1.0;
        loop {
            let cand = &beta + &(&step * scale);
            let cand_ll = mean_log_likelihood(z, labels, &cand);
            if cand_ll >= ll || scale < 1e-8 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
        }
    }
    log::warn!(
        "logistic fit stopped after {} Newton steps without reaching the gradient tolerance",
        cfg.max_iter
    );
    Ok(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KallusBase {
    Ridge,
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KallusTarget {
    Cate,
    Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propensity {
    Known(f64),
    Logistic,
}

/// Observational outcome model `f(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeBase {
    /// Per-arm ridge coefficients on `[x, 1]`.
    Ridge([Array1<f64>; 2]),
    Nn(TwoHeadModel),
}

impl OutcomeBase {
    pub fn fit_ridge(obs: &TreatmentDataset) -> Result<Self> {
        obs.require_both_arms(2, "observational data")?;
        let fit = |arm: u8| {
            let (x, y) = obs.arm(arm);
            let z = augment(x.view());
            ridge_fit(z.view(), y.view(), default_ridge_penalty(z.view()))
        };
        Ok(OutcomeBase::Ridge([fit(0)?, fit(1)?]))
    }

    pub fn predict(&self, x: ArrayView2<f64>, arm: u8) -> Result<Array1<f64>> {
        match self {
            OutcomeBase::Ridge(coef) => {
                crate::error::check_len("ridge base input", coef[0].len() - 1, x.ncols())?;
                Ok(augment(x).dot(&coef[usize::from(arm)]))
            }
            OutcomeBase::Nn(model) => model.predict_outcome(x, arm),
        }
    }

    pub fn predict_cate(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict(x, 1)? - self.predict(x, 0)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KallusTheta {
    Cate(Array1<f64>),
    /// `θ_t` per arm, indexed by `t`.
    Outcome([Array1<f64>; 2]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KallusModel {
    pub base: KallusBase,
    pub target: KallusTarget,
    pub propensity: Propensity,
    pub f: OutcomeBase,
    pub theta: KallusTheta,
}

impl KallusModel {
    /// CATE target: `f(x,1) − f(x,0) + θᵀx`. Outcome target:
    /// `(f(x,1) + θ_1ᵀx) − (f(x,0) + θ_0ᵀx)`.
    pub fn predict_cate(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let base = self.f.predict_cate(x)?;
        match &self.theta {
            KallusTheta::Cate(theta) => Ok(base + x.dot(theta)),
            KallusTheta::Outcome(theta) => Ok(base + x.dot(&theta[1]) - x.dot(&theta[0])),
        }
    }
}

/// Signed re-weighting `t/e − (1 − t)/(1 − e)`.
pub fn signed_weight(t: u8, e: f64) -> f64 {
    if t == 1 {
        1.0 / e
    } else {
        -1.0 / (1.0 - e)
    }
}

/// Propensities of the randomized rows, clipped into [`PROPENSITY_CLIP`].
pub fn randomized_propensity(
    rand: &TreatmentDataset,
    propensity: Propensity,
) -> Result<Array1<f64>> {
    let raw = match propensity {
        Propensity::Known(e) => {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Domain(format!(
                    "known propensity {e} outside (0, 1)"
                )));
            }
            Array1::from_elem(rand.n(), e)
        }
        Propensity::Logistic => {
            let z = augment(rand.x());
            let beta = logistic_fit(z.view(), rand.t(), &LogisticConfig::default())?;
            z.dot(&beta).mapv(sigmoid)
        }
    };
    let (lo, hi) = PROPENSITY_CLIP;
    let clipped = raw.iter().filter(|&&e| e < lo || e > hi).count();
    if clipped > 0 {
        log::warn!("clipped {clipped} propensity estimates into [{lo}, {hi}]");
    }
    Ok(raw.mapv(|e| e.clamp(lo, hi)))
}

fn regress(x: ArrayView2<f64>, target: ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.nrows() < x.ncols() {
        log::info!(
            "{} randomized rows for {} covariates; using the minimum-norm solution",
            x.nrows(),
            x.ncols()
        );
        return linalg::min_norm_least_squares(x, target);
    }
    linalg::least_squares(x, target).or_else(|_| linalg::min_norm_least_squares(x, target))
}

/// Second step on the randomized rows given a fitted observational base.
pub fn fit_kallus_with_base(
    data: &CombinedData,
    base_kind: KallusBase,
    f: OutcomeBase,
    target: KallusTarget,
    propensity: Propensity,
) -> Result<KallusModel> {
    let rand = &data.rand;
    rand.require_both_arms(1, "randomized data")?;
    let theta = match target {
        KallusTarget::Cate => {
            let e = randomized_propensity(rand, propensity)?;
            let f_tau = f.predict_cate(rand.x())?;
            let pseudo = Array1::from_iter(
                (0..rand.n()).map(|i| signed_weight(rand.t()[i], e[i]) * rand.y()[i] - f_tau[i]),
            );
            KallusTheta::Cate(regress(rand.x(), pseudo.view())?)
        }
        KallusTarget::Outcome => {
            let mut theta = [Array1::zeros(0), Array1::zeros(0)];
            for arm in [0u8, 1u8] {
                let (x, y) = rand.arm(arm);
                let resid = &y - &f.predict(x.view(), arm)?;
                theta[usize::from(arm)] = regress(x.view(), resid.view())?;
            }
            KallusTheta::Outcome(theta)
        }
    };
    Ok(KallusModel {
        base: base_kind,
        target,
        propensity,
        f,
        theta,
    })
}

pub fn fit_kallus(
    data: &CombinedData,
    base: KallusBase,
    target: KallusTarget,
    propensity: Propensity,
    cfg: &NetConfig,
    rng: &mut Rng,
) -> Result<KallusModel> {
    let f = match base {
        KallusBase::Ridge => OutcomeBase::fit_ridge(&data.obs)?,
        KallusBase::Nn => OutcomeBase::Nn(fit_tau_conf(&data.obs, cfg, rng)?),
    };
    fit_kallus_with_base(data, base, f, target, propensity)
}
