//! The two-step estimator: a representation and confounded heads learned on
//! observational data, then sparse per-arm bias corrections learned on
//! randomized data.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Beta, Distribution};

use crate::data::{CombinedData, TreatmentDataset};
use crate::error::{Error, Result};
use crate::lasso::{lasso_cd, LassoProblem, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::net::{LayerStack, Representation};
use crate::seed::Rng;
use crate::train::{fit_two_head, Adversarial, NetConfig, Sample, TrainingLog, TwoHeadModel};

pub const DEFAULT_MIXUP_ALPHA: f64 = 0.2;

/// `φ(x)·(w_c[1] + δ_1 − w_c[0] − δ_0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CornetModel {
    pub phi: Representation,
    pub w_c: [Array1<f64>; 2],
    pub delta: [Array1<f64>; 2],
    pub lambda_d: f64,
    pub lambda_delta: f64,
}

impl CornetModel {
    pub fn w_u(&self, arm: u8) -> Array1<f64> {
        let t = usize::from(arm);
        &self.w_c[t] + &self.delta[t]
    }

    fn effect_head(&self) -> Array1<f64> {
        self.w_u(1) - self.w_u(0)
    }

    pub fn predict_cate(&self, x: ArrayView1<f64>) -> Result<f64> {
        Ok(self.phi.apply_one(x)?.dot(&self.effect_head()))
    }

    pub fn predict_cate_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.phi.apply(x)?.dot(&self.effect_head()))
    }

    /// The observational-only estimate sharing this model's first step.
    pub fn confounded(&self) -> TwoHeadModel {
        TwoHeadModel {
            phi: self.phi.clone(),
            heads: self.w_c.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step1Config {
    pub lambda_d: f64,
    pub mixup_alpha: f64,
    /// Interpolated samples per epoch; `None` means one per observational row.
    pub m: Option<usize>,
    pub net: NetConfig,
    pub adversary_hidden: Vec<usize>,
}

impl Default for Step1Config {
    fn default() -> Self {
        Step1Config {
            lambda_d: 0.0,
            mixup_alpha: DEFAULT_MIXUP_ALPHA,
            m: None,
            net: NetConfig::default(),
            adversary_hidden: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step2Config {
    /// `None` selects [`default_lambda_delta`].
    pub lambda_delta: Option<f64>,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for Step2Config {
    fn default() -> Self {
        Step2Config {
            lambda_delta: None,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step1Fit {
    pub phi: Representation,
    pub w_c: [Array1<f64>; 2],
    pub adversary: Option<LayerStack>,
    pub log: TrainingLog,
}

impl Step1Fit {
    pub fn as_two_head(&self) -> TwoHeadModel {
        TwoHeadModel {
            phi: self.phi.clone(),
            heads: self.w_c.clone(),
        }
    }
}

/// Rows `μ·x_unc[j] + (1 − μ)·x_conf[i]`, `μ ~ Beta(α, α)`, cycling `i`
/// through the observational rows and drawing `j` uniformly.
pub fn mixup_augment(
    x_unc: ArrayView2<f64>,
    x_conf: ArrayView2<f64>,
    alpha: f64,
    m: usize,
    rng: &mut Rng,
) -> Result<Array2<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Augmentation(format!(
            "mixup alpha must be positive, got {alpha}"
        )));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Augmentation(e.to_string()))?;
    mixup_with(x_unc, x_conf, m, rng, |r| beta.sample(r))
}

/// [`mixup_augment`] with a caller-supplied draw of the mixing weight.
pub fn mixup_with(
    x_unc: ArrayView2<f64>,
    x_conf: ArrayView2<f64>,
    m: usize,
    rng: &mut Rng,
    mut draw_mu: impl FnMut(&mut Rng) -> f64,
) -> Result<Array2<f64>> {
    if x_unc.nrows() == 0 || x_conf.nrows() == 0 {
        return Err(Error::Augmentation("mixup needs nonempty inputs".into()));
    }
    if m == 0 {
        return Err(Error::Augmentation("mixup needs m ≥ 1".into()));
    }
    crate::error::check_len("mixup covariate dimension", x_conf.ncols(), x_unc.ncols())?;
    let mut out = Array2::zeros((m, x_conf.ncols()));
    for (k, mut row) in out.rows_mut().into_iter().enumerate() {
        let conf = x_conf.row(k % x_conf.nrows());
        let unc = x_unc.row(rng.random_range(0..x_unc.nrows()));
        let mu = draw_mu(rng);
        row.assign(&(&unc * mu + &conf * (1.0 - mu)));
    }
    Ok(out)
}

/// Trains `φ` and the confounded heads on observational data. With
/// `lambda_d > 0` an adversary separates interpolated from observational
/// representations and `φ` receives its reversed gradients.
pub fn fit_step1(data: &CombinedData, cfg: &Step1Config, rng: &mut Rng) -> Result<Step1Fit> {
    data.obs.require_both_arms(2, "observational data")?;
    if !(cfg.mixup_alpha > 0.0) {
        return Err(Error::Config("mixup_alpha must be positive".into()));
    }
    if cfg.m == Some(0) {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let sample = Sample::plain(data.obs.x(), data.obs.t(), data.obs.y());
    let m = cfg.m.unwrap_or(data.obs.n());
    let (x_unc, x_conf, alpha) = (data.rand.x(), data.obs.x(), cfg.mixup_alpha);
    let adversarial = (cfg.lambda_d > 0.0).then(|| Adversarial {
        lambda_d: cfg.lambda_d,
        interpolate: Box::new(move |r: &mut Rng| mixup_augment(x_unc, x_conf, alpha, m, r)),
        adversary_hidden: cfg.adversary_hidden.clone(),
    });
    if !(cfg.lambda_d >= 0.0) {
        return Err(Error::Config("lambda_d must be nonnegative".into()));
    }
    let fit = fit_two_head(&sample, &cfg.net, adversarial, rng)?;
    Ok(Step1Fit {
        phi: fit.model.phi,
        w_c: fit.model.heads,
        adversary: fit.adversary,
        log: fit.log,
    })
}

/// `√((1/d_φ)·ln d_φ / ln n_unc)`.
pub fn default_lambda_delta(d_phi: usize, n_unc: usize) -> Result<f64> {
    if d_phi < 2 || n_unc < 3 {
        return Err(Error::Domain(format!(
            "default lambda_delta needs d_phi ≥ 2 and n_unc ≥ 3, got {d_phi} and {n_unc}"
        )));
    }
    let (d, n) = (d_phi as f64, n_unc as f64);
    Ok((d.ln() / (d * n.ln())).sqrt())
}

/// Resolves the two penalties: `λ_δ` defaults to [`default_lambda_delta`] and
/// `λ_d` defaults to the resolved `λ_δ`.
pub fn resolve_lambdas(
    lambda_d: Option<f64>,
    lambda_delta: Option<f64>,
    d_phi: usize,
    n_unc: usize,
) -> Result<(f64, f64)> {
    let delta = match lambda_delta {
        Some(v) => v,
        None => default_lambda_delta(d_phi, n_unc)?,
    };
    Ok((lambda_d.unwrap_or(delta), delta))
}

/// Per-arm residual Lasso. The joint objective
/// `(1/n)Σᵢ(φ(xᵢ)·(w_c[tᵢ] + δ_tᵢ) − yᵢ)² + λ‖δ‖₁` separates over arms into
/// problems with `1/n_t` scaling and penalty `λ·n/n_t`.
pub fn fit_step2(
    phi: &Representation,
    w_c: &[Array1<f64>; 2],
    rand: &TreatmentDataset,
    cfg: &Step2Config,
) -> Result<[Array1<f64>; 2]> {
    let lambda = step2_lambda(phi, rand, cfg)?;
    let n = rand.n() as f64;
    let z = phi.apply(rand.x())?;
    let mut delta = [Array1::zeros(0), Array1::zeros(0)];
    for arm in [1u8, 0u8] {
        let rows = rand.arm_rows(arm);
        if rows.is_empty() {
            return Err(Error::Fit(format!(
                "randomized data has no samples in arm t={arm}"
            )));
        }
        let zt = z.select(Axis(0), &rows);
        let resid = rand.y().select(Axis(0), &rows) - zt.dot(&w_c[usize::from(arm)]);
        let problem = LassoProblem {
            z: zt.view(),
            y: resid.view(),
            lambda: lambda * n / rows.len() as f64,
        };
        let sol = lasso_cd(&problem, cfg.tol, cfg.max_sweeps)?;
        if !sol.converged {
            log::warn!(
                "step-2 lasso for arm {arm} stopped after {} sweeps",
                sol.iterations
            );
        }
        delta[usize::from(arm)] = sol.coef;
    }
    Ok(delta)
}

/// Step 2 solved as one Lasso over the block design `[1{t=0}φ, 1{t=1}φ]`.
pub fn fit_step2_joint(
    phi: &Representation,
    w_c: &[Array1<f64>; 2],
    rand: &TreatmentDataset,
    cfg: &Step2Config,
) -> Result<[Array1<f64>; 2]> {
    let lambda = step2_lambda(phi, rand, cfg)?;
    rand.require_both_arms(1, "randomized data")?;
    let z = phi.apply(rand.x())?;
    let p = z.ncols();
    let mut design = Array2::zeros((rand.n(), 2 * p));
    let mut resid = rand.y().to_owned();
    for (i, &arm) in rand.t().iter().enumerate() {
        let off = usize::from(arm) * p;
        design
            .row_mut(i)
            .slice_mut(ndarray::s![off..off + p])
            .assign(&z.row(i));
        resid[i] -= z.row(i).dot(&w_c[usize::from(arm)]);
    }
    let problem = LassoProblem {
        z: design.view(),
        y: resid.view(),
        lambda,
    };
    let coef = lasso_cd(&problem, cfg.tol, cfg.max_sweeps)?.coef;
    Ok([
        coef.slice(ndarray::s![..p]).to_owned(),
        coef.slice(ndarray::s![p..]).to_owned(),
    ])
}

/// The joint step-2 objective at a given `δ`.
pub fn step2_objective(
    phi: &Representation,
    w_c: &[Array1<f64>; 2],
    delta: &[Array1<f64>; 2],
    rand: &TreatmentDataset,
    lambda: f64,
) -> Result<f64> {
    let z = phi.apply(rand.x())?;
    let sq: f64 = rand
        .t()
        .iter()
        .enumerate()
        .map(|(i, &arm)| {
            let t = usize::from(arm);
            (z.row(i).dot(&(&w_c[t] + &delta[t])) - rand.y()[i]).powi(2)
        })
        .sum();
    let l1: f64 = delta.iter().map(|d| d.mapv(f64::abs).sum()).sum();
    Ok(sq / rand.n() as f64 + lambda * l1)
}

fn step2_lambda(phi: &Representation, rand: &TreatmentDataset, cfg: &Step2Config) -> Result<f64> {
    let lambda = match cfg.lambda_delta {
        Some(v) => v,
        None => default_lambda_delta(phi.output_dim(), rand.n())?,
    };
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!(
            "lambda_delta must be nonnegative, got {lambda}"
        )));
    }
    Ok(lambda)
}

/// Full two-step fit.
pub fn fit_cornet(
    data: &CombinedData,
    step1: &Step1Config,
    step2: &Step2Config,
    rng: &mut Rng,
) -> Result<(CornetModel, TrainingLog)> {
    let s1 = fit_step1(data, step1, rng)?;
    let model = complete_cornet(&s1, &data.rand, step1.lambda_d, step2)?;
    Ok((model, s1.log))
}

/// Runs step 2 on top of an existing step-1 fit.
pub fn complete_cornet(
    s1: &Step1Fit,
    rand: &TreatmentDataset,
    lambda_d: f64,
    step2: &Step2Config,
) -> Result<CornetModel> {
    let lambda_delta = step2_lambda(&s1.phi, rand, step2)?;
    let delta = fit_step2(&s1.phi, &s1.w_c, rand, step2)?;
    Ok(CornetModel {
        phi: s1.phi.clone(),
        w_c: s1.w_c.clone(),
        delta,
        lambda_d,
        lambda_delta,
    })
}
